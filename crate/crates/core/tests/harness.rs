use diq_core::harness::{
    compare_selection, generate_synthetic, oracle_influence, second_order_term, train_sgd,
    CompareConfig, NoiseProfile, Schedule, SyntheticSpec, Task,
};
use diq_core::influence::{Checkpoint, Example, ModelKind, ParameterVector, ReferenceModel};
use diq_core::Workers;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn examples(ds: &diq_core::Dataset) -> Vec<Example> {
    ds.iter().map(|s| Example::from_sample(s).unwrap()).collect()
}

#[test]
fn convex_training_descends_per_epoch() {
    for (task, kind) in [
        (Task::Regression, ModelKind::Linear),
        (Task::BinaryClassification, ModelKind::Logistic),
    ] {
        let mut descending = 0;
        let seeds = 40;
        for seed in 0..seeds {
            let spec = SyntheticSpec {
                task,
                seed,
                ..SyntheticSpec::default()
            };
            let data = generate_synthetic(&spec).unwrap();
            let model = ReferenceModel::new(kind, spec.input_dim());
            let init = model.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
            let run = train_sgd(&model, &examples(&data.train), init, &Schedule::default_for(kind), 3, seed).unwrap();
            if run.epoch_losses.windows(2).all(|w| w[1] <= w[0]) {
                descending += 1;
            }
        }
        assert!(
            descending * 100 >= seeds * 95,
            "{kind}: {descending}/{seeds} seeds descend"
        );
    }
}

#[test]
fn equal_quantiles_fill_classes_evenly() {
    let spec = SyntheticSpec {
        n_train: 100,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let mut counts = [0; 5];
    for d in data.difficulty.values() {
        counts[usize::from(d.overall()) - 1] += 1;
    }
    assert_eq!(counts, [20; 5]);
    // Harder samples never get a lower class than easier ones.
    let ids: Vec<&str> = data.train.ids().collect();
    for i in 0..ids.len() {
        for j in 0..ids.len() {
            if data.hardness[i] < data.hardness[j] {
                assert!(data.difficulty[ids[i]].overall() <= data.difficulty[ids[j]].overall());
            }
        }
    }
}

#[test]
fn flat_profile_lands_in_lowest_class() {
    let spec = SyntheticSpec {
        n_train: 50,
        noise_profile: NoiseProfile::Constant { scale: 0.0 },
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    assert!(data.difficulty.values().all(|d| d.overall() == 1));
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let spec = SyntheticSpec {
        n_train: 64,
        n_val: 8,
        n_test: 8,
        seed: 17,
        ..SyntheticSpec::default()
    };
    assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    let other = SyntheticSpec { seed: 18, ..spec.clone() };
    assert_ne!(generate_synthetic(&spec).unwrap().train, generate_synthetic(&other).unwrap().train);
    assert!(generate_synthetic(&SyntheticSpec { n_train: 5, ..spec }).is_err());
}

#[test]
fn network_oracle_residual_is_second_order() {
    let model = ReferenceModel::new(ModelKind::Mlp { hidden: 4 }, 3);
    let params: Vec<f64> = (0..21).map(|i| (i as f64 * 0.7).sin()).collect();
    let cp = Checkpoint::new(ParameterVector::new(params).unwrap(), 0.1, 1).unwrap();
    let z = Example::new(vec![0.3, -1.2, 0.8], 0.5);
    let val = [Example::new(vec![-0.4, 0.9, 1.1], -0.2)];
    let residual = |eta: f64| {
        oracle_influence(&model, &cp, &z, &val, eta).unwrap()
            - diq_core::harness::first_order_estimate(&model, &cp, &z, &val, eta).unwrap()
    };
    let ratio = residual(4e-3) / residual(2e-3);
    assert!((3.5..=4.6).contains(&ratio), "{ratio}");
    assert!(second_order_term(&model, &cp, &z, &val, 0.1).is_none());
}

#[test]
fn comparison_report_shape() {
    let config = CompareConfig {
        spec: SyntheticSpec {
            n_train: 150,
            n_val: 30,
            n_test: 60,
            ..SyntheticSpec::default()
        },
        ratios: vec![0.2, 1.0],
        seeds: vec![5, 6, 7],
        workers: Workers::new(3),
        ..CompareConfig::default()
    };
    let report = compare_selection(&config).unwrap();
    assert_eq!(report.records.len(), 2 * 2 * 3);
    let full = report.summary(1.0).unwrap();
    assert!(full.paired_differences.iter().all(|&d| d == 0.0));
    assert_eq!(full.win_rate, 0.0);
    let mut buf = Vec::new();
    report.write_jsonl(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 12 + 2);

    let sequential = compare_selection(&CompareConfig {
        workers: Workers::SEQUENTIAL,
        ..config
    })
    .unwrap();
    assert_eq!(sequential, report);
}
