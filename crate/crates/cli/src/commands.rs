use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use diq_core::data::{load_difficulty, write_dataset, write_difficulty, write_score_rows};
use diq_core::flops::{estimate, ModelShape};
use diq_core::harness::{
    compare_selection, generate_synthetic, train_sgd, CompareConfig, Schedule, SyntheticSpec,
    Task,
};
use diq_core::influence::{
    load_checkpoints, sample_validation, save_checkpoints, score_dataset_influence, Example,
    ReferenceModel,
};
use diq_core::numeric::derive_seed;
use diq_core::{load_dataset, load_scores, select as run_select, Dataset, SelectionConfig, Workers};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::{
    FlopsArgs, InfluenceArgs, SelectArgs, SimulateArgs, SynthArgs, TaskArg, TrainArgs,
    ValidateArgs,
};

// Fixed fan-out of the single --seed flag.
const STREAM_SYNTH: u64 = 1;
const STREAM_TRAIN_INIT: u64 = 2;
const STREAM_TRAIN_ORDER: u64 = 3;
const STREAM_VALIDATION: u64 = 4;

type Result<T = ()> = std::result::Result<T, CliError>;

fn task(arg: TaskArg) -> Task {
    match arg {
        TaskArg::Regression => Task::Regression,
        TaskArg::Classification => Task::BinaryClassification,
    }
}

fn workers(n: Option<usize>) -> Workers {
    n.map_or_else(Workers::available, Workers::new)
}

/// Creates `path` and hands a buffered writer to `body`.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result {
    let file = File::create(path).map_err(|e| CliError::io(e.to_string()).context(path.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| CliError::io(e.to_string()).context(path.display()))
}

fn input_dim(dataset: &Dataset) -> Result<usize> {
    let first = dataset
        .iter()
        .next()
        .ok_or_else(|| CliError::validation("dataset is empty"))?;
    Ok(Example::from_sample(first)?.features.len())
}

pub fn synth(a: SynthArgs) -> Result {
    let spec = SyntheticSpec {
        task: task(a.task),
        n_train: a.n_train,
        n_val: a.n_val,
        n_test: a.n_test,
        seed: derive_seed(a.seed, STREAM_SYNTH),
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::io(e.to_string()).context(a.out_dir.display()))?;
    write_dataset(a.out_dir.join("train.jsonl"), data.train.samples())?;
    write_difficulty(a.out_dir.join("difficulty.jsonl"), &data.difficulty)?;
    write_dataset(a.out_dir.join("validation.jsonl"), data.validation.samples())?;
    write_dataset(a.out_dir.join("test.jsonl"), data.test.samples())?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result {
    let dataset = load_dataset(&a.dataset)?;
    let model = ReferenceModel::new(a.model, input_dim(&dataset)?);
    let examples: Vec<Example> = dataset
        .iter()
        .map(Example::from_sample)
        .collect::<std::result::Result<_, _>>()?;
    let schedule = match (a.learning_rate, a.constant) {
        (None, false) => Schedule::default_for(a.model),
        (Some(peak), false) => Schedule::Cosine { peak, floor: 0.0 },
        (rate, true) => Schedule::Constant {
            rate: rate.unwrap_or(0.01),
        },
    };
    let init = model.init_params(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        a.seed,
        STREAM_TRAIN_INIT,
    )));
    let run = train_sgd(
        &model,
        &examples,
        init,
        &schedule,
        a.epochs,
        derive_seed(a.seed, STREAM_TRAIN_ORDER),
    )?;
    save_checkpoints(&a.out, &run.checkpoints)?;
    Ok(())
}

pub fn influence(a: InfluenceArgs) -> Result {
    let dataset = load_dataset(&a.dataset)?;
    let pools = a
        .val
        .iter()
        .map(load_dataset)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let checkpoints = load_checkpoints(&a.checkpoints)?;
    let difficulty = a.difficulty.as_ref().map(load_difficulty).transpose()?;
    let model = ReferenceModel::new(a.model, input_dim(&dataset)?);

    let draw = sample_validation(&pools, a.k, derive_seed(a.seed, STREAM_VALIDATION))?;
    for &p in &draw.capped_pools {
        eprintln!(
            "warning: {} has {} samples, fewer than k = {}; using the whole pool",
            a.val[p].display(),
            pools[p].len(),
            a.k
        );
    }
    let scores = score_dataset_influence(&model, &checkpoints, &dataset, &draw.set, workers(a.workers))?;

    let mut rows = Vec::with_capacity(scores.len());
    for (id, &inf) in &scores {
        let d = match &difficulty {
            None => None,
            Some(map) => Some(*map.get(id).ok_or_else(|| {
                CliError::validation(format!("difficulty file has no row for {id:?}"))
            })?),
        };
        rows.push((id.as_str(), d, inf));
    }
    write_file(&a.out, |w| write_score_rows(w, rows))
}

pub fn select(a: SelectArgs) -> Result {
    let config = SelectionConfig::new(a.tau, a.ratio, a.dimension)?;
    let dataset = load_dataset(&a.dataset)?;
    let table = load_scores(&a.scores)?;
    let manifest = run_select(&dataset, &table, &config)?;
    if let Some(w) = &manifest.metadata.warning {
        eprintln!("warning: {w}");
    }
    write_file(&a.out, |w| manifest.write_to(w))?;
    if let Some(path) = &a.subset {
        write_file(path, |w| manifest.write_subset(&dataset, w))?;
    }
    Ok(())
}

pub fn flops(a: FlopsArgs) -> Result {
    let mut shape = ModelShape::new(a.layers, a.hidden, a.tokens, a.samples, a.epochs);
    shape.lora_rank = a.lora_rank;
    shape.adapted_matrices = a.adapted_matrices;
    let report = estimate(a.formula, &shape)?;
    let line = serde_json::to_string(&report).map_err(|e| CliError::io(e.to_string()))?;
    println!("{line}");
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result {
    let config = CompareConfig {
        spec: SyntheticSpec {
            task: task(a.task),
            n_train: a.n_train,
            seed: a.seed,
            ..SyntheticSpec::default()
        },
        model: a.model,
        schedule: Schedule::default_for(a.model),
        epochs: a.epochs,
        ratios: a.ratios,
        seeds: (0..a.n_seeds).collect(),
        tau: a.tau,
        validation_k: a.k,
        workers: workers(a.workers),
        ..CompareConfig::default()
    };
    let report = compare_selection(&config)?;
    write_file(&a.out, |w| report.write_jsonl(w))?;
    for s in &report.summaries {
        eprintln!(
            "ratio {}: win rate {:.2}, mean {} diq {:.6} / random {:.6}",
            s.ratio, s.win_rate, report.metric, s.mean_diq, s.mean_random
        );
    }
    Ok(())
}

pub fn validate(a: ValidateArgs) -> Result {
    let dataset = load_dataset(&a.dataset)?;
    let report = diq_core::data::validate_score_file(&a.scores, &dataset)?;
    let line = serde_json::to_string(&report).map_err(|e| CliError::io(e.to_string()))?;
    println!("{line}");
    if report.ok {
        Ok(())
    } else {
        Err(CliError {
            missing: report.missing.clone(),
            orphan: report.orphan.clone(),
            ..CliError::validation(format!(
                "score file has {} missing, {} orphan and {} invalid rows",
                report.missing.len(),
                report.orphan.len(),
                report.violations.len()
            ))
        })
    }
}
