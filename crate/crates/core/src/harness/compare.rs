//! Paired DIQ-versus-random subset comparison.
//!
//! Per seed: generate data, run a probe training pass on the full pool,
//! score influence from its checkpoints, then for every ratio retrain from
//! the same initialisation and shuffle seed on (a) the DIQ subset and
//! (b) a uniform random subset of the same size, and record the held-out
//! loss of each. The held-out split stands in for the downstream metric.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{Dimension, ScoreTable, ScoredSample};
use crate::influence::{
    sample_validation, score_examples, Example, ModelKind, ParameterVector,
    ReferenceModel, DEFAULT_VALIDATION_PER_POOL,
};
use crate::numeric::{derive_seed, mean};
use crate::parallel::{self, Workers};
use crate::select::{select, SelectionConfig};

use super::synthetic::{generate_synthetic, SyntheticSpec, Task};
use super::train::{mean_loss, train_sgd, Schedule};
use super::HarnessError;

pub const ARM_DIQ: &str = "diq";
pub const ARM_RANDOM: &str = "random";

const STREAM_DATA: u64 = 0x10;
const STREAM_INIT: u64 = 0x11;
const STREAM_PROBE: u64 = 0x12;
const STREAM_VALIDATION: u64 = 0x13;
const STREAM_RETRAIN: u64 = 0x14;
const STREAM_RANDOM: u64 = 0x100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareConfig {
    pub spec: SyntheticSpec,
    pub model: ModelKind,
    pub schedule: Schedule,
    pub epochs: usize,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub tau: f64,
    pub dimension: Dimension,
    pub validation_k: usize,
    #[serde(skip)]
    pub workers: Workers,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            spec: SyntheticSpec::default(),
            model: ModelKind::Linear,
            schedule: Schedule::default(),
            epochs: 3,
            ratios: vec![0.01, 0.1],
            seeds: (0..20).collect(),
            tau: 3.0,
            dimension: Dimension::Overall,
            validation_k: DEFAULT_VALIDATION_PER_POOL,
            workers: Workers::SEQUENTIAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmRecord {
    pub ratio: f64,
    pub seed: u64,
    pub arm: &'static str,
    pub n_selected: usize,
    pub final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSummary {
    pub ratio: f64,
    pub n_seeds: usize,
    pub mean_diq: f64,
    pub mean_random: f64,
    /// Fraction of seeds where the DIQ loss is strictly lower.
    pub win_rate: f64,
    /// `random - diq` per seed, in seed order.
    pub paired_differences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub metric: &'static str,
    /// Ordered by ratio, then seed, then arm (DIQ first).
    pub records: Vec<ArmRecord>,
    pub summaries: Vec<RatioSummary>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ReportLine<'a> {
    Cell(&'a ArmRecord),
    Summary(&'a RatioSummary),
}

impl ComparisonReport {
    pub fn summary(&self, ratio: f64) -> Option<&RatioSummary> {
        self.summaries.iter().find(|s| s.ratio == ratio)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let lines = self
            .records
            .iter()
            .map(ReportLine::Cell)
            .chain(self.summaries.iter().map(ReportLine::Summary));
        for line in lines {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

struct SeedOutcome {
    /// Per ratio: (diq, random).
    arms: Vec<(ArmRecord, ArmRecord)>,
}

fn accuracy(model: &ReferenceModel, params: &ParameterVector, data: &[Example]) -> f64 {
    let hits = data
        .iter()
        .filter(|x| (model.predict(params, x) >= 0.5) == (x.target >= 0.5))
        .count();
    hits as f64 / data.len() as f64
}

fn run_seed(config: &CompareConfig, seed: u64) -> Result<SeedOutcome, HarnessError> {
    let cell = derive_seed(config.spec.seed, seed);
    let spec = SyntheticSpec {
        seed: derive_seed(cell, STREAM_DATA),
        ..config.spec.clone()
    };
    let data = generate_synthetic(&spec)?;
    let encode = |d: &crate::data::Dataset| -> Result<Vec<Example>, HarnessError> {
        Ok(d.iter().map(Example::from_sample).collect::<Result<_, _>>()?)
    };
    let train_x = encode(&data.train)?;
    let test_x = encode(&data.test)?;
    let model = ReferenceModel::new(config.model, spec.input_dim());
    let init = model.init_params(&mut ChaCha8Rng::seed_from_u64(derive_seed(cell, STREAM_INIT)));

    let probe = train_sgd(
        &model,
        &train_x,
        init.clone(),
        &config.schedule,
        config.epochs,
        derive_seed(cell, STREAM_PROBE),
    )?;
    let draw = sample_validation(
        std::slice::from_ref(&data.validation),
        config.validation_k,
        derive_seed(cell, STREAM_VALIDATION),
    )?;
    let val_x = draw.set.examples()?;
    let scores = score_examples(&model, &probe.checkpoints, &train_x, &val_x, Workers::SEQUENTIAL)
        .map_err(|(_, e)| HarnessError::Influence(e))?;
    let table: ScoreTable = data
        .train
        .ids()
        .zip(&scores)
        .map(|(id, &influence)| ScoredSample {
            sample_id: id.to_owned(),
            difficulty: data.difficulty[id],
            influence,
        })
        .collect();
    let position: HashMap<&str, usize> = data.train.ids().enumerate().map(|(i, id)| (id, i)).collect();

    let evaluate = |subset: &[usize]| -> Result<(f64, Option<f64>), HarnessError> {
        let params = if subset.is_empty() {
            init.clone()
        } else {
            let xs: Vec<Example> = subset.iter().map(|&i| train_x[i].clone()).collect();
            train_sgd(
                &model,
                &xs,
                init.clone(),
                &config.schedule,
                config.epochs,
                derive_seed(cell, STREAM_RETRAIN),
            )?
            .final_params
        };
        let loss = mean_loss(&model, &params, &test_x)?;
        let acc = (spec.task == Task::BinaryClassification).then(|| accuracy(&model, &params, &test_x));
        Ok((loss, acc))
    };

    let mut arms = Vec::with_capacity(config.ratios.len());
    for (ri, &ratio) in config.ratios.iter().enumerate() {
        let wrap = |e: HarnessError| HarnessError::Cell {
            seed,
            ratio,
            source: Box::new(e),
        };
        let sel_config = SelectionConfig::new(config.tau, ratio, config.dimension)
            .map_err(|e| wrap(e.into()))?;
        let manifest = select(&data.train, &table, &sel_config).map_err(|e| wrap(e.into()))?;
        // Training order is canonical (dataset order) so that ratio 1.0 gives
        // both arms the same sequence.
        let mut diq: Vec<usize> = manifest.selected_ids().map(|id| position[id]).collect();
        diq.sort_unstable();
        let n = diq.len();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cell, STREAM_RANDOM + ri as u64));
        let mut random = index::sample(&mut rng, train_x.len(), n).into_vec();
        random.sort_unstable();

        let (diq_loss, diq_acc) = evaluate(&diq).map_err(wrap)?;
        let (rnd_loss, rnd_acc) = evaluate(&random).map_err(wrap)?;
        let rec = |arm, final_loss, accuracy| ArmRecord {
            ratio,
            seed,
            arm,
            n_selected: n,
            final_loss,
            accuracy,
        };
        arms.push((rec(ARM_DIQ, diq_loss, diq_acc), rec(ARM_RANDOM, rnd_loss, rnd_acc)));
    }
    Ok(SeedOutcome { arms })
}

pub fn compare_selection(config: &CompareConfig) -> Result<ComparisonReport, HarnessError> {
    if config.seeds.len() < 2 {
        return Err(HarnessError::Config("need at least two seeds".into()));
    }
    if config.ratios.is_empty() {
        return Err(HarnessError::Config("need at least one ratio".into()));
    }
    for &r in &config.ratios {
        SelectionConfig::new(config.tau, r, config.dimension)?;
    }
    config.spec.validate()?;

    let outcomes = parallel::try_map(&config.seeds, config.workers, |&s| run_seed(config, s))?;

    let mut records = Vec::with_capacity(2 * config.ratios.len() * config.seeds.len());
    let mut summaries = Vec::with_capacity(config.ratios.len());
    for (ri, &ratio) in config.ratios.iter().enumerate() {
        let pairs: Vec<&(ArmRecord, ArmRecord)> = outcomes.iter().map(|o| &o.arms[ri]).collect();
        for (d, r) in &pairs {
            records.push(d.clone());
            records.push(r.clone());
        }
        let diq: Vec<f64> = pairs.iter().map(|p| p.0.final_loss).collect();
        let rnd: Vec<f64> = pairs.iter().map(|p| p.1.final_loss).collect();
        let wins = pairs.iter().filter(|p| p.0.final_loss < p.1.final_loss).count();
        summaries.push(RatioSummary {
            ratio,
            n_seeds: pairs.len(),
            mean_diq: mean(&diq).expect("at least two seeds"),
            mean_random: mean(&rnd).expect("at least two seeds"),
            win_rate: wins as f64 / pairs.len() as f64,
            paired_differences: rnd.iter().zip(&diq).map(|(r, d)| r - d).collect(),
        });
    }
    Ok(ComparisonReport {
        metric: "held-out loss",
        records,
        summaries,
    })
}
