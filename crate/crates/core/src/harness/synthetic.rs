//! Synthetic regression / classification pools with a controllable
//! difficulty signal.
//!
//! Each feature vector has an "easy" block drawn from `N(0, 1)` and a
//! "hard" block drawn from `N(0, s^2)`, where `s` is the sample's hardness
//! scale taken from the noise profile. A constant `1.0` is appended as the
//! bias input. Training samples are drawn from the target task with
//! probability `1 - distractor_fraction` and from an unrelated distractor
//! task otherwise; validation and test samples always come from the target
//! task. Likert difficulty is the hardness quantile class.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DifficultyScores};
use crate::influence::Example;
use crate::numeric::derive_seed;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

/// Distribution of the per-sample hardness scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum NoiseProfile {
    Constant { scale: f64 },
    Uniform { low: f64, high: f64 },
}

impl NoiseProfile {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseProfile::Constant { scale } => scale,
            NoiseProfile::Uniform { low, high } => rng.random_range(low..=high),
        }
    }

    fn check(&self) -> Result<(), HarnessError> {
        let ok = match *self {
            NoiseProfile::Constant { scale } => scale.is_finite() && scale >= 0.0,
            NoiseProfile::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && 0.0 <= low && low <= high
            }
        };
        if ok {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("invalid noise profile {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub task: Task,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Informative features, excluding the appended bias input.
    pub feature_dim: usize,
    /// How many of the informative features are scaled by hardness.
    pub hard_dims: usize,
    pub noise_profile: NoiseProfile,
    /// Standard deviation of additive label noise (regression only).
    pub label_noise: f64,
    pub distractor_fraction: f64,
    /// Number of equal-frequency Likert classes, 1..=5.
    pub likert_classes: u8,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            task: Task::Regression,
            n_train: 2000,
            n_val: 200,
            n_test: 1000,
            feature_dim: 16,
            hard_dims: 12,
            noise_profile: NoiseProfile::Uniform {
                low: 0.0,
                high: 1.0,
            },
            label_noise: 0.3,
            distractor_fraction: 0.5,
            likert_classes: 5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_owned()));
        if self.n_train < 10 {
            return fail("n_train must be at least 10");
        }
        if self.n_val == 0 || self.n_test == 0 {
            return fail("n_val and n_test must be positive");
        }
        if self.feature_dim == 0 || self.hard_dims > self.feature_dim {
            return fail("need feature_dim >= 1 and hard_dims <= feature_dim");
        }
        if !(1..=5).contains(&self.likert_classes) {
            return fail("likert_classes must be in 1..=5");
        }
        if !(0.0..=1.0).contains(&self.distractor_fraction) {
            return fail("distractor_fraction must be in [0, 1]");
        }
        if !(self.label_noise.is_finite() && self.label_noise >= 0.0) {
            return fail("label_noise must be >= 0");
        }
        self.noise_profile.check()
    }

    /// Model input width (features plus bias).
    pub fn input_dim(&self) -> usize {
        self.feature_dim + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Dataset,
    pub difficulty: BTreeMap<String, DifficultyScores>,
    /// Hardness scale per training sample, in dataset order.
    pub hardness: Vec<f64>,
    /// Whether each training sample came from the distractor task.
    pub distractor: Vec<bool>,
    /// Pool the influence validation set is drawn from.
    pub validation: Dataset,
    /// Held-out split used to score retrained models.
    pub test: Dataset,
}

/// Equal-frequency quantile classes. With sorted values `v` and `c` classes,
/// cut `j` is `v[ceil(n*j/c) - 1]` and a value's class is one plus the
/// number of cuts it strictly exceeds, so ties (in particular an all-equal
/// profile) fall into the lowest class that contains them.
pub fn likert_from_hardness(values: &[f64], classes: u8) -> Vec<u8> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let c = usize::from(classes.max(1));
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..c)
        .map(|j| sorted[(n * j).div_ceil(c).max(1) - 1])
        .collect();
    values
        .iter()
        .map(|&h| 1 + cuts.iter().filter(|&&cut| h > cut).count() as u8)
        .collect()
}

const STREAM_WEIGHTS: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_VAL: u64 = 3;
const STREAM_TEST: u64 = 4;

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    target: Vec<f64>,
    distractor: Vec<f64>,
}

impl Generator<'_> {
    fn example<R: Rng>(&self, rng: &mut R, distractor_fraction: f64) -> (Example, f64, bool) {
        let spec = self.spec;
        let s = spec.noise_profile.draw(rng);
        let easy = spec.feature_dim - spec.hard_dims;
        let mut x: Vec<f64> = (0..spec.feature_dim)
            .map(|j| {
                let z: f64 = StandardNormal.sample(rng);
                if j < easy {
                    z
                } else {
                    z * s
                }
            })
            .collect();
        x.push(1.0);
        let off = distractor_fraction > 0.0 && rng.random_bool(distractor_fraction);
        let w = if off { &self.distractor } else { &self.target };
        let f: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        let y = match spec.task {
            Task::Regression => {
                let e: f64 = StandardNormal.sample(rng);
                f + spec.label_noise * e
            }
            Task::BinaryClassification => {
                let p = 1.0 / (1.0 + (-f).exp());
                if rng.random_bool(p.clamp(0.0, 1.0)) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        (Example::new(x, y), s, off)
    }

    fn split(
        &self,
        prefix: &str,
        n: usize,
        stream: u64,
        distractor_fraction: f64,
    ) -> (Dataset, Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.spec.seed, stream));
        let width = n.to_string().len();
        let mut samples = Vec::with_capacity(n);
        let mut hard = Vec::with_capacity(n);
        let mut off = Vec::with_capacity(n);
        for i in 0..n {
            let (ex, s, d) = self.example(&mut rng, distractor_fraction);
            samples.push(ex.to_sample(format!("{prefix}-{i:0width$}")));
            hard.push(s);
            off.push(d);
        }
        let ds = Dataset::new(samples).expect("generated ids are unique");
        (ds, hard, off)
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, HarnessError> {
    spec.validate()?;
    let d = spec.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_WEIGHTS));
    let normal = Normal::new(0.0, 2.0 / (d as f64).sqrt()).expect("positive std");
    let target: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
    let distractor: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
    let g = Generator {
        spec,
        target,
        distractor,
    };
    let (train, hardness, distractor) =
        g.split("train", spec.n_train, STREAM_TRAIN, spec.distractor_fraction);
    let (validation, _, _) = g.split("val", spec.n_val, STREAM_VAL, 0.0);
    let (test, _, _) = g.split("test", spec.n_test, STREAM_TEST, 0.0);
    let classes = likert_from_hardness(&hardness, spec.likert_classes);
    let difficulty = train
        .ids()
        .zip(classes)
        .map(|(id, c)| {
            let d = DifficultyScores::uniform(c).expect("quantile classes lie in 1..=5");
            (id.to_owned(), d)
        })
        .collect();
    Ok(SyntheticData {
        train,
        difficulty,
        hardness,
        distractor,
        validation,
        test,
    })
}
