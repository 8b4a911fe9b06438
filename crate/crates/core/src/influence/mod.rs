//! First-order training-data influence.
//!
//! For SGD with batch size one, a step on training point `z` changes the
//! loss on `z'` by approximately `-eta * <grad l(z), grad l(z')>`. Summing the
//! negated estimate over per-epoch checkpoints gives the pairwise influence
//!
//! ```text
//! I(z, z') = sum_i eta_i * <grad l(z'; theta_i), grad l(z; theta_i)>
//! ```
//!
//! and the instance influence is its mean over a validation set. Positive
//! values predict a reduction in validation loss.

mod checkpoint_file;
pub mod models;

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{Dataset, InfluenceScore, Sample};
use crate::numeric::{dot, CompensatedSum};
use crate::parallel::{self, Workers};

pub use checkpoint_file::{
    load_checkpoints, read_checkpoints, save_checkpoints, write_checkpoints, CheckpointFileError,
};
pub use models::{Example, ModelKind, ReferenceModel};

/// Number of validation samples drawn per pool unless told otherwise.
pub const DEFAULT_VALIDATION_PER_POOL: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfluenceError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector contains a non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("no checkpoints supplied")]
    NoCheckpoints,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("training set is empty")]
    EmptyTraining,
    #[error("every validation pool is empty")]
    EmptyPools,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("sample {id:?}: {message}")]
    Encoding { id: String, message: String },
    #[error("sample {id:?}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<InfluenceError>,
    },
    #[error("{0}")]
    Precondition(String),
    #[error("loss is not finite at the perturbed point (coordinate {coordinate})")]
    NonFiniteLoss { coordinate: usize },
}

impl InfluenceError {
    fn for_sample(self, id: &str) -> Self {
        match self {
            e @ InfluenceError::Encoding { .. } | e @ InfluenceError::Sample { .. } => e,
            e => InfluenceError::Sample {
                id: id.to_owned(),
                source: Box::new(e),
            },
        }
    }
}

fn check_finite(values: &[f64]) -> Result<(), InfluenceError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(InfluenceError::NonFinite { index }),
        None => Ok(()),
    }
}

/// Flat model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self, InfluenceError> {
        check_finite(&values)?;
        Ok(ParameterVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ParameterVector(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `self - eta * g`, checked for finiteness.
    pub fn step(&self, g: &GradientVector, eta: f64) -> Result<Self, InfluenceError> {
        if g.len() != self.len() {
            return Err(InfluenceError::DimensionMismatch {
                expected: self.len(),
                found: g.len(),
            });
        }
        let v = self
            .0
            .iter()
            .zip(g.as_slice())
            .map(|(w, gi)| w - eta * gi)
            .collect();
        ParameterVector::new(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self, InfluenceError> {
        check_finite(&values)?;
        Ok(GradientVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &GradientVector) -> Result<f64, InfluenceError> {
        if self.len() != other.len() {
            return Err(InfluenceError::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(dot(&self.0, &other.0))
    }
}

/// Parameters after an epoch together with that epoch's representative
/// learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterVector,
    learning_rate: f64,
    epoch_index: u32,
}

impl Checkpoint {
    pub fn new(
        params: ParameterVector,
        learning_rate: f64,
        epoch_index: u32,
    ) -> Result<Self, InfluenceError> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(InfluenceError::Checkpoint(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if epoch_index == 0 {
            return Err(InfluenceError::Checkpoint("epoch index must be >= 1".into()));
        }
        Ok(Checkpoint {
            params,
            learning_rate,
            epoch_index,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn epoch_index(&self) -> u32 {
        self.epoch_index
    }

    /// Same parameters, different rate. Used for linearity checks.
    pub fn with_learning_rate(&self, learning_rate: f64) -> Result<Self, InfluenceError> {
        Checkpoint::new(self.params.clone(), learning_rate, self.epoch_index)
    }
}

/// Checks a checkpoint sequence against a model: non-empty, strictly
/// increasing epochs, matching parameter dimension.
pub fn validate_checkpoints(
    checkpoints: &[Checkpoint],
    param_dim: usize,
) -> Result<(), InfluenceError> {
    if checkpoints.is_empty() {
        return Err(InfluenceError::NoCheckpoints);
    }
    for (i, c) in checkpoints.iter().enumerate() {
        if c.params.len() != param_dim {
            return Err(InfluenceError::DimensionMismatch {
                expected: param_dim,
                found: c.params.len(),
            });
        }
        if i > 0 && c.epoch_index <= checkpoints[i - 1].epoch_index {
            return Err(InfluenceError::Checkpoint(format!(
                "epoch indices must increase strictly ({} follows {})",
                c.epoch_index,
                checkpoints[i - 1].epoch_index
            )));
        }
    }
    Ok(())
}

/// A loss with an analytic gradient over a flat parameter vector.
pub trait DifferentiableModel: Sync {
    fn param_dim(&self) -> usize;

    fn loss(&self, params: &ParameterVector, x: &Example) -> Result<f64, InfluenceError>;

    fn gradient(&self, params: &ParameterVector, x: &Example)
        -> Result<GradientVector, InfluenceError>;

    /// Coordinates that take part in influence. `None` means all.
    fn param_mask(&self) -> Option<&[bool]> {
        None
    }

    /// `H(x) v` for the loss Hessian at `params`, when the model has one in
    /// closed form.
    fn hessian_vector_product(
        &self,
        _params: &ParameterVector,
        _x: &Example,
        _v: &[f64],
    ) -> Option<Result<Vec<f64>, InfluenceError>> {
        None
    }
}

/// Restricts gradients to a parameter subset (for example adapter weights).
/// Masked-out coordinates report a zero gradient.
#[derive(Debug, Clone)]
pub struct Masked<M> {
    inner: M,
    mask: Vec<bool>,
}

impl<M: DifferentiableModel> Masked<M> {
    pub fn new(inner: M, mask: Vec<bool>) -> Result<Self, InfluenceError> {
        if mask.len() != inner.param_dim() {
            return Err(InfluenceError::DimensionMismatch {
                expected: inner.param_dim(),
                found: mask.len(),
            });
        }
        Ok(Masked { inner, mask })
    }
}

impl<M: DifferentiableModel> DifferentiableModel for Masked<M> {
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn loss(&self, params: &ParameterVector, x: &Example) -> Result<f64, InfluenceError> {
        self.inner.loss(params, x)
    }

    fn gradient(
        &self,
        params: &ParameterVector,
        x: &Example,
    ) -> Result<GradientVector, InfluenceError> {
        let mut g = self.inner.gradient(params, x)?.0;
        for (gi, keep) in g.iter_mut().zip(&self.mask) {
            if !keep {
                *gi = 0.0;
            }
        }
        Ok(GradientVector(g))
    }

    fn param_mask(&self) -> Option<&[bool]> {
        Some(&self.mask)
    }
}

/// First-order estimate of `l(z'; theta_{t+1}) - l(z'; theta_t)` after one
/// SGD step of size `eta` on the training point.
pub fn per_step_loss_delta_estimate(
    g_train: &GradientVector,
    g_val: &GradientVector,
    eta: f64,
) -> Result<f64, InfluenceError> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(InfluenceError::Precondition(format!(
            "step size must be finite and >= 0, got {eta}"
        )));
    }
    Ok(-eta * g_train.dot(g_val)?)
}

/// `sum_i eta_i <g(z'; theta_i), g(z; theta_i)>` with the terms accumulated
/// in checkpoint order.
fn pairwise_from_gradients<'a>(
    checkpoints: &[Checkpoint],
    train: impl Iterator<Item = &'a GradientVector>,
    val: impl Iterator<Item = &'a GradientVector>,
) -> Result<f64, InfluenceError> {
    let mut acc = CompensatedSum::new();
    for ((c, g), gv) in checkpoints.iter().zip(train).zip(val) {
        acc.add(c.learning_rate * gv.dot(g)?);
    }
    Ok(acc.total())
}

pub fn pairwise_influence<M: DifferentiableModel + ?Sized>(
    model: &M,
    checkpoints: &[Checkpoint],
    z: &Example,
    z_prime: &Example,
) -> Result<f64, InfluenceError> {
    validate_checkpoints(checkpoints, model.param_dim())?;
    let g: Vec<GradientVector> = checkpoints
        .iter()
        .map(|c| model.gradient(&c.params, z))
        .collect::<Result<_, _>>()?;
    let gp: Vec<GradientVector> = checkpoints
        .iter()
        .map(|c| model.gradient(&c.params, z_prime))
        .collect::<Result<_, _>>()?;
    pairwise_from_gradients(checkpoints, g.iter(), gp.iter())
}

/// Ordered, non-empty validation samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    samples: Vec<Sample>,
}

impl ValidationSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self, InfluenceError> {
        if samples.is_empty() {
            return Err(InfluenceError::EmptyValidation);
        }
        Ok(ValidationSet { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn examples(&self) -> Result<Vec<Example>, InfluenceError> {
        self.samples.iter().map(Example::from_sample).collect()
    }
}

fn check_validation(val: &[Example]) -> Result<(), InfluenceError> {
    if val.is_empty() {
        Err(InfluenceError::EmptyValidation)
    } else {
        Ok(())
    }
}

/// Mean of [`pairwise_influence`] over `val`, accumulated in `val` order.
pub fn instance_influence<M: DifferentiableModel + ?Sized>(
    model: &M,
    checkpoints: &[Checkpoint],
    z: &Example,
    val: &[Example],
) -> Result<InfluenceScore, InfluenceError> {
    check_validation(val)?;
    let mut acc = CompensatedSum::new();
    for zp in val {
        acc.add(pairwise_influence(model, checkpoints, z, zp)?);
    }
    to_score(acc.total() / val.len() as f64)
}

fn to_score(v: f64) -> Result<InfluenceScore, InfluenceError> {
    InfluenceScore::new(v).map_err(|_| InfluenceError::NonFinite { index: 0 })
}

/// Influence of every training example. Validation gradients are computed
/// once per checkpoint and shared; training examples fan out over
/// `workers`. Each result is computed with the same operation order as
/// [`instance_influence`], so the output is bit-identical for any worker
/// count.
pub fn score_examples<M: DifferentiableModel + ?Sized>(
    model: &M,
    checkpoints: &[Checkpoint],
    train: &[Example],
    val: &[Example],
    workers: Workers,
) -> Result<Vec<InfluenceScore>, (usize, InfluenceError)> {
    let wrap = |e| (usize::MAX, e);
    if train.is_empty() {
        return Err(wrap(InfluenceError::EmptyTraining));
    }
    check_validation(val).map_err(wrap)?;
    validate_checkpoints(checkpoints, model.param_dim()).map_err(wrap)?;
    // val_grads[v][c]
    let val_grads: Vec<Vec<GradientVector>> = val
        .iter()
        .map(|zp| {
            checkpoints
                .iter()
                .map(|c| model.gradient(&c.params, zp))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()
        .map_err(wrap)?;
    let indexed: Vec<(usize, &Example)> = train.iter().enumerate().collect();
    parallel::try_map(&indexed, workers, |&(i, z)| {
        let g: Vec<GradientVector> = checkpoints
            .iter()
            .map(|c| model.gradient(&c.params, z))
            .collect::<Result<_, _>>()
            .map_err(|e| (i, e))?;
        let mut acc = CompensatedSum::new();
        for gv in &val_grads {
            acc.add(pairwise_from_gradients(checkpoints, g.iter(), gv.iter()).map_err(|e| (i, e))?);
        }
        to_score(acc.total() / val.len() as f64).map_err(|e| (i, e))
    })
}

/// Dataset-level wrapper over [`score_examples`]; errors carry the offending
/// sample id.
pub fn score_dataset_influence<M: DifferentiableModel + ?Sized>(
    model: &M,
    checkpoints: &[Checkpoint],
    train: &Dataset,
    val: &ValidationSet,
    workers: Workers,
) -> Result<BTreeMap<String, InfluenceScore>, InfluenceError> {
    if train.is_empty() {
        return Err(InfluenceError::EmptyTraining);
    }
    let train_x: Vec<Example> = train
        .iter()
        .map(Example::from_sample)
        .collect::<Result<_, _>>()?;
    let val_x = val.examples()?;
    let scores = score_examples(model, checkpoints, &train_x, &val_x, workers).map_err(
        |(i, e)| match train.samples().get(i) {
            Some(s) => e.for_sample(&s.id),
            None => e,
        },
    )?;
    Ok(train
        .ids()
        .map(str::to_owned)
        .zip(scores)
        .collect())
}

/// Result of [`sample_validation`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationDraw {
    pub set: ValidationSet,
    /// Indices of pools smaller than `k`, which were taken whole.
    pub capped_pools: Vec<usize>,
}

/// Draws `min(k, |pool|)` samples uniformly without replacement from each
/// pool and concatenates them in pool order. Within a pool, picks keep the
/// pool's own order.
pub fn sample_validation(
    pools: &[Dataset],
    k: usize,
    seed: u64,
) -> Result<ValidationDraw, InfluenceError> {
    if k == 0 {
        return Err(InfluenceError::Precondition(
            "validation sample count must be >= 1".into(),
        ));
    }
    if pools.iter().all(Dataset::is_empty) {
        return Err(InfluenceError::EmptyPools);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut capped_pools = Vec::new();
    for (p, pool) in pools.iter().enumerate() {
        let n = pool.len();
        if n <= k {
            if n < k {
                capped_pools.push(p);
            }
            samples.extend(pool.iter().cloned());
            continue;
        }
        let mut picks = index::sample(&mut rng, n, k).into_vec();
        picks.sort_unstable();
        samples.extend(picks.into_iter().map(|i| pool.samples()[i].clone()));
    }
    Ok(ValidationDraw {
        set: ValidationSet::new(samples)?,
        capped_pools,
    })
}

const GRADIENT_CHECK_GUARD: f64 = 1e-12;

/// Relative error between the analytic gradient `a` and the central
/// differences `c` with step `h`, measured on the whole vector:
/// `|a - c| / max(|a|, |c|, 1e-12)` in the Euclidean norm.
///
/// A per-coordinate ratio is not used because coordinates that are
/// legitimately near zero (a saturated tanh unit, say) are swamped by the
/// `eps * loss / h` rounding floor of the difference quotient.
pub fn gradient_check<M: DifferentiableModel + ?Sized>(
    model: &M,
    params: &ParameterVector,
    x: &Example,
    h: f64,
) -> Result<f64, InfluenceError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(InfluenceError::Precondition(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let analytic = model.gradient(params, x)?;
    let mut probe = params.as_slice().to_vec();
    let (mut diff, mut norm_a, mut norm_c) = (0.0, 0.0, 0.0);
    for (i, &a) in analytic.as_slice().iter().enumerate() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = model.loss(&ParameterVector(probe.clone()), x)?;
        probe[i] = orig - h;
        let down = model.loss(&ParameterVector(probe.clone()), x)?;
        probe[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(InfluenceError::NonFiniteLoss { coordinate: i });
        }
        let c = (up - down) / (2.0 * h);
        diff += (a - c) * (a - c);
        norm_a += a * a;
        norm_c += c * c;
    }
    let scale = f64::max(norm_a, norm_c).sqrt().max(GRADIENT_CHECK_GUARD);
    Ok(diff.sqrt() / scale)
}
