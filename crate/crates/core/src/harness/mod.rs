//! Desk-scale end-to-end experiments: synthetic data, SGD training,
//! exact one-step oracles, and DIQ-versus-random comparisons.

mod compare;
mod synthetic;
mod train;

use thiserror::Error;

use crate::data::DataError;
use crate::influence::{
    per_step_loss_delta_estimate, Checkpoint, DifferentiableModel, Example, InfluenceError,
};
use crate::numeric::{dot, CompensatedSum};
use crate::select::SelectError;

pub use compare::{
    compare_selection, ArmRecord, CompareConfig, ComparisonReport, RatioSummary, ARM_DIQ,
    ARM_RANDOM,
};
pub use synthetic::{
    generate_synthetic, likert_from_hardness, NoiseProfile, SyntheticData, SyntheticSpec, Task,
};
pub use train::{mean_loss, train_sgd, Schedule, TrainRun};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("seed {seed}, ratio {ratio}: {source}")]
    Cell {
        seed: u64,
        ratio: f64,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("loss is not finite after the step")]
    NonFiniteLoss,
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn check_val(val: &[Example]) -> Result<(), HarnessError> {
    if val.is_empty() {
        return Err(InfluenceError::EmptyValidation.into());
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<(), HarnessError> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(HarnessError::Config(format!("step size must be >= 0, got {eta}")));
    }
    Ok(())
}

/// Exact mean change of validation loss after one real SGD step of size
/// `eta` on `z`, starting from the checkpoint's parameters.
pub fn oracle_influence<M: DifferentiableModel + ?Sized>(
    model: &M,
    checkpoint: &Checkpoint,
    z: &Example,
    val: &[Example],
    eta: f64,
) -> Result<f64, HarnessError> {
    check_val(val)?;
    check_eta(eta)?;
    let before = &checkpoint.params;
    let g = model.gradient(before, z)?;
    let after = before
        .step(&g, eta)
        .map_err(|_| HarnessError::NonFiniteLoss)?;
    let mut acc = CompensatedSum::new();
    for zp in val {
        let l1 = model.loss(&after, zp)?;
        let l0 = model.loss(before, zp)?;
        if !l1.is_finite() {
            return Err(HarnessError::NonFiniteLoss);
        }
        acc.add(l1 - l0);
    }
    Ok(acc.total() / val.len() as f64)
}

/// Mean first-order estimate `-eta <g(z), g(z')>` over `val`, the quantity
/// [`oracle_influence`] measures exactly.
pub fn first_order_estimate<M: DifferentiableModel + ?Sized>(
    model: &M,
    checkpoint: &Checkpoint,
    z: &Example,
    val: &[Example],
    eta: f64,
) -> Result<f64, HarnessError> {
    check_val(val)?;
    let g = model.gradient(&checkpoint.params, z)?;
    let mut acc = CompensatedSum::new();
    for zp in val {
        let gv = model.gradient(&checkpoint.params, zp)?;
        acc.add(per_step_loss_delta_estimate(&g, &gv, eta)?);
    }
    Ok(acc.total() / val.len() as f64)
}

/// Mean second-order Taylor term `eta^2 / 2 * g(z)^T H(z') g(z)` over `val`.
/// `None` when the model has no closed-form Hessian-vector product.
pub fn second_order_term<M: DifferentiableModel + ?Sized>(
    model: &M,
    checkpoint: &Checkpoint,
    z: &Example,
    val: &[Example],
    eta: f64,
) -> Option<Result<f64, HarnessError>> {
    let run = || -> Result<Option<f64>, HarnessError> {
        check_val(val)?;
        let g = model.gradient(&checkpoint.params, z)?;
        let mut acc = CompensatedSum::new();
        for zp in val {
            let hv = match model.hessian_vector_product(&checkpoint.params, zp, g.as_slice()) {
                Some(r) => r?,
                None => return Ok(None),
            };
            acc.add(0.5 * eta * eta * dot(g.as_slice(), &hv));
        }
        Ok(Some(acc.total() / val.len() as f64))
    };
    run().transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influence::models::{LinearRegression, LogisticRegression};
    use crate::influence::ParameterVector;

    fn cp(w: &[f64]) -> Checkpoint {
        Checkpoint::new(ParameterVector::new(w.to_vec()).unwrap(), 0.1, 1).unwrap()
    }

    #[test]
    fn worked_quadratic_case() {
        // w = 0, z = (1, 1), z' = (2, 1), eta = 0.1:
        // w' = 0.1, loss(z') goes 0.5 -> (0.2 - 1)^2 / 2 = 0.32.
        let m = LinearRegression { input_dim: 1 };
        let c = cp(&[0.0]);
        let z = Example::new(vec![1.0], 1.0);
        let val = [Example::new(vec![2.0], 1.0)];
        let exact = oracle_influence(&m, &c, &z, &val, 0.1).unwrap();
        let first = first_order_estimate(&m, &c, &z, &val, 0.1).unwrap();
        let second = second_order_term(&m, &c, &z, &val, 0.1).unwrap().unwrap();
        assert!((exact + 0.18).abs() < 1e-15, "{exact}");
        assert!((first + 0.2).abs() < 1e-15, "{first}");
        assert!((second - 0.02).abs() < 1e-15, "{second}");
        assert!(((first + second) - exact).abs() <= 1e-12 * exact.abs());
    }

    #[test]
    fn zero_step_changes_nothing() {
        let m = LogisticRegression { input_dim: 2 };
        let z = Example::new(vec![1.0, 2.0], 1.0);
        let val = [Example::new(vec![0.5, -1.0], 0.0)];
        assert_eq!(oracle_influence(&m, &cp(&[0.3, 0.2]), &z, &val, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn self_step_descends() {
        let m = LogisticRegression { input_dim: 2 };
        let z = Example::new(vec![1.0, -0.7], 1.0);
        let d = oracle_influence(&m, &cp(&[0.3, 0.2]), &z, std::slice::from_ref(&z), 1e-3).unwrap();
        assert!(d < 0.0);
    }

    #[test]
    fn empty_validation() {
        let m = LinearRegression { input_dim: 1 };
        let z = Example::new(vec![1.0], 1.0);
        assert!(oracle_influence(&m, &cp(&[0.0]), &z, &[], 0.1).is_err());
    }
}
