//! Batch-size-one SGD with per-epoch checkpoints.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::influence::{Checkpoint, DifferentiableModel, Example, ModelKind, ParameterVector};
use crate::numeric::{mean, CompensatedSum};

use super::HarnessError;

/// Learning-rate schedule over the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Schedule {
    Constant { rate: f64 },
    /// Half-cosine from `peak` at step 0 towards `floor` at the end.
    Cosine { peak: f64, floor: f64 },
    /// One rate per step; length must equal `epochs * |train|`.
    PerStep { rates: Vec<f64> },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Cosine {
            peak: 0.01,
            floor: 0.0,
        }
    }
}

impl Schedule {
    /// Cosine decay with a peak suited to the model. Cross-entropy plateaus
    /// earlier than squared error, and at a 0.01 peak its last epoch tends
    /// to drift upward inside the SGD noise floor, so logistic regression
    /// starts lower.
    pub fn default_for(model: ModelKind) -> Self {
        let peak = match model {
            ModelKind::Logistic => 0.005,
            ModelKind::Linear | ModelKind::Mlp { .. } => 0.01,
        };
        Schedule::Cosine { peak, floor: 0.0 }
    }

    pub fn rates(&self, total_steps: usize) -> Result<Vec<f64>, HarnessError> {
        if total_steps == 0 {
            return Err(HarnessError::Config("schedule needs at least one step".into()));
        }
        let rates = match self {
            Schedule::Constant { rate } => vec![*rate; total_steps],
            Schedule::Cosine { peak, floor } => (0..total_steps)
                .map(|t| {
                    let phase = std::f64::consts::PI * t as f64 / total_steps as f64;
                    floor + 0.5 * (peak - floor) * (1.0 + phase.cos())
                })
                .collect(),
            Schedule::PerStep { rates } => {
                if rates.len() != total_steps {
                    return Err(HarnessError::Config(format!(
                        "per-step schedule has {} rates for {total_steps} steps",
                        rates.len()
                    )));
                }
                rates.clone()
            }
        };
        if let Some(bad) = rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(HarnessError::Config(format!(
                "learning rates must be positive, found {bad}"
            )));
        }
        Ok(rates)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    /// One per epoch; the rate is the mean step rate of that epoch.
    pub checkpoints: Vec<Checkpoint>,
    pub final_params: ParameterVector,
    /// Mean training loss before training and after each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn mean_loss<M: DifferentiableModel + ?Sized>(
    model: &M,
    params: &ParameterVector,
    data: &[Example],
) -> Result<f64, HarnessError> {
    let mut acc = CompensatedSum::new();
    for x in data {
        acc.add(model.loss(params, x)?);
    }
    Ok(acc.total() / data.len().max(1) as f64)
}

/// Per-sample SGD. The visiting order of every epoch is a fresh shuffle from
/// one `seed`-initialised generator.
pub fn train_sgd<M: DifferentiableModel + ?Sized>(
    model: &M,
    train: &[Example],
    init: ParameterVector,
    schedule: &Schedule,
    epochs: usize,
    seed: u64,
) -> Result<TrainRun, HarnessError> {
    if epochs == 0 {
        return Err(HarnessError::Config("epochs must be >= 1".into()));
    }
    if train.is_empty() {
        return Err(HarnessError::Config("training set is empty".into()));
    }
    if init.len() != model.param_dim() {
        return Err(HarnessError::Config(format!(
            "initial parameters have dimension {}, model expects {}",
            init.len(),
            model.param_dim()
        )));
    }
    let rates = schedule.rates(epochs * train.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut params = init;
    let mut epoch_losses = vec![finite_loss(mean_loss(model, &params, train)?, 0, 0)?];
    let mut checkpoints = Vec::with_capacity(epochs);
    for (epoch, epoch_rates) in rates.chunks(train.len()).enumerate() {
        order.shuffle(&mut rng);
        for (step, (&i, &eta)) in order.iter().zip(epoch_rates).enumerate() {
            let g = model.gradient(&params, &train[i]).map_err(|_| HarnessError::Diverged {
                epoch: epoch + 1,
                step,
            })?;
            params = params.step(&g, eta).map_err(|_| HarnessError::Diverged {
                epoch: epoch + 1,
                step,
            })?;
        }
        let loss = mean_loss(model, &params, train)?;
        epoch_losses.push(finite_loss(loss, epoch + 1, train.len())?);
        let eta_bar = mean(epoch_rates).expect("epoch has steps");
        checkpoints.push(Checkpoint::new(params.clone(), eta_bar, (epoch + 1) as u32)?);
    }
    Ok(TrainRun {
        checkpoints,
        final_params: params,
        epoch_losses,
    })
}

fn finite_loss(loss: f64, epoch: usize, step: usize) -> Result<f64, HarnessError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(HarnessError::Diverged { epoch, step })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influence::models::{LinearRegression, TanhNetwork};

    fn line_data() -> Vec<Example> {
        (0..20)
            .map(|i| {
                let x = i as f64 / 10.0 - 1.0;
                Example::new(vec![x, 1.0], 2.0 * x - 0.5)
            })
            .collect()
    }

    #[test]
    fn schedule_shapes() {
        let c = Schedule::Cosine {
            peak: 0.1,
            floor: 0.0,
        }
        .rates(4)
        .unwrap();
        assert_eq!(c[0], 0.1);
        assert!(c.windows(2).all(|w| w[1] < w[0]));
        assert!(c[3] > 0.0);
        assert!(Schedule::PerStep { rates: vec![] }.rates(3).is_err());
        assert!(Schedule::PerStep { rates: vec![] }.rates(0).is_err());
        assert!(Schedule::Constant { rate: 0.0 }.rates(3).is_err());
    }

    #[test]
    fn descends_on_quadratic() {
        let m = LinearRegression { input_dim: 2 };
        let run = train_sgd(
            &m,
            &line_data(),
            ParameterVector::zeros(2),
            &Schedule::Constant { rate: 0.05 },
            5,
            3,
        )
        .unwrap();
        assert_eq!(run.checkpoints.len(), 5);
        assert_eq!(run.epoch_losses.len(), 6);
        assert!(run.epoch_losses.last().unwrap() < &run.epoch_losses[0]);
        let epochs: Vec<u32> = run.checkpoints.iter().map(|c| c.epoch_index()).collect();
        assert_eq!(epochs, [1, 2, 3, 4, 5]);
    }

    #[test]
    fn checkpoint_rate_is_epoch_mean() {
        let m = LinearRegression { input_dim: 2 };
        let data = &line_data()[..2];
        let rates = vec![0.1, 0.3, 0.02, 0.04];
        let run = train_sgd(
            &m,
            data,
            ParameterVector::zeros(2),
            &Schedule::PerStep { rates },
            2,
            0,
        )
        .unwrap();
        assert!((run.checkpoints[0].learning_rate() - 0.2).abs() < 1e-15);
        assert!((run.checkpoints[1].learning_rate() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_bits() {
        let m = TanhNetwork {
            input_dim: 2,
            hidden: 3,
        };
        let init = ParameterVector::new((0..m.param_dim()).map(|i| 0.1 * i as f64).collect()).unwrap();
        let go = |seed| {
            train_sgd(&m, &line_data(), init.clone(), &Schedule::default(), 3, seed).unwrap()
        };
        assert_eq!(go(11), go(11));
        assert_ne!(go(11).final_params, go(12).final_params);
    }

    #[test]
    fn divergence_is_caught() {
        let m = LinearRegression { input_dim: 2 };
        let err = train_sgd(
            &m,
            &line_data(),
            ParameterVector::zeros(2),
            &Schedule::Constant { rate: 1e6 },
            50,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, HarnessError::Diverged { .. }), "{err}");
    }

    #[test]
    fn zero_epochs_rejected() {
        let m = LinearRegression { input_dim: 2 };
        assert!(train_sgd(&m, &line_data(), ParameterVector::zeros(2), &Schedule::default(), 0, 0).is_err());
    }
}
