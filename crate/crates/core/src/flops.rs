//! Closed-form FLOPs estimates for dense transformer training, inference and
//! LoRA fine-tuning.
//!
//! ```text
//! train = 6  * L * H^2 * T * |D| * E
//! infer = 2  * L * H^2 * T * |D|
//! lora  = 12 * k * L * H * rank * T * |D| * E
//! ```
//!
//! Arithmetic is exact in `u128`; a product that does not fit is reported as
//! [`FlopsError::Overflow`] rather than wrapped. `T` is taken as given (the
//! caller decides between maximum and mean sequence length).

use serde::Serialize;
use thiserror::Error;

/// `10^14`, the display unit used in reports.
pub const DISPLAY_UNIT: f64 = 1e14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlopsError {
    #[error("`{0}` must be positive")]
    NonPositive(&'static str),
    #[error("LoRA estimate needs `{0}`")]
    MissingLora(&'static str),
    #[error("FLOPs count exceeds 128 bits")]
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelShape {
    pub layers: u64,
    pub hidden: u64,
    pub tokens_per_sample: u64,
    /// Training samples for `train`/`lora`, inferred samples for `infer`.
    pub num_samples: u64,
    pub epochs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lora_rank: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapted_matrices: Option<u64>,
}

impl ModelShape {
    pub fn new(layers: u64, hidden: u64, tokens_per_sample: u64, num_samples: u64, epochs: u64) -> Self {
        ModelShape {
            layers,
            hidden,
            tokens_per_sample,
            num_samples,
            epochs,
            lora_rank: None,
            adapted_matrices: None,
        }
    }

    pub fn with_lora(mut self, rank: u64, adapted_matrices: u64) -> Self {
        self.lora_rank = Some(rank);
        self.adapted_matrices = Some(adapted_matrices);
        self
    }

    fn check(&self, need_epochs: bool) -> Result<(), FlopsError> {
        for (name, v) in [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("tokens", self.tokens_per_sample),
        ] {
            if v == 0 {
                return Err(FlopsError::NonPositive(name));
            }
        }
        if need_epochs && self.epochs == 0 {
            return Err(FlopsError::NonPositive("epochs"));
        }
        Ok(())
    }
}

fn product(factors: &[u64]) -> Result<u128, FlopsError> {
    factors
        .iter()
        .try_fold(1u128, |acc, &f| acc.checked_mul(u128::from(f)))
        .ok_or(FlopsError::Overflow)
}

pub fn flops_train(shape: &ModelShape) -> Result<u128, FlopsError> {
    shape.check(true)?;
    product(&[
        6,
        shape.layers,
        shape.hidden,
        shape.hidden,
        shape.tokens_per_sample,
        shape.num_samples,
        shape.epochs,
    ])
}

pub fn flops_infer(shape: &ModelShape) -> Result<u128, FlopsError> {
    shape.check(false)?;
    product(&[
        2,
        shape.layers,
        shape.hidden,
        shape.hidden,
        shape.tokens_per_sample,
        shape.num_samples,
    ])
}

pub fn flops_lora(shape: &ModelShape) -> Result<u128, FlopsError> {
    shape.check(true)?;
    let rank = shape.lora_rank.ok_or(FlopsError::MissingLora("lora_rank"))?;
    let k = shape
        .adapted_matrices
        .ok_or(FlopsError::MissingLora("adapted_matrices"))?;
    if rank == 0 {
        return Err(FlopsError::NonPositive("lora_rank"));
    }
    if k == 0 {
        return Err(FlopsError::NonPositive("adapted_matrices"));
    }
    product(&[
        12,
        k,
        shape.layers,
        shape.hidden,
        rank,
        shape.tokens_per_sample,
        shape.num_samples,
        shape.epochs,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Formula {
    Train,
    Infer,
    Lora,
}

impl std::fmt::Display for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formula::Train => "train",
            Formula::Infer => "infer",
            Formula::Lora => "lora",
        })
    }
}

impl std::str::FromStr for Formula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Formula::Train),
            "infer" => Ok(Formula::Infer),
            "lora" => Ok(Formula::Lora),
            other => Err(format!("unknown formula {other:?}; expected train, infer or lora")),
        }
    }
}

/// One report line: `{formula, inputs, flops, flops_1e14}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsReport {
    pub formula: Formula,
    pub inputs: ModelShape,
    pub flops: u128,
    pub flops_1e14: f64,
}

pub fn estimate(formula: Formula, shape: &ModelShape) -> Result<FlopsReport, FlopsError> {
    let flops = match formula {
        Formula::Train => flops_train(shape)?,
        Formula::Infer => flops_infer(shape)?,
        Formula::Lora => flops_lora(shape)?,
    };
    Ok(FlopsReport {
        formula,
        inputs: *shape,
        flops,
        flops_1e14: flops as f64 / DISPLAY_UNIT,
    })
}
