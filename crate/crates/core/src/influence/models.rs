//! Reference models with hand-derived gradients.
//!
//! Samples are encoded numerically: `query` holds a JSON array of feature
//! values and `answer` holds the scalar target. None of the models add an
//! implicit bias input; append a constant `1.0` feature when one is wanted.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DifferentiableModel, GradientVector, InfluenceError, ParameterVector};
use crate::data::Sample;
use crate::numeric::dot;

/// Numeric view of a [`Sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: f64,
}

impl Example {
    pub fn new(features: Vec<f64>, target: f64) -> Self {
        Example { features, target }
    }

    pub fn from_sample(sample: &Sample) -> Result<Self, InfluenceError> {
        let bad = |message: String| InfluenceError::Encoding {
            id: sample.id.clone(),
            message,
        };
        let features: Vec<f64> = serde_json::from_str(&sample.query)
            .map_err(|e| bad(format!("query is not a JSON array of numbers: {e}")))?;
        let target: f64 = sample
            .answer
            .trim()
            .parse()
            .map_err(|e| bad(format!("answer is not a number: {e}")))?;
        if !target.is_finite() || features.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite feature or target".into()));
        }
        Ok(Example { features, target })
    }

    /// Inverse of [`Example::from_sample`].
    pub fn to_sample(&self, id: impl Into<String>) -> Sample {
        let query = serde_json::to_string(&self.features).expect("finite floats serialize");
        Sample::new(id, query, format!("{}", self.target))
    }
}

fn check_input(
    x: &Example,
    expected: usize,
    params: &ParameterVector,
    dim: usize,
) -> Result<(), InfluenceError> {
    if x.features.len() != expected {
        return Err(InfluenceError::DimensionMismatch {
            expected,
            found: x.features.len(),
        });
    }
    if params.len() != dim {
        return Err(InfluenceError::DimensionMismatch {
            expected: dim,
            found: params.len(),
        });
    }
    Ok(())
}

/// `f(x) = w·x`, loss `(f(x) - y)^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearRegression {
    pub input_dim: usize,
}

impl DifferentiableModel for LinearRegression {
    fn param_dim(&self) -> usize {
        self.input_dim
    }

    fn loss(&self, params: &ParameterVector, x: &Example) -> Result<f64, InfluenceError> {
        check_input(x, self.input_dim, params, self.input_dim)?;
        let r = dot(params.as_slice(), &x.features) - x.target;
        Ok(0.5 * r * r)
    }

    fn gradient(
        &self,
        params: &ParameterVector,
        x: &Example,
    ) -> Result<GradientVector, InfluenceError> {
        check_input(x, self.input_dim, params, self.input_dim)?;
        let r = dot(params.as_slice(), &x.features) - x.target;
        GradientVector::new(x.features.iter().map(|v| r * v).collect())
    }

    fn hessian_vector_product(
        &self,
        params: &ParameterVector,
        x: &Example,
        v: &[f64],
    ) -> Option<Result<Vec<f64>, InfluenceError>> {
        Some(check_input(x, self.input_dim, params, self.input_dim).map(|_| {
            let xv = dot(&x.features, v);
            x.features.iter().map(|xi| xi * xv).collect()
        }))
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Logistic regression with binary cross-entropy; targets in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogisticRegression {
    pub input_dim: usize,
}

impl DifferentiableModel for LogisticRegression {
    fn param_dim(&self) -> usize {
        self.input_dim
    }

    fn loss(&self, params: &ParameterVector, x: &Example) -> Result<f64, InfluenceError> {
        check_input(x, self.input_dim, params, self.input_dim)?;
        let s = dot(params.as_slice(), &x.features);
        Ok(softplus(s) - x.target * s)
    }

    fn gradient(
        &self,
        params: &ParameterVector,
        x: &Example,
    ) -> Result<GradientVector, InfluenceError> {
        check_input(x, self.input_dim, params, self.input_dim)?;
        let r = sigmoid(dot(params.as_slice(), &x.features)) - x.target;
        GradientVector::new(x.features.iter().map(|v| r * v).collect())
    }

    fn hessian_vector_product(
        &self,
        params: &ParameterVector,
        x: &Example,
        v: &[f64],
    ) -> Option<Result<Vec<f64>, InfluenceError>> {
        Some(check_input(x, self.input_dim, params, self.input_dim).map(|_| {
            let p = sigmoid(dot(params.as_slice(), &x.features));
            let scale = p * (1.0 - p) * dot(&x.features, v);
            x.features.iter().map(|xi| xi * scale).collect()
        }))
    }
}

/// One hidden tanh layer, scalar linear output, squared-error loss.
///
/// Parameter layout: `W1` (hidden × input, row-major), `b1` (hidden),
/// `w2` (hidden), `b2` (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TanhNetwork {
    pub input_dim: usize,
    pub hidden: usize,
}

impl TanhNetwork {
    fn forward(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
        let (d, h) = (self.input_dim, self.hidden);
        let w1 = &params[..h * d];
        let b1 = &params[h * d..h * d + h];
        let w2 = &params[h * d + h..h * d + 2 * h];
        let b2 = params[h * d + 2 * h];
        let act: Vec<f64> = (0..h)
            .map(|j| (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh())
            .collect();
        let out = dot(w2, &act) + b2;
        (act, out)
    }
}

impl DifferentiableModel for TanhNetwork {
    fn param_dim(&self) -> usize {
        self.hidden * self.input_dim + 2 * self.hidden + 1
    }

    fn loss(&self, params: &ParameterVector, x: &Example) -> Result<f64, InfluenceError> {
        check_input(x, self.input_dim, params, self.param_dim())?;
        let (_, out) = self.forward(params.as_slice(), &x.features);
        let r = out - x.target;
        Ok(0.5 * r * r)
    }

    fn gradient(
        &self,
        params: &ParameterVector,
        x: &Example,
    ) -> Result<GradientVector, InfluenceError> {
        check_input(x, self.input_dim, params, self.param_dim())?;
        let (d, h) = (self.input_dim, self.hidden);
        let p = params.as_slice();
        let (act, out) = self.forward(p, &x.features);
        let r = out - x.target;
        let w2 = &p[h * d + h..h * d + 2 * h];
        let mut g = vec![0.0; self.param_dim()];
        for j in 0..h {
            let pre = r * w2[j] * (1.0 - act[j] * act[j]);
            for k in 0..d {
                g[j * d + k] = pre * x.features[k];
            }
            g[h * d + j] = pre;
            g[h * d + h + j] = r * act[j];
        }
        g[h * d + 2 * h] = r;
        GradientVector::new(g)
    }
}

/// Reference model selector used by the CLI and the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ModelKind {
    Linear,
    Logistic,
    Mlp { hidden: usize },
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    /// Accepts `linear`, `logistic`, `mlp` (8 hidden units) or `mlp:<n>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "logistic" => Ok(ModelKind::Logistic),
            "mlp" => Ok(ModelKind::Mlp { hidden: 8 }),
            _ => match s.strip_prefix("mlp:").map(str::parse::<usize>) {
                Some(Ok(hidden)) if hidden > 0 => Ok(ModelKind::Mlp { hidden }),
                _ => Err(format!(
                    "unknown model {s:?}; expected linear, logistic, mlp or mlp:<hidden>"
                )),
            },
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Linear => f.write_str("linear"),
            ModelKind::Logistic => f.write_str("logistic"),
            ModelKind::Mlp { hidden } => write!(f, "mlp:{hidden}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceModel {
    Linear(LinearRegression),
    Logistic(LogisticRegression),
    Mlp(TanhNetwork),
}

impl ReferenceModel {
    pub fn new(kind: ModelKind, input_dim: usize) -> Self {
        match kind {
            ModelKind::Linear => ReferenceModel::Linear(LinearRegression { input_dim }),
            ModelKind::Logistic => ReferenceModel::Logistic(LogisticRegression { input_dim }),
            ModelKind::Mlp { hidden } => ReferenceModel::Mlp(TanhNetwork { input_dim, hidden }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ReferenceModel::Linear(_) => ModelKind::Linear,
            ReferenceModel::Logistic(_) => ModelKind::Logistic,
            ReferenceModel::Mlp(m) => ModelKind::Mlp { hidden: m.hidden },
        }
    }

    /// Zeros for the convex models; small Gaussian weights for the network so
    /// that hidden units are not symmetric.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        match self {
            ReferenceModel::Linear(m) => ParameterVector::zeros(m.input_dim),
            ReferenceModel::Logistic(m) => ParameterVector::zeros(m.input_dim),
            ReferenceModel::Mlp(m) => {
                let normal = Normal::new(0.0, 1.0 / (m.input_dim as f64).sqrt()).unwrap();
                let v = (0..m.param_dim()).map(|_| normal.sample(rng)).collect();
                ParameterVector::new(v).expect("gaussian draws are finite")
            }
        }
    }

    /// Model output: `w·x` for the linear model and the network, the
    /// positive-class probability for logistic regression.
    pub fn predict(&self, params: &ParameterVector, x: &Example) -> f64 {
        match self {
            ReferenceModel::Linear(_) => dot(params.as_slice(), &x.features),
            ReferenceModel::Logistic(_) => sigmoid(dot(params.as_slice(), &x.features)),
            ReferenceModel::Mlp(m) => m.forward(params.as_slice(), &x.features).1,
        }
    }

    fn inner(&self) -> &dyn DifferentiableModel {
        match self {
            ReferenceModel::Linear(m) => m,
            ReferenceModel::Logistic(m) => m,
            ReferenceModel::Mlp(m) => m,
        }
    }
}

impl DifferentiableModel for ReferenceModel {
    fn param_dim(&self) -> usize {
        self.inner().param_dim()
    }

    fn loss(&self, params: &ParameterVector, x: &Example) -> Result<f64, InfluenceError> {
        self.inner().loss(params, x)
    }

    fn gradient(
        &self,
        params: &ParameterVector,
        x: &Example,
    ) -> Result<GradientVector, InfluenceError> {
        self.inner().gradient(params, x)
    }

    fn hessian_vector_product(
        &self,
        params: &ParameterVector,
        x: &Example,
        v: &[f64],
    ) -> Option<Result<Vec<f64>, InfluenceError>> {
        self.inner().hessian_vector_product(params, x, v)
    }
}
