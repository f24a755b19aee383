//! Regression and GLM model definitions.
//!
//! A model contributes two ingredients to the information matrix of a design:
//! the regressor vector `f(x)` (for nonlinear mean functions, the gradient of
//! the mean with respect to the parameters, evaluated at `theta`) and a
//! nonnegative information weight `lambda(x)`. Linear-model families use
//! `lambda == 1`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};

/// Built-in model families addressable by string id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetId {
    /// Two-variable logistic model with interaction, `f = (1, x1, x2, x1*x2)`.
    Logit2Interaction,
    /// Group-testing prevalence model, `theta = (p0, p1, p2)`.
    GroupTesting,
    /// Seven-variable main-effects logistic model.
    Logit7,
    /// `eta = t0 + t1*x`.
    DoseLinear,
    /// `eta = t0 + t1*x/(t2 + x)`.
    DoseEmax,
    /// `eta = t0 + t1/(1 + exp((t2 - x)/t3))`.
    DoseLogistic,
    /// Univariate polynomial regression of degree `q - 1`.
    PolyLinear,
}

impl PresetId {
    pub const ALL: [PresetId; 7] = [
        PresetId::Logit2Interaction,
        PresetId::GroupTesting,
        PresetId::Logit7,
        PresetId::DoseLinear,
        PresetId::DoseEmax,
        PresetId::DoseLogistic,
        PresetId::PolyLinear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetId::Logit2Interaction => "logit2_interaction",
            PresetId::GroupTesting => "group_testing",
            PresetId::Logit7 => "logit7",
            PresetId::DoseLinear => "dose_linear",
            PresetId::DoseEmax => "dose_emax",
            PresetId::DoseLogistic => "dose_logistic",
            PresetId::PolyLinear => "poly_linear",
        }
    }

    /// Design-point dimension.
    pub fn point_dim(self) -> usize {
        match self {
            PresetId::Logit2Interaction => 2,
            PresetId::Logit7 => 7,
            _ => 1,
        }
    }

    /// Parameter count, or `None` when it is taken from `theta` (polynomial).
    pub fn param_dim(self) -> Option<usize> {
        match self {
            PresetId::Logit2Interaction => Some(4),
            PresetId::GroupTesting => Some(3),
            PresetId::Logit7 => Some(8),
            PresetId::DoseLinear => Some(2),
            PresetId::DoseEmax => Some(3),
            PresetId::DoseLogistic => Some(4),
            PresetId::PolyLinear => None,
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetId {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        PresetId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| DesignError::UnknownPreset(s.to_string()))
    }
}

/// A model bound to its local parameter value `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    preset: PresetId,
    theta: Vec<f64>,
}

impl ModelSpec {
    pub fn new(preset: PresetId, theta: Vec<f64>) -> Result<Self> {
        let expected = preset.param_dim();
        if let Some(expected) = expected {
            if theta.len() != expected {
                return Err(DesignError::ParameterCount {
                    preset: preset.to_string(),
                    expected,
                    got: theta.len(),
                });
            }
        } else if theta.is_empty() {
            return Err(DesignError::InvalidParameters(
                "poly_linear needs at least one parameter".into(),
            ));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(DesignError::InvalidParameters("non-finite parameter".into()));
        }
        match preset {
            PresetId::GroupTesting => {
                let (p0, p1, p2) = (theta[0], theta[1], theta[2]);
                if !(0.0 < p0 && p0 < 1.0) {
                    return Err(DesignError::InvalidParameters(format!(
                        "group testing prevalence p0={p0} must lie in (0, 1)"
                    )));
                }
                if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
                    return Err(DesignError::InvalidParameters(
                        "group testing sensitivity/specificity must lie in [0, 1]".into(),
                    ));
                }
            }
            PresetId::DoseLogistic if theta[3] == 0.0 => {
                return Err(DesignError::InvalidParameters(
                    "dose_logistic scale parameter must be nonzero".into(),
                ));
            }
            _ => {}
        }
        Ok(ModelSpec { preset, theta })
    }

    pub fn preset(&self) -> PresetId {
        self.preset
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Dimension of a design point.
    pub fn p(&self) -> usize {
        self.preset.point_dim()
    }

    /// Number of parameters.
    pub fn q(&self) -> usize {
        self.theta.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p() {
            return Err(DesignError::DimensionMismatch {
                expected: self.p(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Regressor vector `f(x)` of length `q`.
    pub fn regressor(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let t = &self.theta;
        let f = match self.preset {
            PresetId::Logit2Interaction => {
                DVector::from_vec(vec![1.0, x[0], x[1], x[0] * x[1]])
            }
            PresetId::Logit7 => {
                let mut v = Vec::with_capacity(8);
                v.push(1.0);
                v.extend_from_slice(x);
                DVector::from_vec(v)
            }
            PresetId::GroupTesting => {
                let (p0, p1, p2) = (t[0], t[1], t[2]);
                let s = 1.0 - p0;
                let sx = s.powf(x[0]);
                DVector::from_vec(vec![
                    x[0] * (p1 + p2 - 1.0) * s.powf(x[0] - 1.0),
                    1.0 - sx,
                    -sx,
                ])
            }
            PresetId::DoseLinear => DVector::from_vec(vec![1.0, x[0]]),
            PresetId::DoseEmax => {
                let denom = t[2] + x[0];
                DVector::from_vec(vec![1.0, x[0] / denom, -t[1] * x[0] / (denom * denom)])
            }
            PresetId::DoseLogistic => {
                let (t1, t2, t3) = (t[1], t[2], t[3]);
                let u = (t2 - x[0]) / t3;
                // g = 1/(1+e^u), dg/du = -e^u/(1+e^u)^2 = -g(1-g)
                let g = logistic(-u);
                let dg_du = -g * (1.0 - g);
                DVector::from_vec(vec![
                    1.0,
                    g,
                    t1 * dg_du / t3,
                    -t1 * dg_du * (t2 - x[0]) / (t3 * t3),
                ])
            }
            PresetId::PolyLinear => {
                let q = self.q();
                let mut v = Vec::with_capacity(q);
                let mut pow = 1.0;
                for _ in 0..q {
                    v.push(pow);
                    pow *= x[0];
                }
                DVector::from_vec(v)
            }
        };
        Ok(f)
    }

    /// Response probability of the group-testing model, `pi(x)`.
    pub fn group_positive_probability(&self, x: f64) -> Option<f64> {
        if self.preset != PresetId::GroupTesting {
            return None;
        }
        let (p0, p1, p2) = (self.theta[0], self.theta[1], self.theta[2]);
        Some(p1 - (p1 + p2 - 1.0) * (1.0 - p0).powf(x))
    }

    /// Information weight `lambda(x, theta)`.
    pub fn info_weight(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match self.preset {
            PresetId::Logit2Interaction | PresetId::Logit7 => {
                let f = self.regressor(x)?;
                let eta: f64 = f.iter().zip(&self.theta).map(|(a, b)| a * b).sum();
                let p = logistic(eta);
                Ok(p * (1.0 - p))
            }
            PresetId::GroupTesting => {
                let pi = self.group_positive_probability(x[0]).unwrap_or(f64::NAN);
                if !(pi > 0.0 && pi < 1.0) {
                    return Err(DesignError::DegenerateProbability {
                        pi,
                        point: x.to_vec(),
                    });
                }
                Ok(1.0 / (pi * (1.0 - pi)))
            }
            _ => Ok(1.0),
        }
    }

    /// `sqrt(lambda) * f(x)`, the vector whose outer product is the
    /// single-point information matrix.
    pub fn scaled_regressor(&self, x: &[f64]) -> Result<DVector<f64>> {
        let lam = self.info_weight(x)?;
        let mut f = self.regressor(x)?;
        f *= lam.sqrt();
        if f.iter().any(|v| !v.is_finite()) {
            return Err(DesignError::InvalidParameters(format!(
                "non-finite regressor at {x:?}"
            )));
        }
        Ok(f)
    }
}

/// Builds a preset model from its id and parameter vector.
pub fn make_preset(id: &str, theta: Vec<f64>) -> Result<ModelSpec> {
    ModelSpec::new(id.parse()?, theta)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
