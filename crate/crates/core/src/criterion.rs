//! Optimality criteria, equivalence-theorem directional derivatives and
//! efficiency measures.
//!
//! Losses are always on the scale used for efficiencies: the D loss is
//! `det(M^{-1})^{1/q}` (computed from `log det M`), the trace-class loss is
//! `tr(C' M^{-1} C)`. Singular matrices get an infinite loss so optimizers can
//! reject them without branching on errors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{info_matrix, ApproximateDesign, ExactDesign, InformationMatrix, WeightedPoints};
use crate::error::{DesignError, Result};
use crate::linalg::SpdFactor;
use crate::model::ModelSpec;

/// Scalar loss applied to the inverse information matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// `det(M^{-1})^{1/q}`.
    D,
    /// `tr(C' M^{-1} C)` with `C` of shape `q x r`, stored row-major.
    TraceC { q: usize, r: usize, c: Vec<f64> },
}

impl Criterion {
    /// A-optimality: `C = I_q`.
    pub fn a_optimality(q: usize) -> Self {
        let mut c = vec![0.0; q * q];
        for i in 0..q {
            c[i * q + i] = 1.0;
        }
        Criterion::TraceC { q, r: q, c }
    }

    /// c-optimality for a single vector `c`.
    pub fn c_optimality(c: Vec<f64>) -> Result<Self> {
        let q = c.len();
        Self::trace(q, 1, c)
    }

    /// General trace criterion with `C` given row-major.
    pub fn trace(q: usize, r: usize, c: Vec<f64>) -> Result<Self> {
        if r == 0 || r > q {
            return Err(DesignError::InvalidCriterion(format!(
                "C must have 1 <= r <= q columns (q={q}, r={r})"
            )));
        }
        if c.len() != q * r {
            return Err(DesignError::InvalidCriterion(format!(
                "C has {} entries, expected {}",
                c.len(),
                q * r
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(DesignError::InvalidCriterion("non-finite entry in C".into()));
        }
        if c.iter().all(|v| *v == 0.0) {
            return Err(DesignError::InvalidCriterion("C is zero".into()));
        }
        Ok(Criterion::TraceC { q, r, c })
    }

    /// Checks that the criterion fits a `q`-parameter model.
    pub fn check_dim(&self, q: usize) -> Result<()> {
        match self {
            Criterion::D => Ok(()),
            Criterion::TraceC { q: cq, .. } if *cq == q => Ok(()),
            Criterion::TraceC { q: cq, .. } => Err(DesignError::InvalidCriterion(format!(
                "C has {cq} rows but the model has {q} parameters"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::D => "D",
            Criterion::TraceC { q, r, c } => {
                if *r == 1 {
                    "c"
                } else if q == r && is_identity(*q, c) {
                    "A"
                } else {
                    "trace"
                }
            }
        }
    }

    /// Criterion loss of an information matrix, infinite when singular.
    pub fn loss(&self, m: &InformationMatrix) -> f64 {
        match CriterionState::new(self, &m.row_major(), m.dim()) {
            Ok(s) => s.loss(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Criterion loss of a design under a model.
    pub fn design_loss<D: WeightedPoints + ?Sized>(&self, model: &ModelSpec, design: &D) -> Result<f64> {
        self.check_dim(model.q())?;
        Ok(self.loss(&info_matrix(model, design)?))
    }
}

fn is_identity(q: usize, c: &[f64]) -> bool {
    (0..q).all(|i| (0..q).all(|j| c[i * q + j] == if i == j { 1.0 } else { 0.0 }))
}

/// A factored information matrix with everything needed to evaluate the loss
/// and directional derivatives at many points.
#[derive(Debug, Clone)]
pub struct CriterionState {
    factor: SpdFactor,
    loss: f64,
    /// `M^{-1} C`, row-major `q x r` (trace criteria only).
    minv_c: Option<(usize, Vec<f64>)>,
}

impl CriterionState {
    /// Factors a row-major `q x q` information matrix.
    pub fn new(criterion: &Criterion, m: &[f64], q: usize) -> Result<Self> {
        let factor = SpdFactor::from_row_major(q, m).ok_or(DesignError::SingularInformation)?;
        match criterion {
            Criterion::D => {
                let loss = (-factor.logdet() / q as f64).exp();
                Ok(CriterionState {
                    factor,
                    loss,
                    minv_c: None,
                })
            }
            Criterion::TraceC { q: cq, r, c } => {
                if *cq != q {
                    return Err(DesignError::InvalidCriterion(format!(
                        "C has {cq} rows but the matrix is {q} x {q}"
                    )));
                }
                let r = *r;
                let mut minv_c = vec![0.0; q * r];
                let mut col = vec![0.0; q];
                let mut loss = 0.0;
                for k in 0..r {
                    for i in 0..q {
                        col[i] = c[i * r + k];
                    }
                    let ck = col.clone();
                    self::solve(&factor, &mut col);
                    for i in 0..q {
                        minv_c[i * r + k] = col[i];
                        loss += ck[i] * col[i];
                    }
                }
                if !(loss > 0.0) || !loss.is_finite() {
                    return Err(DesignError::SingularInformation);
                }
                Ok(CriterionState {
                    factor,
                    loss,
                    minv_c: Some((r, minv_c)),
                })
            }
        }
    }

    pub fn from_information(criterion: &Criterion, m: &InformationMatrix) -> Result<Self> {
        Self::new(criterion, &m.row_major(), m.dim())
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// `g' M^{-1} g` for D, `g' M^{-1} C C' M^{-1} g` for trace criteria,
    /// where `g = sqrt(lambda) f`.
    pub fn sensitivity(&self, g: &[f64]) -> f64 {
        match &self.minv_c {
            None => self.factor.quad_form(g),
            Some((r, a)) => {
                let r = *r;
                let q = g.len();
                let mut total = 0.0;
                for k in 0..r {
                    let mut s = 0.0;
                    for i in 0..q {
                        s += a[i * r + k] * g[i];
                    }
                    total += s * s;
                }
                total
            }
        }
    }

    /// The constant subtracted from the sensitivity in the equivalence
    /// condition: `q` for D, the loss itself for trace criteria.
    pub fn offset(&self) -> f64 {
        match &self.minv_c {
            None => self.factor.dim() as f64,
            Some(_) => self.loss,
        }
    }

    /// Directional derivative `d(x, design)` for the scaled regressor `g`.
    pub fn derivative(&self, g: &[f64]) -> f64 {
        self.sensitivity(g) - self.offset()
    }

    /// Scale that turns the sensitivity into the derivative of `log(loss)`:
    /// `d log(loss) / d w_j = -sensitivity_j / log_scale`.
    pub fn log_scale(&self) -> f64 {
        self.offset()
    }
}

fn solve(factor: &SpdFactor, b: &mut [f64]) {
    factor.solve_in_place(b)
}

/// Criterion loss of an information matrix (infinite when singular).
pub fn criterion_loss(criterion: &Criterion, m: &InformationMatrix) -> f64 {
    criterion.loss(m)
}

/// Equivalence-theorem directional derivative of the design at `x`.
pub fn directional_derivative(
    criterion: &Criterion,
    model: &ModelSpec,
    design: &ApproximateDesign,
    x: &[f64],
) -> Result<f64> {
    criterion.check_dim(model.q())?;
    let m = info_matrix(model, design)?;
    let state = CriterionState::from_information(criterion, &m)?;
    let g = model.scaled_regressor(x)?;
    Ok(state.derivative(g.as_slice()))
}

/// `reference_loss / loss(design)`.
pub fn efficiency<D: WeightedPoints + ?Sized>(
    criterion: &Criterion,
    model: &ModelSpec,
    design: &D,
    reference_loss: f64,
) -> Result<f64> {
    if !(reference_loss > 0.0) {
        return Err(DesignError::InvalidCriterion(format!(
            "reference loss must be positive, got {reference_loss}"
        )));
    }
    let loss = criterion.design_loss(model, design)?;
    Ok(reference_loss / loss)
}

/// `loss(approx_ref) / loss(exact)`; may exceed one.
pub fn modified_efficiency(
    criterion: &Criterion,
    model: &ModelSpec,
    exact: &ExactDesign,
    approx_ref: &ApproximateDesign,
) -> Result<f64> {
    let num = criterion.design_loss(model, approx_ref)?;
    let den = criterion.design_loss(model, exact)?;
    if !num.is_finite() || !den.is_finite() {
        return Err(DesignError::SingularInformation);
    }
    Ok(num / den)
}

/// `min_i reference_i / loss_i` over `(loss, reference)` pairs.
pub fn min_efficiency(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(DesignError::InvalidCriterion("no objectives".into()));
    }
    let mut min = f64::INFINITY;
    for &(loss, reference) in pairs {
        if !(reference > 0.0) {
            return Err(DesignError::InvalidCriterion(format!(
                "reference loss must be positive, got {reference}"
            )));
        }
        min = min.min(reference / loss);
    }
    Ok(min)
}

/// Dense `C` matrix of a criterion (for reports).
pub fn c_matrix(criterion: &Criterion) -> Option<DMatrix<f64>> {
    match criterion {
        Criterion::D => None,
        Criterion::TraceC { q, r, c } => Some(DMatrix::from_row_slice(*q, *r, c)),
    }
}
