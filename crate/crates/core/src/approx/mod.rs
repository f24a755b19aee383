//! Optimal approximate designs on a finite candidate set.

pub mod engine;
mod maximin;

use serde::{Deserialize, Serialize};

use crate::criterion::{Criterion, CriterionState};
use crate::design::{info_matrix, ApproximateDesign};
use crate::error::{DesignError, Result};
use crate::model::ModelSpec;

use engine::{optimize, CandidateMatrix, EngineOptions, SingleObjective};
pub use maximin::{solve_maximin, MaximinProblem};

/// Largest admissible pruning threshold.
pub const MAX_PRUNE_THRESHOLD: f64 = 0.003;
/// Prune-and-repolish rounds after the main solve.
const POLISH_ROUNDS: usize = 3;

/// Stopping and pruning controls. A `None` tolerance is resolved per problem
/// by [`ApproxSolveOptions::resolve_tolerance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApproxSolveOptions {
    pub eq_tolerance: Option<f64>,
    pub max_iterations: usize,
    pub prune_threshold: f64,
}

impl Default for ApproxSolveOptions {
    fn default() -> Self {
        ApproxSolveOptions {
            eq_tolerance: None,
            max_iterations: 20_000,
            prune_threshold: 1e-4,
        }
    }
}

impl ApproxSolveOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.eq_tolerance {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(DesignError::InvalidOptions(format!(
                    "eq_tolerance must be positive, got {eps}"
                )));
            }
        }
        if !(self.prune_threshold >= 0.0 && self.prune_threshold < MAX_PRUNE_THRESHOLD) {
            return Err(DesignError::InvalidOptions(format!(
                "prune_threshold must lie in [0, {MAX_PRUNE_THRESHOLD}), got {}",
                self.prune_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(DesignError::InvalidOptions("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Explicit tolerance, or the default: `1e-5 q` for D (whose derivative is
    /// scale free) and `1e-5` times the uniform-design loss for trace criteria.
    pub fn resolve_tolerance(&self, criterion: &Criterion, q: usize, uniform_loss: f64) -> f64 {
        match (self.eq_tolerance, criterion) {
            (Some(eps), _) => eps,
            (None, Criterion::D) => 1e-5 * q as f64,
            (None, Criterion::TraceC { .. }) => 1e-5 * uniform_loss,
        }
    }
}

/// Outcome of an approximate solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub criterion: String,
    /// Final criterion loss; for maximin problems, minus the minimum efficiency.
    pub loss: f64,
    pub max_derivative: f64,
    pub argmax: Vec<f64>,
    pub min_support_derivative: f64,
    pub eq_tolerance: f64,
    pub iterations: usize,
    /// Whether the equivalence condition held within tolerance.
    pub verified: bool,
    pub candidate_count: usize,
    pub support_size: usize,
    /// Loss at the start of each outer iteration of the main solve.
    pub history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiencies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_efficiency: Option<f64>,
}

/// Optimal approximate design for one criterion over `candidates`, starting
/// from uniform weights.
pub fn solve_single(
    model: &ModelSpec,
    criterion: &Criterion,
    candidates: &[Vec<f64>],
    opts: &ApproxSolveOptions,
) -> Result<(ApproximateDesign, SolveReport)> {
    opts.validate()?;
    criterion.check_dim(model.q())?;
    check_candidates(model, candidates)?;
    let cands = CandidateMatrix::new(model, candidates)?;
    let obj = SingleObjective {
        cands: &cands,
        criterion,
    };
    let n = candidates.len();
    let q = model.q();
    let uniform = vec![1.0 / n as f64; n];
    let uniform_state = CriterionState::new(criterion, &cands.information(&uniform), q).map_err(|_| {
        DesignError::Infeasible(format!(
            "no weighting of the {n} candidates gives an invertible information matrix"
        ))
    })?;
    let eps = opts.resolve_tolerance(criterion, q, uniform_state.loss());
    let eopts = EngineOptions {
        eq_tolerance: eps,
        max_iterations: opts.max_iterations,
    };

    let main = optimize(&obj, uniform, eopts)?;
    let to_loss = |f: f64| match criterion {
        Criterion::D => (f / q as f64).exp(),
        Criterion::TraceC { .. } => f,
    };
    let history: Vec<f64> = main.history.iter().map(|&f| to_loss(f)).collect();
    let mut iterations = main.iterations;
    let mut outcome = main;

    for _ in 0..POLISH_ROUNDS {
        if !outcome
            .weights
            .iter()
            .any(|&w| w > 0.0 && w < opts.prune_threshold)
        {
            break;
        }
        let pruned = prune_weights(&outcome.weights, opts.prune_threshold);
        if obj_state_singular(&obj, &pruned) {
            break;
        }
        outcome = optimize(&obj, pruned, eopts)?;
        iterations += outcome.iterations;
    }

    let (points, weights): (Vec<Vec<f64>>, Vec<f64>) = outcome
        .weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(j, &w)| (candidates[j].clone(), w))
        .unzip();
    let design = ApproximateDesign::new(points, weights)?;
    let loss = criterion.design_loss(model, &design)?;
    let report = SolveReport {
        criterion: criterion.name().to_string(),
        loss,
        max_derivative: outcome.max_derivative,
        argmax: candidates[outcome.argmax].clone(),
        min_support_derivative: outcome.min_support_derivative,
        eq_tolerance: eps,
        iterations,
        verified: outcome.converged,
        candidate_count: n,
        support_size: design.len(),
        history,
        efficiencies: None,
        min_efficiency: None,
    };
    Ok((design, report))
}

fn obj_state_singular(obj: &SingleObjective<'_>, w: &[f64]) -> bool {
    use engine::SimplexObjective;
    obj.state(w).is_none()
}

/// Drops weights below `threshold` and renormalizes.
pub(crate) fn prune_weights(w: &[f64], threshold: f64) -> Vec<f64> {
    let mut out: Vec<f64> = w.iter().map(|&x| if x < threshold { 0.0 } else { x }).collect();
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    }
    out
}

pub(crate) fn check_candidates(model: &ModelSpec, candidates: &[Vec<f64>]) -> Result<()> {
    if candidates.is_empty() {
        return Err(DesignError::Infeasible("empty candidate set".into()));
    }
    for c in candidates {
        if c.len() != model.p() {
            return Err(DesignError::DimensionMismatch {
                expected: model.p(),
                got: c.len(),
            });
        }
    }
    if candidates.len() < model.q() {
        return Err(DesignError::Infeasible(format!(
            "{} candidates cannot support {} parameters",
            candidates.len(),
            model.q()
        )));
    }
    Ok(())
}

/// Directional derivative of `design` at every candidate.
pub fn derivative_profile(
    model: &ModelSpec,
    criterion: &Criterion,
    design: &ApproximateDesign,
    candidates: &[Vec<f64>],
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    criterion.check_dim(model.q())?;
    let m = info_matrix(model, design)?;
    let state = CriterionState::from_information(criterion, &m)?;
    candidates
        .par_iter()
        .map(|x| {
            let g = model.scaled_regressor(x)?;
            Ok(state.derivative(g.as_slice()))
        })
        .collect()
}

/// Largest directional derivative over `candidates` and the first candidate
/// attaining it.
pub fn verify_equivalence(
    model: &ModelSpec,
    criterion: &Criterion,
    design: &ApproximateDesign,
    candidates: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    check_candidates(model, candidates)?;
    let d = derivative_profile(model, criterion, design, candidates)?;
    let (j, max_d) = engine::argmax(&d);
    Ok((max_d, candidates[j].clone()))
}

/// Lower bound on D-efficiency relative to the candidate-set optimum implied
/// by a maximum directional derivative.
pub fn d_efficiency_bound(q: usize, max_derivative: f64) -> f64 {
    q as f64 / (q as f64 + max_derivative.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PresetId;
    use crate::space::DesignSpace;

    fn line() -> ModelSpec {
        ModelSpec::new(PresetId::PolyLinear, vec![0.0, 0.0]).unwrap()
    }

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn group() -> ModelSpec {
        ModelSpec::new(PresetId::GroupTesting, vec![0.07, 0.93, 0.96]).unwrap()
    }

    fn integers() -> Vec<Vec<f64>> {
        DesignSpace::integer_range(1, 61).unwrap().enumerate_grid().unwrap()
    }

    #[test]
    fn line_d_optimum_is_endpoints() {
        let (design, report) =
            solve_single(&line(), &Criterion::D, &pts(&[-1.0, 0.0, 1.0]), &Default::default()).unwrap();
        assert_eq!(design.points(), &[vec![-1.0], vec![1.0]]);
        assert!((design.weights()[0] - 0.5).abs() < 1e-9);
        assert!((report.loss - 1.0).abs() < 1e-9);
        assert!(report.verified);
    }

    #[test]
    fn uniform_line_design_is_not_optimal() {
        let design = ApproximateDesign::uniform(pts(&[-1.0, 0.0, 1.0])).unwrap();
        let (max_d, at) = verify_equivalence(&line(), &Criterion::D, &design, &pts(&[-1.0, 0.0, 1.0])).unwrap();
        assert!((max_d - 0.5).abs() < 1e-12);
        assert_eq!(at, vec![-1.0]);
    }

    #[test]
    fn d_bound_holds_for_suboptimal_design() {
        // Uniform on {-1, 0, 1}: max_d = 1/2 gives the bound 0.8, true efficiency sqrt(2/3).
        let cands = pts(&[-1.0, 0.0, 1.0]);
        let design = ApproximateDesign::uniform(cands.clone()).unwrap();
        let (max_d, _) = verify_equivalence(&line(), &Criterion::D, &design, &cands).unwrap();
        let bound = d_efficiency_bound(2, max_d);
        let eff = 1.0 / Criterion::D.design_loss(&line(), &design).unwrap();
        assert!((bound - 0.8).abs() < 1e-12);
        assert!((eff - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(eff >= bound);
    }

    #[test]
    fn optimum_line_design_certified() {
        let design = ApproximateDesign::new(pts(&[-1.0, 1.0]), vec![0.5, 0.5]).unwrap();
        let (max_d, _) = verify_equivalence(&line(), &Criterion::D, &design, &pts(&[-1.0, 0.0, 1.0])).unwrap();
        assert!(max_d.abs() < 1e-12);
    }

    #[test]
    fn group_testing_d_optimum() {
        let (design, report) = solve_single(&group(), &Criterion::D, &integers(), &Default::default()).unwrap();
        assert_eq!(design.points(), &[vec![1.0], vec![17.0], vec![61.0]]);
        for w in design.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-3);
        }
        assert_eq!(format!("{:.4}", report.loss), "0.1448");
        assert!(report.verified);
        assert!(report.history.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn group_testing_c_optimum() {
        let c = Criterion::c_optimality(vec![1.0, 0.0, 0.0]).unwrap();
        let (design, report) = solve_single(&group(), &c, &integers(), &Default::default()).unwrap();
        assert_eq!(design.points(), &[vec![1.0], vec![16.0], vec![61.0]]);
        for (w, e) in design.weights().iter().zip([0.1310, 0.6279, 0.2411]) {
            assert!((w - e).abs() < 2e-3, "{w} vs {e}");
        }
        assert!((report.loss - 0.0354).abs() < 5e-4);
        assert!(report.verified);
    }

    #[test]
    fn a_criterion_on_line() {
        // A-optimum for (1, x) on {-1, 0, 1} is symmetric on the endpoints.
        let a = Criterion::a_optimality(2);
        let (design, report) = solve_single(&line(), &a, &pts(&[-1.0, 0.0, 1.0]), &Default::default()).unwrap();
        assert_eq!(design.len(), 2);
        assert!((report.loss - 2.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_invalid_options() {
        let err = solve_single(&line(), &Criterion::D, &pts(&[1.0]), &Default::default()).unwrap_err();
        assert!(matches!(err, DesignError::Infeasible(_)));
        let err = solve_single(&line(), &Criterion::D, &pts(&[1.0, 1.0]), &Default::default()).unwrap_err();
        assert!(matches!(err, DesignError::Infeasible(_)));
        let bad = ApproxSolveOptions {
            prune_threshold: 0.003,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ApproxSolveOptions {
            eq_tolerance: Some(0.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn iteration_budget_reports_unverified() {
        let opts = ApproxSolveOptions {
            max_iterations: 1,
            eq_tolerance: Some(1e-12),
            ..Default::default()
        };
        let (_, report) = solve_single(&group(), &Criterion::D, &integers(), &opts).unwrap();
        assert!(!report.verified);
    }

    #[test]
    fn d_bound_holds_on_converged_runs() {
        let (design, report) = solve_single(&group(), &Criterion::D, &integers(), &Default::default()).unwrap();
        let bound = d_efficiency_bound(3, report.max_derivative);
        let eff = report.loss / Criterion::D.design_loss(&group(), &design).unwrap();
        assert!(eff >= bound - 1e-12);
    }
}
