//! Maximin-efficiency designs.
//!
//! The non-smooth objective `min_i Eff_i(w)` is replaced by the soft minimum
//! `-(1/beta) ln sum_i exp(-beta Eff_i)`, whose negative is convex because
//! each efficiency is concave in the weights. The engine is run along an
//! increasing sequence of `beta`, warm-starting each stage.

use serde::{Deserialize, Serialize};

use super::engine::{optimize, CandidateMatrix, ComponentState, EngineOptions, SimplexObjective};
use super::{check_candidates, prune_weights, ApproxSolveOptions, SolveReport};
use crate::criterion::Criterion;
use crate::design::ApproximateDesign;
use crate::error::{DesignError, Result};
use crate::model::ModelSpec;

const BETA_SCHEDULE: [f64; 5] = [10.0, 100.0, 1e3, 1e4, 1e5];
/// Default tolerance on the soft-min derivative (efficiency units).
const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximinProblem {
    pub objectives: Vec<(ModelSpec, Criterion)>,
    pub reference_losses: Vec<f64>,
}

impl MaximinProblem {
    pub fn new(objectives: Vec<(ModelSpec, Criterion)>, reference_losses: Vec<f64>) -> Result<Self> {
        let p = MaximinProblem {
            objectives,
            reference_losses,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objectives.len() < 2 {
            return Err(DesignError::InvalidCriterion(
                "a maximin problem needs at least two objectives".into(),
            ));
        }
        if self.objectives.len() != self.reference_losses.len() {
            return Err(DesignError::InvalidCriterion(format!(
                "{} objectives but {} reference losses",
                self.objectives.len(),
                self.reference_losses.len()
            )));
        }
        for (i, r) in self.reference_losses.iter().enumerate() {
            if !(*r > 0.0) || !r.is_finite() {
                return Err(DesignError::InvalidCriterion(format!(
                    "objective {i}: reference loss must be positive, got {r}"
                )));
            }
        }
        let p = self.objectives[0].0.p();
        for (i, (model, criterion)) in self.objectives.iter().enumerate() {
            if model.p() != p {
                return Err(DesignError::InvalidCriterion(format!(
                    "objective {i}: design points have {} coordinates, expected {p}",
                    model.p()
                )));
            }
            criterion
                .check_dim(model.q())
                .map_err(|e| DesignError::InvalidCriterion(format!("objective {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    /// Per-objective efficiencies of a design.
    pub fn efficiencies(&self, design: &ApproximateDesign) -> Result<Vec<f64>> {
        self.objectives
            .iter()
            .zip(&self.reference_losses)
            .map(|((m, c), r)| Ok(r / c.design_loss(m, design)?))
            .collect()
    }
}

struct SoftMin<'a> {
    cands: Vec<CandidateMatrix>,
    criteria: Vec<&'a Criterion>,
    refs: &'a [f64],
    beta: f64,
}

#[derive(Clone)]
struct SoftState {
    parts: Vec<ComponentState>,
    eff: Vec<f64>,
    /// Soft-min weights `pi_i`.
    pi: Vec<f64>,
    value: f64,
}

impl SoftMin<'_> {
    fn assemble(&self, parts: Vec<ComponentState>) -> SoftState {
        let eff: Vec<f64> = parts
            .iter()
            .zip(self.refs)
            .map(|(p, r)| r / p.crit.loss())
            .collect();
        let m = eff.iter().copied().fold(f64::INFINITY, f64::min);
        let ex: Vec<f64> = eff.iter().map(|e| (-self.beta * (e - m)).exp()).collect();
        let z: f64 = ex.iter().sum();
        let pi = ex.iter().map(|x| x / z).collect();
        let value = -m + z.ln() / self.beta;
        SoftState { parts, eff, pi, value }
    }
}

impl SimplexObjective for SoftMin<'_> {
    type State = SoftState;

    fn candidate_count(&self) -> usize {
        self.cands[0].len()
    }

    fn state(&self, w: &[f64]) -> Option<SoftState> {
        let parts = self
            .cands
            .iter()
            .zip(&self.criteria)
            .map(|(c, k)| ComponentState::new(c, k, c.information(w)))
            .collect::<Option<Vec<_>>>()?;
        Some(self.assemble(parts))
    }

    fn value(&self, s: &SoftState) -> f64 {
        s.value
    }

    fn sensitivity(&self, s: &SoftState, j: usize) -> f64 {
        let mut total = 0.0;
        for (i, part) in s.parts.iter().enumerate() {
            let sens = part.crit.sensitivity(self.cands[i].row(j));
            total += s.pi[i] * s.eff[i] * sens / part.crit.log_scale();
        }
        total
    }

    fn exchanged(&self, s: &SoftState, k: usize, l: usize, delta: f64) -> Option<SoftState> {
        let parts = s
            .parts
            .iter()
            .zip(self.cands.iter().zip(&self.criteria))
            .map(|(p, (c, crit))| ComponentState::new(c, crit, c.exchanged(&p.matrix, k, l, delta)))
            .collect::<Option<Vec<_>>>()?;
        Some(self.assemble(parts))
    }
}

/// Design maximizing the minimum efficiency over all objectives.
pub fn solve_maximin(
    problem: &MaximinProblem,
    candidates: &[Vec<f64>],
    opts: &ApproxSolveOptions,
) -> Result<(ApproximateDesign, SolveReport)> {
    opts.validate()?;
    problem.validate()?;
    let mut cands = Vec::with_capacity(problem.len());
    for (i, (model, _)) in problem.objectives.iter().enumerate() {
        check_candidates(model, candidates)
            .and_then(|_| CandidateMatrix::new(model, candidates))
            .map(|c| cands.push(c))
            .map_err(|e| DesignError::Infeasible(format!("objective {i}: {e}")))?;
    }
    let n = candidates.len();
    let mut obj = SoftMin {
        cands,
        criteria: problem.objectives.iter().map(|(_, c)| c).collect(),
        refs: &problem.reference_losses,
        beta: BETA_SCHEDULE[0],
    };
    let eps = opts.eq_tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let eopts = EngineOptions {
        eq_tolerance: eps,
        max_iterations: opts.max_iterations,
    };

    let mut w = vec![1.0 / n as f64; n];
    for (i, (c, crit)) in obj.cands.iter().zip(&obj.criteria).enumerate() {
        if ComponentState::new(c, crit, c.information(&w)).is_none() {
            return Err(DesignError::Infeasible(format!(
                "objective {i}: no weighting of the candidates gives an invertible information matrix"
            )));
        }
    }

    let mut iterations = 0;
    let mut history = Vec::new();
    let mut last = None;
    for &beta in &BETA_SCHEDULE {
        obj.beta = beta;
        let out = optimize(&obj, w, eopts)?;
        iterations += out.iterations;
        history.extend(out.history.iter().copied());
        w = out.weights.clone();
        last = Some(out);
    }
    let mut out = last.expect("non-empty schedule");
    if w.iter().any(|&x| x > 0.0 && x < opts.prune_threshold) {
        let pruned = prune_weights(&w, opts.prune_threshold);
        if obj.state(&pruned).is_some() {
            out = optimize(&obj, pruned, eopts)?;
            iterations += out.iterations;
        }
    }

    let (points, weights): (Vec<Vec<f64>>, Vec<f64>) = out
        .weights
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(j, &x)| (candidates[j].clone(), x))
        .unzip();
    let design = ApproximateDesign::new(points, weights)?;
    let effs = problem.efficiencies(&design)?;
    let min_eff = effs.iter().copied().fold(f64::INFINITY, f64::min);
    let report = SolveReport {
        criterion: "maximin".into(),
        loss: -min_eff,
        max_derivative: out.max_derivative,
        argmax: candidates[out.argmax].clone(),
        min_support_derivative: out.min_support_derivative,
        eq_tolerance: eps,
        iterations,
        verified: out.converged,
        candidate_count: n,
        support_size: design.len(),
        history,
        efficiencies: Some(effs),
        min_efficiency: Some(min_eff),
    };
    Ok((design, report))
}
