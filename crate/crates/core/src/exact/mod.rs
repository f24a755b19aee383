//! Exact n-run designs: apportionment of approximate designs and
//! multi-restart simulated annealing.

mod anneal;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::MaximinProblem;
use crate::criterion::{Criterion, CriterionState};
use crate::design::{info_matrix, ApproximateDesign, ExactDesign, WeightedPoints};
use crate::error::{DesignError, Result};
use crate::model::ModelSpec;
use crate::space::DesignSpace;

pub use anneal::{anneal_once, AnnealConfig, AnnealTrace, ResolvedAnneal, TraceRecord};

/// Loss minimized by the annealer: a single criterion, or minus the minimum
/// efficiency over several objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Single { model: ModelSpec, criterion: Criterion },
    Maximin(MaximinProblem),
}

impl Objective {
    pub fn single(model: ModelSpec, criterion: Criterion) -> Result<Self> {
        criterion.check_dim(model.q())?;
        Ok(Objective::Single { model, criterion })
    }

    pub fn maximin(problem: MaximinProblem) -> Result<Self> {
        problem.validate()?;
        Ok(Objective::Maximin(problem))
    }

    pub fn point_dim(&self) -> usize {
        self.components()[0].0.p()
    }

    pub(crate) fn components(&self) -> Vec<(&ModelSpec, &Criterion)> {
        match self {
            Objective::Single { model, criterion } => vec![(model, criterion)],
            Objective::Maximin(p) => p.objectives.iter().map(|(m, c)| (m, c)).collect(),
        }
    }

    /// Loss from row-major information matrices, one per component; infinite
    /// when any matrix is singular.
    pub(crate) fn loss_from_matrices(&self, mats: &[&[f64]]) -> f64 {
        let comps = self.components();
        let mut losses = Vec::with_capacity(mats.len());
        for ((model, criterion), m) in comps.iter().zip(mats) {
            match CriterionState::new(criterion, m, model.q()) {
                Ok(s) => losses.push(s.loss()),
                Err(_) => return f64::INFINITY,
            }
        }
        self.combine(&losses)
    }

    fn combine(&self, losses: &[f64]) -> f64 {
        match self {
            Objective::Single { .. } => losses[0],
            Objective::Maximin(p) => {
                let min_eff = losses
                    .iter()
                    .zip(&p.reference_losses)
                    .map(|(l, r)| r / l)
                    .fold(f64::INFINITY, f64::min);
                -min_eff
            }
        }
    }

    /// Loss of a design (infinite when singular).
    pub fn loss<D: WeightedPoints + ?Sized>(&self, design: &D) -> f64 {
        let mut losses = Vec::new();
        for (model, criterion) in self.components() {
            let l = info_matrix(model, design)
                .map(|m| criterion.loss(&m))
                .unwrap_or(f64::INFINITY);
            if !l.is_finite() {
                return f64::INFINITY;
            }
            losses.push(l);
        }
        self.combine(&losses)
    }

    /// Score used to rank restarts (higher is better): the modified efficiency
    /// `loss(reference) / loss(design)` for one criterion, the minimum
    /// efficiency for maximin.
    pub fn score(&self, loss: f64, reference_loss: f64) -> f64 {
        match self {
            Objective::Single { .. } => reference_loss / loss,
            Objective::Maximin(_) => -loss,
        }
    }
}

/// Largest-remainder apportionment of `n` runs over the support of `approx`.
/// When the support has more than `n` points the `n` heaviest each get one run.
pub fn round_to_exact(approx: &ApproximateDesign, n: u32) -> Result<ExactDesign> {
    if n == 0 {
        return Err(DesignError::InvalidDesign("run count must be at least 1".into()));
    }
    let w = approx.weights();
    let m = w.len();
    let counts: Vec<u32> = if m > n as usize {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        let mut c = vec![0u32; m];
        for &i in &order[..n as usize] {
            c[i] = 1;
        }
        c
    } else {
        largest_remainder(w, n)
    };
    let (points, counts): (Vec<Vec<f64>>, Vec<u32>) = approx
        .points()
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(p, c)| (p.clone(), c))
        .unzip();
    ExactDesign::new(points, counts)
}

fn largest_remainder(w: &[f64], n: u32) -> Vec<u32> {
    let total: f64 = w.iter().sum();
    let quotas: Vec<f64> = w.iter().map(|x| n as f64 * x / total).collect();
    let mut counts: Vec<u32> = quotas.iter().map(|a| a.floor() as u32).collect();
    let assigned: u32 = counts.iter().sum();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Makes a rounded design usable as a starting point: while its information
/// matrix is singular, one run moves from the most replicated point to the
/// heaviest reference support point that received no run.
fn repair_singular(objective: &Objective, approx_ref: &ApproximateDesign, rounded: ExactDesign) -> Result<ExactDesign> {
    let mut runs = rounded.runs();
    let mut unused: Vec<(usize, f64)> = approx_ref
        .points()
        .iter()
        .zip(approx_ref.weights())
        .enumerate()
        .filter(|(_, (p, _))| !runs.contains(p))
        .map(|(i, (_, &w))| (i, w))
        .collect();
    unused.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut design = rounded;
    let mut next = unused.into_iter();
    while !objective.loss(&design).is_finite() {
        let counts = design.counts();
        let (donor, &most) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty design");
        let Some((target, _)) = next.next().filter(|_| most > 1) else {
            return Err(DesignError::AnnealFailed(format!(
                "no {}-run design on the reference support has an invertible information matrix",
                design.n()
            )));
        };
        let from = design.points()[donor].clone();
        let pos = runs.iter().position(|r| *r == from).expect("donor is a run");
        runs[pos] = approx_ref.points()[target].clone();
        design = ExactDesign::from_runs(&runs)?;
    }
    Ok(design)
}

/// Floor-or-ceiling apportionment that keeps the whole support; requires
/// `n w_i >= 1` for every support point.
pub fn theorem1_construction(approx: &ApproximateDesign, n: u32) -> Result<ExactDesign> {
    for (p, w) in approx.points().iter().zip(approx.weights()) {
        if (n as f64) * w < 1.0 {
            return Err(DesignError::RoundingPrecondition(format!(
                "n w = {} < 1 at support point {p:?}; use the annealing search instead",
                n as f64 * w
            )));
        }
    }
    round_to_exact(approx, n)
}

/// Summary of one annealing restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub restart: usize,
    pub final_loss: f64,
    /// Modified efficiency (single criterion) or minimum efficiency (maximin).
    pub efficiency: f64,
    pub proposals: u64,
    pub accepted: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: ExactDesign,
    pub best_restart: usize,
    pub best_loss: f64,
    pub best_efficiency: f64,
    pub reference_loss: f64,
    pub initial: ExactDesign,
    pub config: ResolvedAnneal,
    pub reports: Vec<RestartReport>,
    pub traces: Vec<AnnealTrace>,
}

/// Random stream for restart `j`: the master seed with stream index `j`.
pub fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Rounds `approx_ref` to `n` runs, anneals it `cfg.restarts` times in
/// parallel, and keeps the restart with the highest score (lowest index on
/// ties).
pub fn search(
    objective: &Objective,
    approx_ref: &ApproximateDesign,
    n: u32,
    space: &DesignSpace,
    cfg: &AnnealConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    if space.dim() != objective.point_dim() {
        return Err(DesignError::DimensionMismatch {
            expected: objective.point_dim(),
            got: space.dim(),
        });
    }
    let reference_loss = objective.loss(approx_ref);
    if !reference_loss.is_finite() {
        return Err(DesignError::SingularInformation);
    }
    let initial = repair_singular(objective, approx_ref, round_to_exact(approx_ref, n)?)?;
    let initial_loss = objective.loss(&initial);
    let resolved = cfg.resolve(n, initial_loss)?;

    let results: Vec<Result<(ExactDesign, AnnealTrace)>> = (0..resolved.restarts)
        .into_par_iter()
        .map(|j| {
            let mut rng = restart_rng(resolved.seed, j);
            anneal_once(objective, &initial, space, &resolved, &mut rng)
        })
        .collect();

    let mut reports = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    let mut best: Option<(usize, ExactDesign, f64, f64)> = None;
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok((design, trace)) => {
                let loss = trace.final_loss;
                let eff = objective.score(loss, reference_loss);
                reports.push(RestartReport {
                    restart: j,
                    final_loss: loss,
                    efficiency: eff,
                    proposals: trace.proposals,
                    accepted: trace.accepted,
                    error: None,
                });
                traces.push(trace);
                if loss.is_finite() && best.as_ref().is_none_or(|b| eff > b.3) {
                    best = Some((j, design, loss, eff));
                }
            }
            Err(e) => {
                reports.push(RestartReport {
                    restart: j,
                    final_loss: f64::INFINITY,
                    efficiency: 0.0,
                    proposals: 0,
                    accepted: 0,
                    error: Some(e.to_string()),
                });
                traces.push(AnnealTrace::default());
            }
        }
    }
    let Some((best_restart, best, best_loss, best_efficiency)) = best else {
        let diag: Vec<String> = reports
            .iter()
            .map(|r| format!("restart {}: {}", r.restart, r.error.as_deref().unwrap_or("singular")))
            .collect();
        return Err(DesignError::AnnealFailed(diag.join("; ")));
    };
    Ok(SearchOutcome {
        best,
        best_restart,
        best_loss,
        best_efficiency,
        reference_loss,
        initial,
        config: resolved,
        reports,
        traces,
    })
}
