//! Simulated annealing over exact designs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::design::ExactDesign;
use crate::error::{DesignError, Result};
use crate::space::DesignSpace;

/// Annealing controls. `None` fields take defaults that depend on the problem
/// and are filled in by [`AnnealConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealConfig {
    /// Initial temperature; defaults to 0.01 times `|loss|` of the initial design.
    pub t0: Option<f64>,
    /// Stopping temperature; defaults to `1e-6 * t0`.
    pub t_min: Option<f64>,
    pub alpha: f64,
    /// Proposals per temperature; defaults to `50 n`.
    pub k: Option<usize>,
    pub delta: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Neighbourhood half-width at `t0`, as a fraction of each coordinate's range.
    pub step: f64,
    /// Lower bound on the neighbourhood half-width fraction.
    pub min_step: f64,
    /// Largest step on an integer line as a fraction of its range, held fixed
    /// over the whole run; `1/range` gives unit steps.
    pub integer_step: f64,
    /// Keep every `trace_stride`-th proposal in the trace.
    pub trace_stride: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            t0: None,
            t_min: None,
            alpha: 0.9,
            k: None,
            delta: 1e-5,
            restarts: 10,
            seed: 42,
            step: 0.2,
            min_step: 0.005,
            integer_step: 1.0,
            trace_stride: 1,
        }
    }
}

/// Annealing controls with every default materialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAnneal {
    pub t0: f64,
    pub t_min: f64,
    pub alpha: f64,
    pub k: usize,
    pub delta: f64,
    pub restarts: usize,
    pub seed: u64,
    pub step: f64,
    pub min_step: f64,
    pub integer_step: f64,
    pub trace_stride: usize,
}

impl AnnealConfig {
    /// Checks the fields that do not depend on the problem.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DesignError::InvalidOptions(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.k == Some(0) {
            return bad("k must be at least 1".into());
        }
        if let Some(t0) = self.t0 {
            if !(t0 > 0.0) || !t0.is_finite() {
                return bad(format!("t0 must be positive, got {t0}"));
            }
        }
        if let Some(t) = self.t_min {
            if !(t >= 0.0) {
                return bad(format!("t_min must be non-negative, got {t}"));
            }
        }
        if !(self.step > 0.0 && self.step <= 1.0) || !(self.min_step > 0.0 && self.min_step <= self.step) {
            return bad(format!(
                "need 0 < min_step <= step <= 1, got step {} and min_step {}",
                self.step, self.min_step
            ));
        }
        if !(self.integer_step > 0.0 && self.integer_step <= 1.0) {
            return bad(format!("integer_step must lie in (0, 1], got {}", self.integer_step));
        }
        if self.trace_stride == 0 {
            return bad("trace_stride must be at least 1".into());
        }
        Ok(())
    }

    /// Fills in problem-dependent defaults from the run count and the loss of
    /// the initial design.
    pub fn resolve(&self, n: u32, initial_loss: f64) -> Result<ResolvedAnneal> {
        self.validate()?;
        let t0 = match self.t0 {
            Some(t) => t,
            None => 0.01 * initial_loss.abs(),
        };
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(DesignError::InvalidOptions(format!(
                "cannot derive an initial temperature from loss {initial_loss}"
            )));
        }
        let t_min = self.t_min.unwrap_or(1e-6 * t0);
        if !(t_min < t0) {
            return Err(DesignError::InvalidOptions(format!(
                "t_min ({t_min}) must be below t0 ({t0})"
            )));
        }
        Ok(ResolvedAnneal {
            t0,
            t_min,
            alpha: self.alpha,
            k: self.k.unwrap_or(50 * n as usize),
            delta: self.delta,
            restarts: self.restarts,
            seed: self.seed,
            step: self.step,
            min_step: self.min_step,
            integer_step: self.integer_step,
            trace_stride: self.trace_stride,
        })
    }
}

/// One proposal of an annealing run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Proposal index, starting at 1.
    pub iteration: u64,
    pub temperature: f64,
    pub proposed_loss: f64,
    /// Loss of the current design before the decision.
    pub current_loss: f64,
    pub accepted: bool,
    pub best_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnealTrace {
    pub records: Vec<TraceRecord>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub proposals: u64,
    pub accepted: u64,
}

/// Running sums for one objective component: scaled regressors of every run
/// and their averaged outer-product matrix.
struct Tracker {
    q: usize,
    g: Vec<f64>,
    matrix: Vec<f64>,
}

impl Tracker {
    fn new(q: usize, gs: Vec<f64>, n: usize) -> Self {
        let mut t = Tracker {
            q,
            g: gs,
            matrix: vec![0.0; q * q],
        };
        t.rebuild(n);
        t
    }

    fn rebuild(&mut self, n: usize) {
        let q = self.q;
        let inv = 1.0 / n as f64;
        let mut m = vec![0.0; q * q];
        for r in 0..n {
            let g = &self.g[r * q..(r + 1) * q];
            for a in 0..q {
                for b in 0..q {
                    m[a * q + b] += inv * g[a] * g[b];
                }
            }
        }
        self.matrix = m;
    }

    fn moved(&self, run: usize, g_new: &[f64], n: usize) -> Vec<f64> {
        let q = self.q;
        let inv = 1.0 / n as f64;
        let g_old = &self.g[run * q..(run + 1) * q];
        let mut m = self.matrix.clone();
        for a in 0..q {
            for b in 0..q {
                m[a * q + b] += inv * (g_new[a] * g_new[b] - g_old[a] * g_old[b]);
            }
        }
        m
    }
}

/// Consecutive still temperature levels that end a run.
pub const FROZEN_LEVELS: usize = 5;

/// Anneals from `init` and returns the last accepted design. Cooling stops at
/// `t_min`, or once the current loss has varied by at most `delta` over a
/// whole temperature level.
pub fn anneal_once<R: Rng + ?Sized>(
    objective: &Objective,
    init: &ExactDesign,
    space: &DesignSpace,
    cfg: &ResolvedAnneal,
    rng: &mut R,
) -> Result<(ExactDesign, AnnealTrace)> {
    let mut runs = init.runs();
    let n = runs.len();
    if n == 0 {
        return Err(DesignError::InvalidDesign("initial design has no runs".into()));
    }
    for x in &runs {
        if !space.contains(x)? {
            return Err(DesignError::InvalidDesign(format!(
                "initial design point {x:?} lies outside the design space"
            )));
        }
    }

    let components = objective.components();
    let mut trackers = Vec::with_capacity(components.len());
    for (model, _) in &components {
        let q = model.q();
        let mut gs = Vec::with_capacity(n * q);
        for x in &runs {
            gs.extend_from_slice(model.scaled_regressor(x)?.as_slice());
        }
        trackers.push(Tracker::new(q, gs, n));
    }
    let eval = |mats: &[&[f64]]| objective.loss_from_matrices(mats);

    let mut current = eval(&trackers.iter().map(|t| t.matrix.as_slice()).collect::<Vec<_>>());
    if !current.is_finite() {
        return Err(DesignError::AnnealFailed(
            "initial design has a singular information matrix".into(),
        ));
    }
    let ranges = space.ranges();
    let integer_line = space.is_integer_line();
    let mut trace = AnnealTrace {
        initial_loss: current,
        ..Default::default()
    };
    let mut best = current;
    let loss_scale = current.abs();
    let mut temperature = cfg.t0;
    // Smallest and largest current loss seen during the running level; the
    // chain has frozen once a whole level stays within `delta`.
    let (mut l1, mut l2) = (current, current);
    let mut level_count = 0usize;
    let mut frozen = false;
    let mut still_levels = 0usize;
    let mut proposals = 0u64;
    let mut new_gs: Vec<Vec<f64>> = components.iter().map(|(m, _)| vec![0.0; m.q()]).collect();

    while temperature > cfg.t_min && !frozen {
        proposals += 1;
        let run = rng.random_range(0..n);
        let frac = if integer_line {
            cfg.integer_step
        } else {
            (cfg.step * temperature / cfg.t0).max(cfg.min_step)
        };
        let scale: Vec<f64> = ranges.iter().map(|r| frac * r).collect();
        let x_new = space.propose_neighbor(&runs[run], &scale, rng);
        let u: f64 = rng.random();

        let mut proposed = f64::INFINITY;
        let mut mats = Vec::with_capacity(trackers.len());
        let mut ok = true;
        for (c, (model, _)) in components.iter().enumerate() {
            match model.scaled_regressor(&x_new) {
                Ok(g) => new_gs[c].copy_from_slice(g.as_slice()),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
            mats.push(trackers[c].moved(run, &new_gs[c], n));
        }
        if ok {
            proposed = eval(&mats.iter().map(|m| m.as_slice()).collect::<Vec<_>>());
        }

        let accepted = proposed.is_finite() && (-(proposed - current) / temperature).exp() > u;
        if proposals % cfg.trace_stride as u64 == 0 || accepted && proposed < best {
            trace.records.push(TraceRecord {
                iteration: proposals,
                temperature,
                proposed_loss: proposed,
                current_loss: current,
                accepted,
                best_loss: best.min(if accepted { proposed } else { best }),
            });
        }
        if accepted {
            l1 = l1.min(proposed);
            l2 = l2.max(proposed);
            current = proposed;
            best = best.min(current);
            runs[run] = x_new;
            for (c, t) in trackers.iter_mut().enumerate() {
                let q = t.q;
                t.g[run * q..(run + 1) * q].copy_from_slice(&new_gs[c]);
                t.matrix = std::mem::take(&mut mats[c]);
            }
            trace.accepted += 1;
        }

        level_count += 1;
        if level_count == cfg.k {
            level_count = 0;
            if (l2 - l1).abs() <= cfg.delta * loss_scale {
                still_levels += 1;
            } else {
                still_levels = 0;
            }
            frozen = still_levels >= FROZEN_LEVELS;
            temperature *= cfg.alpha;
            // Refresh the running sums so rounding error cannot accumulate.
            for t in trackers.iter_mut() {
                t.rebuild(n);
            }
            current = eval(&trackers.iter().map(|t| t.matrix.as_slice()).collect::<Vec<_>>());
            (l1, l2) = (current, current);
        }
    }

    trace.proposals = proposals;
    let design = ExactDesign::from_runs(&runs)?;
    trace.final_loss = objective.loss(&design);
    Ok((design, trace))
}
