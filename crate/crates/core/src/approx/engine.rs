//! First-order engine for convex design objectives on the probability simplex.
//!
//! Each outer iteration scans every candidate for its sensitivity
//! `s_j = -dF/dw_j`; the equivalence-theorem derivative is `d_j = s_j - w's`.
//! Weight is then moved between pairs of points (vertex exchange) with an
//! exact line search along `e_l - e_k`, which keeps the iterate on the simplex
//! and never increases `F`. Points whose weight is exhausted drop out of the
//! support exactly.

use rayon::prelude::*;

use crate::criterion::{Criterion, CriterionState};
use crate::error::{DesignError, Result};
use crate::model::ModelSpec;

/// Scaled regressors `sqrt(lambda) f(u_j)` of every candidate, row-major.
#[derive(Debug, Clone)]
pub struct CandidateMatrix {
    n: usize,
    q: usize,
    g: Vec<f64>,
}

impl CandidateMatrix {
    pub fn new(model: &ModelSpec, candidates: &[Vec<f64>]) -> Result<Self> {
        let q = model.q();
        let rows: Vec<Vec<f64>> = candidates
            .par_iter()
            .map(|x| model.scaled_regressor(x).map(|g| g.as_slice().to_vec()))
            .collect::<Result<_>>()?;
        let mut g = Vec::with_capacity(rows.len() * q);
        for r in rows {
            g.extend_from_slice(&r);
        }
        Ok(CandidateMatrix {
            n: candidates.len(),
            q,
            g,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.g[j * self.q..(j + 1) * self.q]
    }

    /// Row-major `sum_j w_j g_j g_j'`.
    pub fn information(&self, w: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut m = vec![0.0; q * q];
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let g = self.row(j);
            for a in 0..q {
                let ga = wj * g[a];
                for b in 0..=a {
                    m[a * q + b] += ga * g[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                m[b * q + a] = m[a * q + b];
            }
        }
        m
    }

    /// `m + delta (g_l g_l' - g_k g_k')`.
    pub fn exchanged(&self, m: &[f64], k: usize, l: usize, delta: f64) -> Vec<f64> {
        let q = self.q;
        let (gk, gl) = (self.row(k), self.row(l));
        let mut out = m.to_vec();
        for a in 0..q {
            for b in 0..q {
                out[a * q + b] += delta * (gl[a] * gl[b] - gk[a] * gk[b]);
            }
        }
        out
    }
}

/// Information matrix and factored criterion for one (model, criterion) pair.
#[derive(Debug, Clone)]
pub struct ComponentState {
    pub matrix: Vec<f64>,
    pub crit: CriterionState,
}

impl ComponentState {
    pub fn new(cands: &CandidateMatrix, criterion: &Criterion, matrix: Vec<f64>) -> Option<Self> {
        let crit = CriterionState::new(criterion, &matrix, cands.q()).ok()?;
        Some(ComponentState { matrix, crit })
    }
}

/// A convex objective `F(w)` over simplex weights.
pub trait SimplexObjective: Sync {
    type State: Clone + Send + Sync;

    fn candidate_count(&self) -> usize;

    /// `None` when `F` is infinite at `w`.
    fn state(&self, w: &[f64]) -> Option<Self::State>;

    /// Value being minimized.
    fn value(&self, s: &Self::State) -> f64;

    /// `-dF/dw_j`.
    fn sensitivity(&self, s: &Self::State, j: usize) -> f64;

    /// State after moving `delta` weight from candidate `k` to `l`.
    fn exchanged(&self, s: &Self::State, k: usize, l: usize, delta: f64) -> Option<Self::State>;

    /// Minimizer of `F(w + delta (e_l - e_k))` over `delta in [lo, hi]`.
    fn line_search(&self, s: &Self::State, k: usize, l: usize, lo: f64, hi: f64) -> f64 {
        bisect_line_search(self, s, k, l, lo, hi)
    }
}

/// Bisection on the sign of the directional derivative; `F` is convex along
/// the segment, so the derivative is monotone.
pub fn bisect_line_search<O: SimplexObjective + ?Sized>(
    obj: &O,
    s: &O::State,
    k: usize,
    l: usize,
    lo: f64,
    hi: f64,
) -> f64 {
    // Derivative of F along +delta is s_k - s_l; an infinite F at a trial
    // point means the minimizer lies back toward delta = 0.
    let slope = |delta: f64| -> f64 {
        match obj.exchanged(s, k, l, delta) {
            Some(t) => obj.sensitivity(&t, k) - obj.sensitivity(&t, l),
            None => {
                if delta > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    };
    let d0 = obj.sensitivity(s, k) - obj.sensitivity(s, l);
    let (mut a, mut b) = if d0 < 0.0 {
        if slope(hi) <= 0.0 {
            return hi;
        }
        (0.0, hi)
    } else if d0 > 0.0 {
        if slope(lo) >= 0.0 {
            return lo;
        }
        (lo, 0.0)
    } else {
        return 0.0;
    };
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if slope(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Engine stopping rules.
#[derive(Debug, Clone, Copy)]
pub struct EngineOptions {
    pub eq_tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct EngineOutcome {
    pub weights: Vec<f64>,
    pub max_derivative: f64,
    pub argmax: usize,
    pub min_support_derivative: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at the start of every outer iteration.
    pub history: Vec<f64>,
}

/// Support sizes above this use a cheap drop pass instead of all-pairs sweeps.
const LARGE_SUPPORT: usize = 400;
/// All-pairs exchange passes per outer iteration.
const SWEEPS: usize = 4;

/// Runs the exchange engine from `w0` until the equivalence condition holds
/// within tolerance or the iteration budget runs out.
pub fn optimize<O: SimplexObjective>(obj: &O, w0: Vec<f64>, opts: EngineOptions) -> Result<EngineOutcome> {
    let n = obj.candidate_count();
    let mut w = w0;
    let mut state = obj
        .state(&w)
        .ok_or_else(|| DesignError::Infeasible("starting design has a singular information matrix".into()))?;
    let mut history = Vec::new();
    let top_k = 24.min(n);
    let mut outcome = None;

    for iter in 0..opts.max_iterations.max(1) {
        let sens: Vec<f64> = (0..n).into_par_iter().map(|j| obj.sensitivity(&state, j)).collect();
        let avg: f64 = w.iter().zip(&sens).map(|(a, b)| a * b).sum();
        let d: Vec<f64> = sens.iter().map(|s| s - avg).collect();
        let (argmax, max_d) = argmax(&d);
        let min_sd = w
            .iter()
            .zip(&d)
            .filter(|(wj, _)| **wj > 0.0)
            .map(|(_, dj)| *dj)
            .fold(f64::INFINITY, f64::min);
        history.push(obj.value(&state));
        let done = max_d <= opts.eq_tolerance && min_sd >= -opts.eq_tolerance;
        outcome = Some((argmax, max_d, min_sd, iter, done));
        if done {
            break;
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
        let top: Vec<usize> = order[..top_k].to_vec();
        let mut support: Vec<usize> = (0..n).filter(|&j| w[j] > 0.0).collect();

        if support.len() > LARGE_SUPPORT {
            // Worst points first, each emptied toward the best candidates.
            support.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
            for &k in &support {
                for &l in &top {
                    if k == l || w[k] == 0.0 {
                        continue;
                    }
                    exchange(obj, &mut state, &mut w, k, l);
                }
            }
        } else {
            let mut working: Vec<usize> = top.clone();
            for &k in &support {
                if !working.contains(&k) {
                    working.push(k);
                }
            }
            for _ in 0..SWEEPS {
                for a in 0..working.len() {
                    for b in (a + 1)..working.len() {
                        let (l, k) = (working[a], working[b]);
                        if w[k] == 0.0 && w[l] == 0.0 {
                            continue;
                        }
                        exchange(obj, &mut state, &mut w, k, l);
                    }
                }
            }
        }
    }

    let (argmax, max_d, min_sd, iter, done) = outcome.expect("at least one iteration");
    Ok(EngineOutcome {
        weights: w,
        max_derivative: max_d,
        argmax,
        min_support_derivative: min_sd,
        iterations: iter + 1,
        converged: done,
        history,
    })
}

/// One pairwise exchange between `k` and `l`; applied only if it does not
/// increase the objective.
fn exchange<O: SimplexObjective>(obj: &O, state: &mut O::State, w: &mut [f64], k: usize, l: usize) {
    let (lo, hi) = (-w[l], w[k]);
    if lo == hi {
        return;
    }
    let delta = obj.line_search(state, k, l, lo, hi);
    if delta == 0.0 || !delta.is_finite() {
        return;
    }
    let Some(next) = obj.exchanged(state, k, l, delta) else {
        return;
    };
    if obj.value(&next) <= obj.value(state) {
        *state = next;
        if delta == hi {
            w[l] += w[k];
            w[k] = 0.0;
        } else if delta == lo {
            w[k] += w[l];
            w[l] = 0.0;
        } else {
            w[k] -= delta;
            w[l] += delta;
            // Guard against rounding below zero.
            w[k] = w[k].max(0.0);
            w[l] = w[l].max(0.0);
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Single-criterion objective: `-log det M` for D, `tr(C' M^{-1} C)` otherwise.
pub struct SingleObjective<'a> {
    pub cands: &'a CandidateMatrix,
    pub criterion: &'a Criterion,
}

impl SimplexObjective for SingleObjective<'_> {
    type State = ComponentState;

    fn candidate_count(&self) -> usize {
        self.cands.len()
    }

    fn state(&self, w: &[f64]) -> Option<ComponentState> {
        ComponentState::new(self.cands, self.criterion, self.cands.information(w))
    }

    fn value(&self, s: &ComponentState) -> f64 {
        match self.criterion {
            Criterion::D => -s.crit.factor().logdet(),
            Criterion::TraceC { .. } => s.crit.loss(),
        }
    }

    fn sensitivity(&self, s: &ComponentState, j: usize) -> f64 {
        s.crit.sensitivity(self.cands.row(j))
    }

    fn exchanged(&self, s: &ComponentState, k: usize, l: usize, delta: f64) -> Option<ComponentState> {
        ComponentState::new(self.cands, self.criterion, self.cands.exchanged(&s.matrix, k, l, delta))
    }

    fn line_search(&self, s: &ComponentState, k: usize, l: usize, lo: f64, hi: f64) -> f64 {
        match self.criterion {
            Criterion::D => d_exchange_step(s, self.cands.row(k), self.cands.row(l), lo, hi),
            Criterion::TraceC { .. } => bisect_line_search(self, s, k, l, lo, hi),
        }
    }
}

/// Closed-form D step: `det(M + delta (a a' - b b')) / det M =
/// 1 + delta (d_a - d_b) - delta^2 (d_a d_b - d_ab^2)`.
fn d_exchange_step(s: &ComponentState, b: &[f64], a: &[f64], lo: f64, hi: f64) -> f64 {
    let f = s.crit.factor();
    let mut wa = a.to_vec();
    let mut wb = b.to_vec();
    f.whiten_in_place(&mut wa);
    f.whiten_in_place(&mut wb);
    let da: f64 = wa.iter().map(|x| x * x).sum();
    let db: f64 = wb.iter().map(|x| x * x).sum();
    let dab: f64 = wa.iter().zip(&wb).map(|(x, y)| x * y).sum();
    let lin = da - db;
    let quad = (da * db - dab * dab).max(0.0);
    let delta = if quad <= 1e-14 * da.max(db).powi(2) {
        if lin > 0.0 {
            hi
        } else if lin < 0.0 {
            lo
        } else {
            0.0
        }
    } else {
        lin / (2.0 * quad)
    };
    delta.clamp(lo, hi)
}
