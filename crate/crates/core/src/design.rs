//! Design types and information-matrix assembly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::model::ModelSpec;

/// Points closer than this (Euclidean) are the same support point.
pub const MERGE_DISTANCE: f64 = 1e-9;

/// Tolerance on `sum(weights) == 1` for user-supplied weights before renormalization.
const WEIGHT_SUM_SLACK: f64 = 1e-6;

/// A probability distribution over design points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximateDesign {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ApproximateDesign {
    /// Builds a design, merging coincident points and renormalizing weights.
    /// Zero-weight points are kept; use [`ApproximateDesign::pruned`] to drop them.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(DesignError::InvalidDesign("design has no points".into()));
        }
        if points.len() != weights.len() {
            return Err(DesignError::InvalidDesign(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        check_points(&points)?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DesignError::InvalidDesign("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_SLACK {
            return Err(DesignError::InvalidDesign(format!("weights sum to {total}, not 1")));
        }
        let (points, weights) = merge_duplicates(points, weights, |a, b| a + b);
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(ApproximateDesign { points, weights })
    }

    /// Equal weights on the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len().max(1);
        let w = vec![1.0 / n as f64; points.len()];
        Self::new(points, w)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Drops points with weight below `threshold` and renormalizes.
    pub fn pruned(&self, threshold: f64) -> Result<Self> {
        let (points, weights): (Vec<_>, Vec<_>) = self
            .points
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w >= threshold && **w > 0.0)
            .map(|(p, w)| (p.clone(), *w))
            .unzip();
        if points.is_empty() {
            return Err(DesignError::InvalidDesign(
                "pruning removed every support point".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        Ok(ApproximateDesign {
            points,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }
}

/// An `n`-run design: support points with positive integer replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDesign {
    points: Vec<Vec<f64>>,
    counts: Vec<u32>,
    n: u32,
}

impl ExactDesign {
    pub fn new(points: Vec<Vec<f64>>, counts: Vec<u32>) -> Result<Self> {
        if points.is_empty() {
            return Err(DesignError::InvalidDesign("design has no points".into()));
        }
        if points.len() != counts.len() {
            return Err(DesignError::InvalidDesign(format!(
                "{} points but {} counts",
                points.len(),
                counts.len()
            )));
        }
        if counts.iter().any(|c| *c == 0) {
            return Err(DesignError::InvalidDesign("run counts must be positive".into()));
        }
        check_points(&points)?;
        let (points, counts) = merge_duplicates(points, counts, |a, b| a + b);
        let n = counts.iter().sum();
        Ok(ExactDesign { points, counts, n })
    }

    /// Builds a design from a list of individual runs (one point per run),
    /// with support points in lexicographic order.
    pub fn from_runs(runs: &[Vec<f64>]) -> Result<Self> {
        let mut sorted = runs.to_vec();
        sorted.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Self::new(sorted, vec![1; runs.len()])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Expands the design into one point per run.
    pub fn runs(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .zip(&self.counts)
            .flat_map(|(p, c)| std::iter::repeat_n(p.clone(), *c as usize))
            .collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|c| *c as f64 / n).collect()
    }

    pub fn to_approximate(&self) -> ApproximateDesign {
        ApproximateDesign {
            points: self.points.clone(),
            weights: self.weights(),
        }
    }
}

/// Anything that can be read as weighted support points.
pub trait WeightedPoints {
    fn support(&self) -> (Vec<&[f64]>, Vec<f64>);
}

impl WeightedPoints for ApproximateDesign {
    fn support(&self) -> (Vec<&[f64]>, Vec<f64>) {
        (self.points.iter().map(Vec::as_slice).collect(), self.weights.clone())
    }
}

impl WeightedPoints for ExactDesign {
    fn support(&self) -> (Vec<&[f64]>, Vec<f64>) {
        (self.points.iter().map(Vec::as_slice).collect(), self.weights())
    }
}

/// Symmetric positive semidefinite `q x q` information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationMatrix(DMatrix<f64>);

impl InformationMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        InformationMatrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Row-major copy, the layout [`crate::linalg::SpdFactor`] consumes.
    pub fn row_major(&self) -> Vec<f64> {
        let q = self.dim();
        let mut out = Vec::with_capacity(q * q);
        for i in 0..q {
            for j in 0..q {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }
}

/// `sum_i w_i lambda(v_i) f(v_i) f(v_i)'`.
pub fn info_matrix<D: WeightedPoints + ?Sized>(model: &ModelSpec, design: &D) -> Result<InformationMatrix> {
    let (points, weights) = design.support();
    let q = model.q();
    let mut m = DMatrix::zeros(q, q);
    for (x, w) in points.into_iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let g = model.scaled_regressor(x)?;
        m.syger(w, &g, &g, 1.0);
    }
    m.fill_upper_triangle_with_lower_triangle();
    Ok(InformationMatrix(m))
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    let p = points[0].len();
    if p == 0 {
        return Err(DesignError::InvalidDesign("zero-dimensional design point".into()));
    }
    for x in points {
        if x.len() != p {
            return Err(DesignError::DimensionMismatch {
                expected: p,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DesignError::InvalidDesign("non-finite coordinate".into()));
        }
    }
    Ok(())
}

/// Merges points within [`MERGE_DISTANCE`] into their first occurrence.
fn merge_duplicates<T: Copy>(
    points: Vec<Vec<f64>>,
    values: Vec<T>,
    add: impl Fn(T, T) -> T,
) -> (Vec<Vec<f64>>, Vec<T>) {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
    let mut owner: Vec<usize> = (0..n).collect();
    for (pos, &i) in order.iter().enumerate() {
        if owner[i] != i {
            continue;
        }
        for &j in &order[pos + 1..] {
            if points[j][0] - points[i][0] > MERGE_DISTANCE {
                break;
            }
            if owner[j] == j && sq_dist(&points[i], &points[j]) <= MERGE_DISTANCE * MERGE_DISTANCE {
                // The earliest index owns the merged point.
                let (keep, drop) = if i < j { (i, j) } else { (j, i) };
                owner[drop] = keep;
                if keep == j {
                    owner[i] = j;
                    break;
                }
            }
        }
    }
    // Resolve chains so every index points at a root.
    for i in 0..n {
        let mut r = owner[i];
        while owner[r] != r {
            r = owner[r];
        }
        owner[i] = r;
    }
    let mut merged: Vec<Option<T>> = vec![None; n];
    for i in 0..n {
        let r = owner[i];
        merged[r] = Some(match merged[r] {
            None => values[i],
            Some(v) => add(v, values[i]),
        });
    }
    let mut out_points = Vec::new();
    let mut out_values = Vec::new();
    for (i, p) in points.into_iter().enumerate() {
        if owner[i] == i {
            out_points.push(p);
            out_values.push(merged[i].expect("root has a value"));
        }
    }
    (out_points, out_values)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
