//! Design spaces and annealing move kernels.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};

/// Where design points may live.
///
/// A `Grid` discretizes its bounding box for the approximate stage; the
/// annealer still moves points continuously inside that box, so membership
/// for a grid is box membership.
#[derive(Debug, Clone)]
pub enum DesignSpace {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Grid {
        lower: Vec<f64>,
        upper: Vec<f64>,
        levels: Vec<usize>,
    },
    FiniteSet(FiniteSet),
}

/// Explicit list of candidate points with exact membership.
#[derive(Debug, Clone)]
pub struct FiniteSet {
    points: Vec<Vec<f64>>,
    members: HashSet<Vec<u64>>,
    integer_line: bool,
}

/// Serializable description of a space (config and reports).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Grid { lower: Vec<f64>, upper: Vec<f64>, levels: Vec<usize> },
    Finite { points: Vec<Vec<f64>> },
}

fn key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point.
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl DesignSpace {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_bounds(&lower, &upper)?;
        Ok(DesignSpace::Box { lower, upper })
    }

    pub fn new_grid(lower: Vec<f64>, upper: Vec<f64>, levels: Vec<usize>) -> Result<Self> {
        check_bounds(&lower, &upper)?;
        if levels.len() != lower.len() {
            return Err(DesignError::InvalidSpace(format!(
                "{} level counts for {} dimensions",
                levels.len(),
                lower.len()
            )));
        }
        if levels.iter().any(|k| *k < 2) {
            return Err(DesignError::InvalidSpace("grid needs at least 2 levels per dimension".into()));
        }
        let size = levels.iter().try_fold(1usize, |acc, k| acc.checked_mul(*k));
        match size {
            Some(n) if n <= 50_000_000 => {}
            _ => return Err(DesignError::InvalidSpace("grid is too large to enumerate".into())),
        }
        Ok(DesignSpace::Grid { lower, upper, levels })
    }

    pub fn new_finite(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(DesignError::InvalidSpace("finite set is empty".into()));
        }
        let p = points[0].len();
        if p == 0 {
            return Err(DesignError::InvalidSpace("zero-dimensional points".into()));
        }
        let mut members = HashSet::with_capacity(points.len());
        for x in &points {
            if x.len() != p {
                return Err(DesignError::DimensionMismatch {
                    expected: p,
                    got: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DesignError::InvalidSpace("non-finite point".into()));
            }
            if !members.insert(key(x)) {
                return Err(DesignError::InvalidSpace(format!("duplicate point {x:?}")));
            }
        }
        let integer_line = p == 1 && points.iter().all(|x| x[0].fract() == 0.0 && x[0].abs() < 1e15);
        Ok(DesignSpace::FiniteSet(FiniteSet {
            points,
            members,
            integer_line,
        }))
    }

    /// The integers `start..=end` as a one-dimensional finite set.
    pub fn integer_range(start: i64, end: i64) -> Result<Self> {
        if end < start {
            return Err(DesignError::InvalidSpace(format!("empty integer range {start}..={end}")));
        }
        if end - start > 10_000_000 {
            return Err(DesignError::InvalidSpace("integer range is too large".into()));
        }
        Self::new_finite((start..=end).map(|v| vec![v as f64]).collect())
    }

    pub fn from_spec(spec: &SpaceSpec) -> Result<Self> {
        match spec {
            SpaceSpec::Box { lower, upper } => Self::new_box(lower.clone(), upper.clone()),
            SpaceSpec::Grid { lower, upper, levels } => {
                Self::new_grid(lower.clone(), upper.clone(), levels.clone())
            }
            SpaceSpec::Finite { points } => Self::new_finite(points.clone()),
        }
    }

    pub fn spec(&self) -> SpaceSpec {
        match self {
            DesignSpace::Box { lower, upper } => SpaceSpec::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            },
            DesignSpace::Grid { lower, upper, levels } => SpaceSpec::Grid {
                lower: lower.clone(),
                upper: upper.clone(),
                levels: levels.clone(),
            },
            DesignSpace::FiniteSet(s) => SpaceSpec::Finite {
                points: s.points.clone(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DesignSpace::Box { lower, .. } | DesignSpace::Grid { lower, .. } => lower.len(),
            DesignSpace::FiniteSet(s) => s.points[0].len(),
        }
    }

    /// Number of candidate points, `None` for a continuous box.
    pub fn candidate_count(&self) -> Option<usize> {
        match self {
            DesignSpace::Box { .. } => None,
            DesignSpace::Grid { levels, .. } => Some(levels.iter().product()),
            DesignSpace::FiniteSet(s) => Some(s.points.len()),
        }
    }

    /// Per-dimension extent, used to size continuous moves.
    pub fn ranges(&self) -> Vec<f64> {
        match self {
            DesignSpace::Box { lower, upper } | DesignSpace::Grid { lower, upper, .. } => {
                lower.iter().zip(upper).map(|(l, u)| u - l).collect()
            }
            DesignSpace::FiniteSet(s) => {
                let p = s.points[0].len();
                (0..p)
                    .map(|d| {
                        let (lo, hi) = s.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                            (lo.min(x[d]), hi.max(x[d]))
                        });
                        hi - lo
                    })
                    .collect()
            }
        }
    }

    /// All candidate points; the first dimension varies slowest.
    pub fn enumerate_grid(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            DesignSpace::Box { .. } => Err(DesignError::InvalidSpace(
                "a continuous box must be discretized before enumeration".into(),
            )),
            DesignSpace::FiniteSet(s) => Ok(s.points.clone()),
            DesignSpace::Grid { lower, upper, levels } => {
                let axes: Vec<Vec<f64>> = lower
                    .iter()
                    .zip(upper)
                    .zip(levels)
                    .map(|((l, u), k)| grid_levels(*l, *u, *k))
                    .collect();
                let total: usize = levels.iter().product();
                let p = levels.len();
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; p];
                for _ in 0..total {
                    out.push(idx.iter().enumerate().map(|(d, i)| axes[d][*i]).collect());
                    for d in (0..p).rev() {
                        idx[d] += 1;
                        if idx[d] < levels[d] {
                            break;
                        }
                        idx[d] = 0;
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(DesignError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            DesignSpace::Box { lower, upper } | DesignSpace::Grid { lower, upper, .. } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u),
            DesignSpace::FiniteSet(s) => s.members.contains(&key(x)),
        })
    }

    /// Whether moves are drawn from a finite set rather than a continuous box.
    pub fn is_finite(&self) -> bool {
        matches!(self, DesignSpace::FiniteSet(_))
    }

    /// A one-dimensional finite set of integers.
    pub fn is_integer_line(&self) -> bool {
        matches!(self, DesignSpace::FiniteSet(s) if s.integer_line)
    }

    /// Proposes a new location for a run currently at `x`.
    ///
    /// Continuous spaces add a uniform offset from `[-scale_d, scale_d]` and
    /// clip to the box. A one-dimensional integer set steps by a uniform
    /// integer between one and `ceil(scale)` in a random direction, reflecting
    /// at the ends. Any other finite set jumps to a uniformly chosen different
    /// member.
    pub fn propose_neighbor<R: Rng + ?Sized>(&self, x: &[f64], scale: &[f64], rng: &mut R) -> Vec<f64> {
        match self {
            DesignSpace::Box { lower, upper } | DesignSpace::Grid { lower, upper, .. } => x
                .iter()
                .enumerate()
                .map(|(d, v)| {
                    let s = scale.get(d).copied().unwrap_or(0.0);
                    if s > 0.0 {
                        let u: f64 = rng.random_range(-1.0..=1.0);
                        (v + s * u).clamp(lower[d], upper[d])
                    } else {
                        *v
                    }
                })
                .collect(),
            DesignSpace::FiniteSet(s) => s.propose(x, scale, rng),
        }
    }
}

impl FiniteSet {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn propose<R: Rng + ?Sized>(&self, x: &[f64], scale: &[f64], rng: &mut R) -> Vec<f64> {
        if self.points.len() == 1 {
            return self.points[0].clone();
        }
        if self.integer_line {
            let reach = scale.first().map_or(1.0, |s| s.ceil().max(1.0)) as u64;
            let size = rng.random_range(1..=reach) as f64;
            let step = if rng.random_bool(0.5) { size } else { -size };
            for cand in [x[0] + step, x[0] - step] {
                if self.members.contains(&key(&[cand])) {
                    return vec![cand];
                }
            }
        }
        // Uniform over the other members.
        let own = self.points.iter().position(|p| key(p) == key(x));
        let count = self.points.len() - usize::from(own.is_some());
        let mut i = rng.random_range(0..count);
        if let Some(o) = own {
            if i >= o {
                i += 1;
            }
        }
        self.points[i].clone()
    }
}

/// `k` equally spaced levels on `[low, high]`, endpoints exact.
pub fn grid_levels(low: f64, high: f64, k: usize) -> Vec<f64> {
    let span = high - low;
    let denom = (k - 1) as f64;
    (0..k)
        .map(|i| {
            if i == k - 1 {
                high
            } else {
                low + span * i as f64 / denom
            }
        })
        .collect()
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    if lower.is_empty() || lower.len() != upper.len() {
        return Err(DesignError::InvalidSpace(format!(
            "bounds have lengths {} and {}",
            lower.len(),
            upper.len()
        )));
    }
    for (l, u) in lower.iter().zip(upper) {
        if !l.is_finite() || !u.is_finite() || !(l < u) {
            return Err(DesignError::InvalidSpace(format!("need low < high, got [{l}, {u}]")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_51_squared() {
        let g = DesignSpace::new_grid(vec![0.0, 0.0], vec![1.0, 1.0], vec![51, 51]).unwrap();
        let pts = g.enumerate_grid().unwrap();
        assert_eq!(pts.len(), 2601);
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(pts[1], vec![0.0, 0.02]);
        assert_eq!(pts[2600], vec![1.0, 1.0]);
    }

    #[test]
    fn grid_4_to_the_7() {
        let g = DesignSpace::new_grid(vec![-1.0; 7], vec![1.0; 7], vec![4; 7]).unwrap();
        let pts = g.enumerate_grid().unwrap();
        assert_eq!(pts.len(), 16_384);
        let levels = grid_levels(-1.0, 1.0, 4);
        assert_eq!(levels[0], -1.0);
        assert!((levels[1] + 1.0 / 3.0).abs() < 1e-15);
        assert!((levels[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(levels[3], 1.0);
        let unique: HashSet<Vec<u64>> = pts.iter().map(|p| key(p)).collect();
        assert_eq!(unique.len(), pts.len());
    }

    #[test]
    fn integer_set_in_order() {
        let s = DesignSpace::integer_range(1, 61).unwrap();
        let pts = s.enumerate_grid().unwrap();
        assert_eq!(pts.len(), 61);
        assert!(pts.iter().enumerate().all(|(i, p)| p[0] == (i + 1) as f64));
    }

    #[test]
    fn box_cannot_enumerate() {
        let b = DesignSpace::new_box(vec![0.0], vec![1.0]).unwrap();
        assert!(b.enumerate_grid().is_err());
    }

    #[test]
    fn membership() {
        let b = DesignSpace::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(b.contains(&[0.3, 1.0]).unwrap());
        assert!(!b.contains(&[1.1, 0.5]).unwrap());
        assert!(b.contains(&[0.3]).is_err());
        let s = DesignSpace::integer_range(1, 61).unwrap();
        assert!(!s.contains(&[16.79]).unwrap());
        assert!(s.contains(&[17.0]).unwrap());
    }

    #[test]
    fn integer_boundary_reflects() {
        let s = DesignSpace::integer_range(1, 61).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(s.propose_neighbor(&[61.0], &[], &mut rng), vec![60.0]);
            assert_eq!(s.propose_neighbor(&[1.0], &[], &mut rng), vec![2.0]);
            let y = s.propose_neighbor(&[60.0], &[3.0], &mut rng)[0];
            assert!((57.0..=61.0).contains(&y) && y != 60.0, "{y}");
        }
    }

    #[test]
    fn box_moves_are_local_and_clipped() {
        let b = DesignSpace::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let y = b.propose_neighbor(&[0.5, 0.5], &[0.05, 0.05], &mut rng);
            assert!(y.iter().all(|v| (v - 0.5).abs() <= 0.05 + 1e-15));
        }
        let b1 = DesignSpace::new_box(vec![0.0], vec![1.0]).unwrap();
        for _ in 0..1000 {
            let y = b1.propose_neighbor(&[0.99], &[0.05], &mut rng);
            assert!((0.94..=1.0).contains(&y[0]));
        }
        assert_eq!(b.propose_neighbor(&[0.2, 0.7], &[0.0, 0.0], &mut rng), vec![0.2, 0.7]);
    }

    #[test]
    fn proposals_stay_in_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spaces = [
            DesignSpace::new_box(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap(),
            DesignSpace::new_grid(vec![0.0, 0.0], vec![2.0, 2.0], vec![21, 21]).unwrap(),
            DesignSpace::integer_range(1, 61).unwrap(),
            DesignSpace::new_finite(vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap(),
        ];
        for space in &spaces {
            let ranges = space.ranges();
            let scale: Vec<f64> = ranges.iter().map(|r| 0.1 * r).collect();
            let mut x = match space {
                DesignSpace::FiniteSet(s) => s.points()[0].clone(),
                DesignSpace::Box { lower, .. } | DesignSpace::Grid { lower, .. } => lower.clone(),
            };
            for _ in 0..10_000 {
                x = space.propose_neighbor(&x, &scale, &mut rng);
                assert!(space.contains(&x).unwrap(), "{x:?}");
            }
        }
    }

    #[test]
    fn nested_grids() {
        for (k, k2) in [(21, 41), (41, 81)] {
            let coarse = DesignSpace::new_grid(vec![0.0, 0.0], vec![2.0, 2.0], vec![k, k]).unwrap();
            let fine = DesignSpace::new_grid(vec![0.0, 0.0], vec![2.0, 2.0], vec![k2, k2]).unwrap();
            let fine_pts: HashSet<Vec<u64>> = fine.enumerate_grid().unwrap().iter().map(|p| key(p)).collect();
            for p in coarse.enumerate_grid().unwrap() {
                assert!(fine_pts.contains(&key(&p)), "{p:?}");
            }
        }
    }

    #[test]
    fn invalid_spaces() {
        assert!(DesignSpace::new_box(vec![1.0], vec![0.0]).is_err());
        assert!(DesignSpace::new_grid(vec![0.0], vec![1.0], vec![1]).is_err());
        assert!(DesignSpace::new_finite(vec![]).is_err());
        assert!(DesignSpace::new_finite(vec![vec![1.0], vec![1.0]]).is_err());
    }
}
