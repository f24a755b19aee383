//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use optdes::{Criterion, ModelSpec, PresetId};

pub fn poly(q: usize) -> ModelSpec {
    ModelSpec::new(PresetId::PolyLinear, vec![0.0; q]).unwrap()
}

pub fn group_testing() -> ModelSpec {
    ModelSpec::new(PresetId::GroupTesting, vec![0.07, 0.93, 0.96]).unwrap()
}

/// Loss of `counts` runs at `points`, computed from scratch with dense
/// nalgebra inverses (independent of the library's factorized updates).
pub fn brute_loss(model: &ModelSpec, criterion: &Criterion, points: &[Vec<f64>], counts: &[u32]) -> f64 {
    let q = model.q();
    let n: u32 = counts.iter().sum();
    let mut m = DMatrix::<f64>::zeros(q, q);
    for (x, &c) in points.iter().zip(counts) {
        if c == 0 {
            continue;
        }
        let g: DVector<f64> = model.scaled_regressor(x).unwrap();
        m += (c as f64 / n as f64) * &g * g.transpose();
    }
    // Reject numerically singular matrices the same way a careful user would.
    let scale = m.diagonal().amax();
    let svd = m.clone().svd(false, false);
    if svd.singular_values.min() <= 1e-10 * scale {
        return f64::INFINITY;
    }
    let inv = m.try_inverse().unwrap();
    match criterion {
        Criterion::D => inv.determinant().powf(1.0 / q as f64),
        Criterion::TraceC { q, r, c } => {
            let cm = DMatrix::from_row_slice(*q, *r, c);
            (cm.transpose() * inv * cm).trace()
        }
    }
}

/// All count vectors of length `k` summing to `n`.
pub fn compositions(k: usize, n: u32) -> Vec<Vec<u32>> {
    fn rec(k: usize, n: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=n {
            prefix.push(c);
            rec(k - 1, n - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, n, &mut Vec::new(), &mut out);
    out
}

/// Smallest loss over every `n`-run design on `points`.
pub fn enumerate_best(model: &ModelSpec, criterion: &Criterion, points: &[Vec<f64>], n: u32) -> f64 {
    compositions(points.len(), n)
        .iter()
        .map(|c| brute_loss(model, criterion, points, c))
        .fold(f64::INFINITY, f64::min)
}

pub struct Instance {
    pub name: &'static str,
    pub model: ModelSpec,
    pub criterion: Criterion,
    pub points: Vec<Vec<f64>>,
    pub n: u32,
}

fn pts(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|x| vec![*x]).collect()
}

/// Twelve small problems: two linear models and the group-testing model,
/// D and c criteria, at most five candidate points and six runs.
pub fn enumeration_instances() -> Vec<Instance> {
    let c = |v: &[f64]| Criterion::c_optimality(v.to_vec()).unwrap();
    let sym = pts(&[-1.0, -0.5, 0.0, 0.5, 1.0]);
    let skew = pts(&[-1.0, -0.3, 0.0, 0.6, 1.0]);
    let gt_a = pts(&[1.0, 5.0, 17.0, 30.0, 61.0]);
    let gt_b = pts(&[1.0, 5.0, 16.0, 30.0, 61.0]);
    let gt_c = pts(&[2.0, 8.0, 15.0, 16.0, 61.0]);
    vec![
        Instance { name: "line D n=3", model: poly(2), criterion: Criterion::D, points: sym.clone(), n: 3 },
        Instance { name: "line slope n=4", model: poly(2), criterion: c(&[0.0, 1.0]), points: skew.clone(), n: 4 },
        Instance { name: "quadratic D n=5", model: poly(3), criterion: Criterion::D, points: sym.clone(), n: 5 },
        Instance { name: "quadratic D skew n=4", model: poly(3), criterion: Criterion::D, points: skew.clone(), n: 4 },
        Instance { name: "quadratic curvature n=6", model: poly(3), criterion: c(&[0.0, 0.0, 1.0]), points: sym, n: 6 },
        Instance { name: "quadratic prediction n=5", model: poly(3), criterion: c(&[1.0, 0.5, 0.25]), points: skew, n: 5 },
        Instance { name: "group D n=3", model: group_testing(), criterion: Criterion::D, points: gt_a.clone(), n: 3 },
        Instance { name: "group D n=5", model: group_testing(), criterion: Criterion::D, points: gt_a.clone(), n: 5 },
        Instance { name: "group D n=6", model: group_testing(), criterion: Criterion::D, points: gt_c.clone(), n: 6 },
        Instance { name: "group c n=4", model: group_testing(), criterion: c(&[1.0, 0.0, 0.0]), points: gt_b.clone(), n: 4 },
        Instance { name: "group c n=6", model: group_testing(), criterion: c(&[1.0, 0.0, 0.0]), points: gt_b, n: 6 },
        Instance { name: "group c n=5", model: group_testing(), criterion: c(&[1.0, 0.0, 0.0]), points: gt_c, n: 5 },
    ]
}
