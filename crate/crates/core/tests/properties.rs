mod common;

use common::poly;
use optdes::approx::derivative_profile;
use optdes::exact::restart_rng;
use optdes::{
    anneal_once, round_to_exact, search, solve_maximin, solve_single, theorem1_construction, AnnealConfig,
    ApproximateDesign, Criterion, DesignSpace, MaximinProblem, ModelSpec, Objective, PresetId,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn line_grid(k: usize) -> Vec<Vec<f64>> {
    DesignSpace::new_grid(vec![-1.0], vec![1.0], vec![k]).unwrap().enumerate_grid().unwrap()
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, 1..9).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn spaces() -> impl Strategy<Value = DesignSpace> {
    prop_oneof![
        Just(DesignSpace::new_box(vec![0.0, -1.0], vec![1.0, 2.0]).unwrap()),
        Just(DesignSpace::new_grid(vec![0.0], vec![500.0], vec![201]).unwrap()),
        Just(DesignSpace::integer_range(1, 61).unwrap()),
        Just(DesignSpace::new_finite(vec![vec![2.0], vec![8.0], vec![15.0], vec![61.0]]).unwrap()),
        Just(DesignSpace::new_finite(vec![vec![0.0, 0.5], vec![1.0, 0.25], vec![0.3, 0.3]]).unwrap()),
    ]
}

fn start_point(space: &DesignSpace, u: f64) -> Vec<f64> {
    match space {
        DesignSpace::FiniteSet(s) => {
            let i = ((u * s.points().len() as f64) as usize).min(s.points().len() - 1);
            s.points()[i].clone()
        }
        DesignSpace::Box { lower, upper } | DesignSpace::Grid { lower, upper, .. } => {
            lower.iter().zip(upper).map(|(l, h)| l + u * (h - l)).collect()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn rounding_conserves_runs(w in weights(), n in 1u32..200) {
        let pts: Vec<Vec<f64>> = (0..w.len()).map(|i| vec![i as f64]).collect();
        let d = ApproximateDesign::new(pts, w.clone()).unwrap();
        let e = round_to_exact(&d, n).unwrap();
        prop_assert_eq!(e.n(), n);
        if w.len() <= n as usize {
            for (i, wi) in w.iter().enumerate() {
                let c = e.points().iter().position(|p| p[0] == i as f64).map_or(0, |j| e.counts()[j]);
                prop_assert!((c as f64 - n as f64 * wi).abs() < 1.0);
            }
        }
    }

    #[test]
    fn proposals_stay_in_space(space in spaces(), u in 0.0f64..1.0, scale in 0.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = start_point(&space, u);
        let ranges = space.ranges();
        let s: Vec<f64> = ranges.iter().map(|r| r * scale).collect();
        let y = space.propose_neighbor(&x, &s, &mut rng);
        prop_assert!(space.contains(&y).unwrap(), "{:?} -> {:?}", x, y);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn annealing_keeps_runs_and_membership(n in 3u32..25, seed in any::<u64>(), which in 0usize..3) {
        let (model, space) = match which {
            0 => (common::group_testing(), DesignSpace::integer_range(1, 61).unwrap()),
            1 => (poly(3), DesignSpace::new_grid(vec![-1.0], vec![1.0], vec![21]).unwrap()),
            _ => (poly(3), DesignSpace::new_finite(line_grid(7)).unwrap()),
        };
        let cands = space.enumerate_grid().unwrap();
        let (oad, _) = solve_single(&model, &Criterion::D, &cands, &Default::default()).unwrap();
        let objective = Objective::single(model, Criterion::D).unwrap();
        let init = round_to_exact(&oad, n).unwrap();
        let cfg = AnnealConfig { k: Some(20), ..Default::default() }
            .resolve(n, objective.loss(&init))
            .unwrap();
        let mut rng = restart_rng(seed, 0);
        let (last, trace) = anneal_once(&objective, &init, &space, &cfg, &mut rng).unwrap();
        prop_assert_eq!(last.n(), n);
        for p in last.points() {
            prop_assert!(space.contains(p).unwrap());
        }
        for w in trace.records.windows(2) {
            prop_assert!(w[1].temperature <= w[0].temperature);
            prop_assert!(w[1].best_loss <= w[0].best_loss);
        }
        for r in &trace.records {
            prop_assert!(r.accepted || r.proposed_loss >= r.current_loss);
            prop_assert!(r.best_loss <= trace.initial_loss);
        }
        prop_assert!((objective.loss(&last) - trace.final_loss).abs() <= 1e-9 * trace.final_loss);
    }

    #[test]
    fn converged_designs_satisfy_equivalence(t0 in -1.0f64..1.0, t1 in 0.5f64..3.0, t2 in 0.5f64..3.0, t3 in -1.0f64..1.0) {
        let model = ModelSpec::new(PresetId::Logit2Interaction, vec![t0, t1, t2, t3]).unwrap();
        let cands = DesignSpace::new_grid(vec![0.0; 2], vec![1.0; 2], vec![11; 2]).unwrap().enumerate_grid().unwrap();
        for criterion in [Criterion::D, Criterion::a_optimality(4)] {
            let (d, rep) = solve_single(&model, &criterion, &cands, &Default::default()).unwrap();
            prop_assert!(rep.verified);
            let eps = rep.eq_tolerance;
            let profile = derivative_profile(&model, &criterion, &d, &cands).unwrap();
            prop_assert!(profile.iter().all(|&v| v <= eps));
            let at_support = derivative_profile(&model, &criterion, &d, d.points()).unwrap();
            prop_assert!(at_support.iter().all(|v| v.abs() <= 10.0 * eps), "{:?}", at_support);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Quadratic D-optimality against extrapolated prediction from a line:
    /// the maximin design beats both single-objective optima and the uniform
    /// design in its worst efficiency.
    #[test]
    fn maximin_dominates_single_objectives(t in 1.5f64..3.0) {
        let cands = line_grid(21);
        let objectives = vec![
            (poly(3), Criterion::D),
            (poly(2), Criterion::c_optimality(vec![1.0, t]).unwrap()),
        ];
        let mut refs = Vec::new();
        let mut optima = Vec::new();
        for (m, c) in &objectives {
            let (d, rep) = solve_single(m, c, &cands, &Default::default()).unwrap();
            refs.push(rep.loss);
            optima.push(d);
        }
        let problem = MaximinProblem::new(objectives, refs).unwrap();
        let (_, rep) = solve_maximin(&problem, &cands, &Default::default()).unwrap();
        let best = rep.min_efficiency.unwrap();
        let worst = |d: &ApproximateDesign| {
            problem
                .efficiencies(d)
                .map(|e| e.into_iter().fold(f64::INFINITY, f64::min))
                .unwrap_or(0.0)
        };
        let uniform = ApproximateDesign::uniform(cands.clone()).unwrap();
        for d in optima.iter().chain([&uniform]) {
            prop_assert!(best > worst(d), "maximin {} vs {}", best, worst(d));
        }
    }
}

#[test]
fn theorem1_efficiency_approaches_one() {
    let model = poly(3);
    let criterion = Criterion::a_optimality(3);
    let cands = line_grid(41);
    let (oad, rep) = solve_single(&model, &criterion, &cands, &Default::default()).unwrap();
    let effs: Vec<f64> = [10u32, 20, 40, 80, 160]
        .iter()
        .map(|&n| {
            let e = theorem1_construction(&oad, n).unwrap();
            rep.loss / criterion.design_loss(&model, &e.to_approximate()).unwrap()
        })
        .collect();
    assert!(effs.iter().all(|&e| e <= 1.0 + 1e-9), "{effs:?}");
    assert!(effs[4] >= 0.99, "{effs:?}");
    assert!(effs[4] >= effs[0], "{effs:?}");
    // Without n w >= 1 the construction refuses.
    assert!(theorem1_construction(&oad, 2).is_err());
}

#[test]
fn nested_grids_never_lose() {
    let model = ModelSpec::new(PresetId::Logit2Interaction, vec![-3.0, 4.0, 6.0, 1.0]).unwrap();
    let losses: Vec<f64> = [6usize, 11, 21, 41]
        .iter()
        .map(|&k| {
            let cands = DesignSpace::new_grid(vec![0.0; 2], vec![1.0; 2], vec![k; 2]).unwrap().enumerate_grid().unwrap();
            solve_single(&model, &Criterion::D, &cands, &Default::default()).unwrap().1.loss
        })
        .collect();
    // Each grid contains the previous one, so the optimum cannot get worse;
    // the slack covers the solver's stopping tolerance.
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-5), "{losses:?}");
    }
}

fn group_search(threads: usize) -> (Vec<Vec<f64>>, Vec<u32>, Vec<f64>) {
    let model = common::group_testing();
    let c = Criterion::c_optimality(vec![1.0, 0.0, 0.0]).unwrap();
    let space = DesignSpace::integer_range(1, 61).unwrap();
    let cands = space.enumerate_grid().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let (oad, _) = solve_single(&model, &c, &cands, &Default::default()).unwrap();
        let objective = Objective::single(model, c).unwrap();
        let cfg = AnnealConfig { restarts: 6, seed: 11, ..Default::default() };
        let out = search(&objective, &oad, 13, &space, &cfg).unwrap();
        let finals = out.reports.iter().map(|r| r.final_loss).collect();
        (out.best.points().to_vec(), out.best.counts().to_vec(), finals)
    })
}

#[test]
fn search_is_deterministic_across_thread_counts() {
    let one = group_search(1);
    assert_eq!(one, group_search(1));
    assert_eq!(one, group_search(3));
}
