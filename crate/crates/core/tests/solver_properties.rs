mod common;

use common::{quadratic, rng, system, vector, vectors};
use prhc::costs::{
    estimate_alpha_lower, estimate_gamma_alpha_upper, AlphaGrid, AssumptionParams, Cost, CostModel,
    NonConvexCost, SetDistanceCost, UpperSampling,
};
use prhc::linsys::{stack_vectors, unstack_vector, DisturbanceSequence};
use prhc::solver::{
    adjoint_gradient, solve_general, solve_quadratic, HorizonProblem, SolverConfig,
};
use prhc::Vector;
use proptest::prelude::*;
use rand::Rng;

fn any_cost(seed: u64, kind: usize, n: usize, len: usize) -> Cost {
    let mut r = rng(seed ^ 0xC057);
    match kind {
        0 => Cost::Quadratic(quadratic(&mut r, n, n.min(2), len)),
        1 => Cost::Nonconvex(NonConvexCost::new(0.2)),
        _ => {
            let a = (0..len).map(|_| r.random_range(0.05..1.0)).collect();
            Cost::SetDistance(SetDistanceCost::new(a, Vector::from_element(n, 0.5), 0.25).unwrap())
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stacked_prediction_matches_rollout(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3, horizon in 1usize..=7) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, m);
        let x = vector(&mut r, n, 1.0);
        let u = vectors(&mut r, horizon, m, 1.0);
        let w = vectors(&mut r, horizon, n, 1.0);
        let traj = sys.rollout(&x, &u, &DisturbanceSequence::tight(w.clone()).unwrap()).unwrap();
        let stacked = sys.stack(horizon).unwrap().predict(&x, &stack_vectors(&u), &stack_vectors(&w));
        for (k, xk) in unstack_vector(&stacked, n).iter().enumerate() {
            let gap = (xk - &traj.states[k]).amax();
            prop_assert!(gap <= 1e-10 * (1.0 + xk.amax()), "offset {k}: gap {gap}");
        }
    }

    #[test]
    fn adjoint_matches_central_differences(seed in any::<u64>(), kind in 0usize..3, horizon in 1usize..=8) {
        let mut r = rng(seed);
        let n = if kind == 1 { r.random_range(2..=3) } else { r.random_range(1..=3) };
        let m = n.min(2);
        let sys = system(&mut r, n, m);
        let cost = any_cost(seed, kind, n, horizon);
        let p = HorizonProblem::new(&sys, &cost, 0, vector(&mut r, n, 1.0), vectors(&mut r, horizon, n, 1.0)).unwrap();
        let u = vectors(&mut r, horizon, m, 1.0);
        let grad = adjoint_gradient(&p, &u).unwrap();
        let h = 1e-6;
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..horizon {
            for j in 0..m {
                let (mut up, mut down) = (u.clone(), u.clone());
                up[k][j] += h;
                down[k][j] -= h;
                let fd = (p.evaluate(&up).unwrap() - p.evaluate(&down).unwrap()) / (2.0 * h);
                err = err.max((fd - grad[k][j]).abs());
                scale = scale.max(grad[k][j].abs());
            }
        }
        prop_assert!(err <= 1e-5 * scale.max(1e-3), "error {err} at gradient scale {scale}");
    }

    #[test]
    fn closed_form_is_a_minimum(seed in any::<u64>(), n in 1usize..=3, horizon in 1usize..=6) {
        let mut r = rng(seed);
        let m = r.random_range(1..=n);
        let sys = system(&mut r, n, m);
        let cost = quadratic(&mut r, n, m, horizon);
        let p = HorizonProblem::new(&sys, &cost, 0, vector(&mut r, n, 1.0), vectors(&mut r, horizon, n, 1.0)).unwrap();
        let sol = solve_quadratic(&p).unwrap();
        let grad = adjoint_gradient(&p, &sol.u).unwrap();
        let g = grad.iter().map(|g| g.amax()).fold(0.0, f64::max);
        prop_assert!(g <= 1e-7 * sol.value.max(1.0), "gradient {g}");
        for scale in [1e-3, 1e-1, 1.0] {
            let delta = vectors(&mut r, horizon, m, scale);
            let moved: Vec<Vector> = sol.u.iter().zip(&delta).map(|(a, b)| a + b).collect();
            prop_assert!(p.evaluate(&moved).unwrap() >= sol.value - 1e-10 * sol.value.max(1.0));
        }
    }

    #[test]
    fn reported_value_matches_rollout(seed in any::<u64>(), kind in 0usize..3, horizon in 1usize..=5) {
        let mut r = rng(seed);
        let n = if kind == 1 { 2 } else { r.random_range(1..=3) };
        let m = n.min(2);
        let sys = system(&mut r, n, m);
        let cost = any_cost(seed, kind, n, horizon + 2);
        let x0 = vector(&mut r, n, 1.0);
        let w = vectors(&mut r, horizon, n, 0.5);
        let p = HorizonProblem::new(&sys, &cost, 2, x0.clone(), w.clone()).unwrap();
        let sol = solve_general(&p, &SolverConfig::default()).unwrap();
        let mut x = x0;
        let mut total = 0.0;
        for k in 0..horizon {
            total += cost.eval(2 + k, &x, &sol.u[k]);
            x = sys.a() * &x + sys.b() * &sol.u[k] + &w[k];
        }
        prop_assert!((total - sol.value).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn stage_costs_dominate_alpha_sigma(seed in any::<u64>(), kind in 0usize..3) {
        let mut r = rng(seed);
        let n = if kind == 1 { 2 } else { r.random_range(1..=3) };
        let m = n.min(2);
        let cost = any_cost(seed, kind, n, 4);
        let alpha = estimate_alpha_lower(&cost, n, m, &AlphaGrid::default()).unwrap().value;
        for t in 0..4 {
            let x = vector(&mut r, n, 2.0);
            let u = vector(&mut r, m, 2.0);
            prop_assert!(cost.eval(t, &x, &u) >= alpha * cost.sigma(&x) - 1e-12);
        }
    }

    #[test]
    fn beta_is_the_alpha_ratio(seed in any::<u64>(), n in 1usize..=3, horizon in 1usize..=5) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 1);
        let cost = Cost::Quadratic(quadratic(&mut r, n, 1, horizon + 3));
        let lower = estimate_alpha_lower(&cost, n, 1, &AlphaGrid::default()).unwrap();
        let upper = estimate_gamma_alpha_upper(&sys, &cost, horizon, lower.value, &UpperSampling::default()).unwrap();
        let params = AssumptionParams::new(lower.value, upper.alpha_hi, upper.gamma_bar_sq, true).unwrap();
        prop_assert!(params.beta > 0.0 && params.beta <= 1.0);
        prop_assert!((params.beta - lower.value / upper.alpha_hi).abs() <= 1e-15);
        prop_assert!(params.beta * params.zeta >= 1.0 - 1e-12);
    }
}

/// The exact quadratic pair covers fresh `(x, w̃)` draws on every full window.
#[test]
fn exact_certificate_covers_fresh_samples() {
    let mut r = rng(2024);
    let (n, horizon, stages) = (2, 4, 8);
    let sys = system(&mut r, n, 1);
    let cost = Cost::Quadratic(quadratic(&mut r, n, 1, stages));
    let lower = estimate_alpha_lower(&cost, n, 1, &AlphaGrid::default()).unwrap();
    let upper =
        estimate_gamma_alpha_upper(&sys, &cost, horizon, lower.value, &UpperSampling::default())
            .unwrap();
    assert!(upper.certified);
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let offset = r.random_range(0..=stages - horizon);
        let x = vector(&mut r, n, 3.0);
        let w = vectors(&mut r, horizon, n, 2.0);
        let energy: f64 = w.iter().map(|v| v.norm_squared()).sum();
        let p = HorizonProblem::new(&sys, &cost, offset, x.clone(), w).unwrap();
        let v = solve_quadratic(&p).unwrap().value;
        let rhs = upper.alpha_hi * x.norm_squared() + upper.gamma_bar_sq * energy;
        worst = worst.min((rhs - v) / rhs.max(1e-12));
    }
    assert!(worst >= -1e-10, "worst relative slack {worst}");
}

#[test]
fn scalar_textbook_problem() {
    let sys = prhc::linsys::LinearSystem::scalar(1.0, 1.0).unwrap();
    let cost = prhc::costs::QuadraticCost::constant(
        prhc::Matrix::from_element(1, 1, 1.0),
        prhc::Matrix::from_element(1, 1, 1.0),
        2,
    )
    .unwrap();
    let p = HorizonProblem::new(
        &sys,
        &cost,
        0,
        Vector::from_element(1, 1.0),
        vec![Vector::zeros(1); 2],
    )
    .unwrap();
    let closed = solve_quadratic(&p).unwrap();
    let iterative = solve_general(&p, &SolverConfig::default()).unwrap();
    assert!((closed.value - 1.5).abs() < 1e-12);
    assert!((closed.u[0][0] + 0.5).abs() < 1e-12 && closed.u[1][0].abs() < 1e-12);
    assert!((iterative.value - 1.5).abs() < 1e-9);
}
