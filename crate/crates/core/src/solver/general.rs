use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{value_and_gradient, HorizonProblem, HorizonSolution, SolverConfig};
use crate::linsys::{stack_vectors, unstack_vector};
use crate::{Error, Matrix, Result, Vector};

const MAX_BACKTRACKS: usize = 60;
const TIE_RTOL: f64 = 1e-12;

/// Iterative solve from the zero control sequence.
pub fn solve_general(p: &HorizonProblem<'_>, cfg: &SolverConfig) -> Result<HorizonSolution> {
    let zero = vec![Vector::zeros(p.sys.m()); p.horizon()];
    solve_general_from(p, cfg, &zero)
}

/// Iterative solve from `guess`. Non-convex costs get `cfg.restarts` extra
/// starts drawn as Gaussian perturbations of `guess`; the lowest value wins,
/// ties broken by the smaller control energy.
pub fn solve_general_from(
    p: &HorizonProblem<'_>,
    cfg: &SolverConfig,
    guess: &[Vector],
) -> Result<HorizonSolution> {
    cfg.validate()?;
    if guess.len() != p.horizon() {
        return Err(Error::Length {
            arg: "initial guess",
            expected: p.horizon(),
            found: guess.len(),
        });
    }
    let start = stack_vectors(guess);
    let mut best = descend(p, cfg, start.clone())?;

    if !p.costs.is_convex() && cfg.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg.seed, p.offset));
        let normal = Normal::new(0.0, cfg.restart_scale.max(0.0))
            .map_err(|e| Error::invalid("restart_scale", e.to_string()))?;
        for _ in 0..cfg.restarts {
            let perturbed = start.map(|v| v + normal.sample(&mut rng));
            let candidate = descend(p, cfg, perturbed)?;
            if better(&candidate, &best) {
                best = candidate;
            }
        }
    }

    let u = unstack_vector(&best.u, p.sys.m());
    let value = p.evaluate(&u)?;
    Ok(HorizonSolution {
        u,
        value,
        converged: best.grad_norm <= cfg.grad_tol,
        iterations: best.iterations,
        stationarity: best.grad_norm,
    })
}

fn restart_seed(seed: u64, offset: usize) -> u64 {
    seed ^ (offset as u64)
        .wrapping_add(1)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn better(a: &Descent, b: &Descent) -> bool {
    let scale = a.value.abs().max(b.value.abs()).max(1.0);
    if (a.value - b.value).abs() <= TIE_RTOL * scale {
        a.u.norm() < b.u.norm()
    } else {
        a.value < b.value
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Descent {
    pub u: Vector,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial point.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

fn objective(p: &HorizonProblem<'_>, u: &Vector, iterate: usize) -> Result<(f64, Vector)> {
    let m = p.sys.m();
    let (value, grads) = value_and_gradient(p, &unstack_vector(u, m))?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "cost",
            iterate,
        });
    }
    let g = stack_vectors(&grads);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            iterate,
        });
    }
    Ok((value, g))
}

fn cost_only(p: &HorizonProblem<'_>, u: &Vector) -> f64 {
    p.evaluate(&unstack_vector(u, p.sys.m()))
        .unwrap_or(f64::INFINITY)
}

/// BFGS on the stacked controls with Armijo backtracking. Every accepted
/// step satisfies `f_new ≤ f`, so the trace is non-increasing.
pub(crate) fn descend(
    p: &HorizonProblem<'_>,
    cfg: &SolverConfig,
    start: Vector,
) -> Result<Descent> {
    let dim = start.len();
    let mut u = start;
    let (mut f, mut g) = objective(p, &u, 0)?;
    let mut inv_hess = Matrix::identity(dim, dim);
    let mut fresh = true;
    let mut trace = vec![f];
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if g.amax() <= cfg.grad_tol {
            break;
        }
        let mut dir = -(&inv_hess * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            inv_hess.fill_with_identity();
            fresh = true;
            dir = -g.clone();
            slope = -g.norm_squared();
        }

        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &u + &dir * step;
            let ft = cost_only(p, &trial);
            if ft <= f + cfg.armijo * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= cfg.shrink;
        }
        let (u_new, _) = match accepted {
            Some(a) => a,
            None if !fresh => {
                // stale curvature estimate; retry along the gradient
                inv_hess.fill_with_identity();
                fresh = true;
                continue;
            }
            None => break,
        };

        iterations += 1;
        let (f_new, g_new) = objective(p, &u_new, iterations)?;
        let s = &u_new - &u;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if fresh {
                inv_hess *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &inv_hess * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            inv_hess.ger(-rho, &hy, &s, 1.0);
            inv_hess.ger(-rho, &s, &hy, 1.0);
            inv_hess.ger(rho * rho * yhy + rho, &s, &s, 1.0);
            fresh = false;
        }
        u = u_new;
        f = f_new;
        g = g_new;
        trace.push(f);
    }

    Ok(Descent {
        u,
        value: f,
        grad_norm: g.amax(),
        iterations,
        trace,
    })
}
