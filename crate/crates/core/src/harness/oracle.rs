//! Exhaustive grid search over open-loop control sequences, used as a
//! global comparator on tiny instances. Disturbances are known in advance,
//! so the best open-loop sequence is the best possible closed-loop cost.
//!
//! The search is a depth-first branch and bound. For quadratic costs the
//! unconstrained cost-to-go from a backward Riccati recursion is a valid
//! lower bound on the remaining grid-restricted cost. When the horizon cost
//! is `μ`-strongly convex in the controls, any approximate minimiser `û` of
//! the remaining stages gives `f* ≥ f(û) − ‖∇f(û)‖²/(2μ)`. Other costs fall
//! back to the trivial bound 0. Pruning never discards a grid point that
//! could beat the incumbent, so the result equals full enumeration.

use super::scenario::Scenario;
use crate::costs::{CostModel, QuadraticCost};
use crate::linsys::LinearSystem;
use crate::solver::{adjoint_gradient, solve_general, HorizonProblem, SolverConfig};
use crate::{Error, Matrix, Result, Vector};

/// Maximum number of candidate evaluations.
pub const ORACLE_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub u: Vec<Vector>,
    /// Candidate evaluations performed.
    pub nodes: u64,
}

/// `V_k(x) = xᵀ P x + 2 sᵀ x + r`, the optimal unconstrained cost of stages
/// `k..T` with the disturbances known.
#[derive(Debug, Clone, PartialEq)]
pub struct CostToGo {
    pub p: Matrix,
    pub s: Vector,
    pub r: f64,
}

impl CostToGo {
    pub fn eval(&self, x: &Vector) -> f64 {
        (x.transpose() * &self.p * x)[0] + 2.0 * self.s.dot(x) + self.r
    }
}

/// Backward recursion from `V_T = 0`. Returns `T + 1` entries.
///
/// With `L = B (R + BᵀPB)⁻¹ Bᵀ`, `P̃ = P − PLP` and `s̃ = s − PLs`:
/// `P_k = Q + AᵀP̃A`, `s_k = Aᵀ(P̃w + s̃)`,
/// `r_k = r − sᵀLs + wᵀP̃w + 2s̃ᵀw`.
pub fn riccati_cost_to_go(
    sys: &LinearSystem,
    cost: &QuadraticCost,
    w: &[Vector],
) -> Result<Vec<CostToGo>> {
    let len = w.len();
    if cost.stages() < len {
        return Err(Error::Length {
            arg: "cost sequence",
            expected: len,
            found: cost.stages(),
        });
    }
    let n = sys.n();
    let (a, b) = (sys.a(), sys.b());
    let mut out = vec![
        CostToGo {
            p: Matrix::zeros(n, n),
            s: Vector::zeros(n),
            r: 0.0,
        };
        len + 1
    ];
    for k in (0..len).rev() {
        let next = &out[k + 1];
        let gram = cost.r(k) + b.transpose() * &next.p * b;
        let inv = gram.cholesky().ok_or(Error::Singular)?.inverse();
        let l = b * inv * b.transpose();
        let pl = &next.p * &l;
        let p_tilde = &next.p - &pl * &next.p;
        let s_tilde = &next.s - &pl * &next.s;
        let wk = &w[k];
        let p = cost.q(k) + a.transpose() * &p_tilde * a;
        let s = a.transpose() * (&p_tilde * wk + &s_tilde);
        let r = next.r - (next.s.transpose() * &l * &next.s)[0]
            + (wk.transpose() * &p_tilde * wk)[0]
            + 2.0 * s_tilde.dot(wk);
        out[k] = CostToGo {
            p: (&p + p.transpose()) * 0.5,
            s,
            r,
        };
    }
    Ok(out)
}

fn grid_points(grid_res: f64, u_box: f64) -> Result<Vec<f64>> {
    if !(grid_res > 0.0 && grid_res.is_finite()) {
        return Err(Error::invalid("grid_res", "must be positive"));
    }
    if !(u_box > 0.0 && u_box.is_finite()) {
        return Err(Error::invalid("u_box", "must be positive"));
    }
    let steps = (2.0 * u_box / grid_res + 1e-9).floor();
    if steps > 1e7 {
        return Err(Error::BudgetExceeded {
            budget: ORACLE_BUDGET,
        });
    }
    Ok((0..=steps as usize)
        .map(|j| -u_box + j as f64 * grid_res)
        .collect())
}

enum TailBound {
    Riccati(Vec<CostToGo>),
    StronglyConvex { modulus: f64, solver: SolverConfig },
    Zero,
}

struct Search<'a> {
    sys: &'a LinearSystem,
    costs: &'a dyn CostModel,
    w: &'a [Vector],
    inputs: Vec<Vector>,
    tail: TailBound,
    budget: u64,
    nodes: u64,
    best: f64,
    best_u: Vec<Vector>,
    path: Vec<Vector>,
}

impl Search<'_> {
    fn lower_tail(&self, k: usize, x: &Vector) -> f64 {
        if k == self.w.len() {
            return 0.0;
        }
        let b = match &self.tail {
            TailBound::Riccati(v) => v[k].eval(x),
            TailBound::StronglyConvex { modulus, solver } => {
                self.convex_tail(k, x, *modulus, solver).unwrap_or(0.0)
            }
            TailBound::Zero => return 0.0,
        };
        // a little below the computed value so round-off never prunes the optimum
        (b - 1e-9 * (1.0 + b.abs())).max(0.0)
    }

    fn convex_tail(
        &self,
        k: usize,
        x: &Vector,
        modulus: f64,
        solver: &SolverConfig,
    ) -> Option<f64> {
        let p =
            HorizonProblem::new(self.sys, self.costs, k, x.clone(), self.w[k..].to_vec()).ok()?;
        let sol = solve_general(&p, solver).ok()?;
        let grad = adjoint_gradient(&p, &sol.u).ok()?;
        let grad_sq: f64 = grad.iter().map(|g| g.norm_squared()).sum();
        let b = sol.value - grad_sq / (2.0 * modulus);
        b.is_finite().then_some(b)
    }

    fn visit(&mut self, k: usize, x: &Vector, acc: f64) -> Result<()> {
        if k == self.w.len() {
            if acc < self.best {
                self.best = acc;
                self.best_u = self.path.clone();
            }
            return Ok(());
        }
        self.nodes += self.inputs.len() as u64;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded {
                budget: self.budget,
            });
        }
        let mut children: Vec<(f64, f64, usize, Vector)> = Vec::with_capacity(self.inputs.len());
        for (j, u) in self.inputs.iter().enumerate() {
            let stage = self.costs.eval(k, x, u);
            let next = self.sys.step_unchecked(x, u, &self.w[k]);
            let bound = acc + stage + self.lower_tail(k + 1, &next);
            children.push((bound, acc + stage, j, next));
        }
        children.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        for (bound, acc_next, j, next) in children {
            if bound >= self.best {
                break;
            }
            self.path.push(self.inputs[j].clone());
            self.visit(k + 1, &next, acc_next)?;
            self.path.pop();
        }
        Ok(())
    }
}

/// Grid minimum of `Σ_{k<T} c_k(x_k, u_k)` over `u_k ∈ {−u_box + j·grid_res}^m`
/// with `T = w.len()`.
pub fn grid_search(
    sys: &LinearSystem,
    costs: &dyn CostModel,
    w: &[Vector],
    x1: &Vector,
    grid_res: f64,
    u_box: f64,
    budget: u64,
) -> Result<OracleResult> {
    sys.check_state("x1", x1)?;
    costs.check_dims(sys.n(), sys.m())?;
    if w.is_empty() {
        return Err(Error::invalid("T", "need at least one step"));
    }
    let axis = grid_points(grid_res, u_box)?;
    let m = sys.m();
    let per_stage = (axis.len() as f64).powi(m as i32);
    if per_stage > budget as f64 {
        return Err(Error::BudgetExceeded { budget });
    }
    let mut inputs = Vec::with_capacity(per_stage as usize);
    for idx in 0..per_stage as usize {
        let mut rem = idx;
        inputs.push(Vector::from_fn(m, |_, _| {
            let v = axis[rem % axis.len()];
            rem /= axis.len();
            v
        }));
    }
    let tail = match (costs.as_quadratic(), costs.control_convexity()) {
        (Some(q), _) => TailBound::Riccati(riccati_cost_to_go(sys, q, w)?),
        (None, Some(modulus)) if modulus > 0.0 => TailBound::StronglyConvex {
            modulus,
            solver: SolverConfig {
                grad_tol: 1e-10,
                restarts: 0,
                ..Default::default()
            },
        },
        _ => TailBound::Zero,
    };
    let mut search = Search {
        sys,
        costs,
        w,
        inputs,
        tail,
        budget,
        nodes: 0,
        best: f64::INFINITY,
        best_u: Vec::new(),
        path: Vec::with_capacity(w.len()),
    };
    search.visit(0, x1, 0.0)?;
    Ok(OracleResult {
        value: search.best,
        u: search.best_u,
        nodes: search.nodes,
    })
}

/// Grid optimum of the whole task `t < T` of a scenario.
pub fn brute_force_oracle(sc: &Scenario, grid_res: f64, u_box: f64) -> Result<OracleResult> {
    let w = &sc.w_full.as_slice()[..sc.task_len()];
    grid_search(&sc.sys, &sc.cost, w, &sc.x1, grid_res, u_box, ORACLE_BUDGET)
}
