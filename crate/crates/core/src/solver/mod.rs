//! The finite-horizon inner problem
//!
//! ```text
//! V_t(x_t, w_{t:t+N-1}) = inf_ũ Σ_{k=0}^{N-1} c_{t+k}(x̃_k, ũ_k),
//! x̃_{k+1} = A x̃_k + B ũ_k + w_{t+k},  x̃_0 = x_t.
//! ```
//!
//! Quadratic costs are solved in closed form from the stacked normal
//! equations. Everything else goes through a BFGS descent on the stacked
//! control vector with Armijo backtracking and adjoint gradients.

mod adjoint;
mod general;
mod quadratic;

use serde::{Deserialize, Serialize};

pub use adjoint::adjoint_gradient;
pub(crate) use adjoint::value_and_gradient;
pub use general::{solve_general, solve_general_from};
pub use quadratic::solve_quadratic;
pub(crate) use quadratic::QuadraticBatch;

use crate::costs::CostModel;
use crate::linsys::LinearSystem;
use crate::{Error, Result, Vector};

/// One instance of the inner problem.
#[derive(Debug, Clone)]
pub struct HorizonProblem<'a> {
    pub sys: &'a LinearSystem,
    pub costs: &'a dyn CostModel,
    /// Absolute (zero-based) time of the first stage.
    pub offset: usize,
    pub x0: Vector,
    /// Previewed disturbances; its length is the horizon `N`.
    pub w: Vec<Vector>,
}

impl<'a> HorizonProblem<'a> {
    pub fn new(
        sys: &'a LinearSystem,
        costs: &'a dyn CostModel,
        offset: usize,
        x0: Vector,
        w: Vec<Vector>,
    ) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("N", "horizon must be at least 1"));
        }
        sys.check_state("x_t", &x0)?;
        for wk in &w {
            sys.check_state("w_preview", wk)?;
        }
        costs.check_dims(sys.n(), sys.m())?;
        if let Some(len) = costs.len() {
            if offset + w.len() > len {
                return Err(Error::Length {
                    arg: "cost preview",
                    expected: offset + w.len(),
                    found: len,
                });
            }
        }
        Ok(Self {
            sys,
            costs,
            offset,
            x0,
            w,
        })
    }

    pub fn horizon(&self) -> usize {
        self.w.len()
    }

    /// States `x̃_0 .. x̃_N` under the control sequence `u`.
    pub fn predict(&self, u: &[Vector]) -> Vec<Vector> {
        let mut states = Vec::with_capacity(u.len() + 1);
        states.push(self.x0.clone());
        for (uk, wk) in u.iter().zip(&self.w) {
            let next = self.sys.step_unchecked(states.last().unwrap(), uk, wk);
            states.push(next);
        }
        states
    }

    /// Total stage cost of rolling `u` out against the preview.
    pub fn evaluate(&self, u: &[Vector]) -> Result<f64> {
        if u.len() != self.horizon() {
            return Err(Error::Length {
                arg: "u",
                expected: self.horizon(),
                found: u.len(),
            });
        }
        let mut x = self.x0.clone();
        let mut total = 0.0;
        for (k, (uk, wk)) in u.iter().zip(&self.w).enumerate() {
            self.sys.check_input("u", uk)?;
            let c = self.costs.eval(self.offset + k, &x, uk);
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    what: "stage cost",
                    iterate: k,
                });
            }
            total += c;
            x = self.sys.step_unchecked(&x, uk, wk);
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stationarity threshold on the gradient ∞-norm.
    pub grad_tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Extra randomized starts for non-convex costs.
    pub restarts: usize,
    /// Standard deviation of the restart perturbations.
    pub restart_scale: f64,
    pub seed: u64,
    /// Start interval `i ≥ 2` from the shifted tail of the previous plan.
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            restarts: 5,
            restart_scale: 0.5,
            seed: 0,
            warm_start: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol", "must be positive"));
        }
        if !(self.initial_step > 0.0) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::invalid(
                "step_rule",
                "need initial_step > 0 and shrink in (0, 1)",
            ));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::invalid("armijo", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSolution {
    pub u: Vec<Vector>,
    /// `V_t`, recomputed by rolling `u` out.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Final gradient ∞-norm (0 for the closed form).
    pub stationarity: f64,
}

/// Closed form when the costs are quadratic, iterative otherwise.
pub fn solve(
    p: &HorizonProblem<'_>,
    cfg: &SolverConfig,
    guess: Option<&[Vector]>,
) -> Result<HorizonSolution> {
    if p.costs.as_quadratic().is_some() {
        solve_quadratic(p)
    } else {
        match guess {
            Some(g) => solve_general_from(p, cfg, g),
            None => solve_general(p, cfg),
        }
    }
}
