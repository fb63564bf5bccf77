//! Stage-cost models `c_t(x, u)`, the state weight `sigma`, and the
//! assumption constants that drive the gain bounds.
//!
//! Time indices are zero-based throughout the crate: stage `t` here is the
//! `(t+1)`-th step of the task.

mod estimate;
mod models;

use serde::{Deserialize, Serialize};

pub use estimate::{
    estimate_alpha_lower, estimate_gamma_alpha_upper, quadratic_value_form, AlphaGrid, Estimate,
    UpperEstimate, UpperSampling,
};
pub use models::{Cost, NonConvexCost, QuadraticCost, SetDistanceCost};

use crate::linsys::Trajectory;
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Quadratic,
    Nonconvex,
    SetDistance,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [
        CostKind::Quadratic,
        CostKind::Nonconvex,
        CostKind::SetDistance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::Quadratic => "quadratic",
            CostKind::Nonconvex => "nonconvex",
            CostKind::SetDistance => "set_distance",
        }
    }
}

impl std::fmt::Display for CostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quad" | "quadratic" => Ok(CostKind::Quadratic),
            "nonconvex" | "non-convex" => Ok(CostKind::Nonconvex),
            "setdist" | "set_distance" | "set-distance" => Ok(CostKind::SetDistance),
            other => Err(Error::Config(format!("unknown cost kind `{other}`"))),
        }
    }
}

/// Behaviour shared by all stage-cost sequences.
pub trait CostModel: Send + Sync + std::fmt::Debug {
    fn kind(&self) -> CostKind;

    /// Number of stages defined, or `None` for time-invariant costs.
    fn len(&self) -> Option<usize>;

    /// `c_t(x, u) ≥ 0`.
    fn eval(&self, t: usize, x: &Vector, u: &Vector) -> f64;

    /// `(∂c/∂x, ∂c/∂u)`, if the model provides it analytically.
    fn gradient(&self, _t: usize, _x: &Vector, _u: &Vector) -> Option<(Vector, Vector)> {
        None
    }

    fn sigma(&self, x: &Vector) -> f64;

    /// Exact lower constant `c_t ≥ α̲ σ`, when the model knows one.
    fn certified_alpha_lower(&self) -> Option<f64> {
        None
    }

    /// Whether every stage cost is convex in `(x, u)`.
    fn is_convex(&self) -> bool {
        false
    }

    /// `μ > 0` such that every `c_t(x, u) − μ/2 ‖u‖²` is still convex in
    /// `(x, u)`. The horizon cost is then `μ`-strongly convex in the controls.
    fn control_convexity(&self) -> Option<f64> {
        None
    }

    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        None
    }

    fn check_dims(&self, n: usize, m: usize) -> Result<()>;
}

/// Sum of stage costs along `traj`, with stage 0 at time `offset`.
/// Fills `traj.stage_costs`.
pub fn total_cost_from(traj: &mut Trajectory, costs: &dyn CostModel, offset: usize) -> Result<f64> {
    let steps = traj.len();
    if let Some(len) = costs.len() {
        if offset + steps > len {
            return Err(Error::Length {
                arg: "cost sequence",
                expected: offset + steps,
                found: len,
            });
        }
    }
    let mut stage_costs = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = offset + k;
        let c = costs.eval(t, &traj.states[k], &traj.inputs[k]);
        if !c.is_finite() {
            return Err(Error::NonFinite {
                what: "stage cost",
                iterate: t,
            });
        }
        if c < 0.0 {
            return Err(Error::NegativeCost { t, value: c });
        }
        stage_costs.push(c);
    }
    let total = stage_costs.iter().sum();
    traj.stage_costs = stage_costs;
    Ok(total)
}

/// `J = Σ_t c_t(x_t, u_t)` over the whole trajectory.
pub fn total_cost(traj: &mut Trajectory, costs: &dyn CostModel) -> Result<f64> {
    total_cost_from(traj, costs, 0)
}

pub fn sigma_eval(costs: &dyn CostModel, x: &Vector) -> f64 {
    costs.sigma(x)
}

/// Constants of the standing assumptions:
/// `c_t ≥ α̲ σ(x)` and `V_t(x, w) ≤ ᾱ σ(x) + γ̄² Σ ‖w_k‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionParams {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub gamma_bar_sq: f64,
    pub beta: f64,
    pub zeta: f64,
    /// Both constants come from exact computations rather than sampling.
    pub certified: bool,
}

impl AssumptionParams {
    /// Uses the smallest admissible `ζ`: `1/β`, nudged above 1 when `β = 1`.
    pub fn new(alpha_lo: f64, alpha_hi: f64, gamma_bar_sq: f64, certified: bool) -> Result<Self> {
        let beta = Self::check_beta(alpha_lo, alpha_hi)?;
        let zeta = (1.0 / beta).max(1.0 + 1e-9);
        Self::with_zeta(alpha_lo, alpha_hi, gamma_bar_sq, zeta, certified)
    }

    pub fn with_zeta(
        alpha_lo: f64,
        alpha_hi: f64,
        gamma_bar_sq: f64,
        zeta: f64,
        certified: bool,
    ) -> Result<Self> {
        let beta = Self::check_beta(alpha_lo, alpha_hi)?;
        if !(gamma_bar_sq.is_finite() && gamma_bar_sq >= 0.0) {
            return Err(Error::invalid(
                "gamma_bar_sq",
                "must be finite and non-negative",
            ));
        }
        if !(zeta.is_finite() && zeta > 1.0) {
            return Err(Error::invalid("zeta", format!("must exceed 1, got {zeta}")));
        }
        // β ≥ 1/ζ, with round-off slack for ζ = 1/β exactly
        if beta * zeta < 1.0 - 1e-12 {
            return Err(Error::invalid(
                "zeta",
                format!("β = {beta} is below 1/ζ = {}", 1.0 / zeta),
            ));
        }
        Ok(Self {
            alpha_lo,
            alpha_hi,
            gamma_bar_sq,
            beta,
            zeta,
            certified,
        })
    }

    fn check_beta(alpha_lo: f64, alpha_hi: f64) -> Result<f64> {
        if !(alpha_lo.is_finite() && alpha_lo > 0.0) {
            return Err(Error::BetaUndefined(format!(
                "α̲ = {alpha_lo} must be positive"
            )));
        }
        if !(alpha_hi.is_finite() && alpha_hi > 0.0) {
            return Err(Error::BetaUndefined(format!(
                "ᾱ = {alpha_hi} must be positive"
            )));
        }
        let beta = alpha_lo / alpha_hi;
        if beta > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "beta",
                format!("β = α̲/ᾱ = {beta} exceeds 1 (α̲ = {alpha_lo}, ᾱ = {alpha_hi})"),
            ));
        }
        Ok(beta.min(1.0))
    }

    pub fn with_gamma_bar_sq(mut self, gamma_bar_sq: f64) -> Self {
        self.gamma_bar_sq = gamma_bar_sq;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{DisturbanceSequence, LinearSystem};
    use crate::Matrix;
    use nalgebra::dvector;

    #[test]
    fn total_cost_examples() {
        let sys = LinearSystem::scalar(1.0, 1.0).unwrap();
        let q = QuadraticCost::constant(Matrix::identity(1, 1), Matrix::identity(1, 1), 3).unwrap();

        let mut traj = sys
            .rollout(
                &dvector![0.0],
                &vec![dvector![0.0]; 3],
                &DisturbanceSequence::zeros(1, 3),
            )
            .unwrap();
        assert_eq!(total_cost(&mut traj, &q).unwrap(), 0.0);
        assert_eq!(traj.stage_costs, vec![0.0; 3]);

        // states (1, 2), input 3
        let mut traj = Trajectory {
            states: vec![dvector![1.0], dvector![2.0]],
            inputs: vec![dvector![3.0]],
            disturbances: vec![dvector![-2.0]],
            stage_costs: vec![],
        };
        assert_eq!(total_cost(&mut traj, &q).unwrap(), 10.0);

        let nc = NonConvexCost::new(0.2);
        let mut traj = Trajectory {
            states: vec![dvector![0.2, 0.2], dvector![0.0, 0.0]],
            inputs: vec![dvector![0.0]],
            disturbances: vec![dvector![0.0, 0.0]],
            stage_costs: vec![],
        };
        assert_eq!(total_cost(&mut traj, &nc).unwrap(), 0.0);
    }

    #[test]
    fn total_cost_length_mismatch() {
        let q = QuadraticCost::constant(Matrix::identity(1, 1), Matrix::identity(1, 1), 1).unwrap();
        let mut traj = Trajectory {
            states: vec![dvector![1.0]; 3],
            inputs: vec![dvector![0.0]; 2],
            disturbances: vec![dvector![0.0]; 2],
            stage_costs: vec![],
        };
        assert!(matches!(
            total_cost(&mut traj, &q),
            Err(Error::Length { .. })
        ));
    }

    #[derive(Debug)]
    struct Broken;
    impl CostModel for Broken {
        fn kind(&self) -> CostKind {
            CostKind::Nonconvex
        }
        fn len(&self) -> Option<usize> {
            None
        }
        fn eval(&self, _: usize, x: &Vector, _: &Vector) -> f64 {
            -x.norm_squared() - 1.0
        }
        fn sigma(&self, _: &Vector) -> f64 {
            0.0
        }
        fn check_dims(&self, _: usize, _: usize) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn negative_eval_rejected() {
        let mut traj = Trajectory {
            states: vec![dvector![1.0]; 2],
            inputs: vec![dvector![0.0]],
            disturbances: vec![dvector![0.0]],
            stage_costs: vec![],
        };
        assert!(matches!(
            total_cost(&mut traj, &Broken),
            Err(Error::NegativeCost { t: 0, .. })
        ));
    }

    #[test]
    fn sigma_examples() {
        let q = QuadraticCost::constant(Matrix::identity(2, 2), Matrix::identity(1, 1), 1).unwrap();
        assert_eq!(sigma_eval(&q, &dvector![3.0, 4.0]), 25.0);
        let sd = SetDistanceCost::new(vec![1.0], dvector![0.5, 0.5], 0.25).unwrap();
        assert_eq!(sigma_eval(&sd, &dvector![0.5, 0.5]), 0.0);
        let sd = SetDistanceCost::new(vec![1.0], dvector![0.5], 0.25).unwrap();
        assert!((sigma_eval(&sd, &dvector![1.0]) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        let p = AssumptionParams::new(1.0, 2.0, 3.0, true).unwrap();
        assert!((p.beta - 0.5).abs() < 1e-12);
        assert!((p.zeta - 2.0).abs() < 1e-12);
        let p = AssumptionParams::new(1.0, 1.0, 3.0, true).unwrap();
        assert!(p.zeta > 1.0 && p.beta == 1.0);
        // β > 1
        assert!(AssumptionParams::new(2.0, 1.0, 1.0, true).is_err());
        // ζ < 1/β
        assert!(AssumptionParams::with_zeta(1.0, 2.0, 1.0, 1.5, true).is_err());
        assert!(AssumptionParams::with_zeta(1.0, 2.0, 1.0, 3.0, true).is_ok());
        assert!(matches!(
            AssumptionParams::new(0.0, 1.0, 1.0, true),
            Err(Error::BetaUndefined(_))
        ));
        assert!(AssumptionParams::new(1.0, 2.0, -1.0, true).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("quad".parse::<CostKind>().unwrap(), CostKind::Quadratic);
        assert_eq!(
            "setdist".parse::<CostKind>().unwrap(),
            CostKind::SetDistance
        );
        assert_eq!(
            "nonconvex".parse::<CostKind>().unwrap(),
            CostKind::Nonconvex
        );
        assert!("linear".parse::<CostKind>().is_err());
    }
}
