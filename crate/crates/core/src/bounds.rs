//! Closed-form gain constants, disturbance-gain certificates and the
//! interval value recursion audit.
//!
//! With `β = α̲/ᾱ` and overlap `M > 1/β²`:
//!
//! ```text
//! κ(M)  = 3/(βM) + 1/(βM)² − 1/M
//! ω_op  = (2 − β + κ(M)) / (β (1 − 1/(β² M)))
//! a     = 1 + β (1/(β² M) − 1),          0 < a < 1
//! J     ≤ ᾱ/(1 − a) σ(x_1) + ω_op γ̄² Σ ‖w_t‖²     (N ≥ 2M)
//! ```

use serde::{Deserialize, Serialize};

use crate::costs::{AssumptionParams, CostModel};
use crate::linsys::{DisturbanceSequence, LinearSystem};
use crate::par::{self, Execution};
use crate::policy::{RhcSchedule, RunResult};
use crate::solver::{self, HorizonProblem, SolverConfig};
use crate::{Error, Result};

/// Relative tolerance on `J ≤ bound`.
pub const BOUND_RTOL: f64 = 1e-9;
/// Absolute tolerance on recursion slacks.
pub const AUDIT_TOL: f64 = 1e-6;

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(
            "beta",
            format!("need 0 < β ≤ 1, got {beta}"),
        ));
    }
    Ok(())
}

fn check_overlap(overlap: usize) -> Result<()> {
    if overlap < 1 {
        return Err(Error::invalid("M", "overlap must be at least 1"));
    }
    Ok(())
}

/// Margin `M − 1/β²`; positive when the overlap is long enough.
pub fn stability_margin(beta: f64, overlap: usize) -> f64 {
    overlap as f64 - 1.0 / (beta * beta)
}

fn check_stability(beta: f64, overlap: usize) -> Result<()> {
    let margin = stability_margin(beta, overlap);
    if !(margin > 0.0) {
        return Err(Error::Condition {
            name: "M > 1/beta^2 (stability threshold)",
            margin,
        });
    }
    Ok(())
}

pub fn kappa(beta: f64, overlap: usize) -> Result<f64> {
    check_beta(beta)?;
    check_overlap(overlap)?;
    let bm = beta * overlap as f64;
    Ok(3.0 / bm + 1.0 / (bm * bm) - 1.0 / overlap as f64)
}

pub fn omega_op(beta: f64, overlap: usize) -> Result<f64> {
    let k = kappa(beta, overlap)?;
    check_stability(beta, overlap)?;
    Ok((2.0 - beta + k) / (beta * (1.0 - 1.0 / (beta * beta * overlap as f64))))
}

pub fn a_factor(beta: f64, overlap: usize) -> Result<f64> {
    check_beta(beta)?;
    check_overlap(overlap)?;
    check_stability(beta, overlap)?;
    let a = 1.0 + beta * (1.0 / (beta * beta * overlap as f64) - 1.0);
    debug_assert!(a > 0.0 && a < 1.0, "a = {a} outside (0, 1)");
    Ok(a)
}

/// Gain guarantee for `M = ⌊N/2⌋` in terms of `ζ ≥ 1/β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfOverlapBound {
    pub overlap: usize,
    pub omega_op: f64,
    /// `γ²_op = ω_op(β, ⌊N/2⌋) · γ̄²`.
    pub gamma_op_sq: f64,
    /// `ρ(N) = ω_op(β, ⌊N/2⌋) − 2ζ`.
    pub rho: f64,
    /// `C/N` with `C = (6ζ − 2 + 1/ζ) · 2ζ²/(2ζ − 1)`.
    pub rho_envelope: f64,
    pub within_envelope: bool,
}

/// Requires `N > 4ζ³` (strict); `ζ > 1` and `β ≥ 1/ζ` are enforced by
/// [`AssumptionParams`].
pub fn half_overlap_bound(params: &AssumptionParams, horizon: usize) -> Result<HalfOverlapBound> {
    let zeta = params.zeta;
    if !(zeta > 1.0) {
        return Err(Error::Condition {
            name: "zeta > 1",
            margin: zeta - 1.0,
        });
    }
    let beta_margin = params.beta - 1.0 / zeta;
    if beta_margin < -1e-12 {
        return Err(Error::Condition {
            name: "beta >= 1/zeta",
            margin: beta_margin,
        });
    }
    let n_margin = horizon as f64 - 4.0 * zeta.powi(3);
    if !(n_margin > 0.0) {
        return Err(Error::Condition {
            name: "N > 4 zeta^3",
            margin: n_margin,
        });
    }
    let overlap = horizon / 2;
    let omega = omega_op(params.beta, overlap)?;
    let rho = omega - 2.0 * zeta;
    let c = (6.0 * zeta - 2.0 + 1.0 / zeta) * 2.0 * zeta * zeta / (2.0 * zeta - 1.0);
    let rho_envelope = c / horizon as f64;
    Ok(HalfOverlapBound {
        overlap,
        omega_op: omega,
        gamma_op_sq: omega * params.gamma_bar_sq,
        rho,
        rho_envelope,
        within_envelope: rho <= rho_envelope,
    })
}

/// `J / Σ_{t<T} ‖w_t‖²`.
pub fn disturbance_gain(result: &RunResult, w_full: &DisturbanceSequence) -> Result<f64> {
    let energy = w_full.energy_range(0, result.schedule.task_len);
    if !(energy > 0.0) {
        return Err(Error::GainUndefined);
    }
    Ok(result.total_cost / energy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub satisfied: bool,
    pub margin: f64,
    /// Whether a failure voids the bound.
    pub gating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub total_cost: f64,
    pub energy: f64,
    /// `None` when the disturbance energy is zero.
    pub gain: Option<f64>,
    /// `None` when a gating condition fails.
    pub omega_op: Option<f64>,
    pub a_factor: Option<f64>,
    /// `+∞` when a gating condition fails.
    pub bound: f64,
    pub satisfied: bool,
    pub conditions: Vec<ConditionCheck>,
    pub truncated_tail: bool,
    pub certified_params: bool,
}

impl GainCertificate {
    pub fn conditions_hold(&self) -> bool {
        self.conditions.iter().all(|c| c.satisfied || !c.gating)
    }

    /// `(bound − J) / max(bound, J, tiny)`; negative means violated.
    pub fn relative_slack(&self) -> f64 {
        if !self.bound.is_finite() {
            return f64::INFINITY;
        }
        let scale = self
            .bound
            .abs()
            .max(self.total_cost.abs())
            .max(f64::MIN_POSITIVE);
        (self.bound - self.total_cost) / scale
    }
}

/// Checks the run against `J ≤ ᾱ/(1 − a) σ(x_1) + ω_op γ̄² Σ ‖w‖²`.
/// Failed hypotheses give an unsatisfiable certificate with an infinite bound.
pub fn certify(
    result: &RunResult,
    params: &AssumptionParams,
    sched: &RhcSchedule,
    w_full: &DisturbanceSequence,
    sigma_x1: f64,
) -> GainCertificate {
    let (horizon, overlap, task_len) = (sched.horizon, sched.overlap, sched.task_len);
    let energy = w_full.energy_range(0, task_len);
    let conditions = vec![
        ConditionCheck {
            name: "N >= 2M".into(),
            satisfied: horizon >= 2 * overlap,
            margin: horizon as f64 - 2.0 * overlap as f64,
            gating: true,
        },
        ConditionCheck {
            name: "M > 1/beta^2".into(),
            satisfied: stability_margin(params.beta, overlap) > 0.0,
            margin: stability_margin(params.beta, overlap),
            gating: true,
        },
        ConditionCheck {
            name: "T > N".into(),
            satisfied: task_len > horizon,
            margin: task_len as f64 - horizon as f64,
            gating: false,
        },
    ];
    let hold = conditions.iter().all(|c| c.satisfied || !c.gating);
    let constants = if hold {
        omega_op(params.beta, overlap)
            .and_then(|w| a_factor(params.beta, overlap).map(|a| (w, a)))
            .ok()
    } else {
        None
    };
    let bound = match constants {
        Some((omega, a)) => {
            params.alpha_hi / (1.0 - a) * sigma_x1 + omega * params.gamma_bar_sq * energy
        }
        None => f64::INFINITY,
    };
    let total_cost = result.total_cost;
    let satisfied = constants.is_some() && total_cost <= bound * (1.0 + BOUND_RTOL);
    GainCertificate {
        total_cost,
        energy,
        gain: (energy > 0.0).then(|| total_cost / energy),
        omega_op: constants.map(|c| c.0),
        a_factor: constants.map(|c| c.1),
        bound,
        satisfied,
        conditions,
        truncated_tail: result.truncated_tail,
        certified_params: params.certified,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSlack {
    /// One-based index `i` of the earlier interval of the pair.
    pub interval: usize,
    pub v_current: f64,
    pub v_next: f64,
    pub rhs: f64,
    /// `rhs − v_next`.
    pub slack: f64,
}

/// Re-solves the inner problem at every full-window interval start and
/// evaluates, for each consecutive pair,
///
/// ```text
/// V_{i+1} ≤ a V_i + β γ̄² Σ_{[t_i, t_{i+1})} ‖w‖² + (β + 1) γ̄² Σ_{[t_{i+1}, t_{i+1}+M)} ‖w‖²
///          + γ̄² Σ_{[t_{i+1}+M, t_{i+1}+N)} ‖w‖².
/// ```
///
/// Intervals whose window is cut at the task end are skipped.
pub fn recursion_audit(
    result: &RunResult,
    params: &AssumptionParams,
    sys: &LinearSystem,
    costs: &dyn CostModel,
    w_full: &DisturbanceSequence,
    cfg: &SolverConfig,
) -> Result<Vec<IntervalSlack>> {
    recursion_audit_with(
        Execution::default(),
        result,
        params,
        sys,
        costs,
        w_full,
        cfg,
    )
}

pub fn recursion_audit_with(
    mode: Execution,
    result: &RunResult,
    params: &AssumptionParams,
    sys: &LinearSystem,
    costs: &dyn CostModel,
    w_full: &DisturbanceSequence,
    cfg: &SolverConfig,
) -> Result<Vec<IntervalSlack>> {
    let sched = &result.schedule;
    let (horizon, overlap) = (sched.horizon, sched.overlap);
    let a = a_factor(params.beta, overlap)?;
    let (beta, gamma) = (params.beta, params.gamma_bar_sq);
    let full: Vec<_> = sched
        .intervals()
        .into_iter()
        .filter(|iv| !iv.truncated(horizon))
        .collect();

    let values = par::map_with(mode, &full, |iv| -> Result<f64> {
        let x = result.traj.states[iv.start].clone();
        let w = w_full.as_slice()[iv.start..iv.start + horizon].to_vec();
        let p = HorizonProblem::new(sys, costs, iv.start, x, w)?;
        solver::solve(&p, cfg, None)
            .map(|s| s.value)
            .map_err(|e| e.in_interval(iv.index + 1))
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;

    let mut slacks = Vec::new();
    for k in 0..full.len().saturating_sub(1) {
        let (cur, next) = (full[k], full[k + 1]);
        if next.index != cur.index + 1 {
            continue;
        }
        let s = next.start;
        let rhs = a * values[k]
            + beta * gamma * w_full.energy_range(cur.start, s)
            + (beta + 1.0) * gamma * w_full.energy_range(s, s + overlap)
            + gamma * w_full.energy_range(s + overlap, s + horizon);
        slacks.push(IntervalSlack {
            interval: cur.index + 1,
            v_current: values[k],
            v_next: values[k + 1],
            rhs,
            slack: rhs - values[k + 1],
        });
    }
    Ok(slacks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_values() {
        assert!((kappa(1.0, 2).unwrap() - 1.25).abs() < 1e-12);
        assert!((kappa(0.5, 8).unwrap() - 0.6875).abs() < 1e-12);
        assert!(kappa(1.0, 1_000_000).unwrap() <= 3e-6);
        assert!((omega_op(1.0, 2).unwrap() - 4.5).abs() < 1e-12);
        assert!((omega_op(0.5, 8).unwrap() - 8.75).abs() < 1e-12);
        assert!((a_factor(1.0, 2).unwrap() - 0.5).abs() < 1e-12);
        assert!((a_factor(0.5, 8).unwrap() - 0.75).abs() < 1e-12);
        assert!((a_factor(1.0, 1_000_000).unwrap() - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn guards() {
        assert!(kappa(0.0, 2).is_err());
        assert!(kappa(-0.5, 2).is_err());
        assert!(matches!(omega_op(1.0, 1), Err(Error::Condition { .. })));
        assert!(matches!(a_factor(0.5, 4), Err(Error::Condition { .. })));
        assert!(a_factor(0.5, 5).is_ok());
    }

    #[test]
    fn half_overlap_examples() {
        let p = AssumptionParams::with_zeta(1.0, 1.0, 1.0, 1.0 + 1e-9, true).unwrap();
        let b = half_overlap_bound(&p, 8).unwrap();
        assert_eq!(b.overlap, 4);
        assert!((b.gamma_op_sq - 1.5625 / 0.75).abs() < 1e-12);
        assert!((b.rho - (1.5625 / 0.75 - 2.0 * (1.0 + 1e-9))).abs() < 1e-12);
        assert!((b.gamma_op_sq / p.gamma_bar_sq - 2.0 * p.zeta - b.rho).abs() == 0.0);

        let p = AssumptionParams::with_zeta(0.5, 1.0, 1.0, 2.0, true).unwrap();
        assert!(matches!(
            half_overlap_bound(&p, 32),
            Err(Error::Condition {
                name: "N > 4 zeta^3",
                ..
            })
        ));
        let b = half_overlap_bound(&p, 33).unwrap();
        assert!((b.gamma_op_sq - omega_op(0.5, 16).unwrap()).abs() < 1e-12);
        // right at N = 4ζ³ the envelope is slightly loose: ρ = 0.875 > 28/33
        assert!((b.rho - 0.875).abs() < 1e-12);
        assert!(!b.within_envelope);
        let b2 = half_overlap_bound(&p, 66).unwrap();
        assert!(b2.rho < b.rho && b2.within_envelope);
        assert!(half_overlap_bound(&p, 1000).unwrap().within_envelope);
    }
}
