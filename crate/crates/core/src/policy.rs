//! The overlap receding-horizon policy.
//!
//! Interval `i` (one-based) starts at `t_i = (i − 1)(N − M) + 1`. At each
//! start the policy observes the state and the `N`-step preview, solves the
//! inner problem once, and applies the first `N − M` planned inputs. The
//! standard receding-horizon controller is the special case `M = N − 1`.

use serde::{Deserialize, Serialize};

use crate::costs::{total_cost, CostModel};
use crate::linsys::{DisturbanceSequence, LinearSystem, Trajectory};
use crate::solver::{self, HorizonProblem, HorizonSolution, SolverConfig};
use crate::{Error, Result, Vector};

/// Tolerance on predicted vs realized states, relative to `1 + ‖x‖∞`.
pub const PREDICTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhcSchedule {
    pub horizon: usize,
    pub overlap: usize,
    pub task_len: usize,
    /// One-based interval start times.
    pub starts: Vec<usize>,
}

/// One recompute interval in zero-based time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub index: usize,
    pub start: usize,
    /// Inputs applied from this plan.
    pub applied: usize,
    /// Inner horizon actually solved (`< N` when cut at the task end).
    pub horizon: usize,
}

impl Interval {
    pub fn truncated(&self, full: usize) -> bool {
        self.horizon < full
    }
}

/// Schedule for preview `N`, overlap `M` and task length `T`; requires
/// `1 ≤ M < N ≤ T`.
pub fn build_schedule(horizon: usize, overlap: usize, task_len: usize) -> Result<RhcSchedule> {
    if overlap < 1 {
        return Err(Error::Condition {
            name: "M >= 1",
            margin: overlap as f64 - 1.0,
        });
    }
    if overlap >= horizon {
        return Err(Error::Condition {
            name: "M < N",
            margin: horizon as f64 - overlap as f64,
        });
    }
    if horizon > task_len {
        return Err(Error::Condition {
            name: "N <= T",
            margin: task_len as f64 - horizon as f64,
        });
    }
    let period = horizon - overlap;
    let starts = (1..=task_len).step_by(period).collect();
    Ok(RhcSchedule {
        horizon,
        overlap,
        task_len,
        starts,
    })
}

impl RhcSchedule {
    /// Recompute period `N − M`.
    pub fn period(&self) -> usize {
        self.horizon - self.overlap
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.starts
            .iter()
            .enumerate()
            .map(|(index, &t)| {
                let start = t - 1;
                let remaining = self.task_len - start;
                Interval {
                    index,
                    start,
                    applied: self.period().min(remaining),
                    horizon: self.horizon.min(remaining),
                }
            })
            .collect()
    }

    pub fn has_truncated_tail(&self) -> bool {
        self.intervals().iter().any(|iv| iv.truncated(self.horizon))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub traj: Trajectory,
    pub total_cost: f64,
    /// `V_i` of every interval's inner problem.
    pub interval_values: Vec<f64>,
    pub interval_solutions: Vec<HorizonSolution>,
    pub schedule: RhcSchedule,
    /// Number of inner solves performed; equals the number of intervals.
    pub solver_calls: usize,
    pub truncated_tail: bool,
}

/// Closed-loop rollout of the overlap policy over `T = sched.task_len` steps.
pub fn run_policy(
    sys: &LinearSystem,
    costs: &dyn CostModel,
    w_full: &DisturbanceSequence,
    x1: &Vector,
    sched: &RhcSchedule,
    cfg: &SolverConfig,
) -> Result<RunResult> {
    let task_len = sched.task_len;
    if w_full.len() < task_len {
        return Err(Error::Length {
            arg: "w_full",
            expected: task_len,
            found: w_full.len(),
        });
    }
    if let Some(len) = costs.len() {
        if len < task_len {
            return Err(Error::Length {
                arg: "cost sequence",
                expected: task_len,
                found: len,
            });
        }
    }
    sys.check_state("x1", x1)?;
    costs.check_dims(sys.n(), sys.m())?;
    cfg.validate()?;

    let w = w_full.as_slice();
    let mut states = vec![x1.clone()];
    let mut inputs: Vec<Vector> = Vec::with_capacity(task_len);
    let mut values = Vec::new();
    let mut solutions: Vec<HorizonSolution> = Vec::new();

    for iv in sched.intervals() {
        let x_t = states.last().unwrap().clone();
        let preview = w[iv.start..iv.start + iv.horizon].to_vec();
        let problem = HorizonProblem::new(sys, costs, iv.start, x_t, preview)
            .map_err(|e| e.in_interval(iv.index + 1))?;

        let guess = match (cfg.warm_start, solutions.last()) {
            (true, Some(prev)) => Some(shifted_tail(&prev.u, sched.period(), iv.horizon, sys.m())),
            _ => None,
        };
        let sol = solver::solve(&problem, cfg, guess.as_deref())
            .map_err(|e| e.in_interval(iv.index + 1))?;
        let predicted = problem.predict(&sol.u);

        for k in 0..iv.applied {
            let t = iv.start + k;
            let next = sys.step_unchecked(&states[t], &sol.u[k], &w[t]);
            let gap = (&next - &predicted[k + 1]).amax();
            if gap > PREDICTION_TOL * (1.0 + next.amax()) {
                return Err(Error::PredictionMismatch { t: t + 1, gap }.in_interval(iv.index + 1));
            }
            inputs.push(sol.u[k].clone());
            states.push(next);
        }
        values.push(sol.value);
        solutions.push(sol);
    }

    let mut traj = Trajectory {
        states,
        inputs,
        disturbances: w[..task_len].to_vec(),
        stage_costs: Vec::new(),
    };
    let total = total_cost(&mut traj, costs)?;
    Ok(RunResult {
        traj,
        total_cost: total,
        interval_values: values,
        solver_calls: solutions.len(),
        interval_solutions: solutions,
        truncated_tail: sched.has_truncated_tail(),
        schedule: sched.clone(),
    })
}

/// Standard receding-horizon control: `M = N − 1`, replan every step.
pub fn run_standard_rhc(
    sys: &LinearSystem,
    costs: &dyn CostModel,
    w_full: &DisturbanceSequence,
    x1: &Vector,
    horizon: usize,
    task_len: usize,
    cfg: &SolverConfig,
) -> Result<RunResult> {
    if horizon < 2 {
        return Err(Error::Condition {
            name: "N >= 2 for standard RHC",
            margin: horizon as f64 - 2.0,
        });
    }
    let sched = build_schedule(horizon, horizon - 1, task_len)?;
    run_policy(sys, costs, w_full, x1, &sched, cfg)
}

/// Previous plan shifted by `period`, zero-padded to `horizon`.
fn shifted_tail(prev: &[Vector], period: usize, horizon: usize, m: usize) -> Vec<Vector> {
    (0..horizon)
        .map(|k| {
            prev.get(period + k)
                .cloned()
                .unwrap_or_else(|| Vector::zeros(m))
        })
        .collect()
}
