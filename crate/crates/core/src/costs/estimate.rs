//! Estimates of `α̲`, `ᾱ` and `γ̄²`.
//!
//! Quadratic costs get exact values: `V_t` is a quadratic form in
//! `(x, w̃)` and the constants come from eigenvalues of its blocks.
//! Other models are sampled and flagged as such.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CostModel, QuadraticCost};
use crate::linsys::LinearSystem;
use crate::par::{self, Execution};
use crate::solver::{self, HorizonProblem, QuadraticBatch, SolverConfig};
use crate::{Error, Matrix, Result, Vector};

const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub certified: bool,
    /// Number of sample points behind a sampled value (0 when certified).
    pub samples: usize,
}

/// Box grid for the sampled `α̲` estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub lo: f64,
    pub hi: f64,
    pub points_per_axis: usize,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            lo: -2.0,
            hi: 2.0,
            points_per_axis: 41,
        }
    }
}

/// `α̲` with `c_t(x, u) ≥ α̲ σ(x)`.
pub fn estimate_alpha_lower(
    costs: &dyn CostModel,
    n: usize,
    m: usize,
    grid: &AlphaGrid,
) -> Result<Estimate> {
    if let Some(value) = costs.certified_alpha_lower() {
        if !(value > 0.0) {
            return Err(Error::BetaUndefined(format!("α̲ = {value} is not positive")));
        }
        return Ok(Estimate {
            value,
            certified: true,
            samples: 0,
        });
    }
    if grid.points_per_axis < 2 || !(grid.hi > grid.lo) {
        return Err(Error::invalid(
            "alpha grid",
            "need hi > lo and at least 2 points per axis",
        ));
    }
    let stages = costs.len().unwrap_or(1);
    let u0 = Vector::zeros(m);
    let total = grid.points_per_axis.pow(n as u32);
    let spacing = (grid.hi - grid.lo) / (grid.points_per_axis - 1) as f64;
    let mut best = f64::INFINITY;
    let mut used = 0;
    let mut x = Vector::zeros(n);
    for idx in 0..total {
        let mut rem = idx;
        for i in 0..n {
            x[i] = grid.lo + spacing * (rem % grid.points_per_axis) as f64;
            rem /= grid.points_per_axis;
        }
        let s = costs.sigma(&x);
        if s <= SIGMA_FLOOR {
            continue;
        }
        for t in 0..stages {
            best = best.min(costs.eval(t, &x, &u0) / s);
            used += 1;
        }
    }
    if used == 0 || !(best > 0.0) {
        return Err(Error::BetaUndefined("σ vanishes on every sample".into()));
    }
    Ok(Estimate {
        value: best,
        certified: false,
        samples: used,
    })
}

/// `V_t(x, w̃) = [x; w̃]ᵀ P [x; w̃]` for the window starting at `offset`.
pub fn quadratic_value_form(
    sys: &LinearSystem,
    cost: &QuadraticCost,
    offset: usize,
    horizon: usize,
) -> Result<Matrix> {
    let batch = QuadraticBatch::new(sys, cost, offset, horizon)?;
    let s = batch.reduced_weight()?;
    let n = sys.n();
    let mut e = Matrix::zeros(n * horizon, n + n * horizon);
    e.view_mut((0, 0), (n * horizon, n))
        .copy_from(&batch.stacked.f);
    e.view_mut((0, n), (n * horizon, n * horizon))
        .copy_from(&batch.stacked.h);
    let p = e.transpose() * s * e;
    Ok((&p + p.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperSampling {
    pub budget: usize,
    /// States are drawn uniformly from `[−x_box, x_box]^n`.
    pub x_box: f64,
    /// Disturbance components are drawn uniformly from `[w_lo, w_hi]`.
    pub w_lo: f64,
    pub w_hi: f64,
    /// Fraction of samples drawn with `w = 0`; those pin down `ᾱ`.
    pub zero_w_fraction: f64,
    /// Number of `ᾱ` candidates on the certificate grid.
    pub grid_points: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for UpperSampling {
    fn default() -> Self {
        Self {
            budget: 400,
            x_box: 2.0,
            w_lo: 0.0,
            w_hi: 1.0,
            zero_w_fraction: 0.25,
            grid_points: 81,
            seed: 0,
            solver: SolverConfig::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperEstimate {
    pub alpha_hi: f64,
    pub gamma_bar_sq: f64,
    pub certified: bool,
    pub samples: usize,
    /// Samples with `σ(x) = 0`, `w = 0` and `V > 0`. No finite `ᾱ` covers
    /// them, so they are left out of the fit.
    pub uncovered: usize,
}

/// `(ᾱ, γ̄²)` with `V_t(x, w̃) ≤ ᾱ σ(x) + γ̄² Σ ‖w_k‖²` over every window
/// of the cost sequence (windows near the end are truncated).
///
/// `alpha_lo` is only used to pick a point on the sampled frontier.
pub fn estimate_gamma_alpha_upper(
    sys: &LinearSystem,
    costs: &dyn CostModel,
    horizon: usize,
    alpha_lo: f64,
    sampling: &UpperSampling,
) -> Result<UpperEstimate> {
    if horizon < 1 {
        return Err(Error::invalid("N", "horizon must be at least 1"));
    }
    costs.check_dims(sys.n(), sys.m())?;
    match costs.as_quadratic() {
        Some(q) => exact_quadratic(sys, q, horizon),
        None => sampled(sys, costs, horizon, alpha_lo, sampling),
    }
}

fn exact_quadratic(
    sys: &LinearSystem,
    cost: &QuadraticCost,
    horizon: usize,
) -> Result<UpperEstimate> {
    let n = sys.n();
    let stages = cost.stages();
    let mut alpha_hi: f64 = 0.0;
    let mut gamma: f64 = 0.0;
    for t in 0..stages {
        let len = horizon.min(stages - t);
        let p = quadratic_value_form(sys, cost, t, len)?;
        let pxx = p.view((0, 0), (n, n)).into_owned();
        let pww = p.view((n, n), (n * len, n * len)).into_owned();
        let pxw = p.view((0, n), (n, n * len)).into_owned();
        let cross = pxw.singular_values().max();
        alpha_hi = alpha_hi.max(pxx.symmetric_eigenvalues().max() + cross);
        gamma = gamma.max(pww.symmetric_eigenvalues().max().max(0.0) + cross);
    }
    if !(alpha_hi > 0.0) {
        return Err(Error::BetaUndefined("ᾱ is zero".into()));
    }
    Ok(UpperEstimate {
        alpha_hi,
        gamma_bar_sq: gamma,
        certified: true,
        samples: 0,
        uncovered: 0,
    })
}

struct Sample {
    sigma: f64,
    energy: f64,
    value: f64,
}

fn sampled(
    sys: &LinearSystem,
    costs: &dyn CostModel,
    horizon: usize,
    alpha_lo: f64,
    cfg: &UpperSampling,
) -> Result<UpperEstimate> {
    if cfg.budget < 1 {
        return Err(Error::invalid("sample_budget", "must be at least 1"));
    }
    if cfg.grid_points < 1 || !(cfg.w_hi >= cfg.w_lo) || !(cfg.x_box >= 0.0) {
        return Err(Error::invalid("sampling", "bad sample box or grid"));
    }
    let n = sys.n();
    let stages = costs.len();
    let zero_every = if cfg.zero_w_fraction > 0.0 {
        (1.0 / cfg.zero_w_fraction).round().max(1.0) as usize
    } else {
        usize::MAX
    };

    let draws = par::map_range(cfg.execution, cfg.budget, |i| -> Result<Sample> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ i as u64);
        let (offset, len) = match stages {
            Some(total) => {
                let t = rng.random_range(0..total);
                (t, horizon.min(total - t))
            }
            None => (0, horizon),
        };
        let x = Vector::from_fn(n, |_, _| rng.random_range(-cfg.x_box..=cfg.x_box));
        let zero_w = i % zero_every == 0;
        let w: Vec<Vector> = (0..len)
            .map(|_| {
                if zero_w {
                    Vector::zeros(n)
                } else {
                    Vector::from_fn(n, |_, _| rng.random_range(cfg.w_lo..=cfg.w_hi))
                }
            })
            .collect();
        let energy = w.iter().map(|v| v.norm_squared()).sum();
        let sigma = costs.sigma(&x);
        let p = HorizonProblem::new(sys, costs, offset, x, w)?;
        let sol = solver::solve(&p, &cfg.solver, None)?;
        Ok(Sample {
            sigma,
            energy,
            value: sol.value,
        })
    });
    let samples = draws.into_iter().collect::<Result<Vec<_>>>()?;

    if samples.iter().all(|s| s.value <= 0.0) {
        return Err(Error::BetaUndefined("sampled V vanishes everywhere".into()));
    }

    let mut alpha_min = if alpha_lo > 0.0 { alpha_lo } else { 0.0 };
    let mut uncovered = 0;
    for s in samples.iter().filter(|s| s.energy == 0.0) {
        if s.sigma > SIGMA_FLOOR {
            alpha_min = alpha_min.max(s.value / s.sigma);
        } else if s.value > 1e-12 {
            uncovered += 1;
        }
    }
    if !(alpha_min > 0.0) {
        return Err(Error::BetaUndefined("ᾱ is zero on every sample".into()));
    }

    let gamma_for = |alpha_hi: f64| {
        samples
            .iter()
            .filter(|s| s.energy > 0.0)
            .map(|s| (s.value - alpha_hi * s.sigma) / s.energy)
            .fold(0.0, f64::max)
    };
    // asymptotic gain (2 − β)/β · γ̄² picks the point on the frontier
    let mut best: Option<(f64, f64, f64)> = None;
    for k in 0..cfg.grid_points {
        let alpha_hi = alpha_min * (1.0 + 0.05 * k as f64);
        let gamma = gamma_for(alpha_hi);
        let beta = if alpha_lo > 0.0 {
            (alpha_lo / alpha_hi).min(1.0)
        } else {
            1.0
        };
        let score = (2.0 - beta) / beta * gamma;
        if best.is_none_or(|(_, _, s)| score < s) {
            best = Some((alpha_hi, gamma, score));
        }
    }
    let (alpha_hi, gamma_bar_sq, _) = best.expect("grid_points ≥ 1");
    Ok(UpperEstimate {
        alpha_hi,
        gamma_bar_sq,
        certified: false,
        samples: samples.len(),
        uncovered,
    })
}
