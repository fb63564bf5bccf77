use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{Cost, CostKind, NonConvexCost, QuadraticCost, SetDistanceCost};
use crate::linsys::{DisturbanceSequence, LinearSystem};
use crate::{Error, Matrix, Result, Vector};

/// How the overlap `M` is derived from the preview `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapRule {
    /// `M = ⌊N/2⌋`.
    Half,
    /// `M = N − 1`, i.e. replan every step.
    Standard,
    Fixed(usize),
}

impl OverlapRule {
    pub fn overlap(self, horizon: usize) -> usize {
        match self {
            OverlapRule::Half => horizon / 2,
            OverlapRule::Standard => horizon.saturating_sub(1),
            OverlapRule::Fixed(m) => m,
        }
    }

    /// Row label in reports.
    pub fn label(self) -> String {
        match self {
            OverlapRule::Half => "overlap".into(),
            OverlapRule::Standard => "standard".into(),
            OverlapRule::Fixed(m) => format!("fixed_m{m}"),
        }
    }
}

impl std::str::FromStr for OverlapRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "half" | "overlap" => Ok(OverlapRule::Half),
            "standard" | "rhc" => Ok(OverlapRule::Standard),
            other => other.parse().map(OverlapRule::Fixed).map_err(|_| {
                Error::Config(format!("unknown overlap rule `{s}` (half|standard|<M>)"))
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMatrix {
    /// Every entry of `B` is 1.
    Ones,
    /// `B = I` (requires `m = n`).
    Identity,
    /// Entries uniform on `[0, 1]`, drawn right after `A`.
    Uniform,
}

impl std::str::FromStr for InputMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ones" => Ok(InputMatrix::Ones),
            "identity" | "eye" => Ok(InputMatrix::Identity),
            "uniform" | "random" => Ok(InputMatrix::Uniform),
            _ => Err(Error::Config(format!(
                "unknown input matrix `{s}` (ones|identity|uniform)"
            ))),
        }
    }
}

/// Everything besides the seed that determines a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub cost: CostKind,
    pub n: usize,
    pub m: usize,
    pub task_len: usize,
    pub horizon: usize,
    pub input_matrix: InputMatrix,
    pub a_range: (f64, f64),
    pub w_range: (f64, f64),
    /// Probability that a step's disturbance is zero (intermittent noise).
    pub quiet_prob: f64,
    /// Steps forced quiet after every nonzero disturbance (isolated pulses).
    pub min_gap: usize,
    pub q_range: (f64, f64),
    pub r_range: (f64, f64),
    /// Offset `b` of the non-convex state weight.
    pub offset: f64,
    /// Every coordinate of the target ball's center.
    pub ball_center: f64,
    pub ball_radius: f64,
    /// Set-distance coefficients are redrawn until their minimum reaches this.
    pub min_coefficient: f64,
    /// Every coordinate of the initial state.
    pub x1: f64,
    /// Samples for the `(ᾱ, γ̄²)` estimate of non-quadratic costs.
    pub sample_budget: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cost: CostKind::Quadratic,
            n: 2,
            m: 1,
            task_len: 15,
            horizon: 6,
            input_matrix: InputMatrix::Ones,
            a_range: (0.0, 1.0),
            w_range: (0.0, 1.0),
            quiet_prob: 0.0,
            min_gap: 0,
            q_range: (1.0, 3.0),
            r_range: (1.0, 3.0),
            offset: 0.2,
            ball_center: 0.5,
            ball_radius: 0.25,
            min_coefficient: 0.05,
            x1: 0.0,
            sample_budget: 400,
        }
    }
}

const MAX_REDRAWS: usize = 100_000;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.m < 1 {
            return Err(Error::Config("n and m must be at least 1".into()));
        }
        if self.task_len < 1 || self.horizon < 1 {
            return Err(Error::Config("T and N must be at least 1".into()));
        }
        if self.horizon > self.task_len {
            return Err(Error::Condition {
                name: "N <= T",
                margin: self.task_len as f64 - self.horizon as f64,
            });
        }
        for (name, (lo, hi)) in [
            ("a_range", self.a_range),
            ("w_range", self.w_range),
            ("q_range", self.q_range),
            ("r_range", self.r_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!(
                    "{name}: need finite lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.q_range.0 > 0.0 && self.r_range.0 > 0.0) {
            return Err(Error::Config(
                "q_range and r_range must be strictly positive".into(),
            ));
        }
        if self.input_matrix == InputMatrix::Identity && self.m != self.n {
            return Err(Error::Config("identity input matrix needs m = n".into()));
        }
        if self.cost == CostKind::Nonconvex && self.n < 2 {
            return Err(Error::Config("non-convex cost needs n >= 2".into()));
        }
        if !(self.quiet_prob >= 0.0 && self.quiet_prob < 1.0) {
            return Err(Error::Config("quiet_prob must lie in [0, 1)".into()));
        }
        if !(self.min_coefficient >= 0.0 && self.min_coefficient < 1.0) {
            return Err(Error::Config("min_coefficient must lie in [0, 1)".into()));
        }
        if !(self.ball_radius > 0.0) || !self.ball_center.is_finite() || !self.offset.is_finite() {
            return Err(Error::Config("bad cost parameters".into()));
        }
        if !self.x1.is_finite() {
            return Err(Error::Config("x1 must be finite".into()));
        }
        Ok(())
    }

    /// Sets one field from its `key=value` spelling (CLI flag names).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{key}={value}: {e}"));
        match key {
            "cost" => {
                self.cost = value.parse().map_err(|e| match e {
                    Error::Config(msg) => bad(&msg),
                    other => other,
                })?
            }
            "n" => self.n = value.parse().map_err(|e| bad(&e))?,
            "m" => self.m = value.parse().map_err(|e| bad(&e))?,
            "T" => self.task_len = value.parse().map_err(|e| bad(&e))?,
            "N" => self.horizon = value.parse().map_err(|e| bad(&e))?,
            "input-matrix" | "B" => self.input_matrix = value.parse()?,
            "a-range" => self.a_range = parse_range(value).map_err(|e| bad(&e))?,
            "w-range" => self.w_range = parse_range(value).map_err(|e| bad(&e))?,
            "q-range" => self.q_range = parse_range(value).map_err(|e| bad(&e))?,
            "r-range" => self.r_range = parse_range(value).map_err(|e| bad(&e))?,
            "quiet-prob" => self.quiet_prob = value.parse().map_err(|e| bad(&e))?,
            "min-gap" => self.min_gap = value.parse().map_err(|e| bad(&e))?,
            "offset" => self.offset = value.parse().map_err(|e| bad(&e))?,
            "ball-center" => self.ball_center = value.parse().map_err(|e| bad(&e))?,
            "ball-radius" => self.ball_radius = value.parse().map_err(|e| bad(&e))?,
            "min-coefficient" => self.min_coefficient = value.parse().map_err(|e| bad(&e))?,
            "x1" => self.x1 = value.parse().map_err(|e| bad(&e))?,
            "sample-budget" => self.sample_budget = value.parse().map_err(|e| bad(&e))?,
            _ => return Err(Error::Config(format!("unknown scenario key `{key}`"))),
        }
        Ok(())
    }

    pub fn is_key(key: &str) -> bool {
        matches!(
            key,
            "cost"
                | "n"
                | "m"
                | "T"
                | "N"
                | "input-matrix"
                | "B"
                | "a-range"
                | "w-range"
                | "q-range"
                | "r-range"
                | "quiet-prob"
                | "min-gap"
                | "offset"
                | "ball-center"
                | "ball-radius"
                | "min-coefficient"
                | "x1"
                | "sample-budget"
        )
    }
}

/// `lo,hi` or `lo..hi`.
fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| "expected `lo,hi`".to_string())?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub config: ScenarioConfig,
    pub sys: LinearSystem,
    pub cost: Cost,
    pub w_full: DisturbanceSequence,
    pub x1: Vector,
}

impl Scenario {
    pub fn task_len(&self) -> usize {
        self.config.task_len
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Overlap-rule pair compared in every experiment.
    pub fn policies(&self) -> [OverlapRule; 2] {
        [OverlapRule::Half, OverlapRule::Standard]
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws `A`, then `B` (if random), then the disturbances, then the cost
/// parameters of the configured kind, all from one ChaCha8 stream.
pub fn gen_scenario(seed: u64, config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let (n, m, len) = (config.n, config.m, config.task_len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let a = Matrix::from_fn(n, n, |_, _| uniform(&mut rng, config.a_range));
    let b = match config.input_matrix {
        InputMatrix::Ones => Matrix::from_element(n, m, 1.0),
        InputMatrix::Identity => Matrix::identity(n, m),
        InputMatrix::Uniform => Matrix::from_fn(n, m, |_, _| uniform(&mut rng, (0.0, 1.0))),
    };
    let sys = LinearSystem::new(a, b)?;

    let mut w: Vec<Vector> = Vec::with_capacity(len);
    let mut blocked = 0;
    for _ in 0..len {
        if blocked > 0 {
            blocked -= 1;
            w.push(Vector::zeros(n));
            continue;
        }
        // the coin is only tossed for intermittent noise, so the default
        // stream is unaffected
        if config.quiet_prob > 0.0 && rng.random_range(0.0..1.0) < config.quiet_prob {
            w.push(Vector::zeros(n));
        } else {
            w.push(Vector::from_fn(n, |_, _| uniform(&mut rng, config.w_range)));
            blocked = config.min_gap;
        }
    }
    let (lo, hi) = config.w_range;
    let cap = (n as f64).sqrt() * lo.abs().max(hi.abs());
    let w_full = DisturbanceSequence::new(w, cap)?;

    let cost = match config.cost {
        CostKind::Quadratic => {
            let q: Vec<Vector> = (0..len)
                .map(|_| Vector::from_fn(n, |_, _| uniform(&mut rng, config.q_range)))
                .collect();
            let r: Vec<Vector> = (0..len)
                .map(|_| Vector::from_fn(m, |_, _| uniform(&mut rng, config.r_range)))
                .collect();
            Cost::Quadratic(QuadraticCost::diagonal(&q, &r)?)
        }
        CostKind::Nonconvex => Cost::Nonconvex(NonConvexCost::new(config.offset)),
        CostKind::SetDistance => {
            let mut coeffs = Vec::new();
            for attempt in 0.. {
                if attempt == MAX_REDRAWS {
                    return Err(Error::Config(format!(
                        "no coefficient draw reached min {} after {MAX_REDRAWS} tries",
                        config.min_coefficient
                    )));
                }
                coeffs = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
                if coeffs.iter().cloned().fold(f64::INFINITY, f64::min) >= config.min_coefficient {
                    break;
                }
            }
            let center = Vector::from_element(n, config.ball_center);
            Cost::SetDistance(SetDistanceCost::new(coeffs, center, config.ball_radius)?)
        }
    };

    Ok(Scenario {
        seed,
        config: config.clone(),
        sys,
        cost,
        w_full,
        x1: Vector::from_element(n, config.x1),
    })
}
