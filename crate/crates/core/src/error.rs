use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for `{arg}`: expected {expected}, found {found}")]
    Dimension {
        arg: &'static str,
        expected: String,
        found: String,
    },

    #[error("length mismatch for `{arg}`: expected {expected}, found {found}")]
    Length {
        arg: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid `{arg}`: {reason}")]
    Invalid { arg: &'static str, reason: String },

    #[error("non-finite {what} at iterate {iterate}")]
    NonFinite { what: &'static str, iterate: usize },

    #[error("negative stage cost {value} at t={t}")]
    NegativeCost { t: usize, value: f64 },

    #[error("singular normal matrix in closed-form horizon solve")]
    Singular,

    #[error("condition `{name}` violated (margin {margin:.6e})")]
    Condition { name: &'static str, margin: f64 },

    #[error("beta undefined: {0}")]
    BetaUndefined(String),

    #[error("disturbance gain undefined: zero disturbance energy")]
    GainUndefined,

    #[error("oracle budget exceeded: more than {budget} grid nodes")]
    BudgetExceeded { budget: u64 },

    #[error("predicted state diverged from realized state at t={t} (gap {gap:.3e})")]
    PredictionMismatch { t: usize, gap: f64 },

    #[error("interval {interval}")]
    Interval {
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario seed {seed}")]
    Scenario {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            arg,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_interval(self, interval: usize) -> Self {
        Error::Interval {
            interval,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_scenario(self, seed: u64) -> Self {
        Error::Scenario {
            seed,
            source: Box::new(self),
        }
    }
}
