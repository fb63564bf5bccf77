use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::{OverlapRule, ScenarioConfig};
use crate::costs::CostKind;
use crate::solver::SolverConfig;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 18] = [
    "seed",
    "cost_kind",
    "policy",
    "n",
    "m",
    "T",
    "N",
    "M",
    "J",
    "energy",
    "gain",
    "beta",
    "gamma_bar_sq",
    "certified",
    "omega_op",
    "bound",
    "satisfied",
    "truncated_tail",
];

/// One policy run on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub seed: u64,
    pub cost_kind: CostKind,
    pub policy: String,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub task_len: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "M")]
    pub overlap: usize,
    #[serde(rename = "J")]
    pub total_cost: f64,
    pub energy: f64,
    /// Empty when the disturbance energy is zero.
    pub gain: Option<f64>,
    pub beta: f64,
    pub gamma_bar_sq: f64,
    /// Whether `(α̲, ᾱ, γ̄²)` are exact rather than sampled.
    pub certified: bool,
    pub omega_op: Option<f64>,
    #[serde(with = "float_or_inf")]
    pub bound: f64,
    pub satisfied: bool,
    pub truncated_tail: bool,
}

/// Label used in reports: `overlap` for `M = ⌊N/2⌋`, `standard` for
/// `M = N − 1`, otherwise `m<M>`.
pub fn policy_label(horizon: usize, overlap: usize) -> String {
    if overlap == horizon / 2 {
        "overlap".into()
    } else if overlap + 1 == horizon {
        "standard".into()
    } else {
        format!("m{overlap}")
    }
}

/// Per `(cost kind, policy, N)` cell, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub cost_kind: CostKind,
    pub policy: String,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "M")]
    pub overlap: usize,
    pub iterations: usize,
    pub mean_cost: f64,
    pub mean_energy: f64,
    /// Mean cost over mean energy.
    pub gain: Option<f64>,
    /// Mean of the per-scenario ratios.
    pub mean_row_gain: Option<f64>,
    /// Every row of the cell had exact parameters.
    pub certified: bool,
    /// Mean `ω_op γ̄²` over rows whose hypotheses held.
    pub bound_gain: Option<f64>,
    /// Mean `(2/β) γ̄²`, the leading term of the large-`N` guarantee.
    pub gain_two_over_beta: f64,
    /// Mean `2β γ̄²`, the other reading of the same column label.
    pub gain_two_beta: f64,
    pub all_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub command: String,
    pub seeds: Vec<u64>,
    pub costs: Vec<CostKind>,
    pub horizons: Vec<usize>,
    pub rules: Vec<OverlapRule>,
    pub scenario: ScenarioConfig,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ReportConfig,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<AggregateCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (csv|json)"))),
        }
    }
}

/// Rows as CSV under [`CSV_HEADER`]; the header is written even with no rows.
pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report<W: Write>(report: &ExperimentReport, format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => write_csv(&report.rows, out),
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

pub fn emit_report(report: &ExperimentReport, format: Format, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_report(report, format, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Finite values as numbers, non-finite ones as `"inf"`, `"-inf"` or `"nan"`.
mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(bound: f64) -> ReportRow {
        ReportRow {
            seed: 3,
            cost_kind: CostKind::SetDistance,
            policy: "overlap".into(),
            n: 2,
            m: 1,
            task_len: 15,
            horizon: 6,
            overlap: 3,
            total_cost: 1.25,
            energy: 10.0,
            gain: Some(0.125),
            beta: 0.5,
            gamma_bar_sq: 0.75,
            certified: true,
            omega_op: None,
            bound,
            satisfied: false,
            truncated_tail: true,
        }
    }

    fn report(rows: Vec<ReportRow>) -> ExperimentReport {
        ExperimentReport {
            config: ReportConfig {
                command: "run".into(),
                seeds: vec![3],
                costs: vec![CostKind::SetDistance],
                horizons: vec![6],
                rules: vec![OverlapRule::Half],
                scenario: ScenarioConfig::default(),
                solver: SolverConfig::default(),
            },
            rows,
            aggregates: vec![],
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{}\n", CSV_HEADER.join(","))
        );
    }

    #[test]
    fn one_row_one_line() {
        let mut buf = Vec::new();
        write_csv(&[row(f64::INFINITY)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            "3,set_distance,overlap,2,1,15,6,3,1.25,10.0,0.125,0.5,0.75,true,,inf,false,true"
        );
        assert_eq!(lines[1].split(',').count(), CSV_HEADER.len());
    }

    #[test]
    fn json_round_trip() {
        for bound in [f64::INFINITY, 2.0 / 3.0] {
            let rep = report(vec![row(bound), row(0.1 + 0.2)]);
            let mut buf = Vec::new();
            write_report(&rep, Format::Json, &mut buf).unwrap();
            let back: ExperimentReport = serde_json::from_slice(&buf).unwrap();
            assert_eq!(back, rep);
        }
    }

    #[test]
    fn labels() {
        assert_eq!(policy_label(6, 3), "overlap");
        assert_eq!(policy_label(6, 5), "standard");
        assert_eq!(policy_label(2, 1), "overlap");
        assert_eq!(policy_label(9, 2), "m2");
    }
}
