use super::report::{policy_label, AggregateCell, ExperimentReport, ReportConfig, ReportRow};
use super::scenario::{gen_scenario, OverlapRule, Scenario, ScenarioConfig};
use crate::bounds::{certify, GainCertificate};
use crate::costs::{estimate_alpha_lower, estimate_gamma_alpha_upper, AlphaGrid, UpperSampling};
use crate::costs::{AssumptionParams, CostKind, CostModel};
use crate::par::{self, Execution};
use crate::policy::{build_schedule, run_policy, RunResult};
use crate::solver::SolverConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub solver: SolverConfig,
    pub execution: Execution,
}

/// `(α̲, ᾱ, γ̄²)` for the scenario's preview `N`: exact for quadratic
/// costs, sampled (and flagged) otherwise.
pub fn scenario_params(sc: &Scenario, opts: &RunOptions) -> Result<AssumptionParams> {
    let (n, m) = (sc.sys.n(), sc.sys.m());
    let lower = estimate_alpha_lower(&sc.cost, n, m, &AlphaGrid::default())?;
    let sampling = UpperSampling {
        budget: sc.config.sample_budget,
        w_lo: sc.config.w_range.0,
        w_hi: sc.config.w_range.1,
        seed: sc.seed,
        solver: opts.solver.clone(),
        execution: opts.execution,
        ..Default::default()
    };
    let upper =
        estimate_gamma_alpha_upper(&sc.sys, &sc.cost, sc.horizon(), lower.value, &sampling)?;
    AssumptionParams::new(
        lower.value,
        upper.alpha_hi,
        upper.gamma_bar_sq,
        lower.certified && upper.certified,
    )
}

/// One policy run together with its certificate.
#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub rule: OverlapRule,
    pub result: RunResult,
    pub certificate: GainCertificate,
}

pub fn run_rule(
    sc: &Scenario,
    rule: OverlapRule,
    params: &AssumptionParams,
    cfg: &SolverConfig,
) -> Result<PolicyOutcome> {
    let horizon = sc.horizon();
    let sched = build_schedule(horizon, rule.overlap(horizon), sc.task_len())?;
    let result = run_policy(&sc.sys, &sc.cost, &sc.w_full, &sc.x1, &sched, cfg)?;
    let certificate = certify(&result, params, &sched, &sc.w_full, sc.cost.sigma(&sc.x1));
    Ok(PolicyOutcome {
        rule,
        result,
        certificate,
    })
}

pub fn report_row(sc: &Scenario, params: &AssumptionParams, outcome: &PolicyOutcome) -> ReportRow {
    let sched = &outcome.result.schedule;
    let cert = &outcome.certificate;
    ReportRow {
        seed: sc.seed,
        cost_kind: sc.cost.kind(),
        policy: policy_label(sched.horizon, sched.overlap),
        n: sc.sys.n(),
        m: sc.sys.m(),
        task_len: sched.task_len,
        horizon: sched.horizon,
        overlap: sched.overlap,
        total_cost: cert.total_cost,
        energy: cert.energy,
        gain: cert.gain,
        beta: params.beta,
        gamma_bar_sq: params.gamma_bar_sq,
        certified: params.certified,
        omega_op: cert.omega_op,
        bound: cert.bound,
        satisfied: cert.satisfied,
        truncated_tail: cert.truncated_tail,
    }
}

/// Runs the given overlap rules on one scenario. Errors carry the seed.
pub fn run_rules(
    sc: &Scenario,
    rules: &[OverlapRule],
    opts: &RunOptions,
) -> Result<Vec<ReportRow>> {
    let inner = || -> Result<Vec<ReportRow>> {
        let params = scenario_params(sc, opts)?;
        rules
            .iter()
            .map(|&rule| {
                run_rule(sc, rule, &params, &opts.solver).map(|o| report_row(sc, &params, &o))
            })
            .collect()
    };
    inner().map_err(|e| e.in_scenario(sc.seed))
}

/// Both policies of the comparison: `M = ⌊N/2⌋` and `M = N − 1`.
pub fn run_comparison(sc: &Scenario, cfg: &SolverConfig) -> Result<Vec<ReportRow>> {
    let opts = RunOptions {
        solver: cfg.clone(),
        ..Default::default()
    };
    run_rules(sc, &sc.policies(), &opts)
}

/// Grid of experiments: every cost kind × preview × seed, each run under
/// every rule. Scenarios run in parallel; rows come back sorted by
/// `(seed, cost_kind, N, policy)`.
pub fn run_experiment(
    command: &str,
    base: &ScenarioConfig,
    seeds: &[u64],
    costs: &[CostKind],
    horizons: &[usize],
    rules: &[OverlapRule],
    opts: &RunOptions,
) -> Result<ExperimentReport> {
    if seeds.is_empty() || costs.is_empty() || horizons.is_empty() || rules.is_empty() {
        return Err(Error::Config(
            "need at least one seed, cost kind, horizon and rule".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &cost in costs {
        for &horizon in horizons {
            for &seed in seeds {
                jobs.push((
                    seed,
                    ScenarioConfig {
                        cost,
                        horizon,
                        ..base.clone()
                    },
                ));
            }
        }
    }
    let results = par::map_with(
        opts.execution,
        &jobs,
        |(seed, cfg)| -> Result<Vec<ReportRow>> {
            let sc = gen_scenario(*seed, cfg).map_err(|e| e.in_scenario(*seed))?;
            run_rules(&sc, rules, opts)
        },
    );
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        (a.seed, a.cost_kind.as_str(), a.horizon, &a.policy).cmp(&(
            b.seed,
            b.cost_kind.as_str(),
            b.horizon,
            &b.policy,
        ))
    });

    let mut aggregates = Vec::new();
    for &cost in costs {
        for &horizon in horizons {
            for &rule in rules {
                let overlap = rule.overlap(horizon);
                let cell: Vec<&ReportRow> = rows
                    .iter()
                    .filter(|r| r.cost_kind == cost && r.horizon == horizon && r.overlap == overlap)
                    .collect();
                if let Some(agg) = aggregate(cost, horizon, overlap, &cell) {
                    aggregates.push(agg);
                }
            }
        }
    }

    Ok(ExperimentReport {
        config: ReportConfig {
            command: command.to_string(),
            seeds: seeds.to_vec(),
            costs: costs.to_vec(),
            horizons: horizons.to_vec(),
            rules: rules.to_vec(),
            scenario: base.clone(),
            solver: opts.solver.clone(),
        },
        rows,
        aggregates,
    })
}

/// Ten seeds, both policies, every cost kind and the given previews.
pub fn table1(
    base: &ScenarioConfig,
    seeds: &[u64],
    horizons: &[usize],
    opts: &RunOptions,
) -> Result<ExperimentReport> {
    run_experiment(
        "table1",
        base,
        seeds,
        &CostKind::ALL,
        horizons,
        &[OverlapRule::Half, OverlapRule::Standard],
        opts,
    )
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn aggregate(
    cost: CostKind,
    horizon: usize,
    overlap: usize,
    rows: &[&ReportRow],
) -> Option<AggregateCell> {
    let first = rows.first()?;
    let mean_cost = mean(rows.iter().map(|r| r.total_cost))?;
    let mean_energy = mean(rows.iter().map(|r| r.energy))?;
    Some(AggregateCell {
        cost_kind: cost,
        policy: first.policy.clone(),
        horizon,
        overlap,
        iterations: rows.len(),
        mean_cost,
        mean_energy,
        gain: (mean_energy > 0.0).then(|| mean_cost / mean_energy),
        mean_row_gain: if rows.iter().all(|r| r.gain.is_some()) {
            mean(rows.iter().filter_map(|r| r.gain))
        } else {
            None
        },
        certified: rows.iter().all(|r| r.certified),
        bound_gain: mean(
            rows.iter()
                .filter_map(|r| r.omega_op.map(|w| w * r.gamma_bar_sq)),
        ),
        gain_two_over_beta: mean(rows.iter().map(|r| 2.0 / r.beta * r.gamma_bar_sq))?,
        gain_two_beta: mean(rows.iter().map(|r| 2.0 * r.beta * r.gamma_bar_sq))?,
        all_satisfied: rows.iter().all(|r| r.satisfied),
    })
}
