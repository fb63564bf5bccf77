use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prhc::bounds::{recursion_audit_with, AUDIT_TOL};
use prhc::costs::CostModel;
use prhc::harness::config::read_key_values;
use prhc::harness::experiment::run_rule;
use prhc::harness::oracle::brute_force_oracle;
use prhc::harness::report::{read_json_report, write_report, ExperimentReport, Format, ReportRow};
use prhc::harness::{
    gen_scenario, run_experiment, scenario_params, table1, OverlapRule, RunOptions, ScenarioConfig,
};
use prhc::par::{self, Execution};
use prhc::policy::{build_schedule, run_policy};
use prhc::solver::{solve, HorizonProblem, SolverConfig};

#[derive(Parser, Debug)]
#[command(
    name = "prhc",
    version,
    about = "Overlap receding-horizon control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario under one or both overlap rules.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Every cost kind, both policies, several previews, averaged over seeds.
    Table1 {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Seeds 0..iters.
        #[arg(long)]
        iters: Option<u64>,
        /// Comma-separated previews.
        #[arg(long = "N-list", value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regenerate the runs of a stored JSON report and re-check them.
    Certify {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Grid-search the whole task and compare with the policies.
    Oracle {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long = "grid-res")]
        grid_res: Option<f64>,
        #[arg(long = "u-box")]
        u_box: Option<f64>,
    },
    /// Per-interval value recursion slacks for the runs of a stored report.
    Audit {
        #[arg(long = "in")]
        input: PathBuf,
        /// Multiplies γ̄² before auditing (values below 1 should fail).
        #[arg(long = "gamma-scale", default_value_t = 1.0)]
        gamma_scale: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// key=value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// quad | nonconvex | setdist
    #[arg(long)]
    cost: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "T")]
    task_len: Option<usize>,
    #[arg(long = "N")]
    horizon: Option<usize>,
    #[arg(long = "M", conflicts_with = "m_rule")]
    overlap: Option<usize>,
    /// half | standard
    #[arg(long = "m-rule")]
    m_rule: Option<String>,
    /// Any other scenario or solver key, e.g. `--set quiet-prob=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Default)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
}

/// Effective settings after merging the config file and the flags.
#[derive(Debug, Clone)]
struct Settings {
    scenario: ScenarioConfig,
    solver: SolverConfig,
    seed: u64,
    rule: Option<OverlapRule>,
    iters: u64,
    n_list: Vec<usize>,
    grid_res: f64,
    u_box: f64,
    format: Format,
    out: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            solver: SolverConfig::default(),
            seed: 0,
            rule: None,
            iters: 10,
            n_list: vec![6, 9],
            grid_res: 1e-3,
            u_box: 2.0,
            format: Format::Csv,
            out: None,
        }
    }
}

impl Settings {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let ctx = || format!("bad value for `{key}`: {value}");
        match key {
            "seed" => self.seed = value.parse().with_context(ctx)?,
            "M" => self.rule = Some(OverlapRule::Fixed(value.parse().with_context(ctx)?)),
            "m-rule" => self.rule = Some(value.parse()?),
            "iters" => self.iters = value.parse().with_context(ctx)?,
            "N-list" => {
                self.n_list = value
                    .split(',')
                    .map(|v| v.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .with_context(ctx)?
            }
            "grid-res" => self.grid_res = value.parse().with_context(ctx)?,
            "u-box" => self.u_box = value.parse().with_context(ctx)?,
            "format" => self.format = value.parse()?,
            "out" => self.out = Some(PathBuf::from(value)),
            "max-iters" => self.solver.max_iters = value.parse().with_context(ctx)?,
            "grad-tol" => self.solver.grad_tol = value.parse().with_context(ctx)?,
            "restarts" => self.solver.restarts = value.parse().with_context(ctx)?,
            "restart-scale" => self.solver.restart_scale = value.parse().with_context(ctx)?,
            "solver-seed" => self.solver.seed = value.parse().with_context(ctx)?,
            "warm-start" => self.solver.warm_start = value.parse().with_context(ctx)?,
            k if ScenarioConfig::is_key(k) => self.scenario.set(k, value)?,
            _ => bail!("unknown setting `{key}`"),
        }
        Ok(())
    }

    fn from_args(
        scenario: Option<&ScenarioArgs>,
        output: Option<&OutputArgs>,
        extra: &[(&str, String)],
    ) -> Result<Self> {
        let mut s = Settings::default();
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(path) = scenario.and_then(|a| a.config.as_ref()) {
            pairs.extend(
                read_key_values(path).with_context(|| format!("reading {}", path.display()))?,
            );
        }
        if let Some(a) = scenario {
            let mut push = |k: &str, v: Option<String>| {
                if let Some(v) = v {
                    pairs.push((k.to_string(), v));
                }
            };
            push("seed", a.seed.map(|v| v.to_string()));
            push("cost", a.cost.clone());
            push("n", a.n.map(|v| v.to_string()));
            push("m", a.m.map(|v| v.to_string()));
            push("T", a.task_len.map(|v| v.to_string()));
            push("N", a.horizon.map(|v| v.to_string()));
            push("M", a.overlap.map(|v| v.to_string()));
            push("m-rule", a.m_rule.clone());
            for kv in &a.set {
                let (k, v) = kv
                    .split_once('=')
                    .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
                pairs.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        for (k, v) in extra {
            pairs.push((k.to_string(), v.clone()));
        }
        if let Some(o) = output {
            if let Some(f) = &o.format {
                pairs.push(("format".into(), f.clone()));
            }
            if let Some(p) = &o.out {
                pairs.push(("out".into(), p.display().to_string()));
            }
        }
        for (k, v) in &pairs {
            s.set(k, v)?;
        }
        Ok(s)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            solver: self.solver.clone(),
            execution: Execution::default(),
        }
    }
}

fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            let mut w = std::io::BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn print_aggregates(report: &ExperimentReport) {
    eprintln!(
        "{:<13} {:<9} {:>3} {:>3} {:>5} {:>10} {:>10} {:>10} {:>10} {:>9}",
        "cost", "policy", "N", "M", "iters", "gain", "ω·γ̄²", "(2/β)γ̄²", "2βγ̄²", "certified"
    );
    for a in &report.aggregates {
        eprintln!(
            "{:<13} {:<9} {:>3} {:>3} {:>5} {:>10} {:>10} {:>10.4} {:>10.4} {:>9}",
            a.cost_kind.as_str(),
            a.policy,
            a.horizon,
            a.overlap,
            a.iterations,
            fmt_opt(a.gain),
            fmt_opt(a.bound_gain),
            a.gain_two_over_beta,
            a.gain_two_beta,
            a.certified
        );
    }
}

fn cmd_run(scenario: &ScenarioArgs, output: &OutputArgs) -> Result<()> {
    let s = Settings::from_args(Some(scenario), Some(output), &[])?;
    let rules = match s.rule {
        Some(r) => vec![r],
        None => vec![OverlapRule::Half, OverlapRule::Standard],
    };
    let report = run_experiment(
        "run",
        &s.scenario,
        &[s.seed],
        &[s.scenario.cost],
        &[s.scenario.horizon],
        &rules,
        &s.options(),
    )?;
    with_output(s.out.as_deref(), |w| {
        Ok(write_report(&report, s.format, w)?)
    })
}

fn cmd_table1(
    scenario: &ScenarioArgs,
    iters: Option<u64>,
    n_list: Option<&[usize]>,
    output: &OutputArgs,
) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(i) = iters {
        extra.push(("iters", i.to_string()));
    }
    if let Some(list) = n_list {
        let joined: Vec<String> = list.iter().map(|n| n.to_string()).collect();
        extra.push(("N-list", joined.join(",")));
    }
    let s = Settings::from_args(Some(scenario), Some(output), &extra)?;
    if s.iters == 0 {
        bail!("--iters must be at least 1");
    }
    let seeds: Vec<u64> = (0..s.iters).collect();
    let report = table1(&s.scenario, &seeds, &s.n_list, &s.options())?;
    print_aggregates(&report);
    with_output(s.out.as_deref(), |w| {
        Ok(write_report(&report, s.format, w)?)
    })
}

/// Scenario behind a stored row.
fn row_config(report: &ExperimentReport, row: &ReportRow) -> ScenarioConfig {
    ScenarioConfig {
        cost: row.cost_kind,
        horizon: row.horizon,
        task_len: row.task_len,
        ..report.config.scenario.clone()
    }
}

fn cmd_certify(input: &Path, output: &OutputArgs) -> Result<bool> {
    let report = read_json_report(input).with_context(|| format!("reading {}", input.display()))?;
    let s = Settings::from_args(None, Some(output), &[])?;
    let opts = RunOptions {
        solver: report.config.solver.clone(),
        execution: Execution::default(),
    };
    let checked = par::map(
        &report.rows,
        |row| -> prhc::Result<(ReportRow, ReportRow)> {
            let sc = gen_scenario(row.seed, &row_config(&report, row))?;
            let params = scenario_params(&sc, &opts)?;
            let outcome = run_rule(&sc, OverlapRule::Fixed(row.overlap), &params, &opts.solver)?;
            Ok((
                row.clone(),
                prhc::harness::experiment::report_row(&sc, &params, &outcome),
            ))
        },
    );
    let mut all_match = true;
    let mut lines = vec![
        "seed,cost_kind,policy,N,M,J_stored,J_recomputed,bound,certified,satisfied,reproduced"
            .to_string(),
    ];
    for c in checked {
        let (stored, fresh) = c?;
        let reproduced = stored.total_cost.to_bits() == fresh.total_cost.to_bits()
            && stored.bound.to_bits() == fresh.bound.to_bits();
        all_match &= reproduced;
        lines.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            stored.seed,
            stored.cost_kind,
            stored.policy,
            stored.horizon,
            stored.overlap,
            stored.total_cost,
            fresh.total_cost,
            fresh.bound,
            fresh.certified,
            fresh.satisfied,
            reproduced
        ));
    }
    with_output(s.out.as_deref(), |w| {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    if !all_match {
        eprintln!("some stored runs were not reproduced bit for bit");
    }
    Ok(all_match)
}

fn cmd_audit(input: &Path, gamma_scale: f64, output: &OutputArgs) -> Result<bool> {
    if !(gamma_scale > 0.0) {
        bail!("--gamma-scale must be positive");
    }
    let report = read_json_report(input).with_context(|| format!("reading {}", input.display()))?;
    let s = Settings::from_args(None, Some(output), &[])?;
    let solver = report.config.solver.clone();
    let opts = RunOptions {
        solver: solver.clone(),
        execution: Execution::default(),
    };
    let audited = par::map(&report.rows, |row| -> prhc::Result<Vec<String>> {
        let sc = gen_scenario(row.seed, &row_config(&report, row))?;
        let params = scenario_params(&sc, &opts)?;
        let params = params.with_gamma_bar_sq(params.gamma_bar_sq * gamma_scale);
        let sched = build_schedule(row.horizon, row.overlap, row.task_len)?;
        let result = run_policy(&sc.sys, &sc.cost, &sc.w_full, &sc.x1, &sched, &solver)?;
        let prefix = format!(
            "{},{},{},{},{}",
            row.seed, row.cost_kind, row.policy, row.horizon, row.overlap
        );
        match recursion_audit_with(
            Execution::Sequential,
            &result,
            &params,
            &sc.sys,
            &sc.cost,
            &sc.w_full,
            &solver,
        ) {
            Ok(slacks) => Ok(slacks
                .iter()
                .map(|sl| {
                    format!(
                        "{prefix},{},{},{},{},{},{}",
                        sl.interval,
                        sl.v_current,
                        sl.v_next,
                        sl.rhs,
                        sl.slack,
                        sl.slack >= -AUDIT_TOL
                    )
                })
                .collect()),
            Err(prhc::Error::Condition { name, margin }) => Ok(vec![format!(
                "{prefix},,,,,,skipped ({name} fails by {margin:.3e})"
            )]),
            Err(e) => Err(e),
        }
    });
    let mut ok = true;
    let mut lines =
        vec!["seed,cost_kind,policy,N,M,interval,v_current,v_next,rhs,slack,holds".to_string()];
    for a in audited {
        for l in a? {
            ok &= !l.ends_with(",false");
            lines.push(l);
        }
    }
    with_output(s.out.as_deref(), |w| {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    Ok(ok)
}

fn cmd_oracle(scenario: &ScenarioArgs, grid_res: Option<f64>, u_box: Option<f64>) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(g) = grid_res {
        extra.push(("grid-res", g.to_string()));
    }
    if let Some(u) = u_box {
        extra.push(("u-box", u.to_string()));
    }
    let s = Settings::from_args(Some(scenario), None, &extra)?;
    let sc = gen_scenario(s.seed, &s.scenario)?;
    let grid = brute_force_oracle(&sc, s.grid_res, s.u_box)?;

    let task_len = sc.task_len();
    let full = HorizonProblem::new(
        &sc.sys,
        &sc.cost,
        0,
        sc.x1.clone(),
        sc.w_full.as_slice()[..task_len].to_vec(),
    )?;
    let v1 = solve(&full, &s.solver, None)?.value;

    let mut out = std::io::stdout().lock();
    writeln!(out, "seed={}", s.seed)?;
    writeln!(out, "cost_kind={}", sc.cost.kind())?;
    writeln!(out, "T={task_len}")?;
    writeln!(out, "grid_res={}", s.grid_res)?;
    writeln!(out, "u_box={}", s.u_box)?;
    writeln!(out, "nodes={}", grid.nodes)?;
    writeln!(out, "J_grid={}", grid.value)?;
    let u: Vec<String> = grid
        .u
        .iter()
        .flat_map(|v| v.iter().map(|x| x.to_string()))
        .collect();
    writeln!(out, "u_grid={}", u.join(","))?;
    writeln!(out, "V_1={v1}")?;
    writeln!(out, "V_1_minus_J_grid={}", v1 - grid.value)?;

    let horizon = sc.horizon();
    let rules = match s.rule {
        Some(r) => vec![r],
        None => vec![OverlapRule::Half, OverlapRule::Standard],
    };
    let mut seen = Vec::new();
    for rule in rules {
        let overlap = rule.overlap(horizon);
        // both rules coincide at N = 2
        if overlap < 1 || overlap >= horizon || seen.contains(&overlap) {
            continue;
        }
        seen.push(overlap);
        let sched = build_schedule(horizon, overlap, task_len)?;
        let r = run_policy(&sc.sys, &sc.cost, &sc.w_full, &sc.x1, &sched, &s.solver)?;
        writeln!(out, "J_policy_N{horizon}_M{overlap}={}", r.total_cost)?;
        writeln!(
            out,
            "J_policy_N{horizon}_M{overlap}_minus_J_grid={}",
            r.total_cost - grid.value
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    par::configure_threads_from_env();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { scenario, output } => cmd_run(scenario, output).map(|_| true),
        Command::Table1 {
            scenario,
            iters,
            n_list,
            output,
        } => cmd_table1(scenario, *iters, n_list.as_deref(), output).map(|_| true),
        Command::Certify { input, output } => cmd_certify(input, output),
        Command::Oracle {
            scenario,
            grid_res,
            u_box,
        } => cmd_oracle(scenario, *grid_res, *u_box).map(|_| true),
        Command::Audit {
            input,
            gamma_scale,
            output,
        } => cmd_audit(input, *gamma_scale, output),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
