//! The `multiscm` command line: `fit`, `diagnose`, `infer` and `simulate`.
//!
//! Every subcommand writes delimited files plus `summary.json` into `--out`.
//! Exit codes: 0 success, 2 invalid input or settings, 3 numerical failure.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::conformal::{
    avg_effect_interval, linspace, test_null, test_null_joint, NullSpec, PostPeriods, QOrder, Scheme,
    TestOptions, TestResult,
};
use crate::diagnostics::{condition_ratio, default_grid, frontier, holdout_fit, spectrum, HOLDOUT_NU};
use crate::error::{Error, Result};
use crate::panel::{load_panel, MatrixView, PanelData, TreatmentConfig};
use crate::qp::SolverSettings;
use crate::simlab::{
    preset, preset_names, probe_study, run_study, size_study, DgpConfig, Estimator,
};
use crate::weights::{fit, fit_gaps, heuristic_nu, FitOptions, ObjectiveKind, ObjectiveSpec};

#[derive(Debug, Parser)]
#[command(name = "multiscm", version, about = "Synthetic control with multiple outcomes")]
pub struct Cli {
    /// Long-format panel CSV with columns unit,period,outcome,value.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// TOML treatment settings (fit/diagnose/infer) or simulation settings (simulate).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit weights and write weights, imbalance and gap series.
    Fit(FitArgs),
    /// Spectrum, held-out fit, imbalance frontier and condition-number ratio.
    Diagnose(DiagnoseArgs),
    /// Conformal tests of a sharp null on the treated unit.
    Infer(InferArgs),
    /// Monte Carlo study on the factor-model design.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Separate,
    #[value(alias = "cat")]
    Concatenated,
    #[value(alias = "avg")]
    Averaged,
    Combined,
}

#[derive(Debug, Args)]
pub struct PanelArgs {
    /// Treated unit (overrides the config file).
    #[arg(long)]
    pub treated: Option<String>,
    /// Last pre-treatment period label (overrides the config file).
    #[arg(long)]
    pub t0: Option<String>,
}

#[derive(Debug, Args)]
pub struct ObjectiveArgs {
    #[arg(long, value_enum, default_value = "combined")]
    pub objective: ObjectiveArg,
    /// Outcome label for the separate objective (default: first outcome).
    #[arg(long)]
    pub outcome: Option<String>,
    /// Combined-objective weight in [0, 1], or `heuristic`.
    #[arg(long, default_value = "heuristic")]
    pub nu: String,
    /// Fit on de-meaned but unstandardized outcomes.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Write results even if the solver did not converge.
    #[arg(long)]
    pub allow_nonconverged: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// ν for the held-out combined fits.
    #[arg(long, default_value_t = HOLDOUT_NU)]
    pub holdout_nu: f64,
    /// Comma-separated ν grid for the frontier (default 0, 0.05, ..., 1).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Use raw rather than de-meaned, standardized outcomes for the spectrum.
    #[arg(long)]
    pub raw: bool,
    /// Compute only these diagnostics.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub only: Option<Vec<Diagnostic>>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Diagnostic {
    Spectrum,
    Holdout,
    Frontier,
    Condition,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    /// `zero` or comma-separated effects, one per outcome.
    #[arg(long, default_value = "zero")]
    pub null: String,
    /// `last`, `all`, or a post-period label.
    #[arg(long, default_value = "last")]
    pub period: String,
    /// One joint test over all post periods.
    #[arg(long)]
    pub joint: bool,
    /// Norm order of the test statistic (number ≥ 1 or `inf`).
    #[arg(long, default_value = "1")]
    pub q: String,
    #[arg(long, default_value = "iid")]
    pub scheme: String,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Average-effect interval grid as `lo,hi,n`.
    #[arg(long, value_delimiter = ',')]
    pub interval: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named setting; see `--list-presets`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub list_presets: bool,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub t0: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub n_units: Option<usize>,
    /// Also average the spectral and condition-number probes.
    #[arg(long)]
    pub probes: bool,
    /// Also run a conformal size study with this objective.
    #[arg(long, value_enum)]
    pub size_study: Option<ObjectiveArg>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_user_error() { 2 } else { 3 }
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Command::Simulate(args) = &cli.command {
        if args.list_presets {
            for name in preset_names() {
                println!("{name}");
            }
            return Ok(0);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Fit(args) => cmd_fit(cli, args),
        Command::Diagnose(args) => cmd_diagnose(cli, args),
        Command::Infer(args) => cmd_infer(cli, args),
        Command::Simulate(args) => cmd_simulate(cli, args),
    })
}

fn read_panel(cli: &Cli, args: &PanelArgs) -> Result<PanelData> {
    let input = cli
        .input
        .as_ref()
        .ok_or_else(|| Error::Input("--input is required".into()))?;
    let mut config = match &cli.config {
        Some(path) => TreatmentConfig::from_toml_str(&fs::read_to_string(path)?)?,
        None => TreatmentConfig::new("", ""),
    };
    if let Some(t) = &args.treated {
        config.treated_unit = t.clone();
    }
    if let Some(t0) = &args.t0 {
        config.t0 = t0.clone();
    }
    if config.treated_unit.is_empty() || config.t0.is_empty() {
        return Err(Error::Input(
            "treated unit and t0 are required (--config or --treated/--t0)".into(),
        ));
    }
    load_panel(File::open(input)?, &config)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?));
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(dir: &Path, summary: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Numerical(format!("summary serialization: {e}")))?;
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// JSON number, or a string for non-finite values.
fn jnum(v: f64) -> Value {
    if v.is_finite() { json!(v) } else { json!(v.to_string()) }
}

fn fit_options(args: &ObjectiveArgs) -> FitOptions {
    FitOptions {
        solver: SolverSettings {
            tol: args.tol,
            max_iter: args.max_iter,
            warm_start: None,
        },
        standardize: args.no_standardize.then_some(false),
    }
}

/// Resolves the objective; the second value is `Some(degenerate)` when ν came from the heuristic.
fn resolve_spec(panel: &PanelData, args: &ObjectiveArgs, options: &FitOptions) -> Result<(ObjectiveSpec, Option<bool>)> {
    let spec = match args.objective {
        ObjectiveArg::Separate => {
            let k = match &args.outcome {
                Some(label) => panel
                    .outcome_index(label)
                    .ok_or_else(|| Error::Input(format!("unknown outcome `{label}`")))?,
                None => 0,
            };
            ObjectiveSpec::separate(k)
        }
        ObjectiveArg::Concatenated => ObjectiveSpec::concatenated(),
        ObjectiveArg::Averaged => ObjectiveSpec::averaged(),
        ObjectiveArg::Combined if args.nu == "heuristic" => {
            let choice = heuristic_nu(panel, options)?;
            if choice.degenerate {
                eprintln!("warning: concatenated fit is perfect; using nu = 1");
            }
            return Ok((ObjectiveSpec::combined(choice.nu), Some(choice.degenerate)));
        }
        ObjectiveArg::Combined => {
            let nu: f64 = args
                .nu
                .parse()
                .map_err(|_| Error::Input(format!("invalid --nu `{}`", args.nu)))?;
            ObjectiveSpec::combined(nu)
        }
    };
    Ok((spec, None))
}

fn nu_of(spec: &ObjectiveSpec) -> Option<f64> {
    match spec.kind {
        ObjectiveKind::Combined(nu) => Some(nu),
        _ => None,
    }
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<i32> {
    let panel = read_panel(cli, &args.panel)?;
    let options = fit_options(&args.objective);
    let (spec, heuristic) = resolve_spec(&panel, &args.objective, &options)?;
    let result = fit(&panel, &spec, &options)?;
    if !result.solution.converged && !args.objective.allow_nonconverged {
        return Err(Error::Numerical(format!(
            "solver did not converge (gap {:e} after {} iterations)",
            result.solution.gap, result.solution.iterations
        )));
    }
    let dir = &cli.out;
    prepare_out(dir)?;

    let weights = result.donor_weights();
    write_csv(
        dir,
        "weights.csv",
        &["unit", "weight"],
        weights.iter().map(|(u, w)| vec![u.clone(), num(*w)]).collect(),
    )?;

    let q = &result.imbalance;
    let mut imbalance_rows: Vec<Vec<String>> = panel
        .outcomes()
        .iter()
        .zip(&q.separate)
        .map(|(o, v)| vec![format!("q_sep[{o}]"), num(*v)])
        .collect();
    imbalance_rows.push(vec!["q_cat".into(), num(q.concatenated)]);
    imbalance_rows.push(vec!["q_avg".into(), num(q.averaged)]);
    if let Some(nu) = nu_of(&spec) {
        imbalance_rows.push(vec!["nu".into(), num(nu)]);
    }
    write_csv(dir, "imbalance.csv", &["measure", "value"], imbalance_rows)?;

    let gaps = fit_gaps(&panel, &result);
    write_csv(
        dir,
        "gaps.csv",
        &["outcome", "period", "observed", "counterfactual", "gap", "is_post"],
        gaps.rows
            .iter()
            .map(|r| {
                vec![
                    gaps.outcomes[r.outcome].clone(),
                    gaps.periods[r.period].clone(),
                    opt(r.observed),
                    opt(r.counterfactual),
                    opt(r.gap),
                    r.is_post.to_string(),
                ]
            })
            .collect(),
    )?;

    let summary = json!({
        "command": "fit",
        "objective": spec.label(),
        "nu": nu_of(&spec).map(jnum),
        "nu_heuristic": heuristic.is_some(),
        "nu_degenerate": heuristic.unwrap_or(false),
        "standardized": result.state.standardized,
        "converged": result.solution.converged,
        "iterations": result.solution.iterations,
        "gap": jnum(result.solution.gap),
        "q_sep": q.separate.iter().map(|v| jnum(*v)).collect::<Vec<_>>(),
        "q_cat": jnum(q.concatenated),
        "q_avg": jnum(q.averaged),
        "weights": weights.iter().map(|(u, w)| json!([u, w])).collect::<Vec<_>>(),
    });
    write_summary(dir, &summary)?;

    println!("objective: {}", spec.label());
    if let Some(nu) = nu_of(&spec) {
        println!("nu = {nu}");
    }
    println!("q_cat = {}, q_avg = {}", q.concatenated, q.averaged);
    for (u, w) in weights.iter().take(5) {
        println!("{u}\t{w:.4}");
    }
    Ok(0)
}

fn cmd_diagnose(cli: &Cli, args: &DiagnoseArgs) -> Result<i32> {
    let panel = read_panel(cli, &args.panel)?;
    let wanted = |d: Diagnostic| args.only.as_ref().is_none_or(|o| o.contains(&d));
    let options = FitOptions {
        solver: SolverSettings::with_tol(args.tol),
        standardize: None,
    };
    let dir = &cli.out;
    prepare_out(dir)?;
    let mut summary = serde_json::Map::new();
    summary.insert("command".into(), json!("diagnose"));

    if wanted(Diagnostic::Spectrum) {
        let view = if args.raw { MatrixView::Raw } else { MatrixView::Transformed };
        let s = spectrum(&panel, view)?;
        write_csv(
            dir,
            "spectrum.csv",
            &["component", "singular_value", "cumulative_share"],
            s.singular_values
                .iter()
                .zip(&s.cumulative_shares)
                .enumerate()
                .map(|(i, (v, c))| vec![(i + 1).to_string(), num(*v), num(*c)])
                .collect(),
        )?;
        summary.insert(
            "spectrum".into(),
            json!({"rows": s.rows, "cols": s.cols, "top_share": jnum(s.top_share()), "raw": args.raw}),
        );
        println!("top singular share = {}", s.top_share());
    }
    if wanted(Diagnostic::Holdout) {
        let h = holdout_fit(&panel, args.holdout_nu, &options)?;
        write_csv(
            dir,
            "holdout.csv",
            &["outcome", "mspe", "uniform_mspe", "ratio"],
            h.rows
                .iter()
                .map(|r| {
                    vec![
                        panel.outcomes()[r.outcome].clone(),
                        num(r.mspe),
                        num(r.uniform_mspe),
                        num(r.ratio),
                    ]
                })
                .collect(),
        )?;
        summary.insert(
            "holdout".into(),
            json!({"nu": h.nu, "median_ratio": jnum(h.median_ratio())}),
        );
    }
    if wanted(Diagnostic::Frontier) {
        let grid = args.grid.clone().unwrap_or_else(default_grid);
        let pts = frontier(&panel, &grid, &options)?;
        write_csv(
            dir,
            "frontier.csv",
            &["nu", "q_avg", "q_cat"],
            pts.iter().map(|p| vec![num(p.nu), num(p.q_avg), num(p.q_cat)]).collect(),
        )?;
        summary.insert(
            "frontier".into(),
            json!({"points": pts.len(), "converged": pts.iter().all(|p| p.converged)}),
        );
    }
    if wanted(Diagnostic::Condition) {
        let c = condition_ratio(&panel, MatrixView::Raw)?;
        write_csv(
            dir,
            "condition.csv",
            &["averaged", "separate", "increase_pct", "infinite"],
            vec![vec![
                num(c.averaged),
                num(c.separate),
                num(c.increase_pct),
                c.infinite.to_string(),
            ]],
        )?;
        summary.insert(
            "condition".into(),
            json!({"increase_pct": jnum(c.increase_pct), "infinite": c.infinite}),
        );
    }
    write_summary(dir, &Value::Object(summary))?;
    Ok(0)
}

fn parse_null(text: &str, k: usize) -> Result<Vec<f64>> {
    if text == "zero" {
        return Ok(vec![0.0; k]);
    }
    let v = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Input(format!("invalid --null `{text}`")))?;
    if v.len() != k {
        return Err(Error::Input(format!("--null has {} values for {k} outcomes", v.len())));
    }
    Ok(v)
}

fn cmd_infer(cli: &Cli, args: &InferArgs) -> Result<i32> {
    let panel = read_panel(cli, &args.panel)?;
    let fit_opts = fit_options(&args.objective);
    let (spec, _) = resolve_spec(&panel, &args.objective, &fit_opts)?;
    let options = TestOptions {
        fit: fit_opts,
        q: args.q.parse::<QOrder>()?,
        scheme: args.scheme.parse::<Scheme>()?,
        seed: cli.seed,
    };
    let tau0 = parse_null(&args.null, panel.n_outcomes())?;
    let post: Vec<usize> = (panel.t0()..panel.n_periods()).collect();
    let targets: Vec<usize> = match args.period.as_str() {
        "last" => vec![panel.n_periods() - 1],
        "all" => post.clone(),
        label => vec![panel
            .period_index(label)
            .filter(|t| *t >= panel.t0())
            .ok_or_else(|| Error::Input(format!("`{label}` is not a post-treatment period")))?],
    };

    let mut results: Vec<(String, TestResult)> = Vec::new();
    if args.joint {
        let null = NullSpec {
            tau0: tau0.clone(),
            periods: PostPeriods::All,
        };
        let r = test_null_joint(&panel, &spec, &null, &options)?;
        if r.long_block {
            eprintln!("warning: post block longer than half the periods; permutation distribution is coarse");
        }
        results.push(("all".into(), r));
    } else {
        for &t in &targets {
            let null = NullSpec {
                tau0: tau0.clone(),
                periods: PostPeriods::Single(t),
            };
            results.push((panel.periods()[t].clone(), test_null(&panel, &spec, &null, &options)?));
        }
    }
    if results.iter().any(|(_, r)| !r.fit.converged) && !args.objective.allow_nonconverged {
        return Err(Error::Numerical("solver did not converge in a refit".into()));
    }

    let dir = &cli.out;
    prepare_out(dir)?;
    let null_label = args.null.clone();
    write_csv(
        dir,
        "tests.csv",
        &["null", "periods", "q", "scheme", "statistic", "p_value"],
        results
            .iter()
            .map(|(p, r)| {
                vec![
                    null_label.clone(),
                    p.clone(),
                    r.q_order.to_string(),
                    r.scheme.to_string(),
                    num(r.observed),
                    num(r.p_value),
                ]
            })
            .collect(),
    )?;
    let (periods, t0) = (panel.periods(), panel.t0());
    write_csv(
        dir,
        "statistics.csv",
        &["test_periods", "period", "statistic", "is_post"],
        results
            .iter()
            .flat_map(|(label, r)| {
                r.statistics.iter().map(move |(t, s)| {
                    vec![label.clone(), periods[*t].clone(), num(*s), (*t >= t0).to_string()]
                })
            })
            .collect(),
    )?;

    let mut summary = json!({
        "command": "infer",
        "objective": spec.label(),
        "null": tau0.iter().map(|v| jnum(*v)).collect::<Vec<_>>(),
        "q": options.q.to_string(),
        "scheme": options.scheme.to_string(),
        "joint": args.joint,
        "tests": results.iter().map(|(p, r)| json!({
            "periods": p,
            "statistic": jnum(r.observed),
            "p_value": jnum(r.p_value),
            "n_reference": r.n_reference,
            "long_block": r.long_block,
            "sampled": r.sampled,
        })).collect::<Vec<_>>(),
    });

    if let Some(iv) = &args.interval {
        let [lo, hi, n] = iv[..] else {
            return Err(Error::Input("--interval expects lo,hi,n".into()));
        };
        if !(n >= 1.0) || n.fract() != 0.0 || !(lo <= hi) {
            return Err(Error::Input("--interval expects lo <= hi and integer n >= 1".into()));
        }
        let period = *targets.last().expect("at least one period");
        let interval = avg_effect_interval(&panel, period, &linspace(lo, hi, n as usize), args.alpha, &options)?;
        write_csv(
            dir,
            "interval.csv",
            &["tau", "p_value", "accepted"],
            interval
                .p_values
                .iter()
                .map(|(t, p)| vec![num(*t), num(*p), (*p > args.alpha).to_string()])
                .collect(),
        )?;
        if interval.is_empty() {
            eprintln!("warning: no grid value accepted at alpha = {}", args.alpha);
        }
        summary["interval"] = json!({
            "alpha": args.alpha,
            "period": panel.periods()[period],
            "lower": interval.bounds.map(|b| jnum(b.0)),
            "upper": interval.bounds.map(|b| jnum(b.1)),
            "empty": interval.is_empty(),
        });
    }
    write_summary(dir, &summary)?;
    for (p, r) in &results {
        println!("{p}\tS = {}\tp = {}", r.observed, r.p_value);
    }
    Ok(0)
}

fn sim_config(cli: &Cli, args: &SimulateArgs) -> Result<DgpConfig> {
    let mut config = match (&args.preset, &cli.config) {
        (Some(_), Some(_)) => {
            return Err(Error::Input("--preset and --config are mutually exclusive".into()));
        }
        (Some(name), None) => preset(name).ok_or_else(|| Error::Input(format!("unknown preset `{name}`")))?,
        (None, Some(path)) => DgpConfig::from_toml_str(&fs::read_to_string(path)?)?,
        (None, None) => DgpConfig::default(),
    };
    if let Some(v) = args.rho {
        config.rho = v;
    }
    if let Some(v) = args.t0 {
        config.t0 = v;
    }
    if let Some(v) = args.k {
        config.k = v;
    }
    if let Some(v) = args.sigma {
        config.noise_sigma = v;
    }
    if let Some(v) = args.n_units {
        config.n_units = v;
    }
    config.seed = cli.seed;
    config.validate()?;
    Ok(config)
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<i32> {
    let config = sim_config(cli, args)?;
    let study = run_study(&config, args.reps, cli.jobs)?;
    let dir = &cli.out;
    prepare_out(dir)?;

    write_csv(
        dir,
        "replications.csv",
        &["rep", "estimator", "bias", "imbalance", "converged"],
        study
            .records
            .iter()
            .flat_map(|r| {
                Estimator::ALL.iter().enumerate().map(move |(j, e)| {
                    vec![
                        r.rep.to_string(),
                        e.name().to_string(),
                        num(r.bias[j]),
                        num(r.imbalance[j]),
                        r.converged.to_string(),
                    ]
                })
            })
            .collect(),
    )?;
    let q = |x: &crate::simlab::Quantiles| vec![num(x.q05), num(x.q25), num(x.q50), num(x.q75), num(x.q95)];
    write_csv(
        dir,
        "summary.csv",
        &[
            "estimator", "mean_abs_bias", "mean_bias", "bias_q05", "bias_q25", "bias_q50", "bias_q75", "bias_q95",
            "mean_imbalance", "imbalance_q05", "imbalance_q25", "imbalance_q50", "imbalance_q75", "imbalance_q95",
        ],
        study
            .summaries
            .iter()
            .map(|s| {
                let mut row = vec![s.estimator.name().to_string(), num(s.mean_abs_bias), num(s.mean_bias)];
                row.extend(q(&s.bias));
                row.push(num(s.mean_imbalance));
                row.extend(q(&s.imbalance));
                row
            })
            .collect(),
    )?;

    let mut summary = json!({
        "command": "simulate",
        "config": serde_json::to_value(&config).map_err(|e| Error::Numerical(e.to_string()))?,
        "reps": study.reps,
        "failures": study.failures.len(),
        "mean_abs_bias": Estimator::ALL.iter().map(|e| (e.name().to_string(), jnum(study.mean_abs_bias(*e)))).collect::<serde_json::Map<_, _>>(),
    });

    if args.probes {
        let p = probe_study(&config, args.reps, cli.jobs)?;
        summary["probes"] = serde_json::to_value(&p).map_err(|e| Error::Numerical(e.to_string()))?;
    }
    if let Some(obj) = args.size_study {
        let spec = match obj {
            ObjectiveArg::Separate => ObjectiveSpec::separate(0),
            ObjectiveArg::Concatenated => ObjectiveSpec::concatenated(),
            ObjectiveArg::Averaged => ObjectiveSpec::averaged(),
            ObjectiveArg::Combined => ObjectiveSpec::combined(0.5),
        };
        let size = size_study(&config, args.reps, cli.jobs, &spec, args.alpha, &TestOptions::default())?;
        write_csv(
            dir,
            "rejection.csv",
            &["rep", "p_value", "rejected"],
            size.p_values
                .iter()
                .enumerate()
                .map(|(i, p)| vec![i.to_string(), num(*p), (*p <= args.alpha).to_string()])
                .collect(),
        )?;
        summary["size"] = json!({
            "objective": spec.label(),
            "alpha": args.alpha,
            "rejection_rate": jnum(size.rejection_rate),
            "on_lattice": size.on_lattice,
        });
    }
    write_summary(dir, &summary)?;

    for est in Estimator::ALL {
        println!("{}\tmean |bias| = {}", est.name(), study.mean_abs_bias(est));
    }
    Ok(0)
}
