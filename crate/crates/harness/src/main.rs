use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dpnormopt_core::mechanism::{self, MechanismParams};
use dpnormopt_core::SensitivityFactor;
use dpnormopt_harness::audit_suite::run_audit_suite;
use dpnormopt_harness::config::{AuditConfig, ConfigError, ExperimentConfig, ParamsInput};
use dpnormopt_harness::experiment::{run_experiment, sample_once, scaling_slopes, summarize};
use dpnormopt_harness::report::{emit_audit_csv, emit_csv, emit_summary};
use dpnormopt_harness::thread_pool;
use serde_json::json;

const EXIT_AUDIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dpnormopt",
    version,
    about = "Private convex optimization with the regularized exponential mechanism"
)]
struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "DPNORMOPT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the experiment grid and writes the per-run CSV.
    Run,
    /// Runs the audit suite; exits 1 if any audit fails.
    Audit {
        /// Reverses every audited inequality (self-test of the failure path).
        #[arg(long, hide = true)]
        inject_bug: bool,
    },
    /// Prints mechanism parameters and utility bounds.
    Params(ParamsArgs),
    /// Releases one mechanism draw for the first grid entry of a config.
    Sample,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Sensitivity factor, 1 or 2.
    #[arg(long)]
    c: Option<u8>,
    #[arg(long)]
    mu_loss: Option<f64>,
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = if error.chain().any(|e| e.is::<ConfigError>()) {
            EXIT_CONFIG
        } else {
            EXIT_RUNTIME
        };
        Self { code, error }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: ConfigError::Invalid(msg.into()).into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Run => run(cli),
        Command::Audit { inject_bug } => audit(cli, *inject_bug),
        Command::Params(a) => params(cli, a),
        Command::Sample => sample(cli),
    }
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config_error("--config is required"))?;
    let mut c = ExperimentConfig::load(path).map_err(anyhow::Error::from)?;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    Ok(c)
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("runs");
    out.with_file_name(format!("{stem}_summary.csv"))
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let config = experiment_config(cli)?;
    let pool = thread_pool(cli.threads)?;
    let report = run_experiment(&config, &pool)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs.csv"));
    emit_csv(&report.records, &out)?;
    let cells = summarize(&report.records);
    emit_summary(&cells, &summary_path(&out))?;

    println!(
        "{:>4} {:>6} {:>8} {:>14} {:>12} {:>14}  ok",
        "d", "n", "epsilon", "mean_gap", "stderr", "bound"
    );
    for c in &cells {
        println!(
            "{:>4} {:>6} {:>8} {:>14.6e} {:>12.3e} {:>14.6e}  {}",
            c.d,
            c.n,
            c.epsilon,
            c.mean_gap,
            c.stderr,
            c.analytic_bound,
            if c.within_bound { "yes" } else { "NO" }
        );
    }
    for s in scaling_slopes(&cells) {
        println!(
            "slope d={} epsilon={}: {:.3} over {} sizes",
            s.d, s.epsilon, s.slope, s.points
        );
    }
    println!("wrote {} rows to {}", report.records.len(), out.display());
    for f in &report.failures {
        eprintln!(
            "run d={} n={} epsilon={} rep={} seed={} failed: {}",
            f.d, f.n, f.epsilon, f.rep, f.seed, f.message
        );
    }
    Ok(if report.failures.is_empty() {
        0
    } else {
        EXIT_RUNTIME
    })
}

fn audit(cli: &Cli, inject_bug: bool) -> Result<u8, Failure> {
    let mut config = match &cli.config {
        Some(p) => AuditConfig::load(p).map_err(anyhow::Error::from)?,
        None => AuditConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let pool = thread_pool(cli.threads)?;
    let report = run_audit_suite(&config, &pool, inject_bug)?;
    for s in &report.sections {
        if let Some(w) = &s.warning {
            eprintln!("warning: {w}");
        }
        println!(
            "{} {:<20} checked={:<6} failed={:<4} worst_margin={:.3e} time={:.1}s",
            if s.pass() { "PASS" } else { "FAIL" },
            s.name,
            s.checked,
            s.failed,
            s.worst_margin,
            s.seconds
        );
    }
    if let Some(out) = &cli.out {
        emit_audit_csv(&report.rows, out)?;
        println!("wrote {} rows to {}", report.rows.len(), out.display());
    }
    Ok(if report.all_pass() {
        0
    } else {
        EXIT_AUDIT_FAILURE
    })
}

fn params_input(cli: &Cli, a: &ParamsArgs) -> Result<ParamsInput, Failure> {
    let mut input = match &cli.config {
        Some(p) => Some(ParamsInput::load(p).map_err(anyhow::Error::from)?),
        None => None,
    };
    let c =
        a.c.map(|v| SensitivityFactor::try_from(v).map_err(|e| config_error(e.to_string())))
            .transpose()?;
    if let Some(i) = input.as_mut() {
        i.g = a.g.unwrap_or(i.g);
        i.theta = a.theta.or(i.theta);
        i.d = a.d.unwrap_or(i.d);
        i.n = a.n.unwrap_or(i.n);
        i.epsilon = a.epsilon.unwrap_or(i.epsilon);
        i.delta = a.delta.unwrap_or(i.delta);
        i.c = c.unwrap_or(i.c);
        i.mu_loss = a.mu_loss.or(i.mu_loss);
        return Ok(input.take().expect("checked"));
    }
    let need = |name: &str| config_error(format!("--{name} is required without --config"));
    Ok(ParamsInput {
        g: a.g.ok_or_else(|| need("g"))?,
        theta: a.theta,
        d: a.d.ok_or_else(|| need("d"))?,
        n: a.n.ok_or_else(|| need("n"))?,
        epsilon: a.epsilon.ok_or_else(|| need("epsilon"))?,
        delta: a.delta.ok_or_else(|| need("delta"))?,
        c: c.unwrap_or_default(),
        mu_loss: a.mu_loss,
    })
}

fn entry(p: &MechanismParams, bound: f64) -> serde_json::Value {
    json!({ "k": p.k, "mu": p.mu, "utility_bound": bound })
}

fn params(cli: &Cli, a: &ParamsArgs) -> Result<u8, Failure> {
    let i = params_input(cli, a)?;
    if i.theta.is_none() && i.mu_loss.is_none() {
        return Err(config_error(
            "give theta (ERM/SCO) and/or mu_loss (strongly convex variants)",
        ));
    }
    let cg = i.c.value() * i.g;
    let bad = |e: dpnormopt_core::Error| config_error(e.to_string());
    let mut out = json!({ "input": i });
    if let Some(theta) = i.theta {
        let erm =
            mechanism::erm_params(i.g, theta, i.d, i.n, i.epsilon, i.delta, i.c).map_err(bad)?;
        let sco =
            mechanism::sco_params(i.g, theta, i.d, i.n, i.epsilon, i.delta, i.c).map_err(bad)?;
        out["erm"] = entry(
            &erm,
            mechanism::erm_utility_bound(cg, theta, i.d, i.n, i.epsilon, i.delta).map_err(bad)?,
        );
        out["sco"] = entry(
            &sco,
            mechanism::sco_utility_bound(cg, theta, i.d, i.n, i.epsilon, i.delta).map_err(bad)?,
        );
    }
    if let Some(m) = i.mu_loss {
        let erm = mechanism::sc_erm_params(i.g, m, i.n, i.epsilon, i.delta, i.c).map_err(bad)?;
        let sco = mechanism::sc_sco_params(i.g, m, i.n, i.epsilon, i.delta, i.c).map_err(bad)?;
        out["sc-erm"] = entry(
            &erm,
            mechanism::sc_erm_utility_bound(cg, m, i.d, i.n, i.epsilon, i.delta).map_err(bad)?,
        );
        out["sc-sco"] = entry(
            &sco,
            mechanism::sc_sco_utility_bound(cg, m, i.d, i.n, i.epsilon, i.delta).map_err(bad)?,
        );
    }
    let text = serde_json::to_string_pretty(&out).context("serializing parameters")?;
    println!("{text}");
    if let Some(path) = &cli.out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn sample(cli: &Cli) -> Result<u8, Failure> {
    let config = experiment_config(cli)?;
    let (x, report) = sample_once(&config)?;
    let text = serde_json::to_string_pretty(&json!({ "x": x, "report": report }))
        .context("serializing draw")?;
    println!("{text}");
    if let Some(path) = &cli.out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}
