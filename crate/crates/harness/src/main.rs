use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privsel::config::{BetaSetting, ExperimentConfig, ExperimentKind, RegimeSetting};
use privsel::emit::{emit, with_output, write_trials_csv, Format};
use privsel::runner::{run_experiment, sweep};
use privsel::verify::run_verify;
use privsel::Result;

/// Private top-k selection experiments on beta-Bernoulli hard instances.
#[derive(Parser)]
#[command(name = "privsel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite and print a JSON pass/fail report.
    Verify(VerifyArgs),
    /// Top-k selection accuracy and the fingerprinting statistic.
    Topk(RunArgs),
    /// Multiple hypothesis testing with threshold selection.
    Mht(RunArgs),
    /// Gaussian release of all column means.
    Mean(RunArgs),
    /// Member vs non-member tracing scores.
    Trace(RunArgs),
    /// Repeat an experiment over values of one parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Symmetric prior parameter.
    #[arg(long, value_name = "auto|REAL")]
    beta: Option<BetaSetting>,
    /// peeling, rnm, svt, gauss-mean, first-k or nonprivate.
    #[arg(long)]
    mech: Option<String>,
    #[arg(long, value_name = "paper|REAL")]
    eps: Option<RegimeSetting>,
    #[arg(long, value_name = "paper|REAL")]
    delta: Option<RegimeSetting>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Accuracy reference: population or empirical.
    #[arg(long = "ref", value_name = "population|empirical")]
    reference: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_name = "csv|json")]
    format: Format,
    /// JSON config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write per-trial rows as CSV to this path.
    #[arg(long)]
    per_trial: Option<PathBuf>,
    /// Record wall-clock runtime (otherwise runtime_s is 0 so output is
    /// reproducible byte for byte).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// n, k, d, epsilon or beta_sym.
    #[arg(long)]
    axis: Option<String>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Experiment run at each value (default topk).
    #[arg(long)]
    base: Option<String>,
}

fn build_config(kind: ExperimentKind, a: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::new(kind),
    };
    c.kind = kind;
    if let Some(v) = a.d {
        c.d = v;
    }
    if let Some(v) = a.k {
        c.k = v;
    }
    if let Some(v) = a.n {
        c.n = v;
    }
    if let Some(v) = a.beta {
        c.beta_sym = v;
    }
    if let Some(v) = &a.mech {
        c.mechanism = Some(v.clone());
    }
    if let Some(v) = a.eps {
        c.epsilon = v;
    }
    if let Some(v) = a.delta {
        c.delta = v;
    }
    if let Some(v) = a.trials {
        c.trials = v;
    }
    if let Some(v) = a.seed {
        c.master_seed = v;
    }
    if let Some(v) = &a.reference {
        c.reference = v.clone();
    }
    Ok(c)
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Topk(a) => run_single(ExperimentKind::Topk, a),
        Command::Mht(a) => run_single(ExperimentKind::Mht, a),
        Command::Mean(a) => run_single(ExperimentKind::Mean, a),
        Command::Trace(a) => run_single(ExperimentKind::Trace, a),
        Command::Verify(a) => {
            let report = run_verify(a.seed.unwrap_or(0));
            with_output(a.out.as_deref(), |w| {
                serde_json::to_writer_pretty(&mut *w, &report)?;
                writeln!(w)?;
                Ok(())
            })?;
            Ok(report.passed)
        }
        Command::Sweep(a) => {
            let mut c = build_config(ExperimentKind::Sweep, &a.run)?;
            if let Some(axis) = a.axis {
                c.axis = Some(axis);
            }
            if let Some(values) = a.values {
                c.values = Some(values);
            }
            if let Some(base) = a.base {
                c.base_kind = Some(base.parse()?);
            }
            let (axis, values) = c.sweep_plan()?;
            let mut records: Vec<_> = sweep(&c, axis, &values)?.into_iter().map(|o| o.record).collect();
            if !a.run.timing {
                records.iter_mut().for_each(|r| r.runtime_s = 0.0);
            }
            emit(&records, a.run.format, a.run.out.as_deref())?;
            Ok(true)
        }
    }
}

fn run_single(kind: ExperimentKind, a: RunArgs) -> Result<bool> {
    let config = build_config(kind, &a)?;
    let mut output = run_experiment(&config)?;
    if !a.timing {
        output.record.runtime_s = 0.0;
    }
    emit(std::slice::from_ref(&output.record), a.format, a.out.as_deref())?;
    if let Some(path) = &a.per_trial {
        with_output(Some(path), |w| write_trials_csv(&output.trials, w))?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("privsel: invariant suite failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("privsel: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
