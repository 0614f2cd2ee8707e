//! CSV and JSON emission of result records.
//!
//! CSV floats are written as `{:.16e}` (17 significant digits); JSON floats
//! use the shortest representation that parses back to the same value.
//! Missing values are empty CSV fields and `null` in JSON.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::runner::{ResultRecord, TrialRow};
use crate::{HarnessError, Result};

pub const CSV_HEADER: &str = "kind,d,k,n,beta_sym,mechanism,epsilon,delta,trials,master_seed,reference,\
err_mean,err_ci,z_mean,z_ci,z_upper,lb_proxy_mean,lb_proxy_ci,gamma_hat,runtime_s";

pub const TRIAL_CSV_HEADER: &str = "trial,err,z,lb_proxy,l2_norm_sq";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(HarnessError::config("format", format!("unknown format `{other}` (expected csv|json)"))),
        }
    }
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn csv_row(r: &ResultRecord) -> String {
    let c = &r.config;
    [
        c.kind.name().to_string(),
        c.d.to_string(),
        c.k.to_string(),
        c.n.to_string(),
        fmt_float(c.beta_sym),
        c.mechanism.clone(),
        fmt_float(c.epsilon),
        fmt_float(c.delta),
        c.trials.to_string(),
        c.master_seed.to_string(),
        c.reference.clone(),
        fmt_opt(r.err_mean),
        fmt_opt(r.err_ci),
        fmt_float(r.z_mean),
        fmt_float(r.z_ci),
        fmt_opt(r.z_upper),
        fmt_float(r.lb_proxy_mean),
        fmt_float(r.lb_proxy_ci),
        fmt_float(r.gamma_hat),
        fmt_float(r.runtime_s),
    ]
    .join(",")
}

pub fn write_csv<W: Write + ?Sized>(records: &[ResultRecord], w: &mut W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", csv_row(r))?;
    }
    Ok(())
}

pub fn write_json<W: Write + ?Sized>(records: &[ResultRecord], w: &mut W) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, records)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_json<R: Read>(r: R) -> Result<Vec<ResultRecord>> {
    Ok(serde_json::from_reader(r)?)
}

/// Per-trial rows, sorted by trial index.
pub fn write_trials_csv<W: Write + ?Sized>(rows: &[TrialRow], w: &mut W) -> Result<()> {
    let mut sorted: Vec<&TrialRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.trial);
    writeln!(w, "{TRIAL_CSV_HEADER}")?;
    for r in sorted {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.trial,
            fmt_opt(r.err),
            fmt_float(r.z),
            fmt_float(r.lb_proxy),
            fmt_float(r.l2_norm_sq)
        )?;
    }
    Ok(())
}

pub fn write_records<W: Write + ?Sized>(records: &[ResultRecord], format: Format, w: &mut W) -> Result<()> {
    match format {
        Format::Csv => write_csv(records, w),
        Format::Json => write_json(records, w),
    }
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn with_output<F>(path: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
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

pub fn emit(records: &[ResultRecord], format: Format, path: Option<&Path>) -> Result<()> {
    with_output(path, |w| write_records(records, format, w))
}
