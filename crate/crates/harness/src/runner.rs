//! Seeded, trial-parallel experiment runner.
//!
//! Trial `t` draws everything from `trial_stream(master_seed, t)`. Trials run
//! on the rayon pool but are collected in trial order and reduced with
//! compensated sums, so aggregates do not depend on the thread count.

use std::collections::BTreeMap;
use std::time::Instant;

use privsel_core::fingerprint::{
    centered_inner, privacy_upper_bound, tracing_score, z_from_counts, BoundParameters,
};
use privsel_core::instance::{
    sample_column_means, sample_dataset, sample_population, sample_row, selection_error, AccuracyReference,
    ColumnMeans, Population,
};
use privsel_core::mechanisms::{gaussian_mean_release, MechanismSpec, SelectionOutput};
use privsel_core::rng::{trial_stream, Stream};
use privsel_core::stats::{compensated_sum, MeanEstimate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind, ResolvedConfig, SweepAxis};
use crate::{HarnessError, Result};

/// Per-trial measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    /// Selection error (misclassification count for `mht`, per-coordinate
    /// squared error for `mean`); absent when the output is not a size-k set.
    pub err: Option<f64>,
    pub z: f64,
    pub lb_proxy: f64,
    pub l2_norm_sq: f64,
}

/// Aggregate over all trials of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ResolvedConfig,
    pub err_mean: Option<f64>,
    pub err_ci: Option<f64>,
    pub z_mean: f64,
    pub z_ci: f64,
    /// Privacy upper bound on `E[Z]`; absent for mechanisms without a
    /// privacy guarantee.
    pub z_upper: Option<f64>,
    pub lb_proxy_mean: f64,
    pub lb_proxy_ci: f64,
    pub gamma_hat: f64,
    pub runtime_s: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub record: ResultRecord,
    /// Sorted by trial index.
    pub trials: Vec<TrialRow>,
}

struct Trial {
    row: TrialRow,
    /// `Σ_j M^j (P^j - ½)`.
    inner: f64,
    extras: Vec<f64>,
}

/// Runs every trial of `f` on its own derived stream, in trial order.
pub fn run_trials<T, F>(trials: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut Stream) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| f(t, &mut trial_stream(master_seed, t as u64)))
        .collect()
}

fn check_top_k(out: &SelectionOutput, cfg: &ResolvedConfig) -> Result<()> {
    if cfg.mechanism().is_top_k() && !(out.is_indicator() && out.l1_norm() == cfg.k as f64) {
        return Err(HarnessError::Invariant(format!(
            "{} returned a non-indicator or a set of size {} (k = {})",
            cfg.mechanism, out.l1_norm(), cfg.k
        )));
    }
    Ok(())
}

fn base_trial(
    t: usize,
    cfg: &ResolvedConfig,
    out: &SelectionOutput,
    means: &ColumnMeans,
    pop: &Population,
    err: Option<f64>,
) -> Result<Trial> {
    let z = compensated_sum(&z_from_counts(out, means, pop)?);
    let inner = centered_inner(out.scores(), pop.means());
    Ok(Trial {
        row: TrialRow {
            trial: t,
            err,
            z,
            lb_proxy: 2.0 * cfg.beta_sym * inner,
            l2_norm_sq: out.l2_norm_sq(),
        },
        inner,
        extras: Vec::new(),
    })
}

fn topk_error(out: &SelectionOutput, cfg: &ResolvedConfig, means: &ColumnMeans, pop: &Population) -> Result<Option<f64>> {
    if !cfg.mechanism().is_top_k() {
        return Ok(None);
    }
    let reference = match cfg.reference() {
        AccuracyReference::Population => pop.means(),
        AccuracyReference::Empirical => means.values(),
    };
    Ok(Some(selection_error(&out.selected_indices(), reference, cfg.k)?))
}

fn topk_trial(t: usize, cfg: &ResolvedConfig, spec: &MechanismSpec, rng: &mut Stream) -> Result<Trial> {
    let pop = sample_population(cfg.d, cfg.prior(), rng)?;
    let means = sample_column_means(&pop, cfg.n, rng)?;
    let out = spec.run(&means, cfg.k, rng)?;
    check_top_k(&out, cfg)?;
    let err = topk_error(&out, cfg, &means, &pop)?;
    base_trial(t, cfg, &out, &means, &pop, err)
}

fn mht_trial(t: usize, cfg: &ResolvedConfig, spec: &MechanismSpec, rng: &mut Stream) -> Result<Trial> {
    let hyp = spec.hypothesis_spec(cfg.k)?;
    let pop = sample_population(cfg.d, cfg.prior(), rng)?;
    let means = sample_column_means(&pop, cfg.n, rng)?;
    let out = spec.run(&means, cfg.k, rng)?;
    check_top_k(&out, cfg)?;
    let (mut fp, mut low, mut tp, mut high) = (0.0, 0.0, 0.0, 0.0);
    for (&m, &p) in out.scores().iter().zip(pop.means()) {
        if p <= hyp.tau_prime {
            low += 1.0;
            fp += m;
        } else if p >= hyp.tau {
            high += 1.0;
            tp += m;
        }
    }
    let misclassified = fp + (high - tp);
    let mut trial = base_trial(t, cfg, &out, &means, &pop, Some(misclassified))?;
    trial.extras = vec![fp, low, tp, high];
    Ok(trial)
}

fn mean_trial(t: usize, cfg: &ResolvedConfig, rng: &mut Stream) -> Result<Trial> {
    let pop = sample_population(cfg.d, cfg.prior(), rng)?;
    let means = sample_column_means(&pop, cfg.n, rng)?;
    let release = gaussian_mean_release(&means, cfg.epsilon, cfg.delta, rng)?;
    let d = cfg.d as f64;
    let sq_err = |v: &[f64]| compensated_sum(&v.iter().zip(means.values()).map(|(a, b)| (a - b).powi(2)).collect::<Vec<_>>()) / d;
    let noisy_err = sq_err(&release.noisy);
    let clamped_err = sq_err(&release.clamped);
    let norm_sq = compensated_sum(&pop.means().iter().map(|p| p * p).collect::<Vec<_>>()) / d;
    let out = SelectionOutput::from_scores(release.clamped)?;
    let mut trial = base_trial(t, cfg, &out, &means, &pop, Some(noisy_err))?;
    trial.extras = vec![clamped_err, norm_sq];
    Ok(trial)
}

fn trace_trial(t: usize, cfg: &ResolvedConfig, spec: &MechanismSpec, rng: &mut Stream) -> Result<Trial> {
    let pop = sample_population(cfg.d, cfg.prior(), rng)?;
    let x = sample_dataset(&pop, cfg.n, rng)?;
    let means = x.column_means();
    let out = spec.run(&means, cfg.k, rng)?;
    check_top_k(&out, cfg)?;
    let member = x.row(rng.random_range(0..cfg.n))?;
    let fresh = sample_row(&pop, rng);
    let member_score = tracing_score(&out, &member, pop.means())?;
    let fresh_score = tracing_score(&out, &fresh, pop.means())?;
    let err = topk_error(&out, cfg, &means, &pop)?;
    let mut trial = base_trial(t, cfg, &out, &means, &pop, err)?;
    trial.extras = vec![member_score, fresh_score];
    Ok(trial)
}

fn column(trials: &[Trial], f: impl Fn(&Trial) -> f64) -> Vec<f64> {
    trials.iter().map(f).collect()
}

fn put_estimate(extras: &mut BTreeMap<String, f64>, name: &str, values: &[f64]) {
    let e = MeanEstimate::from_samples(values);
    extras.insert(format!("{name}_mean"), e.mean);
    extras.insert(format!("{name}_ci"), e.ci_halfwidth);
}

fn kind_extras(cfg: &ResolvedConfig, spec: &MechanismSpec, trials: &[Trial]) -> Result<BTreeMap<String, f64>> {
    let mut extras = BTreeMap::new();
    let extra = |i: usize| column(trials, |t| t.extras[i]);
    match cfg.kind {
        ExperimentKind::Mht => {
            let hyp = spec.hypothesis_spec(cfg.k)?;
            let total = |i: usize| compensated_sum(&extra(i));
            let (fp, low, tp, high) = (total(0), total(1), total(2), total(3));
            if low > 0.0 {
                extras.insert("fp_rate".into(), fp / low);
            }
            if high > 0.0 {
                extras.insert("tp_rate".into(), tp / high);
            }
            extras.insert("fp_limit".into(), hyp.false_positive_limit(cfg.d));
            extras.insert("tp_floor".into(), hyp.true_positive_floor());
        }
        ExperimentKind::Mean => {
            let sigma = privsel_core::mechanisms::gaussian_sigma(cfg.d, cfg.n, cfg.epsilon, cfg.delta);
            extras.insert("sigma_sq".into(), sigma * sigma);
            put_estimate(&mut extras, "clamped_err", &extra(0));
            put_estimate(&mut extras, "norm_sq_over_d", &extra(1));
        }
        ExperimentKind::Trace => {
            put_estimate(&mut extras, "member", &extra(0));
            put_estimate(&mut extras, "nonmember", &extra(1));
            put_estimate(&mut extras, "gap", &column(trials, |t| t.extras[0] - t.extras[1]));
        }
        _ => {}
    }
    Ok(extras)
}

/// Runs one resolved configuration.
pub fn run_resolved(cfg: &ResolvedConfig) -> Result<ExperimentOutput> {
    let started = Instant::now();
    let spec = cfg.mechanism_spec();
    let trials = run_trials(cfg.trials, cfg.master_seed, |t, rng| match cfg.kind {
        ExperimentKind::Topk => topk_trial(t, cfg, &spec, rng),
        ExperimentKind::Mht => mht_trial(t, cfg, &spec, rng),
        ExperimentKind::Mean => mean_trial(t, cfg, rng),
        ExperimentKind::Trace => trace_trial(t, cfg, &spec, rng),
        ExperimentKind::Verify | ExperimentKind::Sweep => Err(HarnessError::config(
            "kind",
            format!("{} is not a trial experiment", cfg.kind),
        )),
    })?;

    let errs: Option<Vec<f64>> = trials.iter().map(|t| t.row.err).collect();
    let err = errs.map(|e| MeanEstimate::from_samples(&e));
    let z = MeanEstimate::from_samples(&column(&trials, |t| t.row.z));
    let lb = MeanEstimate::from_samples(&column(&trials, |t| t.row.lb_proxy));
    let gamma_hat = compensated_sum(&column(&trials, |t| t.inner)) / (trials.len() * cfg.k) as f64;
    let mean_l2 = compensated_sum(&column(&trials, |t| t.row.l2_norm_sq)) / trials.len() as f64;
    let z_upper = match spec.privacy() {
        Some((eps, delta)) => {
            let delta_cap = spec.l1_cap(cfg.d, cfg.k)? / 2.0;
            let params = BoundParameters::new(eps, delta, delta_cap, gamma_hat, cfg.beta_sym)?;
            Some(privacy_upper_bound(&params, cfg.n, mean_l2)?)
        }
        None => None,
    };
    let extras = kind_extras(cfg, &spec, &trials)?;
    Ok(ExperimentOutput {
        record: ResultRecord {
            config: cfg.clone(),
            err_mean: err.map(|e| e.mean),
            err_ci: err.map(|e| e.ci_halfwidth),
            z_mean: z.mean,
            z_ci: z.ci_halfwidth,
            z_upper,
            lb_proxy_mean: lb.mean,
            lb_proxy_ci: lb.ci_halfwidth,
            gamma_hat,
            runtime_s: started.elapsed().as_secs_f64(),
            extras,
        },
        trials: trials.into_iter().map(|t| t.row).collect(),
    })
}

/// Validates `config` and runs it. Sweeps go through [`sweep`] and the
/// invariant suite through [`crate::verify::run_verify`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    if matches!(config.kind, ExperimentKind::Sweep | ExperimentKind::Verify) {
        return Err(HarnessError::config(
            "kind",
            format!("{} does not produce a single record", config.kind),
        ));
    }
    run_resolved(&config.resolve()?)
}

/// One run of the base experiment per value of `axis`, all from the same
/// master seed.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<ExperimentOutput>> {
    if values.is_empty() {
        return Err(HarnessError::config("values", "a sweep needs at least one value"));
    }
    // validate every point before spending time on any of them
    let points = values
        .iter()
        .map(|&v| base.at_axis_value(axis, v)?.resolve())
        .collect::<Result<Vec<_>>>()?;
    points.iter().map(run_resolved).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BetaSetting, RegimeSetting};

    fn small(kind: ExperimentKind, mechanism: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(kind);
        c.d = 64;
        c.k = 2;
        c.n = 100;
        c.beta_sym = BetaSetting::Value(2.0);
        c.mechanism = Some(mechanism.into());
        c.trials = 200;
        c.master_seed = 9;
        c
    }

    #[test]
    fn nonprivate_has_zero_empirical_error() {
        let mut c = small(ExperimentKind::Topk, "nonprivate");
        c.reference = "empirical".into();
        let r = run_experiment(&c).unwrap().record;
        assert_eq!(r.err_mean, Some(0.0));
        assert_eq!(r.err_ci, Some(0.0));
        assert!(r.z_upper.is_none());
    }

    #[test]
    fn rows_are_ordered_and_consistent() {
        let out = run_experiment(&small(ExperimentKind::Topk, "rnm")).unwrap();
        assert_eq!(out.trials.len(), 200);
        assert!(out.trials.iter().enumerate().all(|(i, t)| t.trial == i && t.l2_norm_sq == 2.0));
        let mean_z = compensated_sum(&out.trials.iter().map(|t| t.z).collect::<Vec<_>>()) / 200.0;
        assert_eq!(mean_z, out.record.z_mean);
        let gamma = out.record.lb_proxy_mean / (2.0 * 2.0 * 2.0);
        assert!((gamma - out.record.gamma_hat).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_record() {
        let c = small(ExperimentKind::Trace, "peeling");
        let mut a = run_experiment(&c).unwrap();
        let mut b = run_experiment(&c).unwrap();
        a.record.runtime_s = 0.0;
        b.record.runtime_s = 0.0;
        assert_eq!(a, b);
        assert!(a.record.extras.contains_key("gap_mean"));
    }

    #[test]
    fn aggregates_ignore_thread_count() {
        let c = small(ExperimentKind::Topk, "peeling").resolve().unwrap();
        let run_with = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let mut out = pool.install(|| run_resolved(&c)).unwrap();
            out.record.runtime_s = 0.0;
            out
        };
        assert_eq!(run_with(1), run_with(3));
    }

    #[test]
    fn mht_reports_rates() {
        let mut c = small(ExperimentKind::Mht, "svt");
        c.d = 512;
        c.k = 4;
        c.n = 20_000;
        c.beta_sym = BetaSetting::Auto;
        let r = run_experiment(&c).unwrap().record;
        assert!(r.extras["fp_rate"] <= r.extras["fp_limit"]);
        assert_eq!(r.extras["tp_floor"], 15.0 / 16.0);
    }

    #[test]
    fn mean_uses_unclamped_error() {
        let mut c = small(ExperimentKind::Mean, "gauss-mean");
        c.delta = RegimeSetting::Value(1e-6);
        let r = run_experiment(&c).unwrap().record;
        let sigma_sq = r.extras["sigma_sq"];
        assert!((r.err_mean.unwrap() - sigma_sq).abs() <= r.err_ci.unwrap());
        // clamping pulls outliers in, so it never increases the error
        assert!(r.extras["clamped_err_mean"] <= r.err_mean.unwrap());
    }

    #[test]
    fn single_value_sweep_matches_run() {
        let mut base = small(ExperimentKind::Sweep, "peeling");
        base.base_kind = Some(ExperimentKind::Topk);
        let swept = sweep(&base, SweepAxis::N, &[100.0]).unwrap();
        let direct = run_experiment(&small(ExperimentKind::Topk, "peeling")).unwrap();
        let strip = |mut o: ExperimentOutput| {
            o.record.runtime_s = 0.0;
            o
        };
        assert_eq!(strip(swept.into_iter().next().unwrap()), strip(direct));
    }

    #[test]
    fn sweep_validates_all_points_first() {
        let base = small(ExperimentKind::Sweep, "peeling");
        assert!(matches!(
            sweep(&base, SweepAxis::K, &[2.0, 100.0]),
            Err(HarnessError::Config { field: "k", .. })
        ));
        assert!(run_experiment(&base).is_err());
    }
}
