//! The invariant suite behind `privsel verify`.

use privsel_core::beta::{tail_lower_bound, BetaParams};
use privsel_core::fingerprint::{
    column_equality_experiment, verify_beta_fingerprinting, verify_fingerprinting_identity, FingerprintCheck,
    InstanceShape,
};
use privsel_core::mechanisms::{exponential_mechanism_audit, Mechanism, MechanismSpec};
use privsel_core::quadrature::integrate_unit_interval;
use privsel_core::rng::{derive_seed, stream};
use privsel_core::stats::{ks_critical_value, ks_statistic};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const SHAPES: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
pub const TAIL_BETAS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, 5.0];
pub const TAIL_P_STARS: [f64; 5] = [0.05, 0.1, 0.125, 0.25, 0.5];
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// `∫₀¹ f_{a,b}`, reading the upper half off the mirrored density so it is
/// never evaluated at `1 - q` rounded to 1.
pub fn pdf_mass(params: &BetaParams) -> f64 {
    let mirrored = BetaParams::new(params.beta(), params.alpha()).expect("valid shapes");
    integrate_unit_interval(
        |p, q| {
            if p <= 0.5 {
                params.pdf(p).expect("p in [0, 1]")
            } else {
                mirrored.pdf(q).expect("q in [0, 1]")
            }
        },
        1e-12,
    )
}

fn pdf_normalizes() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for &a in &SHAPES {
        for &b in &SHAPES {
            worst = worst.max((pdf_mass(&BetaParams::new(a, b).expect("valid shapes")) - 1.0).abs());
        }
    }
    outcome(
        "beta_pdf_normalizes",
        worst <= 1e-9,
        format!("max |∫f - 1| = {worst:.3e} over 16 shape pairs (limit 1e-9)"),
    )
}

fn cdf_shape() -> Vec<CheckOutcome> {
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let mut monotone = true;
    let mut worst_symmetry: f64 = 0.0;
    for &a in &SHAPES {
        for &b in &SHAPES {
            let params = BetaParams::new(a, b).expect("valid shapes");
            let values: Vec<f64> = grid.iter().map(|&p| params.cdf(p).expect("p in [0, 1]")).collect();
            monotone &= values.windows(2).all(|w| w[0] <= w[1]);
            if a == b {
                for (&p, &c) in grid.iter().zip(&values) {
                    let mirror = params.cdf(1.0 - p).expect("p in [0, 1]");
                    worst_symmetry = worst_symmetry.max((c + mirror - 1.0).abs());
                }
            }
        }
    }
    vec![
        outcome(
            "beta_cdf_monotone",
            monotone,
            "1001-point grid, 16 shape pairs".into(),
        ),
        outcome(
            "beta_cdf_symmetric",
            worst_symmetry <= 1e-9,
            format!("max |F(p) + F(1-p) - 1| = {worst_symmetry:.3e} (limit 1e-9)"),
        ),
    ]
}

fn tail_grid() -> CheckOutcome {
    let mut failures = Vec::new();
    for &b in &TAIL_BETAS {
        for &p in &TAIL_P_STARS {
            match tail_lower_bound(b, p) {
                Ok(r) if r.satisfied => {}
                Ok(r) => failures.push(format!("({b}, {p}): {} < {}", r.true_probability, r.bound_value)),
                Err(e) => failures.push(format!("({b}, {p}): {e}")),
            }
        }
    }
    outcome(
        "tail_bound_grid",
        failures.is_empty(),
        if failures.is_empty() {
            "25 (beta, p*) points".into()
        } else {
            failures.join("; ")
        },
    )
}

fn sampler_ks(seed: u64) -> CheckOutcome {
    let n = 100_000;
    let mut rng = stream(seed);
    let mut worst: f64 = 0.0;
    for &(a, b) in &[(0.5, 0.5), (2.0, 5.0), (1.7599, 1.7599)] {
        let params = BetaParams::new(a, b).expect("valid shapes");
        let mut draws: Vec<f64> = (0..n).map(|_| params.sample(&mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        worst = worst.max(ks_statistic(&draws, |x| params.cdf(x).expect("x in [0, 1]")));
    }
    let limit = ks_critical_value(n);
    outcome(
        "beta_sampler_ks",
        worst < limit,
        format!("max KS distance {worst:.3e} (limit {limit:.3e}, 1e5 draws)"),
    )
}

fn random_table<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..1 << n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Worst residual of the Bernoulli fingerprinting identity over 50 random
/// tables with `n = 1..=10` and 20-point grids.
pub fn fingerprint_identity_residual(seed: u64) -> privsel_core::Result<f64> {
    let mut rng = stream(seed);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = 1 + i % 10;
        let f = random_table(n, &mut rng);
        let grid: Vec<f64> = (0..20).map(|g| g as f64 / 19.0).collect();
        let checked = verify_fingerprinting_identity(&FingerprintCheck::new(n, f, grid)?)?;
        worst = worst.max(checked.max_abs_residual.unwrap_or(f64::INFINITY));
    }
    Ok(worst)
}

/// Worst residual of the beta-prior identity over every `n = 1..=8` and
/// shape pair, with a fresh random table for each (128 tables).
pub fn beta_fingerprint_residual(seed: u64) -> privsel_core::Result<f64> {
    let mut rng = stream(seed);
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        for &a in &SHAPES {
            for &b in &SHAPES {
                let check = FingerprintCheck::new(n, random_table(n, &mut rng), Vec::new())?;
                let r = verify_beta_fingerprinting(&check, &BetaParams::new(a, b)?)?;
                worst = worst.max(r.abs_residual);
            }
        }
    }
    Ok(worst)
}

fn residual_outcome(name: &str, residual: privsel_core::Result<f64>, what: &str) -> CheckOutcome {
    match residual {
        Ok(r) => outcome(
            name,
            r <= IDENTITY_TOLERANCE,
            format!("max residual {r:.3e} over {what} (limit 1e-9)"),
        ),
        Err(e) => outcome(name, false, e.to_string()),
    }
}

fn dp_ratio() -> CheckOutcome {
    let mut details = Vec::new();
    let mut passed = true;
    for eps in [0.5, 1.0] {
        match exponential_mechanism_audit(2, 3, eps) {
            Ok(a) => {
                passed &= a.passed();
                details.push(format!(
                    "eps {eps}: worst log-ratio {:.15} over {} neighbor pairs",
                    a.worst_log_ratio, a.neighbor_pairs
                ));
            }
            Err(e) => {
                passed = false;
                details.push(e.to_string());
            }
        }
    }
    outcome("exp_mech_dp_ratio", passed, details.join("; "))
}

/// Small default instance for the per-column equality.
pub const COLUMN_CHECK_SHAPE: (usize, usize, usize, f64) = (16, 2, 50, 2.0);

fn column_equality(seed: u64) -> CheckOutcome {
    let (d, k, n, beta) = COLUMN_CHECK_SHAPE;
    let spec = MechanismSpec::new(Mechanism::ReportNoisyMax, 1.0, 0.0);
    let result = InstanceShape::new(d, k, n, beta).and_then(|shape| column_equality_experiment(&spec, &shape, 10_000, seed));
    match result {
        Ok(r) => {
            let agreeing = r.agreeing_columns();
            // at 3σ each column misses with probability ~0.27%
            outcome(
                "per_column_fingerprint_equality",
                agreeing + 1 >= d,
                format!("{agreeing}/{d} columns agree at 3 sigma (rnm, n = {n}, k = {k}, beta = {beta}, 1e4 trials)"),
            )
        }
        Err(e) => outcome("per_column_fingerprint_equality", false, e.to_string()),
    }
}

/// Runs every check; randomized checks draw from streams derived from
/// `master_seed`.
pub fn run_verify(master_seed: u64) -> VerifyReport {
    let mut checks = vec![pdf_normalizes()];
    checks.extend(cdf_shape());
    checks.push(tail_grid());
    checks.push(sampler_ks(derive_seed(master_seed, 0)));
    checks.push(residual_outcome(
        "fingerprint_identity",
        fingerprint_identity_residual(derive_seed(master_seed, 1)),
        "50 random tables, n = 1..10, 20-point grids",
    ));
    checks.push(residual_outcome(
        "beta_fingerprint_identity",
        beta_fingerprint_residual(derive_seed(master_seed, 2)),
        "n = 1..8 and 16 shape pairs",
    ));
    checks.push(dp_ratio());
    checks.push(column_equality(derive_seed(master_seed, 3)));
    VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
