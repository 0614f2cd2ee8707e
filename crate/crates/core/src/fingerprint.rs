//! The fingerprinting statistic `Z = Σ_{i,j} M(X)^j (X_i^j - P^j)`.
//!
//! `Z` is bounded above by privacy ([`privacy_upper_bound`]) and below, in
//! expectation, by accuracy ([`accuracy_lower_bound_proxy`]); the two meet in a
//! sample-size lower bound ([`squeeze_chain`]). The fingerprinting identities
//! that drive the lower side are checked exactly by
//! [`verify_fingerprinting_identity`] and [`verify_beta_fingerprinting`].

use rand::Rng;
use rayon::prelude::*;

use crate::beta::BetaParams;
use crate::error::{domain, Error, Result};
use crate::instance::{sample_column_means, sample_dataset, sample_population, sample_row, ColumnMeans, Dataset, Population};
use crate::mechanisms::{MechanismSpec, SelectionOutput};
use crate::rng::trial_stream;
use crate::stats::{MeanEstimate, NeumaierSum};

/// Largest `n` for which `f` tables over `{0,1}^n` are enumerated.
pub const MAX_ENUMERATION_N: usize = 20;

/// `Z` and its row and column decompositions for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub z_total: f64,
    /// `Z_i = Σ_j Z_i^j`.
    pub z_by_row: Vec<f64>,
    /// `Z^j = Σ_i Z_i^j`.
    pub z_by_col: Vec<f64>,
    pub l2_norm_sq: f64,
    pub upper_bound_value: Option<f64>,
    pub lower_bound_proxy: Option<f64>,
}

fn check_dims(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

pub fn z_statistic(output: &SelectionOutput, x: &Dataset, pop: &Population) -> Result<AttackReport> {
    let d = x.d();
    check_dims("mechanism output", d, output.d())?;
    check_dims("population", d, pop.d())?;
    let m = output.scores();
    let p = pop.means();
    let z_by_row: Vec<f64> = (0..x.n())
        .map(|i| {
            (0..d)
                .filter(|&j| m[j] != 0.0)
                .map(|j| m[j] * (f64::from(u8::from(x.get(i, j))) - p[j]))
                .collect::<NeumaierSum>()
                .total()
        })
        .collect();
    let z_by_col = z_columns(m, &x.column_counts(), x.n(), p);
    Ok(AttackReport {
        z_total: z_by_col.iter().copied().collect::<NeumaierSum>().total(),
        z_by_row,
        z_by_col,
        l2_norm_sq: output.l2_norm_sq(),
        upper_bound_value: None,
        lower_bound_proxy: None,
    })
}

fn z_columns(m: &[f64], counts: &[u64], n: usize, p: &[f64]) -> Vec<f64> {
    m.iter()
        .zip(counts)
        .zip(p)
        .map(|((&mj, &c), &pj)| mj * (c as f64 - n as f64 * pj))
        .collect()
}

/// Column decomposition `Z^j = M^j·(Σ_i X_i^j - n·P^j)`, which needs only the
/// column counts.
pub fn z_from_counts(output: &SelectionOutput, means: &ColumnMeans, pop: &Population) -> Result<Vec<f64>> {
    check_dims("mechanism output", means.d(), output.d())?;
    check_dims("population", means.d(), pop.d())?;
    Ok(z_columns(output.scores(), means.counts(), means.n(), pop.means()))
}

/// Parameters of the privacy/accuracy squeeze on `Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParameters {
    pub epsilon: f64,
    pub delta: f64,
    /// Half the almost-sure ℓ1 cap: `‖M(X)‖₁ ≤ 2Δ`.
    pub delta_cap: f64,
    pub gamma: f64,
    pub beta_sym: f64,
}

impl BoundParameters {
    pub fn new(epsilon: f64, delta: f64, delta_cap: f64, gamma: f64, beta_sym: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(domain("epsilon", epsilon, "epsilon >= 0"));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(domain("delta", delta, "delta in [0, 1]"));
        }
        if !(delta_cap > 0.0 && delta_cap.is_finite()) {
            return Err(domain("Delta", delta_cap, "Delta > 0"));
        }
        if !(beta_sym > 0.0) {
            return Err(domain("beta", beta_sym, "beta > 0"));
        }
        Ok(Self {
            epsilon,
            delta,
            delta_cap,
            gamma,
            beta_sym,
        })
    }

    /// `ε = 1`, `δ = βγk/(nd)`, `Δ = d/2`.
    pub fn standard_instantiation(beta_sym: f64, gamma: f64, k: usize, n: usize, d: usize) -> Result<Self> {
        let delta = beta_sym * gamma * k as f64 / (n as f64 * d as f64);
        Self::new(1.0, delta, d as f64 / 2.0, gamma, beta_sym)
    }
}

/// `n·(e^ε·½·√E‖M(X)‖₂² + Δδ)`.
pub fn privacy_upper_bound(params: &BoundParameters, n: usize, expected_l2_sq: f64) -> Result<f64> {
    if !(expected_l2_sq >= 0.0) {
        return Err(domain("expected squared norm", expected_l2_sq, "value >= 0"));
    }
    Ok(n as f64 * (params.epsilon.exp() * 0.5 * expected_l2_sq.sqrt() + params.delta_cap * params.delta))
}

/// `2β·Σ_j M(X)^j (P^j - ½)` for one realization; its average over trials
/// estimates the accuracy lower bound on `E[Z]`.
pub fn accuracy_lower_bound_proxy(output: &SelectionOutput, pop: &Population, beta_sym: f64) -> Result<f64> {
    let prior = pop.prior();
    if !prior.is_symmetric() || (prior.beta() - beta_sym).abs() > 1e-12 * beta_sym.max(1.0) {
        return Err(Error::Precondition(format!(
            "accuracy bound needs a symmetric Beta({beta_sym}, {beta_sym}) prior, population has Beta({}, {})",
            prior.alpha(),
            prior.beta()
        )));
    }
    check_dims("mechanism output", pop.d(), output.d())?;
    Ok(2.0 * beta_sym * centered_inner(output.scores(), pop.means()))
}

/// `Σ_j M^j (P^j - ½)`.
pub fn centered_inner(scores: &[f64], means: &[f64]) -> f64 {
    scores
        .iter()
        .zip(means)
        .filter(|(&m, _)| m != 0.0)
        .map(|(&m, &p)| m * (p - 0.5))
        .collect::<NeumaierSum>()
        .total()
}

/// A function `f: {0,1}^n → ℝ` (indexed by the bitmask of `x`) with the grid
/// of `p` values on which to check the fingerprinting identity.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintCheck {
    pub n: usize,
    pub f_table: Vec<f64>,
    pub p_grid: Vec<f64>,
    pub max_abs_residual: Option<f64>,
}

impl FingerprintCheck {
    pub fn new(n: usize, f_table: Vec<f64>, p_grid: Vec<f64>) -> Result<Self> {
        if n > MAX_ENUMERATION_N {
            return Err(Error::EnumerationTooLarge {
                n,
                max: MAX_ENUMERATION_N,
            });
        }
        check_dims("f table", 1 << n, f_table.len())?;
        if let Some(&p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(domain("p", p, "p in [0, 1]"));
        }
        Ok(Self {
            n,
            f_table,
            p_grid,
            max_abs_residual: None,
        })
    }

    /// `F_s = Σ_{|x| = s} f(x)` for `s = 0..=n`.
    fn weight_sums(&self) -> Vec<f64> {
        let mut sums = vec![NeumaierSum::new(); self.n + 1];
        for (x, &f) in self.f_table.iter().enumerate() {
            sums[x.count_ones() as usize].add(f);
        }
        sums.iter().map(NeumaierSum::total).collect()
    }

    fn check_enumerable(&self) -> Result<()> {
        if self.n > MAX_ENUMERATION_N {
            return Err(Error::EnumerationTooLarge {
                n: self.n,
                max: MAX_ENUMERATION_N,
            });
        }
        check_dims("f table", 1 << self.n, self.f_table.len())
    }
}

fn binomial(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Power-basis coefficients of `g(p) = Σ_s F_s p^s (1-p)^{n-s}`.
fn g_coefficients(weights: &[f64]) -> Vec<f64> {
    let n = weights.len() - 1;
    let mut coeffs = vec![0.0; n + 1];
    for (s, &w) in weights.iter().enumerate() {
        for t in 0..=n - s {
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[s + t] += w * sign * binomial(n - s, t);
        }
    }
    coeffs
}

fn horner(coeffs: &[f64], p: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * p + c)
}

/// Checks `E[f(X)·Σ_i (X_i - p)] = p(1-p)·g'(p)` on every grid point, with
/// `X_i` i.i.d. Bernoulli(p). The left side enumerates all `2^n` outcomes;
/// the right side differentiates `g` in the power basis.
pub fn verify_fingerprinting_identity(check: &FingerprintCheck) -> Result<FingerprintCheck> {
    check.check_enumerable()?;
    let n = check.n;
    let coeffs = g_coefficients(&check.weight_sums());
    let derivative: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(m, &c)| m as f64 * c).collect();
    let mut worst: f64 = 0.0;
    for &p in &check.p_grid {
        let lhs: f64 = check
            .f_table
            .iter()
            .enumerate()
            .map(|(x, &f)| {
                let s = x.count_ones() as i32;
                f * p.powi(s) * (1.0 - p).powi(n as i32 - s) * (f64::from(s) - n as f64 * p)
            })
            .collect::<NeumaierSum>()
            .total();
        let rhs = p * (1.0 - p) * horner(&derivative, p);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(FingerprintCheck {
        max_abs_residual: Some(worst),
        ..check.clone()
    })
}

/// Both sides of the beta-prior fingerprinting identity, computed exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaFingerprintReport {
    /// `E[f(X)·Σ_i (X_i - P)]`.
    pub lhs: f64,
    /// `(α+β)·E[g(P)·(P - α/(α+β))]`.
    pub rhs: f64,
    pub abs_residual: f64,
}

/// Checks the fingerprinting identity with `P ~ Beta(α, β)`. Each side is a
/// finite combination of `E[P^a (1-P)^b] = B(α+a, β+b)/B(α, β)`.
pub fn verify_beta_fingerprinting(check: &FingerprintCheck, prior: &BetaParams) -> Result<BetaFingerprintReport> {
    check.check_enumerable()?;
    let n = check.n;
    let (alpha, beta) = (prior.alpha(), prior.beta());
    let moment = |a: usize, b: usize| prior.mixed_moment(a as f64, b as f64);
    let mut lhs = NeumaierSum::new();
    let mut rhs = NeumaierSum::new();
    for (s, w) in check.weight_sums().into_iter().enumerate() {
        let m0 = moment(s, n - s);
        let m1 = moment(s + 1, n - s);
        lhs.add(w * (s as f64 * m0 - n as f64 * m1));
        rhs.add(w * ((alpha + beta) * m1 - alpha * m0));
    }
    let (lhs, rhs) = (lhs.total(), rhs.total());
    Ok(BetaFingerprintReport {
        lhs,
        rhs,
        abs_residual: (lhs - rhs).abs(),
    })
}

/// `⟨M(X), Y - p⟩`.
pub fn tracing_score(output: &SelectionOutput, row: &[u8], pop_mean: &[f64]) -> Result<f64> {
    check_dims("row", output.d(), row.len())?;
    check_dims("population mean", output.d(), pop_mean.len())?;
    Ok(output
        .scores()
        .iter()
        .zip(row)
        .zip(pop_mean)
        .filter(|((&m, _), _)| m != 0.0)
        .map(|((&m, &y), &p)| m * (f64::from(y) - p))
        .collect::<NeumaierSum>()
        .total())
}

/// Dimensions and prior of a hard instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub beta_sym: f64,
}

impl InstanceShape {
    pub fn new(d: usize, k: usize, n: usize, beta_sym: f64) -> Result<Self> {
        if d == 0 || n == 0 || k == 0 || k > d {
            return Err(Error::Precondition(format!(
                "need d, n >= 1 and 1 <= k <= d, got d = {d}, k = {k}, n = {n}"
            )));
        }
        BetaParams::symmetric(beta_sym)?;
        Ok(Self { d, k, n, beta_sym })
    }

    pub fn prior(&self) -> BetaParams {
        BetaParams::symmetric(self.beta_sym).expect("validated in new")
    }
}

/// Member and non-member tracing scores over many independent instances.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub member: MeanEstimate,
    pub nonmember: MeanEstimate,
    /// Paired per-trial difference `member - nonmember`.
    pub gap: MeanEstimate,
}

/// Per trial: draw `P`, `X`, run the mechanism, then score one uniformly
/// chosen row of `X` and one fresh row from `P` against `p = P`.
pub fn membership_experiment(
    spec: &MechanismSpec,
    shape: &InstanceShape,
    trials: usize,
    master_seed: u64,
) -> Result<MembershipReport> {
    if trials < 2 {
        return Err(Error::Precondition("need at least 2 trials".into()));
    }
    let scores: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_stream(master_seed, t as u64);
            let pop = sample_population(shape.d, shape.prior(), &mut rng)?;
            let x = sample_dataset(&pop, shape.n, &mut rng)?;
            let out = spec.run(&x.column_means(), shape.k, &mut rng)?;
            let member = x.row(rng.random_range(0..shape.n))?;
            let fresh = sample_row(&pop, &mut rng);
            Ok((
                tracing_score(&out, &member, pop.means())?,
                tracing_score(&out, &fresh, pop.means())?,
            ))
        })
        .collect::<Result<_>>()?;
    let member: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let nonmember: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let gap: Vec<f64> = scores.iter().map(|s| s.0 - s.1).collect();
    Ok(MembershipReport {
        member: MeanEstimate::from_samples(&member),
        nonmember: MeanEstimate::from_samples(&nonmember),
        gap: MeanEstimate::from_samples(&gap),
    })
}

/// Per-column comparison of `Z^j` with `2β·M^j(P^j - ½)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnEqualityReport {
    pub z_by_col: Vec<MeanEstimate>,
    pub proxy_by_col: Vec<MeanEstimate>,
    /// Paired per-trial difference `Z^j - 2β·M^j(P^j - ½)`.
    pub diff_by_col: Vec<MeanEstimate>,
}

impl ColumnEqualityReport {
    /// Columns whose paired difference is within the CI of zero.
    pub fn agreeing_columns(&self) -> usize {
        self.diff_by_col.iter().filter(|e| e.covers(0.0)).count()
    }
}

/// Estimates both sides of the per-column fingerprinting equality. Only the
/// column counts enter `Z^j`, so each trial draws them directly from their
/// binomial law.
pub fn column_equality_experiment(
    spec: &MechanismSpec,
    shape: &InstanceShape,
    trials: usize,
    master_seed: u64,
) -> Result<ColumnEqualityReport> {
    if trials < 2 {
        return Err(Error::Precondition("need at least 2 trials".into()));
    }
    let d = shape.d;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_stream(master_seed, t as u64);
            let pop = sample_population(d, shape.prior(), &mut rng)?;
            let means = sample_column_means(&pop, shape.n, &mut rng)?;
            let out = spec.run(&means, shape.k, &mut rng)?;
            let z = z_from_counts(&out, &means, &pop)?;
            let proxy = out
                .scores()
                .iter()
                .zip(pop.means())
                .map(|(&m, &p)| 2.0 * shape.beta_sym * m * (p - 0.5))
                .collect();
            Ok((z, proxy))
        })
        .collect::<Result<_>>()?;
    let column = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| {
        MeanEstimate::from_samples(&rows.iter().map(pick).collect::<Vec<_>>())
    };
    Ok(ColumnEqualityReport {
        z_by_col: (0..d).map(|j| column(&|r| r.0[j])).collect(),
        proxy_by_col: (0..d).map(|j| column(&|r| r.1[j])).collect(),
        diff_by_col: (0..d).map(|j| column(&|r| r.0[j] - r.1[j])).collect(),
    })
}

/// The squeeze `2βγ̂k ≤ E[Z] ≤ upper` at one configuration, and the sample
/// size it forces.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeChain {
    pub gamma_hat: f64,
    pub accuracy_side: f64,
    pub z: MeanEstimate,
    pub privacy_side: f64,
    /// `(3/e)·β·γ̂·√k`.
    pub implied_n_floor: f64,
    pub n: usize,
    /// `2βγ̂k ≤ mean(Z) + CI` and `mean(Z) - CI ≤ upper`.
    pub chain_holds: bool,
    pub n_consistent: bool,
}

pub fn squeeze_chain(beta_sym: f64, k: usize, n: usize, gamma_hat: f64, z: &MeanEstimate, privacy_side: f64) -> SqueezeChain {
    let accuracy_side = 2.0 * beta_sym * gamma_hat * k as f64;
    let implied_n_floor = 3.0 / std::f64::consts::E * beta_sym * gamma_hat * (k as f64).sqrt();
    SqueezeChain {
        gamma_hat,
        accuracy_side,
        z: *z,
        privacy_side,
        implied_n_floor,
        n,
        chain_holds: accuracy_side <= z.upper() && z.lower() <= privacy_side,
        n_consistent: n as f64 >= implied_n_floor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::resample_row;
    use crate::mechanisms::Mechanism;
    use crate::quadrature::integrate_unit_interval;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform_pop(means: Vec<f64>) -> Population {
        Population::new(means, BetaParams::uniform()).unwrap()
    }

    #[test]
    fn z_examples() {
        let x = Dataset::from_fn(4, 3, |_, j| j == 1).unwrap();
        let pop = uniform_pop(vec![0.2, 0.5, 0.7]);
        let zero = SelectionOutput::from_scores(vec![0.0; 3]).unwrap();
        assert_eq!(z_statistic(&zero, &x, &pop).unwrap().z_total, 0.0);
        let e1 = SelectionOutput::indicator(3, &[1]).unwrap();
        let r = z_statistic(&e1, &x, &pop).unwrap();
        assert_eq!(r.z_total, 2.0);
        assert_eq!(r.z_by_row, vec![0.5; 4]);
        assert_eq!(r.z_by_col, vec![0.0, 2.0, 0.0]);
        assert!(r.upper_bound_value.is_none() && r.lower_bound_proxy.is_none());
        let short = SelectionOutput::indicator(2, &[1]).unwrap();
        assert!(matches!(z_statistic(&short, &x, &pop), Err(Error::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn z_decompositions_agree(n in 1usize..30, d in 1usize..30, seed in any::<u64>()) {
            let mut rng = stream(seed);
            let pop = sample_population(d, BetaParams::symmetric(2.0).unwrap(), &mut rng).unwrap();
            let x = sample_dataset(&pop, n, &mut rng).unwrap();
            let scores: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let out = SelectionOutput::from_scores(scores).unwrap();
            let r = z_statistic(&out, &x, &pop).unwrap();
            let by_row: f64 = r.z_by_row.iter().sum();
            let by_col: f64 = r.z_by_col.iter().sum();
            prop_assert!((r.z_total - by_row).abs() < 1e-9);
            prop_assert!((r.z_total - by_col).abs() < 1e-9);
            prop_assert_eq!(z_from_counts(&out, &x.column_means(), &pop).unwrap(), r.z_by_col);
        }
    }

    #[test]
    fn upper_bound_examples() {
        let p = BoundParameters::new(1.0, 0.0, 1.0, 0.1, 1.0).unwrap();
        let v = privacy_upper_bound(&p, 100, 9.0).unwrap();
        assert!((v - 100.0 * std::f64::consts::E * 1.5).abs() < 1e-12);
        assert!((v - 407.74).abs() < 0.01);
        assert_eq!(privacy_upper_bound(&p, 100, 0.0).unwrap(), 0.0);
        let p = BoundParameters::new(0.0, 1.0, 5.0, 0.1, 1.0).unwrap();
        assert!((privacy_upper_bound(&p, 10, 4.0).unwrap() - 60.0).abs() < 1e-12);
        assert!(privacy_upper_bound(&p, 10, -1.0).is_err());
        assert!(BoundParameters::new(1.0, 0.0, 0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn standard_instantiation_values() {
        let p = BoundParameters::standard_instantiation(2.0, 0.25, 8, 100, 1024).unwrap();
        assert_eq!(p.epsilon, 1.0);
        assert!((p.delta - 2.0 * 0.25 * 8.0 / 102_400.0).abs() < 1e-18);
        assert_eq!(p.delta_cap, 512.0);
    }

    #[test]
    fn lower_proxy_examples() {
        let pop = Population::new(vec![0.75, 0.1], BetaParams::symmetric(2.0).unwrap()).unwrap();
        let zero = SelectionOutput::from_scores(vec![0.0; 2]).unwrap();
        assert_eq!(accuracy_lower_bound_proxy(&zero, &pop, 2.0).unwrap(), 0.0);
        let e0 = SelectionOutput::indicator(2, &[0]).unwrap();
        assert_eq!(accuracy_lower_bound_proxy(&e0, &pop, 2.0).unwrap(), 1.0);
        let half = Population::new(vec![0.5, 0.5], BetaParams::symmetric(2.0).unwrap()).unwrap();
        let ones = SelectionOutput::indicator(2, &[0, 1]).unwrap();
        assert_eq!(accuracy_lower_bound_proxy(&ones, &half, 2.0).unwrap(), 0.0);
        let skewed = Population::new(vec![0.5, 0.5], BetaParams::new(2.0, 3.0).unwrap()).unwrap();
        assert!(accuracy_lower_bound_proxy(&ones, &skewed, 2.0).is_err());
        assert!(accuracy_lower_bound_proxy(&ones, &half, 3.0).is_err());
    }

    fn grid(points: usize) -> Vec<f64> {
        (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
    }

    #[test]
    fn fingerprint_identity_examples() {
        let p_grid = grid(11);
        // identity on one bit: both sides p(1-p)
        let c = FingerprintCheck::new(1, vec![0.0, 1.0], p_grid.clone()).unwrap();
        assert!(verify_fingerprinting_identity(&c).unwrap().max_abs_residual.unwrap() < 1e-12);
        // AND on two bits: both sides 2p²(1-p)
        let and = FingerprintCheck::new(2, vec![0.0, 0.0, 0.0, 1.0], p_grid.clone()).unwrap();
        assert!(verify_fingerprinting_identity(&and).unwrap().max_abs_residual.unwrap() < 1e-12);
        let coeffs = g_coefficients(&and.weight_sums());
        for &p in &p_grid {
            let deriv = 2.0 * coeffs[2] * p + coeffs[1];
            assert!((p * (1.0 - p) * deriv - 2.0 * p * p * (1.0 - p)).abs() < 1e-14);
        }
        let constant = FingerprintCheck::new(3, vec![4.2; 8], p_grid).unwrap();
        assert!(verify_fingerprinting_identity(&constant).unwrap().max_abs_residual.unwrap() < 1e-12);
    }

    #[test]
    fn fingerprint_check_validation() {
        assert!(FingerprintCheck::new(2, vec![0.0; 3], vec![0.5]).is_err());
        assert!(FingerprintCheck::new(1, vec![0.0; 2], vec![1.5]).is_err());
        assert!(matches!(
            FingerprintCheck::new(21, Vec::new(), vec![0.5]),
            Err(Error::EnumerationTooLarge { n: 21, .. })
        ));
    }

    /// g(p) from its definition, differentiated by central differences.
    fn derivative_oracle(f_table: &[f64], n: usize, p: f64) -> f64 {
        let g = |p: f64| -> f64 {
            f_table
                .iter()
                .enumerate()
                .map(|(x, &f)| {
                    let s = x.count_ones() as i32;
                    f * p.powi(s) * (1.0 - p).powi(n as i32 - s)
                })
                .sum()
        };
        let h = 1e-5;
        (g(p + h) - g(p - h)) / (2.0 * h)
    }

    #[test]
    fn fingerprint_identity_random_tables() {
        let mut rng = stream(21);
        for trial in 0..50 {
            let n = 1 + trial % 10;
            let f: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p_grid: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
            let c = FingerprintCheck::new(n, f.clone(), p_grid.clone()).unwrap();
            let checked = verify_fingerprinting_identity(&c).unwrap();
            assert!(checked.max_abs_residual.unwrap() <= 1e-9, "n = {n}");
            // the right side, rebuilt independently
            for &p in &p_grid {
                let p = p.clamp(1e-4, 1.0 - 1e-4);
                let lhs: f64 = f
                    .iter()
                    .enumerate()
                    .map(|(x, &fx)| {
                        let s = x.count_ones() as i32;
                        fx * p.powi(s) * (1.0 - p).powi(n as i32 - s) * (f64::from(s) - n as f64 * p)
                    })
                    .sum();
                assert!((lhs - p * (1.0 - p) * derivative_oracle(&f, n, p)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn beta_fingerprint_examples() {
        let constant = FingerprintCheck::new(3, vec![1.5; 8], Vec::new()).unwrap();
        let r = verify_beta_fingerprinting(&constant, &BetaParams::new(2.0, 5.0).unwrap()).unwrap();
        assert!(r.lhs.abs() < 1e-14 && r.rhs.abs() < 1e-14, "{r:?}");

        let identity = FingerprintCheck::new(1, vec![0.0, 1.0], Vec::new()).unwrap();
        let r = verify_beta_fingerprinting(&identity, &BetaParams::uniform()).unwrap();
        assert!((r.lhs - 1.0 / 6.0).abs() < 1e-14 && (r.rhs - 1.0 / 6.0).abs() < 1e-14);
        for &b in &[0.5, 2.0, 5.0] {
            let r = verify_beta_fingerprinting(&identity, &BetaParams::symmetric(b).unwrap()).unwrap();
            let closed = b / (2.0 * (2.0 * b + 1.0));
            assert!((r.lhs - closed).abs() < 1e-14 && (r.rhs - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn beta_fingerprint_random_tables_against_quadrature() {
        let mut rng = stream(22);
        let shapes = [0.5, 1.0, 2.0, 5.0];
        for trial in 0..50 {
            let n = 1 + trial % 8;
            let (a, b) = (shapes[trial % 4], shapes[(trial / 4) % 4]);
            let prior = BetaParams::new(a, b).unwrap();
            let f: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = FingerprintCheck::new(n, f.clone(), Vec::new()).unwrap();
            let r = verify_beta_fingerprinting(&c, &prior).unwrap();
            assert!(r.abs_residual <= 1e-9, "n = {n}, ({a}, {b})");
            // left side by quadrature over P of the conditional expectation
            let norm = crate::beta::beta_function(a, b).unwrap();
            let lhs = integrate_unit_interval(
                |p, q| {
                    let inner: f64 = f
                        .iter()
                        .enumerate()
                        .map(|(x, &fx)| {
                            let s = x.count_ones() as i32;
                            fx * p.powi(s) * q.powi(n as i32 - s) * (f64::from(s) - n as f64 * p)
                        })
                        .sum();
                    inner * p.powf(a - 1.0) * q.powf(b - 1.0) / norm
                },
                1e-12,
            );
            assert!((lhs - r.lhs).abs() < 1e-8, "quadrature {lhs} vs exact {}", r.lhs);
        }
    }

    #[test]
    fn tracing_examples() {
        let zero_row = [0u8; 3];
        let out = SelectionOutput::indicator(3, &[0, 2]).unwrap();
        assert_eq!(tracing_score(&out, &zero_row, &[0.0; 3]).unwrap(), 0.0);
        let e1 = SelectionOutput::indicator(3, &[1]).unwrap();
        assert_eq!(tracing_score(&e1, &[0, 1, 0], &[0.3, 0.5, 0.9]).unwrap(), 0.5);
        assert!(tracing_score(&e1, &[0, 1], &[0.3, 0.5, 0.9]).is_err());
    }

    #[test]
    fn fresh_rows_score_zero_on_average() {
        let mut rng = stream(23);
        let pop = sample_population(50, BetaParams::symmetric(1.5).unwrap(), &mut rng).unwrap();
        let x = sample_dataset(&pop, 30, &mut rng).unwrap();
        let out = crate::mechanisms::nonprivate_topk(&x.column_means(), 5).unwrap();
        let scores: Vec<f64> = (0..10_000)
            .map(|_| tracing_score(&out, &sample_row(&pop, &mut rng), pop.means()).unwrap())
            .collect();
        assert!(MeanEstimate::from_samples(&scores).covers(0.0));
    }

    #[test]
    fn resampled_row_is_a_neighbor() {
        let mut rng = stream(24);
        let pop = sample_population(8, BetaParams::uniform(), &mut rng).unwrap();
        let x = sample_dataset(&pop, 5, &mut rng).unwrap();
        let y = resample_row(&x, 2, &pop, &mut rng).unwrap();
        assert!(x.is_neighbor(&y));
    }

    #[test]
    fn membership_first_k_is_blind() {
        let spec = MechanismSpec::new(Mechanism::FirstK, 1.0, 0.0);
        let shape = InstanceShape::new(64, 4, 10, 1.0).unwrap();
        let r = membership_experiment(&spec, &shape, 2000, 25).unwrap();
        assert!(r.member.covers(0.0), "{:?}", r.member);
        assert!(r.nonmember.covers(0.0), "{:?}", r.nonmember);
        assert!(r.gap.covers(0.0), "{:?}", r.gap);
    }

    #[test]
    fn membership_nonprivate_leaks() {
        let spec = MechanismSpec::new(Mechanism::NonPrivate, 1.0, 0.0);
        let shape = InstanceShape::new(256, 8, 10, 1.0).unwrap();
        let r = membership_experiment(&spec, &shape, 1000, 26).unwrap();
        assert!(r.gap.lower() > 0.0, "{:?}", r.gap);
        assert!(r.nonmember.covers(0.0));
    }

    #[test]
    fn membership_is_deterministic() {
        let spec = MechanismSpec::new(Mechanism::ReportNoisyMax, 1.0, 0.0);
        let shape = InstanceShape::new(32, 2, 20, 2.0).unwrap();
        let a = membership_experiment(&spec, &shape, 50, 27).unwrap();
        let b = membership_experiment(&spec, &shape, 50, 27).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn column_equality_small_instance() {
        let spec = MechanismSpec::new(Mechanism::ReportNoisyMax, 1.0, 0.0);
        let shape = InstanceShape::new(8, 2, 30, 2.0).unwrap();
        let r = column_equality_experiment(&spec, &shape, 10_000, 28).unwrap();
        // 3σ per column; all eight should agree
        assert!(r.agreeing_columns() >= 7, "{}", r.agreeing_columns());
        // the selected columns carry positive signal on both sides
        let z_total: f64 = r.z_by_col.iter().map(|e| e.mean).sum();
        assert!(z_total > 0.0);
    }

    #[test]
    fn chain_arithmetic() {
        let z = MeanEstimate::from_samples(&[14.0, 16.0, 18.0]);
        let c = squeeze_chain(2.0, 4, 100, 1.0, &z, 50.0);
        assert_eq!(c.accuracy_side, 16.0);
        assert!((c.implied_n_floor - 3.0 / std::f64::consts::E * 4.0).abs() < 1e-12);
        assert!(c.chain_holds && c.n_consistent);
        let c = squeeze_chain(2.0, 4, 1, 1.0, &z, 5.0);
        assert!(!c.chain_holds && !c.n_consistent);
    }
}
