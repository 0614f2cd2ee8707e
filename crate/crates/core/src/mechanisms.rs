//! Private selection mechanisms and their non-private baselines.
//!
//! Every mechanism consumes only the column means `X̄` (sensitivity `1/n` per
//! column under a one-row change), so they take a [`ColumnMeans`] rather than
//! the raw dataset.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::instance::{top_k_set, ColumnMeans, Dataset};

/// An `(epsilon, delta)` budget split over `rounds` adaptive selections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
    rounds: usize,
    per_round_epsilon: f64,
}

impl PrivacyBudget {
    /// With `delta > 0` each round gets `ε / √(8·rounds·log(e^ε/δ))`, which
    /// composes (advanced composition) to `(ε, δ)`. With `delta = 0` the split
    /// falls back to basic composition, `ε / rounds`.
    pub fn new(epsilon: f64, delta: f64, rounds: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(domain("epsilon", epsilon, "epsilon > 0"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(domain("delta", delta, "delta in [0, 1)"));
        }
        if rounds == 0 {
            return Err(Error::Precondition("rounds must be at least 1".into()));
        }
        let per_round_epsilon = if delta > 0.0 {
            // log(e^ε/δ) = ε - log δ
            epsilon / (8.0 * rounds as f64 * (epsilon - delta.ln())).sqrt()
        } else {
            epsilon / rounds as f64
        };
        Ok(Self {
            epsilon,
            delta,
            rounds,
            per_round_epsilon,
        })
    }

    pub fn pure(epsilon: f64, rounds: usize) -> Result<Self> {
        Self::new(epsilon, 0.0, rounds)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn per_round_epsilon(&self) -> f64 {
        self.per_round_epsilon
    }
}

/// Smallest `n` for which peeling meets `α·k` expected empirical error:
/// `(1/(αε))·√(8k·log(e^ε/δ))·log d`.
pub fn peeling_sample_size(alpha: f64, epsilon: f64, delta: f64, k: usize, d: usize) -> f64 {
    (8.0 * k as f64 * (epsilon - delta.ln())).sqrt() * (d as f64).ln() / (alpha * epsilon)
}

/// A mechanism output `M(X) ∈ [-1, 1]^d` with its norms.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutput {
    scores: Vec<f64>,
    l1_norm: f64,
    l2_norm_sq: f64,
    is_indicator: bool,
}

impl SelectionOutput {
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Precondition("output needs d >= 1 entries".into()));
        }
        if let Some(&bad) = scores.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(domain("score", bad, "score in [-1, 1]"));
        }
        let l1_norm = scores.iter().map(|s| s.abs()).sum();
        let l2_norm_sq = scores.iter().map(|s| s * s).sum();
        let is_indicator = scores.iter().all(|&s| s == 0.0 || s == 1.0);
        Ok(Self {
            scores,
            l1_norm,
            l2_norm_sq,
            is_indicator,
        })
    }

    /// Indicator vector of `selected` in dimension `d`.
    pub fn indicator(d: usize, selected: &[usize]) -> Result<Self> {
        let mut scores = vec![0.0; d];
        for &j in selected {
            if j >= d {
                return Err(Error::IndexOutOfRange {
                    what: "output",
                    index: j,
                    len: d,
                });
            }
            scores[j] = 1.0;
        }
        Self::from_scores(scores)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn d(&self) -> usize {
        self.scores.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_norm_sq
    }

    pub fn is_indicator(&self) -> bool {
        self.is_indicator
    }

    /// Indices with a non-zero score, in increasing order.
    pub fn selected_indices(&self) -> Vec<usize> {
        self.scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Thresholds for the multiple-hypothesis-testing variant: columns with mean
/// at least `tau` should be reported, columns at most `tau_prime` should not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisTestSpec {
    pub tau: f64,
    pub tau_prime: f64,
    pub rho: f64,
    pub k_bound: usize,
}

impl HypothesisTestSpec {
    pub fn new(tau: f64, tau_prime: f64, rho: f64, k_bound: usize) -> Result<Self> {
        if !(0.0 < tau_prime && tau_prime < tau && tau < 1.0) {
            return Err(Error::Precondition(format!(
                "need 0 < tau' < tau < 1, got tau = {tau}, tau' = {tau_prime}"
            )));
        }
        if !(0.0 < rho && rho < 1.0) {
            return Err(domain("rho", rho, "rho in (0, 1)"));
        }
        if k_bound == 0 {
            return Err(Error::Precondition("k_bound must be at least 1".into()));
        }
        Ok(Self {
            tau,
            tau_prime,
            rho,
            k_bound,
        })
    }

    /// `tau = 7/8`, `tau' = 7/8 - 3/16 = 11/16`, `rho = 1/16`.
    pub fn lower_bound_regime(k_bound: usize) -> Result<Self> {
        Self::new(7.0 / 8.0, 11.0 / 16.0, 1.0 / 16.0, k_bound)
    }

    /// Midpoint `(tau + tau') / 2` the sparse vector scan tests against.
    pub fn threshold(&self) -> f64 {
        0.5 * (self.tau + self.tau_prime)
    }

    /// Allowed per-column false-positive probability `rho·k/d`.
    pub fn false_positive_limit(&self, d: usize) -> f64 {
        self.rho * self.k_bound as f64 / d as f64
    }

    /// Required per-column true-positive probability `1 - rho`.
    pub fn true_positive_floor(&self) -> f64 {
        1.0 - self.rho
    }
}

fn check_exclusions(d: usize, excluded: &[bool]) -> Result<()> {
    if excluded.len() != d {
        return Err(Error::DimensionMismatch {
            what: "exclusion mask",
            expected: d,
            got: excluded.len(),
        });
    }
    if excluded.iter().all(|&e| e) {
        return Err(Error::Precondition("every column is excluded".into()));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(domain("epsilon", epsilon, "epsilon > 0"))
    }
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::Precondition(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    Ok(())
}

/// Exact selection probabilities of the exponential mechanism,
/// `Pr[j] ∝ exp(ε·n·X̄^j / 2)` over non-excluded columns.
pub fn exp_mech_probabilities(means: &ColumnMeans, epsilon: f64, excluded: &[bool]) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    check_exclusions(means.d(), excluded)?;
    let scale = epsilon * means.n() as f64 / 2.0;
    let logits: Vec<f64> = means
        .values()
        .iter()
        .zip(excluded)
        .map(|(&m, &ex)| if ex { f64::NEG_INFINITY } else { scale * m })
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Outcome of [`exponential_mechanism_audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyAudit {
    pub epsilon: f64,
    /// Ordered neighboring pairs `(x, x')`, including `x = x'`.
    pub neighbor_pairs: usize,
    /// Largest `log(Pr[j | x] / Pr[j | x'])` over pairs, exclusion sets and `j`.
    pub worst_log_ratio: f64,
}

impl PrivacyAudit {
    /// Slack allowed for float rounding in the log-ratio.
    pub const ROUNDING_SLACK: f64 = 1e-12;

    pub fn passed(&self) -> bool {
        self.worst_log_ratio <= self.epsilon + Self::ROUNDING_SLACK
    }
}

/// Largest `n·d` for which [`exponential_mechanism_audit`] enumerates datasets.
pub const MAX_AUDIT_BITS: usize = 12;

/// Checks `Pr[j | x] ≤ e^ε·Pr[j | x']` for the exponential mechanism on every
/// pair of neighboring `n × d` datasets, every proper exclusion set and every
/// output, from the exact selection probabilities.
pub fn exponential_mechanism_audit(n: usize, d: usize, epsilon: f64) -> Result<PrivacyAudit> {
    let bits = n * d;
    if n == 0 || d == 0 || bits > MAX_AUDIT_BITS {
        return Err(Error::EnumerationTooLarge {
            n: bits,
            max: MAX_AUDIT_BITS,
        });
    }
    let datasets = 1usize << bits;
    let row_mask = (1usize << d) - 1;
    let means: Vec<ColumnMeans> = (0..datasets)
        .map(|code| Ok(Dataset::from_fn(n, d, |i, j| code >> (i * d + j) & 1 == 1)?.column_means()))
        .collect::<Result<_>>()?;
    let masks: Vec<Vec<bool>> = (0..row_mask)
        .map(|m| (0..d).map(|j| m >> j & 1 == 1).collect())
        .collect();
    let probs: Vec<Vec<Vec<f64>>> = means
        .iter()
        .map(|m| masks.iter().map(|mask| exp_mech_probabilities(m, epsilon, mask)).collect())
        .collect::<Result<_>>()?;
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    for a in 0..datasets {
        for b in 0..datasets {
            let differing = (0..n).filter(|i| (a >> (i * d)) & row_mask != (b >> (i * d)) & row_mask).count();
            if differing > 1 {
                continue;
            }
            pairs += 1;
            for (pa, pb) in probs[a].iter().zip(&probs[b]) {
                for (&x, &y) in pa.iter().zip(pb) {
                    if x > 0.0 {
                        worst = worst.max((x / y).ln());
                    }
                }
            }
        }
    }
    Ok(PrivacyAudit {
        epsilon,
        neighbor_pairs: pairs,
        worst_log_ratio: worst,
    })
}

/// One exponential-mechanism draw via Gumbel-max: the argmax of
/// `ε·n·X̄^j/2 + G_j` over non-excluded `j` has exactly the softmax law.
pub fn exp_mech_select_one<R: Rng + ?Sized>(
    means: &ColumnMeans,
    epsilon: f64,
    excluded: &[bool],
    rng: &mut R,
) -> Result<usize> {
    check_epsilon(epsilon)?;
    check_exclusions(means.d(), excluded)?;
    let scale = epsilon * means.n() as f64 / 2.0;
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (j, (&m, &ex)) in means.values().iter().zip(excluded).enumerate() {
        if ex {
            continue;
        }
        let key = scale * m + gumbel(rng);
        if key > best.0 || best.1 == usize::MAX {
            best = (key, j);
        }
    }
    Ok(best.1)
}

/// Top-k by `k` rounds of the exponential mechanism, each removing the
/// selected column, at the budget's per-round epsilon.
pub fn peeling_topk<R: Rng + ?Sized>(
    means: &ColumnMeans,
    k: usize,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<SelectionOutput> {
    let d = means.d();
    check_k(k, d)?;
    if budget.rounds() != k {
        return Err(Error::Precondition(format!(
            "budget is split over {} rounds but peeling runs k = {k}",
            budget.rounds()
        )));
    }
    if budget.delta() == 0.0 {
        return Err(Error::Precondition(
            "peeling needs delta > 0 for its composition split; use a pure-epsilon mechanism for delta = 0".into(),
        ));
    }
    let mut excluded = vec![false; d];
    for _ in 0..k {
        let j = exp_mech_select_one(means, budget.per_round_epsilon(), &excluded, rng)?;
        excluded[j] = true;
    }
    let scores = excluded.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
    SelectionOutput::from_scores(scores)
}

/// Indicator of the `k` largest of `values + Laplace(scale)`.
pub fn noisy_top_k<R: Rng + ?Sized>(values: &[f64], k: usize, scale: f64, rng: &mut R) -> Result<SelectionOutput> {
    check_k(k, values.len())?;
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(domain("noise scale", scale, "scale >= 0"));
    }
    let noisy: Vec<f64> = values.iter().map(|&v| v + laplace(scale, rng)).collect();
    SelectionOutput::indicator(values.len(), &top_k_set(&noisy, k)?)
}

/// Report-noisy-max top-k: Laplace noise of scale `2k/(ε·n)` on every column
/// mean, then the indicator of the `k` noisy-largest.
pub fn report_noisy_max_topk<R: Rng + ?Sized>(
    means: &ColumnMeans,
    k: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<SelectionOutput> {
    check_epsilon(epsilon)?;
    let scale = 2.0 * k as f64 / (epsilon * means.n() as f64);
    noisy_top_k(means.values(), k, scale, rng)
}

/// Sparse vector scan with `ε₀ = ε/(2·k_bound)`: threshold noise of scale
/// `2/(ε₀·n)`, query noise of scale `4/(ε₀·n)`, fresh threshold noise after
/// every report, and no further reports once `k_bound` have been made.
pub fn svt_threshold_select<R: Rng + ?Sized>(
    means: &ColumnMeans,
    spec: &HypothesisTestSpec,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<SelectionOutput> {
    if budget.rounds() != spec.k_bound {
        return Err(Error::Precondition(format!(
            "budget is sized for {} reports but k_bound = {}",
            budget.rounds(),
            spec.k_bound
        )));
    }
    let eps0 = budget.epsilon() / (2.0 * spec.k_bound as f64);
    let n = means.n() as f64;
    svt_with_noise_scales(means.values(), spec, 2.0 / (eps0 * n), 4.0 / (eps0 * n), rng)
}

/// The sparse vector scan with explicit noise scales.
pub fn svt_with_noise_scales<R: Rng + ?Sized>(
    values: &[f64],
    spec: &HypothesisTestSpec,
    threshold_scale: f64,
    query_scale: f64,
    rng: &mut R,
) -> Result<SelectionOutput> {
    if values.is_empty() {
        return Err(Error::Precondition("need d >= 1 columns".into()));
    }
    for (name, s) in [("threshold noise scale", threshold_scale), ("query noise scale", query_scale)] {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(domain(name, s, "scale >= 0"));
        }
    }
    let threshold = spec.threshold();
    let mut noisy_threshold = threshold + laplace(threshold_scale, rng);
    let mut scores = vec![0.0; values.len()];
    let mut reports = 0;
    for (j, &v) in values.iter().enumerate() {
        if reports == spec.k_bound {
            break;
        }
        if v + laplace(query_scale, rng) >= noisy_threshold {
            scores[j] = 1.0;
            reports += 1;
            noisy_threshold = threshold + laplace(threshold_scale, rng);
        }
    }
    SelectionOutput::from_scores(scores)
}

/// Standard deviation of the Gaussian mean release:
/// `√(2·log(1.25/δ))·(√d/n)/ε`.
pub fn gaussian_sigma(d: usize, n: usize, epsilon: f64, delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt() * ((d as f64).sqrt() / n as f64) / epsilon
}

/// Output of the Gaussian mean release before and after clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRelease {
    pub sigma: f64,
    /// `X̄ + N(0, σ²)` per coordinate.
    pub noisy: Vec<f64>,
    /// `noisy` clamped to `[0, 1]`; this is the released vector.
    pub clamped: Vec<f64>,
}

pub fn gaussian_mean_release<R: Rng + ?Sized>(
    means: &ColumnMeans,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<GaussianRelease> {
    check_epsilon(epsilon)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain("delta", delta, "delta in (0, 1) for the Gaussian mechanism"));
    }
    let sigma = gaussian_sigma(means.d(), means.n(), epsilon, delta);
    let noisy: Vec<f64> = means
        .values()
        .iter()
        .map(|&m| m + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let clamped = noisy.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(GaussianRelease { sigma, noisy, clamped })
}

/// The data-independent baseline: the first `k` columns.
pub fn trivial_first_k(d: usize, k: usize) -> Result<SelectionOutput> {
    check_k(k, d)?;
    SelectionOutput::indicator(d, &(0..k).collect::<Vec<_>>())
}

/// The exact empirical top-k (no privacy).
pub fn nonprivate_topk(means: &ColumnMeans, k: usize) -> Result<SelectionOutput> {
    SelectionOutput::indicator(means.d(), &top_k_set(means.values(), k)?)
}

/// Mechanisms addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Peeling,
    ReportNoisyMax,
    SparseVector,
    GaussianMean,
    FirstK,
    NonPrivate,
}

impl Mechanism {
    pub const ALL: [Mechanism; 6] = [
        Mechanism::Peeling,
        Mechanism::ReportNoisyMax,
        Mechanism::SparseVector,
        Mechanism::GaussianMean,
        Mechanism::FirstK,
        Mechanism::NonPrivate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Peeling => "peeling",
            Self::ReportNoisyMax => "rnm",
            Self::SparseVector => "svt",
            Self::GaussianMean => "gauss-mean",
            Self::FirstK => "first-k",
            Self::NonPrivate => "nonprivate",
        }
    }

    /// Whether the output is always an indicator with exactly `k` ones.
    pub fn is_top_k(&self) -> bool {
        matches!(
            self,
            Self::Peeling | Self::ReportNoisyMax | Self::FirstK | Self::NonPrivate
        )
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMechanism(s.to_string()))
    }
}

/// A mechanism together with the parameters needed to run it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismSpec {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub delta: f64,
    /// Thresholds for the sparse vector scan; defaults to the lower-bound
    /// regime with `k_bound = k`.
    pub hypothesis: Option<HypothesisTestSpec>,
}

impl MechanismSpec {
    pub fn new(mechanism: Mechanism, epsilon: f64, delta: f64) -> Self {
        Self {
            mechanism,
            epsilon,
            delta,
            hypothesis: None,
        }
    }

    pub fn with_hypothesis(mut self, spec: HypothesisTestSpec) -> Self {
        self.hypothesis = Some(spec);
        self
    }

    pub fn hypothesis_spec(&self, k: usize) -> Result<HypothesisTestSpec> {
        match self.hypothesis {
            Some(s) => Ok(s),
            None => HypothesisTestSpec::lower_bound_regime(k),
        }
    }

    /// The `(ε, δ)` guarantee of the configured mechanism, or `None` when it
    /// has none.
    pub fn privacy(&self) -> Option<(f64, f64)> {
        match self.mechanism {
            Mechanism::Peeling | Mechanism::GaussianMean => Some((self.epsilon, self.delta)),
            Mechanism::ReportNoisyMax | Mechanism::SparseVector => Some((self.epsilon, 0.0)),
            Mechanism::FirstK => Some((0.0, 0.0)),
            Mechanism::NonPrivate => None,
        }
    }

    /// Almost-sure bound on `‖M(X)‖₁` in dimension `d`.
    pub fn l1_cap(&self, d: usize, k: usize) -> Result<f64> {
        Ok(match self.mechanism {
            Mechanism::SparseVector => self.hypothesis_spec(k)?.k_bound.min(d) as f64,
            Mechanism::GaussianMean => d as f64,
            _ => k as f64,
        })
    }

    pub fn run<R: Rng + ?Sized>(&self, means: &ColumnMeans, k: usize, rng: &mut R) -> Result<SelectionOutput> {
        match self.mechanism {
            Mechanism::Peeling => {
                let budget = PrivacyBudget::new(self.epsilon, self.delta, k)?;
                peeling_topk(means, k, &budget, rng)
            }
            Mechanism::ReportNoisyMax => report_noisy_max_topk(means, k, self.epsilon, rng),
            Mechanism::SparseVector => {
                let spec = self.hypothesis_spec(k)?;
                let budget = PrivacyBudget::pure(self.epsilon, spec.k_bound)?;
                svt_threshold_select(means, &spec, &budget, rng)
            }
            Mechanism::GaussianMean => {
                let release = gaussian_mean_release(means, self.epsilon, self.delta, rng)?;
                SelectionOutput::from_scores(release.clamped)
            }
            Mechanism::FirstK => trivial_first_k(means.d(), k),
            Mechanism::NonPrivate => nonprivate_topk(means, k),
        }
    }
}
