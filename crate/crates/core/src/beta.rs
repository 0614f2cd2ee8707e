//! Beta distribution machinery: the beta function, density, distribution
//! function, moments, an exact sampler, and the anti-concentration
//! quantities the hard instance relies on.
//!
//! All logarithms are natural.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::stats::MeanEstimate;

/// Absolute tolerance used by every quadrature-based probability oracle.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

/// Parameters of `Beta(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(domain("alpha", alpha, "alpha > 0"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(domain("beta", beta, "beta > 0"));
        }
        Ok(Self { alpha, beta })
    }

    /// The symmetric prior `Beta(b, b)`.
    pub fn symmetric(b: f64) -> Result<Self> {
        Self::new(b, b)
    }

    /// The uniform distribution on `[0, 1]`.
    pub fn uniform() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_symmetric(&self) -> bool {
        self.alpha == self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn pdf(&self, p: f64) -> Result<f64> {
        beta_pdf(self, p)
    }

    pub fn cdf(&self, p: f64) -> Result<f64> {
        beta_cdf(self, p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        beta_sample(self, rng)
    }

    /// `E[P^a (1-P)^b]` for `P ~ Beta(alpha, beta)`, as `B(alpha+a, beta+b) / B(alpha, beta)`.
    ///
    /// Small integer exponents use the rising-factorial product, which is
    /// accurate to a few ulps.
    pub fn mixed_moment(&self, a: f64, b: f64) -> f64 {
        let small_int = |v: f64| v >= 0.0 && v.fract() == 0.0 && v <= 1024.0;
        if small_int(a) && small_int(b) {
            let total = self.alpha + self.beta;
            let mut m = 1.0;
            for i in 0..a as usize {
                m *= (self.alpha + i as f64) / (total + i as f64);
            }
            for j in 0..b as usize {
                m *= (self.beta + j as f64) / (total + a + j as f64);
            }
            return m;
        }
        (ln_beta(self.alpha + a, self.beta + b) - ln_beta(self.alpha, self.beta)).exp()
    }
}

/// `ln B(a, b)` without argument checks.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// The beta function `B(a, b) = ∫₀¹ p^{a-1} (1-p)^{b-1} dp`.
pub fn beta_function(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(domain("a", a, "a > 0"));
    }
    if !(b > 0.0) {
        return Err(domain("b", b, "b > 0"));
    }
    Ok(ln_beta(a, b).exp())
}

fn check_unit(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(domain("p", p, "p in [0, 1]"))
    }
}

/// Density of `params` at `p`. Returns `+inf` at an endpoint where the
/// density diverges.
pub fn beta_pdf(params: &BetaParams, p: f64) -> Result<f64> {
    check_unit(p)?;
    let (a, b) = (params.alpha, params.beta);
    let edge = |shape: f64, other: f64| {
        if shape < 1.0 {
            f64::INFINITY
        } else if shape > 1.0 {
            0.0
        } else {
            (-ln_beta(1.0, other)).exp()
        }
    };
    if p == 0.0 {
        return Ok(edge(a, b));
    }
    if p == 1.0 {
        return Ok(edge(b, a));
    }
    Ok(((a - 1.0) * p.ln() + (b - 1.0) * (-p).ln_1p() - ln_beta(a, b)).exp())
}

/// Distribution function of `params` at `p` (the regularized incomplete
/// beta function), evaluated by a modified Lentz continued fraction.
pub fn beta_cdf(params: &BetaParams, p: f64) -> Result<f64> {
    check_unit(p)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (a, b) = (params.alpha, params.beta);
    let front = (a * p.ln() + b * (-p).ln_1p() - ln_beta(a, b)).exp();
    let value = if p < (a + 1.0) / (a + b + 2.0) {
        front * continued_fraction(a, b, p) / a
    } else {
        1.0 - front * continued_fraction(b, a, 1.0 - p) / b
    };
    Ok(value.clamp(0.0, 1.0))
}

fn continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;

    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let step = d * c;
        h *= step;
        if (step - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `(mean, variance)` of `params`.
pub fn beta_moments(params: &BetaParams) -> (f64, f64) {
    (params.mean(), params.variance())
}

/// Gamma(shape, 1) variate: Marsaglia–Tsang squeeze/rejection for
/// `shape >= 1`, and the boost `Gamma(shape + 1) · U^{1/shape}` below that.
pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = 1.0 - rng.random::<f64>();
        return gamma_sample(shape + 1.0, rng) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = 1.0 - rng.random::<f64>();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One `Beta(alpha, beta)` draw as `G_a / (G_a + G_b)`.
pub fn beta_sample<R: Rng + ?Sized>(params: &BetaParams, rng: &mut R) -> f64 {
    loop {
        let x = gamma_sample(params.alpha, rng);
        let y = gamma_sample(params.beta, rng);
        let s = x + y;
        if s > 0.0 {
            return x / s;
        }
    }
}

/// Comparison of `Pr[P < p*]` under `Beta(β, β)` with its closed-form lower
/// bound `(4 p*(1-p*))^{β-1} p*/β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBoundReport {
    pub beta_sym: f64,
    pub p_star: f64,
    /// `Pr[P < p*]`, by adaptive quadrature of the density.
    pub true_probability: f64,
    pub bound_value: f64,
    /// The weaker form `p*·exp((log(4p*(1-p*)) - 1)(β-1))`.
    pub exponential_form: f64,
    pub quadrature_tolerance: f64,
    /// `true_probability >= bound_value - quadrature_tolerance`.
    pub satisfied: bool,
    /// `exponential_form <= bound_value` (up to rounding).
    pub exponential_form_below: bool,
}

pub fn tail_lower_bound(beta_sym: f64, p_star: f64) -> Result<TailBoundReport> {
    if !(beta_sym >= 1.0 && beta_sym.is_finite()) {
        return Err(domain("beta_sym", beta_sym, "beta_sym >= 1"));
    }
    if !(0.0..=0.5).contains(&p_star) {
        return Err(domain("p_star", p_star, "p_star in [0, 1/2]"));
    }
    let params = BetaParams::symmetric(beta_sym)?;
    let norm = beta_function(beta_sym, beta_sym)?;
    let density = |p: f64| (p * (1.0 - p)).powf(beta_sym - 1.0) / norm;
    let true_probability = adaptive_simpson(density, 0.0, p_star, QUADRATURE_TOLERANCE);
    debug_assert!(params.is_symmetric());

    let q = 4.0 * p_star * (1.0 - p_star);
    let bound_value = q.powf(beta_sym - 1.0) * p_star / beta_sym;
    let exponential_form = if p_star == 0.0 {
        0.0
    } else {
        p_star * ((q.ln() - 1.0) * (beta_sym - 1.0)).exp()
    };
    Ok(TailBoundReport {
        beta_sym,
        p_star,
        true_probability,
        bound_value,
        exponential_form,
        quadrature_tolerance: QUADRATURE_TOLERANCE,
        satisfied: true_probability >= bound_value - QUADRATURE_TOLERANCE,
        exponential_form_below: exponential_form <= bound_value * (1.0 + 1e-12),
    })
}

/// The symmetric prior parameter `1 + ½·log(d / (8·max{2k, 28}))` under which
/// the expected sum of the `k` largest of `d` draws is at least `3k/4`.
pub fn anticoncentration_beta_choice(d: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let floor = 8 * (2 * k).max(28);
    if d < floor {
        return Err(Error::Precondition(format!(
            "d = {d} is too small for k = {k}: need d >= 8*max(2k, 28) = {floor}"
        )));
    }
    Ok(1.0 + 0.5 * (d as f64 / floor as f64).ln())
}

/// The symmetric prior parameter `1 + ½·log(d / 16k)` used for the
/// multiple-hypothesis-testing instance; requires `d >= 16k >= 32`.
pub fn hypothesis_testing_beta_choice(d: usize, k: usize) -> Result<f64> {
    if k < 2 || d < 16 * k {
        return Err(Error::Precondition(format!(
            "need d >= 16k >= 32, got d = {d}, k = {k}"
        )));
    }
    Ok(1.0 + 0.5 * (d as f64 / (16 * k) as f64).ln())
}

/// Sum of the `k` largest entries of `values` (reorders `values`).
pub(crate) fn top_k_sum_in_place(values: &mut [f64], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k < values.len() {
        values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    values[..k].iter().sum()
}

/// Monte Carlo estimate of `E[max_{|s|=k} Σ_{j∈s} P^j]` for `d` i.i.d. draws
/// from `params`.
pub fn expected_topk_sum<R: Rng + ?Sized>(
    params: &BetaParams,
    d: usize,
    k: usize,
    trials: usize,
    rng: &mut R,
) -> Result<MeanEstimate> {
    if k == 0 || k > d {
        return Err(Error::Precondition(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    if trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    let mut draws = vec![0.0; d];
    let sums: Vec<f64> = (0..trials)
        .map(|_| {
            for v in draws.iter_mut() {
                *v = params.sample(rng);
            }
            top_k_sum_in_place(&mut draws, k)
        })
        .collect();
    Ok(MeanEstimate::from_samples(&sums))
}
