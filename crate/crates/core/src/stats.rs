//! Monte Carlo summaries with compensated summation.

/// Neumaier (improved Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<NeumaierSum>().total()
}

/// Width multiplier for every confidence interval reported by this crate.
pub const CI_SIGMAS: f64 = 3.0;

/// Sample mean with a normal-approximation confidence half-width of
/// `CI_SIGMAS` standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
    pub ci_halfwidth: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std_dev: f64::NAN,
                std_err: f64::NAN,
                ci_halfwidth: f64::NAN,
                count,
            };
        }
        let mean = compensated_sum(values) / count as f64;
        let var = if count > 1 {
            values
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .collect::<NeumaierSum>()
                .total()
                / (count - 1) as f64
        } else {
            0.0
        };
        let std_dev = var.sqrt();
        let std_err = std_dev / (count as f64).sqrt();
        Self {
            mean,
            std_dev,
            std_err,
            ci_halfwidth: CI_SIGMAS * std_err,
            count,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci_halfwidth
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_halfwidth
    }

    /// Whether `value` lies inside the confidence interval.
    pub fn covers(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.ci_halfwidth
    }
}

/// Asymptotic Kolmogorov–Smirnov coefficient at significance `1e-3`.
pub const KS_COEFFICIENT_1E3: f64 = 1.9495;

/// `sup_x |F_n(x) - F(x)|` for samples sorted in increasing order.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |dmax: f64, (i, &x)| {
        let c = cdf(x);
        dmax.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n)
    })
}

/// Rejection threshold for [`ks_statistic`] at significance `1e-3`.
pub fn ks_critical_value(n: usize) -> f64 {
    KS_COEFFICIENT_1E3 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16, 1.0, -1e16];
        v.extend(std::iter::repeat(1.0).take(10));
        assert_eq!(compensated_sum(&v), 11.0);
    }

    #[test]
    fn mean_estimate_basic() {
        let e = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((e.ci_halfwidth - 3.0 * e.std_dev / 2.0).abs() < 1e-15);
        assert!(e.covers(2.0));
    }

    #[test]
    fn ks_of_a_perfect_grid() {
        // midpoints of n equal cells sit 1/(2n) from the uniform cdf
        let n = 100;
        let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!((ks_statistic(&grid, |x| x) - 0.5 / n as f64).abs() < 1e-15);
        assert!((ks_critical_value(10_000) - 0.019495).abs() < 1e-12);
    }
}
