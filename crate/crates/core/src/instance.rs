//! The hard input distribution: column means `P^j ~ Beta(β, β)` i.i.d. and
//! entries `X_i^j ~ Bernoulli(P^j)` independently given `P`.
//!
//! Rows are individuals, columns are items. Datasets are stored bit-packed
//! by column because mechanisms and the attack statistic consume column sums.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rand_distr::Binomial;

use crate::beta::{top_k_sum_in_place, BetaParams};
use crate::error::{domain, Error, Result};
use crate::stats::MeanEstimate;

/// Column means of the population together with the prior they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    means: Vec<f64>,
    prior: BetaParams,
}

impl Population {
    pub fn new(means: Vec<f64>, prior: BetaParams) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Precondition("a population needs d >= 1 columns".into()));
        }
        if let Some(&bad) = means.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(domain("population mean", bad, "mean in [0, 1]"));
        }
        Ok(Self { means, prior })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn prior(&self) -> &BetaParams {
        &self.prior
    }

    pub fn d(&self) -> usize {
        self.means.len()
    }
}

/// `d` independent draws from `prior`.
pub fn sample_population<R: Rng + ?Sized>(d: usize, prior: BetaParams, rng: &mut R) -> Result<Population> {
    if d == 0 {
        return Err(Error::Precondition("d must be at least 1".into()));
    }
    let means = (0..d).map(|_| prior.sample(rng)).collect();
    Population::new(means, prior)
}

/// An `n × d` binary matrix, bit-packed column-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Dataset {
    n: usize,
    d: usize,
    words_per_column: usize,
    bits: Vec<u64>,
}

impl fmt::Debug for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dataset").field("n", &self.n).field("d", &self.d).finish()
    }
}

impl Dataset {
    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Precondition(format!(
                "a dataset needs n >= 1 and d >= 1, got {n} x {d}"
            )));
        }
        let words_per_column = n.div_ceil(64);
        Ok(Self {
            n,
            d,
            words_per_column,
            bits: vec![0; words_per_column * d],
        })
    }

    pub fn from_fn(n: usize, d: usize, mut bit: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut x = Self::zeros(n, d)?;
        for j in 0..d {
            for i in 0..n {
                if bit(i, j) {
                    x.set(i, j, true);
                }
            }
        }
        Ok(x)
    }

    /// Builds a dataset from rows of 0/1 entries.
    pub fn from_rows<T: AsRef<[u8]>>(rows: &[T]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "row length",
                    expected: d,
                    got: r.len(),
                });
            }
            if let Some(&v) = r.iter().find(|&&v| v > 1) {
                return Err(Error::Precondition(format!("row {i} contains non-binary entry {v}")));
            }
        }
        Self::from_fn(n, d, |i, j| rows[i].as_ref()[j] == 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn column_words(&self, j: usize) -> &[u64] {
        &self.bits[j * self.words_per_column..(j + 1) * self.words_per_column]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.n && j < self.d, "({i}, {j}) outside {} x {}", self.n, self.d);
        self.column_words(j)[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize, j: usize, value: bool) {
        let w = &mut self.bits[j * self.words_per_column + i / 64];
        let mask = 1u64 << (i % 64);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    /// Row `i` as 0/1 bytes.
    pub fn row(&self, i: usize) -> Result<Vec<u8>> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                what: "rows",
                index: i,
                len: self.n,
            });
        }
        Ok((0..self.d).map(|j| u8::from(self.get(i, j))).collect())
    }

    pub fn column_count(&self, j: usize) -> u64 {
        self.column_words(j).iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn column_counts(&self) -> Vec<u64> {
        (0..self.d).map(|j| self.column_count(j)).collect()
    }

    /// `X̄ = (1/n) Σ_i X_i`.
    pub fn column_means(&self) -> ColumnMeans {
        ColumnMeans::from_counts(self.column_counts(), self.n).expect("counts bounded by n")
    }

    /// Indices of rows on which `self` and `other` differ.
    pub fn differing_rows(&self, other: &Dataset) -> Result<Vec<usize>> {
        if self.n != other.n || self.d != other.d {
            return Err(Error::DimensionMismatch {
                what: "dataset shape (n*d)",
                expected: self.n * self.d,
                got: other.n * other.d,
            });
        }
        let mut rows = Vec::new();
        for j in 0..self.d {
            for (w, (a, b)) in self.column_words(j).iter().zip(other.column_words(j)).enumerate() {
                let mut diff = a ^ b;
                while diff != 0 {
                    rows.push(w * 64 + diff.trailing_zeros() as usize);
                    diff &= diff - 1;
                }
            }
        }
        rows.sort_unstable();
        rows.dedup();
        Ok(rows)
    }

    /// Neighboring datasets differ on at most one row.
    pub fn is_neighbor(&self, other: &Dataset) -> bool {
        self.differing_rows(other).is_ok_and(|r| r.len() <= 1)
    }
}

/// Draws `n` rows, each entry independently `Bernoulli(P^j)`.
pub fn sample_dataset<R: Rng + ?Sized>(pop: &Population, n: usize, rng: &mut R) -> Result<Dataset> {
    let mut x = Dataset::zeros(n, pop.d())?;
    for (j, &p) in pop.means().iter().enumerate() {
        let coin = Bernoulli::new(p).map_err(|_| domain("population mean", p, "mean in [0, 1]"))?;
        let words = &mut x.bits[j * x.words_per_column..(j + 1) * x.words_per_column];
        for i in 0..n {
            if coin.sample(rng) {
                words[i / 64] |= 1u64 << (i % 64);
            }
        }
    }
    Ok(x)
}

/// Copy of `x` with row `i` replaced by a fresh draw from `pop`.
pub fn resample_row<R: Rng + ?Sized>(x: &Dataset, i: usize, pop: &Population, rng: &mut R) -> Result<Dataset> {
    if i >= x.n {
        return Err(Error::IndexOutOfRange {
            what: "rows",
            index: i,
            len: x.n,
        });
    }
    if pop.d() != x.d {
        return Err(Error::DimensionMismatch {
            what: "population columns",
            expected: x.d,
            got: pop.d(),
        });
    }
    let mut out = x.clone();
    for (j, &p) in pop.means().iter().enumerate() {
        let bit = rng.random_bool(p);
        out.set(i, j, bit);
    }
    Ok(out)
}

/// One fresh individual drawn from `pop`, as 0/1 bytes.
pub fn sample_row<R: Rng + ?Sized>(pop: &Population, rng: &mut R) -> Vec<u8> {
    pop.means().iter().map(|&p| u8::from(rng.random_bool(p))).collect()
}

/// Empirical column means `X̄^j = count_j / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeans {
    n: usize,
    counts: Vec<u64>,
    values: Vec<f64>,
}

impl ColumnMeans {
    pub fn from_counts(counts: Vec<u64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("n must be at least 1".into()));
        }
        if counts.is_empty() {
            return Err(Error::Precondition("d must be at least 1".into()));
        }
        if let Some(&c) = counts.iter().find(|&&c| c as usize > n) {
            return Err(Error::Precondition(format!("column count {c} exceeds n = {n}")));
        }
        let values = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Self { n, counts, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.values.len()
    }
}

/// Column means of a dataset drawn from `pop` without materializing it: each
/// column count is `Binomial(n, P^j)`, the exact law of a column sum.
pub fn sample_column_means<R: Rng + ?Sized>(pop: &Population, n: usize, rng: &mut R) -> Result<ColumnMeans> {
    let counts = pop
        .means()
        .iter()
        .map(|&p| {
            Binomial::new(n as u64, p)
                .map(|b| b.sample(rng))
                .map_err(|_| domain("population mean", p, "mean in [0, 1]"))
        })
        .collect::<Result<Vec<u64>>>()?;
    ColumnMeans::from_counts(counts, n)
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::Precondition(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    Ok(())
}

/// Indices of the `k` largest entries, ties broken toward the smaller index,
/// returned in increasing index order.
pub fn top_k_set(values: &[f64], k: usize) -> Result<Vec<usize>> {
    check_k(k, values.len())?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    let by_rank = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_rank);
    }
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// `max_{|s|=k} Σ_{j∈s} values^j`.
pub fn top_k_sum(values: &[f64], k: usize) -> Result<f64> {
    check_k(k, values.len())?;
    let mut scratch = values.to_vec();
    Ok(top_k_sum_in_place(&mut scratch, k))
}

/// Shortfall of the selected set against the best size-`k` set under
/// `reference` (population means or empirical means).
pub fn selection_error(selected: &[usize], reference: &[f64], k: usize) -> Result<f64> {
    check_k(k, reference.len())?;
    if selected.len() != k {
        return Err(Error::InvalidSelection(format!(
            "selection has {} items, expected k = {k}",
            selected.len()
        )));
    }
    let mut seen = vec![false; reference.len()];
    for &j in selected {
        if j >= reference.len() {
            return Err(Error::IndexOutOfRange {
                what: "reference",
                index: j,
                len: reference.len(),
            });
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidSelection(format!("index {j} selected twice")));
        }
    }
    // both sums run in decreasing value order, so equal multisets cancel exactly
    let sorted_sum = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| b.total_cmp(a));
        v.iter().sum()
    };
    let best = sorted_sum(top_k_set(reference, k)?.iter().map(|&j| reference[j]).collect());
    let got = sorted_sum(selected.iter().map(|&j| reference[j]).collect());
    Ok((best - got).max(0.0))
}

/// Which means accuracy is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccuracyReference {
    /// The population means `P`.
    #[default]
    Population,
    /// The empirical means `X̄`.
    Empirical,
}

impl AccuracyReference {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Population => "population",
            Self::Empirical => "empirical",
        }
    }
}

impl fmt::Display for AccuracyReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AccuracyReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "population" => Ok(Self::Population),
            "empirical" => Ok(Self::Empirical),
            other => Err(Error::Precondition(format!(
                "unknown accuracy reference `{other}` (expected population|empirical)"
            ))),
        }
    }
}

/// One row of [`conjugacy_check`]: the Monte Carlo estimate of
/// `E[P | Σ_i X_i = s]` next to the conjugate posterior mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorMeanRow {
    pub s: usize,
    pub estimate: MeanEstimate,
    /// `(β + s) / (2β + n)`.
    pub expected: f64,
}

/// Draws `(P, X_1..X_n)` jointly with `P ~ Beta(β, β)` and `X_i ~
/// Bernoulli(P)`, groups `P` by `s = Σ_i X_i`, and compares each group mean
/// with `(β + s)/(2β + n)`.
pub fn conjugacy_check<R: Rng + ?Sized>(
    n: usize,
    beta_sym: f64,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<PosteriorMeanRow>> {
    let prior = BetaParams::symmetric(beta_sym)?;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    for _ in 0..draws {
        let p = prior.sample(rng);
        let s = (0..n).filter(|_| rng.random::<f64>() < p).count();
        groups[s].push(p);
    }
    Ok(groups
        .iter()
        .enumerate()
        .map(|(s, g)| PosteriorMeanRow {
            s,
            estimate: MeanEstimate::from_samples(g),
            expected: (beta_sym + s as f64) / (2.0 * beta_sym + n as f64),
        })
        .collect())
}
