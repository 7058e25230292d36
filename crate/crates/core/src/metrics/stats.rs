//! Rank-based tests with large-sample p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use super::Scalar;

/// Below this size the normal / chi-square p-value is flagged as rough.
pub const SMALL_SAMPLE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult<T> {
    pub statistic: T,
    pub n: Vec<usize>,
    pub p_value: Option<f64>,
    /// Set when a sample is too small for the asymptotic p-value to be trusted.
    pub approximate: bool,
    /// Inputs carry no rank information (all ties or all-zero differences).
    pub degenerate: bool,
}

impl<T> StatResult<T> {
    fn degenerate(statistic: T, n: Vec<usize>) -> Self {
        Self { statistic, n, p_value: None, approximate: true, degenerate: true }
    }
}

fn cast<T: Scalar>(x: usize) -> T {
    T::from_usize(x).expect("count fits in scalar")
}

fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Average 1-based ranks plus `Σ (t³ - t)` over tie groups.
pub fn average_ranks<T: Scalar>(values: &[T]) -> (Vec<T>, T) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("no NaN in sample"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut ties = T::zero();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end share their average.
        let avg = cast::<T>(start + 1 + end) / cast(2);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        let t: T = cast(end - start);
        ties = ties + t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

fn two_sided_normal(z: f64) -> f64 {
    let normal = Normal::standard();
    (2.0 * normal.sf(z.abs())).min(1.0)
}

/// U for sample `a`: pairs with `a > b` plus half the ties.
pub fn mann_whitney_u<T: Scalar>(a: &[T], b: &[T]) -> Result<StatResult<T>, StatError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatError::EmptySample);
    }
    let (n, m) = (a.len(), b.len());
    let pooled: Vec<T> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = average_ranks(&pooled);
    let rank_sum_a = ranks[..n].iter().copied().fold(T::zero(), |s, r| s + r);
    let u = rank_sum_a - cast::<T>(n * (n + 1)) / cast(2);

    let (nf, mf) = (n as f64, m as f64);
    let total = nf + mf;
    let mu = nf * mf / 2.0;
    let var = nf * mf / 12.0 * ((total + 1.0) - to_f64(ties) / (total * (total - 1.0)));
    let degenerate = !(var > 0.0);
    let p_value = (!degenerate).then(|| {
        let diff = to_f64(u) - mu;
        let corrected = (diff.abs() - 0.5).max(0.0).copysign(diff);
        two_sided_normal(corrected / var.sqrt())
    });
    Ok(StatResult { statistic: u, n: vec![n, m], p_value, approximate: n.min(m) < SMALL_SAMPLE, degenerate })
}

/// W = min(W+, W-) over nonzero differences; zeros are dropped.
pub fn wilcoxon_signed_rank<T: Scalar>(diffs: &[T]) -> Result<StatResult<T>, StatError> {
    if diffs.is_empty() {
        return Err(StatError::EmptySample);
    }
    let nonzero: Vec<T> = diffs.iter().copied().filter(|d| *d != T::zero()).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(StatResult::degenerate(T::zero(), vec![0]));
    }
    let magnitudes: Vec<T> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&magnitudes);
    let (mut plus, mut minus) = (T::zero(), T::zero());
    for (d, r) in nonzero.iter().zip(&ranks) {
        if *d > T::zero() {
            plus = plus + *r;
        } else {
            minus = minus + *r;
        }
    }
    let w = plus.min(minus);

    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - to_f64(ties) / 48.0;
    let p_value = (var > 0.0).then(|| {
        let diff = to_f64(w) - mu;
        let corrected = (diff.abs() - 0.5).max(0.0).copysign(diff);
        two_sided_normal(corrected / var.sqrt())
    });
    Ok(StatResult { statistic: w, n: vec![n], p_value, approximate: n < SMALL_SAMPLE, degenerate: false })
}

/// H with tie correction; all-identical inputs give a degenerate H = 0.
pub fn kruskal_wallis<T: Scalar>(groups: &[&[T]]) -> Result<StatResult<T>, StatError> {
    let nonempty: Vec<&[T]> = groups.iter().copied().filter(|g| !g.is_empty()).collect();
    if nonempty.len() < 2 {
        return Err(StatError::TooFew { needed: 2, got: nonempty.len() });
    }
    let sizes: Vec<usize> = nonempty.iter().map(|g| g.len()).collect();
    let pooled: Vec<T> = nonempty.iter().flat_map(|g| g.iter().copied()).collect();
    let total = pooled.len();
    let (ranks, ties) = average_ranks(&pooled);

    let nt: T = cast(total);
    let correction = T::one() - ties / (nt * nt * nt - nt);
    if correction <= T::zero() {
        return Ok(StatResult::degenerate(T::zero(), sizes));
    }
    let mut offset = 0;
    let mut between = T::zero();
    for &len in &sizes {
        let r = ranks[offset..offset + len].iter().copied().fold(T::zero(), |s, x| s + x);
        between = between + r * r / cast(len);
        offset += len;
    }
    let twelve: T = cast(12);
    let three: T = cast(3);
    let h = ((twelve / (nt * (nt + T::one())) * between - three * (nt + T::one())) / correction).max(T::zero());

    let df = (sizes.len() - 1) as f64;
    let p_value = ChiSquared::new(df).ok().map(|chi| chi.sf(to_f64(h)));
    let approximate = sizes.iter().any(|&s| s < 5);
    Ok(StatResult { statistic: h, n: sizes, p_value, approximate, degenerate: false })
}

/// Pearson correlation of average ranks.
pub fn spearman_rho<T: Scalar>(x: &[T], y: &[T]) -> Result<StatResult<T>, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatError::TooFew { needed: 2, got: n });
    }
    let (rx, _) = average_ranks(x);
    let (ry, _) = average_ranks(y);
    let nt: T = cast(n);
    let mean_x = rx.iter().copied().fold(T::zero(), |s, r| s + r) / nt;
    let mean_y = ry.iter().copied().fold(T::zero(), |s, r| s + r) / nt;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (*a - mean_x, *b - mean_y);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(StatResult::degenerate(T::zero(), vec![n]));
    }
    let rho = (sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one());
    let p_value = Some(two_sided_normal(to_f64(rho) * ((n - 1) as f64).sqrt()));
    Ok(StatResult { statistic: rho, n: vec![n], p_value, approximate: n < SMALL_SAMPLE, degenerate: false })
}
