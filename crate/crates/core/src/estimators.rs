//! Robust location, scale and skewness estimators.
//!
//! All estimators operate on a [`Sample`] of finite reported energy levels
//! and are pure functions of it. Scale constants are used exactly as
//! printed (`1.192` for Sn, `2.2` for Qn) with no finite-sample correction.
//!
//! Medians of even-length lists average the two central order statistics.
//! Quartiles interpolate linearly between order statistics at the 1-based
//! position `1 + p(n - 1)`.

use crate::error::{Error, Result};

/// Scale constant applied to the median of inner medians in Sn.
pub const SN_CONSTANT: f64 = 1.192;
/// Scale constant applied to the first quartile of pairwise distances in Qn.
pub const QN_CONSTANT: f64 = 2.2;
/// Makes `1.4826 * MAD` consistent for the Gaussian standard deviation.
pub const MAD_CONSISTENCY: f64 = 1.4826;
/// Makes `(sqrt(pi) / 2) * MD` consistent for the Gaussian standard deviation.
pub const MD_CONSISTENCY: f64 = 0.886_226_925_452_758;

/// An ordered collection of finite real values observed at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample(Vec<f64>);

impl Sample {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "sample value at index {pos} is not finite"
            )));
        }
        Ok(Sample(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.0.clone();
        v.sort_unstable_by(f64::total_cmp);
        v
    }

    fn require_len(&self, min: usize, what: &str) -> Result<()> {
        if self.0.len() < min {
            return Err(Error::invalid(format!(
                "{what} needs at least {min} values, got {}",
                self.0.len()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Sample::new(values)
    }
}

/// Adjusted-boxplot fences built on the medcouple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedcoupleFences {
    pub mc: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub h_l: f64,
    pub h_r: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

impl MedcoupleFences {
    /// Applies the exponential skew model to already-computed quartiles
    /// and medcouple.
    pub fn from_parts(mc: f64, q1: f64, q3: f64) -> Self {
        let iqr = q3 - q1;
        let h_l = lower_fence_factor(mc);
        let h_r = upper_fence_factor(mc);
        MedcoupleFences {
            mc,
            q1,
            q3,
            iqr,
            h_l,
            h_r,
            lower_fence: q1 - h_l * iqr,
            upper_fence: q3 + h_r * iqr,
        }
    }
}

/// `1.5 * exp(-3.5 * mc)`
pub fn lower_fence_factor(mc: f64) -> f64 {
    1.5 * (-3.5 * mc).exp()
}

/// `1.5 * exp(4 * mc)`
pub fn upper_fence_factor(mc: f64) -> f64 {
    1.5 * (4.0 * mc).exp()
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Linear interpolation between two adjacent order statistics.
#[inline]
fn lerp(lo: f64, hi: f64, frac: f64) -> f64 {
    lo + frac * (hi - lo)
}

/// Splits the 0-based interpolation position `p(len - 1)` into an index
/// and fractional part.
fn quantile_position(len: usize, p: f64) -> (usize, f64) {
    let h = p * (len - 1) as f64;
    let idx = h.floor() as usize;
    (idx, h - idx as f64)
}

fn quantile_of_sorted(sorted: &[f64], p: f64) -> f64 {
    let (idx, frac) = quantile_position(sorted.len(), p);
    if frac == 0.0 || idx + 1 >= sorted.len() {
        sorted[idx]
    } else {
        lerp(sorted[idx], sorted[idx + 1], frac)
    }
}

/// Arithmetic mean, accumulated as compensated deviations from the first
/// value so that constant samples return that constant exactly.
pub fn mean(sample: &Sample) -> Result<f64> {
    sample.require_len(1, "mean")?;
    let v = sample.values();
    let anchor = v[0];
    let mut acc = CompensatedSum::default();
    for &x in v {
        acc.add(x - anchor);
    }
    Ok(anchor + acc.value() / v.len() as f64)
}

pub fn median(sample: &Sample) -> Result<f64> {
    sample.require_len(1, "median")?;
    Ok(median_of_sorted(&sample.sorted()))
}

/// Neumaier-compensated accumulator that also captures the rounding error
/// of each product it is fed.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let err = a.mul_add(b, -p);
        self.add(p);
        self.add(err);
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Gini mean difference over all `N^2` ordered pairs, diagonal included.
///
/// Evaluated in `O(n log n)` through the gaps between consecutive order
/// statistics: the gap `x(k+1) - x(k)` lies between `2 (k+1)(n-1-k)` ordered
/// pairs. Every term is non-negative, so the compensated sum does not
/// suffer cancellation.
pub fn mean_difference(sample: &Sample) -> Result<f64> {
    sample.require_len(1, "mean difference")?;
    let sorted = sample.sorted();
    let n = sorted.len();
    let mut acc = CompensatedSum::default();
    for (k, pair) in sorted.windows(2).enumerate() {
        let gap = pair[1] - pair[0];
        let weight = 2.0 * ((k + 1) as f64) * ((n - 1 - k) as f64);
        acc.add_product(gap, weight);
    }
    let nf = n as f64;
    Ok(acc.value() / (nf * nf))
}

/// Median absolute deviation from the median (unscaled).
pub fn mad(sample: &Sample) -> Result<f64> {
    sample.require_len(1, "MAD")?;
    let sorted = sample.sorted();
    let center = median_of_sorted(&sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|x| (x - center).abs()).collect();
    dev.sort_unstable_by(f64::total_cmp);
    Ok(median_of_sorted(&dev))
}

/// k-th smallest (0-based) element of the union of two ascending sequences
/// given by accessors.
fn kth_of_two<A, B>(a_len: usize, a: A, b_len: usize, b: B, k: usize) -> f64
where
    A: Fn(usize) -> f64,
    B: Fn(usize) -> f64,
{
    debug_assert!(k < a_len + b_len);
    let take = k + 1;
    let mut lo = take.saturating_sub(b_len);
    let mut hi = take.min(a_len);
    while lo < hi {
        let i = lo + (hi - lo) / 2;
        let j = take - i;
        if a(i) < b(j - 1) {
            lo = i + 1;
        } else {
            hi = i;
        }
    }
    let i = lo;
    let j = take - i;
    match (i, j) {
        (0, _) => b(j - 1),
        (_, 0) => a(i - 1),
        _ => a(i - 1).max(b(j - 1)),
    }
}

/// `1.192 * med_i med_{j != i} |x_i - x_j|` with plain medians.
///
/// For sorted data the distances from `x(i)` to its left and right
/// neighbours form two ascending runs, so each inner median is a
/// selection over two sorted sequences.
pub fn sn_estimator(sample: &Sample) -> Result<f64> {
    sample.require_len(2, "Sn")?;
    let s = sample.sorted();
    let n = s.len();
    let others = n - 1;
    let inner: Vec<f64> = (0..n)
        .map(|i| {
            let left = |t: usize| s[i] - s[i - 1 - t];
            let right = |t: usize| s[i + 1 + t] - s[i];
            let kth = |k| kth_of_two(i, left, n - 1 - i, right, k);
            if others % 2 == 1 {
                kth(others / 2)
            } else {
                (kth(others / 2 - 1) + kth(others / 2)) / 2.0
            }
        })
        .collect();
    let mut inner = inner;
    inner.sort_unstable_by(f64::total_cmp);
    Ok(SN_CONSTANT * median_of_sorted(&inner))
}

/// Number of pairs `i < j` with `s[j] - s[i] <= bound`, for ascending `s`.
fn count_pairs_within(s: &[f64], bound: f64) -> usize {
    let mut i = 0;
    let mut count = 0;
    for j in 0..s.len() {
        while i < j && s[j] - s[i] > bound {
            i += 1;
        }
        count += j - i;
    }
    count
}

/// k-th smallest (0-based) pairwise distance of ascending `s`, without
/// materialising all `n(n-1)/2` distances.
///
/// Bisects on the distance value until few candidates remain in the
/// bracket, then enumerates them.
fn kth_pair_distance(s: &[f64], k: usize) -> f64 {
    let n = s.len();
    let rank = k + 1;
    let mut lo = -1.0_f64;
    let mut hi = s[n - 1] - s[0];
    let mut below_lo = 0usize;
    let mut upto_hi = n * (n - 1) / 2;
    let enumerate_limit = n.max(64);
    loop {
        if upto_hi - below_lo <= enumerate_limit {
            let mut cand = Vec::with_capacity(upto_hi - below_lo);
            let (mut a, mut b) = (0usize, 0usize);
            for j in 0..n {
                // a: first i with d <= hi; b: first i with d <= lo
                while a < j && s[j] - s[a] > hi {
                    a += 1;
                }
                if b < a {
                    b = a;
                }
                while b < j && s[j] - s[b] > lo {
                    b += 1;
                }
                cand.extend((a..b).map(|i| s[j] - s[i]));
            }
            cand.sort_unstable_by(f64::total_cmp);
            return cand[rank - below_lo - 1];
        }
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            return hi;
        }
        let c = count_pairs_within(s, mid);
        if c >= rank {
            hi = mid;
            upto_hi = c;
        } else {
            lo = mid;
            below_lo = c;
        }
    }
}

/// `2.2 * Q1{|x_i - x_j| : i < j}` with the interpolating quartile.
pub fn qn_estimator(sample: &Sample) -> Result<f64> {
    sample.require_len(2, "Qn")?;
    let s = sample.sorted();
    let n = s.len();
    let pairs = n * (n - 1) / 2;
    let (idx, frac) = quantile_position(pairs, 0.25);
    let lo = kth_pair_distance(&s, idx);
    let q1 = if frac == 0.0 || idx + 1 >= pairs {
        lo
    } else {
        lerp(lo, kth_pair_distance(&s, idx + 1), frac)
    };
    Ok(QN_CONSTANT * q1)
}

/// First and third quartiles by linear interpolation.
pub fn quartiles(sample: &Sample) -> Result<(f64, f64)> {
    sample.require_len(2, "quartiles")?;
    let s = sample.sorted();
    Ok((quantile_of_sorted(&s, 0.25), quantile_of_sorted(&s, 0.75)))
}

/// Medcouple over all pairs strictly straddling the sample median.
///
/// Pairs touching the median itself are left out; when no straddling pair
/// exists the sample is reported as degenerate.
pub fn medcouple(sample: &Sample) -> Result<f64> {
    sample.require_len(3, "medcouple")?;
    let s = sample.sorted();
    let med = median_of_sorted(&s);
    let below = s.partition_point(|&x| x < med);
    let above = s.partition_point(|&x| x <= med);
    let (lower, upper) = (&s[..below], &s[above..]);
    if lower.is_empty() || upper.is_empty() {
        return Err(Error::DegenerateSample(
            "no pair of values straddles the median".into(),
        ));
    }
    let mut kernel = Vec::with_capacity(lower.len() * upper.len());
    for &xi in lower {
        for &xj in upper {
            let h = ((xj - med) - (med - xi)) / (xj - xi);
            kernel.push(h.clamp(-1.0, 1.0));
        }
    }
    kernel.sort_unstable_by(f64::total_cmp);
    Ok(median_of_sorted(&kernel))
}

/// Quartiles, medcouple, and the skew-adjusted lower/upper fences.
pub fn adjusted_fences(sample: &Sample) -> Result<MedcoupleFences> {
    let mc = medcouple(sample)?;
    let (q1, q3) = quartiles(sample)?;
    Ok(MedcoupleFences::from_parts(mc, q1, q3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: &[f64]) -> Sample {
        Sample::from_slice(v).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Sample::new(vec![1.0, f64::NAN]).is_err());
        assert!(Sample::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn mean_difference_examples() {
        assert_eq!(mean_difference(&s(&[5.0, 5.0, 5.0])).unwrap(), 0.0);
        assert_eq!(mean_difference(&s(&[0.0, 2.0])).unwrap(), 1.0);
        assert_relative_eq!(
            mean_difference(&s(&[1.0, 2.0, 4.0])).unwrap(),
            4.0 / 3.0,
            max_relative = 1e-15
        );
        assert!(matches!(
            mean_difference(&s(&[])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad(&s(&[7.5; 4])).unwrap(), 0.0);
        assert_eq!(mad(&s(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap(), 1.0);
        assert_eq!(mad(&s(&[1.0, 2.0, 3.0, 4.0, 100.0])).unwrap(), 1.0);
        assert!(mad(&s(&[])).is_err());
    }

    #[test]
    fn sn_examples() {
        assert_eq!(sn_estimator(&s(&[2.0, 2.0, 2.0])).unwrap(), 0.0);
        assert_relative_eq!(
            sn_estimator(&s(&[1.0, 2.0, 3.0])).unwrap(),
            1.788,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            sn_estimator(&s(&[1.0, 2.0, 3.0, 100.0])).unwrap(),
            2.384,
            max_relative = 1e-15
        );
        assert!(sn_estimator(&s(&[1.0])).is_err());
    }

    #[test]
    fn qn_examples() {
        assert_eq!(qn_estimator(&s(&[3.0, 3.0])).unwrap(), 0.0);
        assert_relative_eq!(
            qn_estimator(&s(&[0.0, 1.0, 2.0])).unwrap(),
            2.2,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            qn_estimator(&s(&[0.0, 1.0, 2.0, 3.0])).unwrap(),
            2.2,
            max_relative = 1e-15
        );
        assert!(qn_estimator(&s(&[0.0])).is_err());
    }

    #[test]
    fn qn_selection_handles_heavy_ties() {
        // many identical pairwise distances force the bisection to bottom out
        let v: Vec<f64> = (0..300).map(|i| (i % 3) as f64).collect();
        let mut d = Vec::new();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d.push((v[i] - v[j]).abs());
            }
        }
        d.sort_by(f64::total_cmp);
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        for k in [0, 1, d.len() / 4, d.len() / 2, d.len() - 1] {
            assert_eq!(kth_pair_distance(&sorted, k), d[k], "rank {k}");
        }
    }

    #[test]
    fn quartile_examples() {
        assert_eq!(quartiles(&s(&[1.0, 2.0, 3.0])).unwrap(), (1.5, 2.5));
        assert_eq!(quartiles(&s(&[0.0; 4])).unwrap(), (0.0, 0.0));
        assert_eq!(
            quartiles(&s(&[5.0, 1.0, 4.0, 2.0, 3.0])).unwrap(),
            (2.0, 4.0)
        );
        assert!(quartiles(&s(&[1.0])).is_err());
    }

    #[test]
    fn medcouple_examples() {
        assert_eq!(medcouple(&s(&[1.0, 2.0, 3.0])).unwrap(), 0.0);
        assert_relative_eq!(
            medcouple(&s(&[1.0, 2.0, 10.0])).unwrap(),
            7.0 / 9.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            medcouple(&s(&[-10.0, -2.0, -1.0])).unwrap(),
            -7.0 / 9.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn medcouple_degenerate_is_distinct_from_invalid() {
        assert!(matches!(
            medcouple(&s(&[1.0, 1.0, 1.0, 2.0])),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            medcouple(&s(&[1.0, 2.0])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn fence_factors() {
        assert_eq!(lower_fence_factor(0.0), 1.5);
        assert_eq!(upper_fence_factor(0.0), 1.5);
        assert_relative_eq!(lower_fence_factor(0.2), 0.744_877_96, max_relative = 1e-6);
        assert_relative_eq!(upper_fence_factor(0.2), 3.338_311_3, max_relative = 1e-6);
    }

    #[test]
    fn symmetric_sample_gives_classical_boxplot() {
        let f = adjusted_fences(&s(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        assert_eq!(f.mc, 0.0);
        assert_eq!(f.lower_fence, f.q1 - 1.5 * f.iqr);
        assert_eq!(f.upper_fence, f.q3 + 1.5 * f.iqr);
    }

    #[test]
    fn skewed_fences() {
        let f = adjusted_fences(&s(&[1.0, 2.0, 10.0])).unwrap();
        assert_eq!((f.q1, f.q3, f.iqr), (1.5, 6.0, 4.5));
        assert_relative_eq!(f.h_l, 0.098_592_79, max_relative = 1e-5);
        assert_relative_eq!(f.h_r, 33.668_956, max_relative = 1e-5);
        assert_relative_eq!(f.lower_fence, 1.056_332_4, max_relative = 1e-5);
        assert_relative_eq!(f.upper_fence, 157.510_30, max_relative = 1e-5);
    }
}
