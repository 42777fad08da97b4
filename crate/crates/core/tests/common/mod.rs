//! Definitional oracles for the estimators: full pair enumeration and
//! full sorts, sharing no code with the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

fn sort(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

pub fn median(v: &[f64]) -> f64 {
    let s = sort(v.to_vec());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Interpolated quantile at 1-based position `1 + p(n-1)`.
pub fn quantile(v: &[f64], p: f64) -> f64 {
    let s = sort(v.to_vec());
    let pos = p * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        s[lo]
    } else {
        s[lo] + frac * (s[lo + 1] - s[lo])
    }
}

/// Accurate sum (Neumaier) so the oracle itself is not the error source.
fn accurate_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean_difference(v: &[f64]) -> f64 {
    let n = v.len();
    let total = accurate_sum(
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (v[i] - v[j]).abs()),
    );
    total / ((n * n) as f64)
}

pub fn mad(v: &[f64]) -> f64 {
    let m = median(v);
    median(&v.iter().map(|x| (x - m).abs()).collect::<Vec<_>>())
}

pub fn sn(v: &[f64]) -> f64 {
    let inner: Vec<f64> = (0..v.len())
        .map(|i| {
            let d: Vec<f64> = (0..v.len())
                .filter(|&j| j != i)
                .map(|j| (v[i] - v[j]).abs())
                .collect();
            median(&d)
        })
        .collect();
    1.192 * median(&inner)
}

pub fn qn(v: &[f64]) -> f64 {
    let mut d = Vec::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            d.push((v[i] - v[j]).abs());
        }
    }
    2.2 * quantile(&d, 0.25)
}

pub fn medcouple(v: &[f64]) -> Option<f64> {
    let m = median(v);
    let mut k = Vec::new();
    for &xi in v {
        for &xj in v {
            if xi < m && m < xj {
                let h = ((xj - m) - (m - xi)) / (xj - xi);
                k.push(h.clamp(-1.0, 1.0));
            }
        }
    }
    (!k.is_empty()).then(|| median(&k))
}

/// Distance in units in the last place between two finite doubles.
pub fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

/// Gaussian, lognormal, or contaminated-Gaussian sample of length `n`.
pub fn mixed_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..3) {
        0 => {
            let d = Normal::new(rng.random_range(-5.0..5.0), rng.random_range(0.1..3.0)).unwrap();
            (0..n).map(|_| d.sample(rng)).collect()
        }
        1 => {
            let d = LogNormal::new(0.0, rng.random_range(0.2..1.5)).unwrap();
            (0..n).map(|_| d.sample(rng)).collect()
        }
        _ => {
            let clean = Normal::new(1.1, 0.05).unwrap();
            let bad = Normal::new(0.5, 0.02).unwrap();
            let frac = rng.random_range(0.0..0.3);
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() < frac {
                        bad.sample(rng)
                    } else {
                        clean.sample(rng)
                    }
                })
                .collect()
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
