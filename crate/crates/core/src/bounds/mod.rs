//! Lower-bound machinery: balanced-configuration counts, the pan-size ratios,
//! weighted adversary evaluators and the classical information bound.

mod adversary;
mod presets;

pub use adversary::{
    adversary_bound, nu_table, stochastic_adversary_bound, validate_scheme, AdversaryInstance,
    AdversaryReport, WeightScheme, DEFAULT_ENUMERATION_CAP,
};
pub use presets::{
    quasi_golden_grid, quasi_term_estimate, BigPanPreset, PresetRegistry, QuasiPreset,
    SchemePreset, SmallPanPreset, QUASI_GOLDEN,
};

use crate::coinmodel::{chi_word, words_of_weight, BalanceQuery};
use crate::error::{QcoinError, Result};
use crate::numeric::{binom, binom_row, log2_big, ratio};
use num_bigint::BigUint;
use num_traits::Zero;
use rayon::prelude::*;

/// Weight-k words balanced under a fixed query with l coins on each pan:
/// sum_m C(l, m)^2 C(n - 2l, k - 2m).
pub fn gamma_pan(n: usize, k: usize, l: usize) -> BigUint {
    assert!(2 * l <= n);
    let rl = binom_row(l as u64);
    let rest = binom_row((n - 2 * l) as u64);
    (0..=k / 2)
        .filter(|&m| m <= l && k - 2 * m <= n - 2 * l)
        .map(|m| &rl[m] * &rl[m] * &rest[k - 2 * m])
        .sum()
}

fn check_divisor(n: usize, k: usize, c: usize) -> Result<usize> {
    if c < 2 || n % c != 0 {
        return Err(QcoinError::Domain(format!(
            "c = {c} must be at least 2 and divide n = {n}"
        )));
    }
    if 2 * k >= n {
        return Err(QcoinError::Domain(format!("k = {k} must be below n/2")));
    }
    Ok(n / c)
}

/// gamma(n, k, c): balanced weight-k words for pans of n/c coins.
pub fn gamma(n: usize, k: usize, c: usize) -> Result<BigUint> {
    let l = check_divisor(n, k, c)?;
    Ok(gamma_pan(n, k, l))
}

/// Direct count of balanced weight-k words against the lexicographically
/// first query with n/c coins per pan.
pub fn gamma_exhaustive(n: usize, k: usize, c: usize) -> Result<BigUint> {
    let l = check_divisor(n, k, c)?;
    let left: Vec<usize> = (0..l).collect();
    let right: Vec<usize> = (l..2 * l).collect();
    let q = BalanceQuery::from_pans(n, &left, &right)?;
    let count = words_of_weight(n, k)
        .iter()
        .filter(|x| !chi_word(x, &q).expect("same length"))
        .count();
    Ok(BigUint::from(count))
}

/// 1 - gamma / C(n, k): the tilt probability of a random big-pan weighing.
pub fn tilt_probability(n: usize, k: usize, c: usize) -> Result<f64> {
    let g = gamma(n, k, c)?;
    let total = binom(n as u64, k as u64);
    Ok(ratio(&(&total - &g), &total))
}

/// Summand t(m) = C(n/c, m)^2 C((1 - 2/c) n, k - 2m).
pub fn lemma4_t(n: usize, k: usize, c: usize, m: usize) -> Result<BigUint> {
    let l = check_divisor(n, k, c)?;
    if 2 * m > k || m > l {
        return Ok(BigUint::zero());
    }
    let b = binom(l as u64, m as u64);
    Ok(&b * &b * binom((n - 2 * l) as u64, (k - 2 * m) as u64))
}

/// r(m) = t(m + 1) / t(m) as the real rational expression, valid for real m.
pub fn lemma4_r(n: usize, k: usize, c: usize, m: f64) -> f64 {
    let (nf, kf, cf) = (n as f64, k as f64, c as f64);
    let rest = (1.0 - 2.0 / cf) * nf - kf;
    (nf / cf - m).powi(2) * (kf - 2.0 * m) * (kf - 2.0 * m - 1.0)
        / ((m + 1.0).powi(2) * (rest + 2.0 * m + 1.0) * (rest + 2.0 * m + 2.0))
}

/// (gamma / C(n, k)) / sqrt(c / k), for 2 <= c <= k/3 with c | n.
pub fn lemma4_ratio(n: usize, k: usize, c: usize) -> Result<f64> {
    if c < 2 || 3 * c > k {
        return Err(QcoinError::Domain(format!(
            "the small-pan ratio needs 2 <= c <= k/3 (c = {c}, k = {k})"
        )));
    }
    let g = gamma(n, k, c)?;
    Ok(ratio(&g, &binom(n as u64, k as u64)) / (c as f64 / k as f64).sqrt())
}

/// t'(m) = C(k, m) C(n - k, 2n/c - m) / C(n, 2n/c).
pub fn lemma8_t(n: usize, k: usize, c: usize, m: usize) -> Result<f64> {
    let l = check_divisor(n, k, c)?;
    let pans = 2 * l;
    if m > k || m > pans || pans - m > n - k {
        return Ok(0.0);
    }
    let num = binom(k as u64, m as u64) * binom((n - k) as u64, (pans - m) as u64);
    Ok(ratio(&num, &binom(n as u64, pans as u64)))
}

/// r'(m) = (k - m)(2n/c - m) / ((m + 1)(n - k - 2n/c + m + 1)).
pub fn lemma8_r(n: usize, k: usize, c: usize, m: f64) -> f64 {
    let (nf, kf, cf) = (n as f64, k as f64, c as f64);
    let pans = 2.0 * nf / cf;
    (kf - m) * (pans - m) / ((m + 1.0) * (nf - kf - pans + m + 1.0))
}

/// The displayed bound 2kn / (cn - ck - 2n) on r'(0).
pub fn lemma8_r0_bound(n: usize, k: usize, c: usize) -> f64 {
    let (nf, kf, cf) = (n as f64, k as f64, c as f64);
    2.0 * kf * nf / (cf * nf - cf * kf - 2.0 * nf)
}

/// ((C(n, k) - gamma) / C(n, k)) / (k / c), for c >= 3 with c | n.
pub fn lemma8_ratio(n: usize, k: usize, c: usize) -> Result<f64> {
    if c < 3 {
        return Err(QcoinError::Domain(format!("the big-pan ratio needs c >= 3, got {c}")));
    }
    Ok(tilt_probability(n, k, c)? / (k as f64 / c as f64))
}

/// Pan counts n of the ratio grids.
pub const LEMMA_GRID: [usize; 11] = [64, 96, 128, 192, 256, 384, 512, 768, 1024, 1536, 2048];
/// Recorded grid maxima of the normalized ratios.
pub const LEMMA4_MAX: f64 = 2.0;
pub const LEMMA8_MAX: f64 = 4.0;

/// One evaluated grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioPoint {
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub ratio: f64,
    /// r(k/2c - 1) on the small-pan grid.
    pub pivot: Option<f64>,
}

fn divisors(n: usize, lo: usize, hi: usize) -> Vec<usize> {
    (lo..=hi.min(n)).filter(|c| n % c == 0).collect()
}

/// Small-pan grid: c | n, 4 <= c <= k/3, k < n/2.
pub fn lemma4_grid(ns: &[usize]) -> Vec<RatioPoint> {
    let tasks: Vec<(usize, usize)> = ns
        .iter()
        .flat_map(|&n| divisors(n, 4, n).into_iter().map(move |c| (n, c)))
        .collect();
    tasks
        .par_iter()
        .flat_map_iter(|&(n, c)| {
            let l = n / c;
            let total = binom_row(n as u64);
            let rl = binom_row(l as u64);
            let rest = binom_row((n - 2 * l) as u64);
            (3 * c..n.div_ceil(2)).filter(move |&k| 2 * k < n).map(move |k| {
                let g: BigUint = (0..=k / 2)
                    .filter(|&m| m <= l && k - 2 * m <= n - 2 * l)
                    .map(|m| &rl[m] * &rl[m] * &rest[k - 2 * m])
                    .sum();
                let r = ratio(&g, &total[k]) / (c as f64 / k as f64).sqrt();
                let pivot = lemma4_r(n, k, c, k as f64 / (2.0 * c as f64) - 1.0);
                RatioPoint {
                    n,
                    k,
                    c,
                    ratio: r,
                    pivot: Some(pivot),
                }
            })
        })
        .collect()
}

/// Big-pan grid: c | n, c >= 3, 1 <= k < n/2.
pub fn lemma8_grid(ns: &[usize]) -> Vec<RatioPoint> {
    let tasks: Vec<(usize, usize)> = ns
        .iter()
        .flat_map(|&n| divisors(n, 3, n).into_iter().map(move |c| (n, c)))
        .collect();
    tasks
        .par_iter()
        .flat_map_iter(|&(n, c)| {
            let l = n / c;
            let total = binom_row(n as u64);
            let rl = binom_row(l as u64);
            let rest = binom_row((n - 2 * l) as u64);
            (1..n.div_ceil(2)).filter(move |&k| 2 * k < n).map(move |k| {
                let g: BigUint = (0..=k / 2)
                    .filter(|&m| m <= l && k - 2 * m <= n - 2 * l)
                    .map(|m| &rl[m] * &rl[m] * &rest[k - 2 * m])
                    .sum();
                let tilt = ratio(&(&total[k] - &g), &total[k]);
                RatioPoint {
                    n,
                    k,
                    c,
                    ratio: tilt / (k as f64 / c as f64),
                    pivot: None,
                }
            })
        })
        .collect()
}

/// Big/small pan bound C / sqrt(gamma (C - gamma)) minimized over pan sizes
/// l <= l1 or l >= l2 (every size when l1 = l2).
pub fn medium_pan_bound(n: usize, k: usize, l1: usize, l2: usize) -> Result<f64> {
    if l1 > l2 || 2 * l2 > n || 2 * k >= n {
        return Err(QcoinError::Domain(format!(
            "medium pan bound needs l1 <= l2 <= n/2 and k < n/2 (n={n}, k={k}, l1={l1}, l2={l2})"
        )));
    }
    let total = binom(n as u64, k as u64);
    let sizes = (1..=n / 2).filter(|&l| l <= l1 || l >= l2);
    pan_size_min(&total, n, k, sizes)
}

fn pan_size_min(
    total: &BigUint,
    n: usize,
    k: usize,
    sizes: impl Iterator<Item = usize>,
) -> Result<f64> {
    let mut best: Option<f64> = None;
    for l in sizes {
        let g = gamma_pan(n, k, l);
        if g.is_zero() || &g == total {
            continue;
        }
        let v = (ratio(total, &g) * ratio(total, &(total - &g))).sqrt();
        best = Some(best.map_or(v, |b: f64| b.min(v)));
    }
    best.ok_or_else(|| QcoinError::Domain("no pan size separates any pair".into()))
}

/// log2 C(n, k).
pub fn classical_info_bound(n: usize, k: usize) -> f64 {
    log2_big(&binom(n as u64, k as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(8, 2, 4).unwrap(), big(10));
        assert_eq!(binom(8, 2), big(28));
        assert_eq!(gamma(4, 1, 2).unwrap(), big(0));
        for n in (4..=40).step_by(2) {
            assert_eq!(gamma(n, 1, 2).unwrap(), big(0));
        }
        assert!(gamma(8, 2, 3).is_err());
        // gamma(4,2,2) with k = n/2 is outside k < n/2; the pan count itself is 4
        assert_eq!(gamma_pan(4, 2, 2), big(4));
    }

    #[test]
    fn gamma_matches_enumeration() {
        for n in 2..=12usize {
            for c in 2..=n {
                if n % c != 0 {
                    continue;
                }
                for k in 0..n.div_ceil(2) {
                    if 2 * k >= n {
                        continue;
                    }
                    assert_eq!(gamma(n, k, c).unwrap(), gamma_exhaustive(n, k, c).unwrap(), "n={n} k={k} c={c}");
                }
            }
        }
    }

    #[test]
    fn gamma_fraction_shrinks_towards_two() {
        for n in [24usize, 60, 120] {
            for k in 1..n / 2 {
                // c = 2 puts every coin on a pan, so parity alone decides
                if k % 2 == 1 {
                    assert!(gamma(n, k, 2).unwrap().is_zero());
                }
                let cs = divisors(n, 3, n);
                let fr: Vec<f64> = cs
                    .iter()
                    .map(|&c| ratio(&gamma(n, k, c).unwrap(), &binom(n as u64, k as u64)))
                    .collect();
                for w in fr.windows(2) {
                    assert!(w[0] <= w[1] + 1e-12, "n={n} k={k}: {fr:?}");
                }
            }
        }
    }

    #[test]
    fn lemma4_r_is_ratio_of_terms_and_decreasing() {
        let (n, k, c) = (120, 30, 5);
        let mut prev = f64::INFINITY;
        for m in 0..k / 2 {
            let r = lemma4_r(n, k, c, m as f64);
            let t0 = lemma4_t(n, k, c, m).unwrap();
            let t1 = lemma4_t(n, k, c, m + 1).unwrap();
            assert!((ratio(&t1, &t0) - r).abs() < 1e-12 * r.max(1.0));
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn lemma8_examples() {
        assert!((tilt_probability(8, 2, 4).unwrap() - 18.0 / 28.0).abs() < 1e-15);
        let (n, k, c) = (96, 10, 6);
        let r0 = lemma8_r(n, k, c, 0.0);
        let t0 = lemma8_t(n, k, c, 0).unwrap();
        let t1 = lemma8_t(n, k, c, 1).unwrap();
        assert!((t1 / t0 - r0).abs() < 1e-12);
        assert!(r0 <= lemma8_r0_bound(n, k, c));
        for m in 1..k {
            assert!(lemma8_r(n, k, c, m as f64) <= r0);
        }
    }

    #[test]
    fn small_grids_within_maxima() {
        let ns = [64usize, 96, 128];
        for p in lemma4_grid(&ns) {
            assert!(p.ratio <= LEMMA4_MAX, "{p:?}");
            assert!(p.pivot.unwrap() > 4.0, "{p:?}");
            assert!((p.ratio - lemma4_ratio(p.n, p.k, p.c).unwrap()).abs() < 1e-12);
        }
        for p in lemma8_grid(&ns) {
            assert!(p.ratio <= LEMMA8_MAX, "{p:?}");
            assert!((0.0..=1.0).contains(&(p.ratio * p.k as f64 / p.c as f64)));
        }
    }

    #[test]
    fn medium_examples() {
        let all = medium_pan_bound(64, 8, 16, 16).unwrap();
        let direct = pan_size_min(&binom(64, 8), 64, 8, 1..=32).unwrap();
        assert_eq!(all, direct);
        let gap = medium_pan_bound(64, 8, 4, 32).unwrap();
        let lo = pan_size_min(&binom(64, 8), 64, 8, 1..=4).unwrap();
        let hi = pan_size_min(&binom(64, 8), 64, 8, 32..=32).unwrap();
        assert_eq!(gap, lo.min(hi));
        assert!(gap >= all);
        let wider = medium_pan_bound(64, 8, 8, 24).unwrap();
        assert!(wider <= gap);
    }

    #[test]
    fn info_bound_examples() {
        assert!((classical_info_bound(8, 1) - 3.0).abs() < 1e-12);
        assert!((classical_info_bound(4, 2) - 6f64.log2()).abs() < 1e-12);
        assert_eq!(classical_info_bound(9, 0), 0.0);
    }
}
