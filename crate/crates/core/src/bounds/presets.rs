//! Named weight schemes for the adversary evaluators.

use super::adversary::{AdversaryInstance, WeightScheme};
use super::gamma_pan;
use crate::coinmodel::{balance_queries, quasi_prob_for_overlap, words_of_weight, BalanceQuery};
use crate::error::{QcoinError, Result};
use crate::numeric::{binom, ratio};
use num_traits::Zero;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::sync::Arc;

/// A weight-scheme family parameterized by (n, k, param).
pub trait SchemePreset: Send + Sync {
    fn name(&self) -> &'static str;
    /// "d" or "l".
    fn param_name(&self) -> &'static str;
    fn build(&self, n: usize, k: usize, param: usize) -> Result<(AdversaryInstance, WeightScheme)>;
    /// Bound evaluated without enumerating S x S x Q, when a formula exists.
    fn closed_form(&self, n: usize, k: usize, param: usize) -> Result<Option<f64>>;
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k == 0 || 2 * k > n {
        return Err(QcoinError::Domain(format!("need 1 <= k <= n/2 (n = {n}, k = {k})")));
    }
    Ok(())
}

fn check_enumerable(n: usize, k: usize) -> Result<()> {
    check_nk(n, k)?;
    if n > 64 {
        return Err(QcoinError::Resource(format!(
            "n = {n} is too large to enumerate; use the closed form"
        )));
    }
    Ok(())
}

fn inputs(n: usize, k: usize) -> (Vec<u64>, Vec<String>) {
    let words = words_of_weight(n, k);
    let labels = words.iter().map(|w| w.to_string()).collect();
    (words.iter().map(|w| w.as_u64()).collect(), labels)
}

fn balanced_table(xs: &[u64], qs: &[BalanceQuery]) -> Vec<f64> {
    let pm: Vec<(u64, u64)> = qs.iter().map(|q| (q.plus().as_u64(), q.minus().as_u64())).collect();
    xs.iter()
        .flat_map(|&x| {
            pm.iter().map(move |&(p, m)| {
                let bal = (x & p).count_ones() == (x & m).count_ones();
                if bal {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect()
}

fn dist(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// Pans of at least n/d coins, uniform weights on every pair.
pub struct BigPanPreset;

impl BigPanPreset {
    fn sizes(n: usize, d: usize) -> Result<std::ops::RangeInclusive<usize>> {
        if d < 2 || d > n {
            return Err(QcoinError::Domain(format!("d = {d} must lie in [2, n = {n}]")));
        }
        Ok(n.div_ceil(d)..=n / 2)
    }
}

impl SchemePreset for BigPanPreset {
    fn name(&self) -> &'static str {
        "bigpan"
    }

    fn param_name(&self) -> &'static str {
        "d"
    }

    fn build(&self, n: usize, k: usize, d: usize) -> Result<(AdversaryInstance, WeightScheme)> {
        check_enumerable(n, k)?;
        let qs: Vec<BalanceQuery> = Self::sizes(n, d)?.flat_map(|l| balance_queries(n, l)).collect();
        let (xs, labels) = inputs(n, k);
        let p0 = balanced_table(&xs, &qs);
        let nq = qs.len();
        let inst = AdversaryInstance {
            input_labels: labels,
            query_labels: qs.iter().map(|q| q.to_string()).collect(),
            f: (0..xs.len()).collect(),
            p0,
        };
        let table = Arc::new(inst.p0.clone());
        let scheme = WeightScheme {
            name: format!("bigpan(n={n},k={k},d={d})"),
            w: Box::new(|x, y| if x != y { 1.0 } else { 0.0 }),
            w_prime: Box::new(move |x, y, q| {
                if x != y && table[x * nq + q] != table[y * nq + q] {
                    1.0
                } else {
                    0.0
                }
            }),
        };
        Ok((inst, scheme))
    }

    /// min over pan sizes of (C - 1) / sqrt(gamma (C - gamma)).
    fn closed_form(&self, n: usize, k: usize, d: usize) -> Result<Option<f64>> {
        check_nk(n, k)?;
        let total = binom(n as u64, k as u64);
        let scale = 1.0 - ratio(&1u32.into(), &total);
        let mut best: Option<f64> = None;
        for l in Self::sizes(n, d)? {
            let g = gamma_pan(n, k, l);
            if g.is_zero() || g == total {
                continue;
            }
            let v = scale * (ratio(&total, &g) * ratio(&total, &(&total - &g))).sqrt();
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
        Ok(best)
    }
}

/// Pans of exactly l coins, weights on adjacent configurations driven by the
/// per-pan counts of false coins.
pub struct SmallPanPreset;

fn smallpan_weight(n: usize, k: usize, l: usize, a: [usize; 4]) -> f64 {
    let ratio_a = |m: usize| {
        (m * (n + 2 * m - k - 2 * l)) as f64 / ((l + 1 - m) * (k + 1 - 2 * m)) as f64
    };
    for m in 1..=k.div_ceil(2).min(l) {
        let mm = m - 1;
        match a {
            p if p == [mm, m, m, m] || p == [m, mm, m, m] => return ratio_a(m),
            p if p == [m, m, mm, m] || p == [m, m, m, mm] => return 1.0 / ratio_a(m),
            p if p.iter().filter(|&&v| v == m).count() == 1
                && p.iter().filter(|&&v| v == mm).count() == 3 =>
            {
                return 1.0
            }
            p if p == [m + 1, mm, m, m]
                || p == [mm, m + 1, m, m]
                || p == [m, m, m + 1, mm]
                || p == [m, m, mm, m + 1] =>
            {
                return 1.0
            }
            _ => {}
        }
    }
    0.0
}

impl SchemePreset for SmallPanPreset {
    fn name(&self) -> &'static str {
        "smallpan"
    }

    fn param_name(&self) -> &'static str {
        "l"
    }

    fn build(&self, n: usize, k: usize, l: usize) -> Result<(AdversaryInstance, WeightScheme)> {
        check_enumerable(n, k)?;
        if l == 0 || 2 * l > n {
            return Err(QcoinError::Domain(format!("pan size l = {l} must lie in [1, n/2]")));
        }
        let qs = balance_queries(n, l);
        let (xs, labels) = inputs(n, k);
        let nq = qs.len();
        let counts: Vec<(usize, usize)> = xs
            .iter()
            .flat_map(|&x| {
                qs.iter().map(move |q| {
                    (
                        (x & q.plus().as_u64()).count_ones() as usize,
                        (x & q.minus().as_u64()).count_ones() as usize,
                    )
                })
            })
            .collect();
        let inst = AdversaryInstance {
            input_labels: labels,
            query_labels: qs.iter().map(|q| q.to_string()).collect(),
            f: (0..xs.len()).collect(),
            p0: counts.iter().map(|&(a, b)| if a == b { 1.0 } else { 0.0 }).collect(),
        };
        let xs = Arc::new(xs);
        let xw = Arc::clone(&xs);
        let scheme = WeightScheme {
            name: format!("smallpan(n={n},k={k},l={l})"),
            w: Box::new(move |x, y| if dist(xw[x], xw[y]) == 2 { 1.0 } else { 0.0 }),
            w_prime: Box::new(move |x, y, q| {
                if dist(xs[x], xs[y]) != 2 {
                    return 0.0;
                }
                let (m1, m2) = counts[x * nq + q];
                let (m3, m4) = counts[y * nq + q];
                if (m1 == m2) == (m3 == m4) {
                    return 0.0;
                }
                smallpan_weight(n, k, l, [m1, m2, m3, m4])
            }),
        };
        Ok((inst, scheme))
    }

    fn closed_form(&self, n: usize, k: usize, _l: usize) -> Result<Option<f64>> {
        check_nk(n, k)?;
        Ok(None)
    }
}

/// Quasi-oracle masks of weight l; weights depend on the overlap counts
/// a = wt(x AND q), b = wt(y AND q).
pub struct QuasiPreset;

fn quasi_weight(n: usize, k: usize, l: usize, a: usize, b: usize) -> f64 {
    let up = |m: usize| {
        (2 * m * (n + 2 * m - k - l)) as f64 / ((l + 1 - 2 * m) * (k + 1 - 2 * m)) as f64
    };
    if b == a + 1 && b % 2 == 0 {
        up(b / 2)
    } else if a == b + 1 && a % 2 == 0 {
        1.0 / up(a / 2)
    } else if a.abs_diff(b) == 1 {
        1.0
    } else {
        0.0
    }
}

/// nu for an input with overlap a; every neighbour at distance 2 moves the
/// overlap by at most one.
fn quasi_nu(n: usize, k: usize, l: usize, a: usize) -> f64 {
    let mut s = 0.0;
    if a >= 1 && n + a >= l + k + 1 {
        s += (a * (n + a - l - k)) as f64 * quasi_weight(n, k, l, a, a - 1);
    }
    if k > a && l > a {
        s += ((k - a) * (l - a)) as f64 * quasi_weight(n, k, l, a, a + 1);
    }
    s
}

fn check_quasi(n: usize, k: usize, l: usize) -> Result<()> {
    check_nk(n, k)?;
    if l == 0 || l > n {
        return Err(QcoinError::Domain(format!("mask weight l = {l} must lie in [1, n]")));
    }
    Ok(())
}

impl SchemePreset for QuasiPreset {
    fn name(&self) -> &'static str {
        "quasi"
    }

    fn param_name(&self) -> &'static str {
        "l"
    }

    fn build(&self, n: usize, k: usize, l: usize) -> Result<(AdversaryInstance, WeightScheme)> {
        check_enumerable(n, k)?;
        check_quasi(n, k, l)?;
        let masks = words_of_weight(n, l);
        let (xs, labels) = inputs(n, k);
        let nq = masks.len();
        let overlap: Vec<usize> = xs
            .iter()
            .flat_map(|&x| masks.iter().map(move |q| (x & q.as_u64()).count_ones() as usize))
            .collect();
        let inst = AdversaryInstance {
            input_labels: labels,
            query_labels: masks.iter().map(|q| q.to_string()).collect(),
            f: (0..xs.len()).collect(),
            p0: overlap.iter().map(|&m| quasi_prob_for_overlap(m)).collect(),
        };
        let xs = Arc::new(xs);
        let xw = Arc::clone(&xs);
        let scheme = WeightScheme {
            name: format!("quasi(n={n},k={k},l={l})"),
            w: Box::new(move |x, y| if dist(xw[x], xw[y]) == 2 { 1.0 } else { 0.0 }),
            w_prime: Box::new(move |x, y, q| {
                let (a, b) = (overlap[x * nq + q], overlap[y * nq + q]);
                if dist(xs[x], xs[y]) != 2 || quasi_prob_for_overlap(a) == quasi_prob_for_overlap(b) {
                    return 0.0;
                }
                quasi_weight(n, k, l, a, b)
            }),
        };
        Ok((inst, scheme))
    }

    /// The bound depends on (x, y, q) only through the overlaps, so the
    /// minimization runs over adjacent overlap pairs.
    fn closed_form(&self, n: usize, k: usize, l: usize) -> Result<Option<f64>> {
        check_quasi(n, k, l)?;
        let mu = (k * (n - k)) as f64;
        let down_ok = |a: usize| a >= 1 && n + a >= l + k + 1;
        let up_ok = |a: usize| k > a && l > a;
        let mut best: Option<f64> = None;
        for a in 0..=k.min(l) {
            if k - a > n - l {
                continue;
            }
            let neighbours = [
                down_ok(a).then(|| a.wrapping_sub(1)),
                up_ok(a).then_some(a + 1),
            ];
            for b in neighbours.into_iter().flatten() {
                let (pa, pb) = (quasi_prob_for_overlap(a), quasi_prob_for_overlap(b));
                let p01 = pa * (1.0 - pb);
                let p10 = (1.0 - pa) * pb;
                let v = (mu * mu / (quasi_nu(n, k, l, a) * quasi_nu(n, k, l, b))).sqrt()
                    / (p01.sqrt() + p10.sqrt());
                best = Some(best.map_or(v, |c: f64| c.min(v)));
            }
        }
        Ok(best)
    }
}

/// k^2 (N-k)^2 sqrt(2m) / (8m (l-2m+1)(k-2m+1)(N-k-l+2m)): the lower
/// estimate for the squared bound term at overlaps (2m, 2m-1).
pub fn quasi_term_estimate(n: usize, k: usize, l: usize, m: usize) -> f64 {
    let (nf, kf, lf, mf) = (n as f64, k as f64, l as f64, m as f64);
    kf * kf * (nf - kf).powi(2) * (2.0 * mf).sqrt()
        / (8.0 * mf * (lf - 2.0 * mf + 1.0) * (kf - 2.0 * mf + 1.0) * (nf - kf - lf + 2.0 * mf))
}

/// Recorded infimum of the quasi bound over k^(1/4) on `quasi_golden_grid`.
pub const QUASI_GOLDEN: f64 = 0.965136707627;

/// (k, min over l of the quasi closed form / k^(1/4)) for k = 2, 4, ..., 64
/// at n = 4k.
pub fn quasi_golden_grid() -> Result<Vec<(usize, f64)>> {
    [2usize, 4, 8, 16, 32, 64]
        .par_iter()
        .map(|&k| {
            let n = 4 * k;
            let mut best = f64::INFINITY;
            for l in 1..=n {
                if let Some(v) = QuasiPreset.closed_form(n, k, l)? {
                    best = best.min(v);
                }
            }
            Ok((k, best / (k as f64).powf(0.25)))
        })
        .collect()
}

/// Presets selectable by name.
pub struct PresetRegistry {
    presets: BTreeMap<&'static str, Box<dyn SchemePreset>>,
}

impl Default for PresetRegistry {
    fn default() -> Self {
        let mut r = PresetRegistry {
            presets: BTreeMap::new(),
        };
        r.register(Box::new(BigPanPreset));
        r.register(Box::new(SmallPanPreset));
        r.register(Box::new(QuasiPreset));
        r
    }
}

impl PresetRegistry {
    pub fn register(&mut self, preset: Box<dyn SchemePreset>) {
        self.presets.insert(preset.name(), preset);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SchemePreset> {
        self.presets.get(name).map(|p| p.as_ref()).ok_or_else(|| {
            QcoinError::Config(format!(
                "unknown scheme preset '{name}' (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.presets.keys().copied().collect()
    }
}
