//! Exact binomials and big-integer helpers.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// Exact binomial coefficient C(n, r); zero when r > n.
pub fn binom(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let r = r.min(n - r);
    let mut acc = BigUint::one();
    for i in 0..r {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// The full row C(n, 0..=n).
pub fn binom_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut cur = BigUint::one();
    row.push(cur.clone());
    for i in 0..n {
        cur = cur * (n - i) / (i + 1);
        row.push(cur.clone());
    }
    row
}

/// Binomial coefficient as f64 for small arguments (exact up to 2^53).
pub fn binom_f64(n: u64, r: u64) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    let mut acc = 1.0f64;
    for i in 0..r {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Top 64 significant bits of `a` and the number of bits shifted off.
fn mantissa(a: &BigUint) -> (u64, i64) {
    let bits = a.bits() as i64;
    if bits <= 64 {
        (a.to_u64().unwrap_or(0), 0)
    } else {
        let shift = bits - 64;
        ((a >> (shift as usize)).to_u64().unwrap_or(u64::MAX), shift)
    }
}

/// a / b in double precision without overflow, for arbitrarily large operands.
pub fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    assert!(!b.is_zero(), "ratio with zero denominator");
    if a.is_zero() {
        return 0.0;
    }
    let (ma, sa) = mantissa(a);
    let (mb, sb) = mantissa(b);
    let exp = sa - sb;
    let base = ma as f64 / mb as f64;
    scale_pow2(base, exp)
}

fn scale_pow2(mut v: f64, mut exp: i64) -> f64 {
    while exp > 1000 {
        v *= 2f64.powi(1000);
        exp -= 1000;
    }
    while exp < -1000 {
        v *= 2f64.powi(-1000);
        exp += 1000;
    }
    v * 2f64.powi(exp as i32)
}

/// log2 of a positive big integer in double precision.
pub fn log2_big(a: &BigUint) -> f64 {
    assert!(!a.is_zero(), "log2 of zero");
    let (m, s) = mantissa(a);
    (m as f64).log2() + s as f64
}

/// 2^e as a big integer.
pub fn pow2(e: u64) -> BigUint {
    BigUint::one() << (e as usize)
}

/// Smallest b with 2^b >= n (n >= 1).
pub fn ceil_log2(n: u64) -> u32 {
    assert!(n >= 1);
    64 - (n - 1).leading_zeros()
}
