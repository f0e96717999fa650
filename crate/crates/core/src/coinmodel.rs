//! Coins, queries and the three oracle models.

use crate::error::{QcoinError, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

/// Fixed-length binary word. Bit `i` corresponds to coin `i + 1`; the text
/// form is big-endian in coin order, so character 0 is coin 1.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitWord {
    n: usize,
    words: SmallVec<[u64; 2]>,
}

impl BitWord {
    pub fn zeros(n: usize) -> Self {
        BitWord {
            n,
            words: SmallVec::from_elem(0, n.div_ceil(64).max(1)),
        }
    }

    pub fn ones(n: usize) -> Self {
        let mut w = Self::zeros(n);
        for i in 0..n {
            w.set(i, true);
        }
        w
    }

    /// Word of length `n` whose low bits are taken from `v` (n <= 64).
    pub fn from_u64(n: usize, v: u64) -> Self {
        assert!(n <= 64, "from_u64 needs n <= 64");
        let mut w = Self::zeros(n);
        w.words[0] = if n == 64 { v } else { v & ((1u64 << n) - 1) };
        w
    }

    pub fn from_indices(n: usize, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut w = Self::zeros(n);
        for i in idx {
            w.set(i, true);
        }
        w
    }

    /// Low 64 bits; meaningful when n <= 64.
    pub fn as_u64(&self) -> u64 {
        self.words[0]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.n);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.n, "bit index {i} out of range for length {}", self.n);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn and(&self, other: &BitWord) -> BitWord {
        self.zip(other, |a, b| a & b)
    }

    pub fn or(&self, other: &BitWord) -> BitWord {
        self.zip(other, |a, b| a | b)
    }

    pub fn xor(&self, other: &BitWord) -> BitWord {
        self.zip(other, |a, b| a ^ b)
    }

    pub fn and_not(&self, other: &BitWord) -> BitWord {
        self.zip(other, |a, b| a & !b)
    }

    /// Bitwise complement within the word length.
    pub fn complement(&self) -> BitWord {
        let mut out = self.clone();
        for w in out.words.iter_mut() {
            *w = !*w;
        }
        out.trim();
        out
    }

    /// Weight of the intersection, without allocating.
    pub fn and_weight(&self, other: &BitWord) -> usize {
        debug_assert_eq!(self.n, other.n);
        self.words
            .iter()
            .zip(other.words.iter())
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Inner product mod 2.
    pub fn dot_parity(&self, other: &BitWord) -> bool {
        self.and_weight(other) % 2 == 1
    }

    pub fn ones_iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.get(i))
    }

    pub fn ones_vec(&self) -> Vec<usize> {
        self.ones_iter().collect()
    }

    fn zip(&self, other: &BitWord, f: impl Fn(u64, u64) -> u64) -> BitWord {
        assert_eq!(self.n, other.n, "word length mismatch");
        BitWord {
            n: self.n,
            words: self
                .words
                .iter()
                .zip(other.words.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn trim(&mut self) {
        let full = self.n / 64;
        let rem = self.n % 64;
        if rem != 0 {
            self.words[full] &= (1u64 << rem) - 1;
        } else if self.n == 0 {
            self.words[0] = 0;
        }
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.n)
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitWord({self})")
    }
}

impl FromStr for BitWord {
    type Err = QcoinError;
    fn from_str(s: &str) -> Result<Self> {
        let mut w = BitWord::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => w.set(i, true),
                other => {
                    return Err(QcoinError::Domain(format!(
                        "bit string contains '{other}'"
                    )))
                }
            }
        }
        Ok(w)
    }
}

impl Serialize for BitWord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitWord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hidden configuration: bit i set means coin i+1 is false.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoinConfig {
    bits: BitWord,
}

impl CoinConfig {
    /// Accepts 0 <= wt < n/2; solvers reject k = 0 themselves.
    pub fn new(bits: BitWord) -> Result<Self> {
        let n = bits.len();
        let k = bits.weight();
        if n == 0 {
            return Err(QcoinError::Domain("coin count must be positive".into()));
        }
        if 2 * k >= n {
            return Err(QcoinError::Domain(format!(
                "k = {k} must satisfy k < n/2 for n = {n}"
            )));
        }
        Ok(CoinConfig { bits })
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::new(s.parse()?)
    }

    pub fn from_false_coins(n: usize, idx: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::new(BitWord::from_indices(n, idx))
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    pub fn k(&self) -> usize {
        self.bits.weight()
    }

    pub fn bits(&self) -> &BitWord {
        &self.bits
    }

    /// Uniformly random configuration of weight k, determined by `seed`.
    pub fn random(n: usize, k: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        if k > n {
            return Err(QcoinError::Domain(format!("k = {k} exceeds n = {n}")));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self::from_false_coins(n, rand::seq::index::sample(&mut rng, n, k).into_iter())
    }

    /// Every configuration of weight k on n coins, in increasing integer order (n <= 64).
    pub fn all(n: usize, k: usize) -> Vec<CoinConfig> {
        assert!(n <= 64);
        words_of_weight(n, k)
            .into_iter()
            .map(|b| CoinConfig { bits: b })
            .filter(|c| 2 * c.k() < n)
            .collect()
    }
}

impl fmt::Display for CoinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.bits.fmt(f)
    }
}

/// All n-bit words of weight k (n <= 64), increasing as integers.
pub fn words_of_weight(n: usize, k: usize) -> Vec<BitWord> {
    assert!(n <= 64);
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    if k == 0 {
        return vec![BitWord::zeros(n)];
    }
    let limit: u128 = 1u128 << n;
    let mut v: u128 = (1u128 << k) - 1;
    while v < limit {
        out.push(BitWord::from_u64(n, v as u64));
        let c = v & v.wrapping_neg();
        let r = v + c;
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

/// Every weighing with l coins per pan, one orientation each (the pan holding
/// the smallest index is the plus pan).
pub fn balance_queries(n: usize, l: usize) -> Vec<BalanceQuery> {
    let mut out = Vec::new();
    if l == 0 || 2 * l > n {
        return out;
    }
    for left in words_of_weight(n, l) {
        let first = left.ones_iter().next().expect("non-empty");
        let free: Vec<usize> = (first + 1..n).filter(|&i| !left.get(i)).collect();
        for sel in words_of_weight(free.len(), l) {
            let right = BitWord::from_indices(n, sel.ones_iter().map(|j| free[j]));
            out.push(BalanceQuery {
                plus: left.clone(),
                minus: right,
            });
        }
    }
    out
}

/// A weighing: `plus` coins on the left pan, `minus` coins on the right pan.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BalanceQuery {
    plus: BitWord,
    minus: BitWord,
}

impl BalanceQuery {
    pub fn new(plus: BitWord, minus: BitWord) -> Result<Self> {
        if plus.len() != minus.len() {
            return Err(QcoinError::InvalidQuery("pan masks differ in length".into()));
        }
        if plus.and_weight(&minus) != 0 {
            return Err(QcoinError::InvalidQuery("a coin sits on both pans".into()));
        }
        if plus.weight() != minus.weight() {
            return Err(QcoinError::InvalidQuery(format!(
                "pan sizes differ: {} vs {}",
                plus.weight(),
                minus.weight()
            )));
        }
        Ok(BalanceQuery { plus, minus })
    }

    pub fn from_pans(n: usize, left: &[usize], right: &[usize]) -> Result<Self> {
        Self::new(
            BitWord::from_indices(n, left.iter().copied()),
            BitWord::from_indices(n, right.iter().copied()),
        )
    }

    pub fn empty(n: usize) -> Self {
        BalanceQuery {
            plus: BitWord::zeros(n),
            minus: BitWord::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.plus.len()
    }

    /// Pan size (number of +1 entries).
    pub fn l(&self) -> usize {
        self.plus.weight()
    }

    pub fn plus(&self) -> &BitWord {
        &self.plus
    }

    pub fn minus(&self) -> &BitWord {
        &self.minus
    }

    /// Support of the query, both pans together.
    pub fn support(&self) -> BitWord {
        self.plus.or(&self.minus)
    }

    pub fn sign(&self, i: usize) -> i8 {
        if self.plus.get(i) {
            1
        } else if self.minus.get(i) {
            -1
        } else {
            0
        }
    }
}

impl fmt::Display for BalanceQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.n())
            .map(|i| match self.sign(i) {
                1 => '+',
                -1 => '-',
                _ => '0',
            })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for BalanceQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BalanceQuery({self})")
    }
}

impl FromStr for BalanceQuery {
    type Err = QcoinError;
    fn from_str(s: &str) -> Result<Self> {
        let n = s.chars().count();
        let mut plus = BitWord::zeros(n);
        let mut minus = BitWord::zeros(n);
        for (i, c) in s.chars().enumerate() {
            match c {
                '+' => plus.set(i, true),
                '-' => minus.set(i, true),
                '0' => {}
                other => {
                    return Err(QcoinError::InvalidQuery(format!(
                        "query string contains '{other}'"
                    )))
                }
            }
        }
        BalanceQuery::new(plus, minus)
    }
}

/// Even-weight mask for the inner-product oracle.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParityQuery {
    mask: BitWord,
}

impl ParityQuery {
    pub fn new(mask: BitWord) -> Result<Self> {
        let w = mask.weight();
        if w % 2 == 1 {
            return Err(QcoinError::ParityRestriction(w));
        }
        Ok(ParityQuery { mask })
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::new(s.parse()?)
    }

    pub fn mask(&self) -> &BitWord {
        &self.mask
    }

    pub fn weight(&self) -> usize {
        self.mask.weight()
    }
}

/// Split of an even index set into a left half and the rest.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    base: BitWord,
    left: BitWord,
}

impl Partition {
    pub fn new(base: BitWord, left: BitWord) -> Result<Self> {
        if base.weight() % 2 == 1 {
            return Err(QcoinError::ParityRestriction(base.weight()));
        }
        if left.and_not(&base).weight() != 0 || 2 * left.weight() != base.weight() {
            return Err(QcoinError::Domain(
                "left must be a half-size subset of base".into(),
            ));
        }
        Ok(Partition { base, left })
    }

    pub fn base(&self) -> &BitWord {
        &self.base
    }

    pub fn left(&self) -> &BitWord {
        &self.left
    }

    /// Left set on the +1 pan, remainder of base on the -1 pan.
    pub fn to_query(&self) -> BalanceQuery {
        BalanceQuery {
            plus: self.left.clone(),
            minus: self.base.and_not(&self.left),
        }
    }

    /// Every partition of `base`, left sets in increasing integer order (n <= 64).
    pub fn all_of(base: &BitWord) -> Vec<Partition> {
        let idx = base.ones_vec();
        let w = idx.len();
        assert!(w % 2 == 0);
        words_of_weight(w, w / 2)
            .into_iter()
            .map(|sel| {
                let left = BitWord::from_indices(base.len(), sel.ones_iter().map(|j| idx[j]));
                Partition {
                    base: base.clone(),
                    left,
                }
            })
            .collect()
    }
}

/// Authoritative count of oracle invocations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    #[serde(rename = "balance")]
    pub balance_queries: u64,
    #[serde(rename = "quasi")]
    pub quasi_queries: u64,
}

impl QueryLedger {
    pub fn balance(n: u64) -> Self {
        QueryLedger {
            balance_queries: n,
            quasi_queries: 0,
        }
    }

    pub fn quasi(n: u64) -> Self {
        QueryLedger {
            balance_queries: 0,
            quasi_queries: n,
        }
    }

    pub fn total(&self) -> u64 {
        self.balance_queries + self.quasi_queries
    }

    pub fn times(self, f: u64) -> Self {
        QueryLedger {
            balance_queries: self.balance_queries * f,
            quasi_queries: self.quasi_queries * f,
        }
    }
}

impl AddAssign for QueryLedger {
    fn add_assign(&mut self, rhs: Self) {
        self.balance_queries += rhs.balance_queries;
        self.quasi_queries += rhs.quasi_queries;
    }
}

impl std::ops::Add for QueryLedger {
    type Output = QueryLedger;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

fn check_len(n: usize, m: usize) -> Result<()> {
    if n != m {
        return Err(QcoinError::InvalidQuery(format!(
            "length mismatch: configuration has {n} coins, query has {m}"
        )));
    }
    Ok(())
}

/// Balance outcome on a raw word: true (tilted) iff sum q_i x_i != 0.
pub fn chi_word(x: &BitWord, q: &BalanceQuery) -> Result<bool> {
    check_len(x.len(), q.n())?;
    Ok(x.and_weight(&q.plus) != x.and_weight(&q.minus))
}

/// chi(x; q): 0 when balanced, 1 when tilted.
pub fn chi(x: &CoinConfig, q: &BalanceQuery) -> Result<u8> {
    Ok(chi_word(x.bits(), q)? as u8)
}

/// (-1)^chi(x; q).
pub fn b_oracle_phase(x: &CoinConfig, q: &BalanceQuery) -> Result<i8> {
    Ok(if chi(x, q)? == 0 { 1 } else { -1 })
}

/// (-1)^(qt . x).
pub fn ip_phase(x: &CoinConfig, qt: &ParityQuery) -> Result<i8> {
    ip_phase_word(x.bits(), qt.mask())
}

pub fn ip_phase_word(x: &BitWord, mask: &BitWord) -> Result<i8> {
    check_len(x.len(), mask.len())?;
    if mask.weight() % 2 == 1 {
        return Err(QcoinError::ParityRestriction(mask.weight()));
    }
    Ok(if x.dot_parity(mask) { -1 } else { 1 })
}

/// First half of I(qt) on the +1 pan, second half on the -1 pan.
pub fn split_parity_query(qt: &ParityQuery) -> BalanceQuery {
    split_mask(qt.mask())
}

fn split_mask(mask: &BitWord) -> BalanceQuery {
    let idx = mask.ones_vec();
    let half = idx.len() / 2;
    let n = mask.len();
    BalanceQuery {
        plus: BitWord::from_indices(n, idx[..half].iter().copied()),
        minus: BitWord::from_indices(n, idx[half..].iter().copied()),
    }
}

/// Probability that the quasi B-oracle reports "balanced".
pub fn quasi_prob_balanced(x: &CoinConfig, q_mask: &BitWord) -> Result<f64> {
    check_len(x.n(), q_mask.len())?;
    Ok(quasi_prob_for_overlap(x.bits().and_weight(q_mask)))
}

/// Pr[zeta = 0] as a function of m = wt(x AND q).
pub fn quasi_prob_for_overlap(m: usize) -> f64 {
    if m == 0 {
        1.0
    } else if m % 2 == 1 {
        0.0
    } else {
        (1.0 / m as f64).sqrt()
    }
}

/// Basis label of the quasi-oracle register triple (q, a, z).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuasiLabel {
    pub q: BitWord,
    pub a: bool,
    pub z: u64,
}

/// Applies the quasi oracle O~_x to a state over (q, a, z) labels.
pub fn quasi_oracle_apply(
    x: &CoinConfig,
    state: &crate::simulate::PureState<QuasiLabel>,
) -> Result<crate::simulate::PureState<QuasiLabel>> {
    use num_complex::Complex64;
    state.require_normalized(1e-10)?;
    let mut out = crate::simulate::PureState::empty();
    for (label, amp) in state.iter() {
        let p0 = quasi_prob_balanced(x, &label.q)?;
        let p1 = 1.0 - p0;
        let sign = if label.a { -1.0 } else { 1.0 };
        out.add(label.clone(), amp * Complex64::new(p0.sqrt(), 0.0));
        let flipped = QuasiLabel {
            q: label.q.clone(),
            a: !label.a,
            z: label.z,
        };
        out.add(flipped, amp * Complex64::new(sign * p1.sqrt(), 0.0));
    }
    out.prune(0.0);
    Ok(out)
}

/// Big-pan replacement of an IP query by two padded masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BigPanSplit {
    /// q1 XOR b and q2 XOR b.
    pub masks: [BitWord; 2],
    /// The padded masks converted by the first-half rule.
    pub queries: [BalanceQuery; 2],
    /// Target total pan weight T (floor(n/2), minus one when odd).
    pub target: usize,
}

/// Replaces an IP query by two queries with about n/2 coins on the pans.
pub fn bigpan_split(qt: &ParityQuery) -> Result<BigPanSplit> {
    let mask = qt.mask();
    let n = mask.len();
    let l = mask.weight();
    let mut t = n / 2;
    if t % 2 == 1 {
        t -= 1;
    }
    let half = l / 2;
    if half > t {
        return Err(QcoinError::InfeasibleSplit(format!(
            "mask weight {l} needs half {half} > target pan total {t}"
        )));
    }
    let idx = mask.ones_vec();
    let q1 = BitWord::from_indices(n, idx[..half].iter().copied());
    let q2 = BitWord::from_indices(n, idx[half..].iter().copied());
    let filler: Vec<usize> = (0..n).filter(|&i| !mask.get(i)).take(t - half).collect();
    if filler.len() != t - half {
        return Err(QcoinError::InfeasibleSplit(format!(
            "only {} coins outside the mask, {} needed",
            filler.len(),
            t - half
        )));
    }
    let b = BitWord::from_indices(n, filler);
    let m1 = q1.xor(&b);
    let m2 = q2.xor(&b);
    let queries = [split_mask(&m1), split_mask(&m2)];
    Ok(BigPanSplit {
        masks: [m1, m2],
        queries,
        target: t,
    })
}

/// Balance-scale oracle handle. Each call is one oracle invocation, however
/// many superposed queries it carries.
pub trait BalanceOracle: Send + Sync {
    fn n(&self) -> usize;
    /// Tilt flags (chi = 1) for every query of one superposed invocation.
    fn weigh(&self, queries: &[BalanceQuery]) -> Result<Vec<bool>>;
    fn ledger(&self) -> QueryLedger;

    /// A single classical weighing.
    fn weigh_one(&self, q: &BalanceQuery) -> Result<bool> {
        Ok(self.weigh(std::slice::from_ref(q))?[0])
    }
}

/// Quasi B-oracle handle.
pub trait QuasiOracle: Send + Sync {
    fn n(&self) -> usize;
    /// Pr[zeta = 0] for every mask of one superposed invocation.
    fn balanced_probs(&self, masks: &[BitWord]) -> Result<Vec<f64>>;
    fn ledger(&self) -> QueryLedger;
}

const PAR_THRESHOLD: usize = 2048;

/// Instrumented oracle around a hidden configuration.
#[derive(Debug)]
pub struct HiddenCoins {
    x: CoinConfig,
    balance_calls: AtomicU64,
    quasi_calls: AtomicU64,
}

impl HiddenCoins {
    pub fn new(x: CoinConfig) -> Self {
        HiddenCoins {
            x,
            balance_calls: AtomicU64::new(0),
            quasi_calls: AtomicU64::new(0),
        }
    }

    /// Ground truth for harness code that scores reports.
    pub fn reveal(&self) -> &CoinConfig {
        &self.x
    }
}

impl BalanceOracle for HiddenCoins {
    fn n(&self) -> usize {
        self.x.n()
    }

    fn weigh(&self, queries: &[BalanceQuery]) -> Result<Vec<bool>> {
        self.balance_calls.fetch_add(1, Ordering::SeqCst);
        let x = self.x.bits();
        if queries.len() >= PAR_THRESHOLD {
            queries.par_iter().map(|q| chi_word(x, q)).collect()
        } else {
            queries.iter().map(|q| chi_word(x, q)).collect()
        }
    }

    fn ledger(&self) -> QueryLedger {
        QueryLedger {
            balance_queries: self.balance_calls.load(Ordering::SeqCst),
            quasi_queries: self.quasi_calls.load(Ordering::SeqCst),
        }
    }
}

impl QuasiOracle for HiddenCoins {
    fn n(&self) -> usize {
        self.x.n()
    }

    fn balanced_probs(&self, masks: &[BitWord]) -> Result<Vec<f64>> {
        self.quasi_calls.fetch_add(1, Ordering::SeqCst);
        masks.iter().map(|m| quasi_prob_balanced(&self.x, m)).collect()
    }

    fn ledger(&self) -> QueryLedger {
        BalanceOracle::ledger(self)
    }
}
