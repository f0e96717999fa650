//! Sparse states, the W transform, branch classes and the simulation engines.

mod findstar;
mod program;
mod quasi;

pub use findstar::{
    find_star_state, simulate_branch_class, simulate_find_star_classes, simulate_find_star_full,
    BranchOutcome, ClassRun, FullRun,
    ReducedFinalState, DEFAULT_FULL_CAP,
};
pub use program::{program_for, BranchOp};
pub use quasi::{quasi_state, simulate_quasi_classes, simulate_quasi_full, QuasiClassRun, QuasiFullRun};

use crate::coinmodel::BitWord;
use crate::error::{QcoinError, Result};
use crate::numeric::{binom, binom_row, pow2, ratio};
use num_bigint::BigUint;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// Sparse amplitude map over ordered basis labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<L: Ord> {
    amps: BTreeMap<L, Complex64>,
}

impl<L: Ord + Clone> PureState<L> {
    pub fn empty() -> Self {
        PureState {
            amps: BTreeMap::new(),
        }
    }

    pub fn basis(label: L) -> Self {
        let mut s = Self::empty();
        s.amps.insert(label, Complex64::new(1.0, 0.0));
        s
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (L, Complex64)>) -> Self {
        let mut s = Self::empty();
        for (l, a) in pairs {
            s.add(l, a);
        }
        s
    }

    /// Adds `amp` to the amplitude of `label`.
    pub fn add(&mut self, label: L, amp: Complex64) {
        *self.amps.entry(label).or_insert(Complex64::new(0.0, 0.0)) += amp;
    }

    pub fn amplitude(&self, label: &L) -> Complex64 {
        self.amps
            .get(label)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&L, &Complex64)> {
        self.amps.iter()
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for a in self.amps.values_mut() {
                *a /= n;
            }
        }
    }

    pub fn require_normalized(&self, tol: f64) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > tol {
            return Err(QcoinError::Precondition(format!(
                "state norm^2 is {n}, expected 1"
            )));
        }
        Ok(())
    }

    /// Drops amplitudes whose modulus is at most `tol`.
    pub fn prune(&mut self, tol: f64) {
        self.amps.retain(|_, a| a.norm() > tol);
    }

    pub fn inner(&self, other: &PureState<L>) -> Complex64 {
        self.amps
            .iter()
            .map(|(l, a)| a.conj() * other.amplitude(l))
            .sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        PureState {
            amps: self.amps.iter().map(|(l, a)| (l.clone(), a * c)).collect(),
        }
    }

    pub fn plus(&self, other: &PureState<L>) -> Self {
        let mut out = self.clone();
        for (l, a) in other.iter() {
            out.add(l.clone(), *a);
        }
        out
    }

    /// Born-rule marginal of a register projection.
    pub fn marginal<R: Ord>(&self, proj: impl Fn(&L) -> R) -> BTreeMap<R, f64> {
        let mut out = BTreeMap::new();
        for (l, a) in &self.amps {
            *out.entry(proj(l)).or_insert(0.0) += a.norm_sqr();
        }
        out
    }

    pub fn max_abs_diff(&self, other: &PureState<L>) -> f64 {
        let mut m = 0.0f64;
        for (l, a) in &self.amps {
            m = m.max((a - other.amplitude(l)).norm());
        }
        for (l, a) in &other.amps {
            m = m.max((a - self.amplitude(l)).norm());
        }
        m
    }
}

/// Samples a register value per the Born rule; deterministic in `seed`.
pub fn measure<L: Ord + Clone, R: Ord + Clone>(
    state: &PureState<L>,
    proj: impl Fn(&L) -> R,
    seed: u64,
) -> Result<R> {
    state.require_normalized(1e-9)?;
    sample_distribution(&state.marginal(proj), seed)
}

/// Samples from an ordered discrete distribution with a ChaCha stream.
pub fn sample_distribution<R: Ord + Clone>(dist: &BTreeMap<R, f64>, seed: u64) -> Result<R> {
    let total: f64 = dist.values().sum();
    if dist.is_empty() || total <= 0.0 {
        return Err(QcoinError::Precondition("empty distribution".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (r, p) in dist {
        acc += p;
        last = Some(r);
        if u < acc {
            return Ok(r.clone());
        }
    }
    Ok(last.expect("non-empty").clone())
}

/// Membership in S_lh: weight below n/2, or exactly n/2 with coin 1 fair.
pub fn in_s_lh(x: &BitWord) -> bool {
    let n = x.len();
    let w = x.weight();
    2 * w < n || (2 * w == n && !x.get(0))
}

const MAX_DENSE_QUBITS: usize = 24;

fn register_len<L>(state: &PureState<L>, key: impl Fn(&L) -> &BitWord) -> Result<usize>
where
    L: Ord + Clone,
{
    let mut n = None;
    for (l, _) in state.iter() {
        let len = key(l).len();
        match n {
            None => n = Some(len),
            Some(m) if m != len => {
                return Err(QcoinError::Domain("mixed register lengths".into()))
            }
            _ => {}
        }
    }
    n.ok_or_else(|| QcoinError::Precondition("empty state".into()))
}

/// In-place unnormalized Walsh-Hadamard transform of a dense vector.
pub fn fwht(v: &mut [Complex64]) {
    let len = v.len();
    let mut h = 1;
    while h < len {
        for i in (0..len).step_by(2 * h) {
            for j in i..i + h {
                let a = v[j];
                let b = v[j + h];
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// H on every qubit of an n-bit register, per ancilla value.
fn hadamard_register(state: &PureState<(BitWord, bool)>, n: usize) -> Result<PureState<(BitWord, bool)>> {
    if n > MAX_DENSE_QUBITS {
        return Err(QcoinError::Resource(format!(
            "Hadamard on {n} qubits exceeds the dense limit {MAX_DENSE_QUBITS}"
        )));
    }
    let mut out = PureState::empty();
    let scale = (0.5f64).powf(n as f64 / 2.0);
    for anc in [false, true] {
        let mut dense = vec![Complex64::new(0.0, 0.0); 1usize << n];
        let mut any = false;
        for ((s, a), amp) in state.iter() {
            if *a == anc {
                dense[s.as_u64() as usize] += amp;
                any = true;
            }
        }
        if !any {
            continue;
        }
        fwht(&mut dense);
        for (i, a) in dense.into_iter().enumerate() {
            if a.norm() > 1e-15 {
                out.add((BitWord::from_u64(n, i as u64), anc), a * scale);
            }
        }
    }
    Ok(out)
}

fn hadamard_ancilla(state: &PureState<(BitWord, bool)>) -> PureState<(BitWord, bool)> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = PureState::empty();
    for ((s, a), amp) in state.iter() {
        out.add((s.clone(), false), amp * r);
        out.add((s.clone(), true), amp * if *a { -r } else { r });
    }
    out.prune(1e-15);
    out
}

fn controlled_flip(state: &PureState<(BitWord, bool)>) -> PureState<(BitWord, bool)> {
    PureState::from_pairs(state.iter().map(|((s, a), amp)| {
        let s2 = if *a { s.complement() } else { s.clone() };
        ((s2, *a), *amp)
    }))
}

fn mark_outside_lh(state: &PureState<(BitWord, bool)>) -> PureState<(BitWord, bool)> {
    PureState::from_pairs(
        state
            .iter()
            .map(|((s, a), amp)| ((s.clone(), *a ^ !in_s_lh(s)), *amp)),
    )
}

/// W|x> = |psi_x> via the ancilla construction, for states supported on S_lh.
pub fn w_transform(state: &PureState<BitWord>) -> Result<PureState<BitWord>> {
    let n = register_len(state, |l| l)?;
    if let Some((bad, _)) = state.iter().find(|(x, _)| !in_s_lh(x)) {
        return Err(QcoinError::Domain(format!("{bad} lies outside S_lh")));
    }
    let s0 = PureState::from_pairs(state.iter().map(|(x, a)| ((x.clone(), false), *a)));
    let s1 = hadamard_ancilla(&s0);
    let s2 = controlled_flip(&s1);
    let s3 = mark_outside_lh(&s2);
    let s4 = hadamard_register(&s3, n)?;
    drop_ancilla(s4)
}

/// Exact inverse of `w_transform` on its range (the even-weight span).
pub fn w_inverse(state: &PureState<BitWord>) -> Result<PureState<BitWord>> {
    let n = register_len(state, |l| l)?;
    let s0 = PureState::from_pairs(state.iter().map(|(x, a)| ((x.clone(), false), *a)));
    let s1 = hadamard_register(&s0, n)?;
    let s2 = mark_outside_lh(&s1);
    let s3 = controlled_flip(&s2);
    let s4 = hadamard_ancilla(&s3);
    drop_ancilla(s4)
}

fn drop_ancilla(state: PureState<(BitWord, bool)>) -> Result<PureState<BitWord>> {
    let scale = state.norm_sqr().max(1e-300);
    let stray: f64 = state
        .iter()
        .filter(|((_, a), _)| *a)
        .map(|(_, amp)| amp.norm_sqr())
        .sum();
    if stray / scale > 1e-20 && stray > 1e-24 {
        return Err(QcoinError::Domain(format!(
            "state leaves the range of W (ancilla residue {stray:e})"
        )));
    }
    let mut out = PureState::from_pairs(
        state
            .iter()
            .filter(|((_, a), _)| !*a)
            .map(|((s, _), amp)| (s.clone(), *amp)),
    );
    out.prune(1e-15);
    Ok(out)
}

/// |psi_x> evaluated directly from its defining sum.
pub fn psi_direct(x: &BitWord) -> PureState<BitWord> {
    let n = x.len();
    assert!(n <= MAX_DENSE_QUBITS);
    let g = (0.5f64).powf((n as f64 - 1.0) / 2.0);
    let mut out = PureState::empty();
    for q in 0u64..(1u64 << n) {
        if q.count_ones() % 2 == 0 {
            let qw = BitWord::from_u64(n, q);
            let sign = if qw.dot_parity(x) { -g } else { g };
            out.add(qw, Complex64::new(sign, 0.0));
        }
    }
    out
}

/// Hadamard on all qubits of a plain register state.
pub fn hadamard_all(state: &PureState<BitWord>) -> Result<PureState<BitWord>> {
    let n = register_len(state, |l| l)?;
    let s0 = PureState::from_pairs(state.iter().map(|(x, a)| ((x.clone(), false), *a)));
    drop_ancilla(hadamard_register(&s0, n)?)
}

/// Equivalence class (w, m) of even-weight masks sharing branch dynamics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BranchClass {
    pub w: usize,
    pub m: usize,
    #[serde(serialize_with = "ser_big")]
    pub count: BigUint,
}

fn ser_big<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// All classes (w even, m = false coins under the mask) with exact counts.
pub fn enumerate_classes(n: usize, k: usize) -> Result<Vec<BranchClass>> {
    if 2 * k >= n {
        return Err(QcoinError::Domain(format!("k = {k} must be < n/2 = {}", n as f64 / 2.0)));
    }
    let row_k = binom_row(k as u64);
    let row_f = binom_row((n - k) as u64);
    let mut out = Vec::new();
    for w in (0..=n).step_by(2) {
        let lo = w.saturating_sub(n - k);
        let hi = k.min(w);
        for m in lo..=hi {
            out.push(BranchClass {
                w,
                m,
                count: &row_k[m] * &row_f[w - m],
            });
        }
    }
    Ok(out)
}

/// Fraction of partitions of a w-set that balance when m of its coins are false.
pub fn partition_fraction(w: usize, m: usize) -> Result<f64> {
    if w % 2 == 1 || m > w {
        return Err(QcoinError::Domain(format!(
            "partition_fraction needs even w and m <= w, got ({w}, {m})"
        )));
    }
    if m % 2 == 1 {
        return Ok(0.0);
    }
    let num = binom(m as u64, (m / 2) as u64) * binom((w - m) as u64, ((w - m) / 2) as u64);
    Ok(ratio(&num, &binom(w as u64, (w / 2) as u64)))
}

/// C(j, j/2) / 2^j for even j up to `max`, by a stable recurrence.
pub(crate) fn central_table(max: usize) -> Vec<f64> {
    let mut h = vec![0.0; max + 1];
    h[0] = 1.0;
    let mut j = 0;
    while j + 2 <= max {
        let a = (j + 1) as f64 * (j + 2) as f64;
        let b = ((j / 2 + 1) as f64).powi(2) * 4.0;
        h[j + 2] = h[j] * a / b;
        j += 2;
    }
    h
}

/// count(w, m) / 2^(n-1) as doubles, indexed [m][w - m].
pub(crate) fn class_fractions(n: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let fk: Vec<f64> = binom_row(k as u64)
        .iter()
        .map(|c| ratio(c, &pow2(k as u64)))
        .collect();
    let denom = pow2((n - k - 1) as u64);
    let gf: Vec<f64> = binom_row((n - k) as u64)
        .iter()
        .map(|c| ratio(c, &denom))
        .collect();
    (fk, gf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> BitWord {
        s.parse().unwrap()
    }

    #[test]
    fn w_transform_examples_n3() {
        let out = w_transform(&PureState::basis(w("001"))).unwrap();
        for (q, expect) in [("000", 0.5), ("011", -0.5), ("101", -0.5), ("110", 0.5)] {
            assert!((out.amplitude(&w(q)).re - expect).abs() < 1e-12, "{q}");
        }
        assert_eq!(out.len(), 4);
        let zero = w_transform(&PureState::basis(w("000"))).unwrap();
        for q in ["000", "011", "101", "110"] {
            assert!((zero.amplitude(&w(q)).re - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn w_rejects_outside_s_lh() {
        assert!(w_transform(&PureState::basis(w("011"))).is_err());
        assert!(w_transform(&PureState::basis(w("1100"))).is_err());
        assert!(w_transform(&PureState::basis(w("0110"))).is_ok());
    }

    #[test]
    fn inverse_of_direct_formula() {
        let psi = psi_direct(&w("0001"));
        let back = w_inverse(&psi).unwrap();
        assert!((back.amplitude(&w("0001")).re - 1.0).abs() < 1e-12);
        assert!((back.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roundtrip_all_s_lh_up_to_8() {
        for n in 1..=8usize {
            for b in 0u64..(1 << n) {
                let x = BitWord::from_u64(n, b);
                if !in_s_lh(&x) {
                    continue;
                }
                let fwd = w_transform(&PureState::basis(x.clone())).unwrap();
                assert!(fwd.max_abs_diff(&psi_direct(&x)) < 1e-12);
                let back = w_inverse(&fwd).unwrap();
                assert!(back.max_abs_diff(&PureState::basis(x.clone())) < 1e-12);
            }
        }
    }

    #[test]
    fn linearity_on_superposition() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let a = w("00010");
        let b = w("01100");
        let sup = psi_direct(&a).plus(&psi_direct(&b)).scaled(Complex64::new(r, 0.0));
        let back = w_inverse(&sup).unwrap();
        let expect = PureState::from_pairs([(a, Complex64::new(r, 0.0)), (b, Complex64::new(r, 0.0))]);
        assert!(back.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn s_lh_has_half_the_words() {
        for n in 1..=12usize {
            let c = (0u64..(1 << n)).filter(|&b| in_s_lh(&BitWord::from_u64(n, b))).count();
            assert_eq!(c, 1 << (n - 1));
            for b in 0u64..(1 << n) {
                let x = BitWord::from_u64(n, b);
                assert_ne!(in_s_lh(&x), in_s_lh(&x.complement()), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn class_examples() {
        let cl = enumerate_classes(4, 1).unwrap();
        let got: Vec<(usize, usize, u32)> = cl
            .iter()
            .map(|c| (c.w, c.m, c.count.to_string().parse().unwrap()))
            .collect();
        assert_eq!(got, vec![(0, 0, 1), (2, 0, 3), (2, 1, 3), (4, 1, 1)]);
        let cl2 = enumerate_classes(2, 0).unwrap();
        assert_eq!(cl2.len(), 2);
        assert!(enumerate_classes(4, 2).is_err());
    }

    #[test]
    fn class_counts_match_enumeration() {
        for n in 1..=12usize {
            for k in 0..n.div_ceil(2) {
                if 2 * k >= n {
                    continue;
                }
                let x = BitWord::from_u64(n, (1u64 << k) - 1);
                let mut tally: BTreeMap<(usize, usize), u64> = BTreeMap::new();
                for q in 0u64..(1 << n) {
                    if q.count_ones() % 2 == 0 {
                        let qw = BitWord::from_u64(n, q);
                        *tally.entry((qw.weight(), qw.and_weight(&x))).or_default() += 1;
                    }
                }
                let cl = enumerate_classes(n, k).unwrap();
                let mut total = BigUint::from(0u32);
                for c in &cl {
                    total += &c.count;
                    let t = tally.get(&(c.w, c.m)).copied().unwrap_or(0);
                    assert_eq!(c.count, BigUint::from(t), "n={n} k={k} w={} m={}", c.w, c.m);
                }
                assert_eq!(total, pow2((n - 1) as u64));
                assert_eq!(cl.iter().filter(|c| c.count > BigUint::from(0u32)).count(), tally.len());
            }
        }
    }

    #[test]
    fn partition_fraction_examples() {
        assert!((partition_fraction(4, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        for wv in [0, 2, 8, 40] {
            assert_eq!(partition_fraction(wv, 0).unwrap(), 1.0);
        }
        assert_eq!(partition_fraction(6, 3).unwrap(), 0.0);
        assert!(partition_fraction(5, 2).is_err());
    }

    #[test]
    fn partition_fraction_by_enumeration() {
        use crate::coinmodel::{chi_word, Partition};
        for wv in (2..=10usize).step_by(2) {
            for m in 0..=wv {
                let base = BitWord::ones(wv);
                let x = BitWord::from_u64(wv, (1u64 << m) - 1);
                let parts = Partition::all_of(&base);
                let bal = parts.iter().filter(|p| !chi_word(&x, &p.to_query()).unwrap()).count();
                let f = bal as f64 / parts.len() as f64;
                assert!((f - partition_fraction(wv, m).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn central_table_matches_exact() {
        let h = central_table(200);
        for wv in (0..=200usize).step_by(2) {
            for m in (0..=wv).step_by(2) {
                let approx = h[m] * h[wv - m] / h[wv];
                let exact = partition_fraction(wv, m).unwrap();
                assert!((approx - exact).abs() < 1e-13 * exact.max(1e-300) + 1e-300);
            }
        }
    }

    #[test]
    fn measure_examples() {
        let s = PureState::basis(w("0010"));
        for seed in 0..20 {
            assert_eq!(measure(&s, |l| l.clone(), seed).unwrap(), w("0010"));
        }
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureState::from_pairs([(w("00"), Complex64::new(r, 0.0)), (w("11"), Complex64::new(r, 0.0))]);
        let hits = (0..100_000u64)
            .filter(|&s| measure(&bell, |l| l.clone(), s).unwrap() == w("00"))
            .count();
        let f = hits as f64 / 1e5;
        assert!((0.495..=0.505).contains(&f), "{f}");
        // marginal of a product state ignores the second register
        let prod = PureState::from_pairs([
            ((w("01"), 0u8), Complex64::new(0.6, 0.0)),
            ((w("01"), 1u8), Complex64::new(0.8, 0.0)),
        ]);
        let m = prod.marginal(|(r, _)| r.clone());
        assert_eq!(m.len(), 1);
        assert!((m[&w("01")] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn hadamard_w_gives_cat_state(n in 1usize..=10, seed in any::<u64>()) {
            let mut x = BitWord::from_u64(n, seed & ((1u64 << n) - 1));
            if !in_s_lh(&x) { x = x.complement(); }
            let hw = hadamard_all(&w_transform(&PureState::basis(x.clone())).unwrap()).unwrap();
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let expect = PureState::from_pairs([(x.clone(), Complex64::new(r, 0.0)), (x.complement(), Complex64::new(r, 0.0))]);
            prop_assert!(hw.max_abs_diff(&expect) < 1e-12);
        }

        #[test]
        fn w_preserves_norm(n in 2usize..=9, picks in proptest::collection::vec((any::<u64>(), -1.0f64..1.0), 1..6)) {
            let mut s = PureState::empty();
            for (b, a) in picks {
                let mut x = BitWord::from_u64(n, b & ((1u64 << n) - 1));
                if !in_s_lh(&x) { x = x.complement(); }
                s.add(x, Complex64::new(a, 0.0));
            }
            prop_assume!(s.norm_sqr() > 1e-6);
            s.normalize();
            let out = w_transform(&s).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
            prop_assert!(w_inverse(&out).unwrap().max_abs_diff(&s) < 1e-12);
        }
    }
}
