//! Classical verification that a candidate set is exactly the false-coin set.

use crate::coinmodel::{BalanceOracle, BalanceQuery, BitWord, QueryLedger};
use crate::error::{QcoinError, Result};
use std::sync::Mutex;

/// Verdict of a check run plus the weighings it made.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOutcome {
    pub verdict: bool,
    pub weighings: u64,
}

/// A way of verifying a candidate set of k false coins.
pub trait CheckStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    /// Whether the strategy accepts this (n, k).
    fn applicable(&self, n: usize, k: usize) -> Result<()>;
    /// Weighings made on every run for this (n, k).
    fn weighings(&self, n: usize, k: usize) -> Result<u64>;
    fn check(&self, x1: &[usize], oracle: &dyn BalanceOracle) -> Result<CheckOutcome>;
}

fn validate_candidate(n: usize, x1: &[usize]) -> Result<BitWord> {
    let k = x1.len();
    if 2 * k >= n {
        return Err(QcoinError::Domain(format!("candidate size {k} must be below n/2")));
    }
    let set = BitWord::from_indices(n, x1.iter().copied());
    if set.weight() != k || x1.iter().any(|&i| i >= n) {
        return Err(QcoinError::Domain("candidate indices must be distinct and < n".into()));
    }
    Ok(set)
}

/// Big-pan check: doubling comparisons of equal groups, each padded so that
/// about n/4 coins sit on every pan.
#[derive(Clone, Copy, Debug, Default)]
pub struct BigPanCheck;

impl CheckStrategy for BigPanCheck {
    fn name(&self) -> &'static str {
        "bigpan"
    }

    fn applicable(&self, n: usize, k: usize) -> Result<()> {
        if 2 * k >= n {
            return Err(QcoinError::Domain(format!("k = {k} must be below n/2")));
        }
        if !(k + 1).is_power_of_two() || (n - k) % (k + 1) != 0 {
            return Err(QcoinError::Domain(format!(
                "bigpan check needs k+1 a power of two dividing n-k (n={n}, k={k}); use simple_check"
            )));
        }
        Ok(())
    }

    fn weighings(&self, n: usize, k: usize) -> Result<u64> {
        self.applicable(n, k)?;
        Ok(2 * (k + 1).trailing_zeros() as u64)
    }

    fn check(&self, x1: &[usize], oracle: &dyn BalanceOracle) -> Result<CheckOutcome> {
        let n = oracle.n();
        let k = x1.len();
        self.applicable(n, k)?;
        let x1set = validate_candidate(n, x1)?;
        let rest: Vec<usize> = (0..n).filter(|&i| !x1set.get(i)).collect();
        let g = rest.len() / (k + 1);
        let group = |j: usize| &rest[j * g..(j + 1) * g];
        let quarter = n / 4;
        let mut left: Vec<usize> = group(0).to_vec();
        let mut right: Vec<usize> = group(1).to_vec();
        let mut ok = true;
        let mut weighings = 0;
        for i in 1..=(k + 1).trailing_zeros() {
            let pad = quarter.saturating_sub(left.len());
            let used = BitWord::from_indices(n, left.iter().chain(&right).copied()).or(&x1set);
            let free: Vec<usize> = (0..n).filter(|&c| !used.get(c)).take(2 * pad).collect();
            if free.len() < 2 * pad {
                return Err(QcoinError::InfeasibleSplit(format!(
                    "only {} filler coins for pads of {pad}",
                    free.len()
                )));
            }
            let (lp, rp) = free.split_at(pad);
            let cat = |a: &[usize], b: &[usize]| a.iter().chain(b).copied().collect::<Vec<_>>();
            let q1 = BalanceQuery::from_pans(n, &cat(&left, lp), &cat(&right, rp))?;
            let q2 = BalanceQuery::from_pans(n, &cat(&right, lp), &cat(&left, rp))?;
            ok &= !oracle.weigh_one(&q1)?;
            ok &= !oracle.weigh_one(&q2)?;
            weighings += 2;
            left.extend_from_slice(&right);
            let lo = 1usize << i;
            let hi = (1usize << (i + 1)).min(k + 1);
            right = (lo..hi).flat_map(|j| group(j).iter().copied()).collect();
        }
        Ok(CheckOutcome {
            verdict: ok,
            weighings,
        })
    }
}

/// Check with small pans and no divisibility requirement.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimpleCheck;

struct SimplePlan {
    groups: Vec<Vec<usize>>,
    leftover: Vec<usize>,
    doublings: u32,
}

impl SimpleCheck {
    fn plan(n: usize, x1set: &BitWord) -> SimplePlan {
        let k = x1set.weight();
        let rest: Vec<usize> = (0..n).filter(|&i| !x1set.get(i)).collect();
        let g = rest.len() / (k + 1);
        let groups = (0..=k).map(|j| rest[j * g..(j + 1) * g].to_vec()).collect();
        SimplePlan {
            groups,
            leftover: rest[(k + 1) * g..].to_vec(),
            doublings: (k + 1).ilog2(),
        }
    }

    fn count(n: usize, k: usize) -> u64 {
        let a = (k + 1).ilog2();
        let r = k + 1 - (1usize << a);
        let leftover = (n - k) % (k + 1);
        a as u64 + r.count_ones() as u64 + (leftover > 0) as u64
    }
}

impl CheckStrategy for SimpleCheck {
    fn name(&self) -> &'static str {
        "simple"
    }

    fn applicable(&self, n: usize, k: usize) -> Result<()> {
        if 2 * k >= n {
            return Err(QcoinError::Domain(format!("k = {k} must be below n/2")));
        }
        Ok(())
    }

    fn weighings(&self, n: usize, k: usize) -> Result<u64> {
        self.applicable(n, k)?;
        Ok(Self::count(n, k))
    }

    fn check(&self, x1: &[usize], oracle: &dyn BalanceOracle) -> Result<CheckOutcome> {
        let n = oracle.n();
        let x1set = validate_candidate(n, x1)?;
        let plan = Self::plan(n, &x1set);
        let span = |a: usize, b: usize| -> Vec<usize> {
            plan.groups[a..b].iter().flatten().copied().collect()
        };
        let mut queries = Vec::new();
        for i in 0..plan.doublings as usize {
            let h = 1usize << i;
            queries.push(BalanceQuery::from_pans(n, &span(0, h), &span(h, 2 * h))?);
        }
        let mut next = 1usize << plan.doublings;
        let r = plan.groups.len() - next;
        for b in (0..usize::BITS).rev() {
            let size = 1usize << b;
            if r & size != 0 {
                queries.push(BalanceQuery::from_pans(n, &span(0, size), &span(next, next + size))?);
                next += size;
            }
        }
        if !plan.leftover.is_empty() {
            let grouped = span(0, plan.groups.len());
            queries.push(BalanceQuery::from_pans(
                n,
                &plan.leftover,
                &grouped[..plan.leftover.len()],
            )?);
        }
        let mut ok = true;
        for q in &queries {
            ok &= !oracle.weigh_one(q)?;
        }
        Ok(CheckOutcome {
            verdict: ok,
            weighings: queries.len() as u64,
        })
    }
}

/// Name-indexed check strategies.
pub struct CheckRegistry {
    entries: Vec<Box<dyn CheckStrategy>>,
}

impl Default for CheckRegistry {
    fn default() -> Self {
        CheckRegistry {
            entries: vec![Box::new(BigPanCheck), Box::new(SimpleCheck)],
        }
    }
}

impl CheckRegistry {
    pub fn get(&self, name: &str) -> Result<&dyn CheckStrategy> {
        self.entries
            .iter()
            .find(|s| s.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| QcoinError::Config(format!("unknown check strategy '{name}'")))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }

    /// The big-pan check where it applies, otherwise the simple one.
    pub fn auto(&self, n: usize, k: usize) -> &dyn CheckStrategy {
        let big = self.get("bigpan").expect("registered");
        if big.applicable(n, k).is_ok() {
            big
        } else {
            self.get("simple").expect("registered")
        }
    }
}

/// Big-pan check; errors when the divisibility precondition fails.
pub fn check(x1: &[usize], oracle: &dyn BalanceOracle) -> Result<CheckOutcome> {
    BigPanCheck.check(x1, oracle)
}

pub fn simple_check(x1: &[usize], oracle: &dyn BalanceOracle) -> Result<CheckOutcome> {
    SimpleCheck.check(x1, oracle)
}

/// Oracle stand-in that records the queries a strategy makes and answers
/// from a fixed tape.
struct TapeOracle {
    n: usize,
    answers: Vec<bool>,
    seen: Mutex<Vec<BalanceQuery>>,
}

impl BalanceOracle for TapeOracle {
    fn n(&self) -> usize {
        self.n
    }

    fn weigh(&self, queries: &[BalanceQuery]) -> Result<Vec<bool>> {
        let mut seen = self.seen.lock().expect("tape lock");
        let mut out = Vec::with_capacity(queries.len());
        for q in queries {
            out.push(self.answers.get(seen.len()).copied().unwrap_or(false));
            seen.push(q.clone());
        }
        Ok(out)
    }

    fn ledger(&self) -> QueryLedger {
        QueryLedger::balance(self.seen.lock().expect("tape lock").len() as u64)
    }
}

/// Runs `strategy` on every candidate at once: weighing i of all candidates
/// is one oracle invocation, so the oracle sees exactly
/// `strategy.weighings(n, k)` calls. Candidates must all have size k.
pub fn superposed_check(
    strategy: &dyn CheckStrategy,
    k: usize,
    candidates: &[Vec<usize>],
    oracle: &dyn BalanceOracle,
) -> Result<Vec<bool>> {
    let n = oracle.n();
    let steps = strategy.weighings(n, k)? as usize;
    if let Some(c) = candidates.iter().find(|c| c.len() != k) {
        return Err(QcoinError::Domain(format!(
            "candidate of size {} in a superposed check for k = {k}",
            c.len()
        )));
    }
    let tapes: Vec<Vec<BalanceQuery>> = candidates
        .iter()
        .map(|c| {
            let tape = TapeOracle {
                n,
                answers: Vec::new(),
                seen: Mutex::new(Vec::new()),
            };
            strategy.check(c, &tape)?;
            Ok(tape.seen.into_inner().expect("tape lock"))
        })
        .collect::<Result<_>>()?;
    if tapes.iter().any(|t| t.len() != steps) {
        return Err(QcoinError::Precondition(format!(
            "strategy '{}' did not make {steps} weighings on every candidate",
            strategy.name()
        )));
    }
    let mut answers = vec![Vec::with_capacity(steps); candidates.len()];
    for i in 0..steps {
        let step: Vec<BalanceQuery> = tapes.iter().map(|t| t[i].clone()).collect();
        for (a, t) in answers.iter_mut().zip(oracle.weigh(&step)?) {
            a.push(t);
        }
    }
    candidates
        .iter()
        .zip(tapes)
        .zip(answers)
        .map(|((c, tape), answers)| {
            let replay = TapeOracle {
                n,
                answers,
                seen: Mutex::new(Vec::new()),
            };
            let out = strategy.check(c, &replay)?;
            if replay.seen.into_inner().expect("tape lock") != tape {
                return Err(QcoinError::Precondition(format!(
                    "strategy '{}' adapts its weighings to answers",
                    strategy.name()
                )));
            }
            Ok(out.verdict)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coinmodel::{words_of_weight, CoinConfig, HiddenCoins};

    fn sweep(n: usize, k: usize, strat: &dyn CheckStrategy) {
        let words = words_of_weight(n, k);
        for truth in &words {
            let oracle = HiddenCoins::new(CoinConfig::new(truth.clone()).unwrap());
            for cand in &words {
                let before = oracle.ledger().balance_queries;
                let out = strat.check(&cand.ones_vec(), &oracle).unwrap();
                assert_eq!(out.verdict, cand == truth, "{} n={n} truth={truth} cand={cand}", strat.name());
                assert_eq!(oracle.ledger().balance_queries - before, out.weighings);
                assert_eq!(out.weighings, strat.weighings(n, k).unwrap());
            }
        }
    }

    #[test]
    fn superposed_check_matches_sequential() {
        for (n, k, strat) in [(11, 3, &BigPanCheck as &dyn CheckStrategy), (10, 3, &SimpleCheck)] {
            let words = words_of_weight(n, k);
            let cands: Vec<Vec<usize>> = words.iter().map(|w| w.ones_vec()).collect();
            let truth = &words[17];
            let oracle = HiddenCoins::new(CoinConfig::new(truth.clone()).unwrap());
            let verdicts = superposed_check(strat, k, &cands, &oracle).unwrap();
            assert_eq!(oracle.ledger().balance_queries, strat.weighings(n, k).unwrap());
            for (w, v) in words.iter().zip(verdicts) {
                assert_eq!(v, w == truth);
            }
        }
    }

    #[test]
    fn bigpan_exhaustive() {
        sweep(9, 1, &BigPanCheck);
        sweep(11, 3, &BigPanCheck);
        assert_eq!(BigPanCheck.weighings(11, 3).unwrap(), 4);
        assert_eq!(BigPanCheck.weighings(9, 1).unwrap(), 2);
    }

    #[test]
    fn simple_exhaustive() {
        for (n, k) in [(7, 2), (9, 1), (11, 3), (10, 4), (12, 5), (8, 3)] {
            sweep(n, k, &SimpleCheck);
        }
        assert!(SimpleCheck.weighings(5, 1).unwrap() <= 2);
    }

    #[test]
    fn bigpan_examples() {
        let oracle = HiddenCoins::new(CoinConfig::parse("000000001").unwrap());
        let yes = check(&[8], &oracle).unwrap();
        assert!(yes.verdict);
        assert_eq!(yes.weighings, 2);
        assert!(!check(&[0], &oracle).unwrap().verdict);
        let bad = HiddenCoins::new(CoinConfig::parse("1100000000").unwrap());
        assert!(matches!(check(&[0, 1], &bad), Err(QcoinError::Domain(_))));
    }

    #[test]
    fn bigpan_pans_are_about_a_quarter() {
        let n = 35;
        let oracle = HiddenCoins::new(CoinConfig::from_false_coins(n, [1, 2, 3]).unwrap());
        struct Spy<'a>(&'a HiddenCoins, std::sync::Mutex<Vec<usize>>);
        impl BalanceOracle for Spy<'_> {
            fn n(&self) -> usize {
                self.0.n()
            }
            fn weigh(&self, q: &[BalanceQuery]) -> Result<Vec<bool>> {
                self.1.lock().unwrap().extend(q.iter().map(|q| q.l()));
                self.0.weigh(q)
            }
            fn ledger(&self) -> crate::coinmodel::QueryLedger {
                self.0.ledger()
            }
        }
        let spy = Spy(&oracle, Default::default());
        assert!(check(&[1, 2, 3], &spy).unwrap().verdict);
        for l in spy.1.lock().unwrap().iter() {
            assert!(*l >= n / 4, "pan size {l}");
        }
    }
}
