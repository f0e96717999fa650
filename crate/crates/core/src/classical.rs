//! Classical weighing strategies and exhaustive decision-tree search.

use crate::coinmodel::{
    balance_queries, chi_word, words_of_weight, BalanceOracle, BalanceQuery, BitWord, CoinConfig,
};
use crate::error::{QcoinError, Result};
use crate::numeric::ceil_log2;
use std::collections::HashMap;

/// Distinct codewords below 2^ceil(log2 n), one per coin, with an even
/// nonzero number of ones in bit 0 and fewer than n.
///
/// Bit j says whether the coin sits on the scale in weighing j. All columns
/// are made even when possible; otherwise odd columns borrow a coin that the
/// first weighing proved genuine.
pub fn k1_codewords(n: usize) -> Result<Vec<u64>> {
    if n < 3 {
        return Err(QcoinError::Domain(format!(
            "one false coin among {n} coins violates k < n/2"
        )));
    }
    let bits = ceil_log2(n as u64);
    let mut codes: Vec<u64> = (0..n as u64).collect();
    let s = codes.iter().fold(0, |a, c| a ^ c);
    if s != 0 {
        let limit = 1u64 << bits;
        if let Some(pos) = codes.iter().position(|&c| {
            let r = c ^ s;
            r < limit && r >= n as u64
        }) {
            codes[pos] ^= s;
            return Ok(codes);
        }
    }
    let column = |j: u32| codes.iter().filter(|&&c| c >> j & 1 == 1).count();
    let j = (0..bits)
        .find(|&j| {
            let w = column(j);
            w > 0 && w < n && w % 2 == 0
        })
        .ok_or_else(|| QcoinError::InfeasibleSplit(format!("no even first weighing for n = {n}")))?;
    if j != 0 {
        for c in codes.iter_mut() {
            let (b0, bj) = (*c & 1, *c >> j & 1);
            *c = (*c & !(1 | 1 << j)) | bj | b0 << j;
        }
    }
    Ok(codes)
}

/// Weighing j of `classical_k1`; `filler` is a known-genuine coin added when
/// the column has odd weight.
fn k1_weighing(n: usize, codes: &[u64], j: u32, filler: Option<usize>) -> Result<BalanceQuery> {
    let mut on: Vec<usize> = (0..n).filter(|&i| codes[i] >> j & 1 == 1).collect();
    if on.len() % 2 == 1 {
        let f = filler.ok_or_else(|| {
            QcoinError::InfeasibleSplit(format!("weighing {j} has odd size and no genuine coin"))
        })?;
        on.push(f);
    }
    let (l, r) = on.split_at(on.len() / 2);
    BalanceQuery::from_pans(n, l, r)
}

/// Finds the single false coin with exactly ceil(log2 n) weighings; the tilt
/// pattern spells the false coin's codeword.
pub fn classical_k1(oracle: &dyn BalanceOracle) -> Result<CoinConfig> {
    let n = oracle.n();
    let codes = k1_codewords(n)?;
    let mut pattern = 0u64;
    let mut filler = None;
    for j in 0..ceil_log2(n as u64) {
        let tilted = oracle.weigh_one(&k1_weighing(n, &codes, j, filler)?)?;
        if tilted {
            pattern |= 1 << j;
        }
        if j == 0 {
            filler = (0..n).find(|&i| (codes[i] & 1 == 1) != tilted);
        }
    }
    let coin = codes.iter().position(|&c| c == pattern).ok_or_else(|| {
        QcoinError::Precondition(format!(
            "tilt pattern {pattern:b} matches no coin; the input is not a single false coin"
        ))
    })?;
    CoinConfig::from_false_coins(n, [coin])
}

struct GroupTester<'a> {
    oracle: &'a dyn BalanceOracle,
    n: usize,
    pool: Vec<usize>,
}

impl GroupTester<'_> {
    /// True when `group` contains a false coin; needs |group| <= |pool|.
    fn dirty(&self, group: &[usize]) -> Result<bool> {
        let q = BalanceQuery::from_pans(self.n, group, &self.pool[..group.len()])?;
        self.oracle.weigh_one(&q)
    }

    /// Locates one false coin inside a group known to hold one.
    fn isolate(&mut self, mut group: Vec<usize>) -> Result<usize> {
        while group.len() > 1 {
            let rest = group.split_off(group.len() / 2);
            if !self.dirty(&group)? {
                self.pool.extend_from_slice(&group);
                group = rest;
            }
        }
        Ok(group[0])
    }
}

/// Adaptive solver for general k: a majority vote finds a fair reference
/// coin, then binary-splitting group tests against the growing fair pool.
pub fn classical_general(k: usize, oracle: &dyn BalanceOracle) -> Result<CoinConfig> {
    let n = oracle.n();
    if 2 * k >= n {
        return Err(QcoinError::Domain(format!("k = {k} must be below n/2")));
    }
    if k == 0 {
        return CoinConfig::from_false_coins(n, []);
    }
    if k == 1 {
        return classical_k1(oracle);
    }
    let mut cand = 0usize;
    let mut count = 1usize;
    for c in 1..=2 * k {
        if count == 0 {
            cand = c;
            count = 1;
        } else if oracle.weigh_one(&BalanceQuery::from_pans(n, &[cand], &[c])?)? {
            count -= 1;
        } else {
            count += 1;
        }
    }
    let mut tester = GroupTester {
        oracle,
        n,
        pool: vec![cand],
    };
    let mut unknown: Vec<usize> = (0..n).filter(|&c| c != cand).collect();
    let mut found = Vec::new();
    while found.len() < k {
        let left = k - found.len();
        if unknown.len() == left {
            found.append(&mut unknown);
            break;
        }
        let alpha = if unknown.len() <= 2 * left - 2 {
            0
        } else {
            ((unknown.len() - left + 1) / left).ilog2()
        };
        let size = (1usize << alpha).min(tester.pool.len()).min(unknown.len());
        let group: Vec<usize> = unknown.drain(..size).collect();
        if tester.dirty(&group)? {
            let coin = tester.isolate(group.clone())?;
            found.push(coin);
            // coins of the group after the false one are still unknown
            let tail: Vec<usize> = group
                .into_iter()
                .filter(|c| *c != coin && !tester.pool.contains(c))
                .collect();
            unknown.splice(0..0, tail);
        } else {
            tester.pool.extend_from_slice(&group);
        }
    }
    CoinConfig::from_false_coins(n, found)
}

/// Weighing tree whose leaves name the identified configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum DecisionTree {
    Leaf(Option<CoinConfig>),
    Node {
        query: BalanceQuery,
        balanced: Box<DecisionTree>,
        tilted: Box<DecisionTree>,
    },
}

impl DecisionTree {
    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 0,
            DecisionTree::Node {
                balanced, tilted, ..
            } => 1 + balanced.depth().max(tilted.depth()),
        }
    }

    pub fn classify(&self, x: &CoinConfig) -> Result<Option<CoinConfig>> {
        match self {
            DecisionTree::Leaf(v) => Ok(v.clone()),
            DecisionTree::Node {
                query,
                balanced,
                tilted,
            } => {
                if chi_word(x.bits(), query)? {
                    tilted.classify(x)
                } else {
                    balanced.classify(x)
                }
            }
        }
    }
}

/// Largest n accepted by the exhaustive tree search.
pub const TREE_SEARCH_CAP: usize = 6;

fn distinct_queries(n: usize) -> Vec<BalanceQuery> {
    (1..=n / 2).flat_map(|l| balance_queries(n, l)).collect()
}

struct TreeSearch {
    configs: Vec<BitWord>,
    splits: Vec<(BalanceQuery, u32)>,
    memo: HashMap<u32, usize>,
}

impl TreeSearch {
    fn new(n: usize, k: usize) -> Self {
        let configs = words_of_weight(n, k);
        let mut splits: Vec<(BalanceQuery, u32)> = distinct_queries(n)
            .into_iter()
            .map(|q| {
                let mask = configs
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| chi_word(x, &q).expect("same length"))
                    .fold(0u32, |m, (i, _)| m | 1 << i);
                (q, mask)
            })
            .collect();
        let mut seen = std::collections::HashSet::new();
        splits.retain(|(_, m)| seen.insert(*m));
        TreeSearch {
            configs,
            splits,
            memo: HashMap::new(),
        }
    }

    fn depth(&mut self, set: u32) -> usize {
        let size = set.count_ones();
        if size <= 1 {
            return 0;
        }
        if let Some(&d) = self.memo.get(&set) {
            return d;
        }
        let floor = ceil_log2(size as u64) as usize;
        let mut best = usize::MAX;
        for i in 0..self.splits.len() {
            let t = self.splits[i].1 & set;
            if t == 0 || t == set {
                continue;
            }
            let d = 1 + self.depth(t).max(self.depth(set & !t));
            best = best.min(d);
            if best == floor {
                break;
            }
        }
        self.memo.insert(set, best);
        best
    }

    fn build(&mut self, set: u32) -> DecisionTree {
        if set.count_ones() <= 1 {
            let leaf = (set != 0).then(|| {
                CoinConfig::new(self.configs[set.trailing_zeros() as usize].clone())
                    .expect("weight below n/2")
            });
            return DecisionTree::Leaf(leaf);
        }
        let target = self.depth(set);
        for i in 0..self.splits.len() {
            let t = self.splits[i].1 & set;
            if t == 0 || t == set {
                continue;
            }
            if 1 + self.depth(t).max(self.depth(set & !t)) == target {
                let query = self.splits[i].0.clone();
                return DecisionTree::Node {
                    query,
                    balanced: Box::new(self.build(set & !t)),
                    tilted: Box::new(self.build(t)),
                };
            }
        }
        unreachable!("an optimal split exists")
    }
}

fn tree_search(n: usize, k: usize) -> Result<(TreeSearch, u32)> {
    if n > TREE_SEARCH_CAP {
        return Err(QcoinError::Resource(format!(
            "exhaustive tree search is capped at n = {TREE_SEARCH_CAP}"
        )));
    }
    if 2 * k >= n {
        return Err(QcoinError::Domain(format!("k = {k} must be below n/2")));
    }
    let ts = TreeSearch::new(n, k);
    let full = if ts.configs.len() == 32 {
        u32::MAX
    } else {
        (1u32 << ts.configs.len()) - 1
    };
    Ok((ts, full))
}

/// Exact minimum worst-case number of weighings identifying every weight-k word.
pub fn min_decision_tree_depth(n: usize, k: usize) -> Result<usize> {
    let (mut ts, full) = tree_search(n, k)?;
    Ok(ts.depth(full))
}

/// An optimal decision tree realizing `min_decision_tree_depth`.
pub fn min_decision_tree(n: usize, k: usize) -> Result<DecisionTree> {
    let (mut ts, full) = tree_search(n, k)?;
    Ok(ts.build(full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::classical_info_bound;
    use crate::coinmodel::HiddenCoins;

    #[test]
    fn k1_exact_count_up_to_256() {
        for n in 3..=256usize {
            let expect = ceil_log2(n as u64) as u64;
            for coin in 0..n {
                let oracle = HiddenCoins::new(CoinConfig::from_false_coins(n, [coin]).unwrap());
                let got = classical_k1(&oracle).unwrap();
                assert_eq!(got, *oracle.reveal());
                assert_eq!(oracle.ledger().balance_queries, expect, "n={n}");
            }
        }
    }

    #[test]
    fn k1_examples() {
        for (n, expect) in [(8, 3), (4, 2), (6, 3)] {
            for coin in 0..n {
                let oracle = HiddenCoins::new(CoinConfig::from_false_coins(n, [coin]).unwrap());
                assert_eq!(classical_k1(&oracle).unwrap(), *oracle.reveal());
                assert_eq!(oracle.ledger().balance_queries, expect);
            }
        }
        assert!(k1_codewords(2).is_err());
        let codes = k1_codewords(6).unwrap();
        let mut sorted = codes.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
    }

    #[test]
    fn general_exhaustive_n16_k2() {
        let mut worst = 0;
        for bits in words_of_weight(16, 2) {
            let oracle = HiddenCoins::new(CoinConfig::new(bits).unwrap());
            assert_eq!(classical_general(2, &oracle).unwrap(), *oracle.reveal());
            worst = worst.max(oracle.ledger().balance_queries);
        }
        assert!(worst as f64 >= classical_info_bound(16, 2));
    }

    #[test]
    fn general_small_grids() {
        for (n, k) in [(7, 3), (9, 2), (10, 4), (12, 3), (13, 6)] {
            let mut worst = 0u64;
            for bits in words_of_weight(n, k) {
                let oracle = HiddenCoins::new(CoinConfig::new(bits).unwrap());
                assert_eq!(classical_general(k, &oracle).unwrap(), *oracle.reveal(), "n={n} k={k}");
                worst = worst.max(oracle.ledger().balance_queries);
            }
            let kf = k as f64;
            assert!(worst as f64 <= 4.0 * (kf * (n as f64 / kf).log2() + kf) + 2.0);
            assert!(worst as f64 >= classical_info_bound(n, k));
        }
    }

    #[test]
    fn general_k1_matches_k1() {
        let oracle = HiddenCoins::new(CoinConfig::from_false_coins(8, [5]).unwrap());
        classical_general(1, &oracle).unwrap();
        assert_eq!(oracle.ledger().balance_queries, 3);
    }

    #[test]
    fn general_is_deterministic_at_scale() {
        let x = CoinConfig::from_false_coins(200, [3, 50, 51, 199, 120]).unwrap();
        let a = HiddenCoins::new(x.clone());
        let b = HiddenCoins::new(x.clone());
        assert_eq!(classical_general(5, &a).unwrap(), x);
        assert_eq!(classical_general(5, &b).unwrap(), x);
        assert_eq!(a.ledger(), b.ledger());
    }

    #[test]
    fn tree_depth_examples() {
        assert_eq!(min_decision_tree_depth(4, 1).unwrap(), 2);
        assert_eq!(min_decision_tree_depth(2, 0).unwrap(), 0);
        assert_eq!(min_decision_tree_depth(5, 1).unwrap(), 3);
        assert!(matches!(min_decision_tree_depth(7, 1), Err(QcoinError::Resource(_))));
    }

    #[test]
    fn tree_depth_respects_info_bound_and_classifies() {
        for n in 1..=6usize {
            for k in 0..n.div_ceil(2) {
                if 2 * k >= n {
                    continue;
                }
                let d = min_decision_tree_depth(n, k).unwrap();
                assert!(d as f64 >= classical_info_bound(n, k).ceil() - 1e-9, "n={n} k={k}");
                let tree = min_decision_tree(n, k).unwrap();
                assert_eq!(tree.depth(), d);
                for bits in words_of_weight(n, k) {
                    let x = CoinConfig::new(bits).unwrap();
                    assert_eq!(tree.classify(&x).unwrap(), Some(x.clone()));
                }
            }
        }
    }
}
