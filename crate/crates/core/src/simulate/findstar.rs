use super::program::{program_for, BranchOp};
use super::{central_table, class_fractions, w_inverse, PureState};
use crate::amplify::{residual_closed_form, SearchSchedule};
use crate::coinmodel::{
    split_parity_query, BalanceOracle, BalanceQuery, BitWord, CoinConfig, HiddenCoins,
    ParityQuery, Partition, QueryLedger,
};
use crate::error::{QcoinError, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Largest n the full state-vector engine accepts by default.
pub const DEFAULT_FULL_CAP: usize = 12;

/// Final state of R after the uncompute and W^-1, in reduced form.
///
/// `shared[f]` is the R amplitude vector attached to the empty label of
/// found-sector f. Every partition label belongs to a single branch, so that
/// garbage spreads uniformly over S_lh and is kept as one number per x.
#[derive(Clone, Debug)]
pub struct ReducedFinalState {
    pub n: usize,
    pub shared: Vec<PureState<BitWord>>,
    pub diffuse_per_x: f64,
}

impl ReducedFinalState {
    pub fn probability(&self, x: &BitWord) -> f64 {
        let coherent: f64 = self.shared.iter().map(|s| s.amplitude(x).norm_sqr()).sum();
        if super::in_s_lh(x) {
            coherent + self.diffuse_per_x
        } else {
            coherent
        }
    }

    /// Born distribution of R over S_lh (n <= 20).
    pub fn marginal(&self) -> BTreeMap<BitWord, f64> {
        let n = self.n;
        (0u64..(1u64 << n))
            .map(|b| BitWord::from_u64(n, b))
            .filter(super::in_s_lh)
            .map(|x| {
                let p = self.probability(&x);
                (x, p)
            })
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        let coherent: f64 = self.shared.iter().map(|s| s.norm_sqr()).sum();
        coherent + self.diffuse_per_x * (1u64 << (self.n - 1)) as f64
    }
}

/// Full-engine run against a known configuration.
#[derive(Clone, Debug)]
pub struct FullRun {
    pub success_probability: f64,
    pub ledger: QueryLedger,
    pub state: ReducedFinalState,
}

/// Class-engine result.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRun {
    pub success_probability: f64,
    pub epsilon: f64,
    pub lower_bound: f64,
    pub ledger: QueryLedger,
}

/// Reduced dynamics of one branch with good fraction p.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutcome {
    pub p: f64,
    /// Final amplitude on the empty label of each found sector.
    pub zero: Vec<f64>,
    /// Final mass left on partition labels.
    pub garbage: f64,
    /// Unfound mass after the forward half.
    pub residual: f64,
    pub queries: u64,
}

fn charged_queries(ops: &[BranchOp]) -> u64 {
    ops.iter()
        .filter(|o| matches!(o, BranchOp::Grover | BranchOp::GroverInverse | BranchOp::Check(_)))
        .count() as u64
}

/// Runs the branch program in the (Z_f, G_f, B_f) basis.
pub fn simulate_branch_class(p: f64, schedule: &SearchSchedule) -> BranchOutcome {
    let ops = program_for(schedule);
    let sectors = schedule.stages.len() + 1;
    let s = p.clamp(0.0, 1.0).sqrt();
    let c = (1.0 - p).clamp(0.0, 1.0).sqrt();
    let mut z = vec![0.0f64; sectors];
    let mut g = vec![0.0f64; sectors];
    let mut b = vec![0.0f64; sectors];
    z[0] = 1.0;
    let mut residual = 0.0;
    for op in &ops {
        match *op {
            BranchOp::Prepare => {
                for f in 0..sectors {
                    let d = z[f] - (s * g[f] + c * b[f]);
                    z[f] -= d;
                    g[f] += d * s;
                    b[f] += d * c;
                }
            }
            BranchOp::Grover => {
                g[0] = -g[0];
                diffuse(&mut g[0], &mut b[0], s, c);
            }
            BranchOp::GroverInverse => {
                diffuse(&mut g[0], &mut b[0], s, c);
                g[0] = -g[0];
            }
            BranchOp::Check(j) => {
                g.swap(0, j);
            }
            BranchOp::FlipNotFound => {
                residual = z[0] * z[0] + g[0] * g[0] + b[0] * b[0];
                z[0] = -z[0];
                g[0] = -g[0];
                b[0] = -b[0];
            }
        }
    }
    let garbage = g.iter().chain(&b).map(|v| v * v).sum();
    BranchOutcome {
        p,
        zero: z,
        garbage,
        residual,
        queries: charged_queries(&ops),
    }
}

fn diffuse(g: &mut f64, b: &mut f64, s: f64, c: f64) {
    let t = s * *g + c * *b;
    *g = 2.0 * t * s - *g;
    *b = 2.0 * t * c - *b;
}

/// Class engine: exact success probability of Find* from (w, m) classes.
pub fn simulate_find_star_classes(
    n: usize,
    k: usize,
    schedule: &SearchSchedule,
) -> Result<ClassRun> {
    if 2 * k >= n {
        return Err(QcoinError::Domain(format!(
            "k = {k} must be below n/2 = {}",
            n as f64 / 2.0
        )));
    }
    if schedule.stages.is_empty() {
        return Err(QcoinError::Config("schedule has no stages".into()));
    }
    if k <= 1 {
        return Ok(ClassRun {
            success_probability: 1.0,
            epsilon: 0.0,
            lower_bound: 1.0,
            ledger: QueryLedger::balance(1),
        });
    }
    let sectors = schedule.stages.len() + 1;
    let h = central_table(n);
    let (fk, gf) = class_fractions(n, k);
    let odd = simulate_branch_class(0.0, schedule);

    // per even w: (sum frac * sign * Z_f, sum frac * U, sum frac * residual over even m)
    let partials: Vec<(Vec<f64>, f64, f64)> = (0..=n / 2)
        .into_par_iter()
        .map(|half| {
            let w = 2 * half;
            let mut amp = vec![0.0f64; sectors];
            let mut garbage = 0.0;
            let mut eps = 0.0;
            let lo = w.saturating_sub(n - k);
            for m in lo..=k.min(w) {
                let frac = fk[m] * gf[w - m];
                if frac == 0.0 {
                    continue;
                }
                if m % 2 == 1 {
                    for (a, zv) in amp.iter_mut().zip(&odd.zero) {
                        *a -= frac * zv;
                    }
                    garbage += frac * odd.garbage;
                } else {
                    let p = (h[m] * h[w - m] / h[w]).min(1.0);
                    let out = simulate_branch_class(p, schedule);
                    for (a, zv) in amp.iter_mut().zip(&out.zero) {
                        *a += frac * zv;
                    }
                    garbage += frac * out.garbage;
                    eps += frac * residual_closed_form(p, &schedule.stages);
                }
            }
            (amp, garbage, eps)
        })
        .collect();

    let mut amp = vec![0.0f64; sectors];
    let mut garbage = 0.0;
    let mut eps = 0.0;
    for (a, g, e) in partials {
        for (t, v) in amp.iter_mut().zip(a) {
            *t += v;
        }
        garbage += g;
        eps += e;
    }
    let gamma_sq = 0.5f64.powi(n as i32 - 1);
    let success = amp.iter().map(|a| a * a).sum::<f64>() + gamma_sq * garbage;
    let epsilon = 4.0 * eps;
    Ok(ClassRun {
        success_probability: success,
        epsilon,
        lower_bound: (1.0 - epsilon.sqrt()).max(0.0).powi(2),
        ledger: QueryLedger::balance(odd.queries),
    })
}

struct FullBranch {
    offset: usize,
    parts: usize,
    v: Vec<f64>,
}

/// Full engine against a known configuration (builds its own oracle handle).
pub fn simulate_find_star_full(x: &CoinConfig, schedule: &SearchSchedule) -> Result<FullRun> {
    let oracle = HiddenCoins::new(x.clone());
    let state = find_star_state(&oracle, x.k(), schedule, DEFAULT_FULL_CAP)?;
    Ok(FullRun {
        success_probability: state.probability(x.bits()),
        ledger: oracle.ledger(),
        state,
    })
}

/// Runs Find* on R in full, touching the coins only through `oracle`.
pub fn find_star_state(
    oracle: &dyn BalanceOracle,
    k: usize,
    schedule: &SearchSchedule,
    cap: usize,
) -> Result<ReducedFinalState> {
    let n = oracle.n();
    if n > cap {
        return Err(QcoinError::Resource(format!(
            "n = {n} exceeds the full-simulation cap {cap}; use class mode"
        )));
    }
    if 2 * k >= n {
        return Err(QcoinError::Domain(format!(
            "k = {k} must be below n/2 = {}",
            n as f64 / 2.0
        )));
    }
    if schedule.stages.is_empty() {
        return Err(QcoinError::Config("schedule has no stages".into()));
    }
    let gamma = 0.5f64.powf((n as f64 - 1.0) / 2.0);
    let branches: Vec<BitWord> = (0u64..(1u64 << n))
        .filter(|b| b.count_ones() % 2 == 0)
        .map(|b| BitWord::from_u64(n, b))
        .collect();

    if k <= 1 {
        let queries: Vec<BalanceQuery> = branches
            .iter()
            .map(|q| Ok(split_parity_query(&ParityQuery::new(q.clone())?)))
            .collect::<Result<_>>()?;
        let tilted = oracle.weigh(&queries)?;
        let psi = PureState::from_pairs(
            branches
                .iter()
                .zip(&tilted)
                .map(|(q, &t)| (q.clone(), Complex64::new(if t { -gamma } else { gamma }, 0.0))),
        );
        return Ok(ReducedFinalState {
            n,
            shared: vec![w_inverse(&psi)?],
            diffuse_per_x: 0.0,
        });
    }

    let sectors = schedule.stages.len() + 1;
    let mut all_queries = Vec::new();
    let mut state: Vec<FullBranch> = Vec::with_capacity(branches.len());
    for q in &branches {
        let parts = Partition::all_of(q);
        let offset = all_queries.len();
        let count = parts.len();
        all_queries.extend(parts.iter().map(Partition::to_query));
        let mut v = vec![0.0f64; sectors * (count + 1)];
        v[0] = 1.0;
        state.push(FullBranch {
            offset,
            parts: count,
            v,
        });
    }

    for op in program_for(schedule) {
        let balanced: Option<Vec<bool>> = match op {
            BranchOp::Grover | BranchOp::GroverInverse | BranchOp::Check(_) => Some(
                oracle
                    .weigh(&all_queries)?
                    .into_iter()
                    .map(|t| !t)
                    .collect(),
            ),
            _ => None,
        };
        state.par_iter_mut().for_each(|br| {
            let flags = balanced
                .as_ref()
                .map(|b| &b[br.offset..br.offset + br.parts]);
            apply_full(op, br, sectors, flags);
        });
    }

    let mut shared = Vec::with_capacity(sectors);
    for f in 0..sectors {
        let psi = PureState::from_pairs(branches.iter().zip(&state).filter_map(|(q, br)| {
            let z = br.v[f * (br.parts + 1)];
            (z != 0.0).then(|| (q.clone(), Complex64::new(gamma * z, 0.0)))
        }));
        shared.push(if psi.is_empty() { psi } else { w_inverse(&psi)? });
    }
    let mut garbage = 0.0;
    for br in &state {
        let stride = br.parts + 1;
        let u: f64 = (0..sectors)
            .flat_map(|f| br.v[f * stride + 1..(f + 1) * stride].iter())
            .map(|a| a * a)
            .sum();
        garbage += u;
    }
    Ok(ReducedFinalState {
        n,
        shared,
        diffuse_per_x: gamma.powi(4) * garbage,
    })
}

fn apply_full(op: BranchOp, br: &mut FullBranch, sectors: usize, flags: Option<&[bool]>) {
    let stride = br.parts + 1;
    let root = (br.parts as f64).sqrt();
    let v = &mut br.v;
    let oracle_flip = |v: &mut [f64], flags: &[bool]| {
        for (a, &good) in v[1..stride].iter_mut().zip(flags) {
            if good {
                *a = -*a;
            }
        }
    };
    let diffusion = |v: &mut [f64]| {
        let c: f64 = v[1..stride].iter().sum::<f64>() / root;
        for a in &mut v[1..stride] {
            *a = 2.0 * c / root - *a;
        }
    };
    match op {
        BranchOp::Prepare => {
            for f in 0..sectors {
                let sec = &mut v[f * stride..(f + 1) * stride];
                let d = sec[0] - sec[1..].iter().sum::<f64>() / root;
                sec[0] -= d;
                for a in &mut sec[1..] {
                    *a += d / root;
                }
            }
        }
        BranchOp::Grover => {
            oracle_flip(v, flags.expect("oracle answers"));
            diffusion(v);
        }
        BranchOp::GroverInverse => {
            diffusion(v);
            oracle_flip(v, flags.expect("oracle answers"));
        }
        BranchOp::Check(j) => {
            let flags = flags.expect("oracle answers");
            for (i, &good) in flags.iter().enumerate() {
                if good {
                    v.swap(1 + i, j * stride + 1 + i);
                }
            }
        }
        BranchOp::FlipNotFound => {
            for a in &mut v[..stride] {
                *a = -*a;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplify::calibrate_schedule;
    use crate::coinmodel::words_of_weight;

    fn configs(n: usize, k: usize) -> Vec<CoinConfig> {
        words_of_weight(n, k)
            .into_iter()
            .map(|b| CoinConfig::new(b).unwrap())
            .collect()
    }

    #[test]
    fn k1_single_query_path() {
        let s = calibrate_schedule(1);
        for x in configs(8, 1) {
            let run = simulate_find_star_full(&x, &s).unwrap();
            assert!((run.success_probability - 1.0).abs() < 1e-12);
            assert_eq!(run.ledger, QueryLedger::balance(1));
        }
    }

    #[test]
    fn n8_k2_all_configs() {
        let s = calibrate_schedule(2);
        let class = simulate_find_star_classes(8, 2, &s).unwrap();
        let mut first = None;
        for x in configs(8, 2) {
            let run = simulate_find_star_full(&x, &s).unwrap();
            assert!(run.success_probability >= 0.9);
            assert!((run.state.total_mass() - 1.0).abs() < 1e-12);
            assert_eq!(run.ledger, class.ledger);
            let p0 = *first.get_or_insert(run.success_probability);
            assert!((run.success_probability - p0).abs() < 1e-12);
            assert!((run.success_probability - class.success_probability).abs() < 1e-10);
        }
    }

    #[test]
    fn engines_agree_up_to_10() {
        for n in 5..=10usize {
            for k in 2..n.div_ceil(2) {
                if 2 * k >= n {
                    continue;
                }
                let s = calibrate_schedule(k);
                let x = CoinConfig::from_false_coins(n, (0..k).rev().map(|i| n - 1 - i)).unwrap();
                let full = simulate_find_star_full(&x, &s).unwrap();
                let class = simulate_find_star_classes(n, k, &s).unwrap();
                assert!(
                    (full.success_probability - class.success_probability).abs() < 1e-10,
                    "n={n} k={k}: {} vs {}",
                    full.success_probability,
                    class.success_probability
                );
                assert_eq!(full.ledger, class.ledger);
            }
        }
    }

    #[test]
    fn large_class_instances() {
        let s = calibrate_schedule(64);
        let r = simulate_find_star_classes(1024, 64, &s).unwrap();
        assert!(r.success_probability >= 0.9);
        assert!(r.epsilon <= 1.0 / 400.0);
        assert!(r.lower_bound <= r.success_probability + 1e-12);
    }

    #[test]
    fn k0_is_trivial() {
        let s = calibrate_schedule(0);
        let r = simulate_find_star_classes(6, 0, &s).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert_eq!(r.success_probability, 1.0);
    }

    #[test]
    fn full_cap_is_enforced() {
        let x = CoinConfig::from_false_coins(13, [0, 1]).unwrap();
        let err = simulate_find_star_full(&x, &calibrate_schedule(2)).unwrap_err();
        assert!(matches!(err, QcoinError::Resource(_)));
    }

    #[test]
    fn branch_norm_is_preserved() {
        let s = calibrate_schedule(16);
        for p in [0.0, 0.1, 0.375, 0.5, 2.0 / 3.0, 1.0] {
            let out = simulate_branch_class(p, &s);
            let total: f64 = out.zero.iter().map(|z| z * z).sum::<f64>() + out.garbage;
            assert!((total - 1.0).abs() < 1e-12);
            assert!((out.residual - residual_closed_form(p, &s.stages)).abs() < 1e-12);
        }
    }
}
