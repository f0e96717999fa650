use super::findstar::{ReducedFinalState, DEFAULT_FULL_CAP};
use super::program::{program_for, BranchOp};
use super::{class_fractions, w_inverse, PureState};
use crate::amplify::SearchSchedule;
use crate::coinmodel::{quasi_prob_for_overlap, BitWord, CoinConfig, HiddenCoins, QuasiOracle, QueryLedger};
use crate::error::{QcoinError, Result};
use num_complex::Complex64;
use rayon::prelude::*;

/// Quasi search on the full R register.
#[derive(Clone, Debug)]
pub struct QuasiFullRun {
    pub success_probability: f64,
    pub ledger: QueryLedger,
    pub state: ReducedFinalState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuasiClassRun {
    pub success_probability: f64,
    pub ledger: QueryLedger,
}

/// Per-branch register (answer bit a, found sector f), stored as [f][a].
#[derive(Clone, Debug)]
struct AnswerRegister {
    v: Vec<[f64; 2]>,
}

impl AnswerRegister {
    fn new(sectors: usize) -> Self {
        let mut v = vec![[0.0; 2]; sectors];
        v[0][0] = 1.0;
        AnswerRegister { v }
    }

    /// O~ on one sector: |0> -> sqrt(p0)|0> + sqrt(p1)|1>, |1> -> sqrt(p0)|1> - sqrt(p1)|0>.
    fn oracle(&mut self, f: usize, p0: f64, inverse: bool) {
        let (s, c) = (p0.sqrt(), (1.0 - p0).max(0.0).sqrt());
        let c = if inverse { -c } else { c };
        let [a0, a1] = self.v[f];
        self.v[f] = [s * a0 - c * a1, c * a0 + s * a1];
    }

    fn reflect_zero(&mut self) {
        self.v[0][1] = -self.v[0][1];
    }

    fn mark_good(&mut self) {
        self.v[0][0] = -self.v[0][0];
    }
}

/// Queries charged for one oracle-dependent step, and the step itself.
fn run_op(reg: &mut AnswerRegister, op: BranchOp, p0: f64, first_prepare: bool) {
    let sectors = reg.v.len();
    match op {
        BranchOp::Prepare => {
            for f in 0..sectors {
                reg.oracle(f, p0, !first_prepare);
            }
        }
        BranchOp::Grover => {
            reg.mark_good();
            reg.oracle(0, p0, true);
            reg.reflect_zero();
            reg.oracle(0, p0, false);
        }
        BranchOp::GroverInverse => {
            reg.oracle(0, p0, true);
            reg.reflect_zero();
            reg.oracle(0, p0, false);
            reg.mark_good();
        }
        BranchOp::Check(j) => {
            let good = reg.v[0][0];
            reg.v[0][0] = reg.v[j][0];
            reg.v[j][0] = good;
        }
        BranchOp::FlipNotFound => {
            reg.v[0] = [-reg.v[0][0], -reg.v[0][1]];
        }
    }
}

/// Oracle invocations an op costs under the quasi model.
fn op_cost(op: BranchOp) -> u64 {
    match op {
        BranchOp::Prepare => 1,
        BranchOp::Grover | BranchOp::GroverInverse => 2,
        BranchOp::Check(_) | BranchOp::FlipNotFound => 0,
    }
}

fn branch_final(p0: f64, schedule: &SearchSchedule) -> AnswerRegister {
    let ops = program_for(schedule);
    let mut reg = AnswerRegister::new(schedule.stages.len() + 1);
    for (i, &op) in ops.iter().enumerate() {
        run_op(&mut reg, op, p0, i == 0);
    }
    reg
}

fn program_cost(schedule: &SearchSchedule) -> u64 {
    program_for(schedule).into_iter().map(op_cost).sum()
}

/// Class engine: branch dynamics depend only on m = wt(x AND q), whose
/// weight over the even masks is C(k, m) / 2^k.
pub fn simulate_quasi_classes(n: usize, k: usize, schedule: &SearchSchedule) -> Result<QuasiClassRun> {
    if 2 * k >= n {
        return Err(QcoinError::Domain(format!(
            "k = {k} must be below n/2 = {}",
            n as f64 / 2.0
        )));
    }
    if schedule.stages.is_empty() {
        return Err(QcoinError::Config("schedule has no stages".into()));
    }
    let (fk, _) = class_fractions(n, k);
    let finals: Vec<AnswerRegister> = (0..=k)
        .into_par_iter()
        .map(|m| branch_final(quasi_prob_for_overlap(m), schedule))
        .collect();
    let sectors = schedule.stages.len() + 1;
    let mut success = 0.0;
    for f in 0..sectors {
        for a in 0..2 {
            let amp: f64 = finals
                .iter()
                .enumerate()
                .map(|(m, r)| {
                    let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
                    fk[m] * sign * r.v[f][a]
                })
                .sum();
            success += amp * amp;
        }
    }
    Ok(QuasiClassRun {
        success_probability: success,
        ledger: QueryLedger::quasi(program_cost(schedule)),
    })
}

/// Full engine against a known configuration.
pub fn simulate_quasi_full(x: &CoinConfig, schedule: &SearchSchedule) -> Result<QuasiFullRun> {
    let oracle = HiddenCoins::new(x.clone());
    let state = quasi_state(&oracle, schedule, DEFAULT_FULL_CAP)?;
    Ok(QuasiFullRun {
        success_probability: state.probability(x.bits()),
        ledger: QuasiOracle::ledger(&oracle),
        state,
    })
}

/// Runs the quasi search on R in full, touching the coins only through `oracle`.
pub fn quasi_state(
    oracle: &dyn QuasiOracle,
    schedule: &SearchSchedule,
    cap: usize,
) -> Result<ReducedFinalState> {
    let n = oracle.n();
    if n > cap {
        return Err(QcoinError::Resource(format!(
            "n = {n} exceeds the full-simulation cap {cap}; use class mode"
        )));
    }
    if schedule.stages.is_empty() {
        return Err(QcoinError::Config("schedule has no stages".into()));
    }
    let sectors = schedule.stages.len() + 1;
    let gamma = 0.5f64.powf((n as f64 - 1.0) / 2.0);
    let branches: Vec<BitWord> = (0u64..(1u64 << n))
        .filter(|b| b.count_ones() % 2 == 0)
        .map(|b| BitWord::from_u64(n, b))
        .collect();
    let mut regs = vec![AnswerRegister::new(sectors); branches.len()];
    for (i, op) in program_for(schedule).into_iter().enumerate() {
        // every oracle call of one op is a separate invocation over all branches
        let mut p0 = None;
        for _ in 0..op_cost(op) {
            p0 = Some(oracle.balanced_probs(&branches)?);
        }
        let p0 = p0.unwrap_or_else(|| vec![0.0; branches.len()]);
        regs.par_iter_mut()
            .zip(p0.par_iter())
            .for_each(|(reg, &p)| run_op(reg, op, p, i == 0));
    }
    let mut shared = Vec::with_capacity(2 * sectors);
    for f in 0..sectors {
        for a in 0..2 {
            let psi = PureState::from_pairs(branches.iter().zip(&regs).filter_map(|(q, r)| {
                let v = r.v[f][a];
                (v != 0.0).then(|| (q.clone(), Complex64::new(gamma * v, 0.0)))
            }));
            shared.push(if psi.is_empty() { psi } else { w_inverse(&psi)? });
        }
    }
    Ok(ReducedFinalState {
        n,
        shared,
        diffuse_per_x: 0.0,
    })
}
