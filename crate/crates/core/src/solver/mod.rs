//! End-to-end solvers behind a name-indexed registry.

mod check;

pub use check::{
    check, simple_check, superposed_check, BigPanCheck, CheckOutcome, CheckRegistry, CheckStrategy,
    SimpleCheck,
};

use crate::amplify::{
    aux_rotation, calibrate_quasi_schedule, calibrate_schedule, exact_amplify, SearchSchedule,
};
use crate::classical::{classical_general, classical_k1};
use crate::coinmodel::{BalanceOracle, BitWord, CoinConfig, HiddenCoins, QuasiOracle, QueryLedger};
use crate::error::{QcoinError, Result};
use crate::simulate::{
    find_star_state, quasi_state, sample_distribution, simulate_find_star_classes,
    simulate_quasi_classes, ReducedFinalState, DEFAULT_FULL_CAP,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, OnceLock};

/// Engine used by a solver run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// State-vector simulation that talks to the oracle handle.
    Full,
    /// Symmetry-reduced engine; exact probabilities, analytic ledger.
    Class,
}

impl std::str::FromStr for Mode {
    type Err = QcoinError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "class" => Ok(Mode::Class),
            other => Err(QcoinError::Config(format!("unknown mode '{other}' (full|class)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub balance: u64,
    pub quasi: u64,
}

impl From<QueryLedger> for QueryCounts {
    fn from(l: QueryLedger) -> Self {
        QueryCounts {
            balance: l.balance_queries,
            quasi: l.quasi_queries,
        }
    }
}

impl QueryCounts {
    pub fn total(&self) -> u64 {
        self.balance + self.quasi
    }
}

/// Outcome of one solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub n: usize,
    pub k: usize,
    pub x_true: String,
    pub x_found: String,
    pub success: bool,
    pub success_probability: f64,
    pub queries: QueryCounts,
    pub mode: Mode,
    pub seed: u64,
    pub schedule_id: Option<String>,
}

/// One solver invocation. The oracle is only queried; the truth is read
/// back solely to score the report (and by the class engine, which models
/// the run analytically).
pub struct Problem<'a> {
    pub k: usize,
    pub oracle: &'a HiddenCoins,
    pub mode: Mode,
    pub seed: u64,
    /// Check strategy name, or "auto".
    pub check: &'a str,
}

impl<'a> Problem<'a> {
    pub fn new(k: usize, oracle: &'a HiddenCoins, mode: Mode, seed: u64) -> Self {
        Problem {
            k,
            oracle,
            mode,
            seed,
            check: "auto",
        }
    }

    pub fn n(&self) -> usize {
        BalanceOracle::n(self.oracle)
    }

    fn truth(&self) -> &CoinConfig {
        self.oracle.reveal()
    }

    fn validate(&self) -> Result<()> {
        self.validate_with_cap(DEFAULT_FULL_CAP)
    }

    fn validate_with_cap(&self, cap: usize) -> Result<()> {
        let n = self.n();
        if 2 * self.k >= n {
            return Err(QcoinError::Domain(format!(
                "k = {} must be below n/2 = {}",
                self.k,
                n as f64 / 2.0
            )));
        }
        if self.truth().k() != self.k {
            return Err(QcoinError::Precondition(format!(
                "hidden configuration has weight {}, not k = {}",
                self.truth().k(),
                self.k
            )));
        }
        if self.mode == Mode::Full && n > cap {
            return Err(QcoinError::Resource(format!(
                "n = {n} exceeds the full-simulation cap {cap}; use class mode"
            )));
        }
        Ok(())
    }

    fn report(&self, solver: &str, found: &BitWord, p: f64, ledger: QueryLedger, sched: Option<&SearchSchedule>) -> SolveReport {
        SolveReport {
            solver: solver.to_string(),
            n: self.n(),
            k: self.k,
            x_true: self.truth().to_string(),
            x_found: found.to_string(),
            success: found == self.truth().bits(),
            success_probability: p.clamp(0.0, 1.0),
            queries: ledger.into(),
            mode: self.mode,
            seed: self.seed,
            schedule_id: sched.map(|s| s.id.clone()),
        }
    }
}

/// A named algorithm for the counterfeit-coin problem.
pub trait Solver: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn solve(&self, problem: &Problem) -> Result<SolveReport>;
}

fn ledger_delta(before: QueryLedger, after: QueryLedger) -> QueryLedger {
    QueryLedger {
        balance_queries: after.balance_queries - before.balance_queries,
        quasi_queries: after.quasi_queries - before.quasi_queries,
    }
}

/// Stand-in verdict for class mode, where no state is sampled: the truth
/// with probability `p`, otherwise a fixed wrong configuration.
fn class_draw(truth: &CoinConfig, p: f64, seed: u64) -> BitWord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen();
    let (n, k) = (truth.n(), truth.k());
    if u < p || k == 0 {
        return truth.bits().clone();
    }
    let first = BitWord::from_indices(n, 0..k);
    if &first != truth.bits() {
        first
    } else {
        BitWord::from_indices(n, (0..k - 1).chain([k]))
    }
}

fn sample_state(state: &ReducedFinalState, seed: u64) -> Result<BitWord> {
    sample_distribution(&state.marginal(), seed)
}

/// Largest n for the single-weighing solver in full mode; its state has
/// only 2^(n-1) branches of one amplitude each.
pub const K1_FULL_CAP: usize = 20;

/// Single superposed weighing for k = 1.
pub struct K1Solver;

impl Solver for K1Solver {
    fn name(&self) -> &'static str {
        "k1"
    }

    fn description(&self) -> &'static str {
        "one superposed weighing identifies a single false coin"
    }

    fn solve(&self, problem: &Problem) -> Result<SolveReport> {
        problem.validate_with_cap(K1_FULL_CAP)?;
        if problem.k != 1 {
            return Err(QcoinError::Domain(format!("k1 solver needs k = 1, got {}", problem.k)));
        }
        let sched = calibrate_schedule(1);
        match problem.mode {
            Mode::Full => {
                let before = BalanceOracle::ledger(problem.oracle);
                let state = find_star_state(problem.oracle, 1, &sched, K1_FULL_CAP)?;
                let ledger = ledger_delta(before, BalanceOracle::ledger(problem.oracle));
                let found = sample_state(&state, problem.seed)?;
                let p = state.probability(problem.truth().bits());
                Ok(problem.report(self.name(), &found, p, ledger, None))
            }
            Mode::Class => {
                let found = class_draw(problem.truth(), 1.0, problem.seed);
                Ok(problem.report(self.name(), &found, 1.0, QueryLedger::balance(1), None))
            }
        }
    }
}

/// Bounded-error search (success at least 9/10).
pub struct FindStarSolver;

impl Solver for FindStarSolver {
    fn name(&self) -> &'static str {
        "find-star"
    }

    fn description(&self) -> &'static str {
        "bounded-error staged amplitude amplification over partition queries"
    }

    fn solve(&self, problem: &Problem) -> Result<SolveReport> {
        problem.validate()?;
        let sched = calibrate_schedule(problem.k);
        match problem.mode {
            Mode::Full => {
                let before = BalanceOracle::ledger(problem.oracle);
                let state = find_star_state(problem.oracle, problem.k, &sched, DEFAULT_FULL_CAP)?;
                let ledger = ledger_delta(before, BalanceOracle::ledger(problem.oracle));
                let found = sample_state(&state, problem.seed)?;
                let p = state.probability(problem.truth().bits());
                Ok(problem.report(self.name(), &found, p, ledger, Some(&sched)))
            }
            Mode::Class => {
                let run = simulate_find_star_classes(problem.n(), problem.k, &sched)?;
                let found = class_draw(problem.truth(), run.success_probability, problem.seed);
                Ok(problem.report(self.name(), &found, run.success_probability, run.ledger, Some(&sched)))
            }
        }
    }
}

fn class_success_cache() -> &'static Mutex<HashMap<(usize, usize), f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Success probability of the bounded-error search for (n, k); it does not
/// depend on which configuration is hidden.
pub fn find_star_success(n: usize, k: usize) -> Result<f64> {
    if let Some(&p) = class_success_cache().lock().expect("cache lock").get(&(n, k)) {
        return Ok(p);
    }
    let p = simulate_find_star_classes(n, k, &calibrate_schedule(k))?.success_probability;
    class_success_cache().lock().expect("cache lock").insert((n, k), p);
    Ok(p)
}

/// Recorded maximum of find_exact total queries over k^(1/4) on the doubling
/// grid k = 1, 2, 4, ..., 256 with n = 4k + 1, class mode, for the
/// `ladder-r4-v1` schedule (sum of stage lengths at most c0 k^(1/4)).
pub const EXACT_NORMALIZED_MAX: f64 = 150.0;

/// Exact search: the bounded-error search with its success mass rotated down
/// to 1/4, then one round of amplification.
pub struct FindExactSolver;

impl FindExactSolver {
    fn strategy<'r>(registry: &'r CheckRegistry, problem: &Problem) -> Result<&'r dyn CheckStrategy> {
        let (n, k) = (problem.n(), problem.k);
        let s = if problem.check == "auto" {
            registry.auto(n, k)
        } else {
            registry.get(problem.check)?
        };
        s.applicable(n, k)?;
        Ok(s)
    }
}

impl Solver for FindExactSolver {
    fn name(&self) -> &'static str {
        "find-exact"
    }

    fn description(&self) -> &'static str {
        "zero-error search: three bounded-error runs and two checks"
    }

    fn solve(&self, problem: &Problem) -> Result<SolveReport> {
        problem.validate()?;
        let (n, k) = (problem.n(), problem.k);
        let registry = CheckRegistry::default();
        let strategy = Self::strategy(&registry, problem)?;
        let sched = calibrate_schedule(k);
        let a_class = find_star_success(n, k)?;
        let (_, keep) = aux_rotation(a_class)?;
        match problem.mode {
            Mode::Full => {
                let oracle: &dyn BalanceOracle = problem.oracle;
                let before = oracle.ledger();
                let state = find_star_state(oracle, k, &sched, DEFAULT_FULL_CAP)?;
                let marginal: BTreeMap<BitWord, f64> = state
                    .marginal()
                    .into_iter()
                    .filter(|(x, p)| x.weight() == k && *p > 0.0)
                    .collect();
                let cands: Vec<Vec<usize>> = marginal.keys().map(|x| x.ones_vec()).collect();
                let verdicts = superposed_check(strategy, k, &cands, oracle)?;
                let again = superposed_check(strategy, k, &cands, oracle)?;
                debug_assert_eq!(verdicts, again);
                find_star_state(oracle, k, &sched, DEFAULT_FULL_CAP)?;
                find_star_state(oracle, k, &sched, DEFAULT_FULL_CAP)?;
                let ledger = ledger_delta(before, oracle.ledger());

                let good: Vec<(&BitWord, f64)> = marginal
                    .iter()
                    .zip(&verdicts)
                    .filter(|(_, &v)| v)
                    .map(|((x, &p), _)| (x, p))
                    .collect();
                let a_true: f64 = good.iter().map(|(_, p)| p).sum();
                let success = exact_amplify(a_true * keep * keep)?;
                let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
                let u: f64 = rng.gen();
                let found = match good.first() {
                    Some((x, _)) if u < success => (*x).clone(),
                    _ => marginal
                        .iter()
                        .zip(&verdicts)
                        .filter(|(_, &v)| !v)
                        .max_by(|a, b| a.0 .1.total_cmp(b.0 .1))
                        .map(|((x, _), _)| x.clone())
                        .unwrap_or_else(|| BitWord::zeros(n)),
                };
                let p_true = good
                    .iter()
                    .find(|(x, _)| *x == problem.truth().bits())
                    .map_or(0.0, |(_, p)| success * p / a_true);
                Ok(problem.report(self.name(), &found, p_true, ledger, Some(&sched)))
            }
            Mode::Class => {
                let f = simulate_find_star_classes(n, k, &sched)?.ledger;
                let c = strategy.weighings(n, k)?;
                let ledger = QueryLedger::balance(3 * f.balance_queries + 2 * c);
                let success = exact_amplify(a_class * keep * keep)?;
                let found = class_draw(problem.truth(), success, problem.seed);
                Ok(problem.report(self.name(), &found, success, ledger, Some(&sched)))
            }
        }
    }
}

/// Bounded-error search driven by the quasi oracle.
pub struct QuasiSolver;

impl Solver for QuasiSolver {
    fn name(&self) -> &'static str {
        "quasi"
    }

    fn description(&self) -> &'static str {
        "amplitude amplification on the quasi oracle's answer bit"
    }

    fn solve(&self, problem: &Problem) -> Result<SolveReport> {
        problem.validate()?;
        let sched = calibrate_quasi_schedule(problem.k);
        match problem.mode {
            Mode::Full => {
                let oracle: &dyn QuasiOracle = problem.oracle;
                let before = oracle.ledger();
                let state = quasi_state(oracle, &sched, DEFAULT_FULL_CAP)?;
                let ledger = ledger_delta(before, oracle.ledger());
                let found = sample_state(&state, problem.seed)?;
                let p = state.probability(problem.truth().bits());
                Ok(problem.report(self.name(), &found, p, ledger, Some(&sched)))
            }
            Mode::Class => {
                let run = simulate_quasi_classes(problem.n(), problem.k, &sched)?;
                let found = class_draw(problem.truth(), run.success_probability, problem.seed);
                Ok(problem.report(self.name(), &found, run.success_probability, run.ledger, Some(&sched)))
            }
        }
    }
}

fn classical_report(name: &str, problem: &Problem, found: CoinConfig, before: QueryLedger) -> SolveReport {
    let ledger = ledger_delta(before, BalanceOracle::ledger(problem.oracle));
    let p = if &found == problem.truth() { 1.0 } else { 0.0 };
    problem.report(name, found.bits(), p, ledger, None)
}

/// Non-adaptive binary code, ceil(log2 n) weighings.
pub struct ClassicalK1Solver;

impl Solver for ClassicalK1Solver {
    fn name(&self) -> &'static str {
        "classical-k1"
    }

    fn description(&self) -> &'static str {
        "classical weighings spelling a binary codeword (k = 1)"
    }

    fn solve(&self, problem: &Problem) -> Result<SolveReport> {
        if 2 * problem.k >= problem.n() {
            return Err(QcoinError::Domain(format!("k = {} must be below n/2", problem.k)));
        }
        if problem.k != 1 {
            return Err(QcoinError::Domain(format!("classical-k1 needs k = 1, got {}", problem.k)));
        }
        let before = BalanceOracle::ledger(problem.oracle);
        let found = classical_k1(problem.oracle)?;
        Ok(classical_report(self.name(), problem, found, before))
    }
}

/// Adaptive group testing for any k.
pub struct ClassicalGeneralSolver;

impl Solver for ClassicalGeneralSolver {
    fn name(&self) -> &'static str {
        "classical-general"
    }

    fn description(&self) -> &'static str {
        "classical majority vote plus binary-splitting group tests"
    }

    fn solve(&self, problem: &Problem) -> Result<SolveReport> {
        let before = BalanceOracle::ledger(problem.oracle);
        let found = classical_general(problem.k, problem.oracle)?;
        Ok(classical_report(self.name(), problem, found, before))
    }
}

/// Solvers selectable by name.
pub struct SolverRegistry {
    solvers: Vec<Box<dyn Solver>>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut r = SolverRegistry { solvers: Vec::new() };
        r.register(Box::new(K1Solver));
        r.register(Box::new(FindStarSolver));
        r.register(Box::new(FindExactSolver));
        r.register(Box::new(QuasiSolver));
        r.register(Box::new(ClassicalK1Solver));
        r.register(Box::new(ClassicalGeneralSolver));
        r
    }
}

impl SolverRegistry {
    /// Adds a solver, replacing any earlier one with the same name.
    pub fn register(&mut self, solver: Box<dyn Solver>) {
        self.solvers.retain(|s| s.name() != solver.name());
        self.solvers.push(solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Solver> {
        self.solvers
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| {
                QcoinError::Config(format!(
                    "unknown solver '{name}' (known: {})",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.iter().map(|s| s.name()).collect()
    }
}

pub fn solve_k1(oracle: &HiddenCoins, seed: u64) -> Result<SolveReport> {
    K1Solver.solve(&Problem::new(1, oracle, Mode::Full, seed))
}

pub fn find_star(k: usize, oracle: &HiddenCoins, mode: Mode, seed: u64) -> Result<SolveReport> {
    FindStarSolver.solve(&Problem::new(k, oracle, mode, seed))
}

pub fn find_exact(k: usize, oracle: &HiddenCoins, mode: Mode, seed: u64) -> Result<SolveReport> {
    FindExactSolver.solve(&Problem::new(k, oracle, mode, seed))
}

pub fn quasi_solve(k: usize, oracle: &HiddenCoins, mode: Mode, seed: u64) -> Result<SolveReport> {
    QuasiSolver.solve(&Problem::new(k, oracle, mode, seed))
}
