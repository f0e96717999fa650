use clap::{Args, Parser, Subcommand, ValueEnum};
use qcoin_core::amplify::{
    calibrate_quasi_schedule, calibration_record, quasi_query_count, table, worst_quasi_residual,
    RESIDUAL_TARGET,
};
use qcoin_core::bounds::{
    classical_info_bound, gamma, lemma4_grid, lemma8_grid, medium_pan_bound, stochastic_adversary_bound,
    PresetRegistry, DEFAULT_ENUMERATION_CAP, LEMMA_GRID,
};
use qcoin_core::classical::{min_decision_tree_depth, TREE_SEARCH_CAP};
use qcoin_core::coinmodel::{BalanceOracle, BitWord, CoinConfig, HiddenCoins};
use qcoin_core::numeric::{binom, ratio};
use qcoin_core::solver::{CheckRegistry, Mode, Problem, SolverRegistry};
use qcoin_core::QcoinError;
use serde::Serialize;
use std::fmt::Write as _;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qcoin", version, about = "Quantum counterfeit-coin workbench")]
struct Cli {
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solver against a hidden configuration and print JSON reports.
    Solve(SolveArgs),
    /// Run a solver over a list of k values and print a table.
    Sweep(SweepArgs),
    /// Evaluate lower-bound quantities.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Verify a candidate false-coin set classically.
    Check(CheckArgs),
    /// Classical baselines.
    Classical(ClassicalArgs),
    /// Print the search schedules and recorded constants.
    Calibrate(CalibrateArgs),
    /// List the registered solvers, check strategies and weight schemes.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Class,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Full => Mode::Full,
            ModeArg::Class => Mode::Class,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Hidden configuration as a bit string (coin 1 first); random from the seed otherwise.
    #[arg(long)]
    x: Option<String>,
    /// Solver name (see `qcoin list`).
    #[arg(long, conflicts_with_all = ["exact", "quasi"])]
    solver: Option<String>,
    /// Use the exact solver.
    #[arg(long)]
    exact: bool,
    /// Use the quasi-oracle solver.
    #[arg(long, conflicts_with = "exact")]
    quasi: bool,
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Check strategy for the exact solver.
    #[arg(long, default_value = "auto")]
    check: String,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    ks: Vec<usize>,
    /// Fixed n; otherwise n = n_mult * k + n_add.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 4)]
    n_mult: usize,
    #[arg(long, default_value_t = 1)]
    n_add: usize,
    #[arg(long, default_value = "find-exact")]
    solver: String,
    #[arg(long, value_enum, default_value = "class")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum BoundsCmd {
    /// Balanced-configuration count for pans of n/c coins.
    Gamma {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        c: usize,
    },
    /// Normalized balanced fraction over the small-pan grid.
    Lemma4 {
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
    },
    /// Normalized tilt probability over the big-pan grid.
    Lemma8 {
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
    },
    /// Weighted adversary bound for a named scheme.
    Adversary {
        #[arg(long)]
        scheme: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Pan size or mask weight (smallpan, quasi).
        #[arg(long, conflicts_with = "d")]
        l: Option<usize>,
        /// Pan-size divisor (bigpan).
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, value_enum, default_value = "auto")]
        method: Method,
    },
    /// Bound over pan sizes at most l1 or at least l2.
    Medium {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        l1: usize,
        #[arg(long)]
        l2: usize,
    },
    /// Information-theoretic classical bound log2 C(n, k).
    Info {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    /// Enumerate when within the cap, else the closed form.
    Auto,
    Enumerate,
    Closed,
}

#[derive(Args)]
struct CheckArgs {
    /// Hidden configuration.
    #[arg(long)]
    x: String,
    /// Candidate false-coin set as a bit string.
    #[arg(long)]
    candidate: String,
    #[arg(long, default_value = "auto")]
    strategy: String,
}

#[derive(Args)]
struct ClassicalArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    x: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the optimal decision-tree depth instead of running a solver.
    #[arg(long)]
    tree: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Largest k to list.
    #[arg(long, default_value_t = 64)]
    k_max: usize,
}

/// Error with its exit status: 2 usage, 3 domain, 4 resource cap.
struct Failure {
    code: u8,
    message: String,
}

impl From<QcoinError> for Failure {
    fn from(e: QcoinError) -> Self {
        let code = match e {
            QcoinError::Config(_) => 2,
            QcoinError::Resource(_) => 4,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

/// Parameter errors of the bounds commands are usage errors.
fn as_usage(e: QcoinError) -> Failure {
    match e {
        QcoinError::Resource(_) => e.into(),
        other => usage(other.to_string()),
    }
}

/// Decimal with at most 12 significant digits, no exponent, no locale.
fn fmt12(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let e = v.abs().log10().floor() as i32;
    let decimals = (11 - e).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn hidden(n: usize, k: usize, x: Option<&str>, seed: u64) -> Result<HiddenCoins, Failure> {
    let x = match x {
        Some(s) => {
            let bits: BitWord = s.parse().map_err(|e: QcoinError| usage(e.to_string()))?;
            if bits.len() != n || bits.weight() != k {
                return Err(usage(format!(
                    "--x has length {} and weight {}, expected n = {n} and k = {k}",
                    bits.len(),
                    bits.weight()
                )));
            }
            CoinConfig::new(bits)?
        }
        None => CoinConfig::random(n, k, seed)?,
    };
    Ok(HiddenCoins::new(x))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn cmd_solve(a: &SolveArgs) -> Result<String, Failure> {
    let registry = SolverRegistry::default();
    let name = match (&a.solver, a.exact, a.quasi) {
        (Some(s), _, _) => s.as_str(),
        (None, true, _) => "find-exact",
        (None, _, true) => "quasi",
        (None, false, false) if a.k == 1 => "k1",
        _ => "find-star",
    };
    let solver = registry.get(name)?;
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let mut out = String::new();
    for t in 0..a.trials {
        let seed = a.seed + t;
        let oracle = hidden(a.n, a.k, a.x.as_deref(), seed)?;
        let mut problem = Problem::new(a.k, &oracle, a.mode.into(), seed);
        problem.check = &a.check;
        let report = solver.solve(&problem)?;
        writeln!(out, "{}", json(&report)).unwrap();
    }
    Ok(out)
}

fn cmd_sweep(a: &SweepArgs) -> Result<String, Failure> {
    if a.ks.is_empty() {
        return Err(usage("--ks must list at least one k"));
    }
    let registry = SolverRegistry::default();
    let solver = registry.get(&a.solver)?;
    let mut rows = Vec::new();
    for &k in &a.ks {
        let n = a.n.unwrap_or(a.n_mult * k + a.n_add);
        let oracle = hidden(n, k, None, a.seed)?;
        let r = solver.solve(&Problem::new(k, &oracle, a.mode.into(), a.seed))?;
        let q = r.queries.total();
        rows.push((n, k, r.success_probability, q, q as f64 / (k.max(1) as f64).powf(0.25)));
    }
    let mut out = String::new();
    match a.format {
        Format::Csv => {
            out.push_str("n,k,success_probability,queries,normalized\n");
            for (n, k, p, q, norm) in rows {
                writeln!(out, "{n},{k},{},{q},{}", fmt12(p), fmt12(norm)).unwrap();
            }
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Row {
                n: usize,
                k: usize,
                success_probability: f64,
                queries: u64,
                normalized: f64,
            }
            let rows: Vec<Row> = rows
                .into_iter()
                .map(|(n, k, success_probability, queries, normalized)| Row {
                    n,
                    k,
                    success_probability,
                    queries,
                    normalized,
                })
                .collect();
            writeln!(out, "{}", json(&rows)).unwrap();
        }
    }
    Ok(out)
}

fn cmd_bounds(b: &BoundsCmd) -> Result<String, Failure> {
    let mut out = String::new();
    match b {
        BoundsCmd::Gamma { n, k, c } => {
            if 2 * k >= *n {
                return Err(usage(format!("--k {k} must be below n/2")));
            }
            let g = gamma(*n, *k, *c).map_err(as_usage)?;
            let total = binom(*n as u64, *k as u64);
            out.push_str("n,k,c,gamma,binom,ratio\n");
            writeln!(out, "{n},{k},{c},{g},{total},{}", fmt12(ratio(&g, &total))).unwrap();
        }
        BoundsCmd::Lemma4 { ns } => {
            out.push_str("n,k,c,ratio,pivot\n");
            for p in lemma4_grid(ns.as_deref().unwrap_or(&LEMMA_GRID)) {
                let pivot = p.pivot.map(fmt12).unwrap_or_default();
                writeln!(out, "{},{},{},{},{pivot}", p.n, p.k, p.c, fmt12(p.ratio)).unwrap();
            }
        }
        BoundsCmd::Lemma8 { ns } => {
            out.push_str("n,k,c,ratio\n");
            for p in lemma8_grid(ns.as_deref().unwrap_or(&LEMMA_GRID)) {
                writeln!(out, "{},{},{},{}", p.n, p.k, p.c, fmt12(p.ratio)).unwrap();
            }
        }
        BoundsCmd::Adversary {
            scheme,
            n,
            k,
            l,
            d,
            method,
        } => {
            let registry = PresetRegistry::default();
            let preset = registry.get(scheme).map_err(as_usage)?;
            let param = match (preset.param_name(), l, d) {
                ("l", Some(v), None) | ("d", None, Some(v)) => *v,
                (name, _, _) => return Err(usage(format!("scheme '{scheme}' takes --{name}"))),
            };
            let enumerate = || -> Result<f64, Failure> {
                let (inst, w) = preset.build(*n, *k, param).map_err(as_usage)?;
                Ok(stochastic_adversary_bound(&inst, &w, DEFAULT_ENUMERATION_CAP)
                    .map_err(as_usage)?
                    .bound)
            };
            let closed = || -> Result<f64, Failure> {
                preset
                    .closed_form(*n, *k, param)
                    .map_err(as_usage)?
                    .ok_or_else(|| {
                        Failure::from(QcoinError::Resource(format!(
                            "scheme '{scheme}' has no closed form; only enumeration is available"
                        )))
                    })
            };
            let bound = match method {
                Method::Enumerate => enumerate()?,
                Method::Closed => closed()?,
                Method::Auto => match enumerate() {
                    Err(f) if f.code == 4 => closed()?,
                    r => r?,
                },
            };
            out.push_str("scheme,n,k,l_or_d,bound,normalized\n");
            let norm = bound / (*k as f64).powf(0.25);
            writeln!(out, "{scheme},{n},{k},{param},{},{}", fmt12(bound), fmt12(norm)).unwrap();
        }
        BoundsCmd::Medium { n, k, l1, l2 } => {
            let v = medium_pan_bound(*n, *k, *l1, *l2).map_err(as_usage)?;
            out.push_str("n,k,l1,l2,bound\n");
            writeln!(out, "{n},{k},{l1},{l2},{}", fmt12(v)).unwrap();
        }
        BoundsCmd::Info { n, k } => {
            if k > n {
                return Err(usage(format!("--k {k} exceeds --n {n}")));
            }
            out.push_str("n,k,bound\n");
            writeln!(out, "{n},{k},{}", fmt12(classical_info_bound(*n, *k))).unwrap();
        }
    }
    Ok(out)
}

fn cmd_check(a: &CheckArgs) -> Result<String, Failure> {
    let x: BitWord = a.x.parse().map_err(|e: QcoinError| usage(e.to_string()))?;
    let cand: BitWord = a.candidate.parse().map_err(|e: QcoinError| usage(e.to_string()))?;
    if cand.len() != x.len() {
        return Err(usage("--candidate and --x differ in length"));
    }
    let oracle = HiddenCoins::new(CoinConfig::new(x)?);
    let registry = CheckRegistry::default();
    let (n, k) = (cand.len(), cand.weight());
    let strategy = if a.strategy == "auto" {
        registry.auto(n, k)
    } else {
        registry.get(&a.strategy)?
    };
    let outcome = strategy.check(&cand.ones_vec(), &oracle)?;
    #[derive(Serialize)]
    struct CheckReport<'a> {
        strategy: &'a str,
        n: usize,
        k: usize,
        verdict: bool,
        weighings: u64,
        ledger_balance: u64,
    }
    Ok(json(&CheckReport {
        strategy: strategy.name(),
        n,
        k,
        verdict: outcome.verdict,
        weighings: outcome.weighings,
        ledger_balance: oracle.ledger().balance_queries,
    }) + "\n")
}

fn cmd_classical(a: &ClassicalArgs) -> Result<String, Failure> {
    if a.tree {
        if a.n > TREE_SEARCH_CAP {
            return Err(QcoinError::Resource(format!("tree search is capped at n = {TREE_SEARCH_CAP}")).into());
        }
        let depth = min_decision_tree_depth(a.n, a.k)?;
        return Ok(json(&serde_json::json!({"n": a.n, "k": a.k, "depth": depth})) + "\n");
    }
    let oracle = hidden(a.n, a.k, a.x.as_deref(), a.seed)?;
    let name = if a.k == 1 { "classical-k1" } else { "classical-general" };
    let report = SolverRegistry::default()
        .get(name)?
        .solve(&Problem::new(a.k, &oracle, Mode::Full, a.seed))?;
    Ok(json(&report) + "\n")
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<String, Failure> {
    if a.k_max == 0 {
        return Err(usage("--k-max must be at least 1"));
    }
    let records: Vec<_> = (1..=a.k_max).map(calibration_record).collect();
    let quasi: Vec<serde_json::Value> = (1..=a.k_max)
        .map(|k| {
            let s = calibrate_quasi_schedule(k);
            serde_json::json!({
                "k": k,
                "stages": s.stages,
                "queries": quasi_query_count(&s),
                "cap": s.cap,
                "worst_residual": worst_quasi_residual(k, &s),
            })
        })
        .collect();
    let doc = serde_json::json!({
        "schedule_id": table::FIND_STAR_ID,
        "quasi_schedule_id": table::QUASI_ID,
        "repetitions": table::FIND_STAR_REPS,
        "quasi_repetitions": table::QUASI_REPS,
        "c0": table::C0,
        "c1": table::C1,
        "residual_target": RESIDUAL_TARGET,
        "records": records,
        "quasi_records": quasi,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("serializable") + "\n")
}

fn cmd_list() -> String {
    let mut out = String::new();
    let solvers = SolverRegistry::default();
    for name in solvers.names() {
        let s = solvers.get(name).expect("registered");
        writeln!(out, "solver {name}: {}", s.description()).unwrap();
    }
    for name in CheckRegistry::default().names() {
        writeln!(out, "check {name}").unwrap();
    }
    let presets = PresetRegistry::default();
    for name in presets.names() {
        let p = presets.get(name).expect("registered");
        writeln!(out, "scheme {name} (--{})", p.param_name()).unwrap();
    }
    out
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("QCOIN_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| usage(format!("QCOIN_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<String, Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bounds(b) => cmd_bounds(b),
        Command::Check(a) => cmd_check(a),
        Command::Classical(a) => cmd_classical(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::List => Ok(cmd_list()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|text| match &cli.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fmt12;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt12(10.0 / 28.0), "0.357142857143");
        assert_eq!(fmt12(1.0), "1");
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12(123456.789), "123456.789");
        assert_eq!(fmt12(2.0f64.sqrt() * 1e-5), "0.0000141421356237");
        assert_eq!(fmt12(-0.5), "-0.5");
    }
}
