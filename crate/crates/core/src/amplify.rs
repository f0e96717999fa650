//! Grover rotations, the staged coherent search and exact amplification.

use crate::error::{QcoinError, Result};
use crate::numeric::{binom, pow2, ratio};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

/// Residual target per even-m branch.
pub const RESIDUAL_TARGET: f64 = 1.0 / 1600.0;

/// Versioned calibration constants, fixed by the sweep in `calibration_sweep`.
pub mod table {
    /// Ladder repetitions for the balance-oracle search.
    pub const FIND_STAR_REPS: usize = 4;
    /// max over k <= 4096 of (sum of stage lengths) / k^(1/4), rounded up.
    pub const C0: f64 = 19.01;
    /// Ladder repetitions for the quasi-oracle search.
    pub const QUASI_REPS: usize = 4;
    /// max over k <= 256 of (quasi queries) / k^(1/4), rounded up.
    pub const C1: f64 = 68.07;
    pub const FIND_STAR_ID: &str = "ladder-r4-v1";
    pub const QUASI_ID: &str = "quasi-ladder-r4-v1";
}

/// Stage lengths of the staged search and the query budget they respect.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSchedule {
    pub stages: Vec<u32>,
    pub cap: u64,
    pub id: String,
}

impl SearchSchedule {
    pub fn total(&self) -> u64 {
        self.stages.iter().map(|&t| t as u64).sum()
    }

    pub fn num_stages(&self) -> u64 {
        self.stages.len() as u64
    }
}

/// Reduced good/bad amplitudes plus the mass already flagged as found.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplitudeState2D {
    pub good: f64,
    pub bad: f64,
    pub found_mass: f64,
}

impl AmplitudeState2D {
    /// State right after the preparation with success probability `p`.
    pub fn prepared(p: f64) -> Self {
        AmplitudeState2D {
            good: p.sqrt(),
            bad: (1.0 - p).sqrt(),
            found_mass: 0.0,
        }
    }

    /// One Grover iteration: rotation by 2*theta towards the good subspace.
    pub fn iterate(&mut self, theta: f64) {
        let (s, c) = (2.0 * theta).sin_cos();
        let g = self.good * c + self.bad * s;
        let b = self.bad * c - self.good * s;
        self.good = g;
        self.bad = b;
    }

    /// Coherent found-check: the good component moves to the found flag.
    pub fn check(&mut self) {
        self.found_mass += self.good * self.good;
        self.good = 0.0;
    }

    pub fn total_mass(&self) -> f64 {
        self.good * self.good + self.bad * self.bad + self.found_mass
    }
}

/// sin^2((2t+1) asin sqrt p).
pub fn grover_amplitude(p: f64, t: u32) -> f64 {
    let th = p.clamp(0.0, 1.0).sqrt().asin();
    ((2 * t + 1) as f64 * th).sin().powi(2)
}

/// Runs the schedule on a branch with good fraction `p`; returns the
/// residual unfound mass and the queries charged (iterations plus checks).
pub fn staged_search(p: f64, schedule: &SearchSchedule) -> Result<(f64, u64)> {
    if schedule.stages.is_empty() {
        return Err(QcoinError::Config("schedule has no stages".into()));
    }
    let st = staged_state(p, schedule);
    let residual = (st.good * st.good + st.bad * st.bad).clamp(0.0, 1.0);
    Ok((residual, schedule.total() + schedule.num_stages()))
}

/// Final 2D state of the staged search.
pub fn staged_state(p: f64, schedule: &SearchSchedule) -> AmplitudeState2D {
    let p = p.clamp(0.0, 1.0);
    let th = p.sqrt().asin();
    let mut st = AmplitudeState2D::prepared(p);
    for &t in &schedule.stages {
        for _ in 0..t {
            st.iterate(th);
        }
        st.check();
    }
    st
}

/// Closed-form residual: product of cos^2 of the per-stage rotation angles.
pub fn residual_closed_form(p: f64, stages: &[u32]) -> f64 {
    let th = p.clamp(0.0, 1.0).sqrt().asin();
    stages
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let ang = if j == 0 {
                (2 * t + 1) as f64 * th
            } else {
                2.0 * t as f64 * th
            };
            ang.cos().powi(2)
        })
        .product()
}

/// Smallest nonzero partition fraction reachable with k false coins:
/// C(m, m/2) / 2^m for the largest even m <= k.
pub fn p_min(k: usize) -> f64 {
    let m = k - k % 2;
    ratio(&binom(m as u64, (m / 2) as u64), &pow2(m as u64))
}

/// Stage ladder for guesses 1, 1/2, 1/4, ... down to `floor`.
pub fn ladder(floor: f64) -> Vec<u32> {
    let mut out = Vec::new();
    let mut guess = 1.0f64;
    loop {
        out.push((FRAC_PI_4 / guess.sqrt()).ceil() as u32);
        if guess <= floor {
            break;
        }
        guess /= 2.0;
    }
    out
}

/// Deterministic schedule for the balance-oracle search with k false coins.
pub fn calibrate_schedule(k: usize) -> SearchSchedule {
    let stages = if k <= 1 {
        vec![0]
    } else {
        ladder(p_min(k)).repeat(table::FIND_STAR_REPS)
    };
    SearchSchedule {
        stages,
        cap: (table::C0 * (k.max(1) as f64).powf(0.25)).ceil() as u64,
        id: table::FIND_STAR_ID.to_string(),
    }
}

/// Deterministic schedule for the quasi-oracle search; `cap` bounds quasi queries.
pub fn calibrate_quasi_schedule(k: usize) -> SearchSchedule {
    let stages = if k <= 1 {
        vec![0]
    } else {
        let m = k - k % 2;
        ladder(1.0 / (m as f64).sqrt()).repeat(table::QUASI_REPS)
    };
    SearchSchedule {
        stages,
        cap: (table::C1 * (k.max(1) as f64).powf(0.25)).ceil() as u64,
        id: table::QUASI_ID.to_string(),
    }
}

/// Quasi queries charged by one quasi search run: 2 * (1 + 2 * sum t).
pub fn quasi_query_count(schedule: &SearchSchedule) -> u64 {
    2 * (1 + 2 * schedule.total())
}

/// Worst residual over the admissible fractions {1} and [p_min(k), 2/3].
pub fn worst_residual(k: usize, schedule: &SearchSchedule) -> f64 {
    let mut worst = residual_closed_form(1.0, &schedule.stages);
    if k < 2 {
        return worst;
    }
    let lo = p_min(k).sqrt().asin();
    let hi = (2.0f64 / 3.0).sqrt().asin();
    const GRID: usize = 4000;
    for i in 0..=GRID {
        let th = lo + (hi - lo) * i as f64 / GRID as f64;
        worst = worst.max(residual_closed_form(th.sin().powi(2), &schedule.stages));
    }
    worst
}

/// Worst residual of the quasi schedule over its exact admissible set.
pub fn worst_quasi_residual(k: usize, schedule: &SearchSchedule) -> f64 {
    let mut worst = residual_closed_form(1.0, &schedule.stages);
    for m in (2..=k).step_by(2) {
        worst = worst.max(residual_closed_form(
            1.0 / (m as f64).sqrt(),
            &schedule.stages,
        ));
    }
    worst
}

/// Calibration record in its published JSON form.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CalibrationRecord {
    pub k: usize,
    pub stages: Vec<u32>,
    pub c0: f64,
    pub worst_residual: f64,
}

pub fn calibration_record(k: usize) -> CalibrationRecord {
    let s = calibrate_schedule(k);
    CalibrationRecord {
        k,
        worst_residual: worst_residual(k, &s),
        stages: s.stages,
        c0: table::C0,
    }
}

/// Recomputes the table constants: (max sum t / k^(1/4) for k <= kmax, max
/// quasi queries / k^(1/4) for k <= qmax).
pub fn calibration_sweep(kmax: usize, qmax: usize) -> (f64, f64) {
    let c0 = (1..=kmax)
        .map(|k| calibrate_schedule(k).total() as f64 / (k as f64).powf(0.25))
        .fold(0.0, f64::max);
    let c1 = (1..=qmax)
        .map(|k| quasi_query_count(&calibrate_quasi_schedule(k)) as f64 / (k as f64).powf(0.25))
        .fold(0.0, f64::max);
    (c0, c1)
}

/// Single-qubit preparation (sqrt(1 - 1/4a), sqrt(1/4a)).
pub fn aux_rotation(a: f64) -> Result<(f64, f64)> {
    if !(0.25..=1.0 + 1e-12).contains(&a) {
        return Err(QcoinError::Domain(format!(
            "aux_rotation needs 1/4 <= a <= 1, got {a}"
        )));
    }
    let one = (1.0 / (4.0 * a)).min(1.0);
    Ok(((1.0 - one).max(0.0).sqrt(), one.sqrt()))
}

/// Tolerance on the prepared solution mass.
pub const EXACT_TOLERANCE: f64 = 1e-9;

/// One phase flip on the solution plus one reflection about the prepared
/// state; returns the final success probability.
pub fn exact_amplify(success_mass: f64) -> Result<f64> {
    if (success_mass - 0.25).abs() > EXACT_TOLERANCE {
        return Err(QcoinError::Calibration(format!(
            "solution mass {success_mass} differs from 1/4 by more than {EXACT_TOLERANCE:e}"
        )));
    }
    let a = success_mass.sqrt();
    let b = (1.0 - success_mass).sqrt();
    // after the flip: (-a, b); reflect about (a, b)
    let overlap = -a * a + b * b;
    let good = 2.0 * overlap * a + a;
    let bad = 2.0 * overlap * b - b;
    let norm = good * good + bad * bad;
    Ok(good * good / norm)
}
