//! The occupancy-vector Markov chain.
//!
//! From state `s`, with `p_i = (s_i / n)^d`:
//!
//! * an arrival joins level `i` (raising `s_i`) at rate `lambda (p_{i-1} - p_i)`;
//! * a departure leaves level `i` (lowering `s_i`) at rate `s_i - s_{i+1}`.
//!
//! Arrivals whose `d` samples all sit at the buffer limit are dropped, so
//! the admitted arrival rate is `lambda (1 - p_b)`.

pub mod equivalence;
pub mod exact;
pub mod sim;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::state::{self, StateVector};

pub use exact::{enumerate_states, solve_stationary_exact, state_space_size, StationaryDistribution, DEFAULT_MAX_STATES};
pub use sim::{
    simulate, step_aggregate, step_per_queue, AggregateSim, Horizon, Observer, PerQueueSim, SimSummary,
    SnapshotPolicy, SnapshotRecorder, TrajectorySample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Arrival,
    Departure,
}

/// One of the `2b` transition classes, with its rate at some state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionClass {
    pub kind: TransitionKind,
    /// One-indexed level in `[1, b]`.
    pub level: usize,
    pub rate: f64,
}

/// `(s_i / n)^d` for every level `0..=b` (level 0 is 1).
pub fn sample_powers(s: &[u32], n: u32, d: u32) -> Vec<f64> {
    let nf = n as f64;
    std::iter::once(1.0)
        .chain(s.iter().map(|&v| (v as f64 / nf).powi(d as i32)))
        .collect()
}

/// Rates of all `2b` classes at `s`, arrivals first (levels `1..=b`), then
/// departures (levels `1..=b`). Zero-rate classes are included.
pub fn class_rates(s: &StateVector, cfg: &SystemConfig) -> Vec<TransitionClass> {
    let raw = s.as_slice();
    let b = raw.len();
    let p = sample_powers(raw, cfg.n, cfg.d);
    let mut out = Vec::with_capacity(2 * b);
    for i in 1..=b {
        out.push(TransitionClass {
            kind: TransitionKind::Arrival,
            level: i,
            rate: cfg.lambda * (p[i - 1] - p[i]),
        });
    }
    for i in 1..=b {
        let rate = (state::level(cfg.n, raw, i) - state::level(cfg.n, raw, i + 1)) as f64;
        out.push(TransitionClass { kind: TransitionKind::Departure, level: i, rate });
    }
    out
}

/// Admitted arrival rate `lambda (1 - (s_b / n)^d)`.
pub fn admit_rate(s: &[u32], cfg: &SystemConfig) -> f64 {
    let sb = *s.last().unwrap_or(&0);
    cfg.lambda * (1.0 - (sb as f64 / cfg.nf()).powi(cfg.d as i32))
}

/// Applies a transition class to a state.
pub fn apply(s: &StateVector, class: &TransitionClass) -> StateVector {
    match class.kind {
        TransitionKind::Arrival => s.shifted(class.level, 1),
        TransitionKind::Departure => s.shifted(class.level, -1),
    }
}

/// Off-diagonal generator row at `s`: target states with positive rate.
///
/// Every class moves a different coordinate, so targets never coincide.
pub fn generator_row(s: &StateVector, cfg: &SystemConfig) -> Result<Vec<(StateVector, f64)>> {
    check_state(s, cfg)?;
    Ok(class_rates(s, cfg)
        .into_iter()
        .filter(|c| c.rate > 0.0)
        .map(|c| (apply(s, &c), c.rate))
        .collect())
}

pub(crate) fn check_state(s: &StateVector, cfg: &SystemConfig) -> Result<()> {
    if s.n() != cfg.n || s.b() != cfg.b {
        return Err(Error::InvalidState(format!(
            "state has (n, b) = ({}, {}), config has ({}, {})",
            s.n(),
            s.b(),
            cfg.n,
            cfg.b
        )));
    }
    if !state::is_valid(cfg.n, s.as_slice()) {
        return Err(Error::InvalidState("non-monotone occupancy vector".into()));
    }
    Ok(())
}
