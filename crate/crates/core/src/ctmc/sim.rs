//! Event-driven simulators for the chain.
//!
//! `AggregateSim` evolves the occupancy vector directly with the Gillespie
//! direct method over the `2b` transition classes. `PerQueueSim` keeps
//! every queue length and performs the actual `d`-sample routing; its
//! occupancy vector follows the same law.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply, check_state, class_rates, TransitionClass, TransitionKind};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng;
use crate::state::StateVector;

/// When to stop a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Number of state-changing events.
    Events(u64),
    /// Simulated time.
    Time(f64),
}

impl Horizon {
    fn validate(&self) -> Result<()> {
        match *self {
            Horizon::Events(k) if k > 0 => Ok(()),
            Horizon::Time(t) if t > 0.0 && t.is_finite() => Ok(()),
            _ => Err(Error::Config("horizon must be positive".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotPolicy {
    None,
    EveryEvents(u64),
    TimeGrid(f64),
}

/// A recorded point of a trajectory; `event` is `None` for grid snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: Vec<u32>,
    pub event: Option<TransitionClass>,
}

/// Receives the piecewise-constant path of a run.
pub trait Observer {
    /// Called once with the initial state.
    fn start(&mut self, _t: f64, _s: &[u32]) {}
    /// The chain sat in `s` during `[t0, t0 + dt)`.
    fn hold(&mut self, _t0: f64, _dt: f64, _s: &[u32]) {}
    /// A transition fired at time `t`, leading to `s`.
    fn event(&mut self, _t: f64, _s: &[u32], _e: &TransitionClass) {}
}

impl Observer for () {}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn start(&mut self, t: f64, s: &[u32]) {
        self.0.start(t, s);
        self.1.start(t, s);
    }
    fn hold(&mut self, t0: f64, dt: f64, s: &[u32]) {
        self.0.hold(t0, dt, s);
        self.1.hold(t0, dt, s);
    }
    fn event(&mut self, t: f64, s: &[u32], e: &TransitionClass) {
        self.0.event(t, s, e);
        self.1.event(t, s, e);
    }
}

impl<T: Observer + ?Sized> Observer for &mut T {
    fn start(&mut self, t: f64, s: &[u32]) {
        (**self).start(t, s)
    }
    fn hold(&mut self, t0: f64, dt: f64, s: &[u32]) {
        (**self).hold(t0, dt, s)
    }
    fn event(&mut self, t: f64, s: &[u32], e: &TransitionClass) {
        (**self).event(t, s, e)
    }
}

/// Collects [`TrajectorySample`]s according to a [`SnapshotPolicy`].
#[derive(Debug, Clone)]
pub struct SnapshotRecorder {
    policy: SnapshotPolicy,
    origin: f64,
    grid_index: u64,
    count: u64,
    pub samples: Vec<TrajectorySample>,
}

impl SnapshotRecorder {
    pub fn new(policy: SnapshotPolicy) -> Self {
        Self { policy, origin: 0.0, grid_index: 0, count: 0, samples: Vec::new() }
    }
}

impl Observer for SnapshotRecorder {
    fn start(&mut self, t: f64, s: &[u32]) {
        match self.policy {
            SnapshotPolicy::EveryEvents(_) => {
                self.samples.push(TrajectorySample { t, state: s.to_vec(), event: None })
            }
            SnapshotPolicy::TimeGrid(_) => self.origin = t,
            SnapshotPolicy::None => {}
        }
    }

    fn hold(&mut self, t0: f64, dt: f64, s: &[u32]) {
        if let SnapshotPolicy::TimeGrid(step) = self.policy {
            let end = t0 + dt;
            loop {
                let t = self.origin + self.grid_index as f64 * step;
                if t >= end {
                    break;
                }
                self.samples.push(TrajectorySample { t, state: s.to_vec(), event: None });
                self.grid_index += 1;
            }
        }
    }

    fn event(&mut self, t: f64, s: &[u32], e: &TransitionClass) {
        if let SnapshotPolicy::EveryEvents(k) = self.policy {
            self.count += 1;
            if k > 0 && self.count.is_multiple_of(k) {
                self.samples.push(TrajectorySample { t, state: s.to_vec(), event: Some(*e) });
            }
        }
    }
}

/// Outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub events: u64,
    /// Arrivals lost to a full buffer (per-queue simulator only).
    pub dropped: u64,
    pub end_time: f64,
    pub final_state: Vec<u32>,
}

/// One transition of [`step_aggregate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Holding time; infinite at an absorbing state.
    pub dt: f64,
    pub next: StateVector,
    pub event: Option<TransitionClass>,
}

/// Exponential variate with the given rate.
#[inline]
fn exp_sample(rng: &mut impl Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Picks the first index whose running sum exceeds `u`; falls back to the
/// last positive entry to absorb rounding at the top of the range.
#[inline]
fn pick(weights: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if acc > u {
                return i;
            }
        }
    }
    last
}

/// Single Gillespie step from an arbitrary state.
pub fn step_aggregate(state: &StateVector, cfg: &SystemConfig, rng: &mut impl Rng) -> Result<Step> {
    check_state(state, cfg)?;
    let classes = class_rates(state, cfg);
    let total: f64 = classes.iter().map(|c| c.rate).sum();
    if total <= 0.0 {
        return Ok(Step { dt: f64::INFINITY, next: state.clone(), event: None });
    }
    let dt = exp_sample(rng, total);
    let u = rng.random::<f64>() * total;
    let k = pick(classes.iter().map(|c| c.rate), u);
    let ev = classes[k];
    Ok(Step { dt, next: apply(state, &ev), event: Some(ev) })
}

/// Aggregate (occupancy-vector) simulator.
#[derive(Debug, Clone)]
pub struct AggregateSim {
    n: u32,
    d: i32,
    lambda: f64,
    s: Vec<u32>,
    /// `p[i] = (s_i / n)^d`, `p[0] = 1`.
    p: Vec<f64>,
    pow_table: Option<Vec<f64>>,
    t: f64,
    events: u64,
    rng: ChaCha8Rng,
}

const POW_TABLE_LIMIT: u32 = 1 << 22;

impl AggregateSim {
    /// Starts from the empty system on stream `replication` of `cfg.seed`.
    pub fn new(cfg: &SystemConfig, replication: u64) -> Self {
        let s = vec![0; cfg.b];
        Self::build(cfg, s, replication)
    }

    pub fn with_state(cfg: &SystemConfig, state: &StateVector, replication: u64) -> Result<Self> {
        check_state(state, cfg)?;
        Ok(Self::build(cfg, state.as_slice().to_vec(), replication))
    }

    fn build(cfg: &SystemConfig, s: Vec<u32>, replication: u64) -> Self {
        let n = cfg.n;
        let d = cfg.d as i32;
        let pow_table = (n <= POW_TABLE_LIMIT)
            .then(|| (0..=n).map(|k| (k as f64 / n as f64).powi(d)).collect::<Vec<_>>());
        let mut sim = Self {
            n,
            d,
            lambda: cfg.lambda,
            p: vec![1.0; s.len() + 1],
            s,
            pow_table,
            t: 0.0,
            events: 0,
            rng: rng::stream(cfg.seed, replication),
        };
        for i in 0..sim.s.len() {
            sim.p[i + 1] = sim.power(sim.s[i]);
        }
        sim
    }

    #[inline]
    fn power(&self, k: u32) -> f64 {
        match &self.pow_table {
            Some(t) => t[k as usize],
            None => (k as f64 / self.n as f64).powi(self.d),
        }
    }

    pub fn state(&self) -> &[u32] {
        &self.s
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Draws the next holding time and transition without applying it.
    /// Returns `None` at an absorbing state.
    #[inline]
    fn draw(&mut self) -> Option<(f64, TransitionClass)> {
        let b = self.s.len();
        let admit = self.lambda * (1.0 - self.p[b]);
        let busy = self.s[0] as f64;
        let total = admit + busy;
        if total <= 0.0 {
            return None;
        }
        let dt = exp_sample(&mut self.rng, total);
        let u = self.rng.random::<f64>() * total;
        let ev = if u < admit {
            let p = &self.p;
            let lambda = self.lambda;
            let i = pick((1..=b).map(|i| lambda * (p[i - 1] - p[i])), u);
            TransitionClass { kind: TransitionKind::Arrival, level: i + 1, rate: lambda * (p[i] - p[i + 1]) }
        } else {
            let s = &self.s;
            let u = u - admit;
            let lvl = |i: usize| if i < b { s[i] } else { 0 };
            let i = pick((0..b).map(|i| (s[i] - lvl(i + 1)) as f64), u);
            TransitionClass { kind: TransitionKind::Departure, level: i + 1, rate: (s[i] - lvl(i + 1)) as f64 }
        };
        Some((dt, ev))
    }

    #[inline]
    fn apply(&mut self, ev: &TransitionClass) {
        let i = ev.level - 1;
        match ev.kind {
            TransitionKind::Arrival => self.s[i] += 1,
            TransitionKind::Departure => self.s[i] -= 1,
        }
        self.p[i + 1] = self.power(self.s[i]);
    }

    /// Runs until the horizon, reporting the path to `obs`.
    pub fn run<O: Observer>(&mut self, horizon: Horizon, obs: &mut O) -> Result<SimSummary> {
        horizon.validate()?;
        obs.start(self.t, &self.s);
        let (max_events, t_end) = match horizon {
            Horizon::Events(k) => (self.events + k, f64::INFINITY),
            Horizon::Time(t) => (u64::MAX, self.t + t),
        };
        while self.events < max_events {
            match self.draw() {
                None => {
                    if t_end.is_finite() {
                        obs.hold(self.t, t_end - self.t, &self.s);
                        self.t = t_end;
                    }
                    break;
                }
                Some((dt, ev)) => {
                    if self.t + dt >= t_end {
                        obs.hold(self.t, t_end - self.t, &self.s);
                        self.t = t_end;
                        break;
                    }
                    obs.hold(self.t, dt, &self.s);
                    self.t += dt;
                    self.apply(&ev);
                    self.events += 1;
                    obs.event(self.t, &self.s, &ev);
                }
            }
        }
        Ok(SimSummary { events: self.events, dropped: 0, end_time: self.t, final_state: self.s.clone() })
    }
}

/// Runs the aggregate simulator from the empty state and records snapshots.
pub fn simulate<O: Observer>(
    cfg: &SystemConfig,
    horizon: Horizon,
    policy: SnapshotPolicy,
    replication: u64,
    obs: &mut O,
) -> Result<(SimSummary, Vec<TrajectorySample>)> {
    let mut rec = SnapshotRecorder::new(policy);
    let mut sim = AggregateSim::new(cfg, replication);
    let summary = sim.run(horizon, &mut (&mut rec, obs))?;
    Ok((summary, rec.samples))
}

/// Result of [`step_per_queue`].
#[derive(Debug, Clone, PartialEq)]
pub struct QueueStep {
    pub dt: f64,
    pub queues: Vec<u32>,
    /// `None` for a dropped arrival or an absorbing state.
    pub event: Option<TransitionClass>,
}

/// Routes one arrival among `queues`: index of the first shortest of `d`
/// uniform samples, or `None` if that queue is full.
#[inline]
fn route(queues: &[u32], d: u32, b: u32, rng: &mut impl Rng) -> Option<usize> {
    let n = queues.len();
    let mut best = rng.random_range(0..n);
    for _ in 1..d {
        let j = rng.random_range(0..n);
        if queues[j] < queues[best] {
            best = j;
        }
    }
    (queues[best] < b).then_some(best)
}

/// Single step of the per-queue chain. Arrivals occur at rate `lambda`
/// (dropped ones included), departures at the number of busy servers.
pub fn step_per_queue(queues: &[u32], cfg: &SystemConfig, rng: &mut impl Rng) -> Result<QueueStep> {
    if queues.len() != cfg.n as usize || queues.iter().any(|&q| q as usize > cfg.b) {
        return Err(Error::InvalidState("queue lengths must be n values in [0, b]".into()));
    }
    let busy: Vec<usize> = (0..queues.len()).filter(|&i| queues[i] > 0).collect();
    let total = cfg.lambda + busy.len() as f64;
    let mut next = queues.to_vec();
    if total <= 0.0 {
        return Ok(QueueStep { dt: f64::INFINITY, queues: next, event: None });
    }
    let dt = exp_sample(rng, total);
    let u = rng.random::<f64>() * total;
    let event = if u < cfg.lambda {
        route(queues, cfg.d, cfg.b as u32, rng).map(|j| {
            next[j] += 1;
            TransitionClass { kind: TransitionKind::Arrival, level: next[j] as usize, rate: f64::NAN }
        })
    } else {
        let j = busy[rng.random_range(0..busy.len())];
        next[j] -= 1;
        Some(TransitionClass { kind: TransitionKind::Departure, level: queues[j] as usize, rate: f64::NAN })
    };
    Ok(QueueStep { dt, queues: next, event })
}

/// Per-queue simulator; `rate` fields of reported events are `NaN` since
/// no class rates are computed.
#[derive(Debug, Clone)]
pub struct PerQueueSim {
    d: u32,
    b: u32,
    lambda: f64,
    queues: Vec<u32>,
    busy: Vec<u32>,
    slot: Vec<u32>,
    s: Vec<u32>,
    t: f64,
    events: u64,
    dropped: u64,
    rng: ChaCha8Rng,
}

const NOT_BUSY: u32 = u32::MAX;

impl PerQueueSim {
    pub fn new(cfg: &SystemConfig, replication: u64) -> Self {
        let n = cfg.n as usize;
        Self {
            d: cfg.d,
            b: cfg.b as u32,
            lambda: cfg.lambda,
            queues: vec![0; n],
            busy: Vec::with_capacity(n),
            slot: vec![NOT_BUSY; n],
            s: vec![0; cfg.b],
            t: 0.0,
            events: 0,
            dropped: 0,
            rng: rng::stream(cfg.seed, replication),
        }
    }

    pub fn queues(&self) -> &[u32] {
        &self.queues
    }

    pub fn state(&self) -> &[u32] {
        &self.s
    }

    pub fn run<O: Observer>(&mut self, horizon: Horizon, obs: &mut O) -> Result<SimSummary> {
        horizon.validate()?;
        obs.start(self.t, &self.s);
        let (max_events, t_end) = match horizon {
            Horizon::Events(k) => (self.events + k, f64::INFINITY),
            Horizon::Time(t) => (u64::MAX, self.t + t),
        };
        while self.events < max_events {
            let total = self.lambda + self.busy.len() as f64;
            if total <= 0.0 {
                if t_end.is_finite() {
                    obs.hold(self.t, t_end - self.t, &self.s);
                    self.t = t_end;
                }
                break;
            }
            let dt = exp_sample(&mut self.rng, total);
            if self.t + dt >= t_end {
                obs.hold(self.t, t_end - self.t, &self.s);
                self.t = t_end;
                break;
            }
            obs.hold(self.t, dt, &self.s);
            self.t += dt;
            let u = self.rng.random::<f64>() * total;
            let ev = if u < self.lambda {
                match route(&self.queues, self.d, self.b, &mut self.rng) {
                    None => {
                        self.dropped += 1;
                        continue;
                    }
                    Some(j) => {
                        if self.queues[j] == 0 {
                            self.slot[j] = self.busy.len() as u32;
                            self.busy.push(j as u32);
                        }
                        self.queues[j] += 1;
                        let lvl = self.queues[j] as usize;
                        self.s[lvl - 1] += 1;
                        TransitionClass { kind: TransitionKind::Arrival, level: lvl, rate: f64::NAN }
                    }
                }
            } else {
                let k = self.rng.random_range(0..self.busy.len());
                let j = self.busy[k] as usize;
                let lvl = self.queues[j] as usize;
                self.s[lvl - 1] -= 1;
                self.queues[j] -= 1;
                if self.queues[j] == 0 {
                    self.busy.swap_remove(k);
                    if k < self.busy.len() {
                        self.slot[self.busy[k] as usize] = k as u32;
                    }
                    self.slot[j] = NOT_BUSY;
                }
                TransitionClass { kind: TransitionKind::Departure, level: lvl, rate: f64::NAN }
            };
            self.events += 1;
            obs.event(self.t, &self.s, &ev);
        }
        Ok(SimSummary { events: self.events, dropped: self.dropped, end_time: self.t, final_state: self.s.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::is_valid;

    struct Checker {
        n: u32,
        last_t: f64,
        ok: bool,
    }

    impl Observer for Checker {
        fn event(&mut self, t: f64, s: &[u32], _e: &TransitionClass) {
            self.ok &= t >= self.last_t && is_valid(self.n, s);
            self.last_t = t;
        }
    }

    #[test]
    fn empty_state_only_arrival() {
        let cfg = SystemConfig::with_lambda(4, 2.0, 2, 3).unwrap();
        let mut r = rng::stream(1, 0);
        for _ in 0..20 {
            let st = step_aggregate(&StateVector::zeros(4, 3), &cfg, &mut r).unwrap();
            let ev = st.event.unwrap();
            assert_eq!(ev.kind, TransitionKind::Arrival);
            assert_eq!(st.next.as_slice(), &[1, 0, 0]);
        }
    }

    #[test]
    fn full_state_only_departs_top_level() {
        let cfg = SystemConfig::with_lambda(3, 2.0, 2, 2).unwrap();
        let mut r = rng::stream(2, 0);
        for _ in 0..20 {
            let st = step_aggregate(&StateVector::full(3, 2), &cfg, &mut r).unwrap();
            let ev = st.event.unwrap();
            assert_eq!((ev.kind, ev.level, ev.rate), (TransitionKind::Departure, 2, 3.0));
        }
    }

    #[test]
    fn full_queues_drop_arrivals() {
        let cfg = SystemConfig::with_lambda(3, 2.9, 2, 2).unwrap();
        let mut r = rng::stream(3, 0);
        let mut drops = 0;
        for _ in 0..200 {
            let st = step_per_queue(&[2, 2, 2], &cfg, &mut r).unwrap();
            match st.event {
                None => {
                    drops += 1;
                    assert_eq!(st.queues, vec![2, 2, 2]);
                }
                Some(e) => assert_eq!(e.kind, TransitionKind::Departure),
            }
        }
        assert!(drops > 0);
    }

    #[test]
    fn idle_system_absorbs() {
        let cfg = SystemConfig::test_mode_idle(3, 2, 2);
        let st = StateVector::new(3, vec![2, 1]).unwrap();
        let mut sim = AggregateSim::with_state(&cfg, &st, 0).unwrap();
        let out = sim.run(Horizon::Time(100.0), &mut ()).unwrap();
        assert_eq!(out.final_state, vec![0, 0]);
        assert_eq!(out.end_time, 100.0);
        assert_eq!(out.events, 3);
    }

    #[test]
    fn runs_stay_in_state_space_and_are_reproducible() {
        let cfg = SystemConfig::with_lambda(10, 8.0, 2, 4).unwrap().seeded(11);
        let mut c = Checker { n: 10, last_t: 0.0, ok: true };
        let (a, snaps_a) = simulate(&cfg, Horizon::Events(20_000), SnapshotPolicy::EveryEvents(100), 0, &mut c).unwrap();
        assert!(c.ok);
        let (b, snaps_b) = simulate(&cfg, Horizon::Events(20_000), SnapshotPolicy::EveryEvents(100), 0, &mut ()).unwrap();
        assert_eq!(a, b);
        assert_eq!(snaps_a, snaps_b);
        assert_eq!(snaps_a.len(), 201);
        let (c2, _) = simulate(&cfg, Horizon::Events(20_000), SnapshotPolicy::None, 1, &mut ()).unwrap();
        assert_ne!(a.end_time, c2.end_time);
    }

    #[test]
    fn time_grid_snapshots() {
        let cfg = SystemConfig::with_lambda(5, 3.0, 2, 3).unwrap();
        let (_, snaps) = simulate(&cfg, Horizon::Time(10.0), SnapshotPolicy::TimeGrid(0.5), 0, &mut ()).unwrap();
        assert_eq!(snaps.len(), 20);
        for (k, s) in snaps.iter().enumerate() {
            assert!((s.t - 0.5 * k as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn per_queue_tracks_occupancy() {
        let cfg = SystemConfig::with_lambda(6, 5.0, 3, 3).unwrap().seeded(5);
        let mut sim = PerQueueSim::new(&cfg, 0);
        let mut c = Checker { n: 6, last_t: 0.0, ok: true };
        sim.run(Horizon::Events(50_000), &mut c).unwrap();
        assert!(c.ok);
        let rebuilt = StateVector::from_queue_lengths(6, 3, sim.queues()).unwrap();
        assert_eq!(rebuilt.as_slice(), sim.state());
    }

    #[test]
    fn rejects_bad_horizon() {
        let cfg = SystemConfig::with_lambda(2, 1.0, 1, 1).unwrap();
        assert!(simulate(&cfg, Horizon::Events(0), SnapshotPolicy::None, 0, &mut ()).is_err());
        assert!(simulate(&cfg, Horizon::Time(-1.0), SnapshotPolicy::None, 0, &mut ()).is_err());
    }
}
