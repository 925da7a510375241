//! Steady-state estimation from simulated paths.
//!
//! A [`Recorder`] integrates a list of [`Functional`]s of the occupancy
//! vector over time, closing a micro-batch every fixed number of events (or
//! fixed stretch of time). [`estimate`] then drops a warmup prefix, groups
//! the remaining micro-batches into contiguous batches and reports
//! time-weighted means with batch-means standard errors. Several
//! replications are pooled by treating their batches as one sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{BandChecker, BandParams, BandReport};
use crate::config::SystemConfig;
use crate::ctmc::{admit_rate, AggregateSim, Horizon, Observer, SimSummary, TransitionClass};
use crate::error::{Error, Result};

pub const DEFAULT_WARMUP: f64 = 0.2;
pub const DEFAULT_BATCHES: usize = 32;
pub const MIN_BATCHES: usize = 8;
/// Micro-batches recorded per run when none is specified.
pub const DEFAULT_MICRO_BATCHES: u64 = 1024;

/// A quantity integrated along the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// `s_i`.
    Level { i: usize },
    /// `1{s_i >= k}`.
    AtLeast { i: usize, k: u32 },
    /// `1{s_i <= k}`.
    AtMost { i: usize, k: u32 },
    /// Admitted arrival rate `lambda (1 - (s_b/n)^d)`.
    AdmitRate,
    /// Admitted arrival rate minus departure rate `s_1`.
    NetFlow,
    /// `s_i` at or above the lower band.
    BandLower { i: usize },
    /// `s_i` at or below the upper band.
    BandUpper { i: usize },
    /// `s_{m+1}` within its bound.
    BandMplus1,
    /// `sum_{l > m+1} s_l <= 1`.
    BandTail,
    /// Every band at once.
    BandAll,
}

impl Functional {
    fn needs_bands(&self) -> bool {
        matches!(
            self,
            Functional::BandLower { .. }
                | Functional::BandUpper { .. }
                | Functional::BandMplus1
                | Functional::BandTail
                | Functional::BandAll
        )
    }

    pub fn label(&self) -> String {
        match *self {
            Functional::Level { i } => format!("s_{i}"),
            Functional::AtLeast { i, k } => format!("P(s_{i}>={k})"),
            Functional::AtMost { i, k } => format!("P(s_{i}<={k})"),
            Functional::AdmitRate => "admit_rate".into(),
            Functional::NetFlow => "net_flow".into(),
            Functional::BandLower { i } => format!("lower_{i}"),
            Functional::BandUpper { i } => format!("upper_{i}"),
            Functional::BandMplus1 => "s_mplus1".into(),
            Functional::BandTail => "tail".into(),
            Functional::BandAll => "joint".into(),
        }
    }
}

/// `s_1..s_b`, admit rate and net flow.
pub fn standard_functionals(b: usize) -> Vec<Functional> {
    let mut out: Vec<Functional> = (1..=b).map(|i| Functional::Level { i }).collect();
    out.push(Functional::AdmitRate);
    out.push(Functional::NetFlow);
    out
}

/// Every band indicator for plateau index `m`.
pub fn band_functionals(m: usize) -> Vec<Functional> {
    let mut out = Vec::with_capacity(2 * m + 3);
    for i in 1..=m {
        out.push(Functional::BandLower { i });
        out.push(Functional::BandUpper { i });
    }
    out.extend([Functional::BandMplus1, Functional::BandTail, Functional::BandAll]);
    out
}

/// How micro-batch boundaries are placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicroSpec {
    Events(u64),
    Time(f64),
}

impl MicroSpec {
    /// About `count` micro-batches over `horizon`.
    pub fn for_horizon(horizon: Horizon, count: u64) -> Self {
        let count = count.max(1);
        match horizon {
            Horizon::Events(k) => MicroSpec::Events(k.div_ceil(count).max(1)),
            Horizon::Time(t) => MicroSpec::Time(t / count as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroBatch {
    pub start: f64,
    pub duration: f64,
    pub events: u64,
    /// Time integrals, one per functional.
    pub integrals: Vec<f64>,
}

/// Micro-batched integrals of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: u32,
    pub b: usize,
    pub replication: u64,
    pub functionals: Vec<Functional>,
    pub micro: Vec<MicroBatch>,
}

impl Trajectory {
    pub fn total_time(&self) -> f64 {
        self.micro.iter().map(|m| m.duration).sum()
    }
}

/// What to record and how.
#[derive(Debug, Clone, PartialEq)]
pub struct RecorderSetup {
    pub functionals: Vec<Functional>,
    pub bands: Option<BandChecker>,
    pub micro: MicroSpec,
}

impl RecorderSetup {
    pub fn new(functionals: Vec<Functional>, micro: MicroSpec) -> Self {
        Self { functionals, bands: None, micro }
    }

    /// Adds the band indicators of `report`.
    pub fn with_bands(mut self, report: &BandReport) -> Self {
        self.functionals.extend(band_functionals(report.params.m as usize));
        self.bands = Some(BandChecker::new(report));
        self
    }
}

/// [`Observer`] accumulating micro-batches.
#[derive(Debug, Clone)]
pub struct Recorder {
    cfg: SystemConfig,
    replication: u64,
    functionals: Vec<Functional>,
    bands: Option<BandChecker>,
    micro: MicroSpec,
    done: Vec<MicroBatch>,
    current: MicroBatch,
    values: Vec<f64>,
}

fn indicator(x: bool) -> f64 {
    if x { 1.0 } else { 0.0 }
}

impl Recorder {
    pub fn new(cfg: &SystemConfig, setup: &RecorderSetup, replication: u64) -> Result<Self> {
        let b = cfg.b;
        for f in &setup.functionals {
            let level_ok = match *f {
                Functional::Level { i } | Functional::AtLeast { i, .. } | Functional::AtMost { i, .. } => {
                    (1..=b).contains(&i)
                }
                Functional::BandLower { i } | Functional::BandUpper { i } => {
                    setup.bands.as_ref().is_some_and(|c| (1..=c.m).contains(&i))
                }
                _ => true,
            };
            if !level_ok || (f.needs_bands() && setup.bands.is_none()) {
                return Err(Error::Config(format!("functional {f:?} does not fit b = {b} and the given bands")));
            }
        }
        match setup.micro {
            MicroSpec::Events(k) if k > 0 => {}
            MicroSpec::Time(t) if t > 0.0 && t.is_finite() => {}
            _ => return Err(Error::Config("micro-batch size must be positive".into())),
        }
        let k = setup.functionals.len();
        Ok(Self {
            cfg: cfg.clone(),
            replication,
            functionals: setup.functionals.clone(),
            bands: setup.bands.clone(),
            micro: setup.micro,
            done: Vec::new(),
            current: MicroBatch { start: 0.0, duration: 0.0, events: 0, integrals: vec![0.0; k] },
            values: vec![0.0; k],
        })
    }

    fn evaluate(&mut self, s: &[u32]) {
        let level = |i: usize| s[i - 1];
        for (slot, f) in self.values.iter_mut().zip(&self.functionals) {
            *slot = match *f {
                Functional::Level { i } => level(i) as f64,
                Functional::AtLeast { i, k } => indicator(level(i) >= k),
                Functional::AtMost { i, k } => indicator(level(i) <= k),
                Functional::AdmitRate => admit_rate(s, &self.cfg),
                Functional::NetFlow => admit_rate(s, &self.cfg) - level(1) as f64,
                Functional::BandLower { i } => indicator(self.bands.as_ref().unwrap().lower_ok(s, i)),
                Functional::BandUpper { i } => indicator(self.bands.as_ref().unwrap().upper_ok(s, i)),
                Functional::BandMplus1 => indicator(self.bands.as_ref().unwrap().mplus1_ok(s)),
                Functional::BandTail => indicator(self.bands.as_ref().unwrap().tail_ok(s)),
                Functional::BandAll => indicator(self.bands.as_ref().unwrap().all(s)),
            };
        }
    }

    fn accumulate(&mut self, dt: f64) {
        self.current.duration += dt;
        for (acc, v) in self.current.integrals.iter_mut().zip(&self.values) {
            *acc += v * dt;
        }
    }

    fn close(&mut self, t: f64) {
        let k = self.values.len();
        let next = MicroBatch { start: t, duration: 0.0, events: 0, integrals: vec![0.0; k] };
        let full = std::mem::replace(&mut self.current, next);
        self.done.push(full);
    }

    /// Closes the open micro-batch (if it has any time) and returns the record.
    pub fn finish(mut self) -> Trajectory {
        if self.current.duration > 0.0 {
            let t = self.current.start + self.current.duration;
            self.close(t);
        }
        Trajectory {
            n: self.cfg.n,
            b: self.cfg.b,
            replication: self.replication,
            functionals: self.functionals,
            micro: self.done,
        }
    }
}

impl Observer for Recorder {
    fn start(&mut self, t: f64, _s: &[u32]) {
        self.current.start = t;
    }

    fn hold(&mut self, t0: f64, dt: f64, s: &[u32]) {
        self.evaluate(s);
        match self.micro {
            MicroSpec::Events(_) => self.accumulate(dt),
            MicroSpec::Time(width) => {
                let (mut t, end) = (t0, t0 + dt);
                loop {
                    let boundary = self.current.start + width;
                    if end < boundary {
                        self.accumulate(end - t);
                        break;
                    }
                    self.accumulate(boundary - t);
                    self.close(boundary);
                    t = boundary;
                }
            }
        }
    }

    fn event(&mut self, t: f64, _s: &[u32], _e: &TransitionClass) {
        self.current.events += 1;
        if let MicroSpec::Events(k) = self.micro {
            if self.current.events >= k {
                self.close(t);
            }
        }
    }
}

/// Runs one aggregate-simulator replication from the empty state.
pub fn record(cfg: &SystemConfig, horizon: Horizon, setup: &RecorderSetup, replication: u64) -> Result<(SimSummary, Trajectory)> {
    let mut rec = Recorder::new(cfg, setup, replication)?;
    let summary = AggregateSim::new(cfg, replication).run(horizon, &mut rec)?;
    Ok((summary, rec.finish()))
}

/// Replications `0..reps` in parallel, returned in replication order.
pub fn record_replications(
    cfg: &SystemConfig,
    horizon: Horizon,
    setup: &RecorderSetup,
    reps: u64,
) -> Result<Vec<(SimSummary, Trajectory)>> {
    (0..reps).into_par_iter().map(|r| record(cfg, horizon, setup, r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `|self - other| <= k * sqrt(se1^2 + se2^2)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.stderr.hypot(other.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateEstimate {
    pub n: u32,
    pub b: usize,
    pub functionals: Vec<Functional>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Simulated time dropped as warmup, summed over replications.
    pub warmup_discarded: f64,
    pub measured_time: f64,
    /// Total batches over all replications.
    pub n_batches: usize,
    pub replications: usize,
}

impl SteadyStateEstimate {
    pub fn get(&self, f: Functional) -> Option<Estimate> {
        let k = self.functionals.iter().position(|g| *g == f)?;
        Some(Estimate { value: self.mean[k], stderr: self.stderr[k] })
    }

    pub fn level(&self, i: usize) -> Option<Estimate> {
        self.get(Functional::Level { i })
    }

    pub fn at_least(&self, i: usize, k: u32) -> Option<Estimate> {
        self.get(Functional::AtLeast { i, k })
    }
}

struct Batch {
    duration: f64,
    integrals: Vec<f64>,
}

fn batches_of(tr: &Trajectory, warmup_fraction: f64, n_batches: usize) -> Result<(f64, Vec<Batch>)> {
    let cutoff = warmup_fraction * tr.total_time();
    let first_kept = if warmup_fraction > 0.0 {
        tr.micro.iter().position(|m| m.start >= cutoff).unwrap_or(tr.micro.len())
    } else {
        0
    };
    let kept = tr.micro.len() - first_kept;
    if kept < n_batches {
        return Err(Error::InsufficientData(format!(
            "replication {} has {kept} post-warmup micro-batches, need at least {n_batches}",
            tr.replication
        )));
    }
    let per = kept / n_batches;
    // The remainder is folded into the warmup so that batches stay equal-sized.
    let start = first_kept + kept - per * n_batches;
    let warmup: f64 = tr.micro[..start].iter().map(|m| m.duration).sum();
    let k = tr.functionals.len();
    let batches: Vec<Batch> = tr.micro[start..]
        .chunks(per)
        .map(|chunk| {
            let mut integrals = vec![0.0; k];
            for m in chunk {
                for (a, x) in integrals.iter_mut().zip(&m.integrals) {
                    *a += x;
                }
            }
            Batch { duration: chunk.iter().map(|m| m.duration).sum(), integrals }
        })
        .collect();
    if batches.iter().any(|b| b.duration <= 0.0) {
        return Err(Error::InsufficientData("a batch covers no simulated time".into()));
    }
    Ok((warmup, batches))
}

/// Pooled time averages over `trajectories` with batch-means standard errors.
///
/// Each replication contributes `n_batches` batches after its own warmup.
/// The result does not depend on the order of `trajectories`.
pub fn estimate(trajectories: &[Trajectory], warmup_fraction: f64, n_batches: usize) -> Result<SteadyStateEstimate> {
    if n_batches < MIN_BATCHES {
        return Err(Error::Config(format!("n_batches = {n_batches} is below {MIN_BATCHES}")));
    }
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(Error::Config(format!("warmup fraction {warmup_fraction} must lie in [0, 1)")));
    }
    let mut ordered: Vec<&Trajectory> = trajectories.iter().collect();
    ordered.sort_by_key(|t| t.replication);
    let head = *ordered.first().ok_or_else(|| Error::InsufficientData("no trajectories".into()))?;
    if ordered.iter().any(|t| t.functionals != head.functionals || t.n != head.n || t.b != head.b) {
        return Err(Error::Config("trajectories record different quantities".into()));
    }
    if ordered.windows(2).any(|w| w[0].replication == w[1].replication) {
        return Err(Error::Config("duplicate replication index".into()));
    }

    let mut warmup = 0.0;
    let mut batches = Vec::new();
    for tr in &ordered {
        let (w, b) = batches_of(tr, warmup_fraction, n_batches)?;
        warmup += w;
        batches.extend(b);
    }
    let k = head.functionals.len();
    let total_time: f64 = batches.iter().map(|b| b.duration).sum();
    let count = batches.len() as f64;
    let mean_len = total_time / count;
    let mut mean = vec![0.0; k];
    let mut stderr = vec![0.0; k];
    for j in 0..k {
        let m = batches.iter().map(|b| b.integrals[j]).sum::<f64>() / total_time;
        // Ratio-estimator residuals; equal to plain batch means for equal-length batches.
        let ss: f64 = batches.iter().map(|b| (b.integrals[j] - m * b.duration).powi(2)).sum();
        mean[j] = m;
        stderr[j] = (ss / (count * (count - 1.0))).sqrt() / mean_len;
    }
    Ok(SteadyStateEstimate {
        n: head.n,
        b: head.b,
        functionals: head.functionals.clone(),
        mean,
        stderr,
        warmup_discarded: warmup,
        measured_time: total_time,
        n_batches: batches.len(),
        replications: ordered.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFraction {
    pub band: String,
    pub fraction: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentVerdict {
    pub bands: Vec<BandFraction>,
    pub joint: Estimate,
    /// `log` of the summed per-band violation probabilities of the theorems.
    pub log_theorem_violation: f64,
    /// `1 - joint` exceeds the theorem's violation probability.
    pub exceeds_theorem: bool,
    /// `n` is too small for the bands to be in their asymptotic regime.
    pub sub_threshold: bool,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// Time fractions inside each band of `report` and inside all of them.
pub fn containment(est: &SteadyStateEstimate, report: &BandReport) -> Result<ContainmentVerdict> {
    let m = report.params.m as usize;
    let missing = || Error::Config("estimate lacks the band indicators of this report".into());
    let bands = band_functionals(m)
        .into_iter()
        .filter(|f| *f != Functional::BandAll)
        .map(|f| {
            let e = est.get(f).ok_or_else(missing)?;
            Ok(BandFraction { band: f.label(), fraction: e.value, stderr: e.stderr })
        })
        .collect::<Result<Vec<_>>>()?;
    let joint = est.get(Functional::BandAll).ok_or_else(missing)?;
    let mut terms = vec![report.log_prob_lb; m];
    terms.extend(std::iter::repeat_n(report.log_prob_ub_i, m));
    terms.extend([report.log_prob_ub_mplus1, report.log_prob_tail]);
    let log_theorem_violation = log_sum_exp(&terms);
    let miss = 1.0 - joint.value;
    let exceeds_theorem = miss > 0.0 && miss.ln() > log_theorem_violation;
    Ok(ContainmentVerdict {
        bands,
        joint,
        log_theorem_violation,
        exceeds_theorem,
        sub_threshold: report.lower_order_ratio >= 0.5 || !report.ordered,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyProfile {
    /// `f_i = mean(s_i)/n` for `i = 1..=b`.
    pub fractions: Vec<Estimate>,
    /// `f_i - f_{i+1}` with `f_{b+1} = 0`.
    pub increments: Vec<f64>,
    /// Estimated fraction of queues shorter than `i`, `1 - f_i`, for `i = 1..=m`.
    pub short_estimated: Vec<f64>,
    /// Predicted `n^-gamma d^(i-1)` for `i = 1..=m`.
    pub short_predicted: Vec<f64>,
}

/// Occupancy fractions, with predictions when `params` is given.
pub fn occupancy_profile(est: &SteadyStateEstimate, params: Option<&BandParams>) -> Result<OccupancyProfile> {
    let n = est.n as f64;
    let fractions = (1..=est.b)
        .map(|i| {
            let e = est.level(i).ok_or_else(|| Error::Config(format!("estimate lacks s_{i}")))?;
            Ok(Estimate { value: e.value / n, stderr: e.stderr / n })
        })
        .collect::<Result<Vec<_>>>()?;
    let increments = (0..fractions.len())
        .map(|k| fractions[k].value - fractions.get(k + 1).map_or(0.0, |f| f.value))
        .collect();
    let (short_estimated, short_predicted) = match params {
        Some(p) => {
            let m = (p.m as usize).min(est.b);
            (
                (1..=m).map(|i| 1.0 - fractions[i - 1].value).collect(),
                (1..=m).map(|i| p.n.powf(-p.gamma) * p.d.powi(i as i32 - 1)).collect(),
            )
        }
        None => (Vec::new(), Vec::new()),
    };
    Ok(OccupancyProfile { fractions, increments, short_estimated, short_predicted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::band_report;
    use crate::ctmc::TransitionKind;

    fn synthetic(cfg: &SystemConfig, setup: &RecorderSetup, states: &[Vec<u32>], dt: f64) -> Trajectory {
        let mut rec = Recorder::new(cfg, setup, 0).unwrap();
        rec.start(0.0, &states[0]);
        let ev = TransitionClass { kind: TransitionKind::Arrival, level: 1, rate: 1.0 };
        for (k, s) in states.iter().enumerate() {
            rec.hold(k as f64 * dt, dt, s);
            rec.event((k + 1) as f64 * dt, s, &ev);
        }
        rec.finish()
    }

    #[test]
    fn constant_path_has_zero_stderr() {
        let cfg = SystemConfig::with_lambda(10, 5.0, 2, 3).unwrap();
        let setup = RecorderSetup::new(standard_functionals(3), MicroSpec::Events(4));
        let states = vec![vec![3, 2, 0]; 400];
        let est = estimate(&[synthetic(&cfg, &setup, &states, 0.5)], 0.2, 32).unwrap();
        assert_eq!(est.level(1).unwrap(), Estimate { value: 3.0, stderr: 0.0 });
        assert_eq!(est.level(2).unwrap(), Estimate { value: 2.0, stderr: 0.0 });
        assert_eq!(est.n_batches, 32);
        assert!(est.warmup_discarded >= 0.2 * 200.0);
    }

    #[test]
    fn time_micro_batches_split_holds() {
        let cfg = SystemConfig::with_lambda(4, 2.0, 2, 2).unwrap();
        let setup = RecorderSetup::new(vec![Functional::Level { i: 1 }], MicroSpec::Time(1.0));
        let states: Vec<Vec<u32>> = (0..10).map(|k| vec![k % 3, 0]).collect();
        let tr = synthetic(&cfg, &setup, &states, 2.5);
        assert_eq!(tr.micro.len(), 25);
        assert!(tr.micro.iter().all(|m| (m.duration - 1.0).abs() < 1e-12));
        let total: f64 = tr.micro.iter().map(|m| m.integrals[0]).sum();
        let want: f64 = states.iter().map(|s| s[0] as f64 * 2.5).sum();
        assert!((total - want).abs() < 1e-9);
    }

    #[test]
    fn too_few_batches_or_data() {
        let cfg = SystemConfig::with_lambda(4, 2.0, 2, 2).unwrap();
        let setup = RecorderSetup::new(vec![Functional::Level { i: 1 }], MicroSpec::Events(1));
        let tr = synthetic(&cfg, &setup, &vec![vec![1, 0]; 5], 1.0);
        assert!(matches!(estimate(std::slice::from_ref(&tr), 0.2, 4), Err(Error::Config(_))));
        assert!(matches!(estimate(&[tr], 0.2, 8), Err(Error::InsufficientData(_))));
        assert!(matches!(estimate(&[], 0.2, 8), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pooling_is_order_independent() {
        let cfg = SystemConfig::with_lambda(5, 4.0, 2, 3).unwrap().seeded(3);
        let setup = RecorderSetup::new(standard_functionals(3), MicroSpec::Events(500));
        let runs: Vec<Trajectory> =
            record_replications(&cfg, Horizon::Events(50_000), &setup, 3).unwrap().into_iter().map(|r| r.1).collect();
        let a = estimate(&runs, 0.2, 8).unwrap();
        let rev: Vec<Trajectory> = runs.iter().rev().cloned().collect();
        assert_eq!(a, estimate(&rev, 0.2, 8).unwrap());
        assert_eq!(a.n_batches, 24);
    }

    #[test]
    fn mm1_busy_fraction() {
        let cfg = SystemConfig::with_lambda(1, 0.5, 1, 5).unwrap().seeded(11);
        let setup = RecorderSetup::new(standard_functionals(5), MicroSpec::for_horizon(Horizon::Events(2_000_000), 1024));
        let (_, tr) = record(&cfg, Horizon::Events(2_000_000), &setup, 0).unwrap();
        let est = estimate(&[tr], DEFAULT_WARMUP, DEFAULT_BATCHES).unwrap();
        let busy = est.level(1).unwrap();
        let exact = 1.0 - 0.5 / (1.0 - 0.5f64.powi(6));
        assert!((busy.value - exact).abs() <= 3.0 * busy.stderr, "{busy:?} vs {exact}");
        assert!((exact - 0.49206).abs() < 5e-6);
    }

    #[test]
    fn throughput_identity_and_monotone_means() {
        let cfg = SystemConfig::with_gamma(50, 0.3, 3, 5).unwrap().seeded(5);
        let setup = RecorderSetup::new(standard_functionals(5), MicroSpec::for_horizon(Horizon::Events(1_000_000), 1024));
        let (_, tr) = record(&cfg, Horizon::Events(1_000_000), &setup, 0).unwrap();
        let est = estimate(&[tr], DEFAULT_WARMUP, DEFAULT_BATCHES).unwrap();
        let net = est.get(Functional::NetFlow).unwrap();
        assert!(net.value.abs() <= 3.0 * net.stderr, "{net:?}");
        let means: Vec<f64> = (1..=5).map(|i| est.level(i).unwrap().value).collect();
        assert!(means.windows(2).all(|w| w[0] >= w[1]), "{means:?}");
        assert!(means.iter().all(|&x| (0.0..=50.0).contains(&x)));
    }

    #[test]
    fn disjoint_seeds_agree() {
        let setup = RecorderSetup::new(standard_functionals(4), MicroSpec::for_horizon(Horizon::Events(400_000), 1024));
        let run = |seed| {
            let cfg = SystemConfig::with_lambda(8, 6.4, 2, 4).unwrap().seeded(seed);
            let (_, tr) = record(&cfg, Horizon::Events(400_000), &setup, 0).unwrap();
            estimate(&[tr], DEFAULT_WARMUP, DEFAULT_BATCHES).unwrap()
        };
        let (a, b) = (run(100), run(200));
        for i in 1..=4 {
            assert!(a.level(i).unwrap().agrees_with(&b.level(i).unwrap(), 3.0), "s_{i}");
        }
    }

    #[test]
    fn stderr_shrinks_with_run_length() {
        let cfg = SystemConfig::with_lambda(10, 8.0, 2, 5).unwrap().seeded(21);
        let se = |events: u64| {
            let setup = RecorderSetup::new(standard_functionals(5), MicroSpec::for_horizon(Horizon::Events(events), 1024));
            let (_, tr) = record(&cfg, Horizon::Events(events), &setup, 0).unwrap();
            estimate(&[tr], DEFAULT_WARMUP, 64).unwrap().level(1).unwrap().stderr
        };
        let ratio = se(800_000) / se(200_000);
        assert!((0.3..=0.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn containment_of_synthetic_paths() {
        let n = 100_000u32;
        let (cfg, sol) = SystemConfig::from_regime(n, 0.25, 1, 4, crate::Rounding::Nearest).unwrap();
        let report = band_report(&BandParams::from_regime(&sol));
        let setup = RecorderSetup::new(standard_functionals(4), MicroSpec::Events(2)).with_bands(&report);
        let checker = BandChecker::new(&report);
        let pinned = vec![vec![checker.lo[0] as u32, 0, 0, 0]; 64];
        let est = estimate(&[synthetic(&cfg, &setup, &pinned, 1.0)], 0.0, 8).unwrap();
        let v = containment(&est, &report).unwrap();
        assert_eq!(v.joint.value, 1.0);
        assert!(!v.exceeds_theorem);

        let empty = vec![vec![0; 4]; 64];
        let est = estimate(&[synthetic(&cfg, &setup, &empty, 1.0)], 0.0, 8).unwrap();
        let v = containment(&est, &report).unwrap();
        assert_eq!(v.bands[0].band, "lower_1");
        assert_eq!(v.bands[0].fraction, 0.0);
        assert!(v.exceeds_theorem);
        let prof = occupancy_profile(&est, None).unwrap();
        assert!(prof.fractions.iter().all(|f| f.value == 0.0));
    }

    #[test]
    fn profile_predictions() {
        let cfg = SystemConfig::with_lambda(10, 5.0, 2, 3).unwrap();
        let setup = RecorderSetup::new(standard_functionals(3), MicroSpec::Events(1));
        let est = estimate(&[synthetic(&cfg, &setup, &vec![vec![8, 4, 1]; 16], 1.0)], 0.0, 8).unwrap();
        let p = BandParams::new(10.0, 0.3, 2, 3.0);
        let prof = occupancy_profile(&est, Some(&p)).unwrap();
        assert_eq!(prof.increments.len(), 3);
        assert!((prof.increments[0] - 0.4).abs() < 1e-12);
        assert!((prof.increments[2] - 0.1).abs() < 1e-12);
        assert!((prof.short_predicted[1] - 10f64.powf(-0.3) * 3.0).abs() < 1e-12);
        assert!((prof.short_estimated[0] - 0.2).abs() < 1e-12);
    }
}
