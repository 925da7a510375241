//! Drift scans: search a region for states where a catalog member's drift
//! exceeds its target.
//!
//! Candidates come from three sources: corners of the per-coordinate
//! intervals implied by single-branch constraints, random draws inside those
//! intervals (uniform, log-distance from an endpoint, or at an endpoint), and
//! greedy local ascent on the drift from the worst candidates found.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::{CatalogParams, Family, LyapunovSpec, RegionSpec};
use super::{affine_drift, Affine, AffineMin, DriftModel};
use crate::config::Rounding;
use crate::error::Result;
use crate::regime::solve_implicit_d;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftTarget {
    /// `-sqrt(m n) log n`.
    Template,
    Zero,
    Custom(f64),
}

impl DriftTarget {
    pub fn value(&self, p: &CatalogParams) -> f64 {
        match *self {
            DriftTarget::Template => -p.t(),
            DriftTarget::Zero => 0.0,
            DriftTarget::Custom(x) => x,
        }
    }
}

impl std::str::FromStr for DriftTarget {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "template" => Ok(Self::Template),
            "zero" => Ok(Self::Zero),
            other => other
                .parse::<f64>()
                .map(Self::Custom)
                .map_err(|_| crate::Error::Config(format!("unknown drift target {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Number of random candidates drawn.
    pub budget: usize,
    pub seed: u64,
    pub target: DriftTarget,
    /// Only states with `V(s) >= value_floor` are scanned.
    pub value_floor: f64,
    /// Number of worst candidates refined by local ascent.
    pub ascent_starts: usize,
    pub max_counterexamples: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            budget: 10_000,
            seed: 0,
            target: DriftTarget::Template,
            value_floor: 0.0,
            ascent_starts: 16,
            max_counterexamples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub state: Vec<u64>,
    pub value: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub family: String,
    pub indices: Vec<(String, usize)>,
    pub n: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub d: u32,
    pub m: u32,
    pub b: usize,
    pub target: DriftTarget,
    pub target_value: f64,
    pub value_floor: f64,
    pub budget: usize,
    pub seed: u64,
    /// Candidates that fell inside the region with `V >= value_floor`.
    pub evaluated: usize,
    pub empty_region: bool,
    /// Share of evaluated candidates (ascent endpoints included) meeting the target.
    pub fraction_satisfying: Option<f64>,
    pub max_drift: Option<f64>,
    pub worst_state: Option<Vec<u64>>,
    pub counterexamples: Vec<Counterexample>,
}

impl ScanReport {
    pub fn holds(&self) -> bool {
        !self.empty_region && self.fraction_satisfying == Some(1.0)
    }
}

/// Acceptance test for a candidate: region membership and `V >= floor`.
struct Domain {
    model: DriftModel,
    v: AffineMin,
    region: RegionSpec,
    floor: f64,
    /// Single-branch constraints `g(s) <= 0`, used for interval propagation.
    linear: Vec<Affine>,
}

impl Domain {
    fn new(spec: &LyapunovSpec, floor: f64) -> Result<Self> {
        let v = spec.function()?;
        let region = spec.region()?;
        // V >= floor holds iff every branch is >= floor.
        let mut linear: Vec<Affine> = v.branches.iter().map(|br| br.scaled(-1.0).shifted(floor)).collect();
        linear.extend(region.constraints.iter().filter(|(_, g)| g.branches.len() == 1).map(|(_, g)| g.branches[0].clone()));
        Ok(Self { model: spec.params.drift_model(), v, region, floor, linear })
    }

    fn accepts(&self, s: &[f64]) -> bool {
        self.model.is_state(s) && self.region.contains(s) && self.v.value(s) >= self.floor
    }

    fn drift(&self, s: &[f64]) -> f64 {
        affine_drift(&self.v, s, &self.model)
    }

    /// Static box `[lo_i, hi_i]` from constraints on a single level.
    fn static_box(&self) -> (Vec<f64>, Vec<f64>) {
        let b = self.model.b;
        let mut lo = vec![0.0f64; b];
        let mut hi = vec![self.model.n; b];
        for g in &self.linear {
            if let Some(i) = g.single_level() {
                let (a, c) = (g.coeffs[i - 1], g.constant);
                let bound = -c / a;
                if a > 0.0 {
                    hi[i - 1] = hi[i - 1].min(bound.floor());
                } else {
                    lo[i - 1] = lo[i - 1].max(bound.ceil());
                }
            }
        }
        // Monotonicity: s_i <= s_{i-1} and s_i >= s_{i+1}.
        for i in 1..b {
            hi[i] = hi[i].min(hi[i - 1]);
        }
        for i in (0..b - 1).rev() {
            lo[i] = lo[i].max(lo[i + 1]);
        }
        (lo, hi)
    }

    /// Interval for coordinate `i` given the fixed prefix `s[..i]`, with later
    /// coordinates free in their static box.
    fn interval(&self, s: &[f64], i: usize, lo: &[f64], hi: &[f64]) -> Option<(f64, f64)> {
        let mut a_lo = lo[i];
        let mut a_hi = hi[i];
        if i > 0 {
            a_hi = a_hi.min(s[i - 1]);
        }
        for g in &self.linear {
            let a = g.coeffs[i];
            if a == 0.0 {
                continue;
            }
            let fixed: f64 = g.constant + (0..i).map(|q| g.coeffs[q] * s[q]).sum::<f64>();
            let free: f64 = (i + 1..s.len())
                .map(|q| {
                    let c = g.coeffs[q];
                    (c * lo[q]).min(c * hi[q].min(a_hi))
                })
                .sum();
            let bound = -(fixed + free) / a;
            if a > 0.0 {
                a_hi = a_hi.min(bound.floor());
            } else {
                a_lo = a_lo.max(bound.ceil());
            }
        }
        (a_lo <= a_hi).then_some((a_lo, a_hi))
    }
}

fn draw_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    let width = hi - lo;
    let x = match rng.random_range(0..4u8) {
        0 => lo,
        1 => hi,
        2 => lo + rng.random::<f64>() * width,
        _ => {
            // Distance from an endpoint, log-uniform on [1, width].
            let dist = (rng.random::<f64>() * width.ln()).exp();
            if rng.random::<bool>() {
                lo + dist
            } else {
                hi - dist
            }
        }
    };
    x.round().clamp(lo, hi)
}

fn sample(domain: &Domain, lo: &[f64], hi: &[f64], rng: &mut impl Rng) -> Option<Vec<f64>> {
    let b = lo.len();
    let mut s = vec![0.0; b];
    for i in 0..b {
        let (a, z) = domain.interval(&s, i, lo, hi)?;
        s[i] = draw_in(rng, a, z);
    }
    domain.accepts(&s).then_some(s)
}

fn corners(domain: &Domain, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    const MAX_CORNER_DIM: usize = 12;
    let b = lo.len();
    if b > MAX_CORNER_DIM {
        return vec![];
    }
    let mut out = Vec::new();
    for mask in 0u32..(1 << b) {
        let mut s = vec![0.0; b];
        let mut ok = true;
        for i in 0..b {
            match domain.interval(&s, i, lo, hi) {
                Some((a, z)) => s[i] = if mask >> i & 1 == 1 { z } else { a },
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && domain.accepts(&s) {
            out.push(s);
        }
    }
    out
}

/// Steepest single-coordinate ascent with power-of-two steps.
fn ascend(domain: &Domain, start: Vec<f64>, start_drift: f64) -> (Vec<f64>, f64) {
    const MAX_ITERS: usize = 400;
    let n = domain.model.n;
    let steps: Vec<f64> = std::iter::successors(Some(1.0f64), |x| (x * 2.0 <= n).then_some(x * 2.0)).collect();
    let (mut s, mut best) = (start, start_drift);
    for _ in 0..MAX_ITERS {
        let mut improved: Option<(Vec<f64>, f64)> = None;
        for i in 0..s.len() {
            for &h in &steps {
                for sign in [1.0, -1.0] {
                    let mut c = s.clone();
                    c[i] += sign * h;
                    if !domain.accepts(&c) {
                        continue;
                    }
                    let dv = domain.drift(&c);
                    if dv > improved.as_ref().map_or(best, |x| x.1) {
                        improved = Some((c, dv));
                    }
                }
            }
        }
        match improved {
            Some((c, dv)) => {
                s = c;
                best = dv;
            }
            None => break,
        }
    }
    (s, best)
}

fn by_drift_desc(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| {
        a.0.iter().zip(&b.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    })
}

fn to_u64(s: &[f64]) -> Vec<u64> {
    s.iter().map(|&x| x as u64).collect()
}

/// Scans the drift of `spec` over its region.
pub fn drift_scan(spec: &LyapunovSpec, opts: &ScanOptions) -> Result<ScanReport> {
    const CHUNK: usize = 256;
    let domain = Domain::new(spec, opts.value_floor)?;
    let (lo, hi) = domain.static_box();
    let box_empty = lo.iter().zip(&hi).any(|(a, z)| a > z);

    let mut pool: Vec<(Vec<f64>, f64)> = Vec::new();
    if !box_empty {
        pool.extend(corners(&domain, &lo, &hi).into_iter().map(|s| {
            let dv = domain.drift(&s);
            (s, dv)
        }));
        let chunks = opts.budget.div_ceil(CHUNK);
        let drawn: Vec<Vec<(Vec<f64>, f64)>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = rng::stream(opts.seed, c as u64);
                let count = CHUNK.min(opts.budget - c * CHUNK);
                (0..count)
                    .filter_map(|_| sample(&domain, &lo, &hi, &mut rng))
                    .map(|s| {
                        let dv = domain.drift(&s);
                        (s, dv)
                    })
                    .collect()
            })
            .collect();
        pool.extend(drawn.into_iter().flatten());
    }

    let p = &spec.params;
    let target_value = opts.target.value(p);
    let mut report = ScanReport {
        family: spec.family.name().to_string(),
        indices: spec.family.indices().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        n: p.n,
        gamma: p.gamma,
        lambda: p.lambda,
        d: p.d,
        m: p.m,
        b: p.b,
        target: opts.target,
        target_value,
        value_floor: opts.value_floor,
        budget: opts.budget,
        seed: opts.seed,
        evaluated: 0,
        empty_region: pool.is_empty(),
        fraction_satisfying: None,
        max_drift: None,
        worst_state: None,
        counterexamples: vec![],
    };
    if pool.is_empty() {
        return Ok(report);
    }

    pool.sort_by(by_drift_desc);
    pool.dedup_by(|a, b| a.0 == b.0);
    let refined: Vec<(Vec<f64>, f64)> = pool
        .iter()
        .take(opts.ascent_starts)
        .cloned()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(s, dv)| ascend(&domain, s, dv))
        .collect();
    pool.extend(refined);
    pool.sort_by(by_drift_desc);
    pool.dedup_by(|a, b| a.0 == b.0);

    let ok = pool.iter().filter(|(_, dv)| *dv <= target_value).count();
    report.evaluated = pool.len();
    report.fraction_satisfying = Some(ok as f64 / pool.len() as f64);
    report.max_drift = Some(pool[0].1);
    report.worst_state = Some(to_u64(&pool[0].0));
    report.counterexamples = pool
        .iter()
        .take_while(|(_, dv)| *dv > target_value)
        .take(opts.max_counterexamples)
        .map(|(s, dv)| Counterexample { state: to_u64(s), value: domain.v.value(s), drift: *dv })
        .collect();
    Ok(report)
}

/// Scans of one family over a grid of `n` in the heavy-traffic scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSeries {
    pub family: Family,
    pub gamma: f64,
    pub m: u32,
    pub b: usize,
    /// One report per grid point, in increasing `n`.
    pub reports: Vec<ScanReport>,
    /// Smallest grid `n` whose scan holds.
    pub first_holding_n: Option<f64>,
}

impl ScanSeries {
    fn first_index(&self) -> Option<usize> {
        self.reports.iter().position(ScanReport::holds)
    }

    pub fn first_holding(&self) -> Option<&ScanReport> {
        self.first_index().map(|k| &self.reports[k])
    }

    /// The grid point just below the first holding one.
    pub fn before_first_holding(&self) -> Option<&ScanReport> {
        self.first_index().and_then(|k| k.checked_sub(1)).map(|k| &self.reports[k])
    }
}

/// Runs [`drift_scan`] at every `n` of `n_grid`, with `d` the nearest integer
/// solution of the implicit equation for `(n, gamma, m)`.
pub fn scan_over_n(
    family: Family,
    gamma: f64,
    m: u32,
    b: usize,
    b_m2: f64,
    n_grid: &[f64],
    opts: &ScanOptions,
) -> Result<ScanSeries> {
    let mut grid = n_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let reports = grid
        .iter()
        .map(|&n| {
            let regime = solve_implicit_d(n, gamma, m, Rounding::Nearest)?;
            let params = CatalogParams::from_regime(&regime, b).with_b_m2(b_m2);
            drift_scan(&LyapunovSpec::new(family, params)?, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let first_holding_n = reports.iter().find(|r| r.holds()).map(|r| r.n);
    Ok(ScanSeries { family, gamma, m, b, reports, first_holding_n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{Branch, Family};

    fn spec(family: Family, n: f64, d: u32, m: u32, b: usize) -> LyapunovSpec {
        LyapunovSpec::new(family, CatalogParams::heavy_traffic(n, 0.1, d, m, b)).unwrap()
    }

    fn opts(budget: usize) -> ScanOptions {
        ScanOptions { budget, seed: 7, ..Default::default() }
    }

    #[test]
    fn sampled_states_are_in_domain() {
        let p = CatalogParams::heavy_traffic(1e6, 0.45, 120, 2, 4);
        let sp = LyapunovSpec::new(Family::LowerL { l: 0, k: 2, branch: Branch::Min }, p).unwrap();
        let domain = Domain::new(&sp, 0.0).unwrap();
        let (lo, hi) = domain.static_box();
        let mut rng = rng::stream(1, 0);
        let mut hits = 0;
        for _ in 0..2000 {
            if let Some(s) = sample(&domain, &lo, &hi, &mut rng) {
                assert!(domain.accepts(&s));
                hits += 1;
            }
        }
        assert!(hits > 100, "acceptance too low: {hits}");
    }

    #[test]
    fn scan_is_reproducible() {
        let sp = spec(Family::BaseV1, 1e4, 30, 1, 3);
        let a = drift_scan(&sp, &opts(2000)).unwrap();
        let b = drift_scan(&sp, &opts(2000)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.evaluated > 0);
    }

    #[test]
    fn empty_region_is_reported() {
        // V >= 1e30 is impossible.
        let sp = spec(Family::BaseV1, 1e3, 10, 1, 2);
        let r = drift_scan(&sp, &ScanOptions { value_floor: 1e30, ..opts(500) }).unwrap();
        assert!(r.empty_region && r.fraction_satisfying.is_none() && !r.holds());
    }

    #[test]
    fn failing_scan_lists_counterexamples() {
        // A positive target-violating drift is easy to find at tiny n.
        let sp = spec(Family::BaseV1, 10.0, 3, 1, 2);
        let r = drift_scan(&sp, &opts(500)).unwrap();
        if r.fraction_satisfying.is_some_and(|f| f < 1.0) {
            assert!(!r.counterexamples.is_empty());
            assert!(r.counterexamples.iter().all(|c| c.drift > r.target_value));
        }
    }

    #[test]
    fn target_parsing() {
        assert_eq!("template".parse::<DriftTarget>().unwrap(), DriftTarget::Template);
        assert_eq!("zero".parse::<DriftTarget>().unwrap(), DriftTarget::Zero);
        assert_eq!("-3.5".parse::<DriftTarget>().unwrap(), DriftTarget::Custom(-3.5));
        assert!("bogus".parse::<DriftTarget>().is_err());
    }
}
