//! Grid checks of the elementary power inequalities used in drift bounds:
//!
//! * `a1`: `(1 - r log d/d + f)^d <= 2/d^r`
//! * `a2_lower`: `1 - d f <= (1 - f)^d`
//! * `a2_upper`: `(1 - f)^d <= 1 - d f + d^2 f^2/2`
//! * `a3`: `(n/(n + T))^(T/2) <= n^(-m log n/4)` with `T = sqrt(m n) log n`
//!
//! with `f(d) = c / d^p`. Both sides are compared as logarithms.

use serde::{Deserialize, Serialize};

/// Relative slack for comparisons whose two sides agree to within rounding.
const ROUNDOFF: f64 = 8.0 * f64::EPSILON;

/// `f(d) = c / d^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTerm {
    pub c: f64,
    pub p: f64,
}

impl FTerm {
    pub fn at(&self, d: f64) -> f64 {
        self.c / d.powf(self.p)
    }

    fn key(&self) -> String {
        format!("c={},p={}", self.c, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorGrid {
    pub d_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub f_family: Vec<FTerm>,
    pub n_grid: Vec<f64>,
    pub m_grid: Vec<u32>,
}

impl Default for TaylorGrid {
    fn default() -> Self {
        let d_grid = (0..=60).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let n_grid = (2..=13).flat_map(|e| [1.0, 3.0].map(|a| a * 10f64.powi(e))).collect();
        Self {
            d_grid,
            r_grid: vec![1.0, 2.0, 3.0],
            f_family: vec![
                FTerm { c: 0.0, p: 2.0 },
                FTerm { c: 1.0, p: 2.0 },
                FTerm { c: 5.0, p: 1.5 },
                FTerm { c: -1.0, p: 2.0 },
            ],
            n_grid,
            m_grid: vec![1, 2, 3, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorPoint {
    pub lemma: String,
    /// Parameter key excluding the grid variable (`d` or `n`).
    pub key: String,
    /// Grid variable value: `d` for a1/a2, `n` for a3.
    pub x: f64,
    pub lhs_log: f64,
    pub rhs_log: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorThreshold {
    pub lemma: String,
    pub key: String,
    /// Smallest grid value from which the inequality holds at every larger grid point.
    pub threshold: Option<f64>,
    pub violations_below: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub points: Vec<TaylorPoint>,
    pub thresholds: Vec<TaylorThreshold>,
}

impl TaylorReport {
    pub fn violations(&self, lemma: &str) -> usize {
        self.points.iter().filter(|p| p.lemma == lemma && !p.holds).count()
    }
}

fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs || (lhs.is_finite() && rhs.is_finite() && lhs - rhs <= ROUNDOFF * lhs.abs().max(rhs.abs()))
}

fn point(lemma: &str, key: &str, x: f64, lhs_log: f64, rhs_log: f64) -> TaylorPoint {
    TaylorPoint { lemma: lemma.into(), key: key.into(), x, lhs_log, rhs_log, holds: le(lhs_log, rhs_log) }
}

/// `log` of a possibly non-positive base; non-positive values map to `-inf`.
fn ln_pos(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn a1(d: f64, r: f64, f: &FTerm, key: &str) -> TaylorPoint {
    // Below zero the left side is at most |base|^d; a negative base only occurs
    // for tiny d where the claim is not asserted, and the sign makes it hold.
    let base = 1.0 - r * d.ln() / d + f.at(d);
    point("a1", key, d, d * ln_pos(base), std::f64::consts::LN_2 - r * d.ln())
}

fn a2(d: f64, f: &FTerm, key: &str) -> [TaylorPoint; 2] {
    let x = f.at(d);
    // (1 - f)^d in log space; f >= 1 makes it zero.
    let mid = if x < 1.0 { d * (-x).ln_1p() } else { f64::NEG_INFINITY };
    let lower = ln_pos(1.0 - d * x);
    let dx = d * x;
    let upper = ln_pos(1.0 - dx + 0.5 * dx * dx);
    [point("a2_lower", key, d, lower, mid), point("a2_upper", key, d, mid, upper)]
}

fn a3(n: f64, m: u32) -> TaylorPoint {
    let t = (m as f64 * n).sqrt() * n.ln();
    let lhs = -(t / 2.0) * (t / n).ln_1p();
    let rhs = -(m as f64) * n.ln().powi(2) / 4.0;
    point("a3", &format!("m={m}"), n, lhs, rhs)
}

fn thresholds(points: &[TaylorPoint]) -> Vec<TaylorThreshold> {
    let mut keys: Vec<(String, String)> = points.iter().map(|p| (p.lemma.clone(), p.key.clone())).collect();
    keys.dedup();
    keys.into_iter()
        .map(|(lemma, key)| {
            let mut series: Vec<&TaylorPoint> = points.iter().filter(|p| p.lemma == lemma && p.key == key).collect();
            series.sort_by(|a, b| a.x.total_cmp(&b.x));
            let last_bad = series.iter().rposition(|p| !p.holds);
            let (threshold, violations_below) = match last_bad {
                None => (series.first().map(|p| p.x), 0),
                Some(i) => (series.get(i + 1).map(|p| p.x), series[..=i].iter().filter(|p| !p.holds).count()),
            };
            TaylorThreshold { lemma, key, threshold, violations_below }
        })
        .collect()
}

pub fn taylor_checks(grid: &TaylorGrid) -> TaylorReport {
    let mut points = Vec::new();
    for &r in &grid.r_grid {
        for f in &grid.f_family {
            let key = format!("r={r},{}", f.key());
            points.extend(grid.d_grid.iter().map(|&d| a1(d, r, f, &key)));
        }
    }
    // The two-sided expansion assumes f >= 0.
    for f in grid.f_family.iter().filter(|f| f.c >= 0.0) {
        let key = f.key();
        let (lo, hi): (Vec<_>, Vec<_>) = grid.d_grid.iter().map(|&d| a2(d, f, &key)).map(|[a, b]| (a, b)).unzip();
        points.extend(lo);
        points.extend(hi);
    }
    for &m in &grid.m_grid {
        points.extend(grid.n_grid.iter().map(|&n| a3(n, m)));
    }
    let thresholds = thresholds(&points);
    TaylorReport { points, thresholds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn a1_example() {
        let p = a1(1e3, 2.0, &FTerm { c: 0.0, p: 2.0 }, "");
        assert!(p.holds);
        assert!(p.lhs_log.exp() <= 2e-6);
    }

    #[test]
    fn a3_example() {
        assert!(a3(1e6, 1).holds);
    }

    #[test]
    fn default_grid_reports_thresholds() {
        let report = taylor_checks(&TaylorGrid::default());
        assert_eq!(report.violations("a2_lower"), 0);
        for t in &report.thresholds {
            assert!(t.threshold.is_some(), "{t:?}");
        }
    }

    #[test]
    fn threshold_skips_early_failures() {
        let mk = |x: f64, holds| TaylorPoint { lemma: "a".into(), key: "k".into(), x, lhs_log: 0.0, rhs_log: 0.0, holds };
        let pts = vec![mk(1.0, false), mk(2.0, true), mk(3.0, false), mk(4.0, true), mk(5.0, true)];
        let t = &thresholds(&pts)[0];
        assert_eq!(t.threshold, Some(4.0));
        assert_eq!(t.violations_below, 2);
    }

    proptest! {
        #[test]
        fn bernoulli_lower_half(d in 1.0f64..1e9, f in 0.0f64..=1.0) {
            let [lower, _] = a2(d, &FTerm { c: f, p: 0.0 }, "");
            prop_assert!(lower.holds, "{lower:?}");
        }
    }
}
