//! Concentration bands around the plateau and their violation exponents.
//!
//! With `T = sqrt(m n) log n`, `ld = log d` and `1{m>1}` the indicator:
//!
//! * lower: `n - 2mn ld/d^(m-i+1) - 4m d^(i-1) T - 16 m^3 n ld^2/d^(m-i+2)`
//! * upper: `n - 2mn ld/d^(m-i+1) + 19m d^(i-1) T + 39 m^3 n ld^2/d^(m-i+2) + n^(1-g)/d^(m-i) 1{m>1}`
//! * `s_{m+1} <= 18m d^(m-1) T + 36 m^3 n ld^2/d^2 + n^(1-g) 1{m>1}`
//! * `sum_{l >= m+2} s_l <= 1`
//!
//! Violation probabilities `(1/n)^(m log n / k)` are kept as natural-log
//! exponents `-m (log n)^2 / k`.

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::regime::RegimeSolution;

/// Inputs shared by every formula in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    pub n: f64,
    pub gamma: f64,
    pub m: u32,
    pub d: f64,
}

impl BandParams {
    pub fn new(n: f64, gamma: f64, m: u32, d: f64) -> Self {
        Self { n, gamma, m, d }
    }

    /// Uses the regime's real `d`.
    pub fn from_regime(regime: &RegimeSolution) -> Self {
        Self::new(regime.n, regime.gamma, regime.m, regime.d_real)
    }

    /// Uses the configuration's `d_real` with the plateau index `m`.
    pub fn from_config(cfg: &SystemConfig, m: u32) -> Self {
        Self::new(cfg.nf(), cfg.gamma.unwrap_or(f64::NAN), m, cfg.d_real)
    }

    fn mf(&self) -> f64 {
        self.m as f64
    }

    fn ld(&self) -> f64 {
        self.d.ln()
    }

    /// `sqrt(m n) log n`.
    pub fn t(&self) -> f64 {
        (self.mf() * self.n).sqrt() * self.n.ln()
    }

    fn multi(&self) -> f64 {
        if self.m > 1 { 1.0 } else { 0.0 }
    }

    fn dpow(&self, e: i64) -> f64 {
        self.d.powi(e as i32)
    }

    /// `2 m n log d / d^(m-i+1)`.
    pub fn gap(&self, i: usize) -> f64 {
        2.0 * self.mf() * self.n * self.ld() / self.dpow(self.m as i64 - i as i64 + 1)
    }

    pub fn leading(&self, i: usize) -> f64 {
        self.n - self.gap(i)
    }

    pub fn lower(&self, i: usize) -> f64 {
        let m = self.mf();
        self.leading(i)
            - 4.0 * m * self.dpow(i as i64 - 1) * self.t()
            - 16.0 * m.powi(3) * self.n * self.ld().powi(2) / self.dpow(self.m as i64 - i as i64 + 2)
    }

    pub fn upper(&self, i: usize) -> f64 {
        let m = self.mf();
        self.leading(i)
            + 19.0 * m * self.dpow(i as i64 - 1) * self.t()
            + 39.0 * m.powi(3) * self.n * self.ld().powi(2) / self.dpow(self.m as i64 - i as i64 + 2)
            + self.n.powf(1.0 - self.gamma) / self.dpow(self.m as i64 - i as i64) * self.multi()
    }

    pub fn s_mplus1_upper(&self) -> f64 {
        let m = self.mf();
        18.0 * m * self.dpow(self.m as i64 - 1) * self.t()
            + 36.0 * m.powi(3) * self.n * self.ld().powi(2) / self.dpow(2)
            + self.n.powf(1.0 - self.gamma) * self.multi()
    }

    /// Lower-order correction `B_i`; defined for any integer `i`.
    pub fn b_term(&self, i: usize) -> f64 {
        let m = self.mf();
        18.0 * m * self.dpow(i as i64 - 1) * self.t()
            + 36.0 * m.powi(3) * self.n * self.ld().powi(2) / self.dpow(self.m as i64 - i as i64 + 2)
            + self.n.powf(1.0 - self.gamma) / self.dpow(self.m as i64 - i as i64) * self.multi()
    }

    /// Ratio of the lower-band corrections to the leading gap (independent of `i`):
    /// `2 sqrt(m) d^m log n/(sqrt(n) log d) + 8 m^2 log d/d + d n^-g 1{m>1}/(2 m log d)`.
    pub fn lower_order_ratio(&self) -> f64 {
        let m = self.mf();
        2.0 * m.sqrt() * self.dpow(self.m as i64) * self.n.ln() / (self.n.sqrt() * self.ld())
            + 8.0 * m * m * self.ld() / self.d
            + self.d * self.n.powf(-self.gamma) * self.multi() / (2.0 * m * self.ld())
    }

    /// `log` of `(1/n)^(m log n / k)`.
    pub fn log_prob(&self, k: f64) -> f64 {
        -self.mf() * self.n.ln().powi(2) / k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub params: BandParams,
    /// Indexed by `i - 1` for `i` in `1..=m`; unclamped.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub leading: Vec<f64>,
    pub b_terms: Vec<f64>,
    /// `B_i / (m n log d / d^(m-i+1))`.
    pub b_ratio: Vec<f64>,
    pub s_mplus1_upper: f64,
    pub tail_sum_upper: f64,
    pub log_prob_lb: f64,
    pub log_prob_ub_i: f64,
    pub log_prob_ub_mplus1: f64,
    pub log_prob_tail: f64,
    pub lower_order_ratio: f64,
    /// `lower_i <= leading_i <= upper_i` for every `i`.
    pub ordered: bool,
}

pub fn lower_band(p: &BandParams) -> Vec<f64> {
    (1..=p.m as usize).map(|i| p.lower(i)).collect()
}

pub fn upper_band(p: &BandParams) -> Vec<f64> {
    (1..=p.m as usize).map(|i| p.upper(i)).collect()
}

pub fn b_terms(p: &BandParams) -> Vec<f64> {
    (1..=p.m as usize).map(|i| p.b_term(i)).collect()
}

pub fn band_report(p: &BandParams) -> BandReport {
    let m = p.m as usize;
    let lower = lower_band(p);
    let upper = upper_band(p);
    let leading: Vec<f64> = (1..=m).map(|i| p.leading(i)).collect();
    let b = b_terms(p);
    let b_ratio = (1..=m).map(|i| b[i - 1] / (p.gap(i) / 2.0)).collect();
    let ordered = (0..m).all(|k| lower[k] <= leading[k] && leading[k] <= upper[k]);
    BandReport {
        params: *p,
        lower,
        upper,
        leading,
        b_terms: b,
        b_ratio,
        s_mplus1_upper: p.s_mplus1_upper(),
        tail_sum_upper: 1.0,
        log_prob_lb: p.log_prob(5.0),
        log_prob_ub_i: p.log_prob(9.0),
        log_prob_ub_mplus1: p.log_prob(8.0),
        log_prob_tail: p.log_prob(7.0),
        lower_order_ratio: p.lower_order_ratio(),
        ordered,
    }
}

/// Per-band membership of one state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Containment {
    /// `lower_i <= s_i <= upper_i` per `i` in `1..=m`.
    pub per_index: Vec<bool>,
    pub lower_ok: Vec<bool>,
    pub upper_ok: Vec<bool>,
    pub mplus1_ok: bool,
    pub tail_ok: bool,
    pub all: bool,
}

/// Integer thresholds equivalent to the (clamped) real bands, for fast
/// repeated checks on raw occupancy slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandChecker {
    pub m: usize,
    /// `s_i >= lo[i-1]`.
    pub lo: Vec<u64>,
    /// `s_i <= hi[i-1]`.
    pub hi: Vec<u64>,
    pub mplus1_hi: u64,
    pub tail_hi: u64,
}

fn floor_cap(x: f64, n: f64) -> u64 {
    x.clamp(0.0, n).floor() as u64
}

impl BandChecker {
    pub fn new(report: &BandReport) -> Self {
        let n = report.params.n;
        Self {
            m: report.params.m as usize,
            lo: report.lower.iter().map(|&x| x.clamp(0.0, n).ceil() as u64).collect(),
            hi: report.upper.iter().map(|&x| floor_cap(x, n)).collect(),
            mplus1_hi: floor_cap(report.s_mplus1_upper, n),
            tail_hi: 1,
        }
    }

    #[inline]
    pub fn lower_ok(&self, s: &[u32], i: usize) -> bool {
        get(s, i) >= self.lo[i - 1]
    }

    #[inline]
    pub fn upper_ok(&self, s: &[u32], i: usize) -> bool {
        get(s, i) <= self.hi[i - 1]
    }

    #[inline]
    pub fn mplus1_ok(&self, s: &[u32]) -> bool {
        get(s, self.m + 1) <= self.mplus1_hi
    }

    #[inline]
    pub fn tail_ok(&self, s: &[u32]) -> bool {
        s.iter().skip(self.m + 1).map(|&v| v as u64).sum::<u64>() <= self.tail_hi
    }

    pub fn check(&self, s: &[u32]) -> Containment {
        let lower_ok: Vec<bool> = (1..=self.m).map(|i| self.lower_ok(s, i)).collect();
        let upper_ok: Vec<bool> = (1..=self.m).map(|i| self.upper_ok(s, i)).collect();
        let per_index: Vec<bool> = lower_ok.iter().zip(&upper_ok).map(|(a, b)| *a && *b).collect();
        let mplus1_ok = self.mplus1_ok(s);
        let tail_ok = self.tail_ok(s);
        let all = per_index.iter().all(|&x| x) && mplus1_ok && tail_ok;
        Containment { per_index, lower_ok, upper_ok, mplus1_ok, tail_ok, all }
    }

    #[inline]
    pub fn all(&self, s: &[u32]) -> bool {
        (1..=self.m).all(|i| self.lower_ok(s, i) && self.upper_ok(s, i)) && self.mplus1_ok(s) && self.tail_ok(s)
    }
}

#[inline]
fn get(s: &[u32], i: usize) -> u64 {
    if i == 0 || i > s.len() { 0 } else { s[i - 1] as u64 }
}

/// Band membership of `state`; bands are clamped to `[0, n]`.
pub fn band_containment(state: &[u32], report: &BandReport) -> Containment {
    BandChecker::new(report).check(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Rounding;
    use crate::regime::solve_implicit_d;

    fn params(n: f64, gamma: f64, m: u32) -> BandParams {
        BandParams::from_regime(&solve_implicit_d(n, gamma, m, Rounding::Nearest).unwrap())
    }

    #[test]
    fn lower_at_m_expanded() {
        let p = params(1e6, 0.3, 2);
        let (n, d, m, t) = (p.n, p.d, 2.0, p.t());
        let ld = d.ln();
        let hand = n - 2.0 * m * n * ld / d - 4.0 * m * d * t - 16.0 * m.powi(3) * n * ld * ld / (d * d);
        assert!((p.lower(2) - hand).abs() < 1e-9 * n);
    }

    #[test]
    fn upper_m1_has_no_indicator_terms() {
        let p = params(1e6, 0.25, 1);
        let (n, d, t) = (p.n, p.d, p.t());
        let ld = d.ln();
        let hand = n - 2.0 * n * ld / d + 19.0 * t + 39.0 * n * ld * ld / (d * d);
        assert!((p.upper(1) - hand).abs() < 1e-9 * n);
        let hand_b = 18.0 * t + 36.0 * n * ld * ld / (d * d);
        assert!((p.b_term(1) - hand_b).abs() < 1e-9 * n);
    }

    #[test]
    fn b_ladder() {
        for &(n, g, m) in &[(1e6, 0.3, 2u32), (1e9, 0.4, 3), (1e5, 0.2, 1)] {
            let p = params(n, g, m);
            for j in 1..m as usize {
                let lhs = p.d * p.b_term(j);
                let rhs = p.b_term(j + 1);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs, "{lhs} {rhs}");
            }
        }
    }

    #[test]
    fn upper_exceeds_leading_by_b() {
        for &(n, g, m) in &[(1e6, 0.3, 2u32), (1e12, 0.4, 3), (1e5, 0.2, 1)] {
            let p = params(n, g, m);
            for i in 1..=m as usize {
                assert!(p.upper(i) - p.leading(i) >= p.b_term(i));
            }
        }
    }

    #[test]
    fn ratio_shrinks_along_large_n() {
        let mut prev = f64::INFINITY;
        for k in 8..=30 {
            let r = params(10f64.powi(k), 0.3, 2).lower_order_ratio();
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 0.1);
    }

    #[test]
    fn exponents_in_log_space() {
        let p = params(1e6, 0.3, 2);
        let r = band_report(&p);
        let l2 = (1e6f64).ln().powi(2);
        assert!((r.log_prob_lb + 2.0 * l2 / 5.0).abs() < 1e-9);
        assert!((r.log_prob_ub_i + 2.0 * l2 / 9.0).abs() < 1e-9);
        assert!((r.log_prob_ub_mplus1 + 2.0 * l2 / 8.0).abs() < 1e-9);
        assert!((r.log_prob_tail + 2.0 * l2 / 7.0).abs() < 1e-9);
        assert_eq!(r.tail_sum_upper, 1.0);
    }

    #[test]
    fn containment_trivial_states() {
        let p = params(1e5, 0.25, 1);
        let r = band_report(&p);
        let n = 100_000u32;
        let full = vec![n; 4];
        let c = band_containment(&full, &r);
        assert!(r.s_mplus1_upper < n as f64);
        assert!(!c.mplus1_ok && !c.all);
        let zeros = vec![0u32; 4];
        assert!(r.lower[0] > 0.0);
        assert!(!band_containment(&zeros, &r).lower_ok[0]);
        let plateau: Vec<u32> = vec![r.leading[0].round() as u32, 0, 0, 0];
        assert!(band_containment(&plateau, &r).all);
    }
}
