//! Drift of state functions under the occupancy generator.
//!
//! Every catalog member is a pointwise minimum of affine functions of the
//! occupancy vector, which makes its drift cheap and exact: a transition
//! moves one coordinate by one, so each branch changes by one coefficient.
//! States are carried as `f64` vectors here so that analytic scans can go
//! beyond the `u32` range used by the simulator.

mod catalog;
mod scan;
mod tail;
mod taylor;

pub use catalog::{Branch, CatalogParams, Family, LyapunovSpec, RegionSpec};
pub use scan::{drift_scan, scan_over_n, Counterexample, DriftTarget, ScanOptions, ScanReport, ScanSeries};
pub use tail::{exact_tail_check, ssc_tail_bound, ExactTailCheck, TailBound, TailBoundInput, TailRow};
pub use taylor::{taylor_checks, FTerm, TaylorGrid, TaylorPoint, TaylorReport, TaylorThreshold};

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::ctmc::generator_row;
use crate::error::Result;
use crate::state::StateVector;

/// `constant + sum_i coeffs[i-1] * s_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl Affine {
    pub fn constant(b: usize, c: f64) -> Self {
        Self { constant: c, coeffs: vec![0.0; b] }
    }

    /// `coef * s_i`; levels above `b` are identically zero and dropped.
    pub fn level(b: usize, i: usize, coef: f64) -> Self {
        let mut f = Self::constant(b, 0.0);
        f.add_level(i, coef);
        f
    }

    pub fn add_level(&mut self, i: usize, coef: f64) {
        if (1..=self.coeffs.len()).contains(&i) {
            self.coeffs[i - 1] += coef;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { constant: a * self.constant, coeffs: self.coeffs.iter().map(|c| a * c).collect() }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self {
            constant: self.constant + other.constant,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { constant: self.constant + c, coeffs: self.coeffs.clone() }
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(s).map(|(a, x)| a * x).sum::<f64>()
    }

    /// Index of the only level with a nonzero coefficient, if there is exactly one.
    pub fn single_level(&self) -> Option<usize> {
        let mut nz = self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0);
        let first = nz.next()?;
        nz.next().is_none().then_some(first.0 + 1)
    }
}

/// Pointwise minimum of one or more affine branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMin {
    pub branches: Vec<Affine>,
}

/// A function value together with the branch attaining it (lowest index on ties).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    pub branch: usize,
}

impl From<Affine> for AffineMin {
    fn from(f: Affine) -> Self {
        Self { branches: vec![f] }
    }
}

impl AffineMin {
    pub fn min_of(branches: Vec<Affine>) -> Self {
        assert!(!branches.is_empty(), "AffineMin needs at least one branch");
        Self { branches }
    }

    pub fn b(&self) -> usize {
        self.branches[0].coeffs.len()
    }

    pub fn evaluate(&self, s: &[f64]) -> Evaluation {
        let mut best = Evaluation { value: f64::INFINITY, branch: 0 };
        for (k, f) in self.branches.iter().enumerate() {
            let v = f.eval(s);
            if v < best.value {
                best = Evaluation { value: v, branch: k };
            }
        }
        best
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        self.evaluate(s).value
    }

    pub fn value_at(&self, state: &StateVector) -> f64 {
        self.value(&to_f64(state))
    }
}

/// Parameters of the generator used for drift evaluation; `n` may exceed `u32`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub n: f64,
    pub lambda: f64,
    pub d: u32,
    pub b: usize,
}

impl DriftModel {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self { n: cfg.nf(), lambda: cfg.lambda, d: cfg.d, b: cfg.b }
    }

    /// `(s_i / n)^d` for levels `0..=b`.
    fn powers(&self, s: &[f64]) -> Vec<f64> {
        std::iter::once(1.0).chain(s.iter().map(|&x| (x / self.n).powi(self.d as i32))).collect()
    }

    /// Checks that `s` is a nonincreasing integer vector in `[0, n]` of length `b`.
    pub fn is_state(&self, s: &[f64]) -> bool {
        s.len() == self.b
            && s.iter().all(|&x| x >= 0.0 && x <= self.n && x.fract() == 0.0)
            && s.windows(2).all(|w| w[0] >= w[1])
    }
}

pub fn to_f64(state: &StateVector) -> Vec<f64> {
    state.as_slice().iter().map(|&x| x as f64).collect()
}

/// Drift of an [`AffineMin`] at `s`.
///
/// Branch values enter only through their offsets from the current minimum,
/// so the result stays accurate when the values themselves are of order `n`.
pub fn affine_drift(f: &AffineMin, s: &[f64], model: &DriftModel) -> f64 {
    let vals: Vec<f64> = f.branches.iter().map(|g| g.eval(s)).collect();
    let base = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let rel: Vec<f64> = vals.iter().map(|v| v - base).collect();
    let step = |i: usize, sign: f64| {
        f.branches
            .iter()
            .zip(&rel)
            .map(|(g, r)| r + sign * g.coeffs[i])
            .fold(f64::INFINITY, f64::min)
    };
    let p = model.powers(s);
    let b = s.len();
    let mut total = 0.0;
    for i in 0..b {
        let up = model.lambda * (p[i] - p[i + 1]);
        if up > 0.0 {
            total += up * step(i, 1.0);
        }
        let down = s[i] - if i + 1 < b { s[i + 1] } else { 0.0 };
        if down > 0.0 {
            total += down * step(i, -1.0);
        }
    }
    total
}

/// Drift `sum_{s'} q(s, s') (V(s') - V(s))` of an arbitrary state function.
pub fn drift(v: impl Fn(&StateVector) -> f64, state: &StateVector, cfg: &SystemConfig) -> Result<f64> {
    let here = v(state);
    Ok(generator_row(state, cfg)?.iter().map(|(next, rate)| rate * (v(next) - here)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::{enumerate_states, solve_stationary_exact, DEFAULT_MAX_STATES};
    use proptest::prelude::*;

    fn cfg(n: u32, d: u32, b: usize, lambda: f64) -> SystemConfig {
        SystemConfig::with_lambda(n, lambda, d, b).unwrap()
    }

    fn sum_s(s: &StateVector) -> f64 {
        s.as_slice().iter().map(|&x| x as f64).sum()
    }

    #[test]
    fn constant_has_zero_drift() {
        let c = cfg(3, 2, 3, 2.4);
        for s in enumerate_states(3, 3) {
            assert_eq!(drift(|_| 7.5, &s, &c).unwrap(), 0.0);
        }
    }

    #[test]
    fn s1_at_empty_is_lambda() {
        let c = cfg(5, 2, 4, 4.0);
        let s = StateVector::zeros(5, 4);
        assert!((drift(|s| s.get(1) as f64, &s, &c).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn total_jobs_drift_is_admits_minus_departures() {
        let c = cfg(4, 3, 3, 3.2);
        for s in enumerate_states(4, 3) {
            let got = drift(sum_s, &s, &c).unwrap();
            let want = crate::ctmc::admit_rate(s.as_slice(), &c) - s.get(1) as f64;
            assert!((got - want).abs() < 1e-12, "{s:?}: {got} vs {want}");
        }
    }

    #[test]
    fn affine_drift_matches_generator_sum() {
        let c = cfg(4, 2, 3, 3.0);
        let model = DriftModel::from_config(&c);
        let f = AffineMin::min_of(vec![
            Affine { constant: 1.5, coeffs: vec![1.0, -2.0, 0.5] },
            Affine { constant: -0.5, coeffs: vec![0.0, 3.0, -1.0] },
        ]);
        for s in enumerate_states(4, 3) {
            let exact = drift(|t| f.value_at(t), &s, &c).unwrap();
            let fast = affine_drift(&f, &to_f64(&s), &model);
            assert!((exact - fast).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn stationary_balance() {
        for (n, d, b, lambda) in [(2, 2, 3, 1.6), (3, 3, 2, 1.5), (4, 2, 3, 3.2)] {
            let c = cfg(n, d, b, lambda);
            let pi = solve_stationary_exact(&c, DEFAULT_MAX_STATES).unwrap();
            let fns: [&dyn Fn(&StateVector) -> f64; 3] =
                [&sum_s, &|s| s.get(b) as f64, &|s| (s.get(1) as f64).powi(2) - s.get(2) as f64];
            for f in fns {
                let total: f64 =
                    pi.states.iter().zip(&pi.probs).map(|(s, p)| p * drift(f, s, &c).unwrap()).sum();
                assert!(total.abs() < 1e-8, "balance {total}");
            }
        }
    }

    proptest! {
        #[test]
        fn drift_is_linear(a in -5.0f64..5.0, k in -5.0f64..5.0, idx in 0usize..35) {
            let c = cfg(4, 3, 3, 3.0);
            let states = enumerate_states(4, 3);
            let s = &states[idx % states.len()];
            let v = |t: &StateVector| t.get(1) as f64 * t.get(2) as f64;
            let w = |t: &StateVector| (t.get(3) as f64).sqrt() - t.get(1) as f64;
            let lhs = drift(|t| a * v(t) + k * w(t), s, &c).unwrap();
            let rhs = a * drift(v, s, &c).unwrap() + k * drift(w, s, &c).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
