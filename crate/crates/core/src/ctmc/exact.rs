//! Stationary distribution of small instances by direct solution.
//!
//! States are enumerated in lexicographic order, so the empty state comes
//! first. Up to [`DENSE_LIMIT`] states the GTH elimination (subtraction
//! free, hence accurate for any rate spread) is used; larger spaces fall
//! back to Gauss-Seidel sweeps on the balance equations.

use std::collections::HashMap;

use serde::Serialize;

use super::class_rates;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::state::StateVector;

pub const DEFAULT_MAX_STATES: usize = 200_000;
/// Largest state space solved with dense GTH elimination.
pub const DENSE_LIMIT: usize = 2_500;
/// Required `max |pi Q|`.
pub const RESIDUAL_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 200_000;

/// `C(n + b, b)`, the number of occupancy vectors.
pub fn state_space_size(n: u32, b: usize) -> u128 {
    let mut acc: u128 = 1;
    for k in 1..=b as u128 {
        acc = acc * (n as u128 + k) / k;
    }
    acc
}

/// All occupancy vectors for `(n, b)` in lexicographic order.
pub fn enumerate_states(n: u32, b: usize) -> Vec<StateVector> {
    fn rec(n: u32, prefix: &mut Vec<u32>, cap: u32, b: usize, out: &mut Vec<StateVector>) {
        if prefix.len() == b {
            out.push(StateVector::new(n, prefix.clone()).expect("monotone by construction"));
            return;
        }
        for v in 0..=cap {
            prefix.push(v);
            rec(n, prefix, v, b, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, &mut Vec::with_capacity(b), n, b, &mut out);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryDistribution {
    pub n: u32,
    pub b: usize,
    pub states: Vec<StateVector>,
    pub probs: Vec<f64>,
    /// `max_j |(pi Q)_j|`.
    pub residual: f64,
}

/// One entry of the JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct StateProb<'a> {
    pub state: &'a [u32],
    pub prob: f64,
}

impl StationaryDistribution {
    pub fn entries(&self) -> Vec<StateProb<'_>> {
        self.states
            .iter()
            .zip(&self.probs)
            .map(|(s, &p)| StateProb { state: s.as_slice(), prob: p })
            .collect()
    }

    /// Stationary expectation of `f`.
    pub fn expect(&self, f: impl Fn(&StateVector) -> f64) -> f64 {
        self.states.iter().zip(&self.probs).map(|(s, &p)| p * f(s)).sum()
    }

    /// `P(s_i >= k)`.
    pub fn prob_at_least(&self, i: usize, k: u32) -> f64 {
        self.expect(|s| (s.get(i) >= k) as u8 as f64)
    }

    /// `E[s_i]`.
    pub fn mean(&self, i: usize) -> f64 {
        self.expect(|s| s.get(i) as f64)
    }
}

/// Sparse generator: per state, `(target index, rate)` pairs.
fn build_generator(cfg: &SystemConfig, states: &[StateVector]) -> Vec<Vec<(usize, f64)>> {
    let index: HashMap<&[u32], usize> = states.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    states
        .iter()
        .map(|s| {
            class_rates(s, cfg)
                .iter()
                .filter(|c| c.rate > 0.0)
                .map(|c| {
                    let next = super::apply(s, c);
                    (index[next.as_slice()], c.rate)
                })
                .collect()
        })
        .collect()
}

fn gth(rows: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let n = rows.len();
    let mut a = vec![0.0f64; n * n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, r) in row {
            if j != i {
                a[i * n + j] += r;
            }
        }
    }
    for k in (1..n).rev() {
        let s: f64 = a[k * n..k * n + k].iter().sum();
        for i in 0..k {
            a[i * n + k] /= s;
        }
        for i in 0..k {
            let f = a[i * n + k];
            if f == 0.0 {
                continue;
            }
            let (head, tail) = a.split_at_mut(k * n);
            let src = &tail[..k];
            let dst = &mut head[i * n..i * n + k];
            for (x, &y) in dst.iter_mut().zip(src) {
                *x += f * y;
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        pi[j] = (0..j).map(|i| pi[i] * a[i * n + j]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    pi
}

fn residual(rows: &[Vec<(usize, f64)>], pi: &[f64]) -> f64 {
    let mut flow = vec![0.0; pi.len()];
    for (i, row) in rows.iter().enumerate() {
        let out: f64 = row.iter().map(|x| x.1).sum();
        flow[i] -= pi[i] * out;
        for &(j, r) in row {
            flow[j] += pi[i] * r;
        }
    }
    flow.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn gauss_seidel(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let n = rows.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut out = vec![0.0; n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, r) in row {
            incoming[j].push((i, r));
            out[i] += r;
        }
    }
    let mut pi = vec![1.0 / n as f64; n];
    for sweep in 0..MAX_SWEEPS {
        for j in 0..n {
            if out[j] > 0.0 {
                pi[j] = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum::<f64>() / out[j];
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if sweep % 16 == 15 && residual(rows, &pi) <= RESIDUAL_TOL * 0.1 {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence { what: "Gauss-Seidel stationary solve", iterations: MAX_SWEEPS })
}

/// Solves `pi Q = 0`, `sum pi = 1` over the full state space.
pub fn solve_stationary_exact(cfg: &SystemConfig, max_states: usize) -> Result<StationaryDistribution> {
    let size = state_space_size(cfg.n, cfg.b);
    if size > max_states as u128 {
        return Err(Error::StateSpaceTooLarge { size, limit: max_states });
    }
    let states = enumerate_states(cfg.n, cfg.b);
    let rows = build_generator(cfg, &states);
    let probs = if states.len() <= DENSE_LIMIT { gth(&rows) } else { gauss_seidel(&rows)? };
    let res = residual(&rows, &probs);
    if !(res <= RESIDUAL_TOL) {
        return Err(Error::NoConvergence { what: "stationary residual", iterations: 0 });
    }
    Ok(StationaryDistribution { n: cfg.n, b: cfg.b, states, probs, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_match_binomial() {
        for n in 1..6u32 {
            for b in 1..5usize {
                assert_eq!(enumerate_states(n, b).len() as u128, state_space_size(n, b));
            }
        }
        assert_eq!(state_space_size(3, 2), 10);
    }

    #[test]
    fn single_queue_birth_death() {
        let cfg = SystemConfig::with_lambda(1, 0.5, 1, 2).unwrap();
        let pi = solve_stationary_exact(&cfg, 100).unwrap();
        let expected = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (p, e) in pi.probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-14);
        }
    }

    #[test]
    fn single_queue_independent_of_d() {
        let cfg = SystemConfig::with_lambda(1, 0.7, 1, 4).unwrap();
        let base = solve_stationary_exact(&cfg, 100).unwrap().probs;
        for d in 2..=5 {
            let mut c = cfg.clone();
            c.d = d;
            let p = solve_stationary_exact(&c, 100).unwrap().probs;
            assert_eq!(p, base);
        }
    }

    #[test]
    fn sums_to_one_and_small_residual() {
        let cfg = SystemConfig::with_lambda(3, 2.4, 2, 2).unwrap();
        let pi = solve_stationary_exact(&cfg, 1000).unwrap();
        let total: f64 = pi.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(pi.residual <= RESIDUAL_TOL);
        assert!(pi.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn iterative_path_agrees_with_dense() {
        let cfg = SystemConfig::with_lambda(6, 4.5, 2, 3).unwrap();
        let states = enumerate_states(6, 3);
        let rows = build_generator(&cfg, &states);
        let a = gth(&rows);
        let b = gauss_seidel(&rows).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn too_large_rejected() {
        let cfg = SystemConfig::with_lambda(100, 50.0, 2, 10).unwrap();
        assert!(matches!(
            solve_stationary_exact(&cfg, DEFAULT_MAX_STATES),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn idle_chain_concentrates_on_empty() {
        let cfg = SystemConfig::test_mode_idle(2, 2, 2);
        let pi = solve_stationary_exact(&cfg, 100).unwrap();
        assert_eq!(pi.probs[0], 1.0);
    }
}
