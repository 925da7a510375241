//! Mean-field ODE for the occupancy fractions and its equilibria.
//!
//! With `x_0 = n` and `x_{b+1} = 0`,
//! `x_i' = lambda ((x_{i-1}/n)^d - (x_i/n)^d) - (x_i - x_{i+1})`.
//! Real-valued `d` is accepted throughout (`SystemConfig::d_real`).

pub mod rk;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::regime::RegimeSolution;

pub use rk::Tolerances;

/// Values below this are clamped to zero by the closed form.
pub const UNDERFLOW_CLAMP: f64 = 1e-300;

/// Right-hand side of the ODE at `x` (length `b`).
pub fn rhs(x: &[f64], cfg: &SystemConfig) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    rhs_into(x, cfg.nf(), cfg.lambda, cfg.d_real, &mut out);
    out
}

fn rhs_into(x: &[f64], n: f64, lambda: f64, d: f64, out: &mut [f64]) {
    let b = x.len();
    let pw = |v: f64| (v.max(0.0) / n).powf(d);
    let mut p_prev = 1.0;
    for i in 0..b {
        let p_i = pw(x[i]);
        let next = if i + 1 < b { x[i + 1] } else { 0.0 };
        out[i] = lambda * (p_prev - p_i) - (x[i] - next);
        p_prev = p_i;
    }
}

/// How much `x` leaves the cone `n >= x_1 >= ... >= x_b >= 0`.
pub fn cone_violation(x: &[f64], n: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut prev = n;
    for &v in x {
        worst = worst.max(v - prev);
        prev = v;
    }
    worst.max(-x.last().copied().unwrap_or(0.0))
}

/// Output times of [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputGrid {
    /// Every accepted step.
    Steps,
    /// Uniform grid `0, dt, 2 dt, ...` (dense output).
    Uniform(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Largest cone violation seen at an accepted step.
    pub max_cone_violation: f64,
}

impl FluidTrajectory {
    pub fn last(&self) -> &[f64] {
        self.x.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Cone slack allowed at accepted steps, relative to `n`.
pub const CONE_TOL: f64 = 1e-9;

/// Integrates from `x0` up to `t_end`. Fails if an accepted step leaves
/// the monotone cone by more than `CONE_TOL * n`.
pub fn integrate(
    x0: &[f64],
    cfg: &SystemConfig,
    t_end: f64,
    tol: Tolerances,
    grid: OutputGrid,
) -> Result<FluidTrajectory> {
    let n = cfg.nf();
    if x0.len() != cfg.b {
        return Err(Error::InvalidState(format!("expected {} coordinates", cfg.b)));
    }
    if cone_violation(x0, n) > CONE_TOL * n {
        return Err(Error::InvalidState("initial condition outside the monotone cone".into()));
    }
    let (lambda, d) = (cfg.lambda, cfg.d_real);
    let mut traj = FluidTrajectory { t: vec![0.0], x: vec![x0.to_vec()], max_cone_violation: 0.0 };
    let mut grid_k = 1u64;
    let mut buf = vec![0.0; x0.len()];
    rk::dopri5(
        |_, y, dy| rhs_into(y, n, lambda, d, dy),
        0.0,
        x0,
        t_end,
        tol,
        |st| {
            let v = cone_violation(st.y1, n);
            traj.max_cone_violation = traj.max_cone_violation.max(v);
            if v > CONE_TOL * n {
                return Err(Error::InvalidState(format!("trajectory left the cone at t = {}", st.t1)));
            }
            match grid {
                OutputGrid::Steps => {
                    traj.t.push(st.t1);
                    traj.x.push(st.y1.to_vec());
                }
                OutputGrid::Uniform(dt) => loop {
                    let tg = grid_k as f64 * dt;
                    if tg > st.t1 * (1.0 + 1e-15) || tg > t_end * (1.0 + 1e-15) {
                        break;
                    }
                    st.interpolate(tg.min(st.t1), &mut buf);
                    traj.t.push(tg);
                    traj.x.push(buf.clone());
                    grid_k += 1;
                },
            }
            Ok(())
        },
    )?;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    ClosedFormInfiniteB,
    NumericFiniteB,
    AsymptoticPlateau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub x_star: Vec<f64>,
    pub kind: FixedPointKind,
    /// `max_i |rhs_i(x_star)|` over `i < b` (closed form) or all `i`.
    pub residual: f64,
    /// Some entry was clamped to zero to avoid underflow.
    pub clamped: bool,
}

/// Infinite-buffer equilibrium `x_i = n (lambda/n)^((d^i - 1)/(d - 1))`,
/// truncated to `b` entries.
pub fn fixed_point_closed_form(cfg: &SystemConfig) -> FixedPoint {
    let n = cfg.nf();
    let d = cfg.d_real;
    let log_rho = (cfg.lambda / n).ln();
    let mut clamped = false;
    let x_star: Vec<f64> = (1..=cfg.b)
        .map(|i| {
            // (d^i - 1)/(d - 1) = 1 + d + ... + d^(i-1)
            let expo = if (d - 1.0).abs() < 1e-12 {
                i as f64
            } else {
                (d.powi(i as i32) - 1.0) / (d - 1.0)
            };
            let log_frac = expo * log_rho;
            let frac = if log_frac.is_nan() { 0.0 } else { log_frac.exp() };
            if frac < UNDERFLOW_CLAMP {
                clamped |= frac != 0.0 || log_frac.is_finite() || log_frac == f64::NEG_INFINITY;
                0.0
            } else {
                n * frac
            }
        })
        .collect();
    let r = rhs(&x_star, cfg);
    let residual = r.iter().take(cfg.b.saturating_sub(1)).fold(0.0f64, |m, v| m.max(v.abs()));
    FixedPoint { x_star, kind: FixedPointKind::ClosedFormInfiniteB, residual, clamped }
}

/// Default residual tolerance of [`fixed_point_finite_b`], relative to `n`.
pub const FINITE_B_TOL: f64 = 1e-12;

/// Equilibrium of the truncated system (`x_{b+1} = 0`).
///
/// Summing the stationarity equations from `i` to `b` gives
/// `x_i = lambda (p_{i-1} - p_b)` with `p_j = (x_j/n)^d`. For a trial
/// value `t` of `x_b` the recursion produces `x_b(t)`, decreasing in `t`,
/// so the equilibrium is the unique root of `t - x_b(t)` on `[0, lambda]`.
/// `tol` bounds `max |rhs|` relative to `n`.
pub fn fixed_point_finite_b(cfg: &SystemConfig, tol: f64) -> Result<FixedPoint> {
    let n = cfg.nf();
    let d = cfg.d_real;
    let lambda = cfg.lambda;
    let b = cfg.b;
    let pw = |v: f64| (v.max(0.0) / n).powf(d);
    let sweep = |t: f64, out: &mut Vec<f64>| -> f64 {
        out.clear();
        let pb = pw(t);
        let mut p_prev = 1.0;
        for _ in 0..b {
            let xi = lambda * (p_prev - pb);
            out.push(xi);
            p_prev = pw(xi);
        }
        t - out[b - 1]
    };
    let mut x = Vec::with_capacity(b);
    if lambda == 0.0 {
        return Ok(FixedPoint {
            x_star: vec![0.0; b],
            kind: FixedPointKind::NumericFiniteB,
            residual: 0.0,
            clamped: false,
        });
    }
    let (mut lo, mut hi) = (0.0f64, lambda);
    let mut iterations = 0;
    while hi - lo > f64::EPSILON * hi.max(1e-300) && iterations < 2000 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sweep(mid, &mut x) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // pick the endpoint with the smaller gap
    let g_lo = sweep(lo, &mut x).abs();
    let g_hi = sweep(hi, &mut x).abs();
    let t = if g_lo <= g_hi { lo } else { hi };
    sweep(t, &mut x);
    // x_b is the trial value itself, consistent with x_{b-1}
    x[b - 1] = t;
    let residual = rhs(&x, cfg).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(residual <= tol * n.max(1.0)) {
        return Err(Error::NoConvergence { what: "finite-b fixed point", iterations });
    }
    Ok(FixedPoint { x_star: x, kind: FixedPointKind::NumericFiniteB, residual, clamped: false })
}

/// Plateau approximation of the equilibrium around the regime's `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub fixed_point: FixedPoint,
    /// `gap[i - 1] = 2 m n log d / d^(m - i + 1)` for `i` in `1..=m`.
    pub gaps: Vec<f64>,
}

/// `x_i = n - 2 m n log d / d^(m-i+1)` for `i <= m`, zero above.
pub fn asymptotic_plateau(regime: &RegimeSolution, cfg: &SystemConfig) -> Plateau {
    let n = cfg.nf();
    let d = regime.d_real;
    let m = regime.m as usize;
    let gaps: Vec<f64> = (1..=m).map(|i| 2.0 * m as f64 * n * d.ln() / d.powi((m - i + 1) as i32)).collect();
    let x_star: Vec<f64> = (1..=cfg.b).map(|i| if i <= m { n - gaps[i - 1] } else { 0.0 }).collect();
    let residual = rhs(&x_star, cfg).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Plateau {
        fixed_point: FixedPoint { x_star, kind: FixedPointKind::AsymptoticPlateau, residual, clamped: false },
        gaps,
    }
}
