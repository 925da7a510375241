//! Dormand-Prince 5(4) with cubic Hermite dense output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 10_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// An accepted step: state and derivative at both ends.
pub struct Accepted<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    pub f0: &'a [f64],
    pub f1: &'a [f64],
}

impl Accepted<'_> {
    /// Cubic Hermite interpolant at `t` in `[t0, t1]`.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        let s = if h > 0.0 { (t - self.t0) / h } else { 1.0 };
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        for (i, o) in out.iter_mut().enumerate() {
            *o = h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i];
        }
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`, calling `on_step` after
/// every accepted step.
pub fn dopri5<F, S>(f: F, t0: f64, y0: &[f64], t_end: f64, tol: Tolerances, mut on_step: S) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    S: FnMut(&Accepted<'_>) -> Result<()>,
{
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    if t_end <= t0 || dim == 0 {
        return Ok(y);
    }
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    f(t, &y, &mut k1);

    // initial step from the derivative scale
    let scale = |v: f64| tol.atol + tol.rtol * v.abs();
    let d0 = (y.iter().map(|&v| (v / scale(v)).powi(2)).sum::<f64>() / dim as f64).sqrt();
    let d1 = (y.iter().zip(&k1).map(|(&v, &g)| (g / scale(v)).powi(2)).sum::<f64>() / dim as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(t_end - t0);

    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > tol.max_steps {
            return Err(Error::NoConvergence { what: "ODE integration step budget", iterations: steps });
        }
        if t + h > t_end {
            h = t_end - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let stage = |tmp: &mut [f64], y: &[f64], parts: &[(f64, &[f64])]| {
            for i in 0..dim {
                let mut acc = 0.0;
                for &(a, k) in parts {
                    acc += a * k[i];
                }
                tmp[i] = y[i] + h * acc;
            }
        };
        stage(&mut tmp, &y, &[(A21, &k1)]);
        f(t + C2 * h, &tmp, &mut k2);
        stage(&mut tmp, &y, &[(A31, &k1), (A32, &k2)]);
        f(t + C3 * h, &tmp, &mut k3);
        stage(&mut tmp, &y, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(t + C4 * h, &tmp, &mut k4);
        stage(&mut tmp, &y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        f(t + C5 * h, &tmp, &mut k5);
        stage(&mut tmp, &y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        f(t + h, &tmp, &mut k6);
        stage(&mut y_new, &y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        f(t + h, &y_new, &mut k7);

        let mut err = 0.0;
        for i in 0..dim {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / dim as f64).sqrt();
        if err <= 1.0 {
            let t1 = t + h;
            on_step(&Accepted { t0: t, t1, y0: &y, y1: &y_new, f0: &k1, f1: &k7 })?;
            t = t1;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= if err <= 1.0 { factor } else { factor.min(1.0) };
    }
    Ok(y)
}
