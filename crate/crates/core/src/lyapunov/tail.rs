//! Tail bounds from negative drift outside a level set.
//!
//! If `V` has drift at most `-gamma_drift` on `{V >= B} ∩ E` and at most
//! `delta` on `{V >= B} \ E`, jumps of `V` are bounded by `nu_max` and the
//! upward rate by `q_max`, then
//! `P(V >= B + 2 nu_max j) <= alpha^j + beta P(not E)` with
//! `alpha = q_max nu_max / (q_max nu_max + gamma_drift)` and `beta = delta / gamma_drift + 1`.

use serde::{Deserialize, Serialize};

use super::{affine_drift, AffineMin, DriftModel};
use crate::config::SystemConfig;
use crate::ctmc::{generator_row, solve_stationary_exact, DEFAULT_MAX_STATES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBoundInput {
    pub b: f64,
    pub gamma_drift: f64,
    pub delta: f64,
    pub nu_max: f64,
    pub q_max: f64,
    pub j: u64,
    pub prob_not_e: f64,
    /// Global lower bound of `V`; informational.
    pub d_lower: f64,
}

impl TailBoundInput {
    /// Generic constants: `B = 0`, `nu_max = 1`, `q_max = delta = n`,
    /// `gamma_drift = sqrt(m n) log n`, `j = floor(gamma_drift / 2)`.
    pub fn template(n: f64, m: u32, prob_not_e: f64) -> Self {
        let t = (m as f64 * n).sqrt() * n.ln();
        Self {
            b: 0.0,
            gamma_drift: t,
            delta: n,
            nu_max: 1.0,
            q_max: n,
            j: (t / 2.0).floor().max(1.0) as u64,
            prob_not_e,
            d_lower: f64::NEG_INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.b >= 0.0
            && self.gamma_drift > 0.0
            && self.delta >= 0.0
            && self.nu_max > 0.0
            && self.q_max > 0.0
            && self.j >= 1
            && (0.0..=1.0).contains(&self.prob_not_e)
            && [self.gamma_drift, self.delta, self.nu_max, self.q_max].iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tail-bound input {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub alpha: f64,
    pub beta: f64,
    /// `log(alpha^j + beta * prob_not_e)`.
    pub log_bound: f64,
    /// `B + 2 nu_max j`.
    pub level: f64,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

pub fn ssc_tail_bound(input: &TailBoundInput) -> Result<TailBound> {
    input.validate()?;
    let qn = input.q_max * input.nu_max;
    let alpha = qn / (qn + input.gamma_drift);
    let beta = input.delta / input.gamma_drift + 1.0;
    // log(alpha) = -log1p(gamma / (q nu)) keeps precision when alpha is near 1.
    let log_alpha = -(input.gamma_drift / qn).ln_1p();
    let log_geo = input.j as f64 * log_alpha;
    let log_e = if input.prob_not_e > 0.0 { beta.ln() + input.prob_not_e.ln() } else { f64::NEG_INFINITY };
    Ok(TailBound {
        alpha,
        beta,
        log_bound: log_add_exp(log_geo, log_e),
        level: input.b + 2.0 * input.nu_max * input.j as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub j: u64,
    pub level: f64,
    /// Exact stationary `P(V >= level)`.
    pub prob: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactTailCheck {
    pub b: f64,
    pub gamma_drift: f64,
    pub nu_max: f64,
    pub q_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rows: Vec<TailRow>,
}

impl ExactTailCheck {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// Reads the tail-bound constants of `v` off the exact generator (with `E = S`)
/// and checks the bound against the exact stationary law for `j = 1..=j_max`.
///
/// `B` is the smallest value of `V` above which the drift is uniformly negative;
/// `gamma_drift` is the negated worst drift there.
pub fn exact_tail_check(cfg: &SystemConfig, v: &AffineMin, j_max: u64) -> Result<ExactTailCheck> {
    let pi = solve_stationary_exact(cfg, DEFAULT_MAX_STATES)?;
    let model = DriftModel::from_config(cfg);
    let mut nu_max: f64 = 0.0;
    let mut q_max: f64 = 0.0;
    let mut points = Vec::with_capacity(pi.states.len());
    for s in &pi.states {
        let here = v.value_at(s);
        let mut up = 0.0;
        for (next, rate) in generator_row(s, cfg)? {
            let jump = v.value_at(&next) - here;
            nu_max = nu_max.max(jump.abs());
            if jump > 0.0 {
                up += rate;
            }
        }
        q_max = q_max.max(up);
        points.push((here, affine_drift(v, &super::to_f64(s), &model)));
    }

    let mut levels: Vec<f64> = points.iter().map(|p| p.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let worst_above = |b: f64| points.iter().filter(|p| p.0 >= b).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let b = levels
        .iter()
        .copied()
        .find(|&b| worst_above(b) < 0.0)
        .ok_or_else(|| Error::InsufficientData("no level set with negative drift".into()))?;
    let gamma_drift = -worst_above(b);

    let mut rows = Vec::with_capacity(j_max as usize);
    let mut head = None;
    for j in 1..=j_max {
        let input = TailBoundInput {
            b,
            gamma_drift,
            delta: 0.0,
            nu_max,
            q_max,
            j,
            prob_not_e: 0.0,
            d_lower: levels[0],
        };
        let tb = ssc_tail_bound(&input)?;
        head.get_or_insert((tb.alpha, tb.beta));
        let prob: f64 = points.iter().zip(&pi.probs).filter(|(p, _)| p.0 >= tb.level).map(|(_, pr)| pr).sum();
        let bound = tb.log_bound.exp();
        rows.push(TailRow { j, level: tb.level, prob, bound, holds: prob <= bound });
    }
    let (alpha, beta) = head.unwrap_or((f64::NAN, f64::NAN));
    Ok(ExactTailCheck { b, gamma_drift, nu_max, q_max, alpha, beta, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::Affine;
    use proptest::prelude::*;

    #[test]
    fn template_alpha() {
        let n = 1e4;
        let input = TailBoundInput::template(n, 1, 0.0);
        let tb = ssc_tail_bound(&input).unwrap();
        let t = n.sqrt() * n.ln();
        assert!((tb.alpha - n / (n + t)).abs() < 1e-15);
        assert!((tb.beta - (n / t + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn bound_vanishes_without_exceptional_set() {
        let mut input = TailBoundInput::template(1e4, 1, 0.0);
        let mut last = 0.0;
        for j in [1, 10, 100, 10_000] {
            input.j = j;
            let lb = ssc_tail_bound(&input).unwrap().log_bound;
            assert!(lb < last);
            last = lb;
        }
        input.j = u64::MAX / 2;
        assert!(ssc_tail_bound(&input).unwrap().log_bound < -1e15);
    }

    #[test]
    fn tiny_instance_constants() {
        let cfg = SystemConfig::with_lambda(2, 1.5, 2, 2).unwrap();
        let v: AffineMin = Affine::level(2, 2, 1.0).into();
        let check = exact_tail_check(&cfg, &v, 20).unwrap();
        assert_eq!(check.b, 2.0);
        assert!((check.gamma_drift - 2.0).abs() < 1e-12);
        assert_eq!(check.nu_max, 1.0);
        assert!((check.q_max - 1.5).abs() < 1e-12);
        assert!((check.alpha - 3.0 / 7.0).abs() < 1e-12);
        assert!(check.all_hold());
    }

    proptest! {
        #[test]
        fn alpha_beta_ranges(
            g in 1e-6f64..1e6, delta in 0.0f64..1e6, nu in 1e-3f64..1e3, q in 1e-3f64..1e6,
            j in 1u64..1000, p in 0.0f64..=1.0,
        ) {
            let input = TailBoundInput { b: 0.0, gamma_drift: g, delta, nu_max: nu, q_max: q, j, prob_not_e: p, d_lower: 0.0 };
            let tb = ssc_tail_bound(&input).unwrap();
            prop_assert!(tb.alpha > 0.0 && tb.alpha < 1.0);
            prop_assert!(tb.beta >= 1.0);
            let direct = tb.alpha.powi(j as i32) + tb.beta * p;
            prop_assert!((tb.log_bound.exp() - direct).abs() <= 1e-9 * direct.max(1e-300));
        }
    }
}
