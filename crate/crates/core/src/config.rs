use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regime::{self, RegimeSolution};

/// How an integer sample count is produced from a real-valued `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    Floor,
    Ceil,
    #[default]
    Nearest,
}

impl Rounding {
    pub fn apply(self, d: f64) -> u32 {
        let r = match self {
            Rounding::Floor => d.floor(),
            Rounding::Ceil => d.ceil(),
            Rounding::Nearest => d.round(),
        };
        r.max(1.0) as u32
    }
}

impl std::str::FromStr for Rounding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "floor" => Ok(Rounding::Floor),
            "ceil" => Ok(Rounding::Ceil),
            "nearest" => Ok(Rounding::Nearest),
            other => Err(Error::Config(format!("unknown rounding mode '{other}'"))),
        }
    }
}

/// Arrival rate in the heavy-traffic scaling `n - n^(1 - gamma)`.
pub fn heavy_traffic_lambda(n: f64, gamma: f64) -> f64 {
    n - n.powf(1.0 - gamma)
}

/// One load-balancing instance.
///
/// `d` is the integer sample count used by the simulators; `d_real` is the
/// value used by the analytic modules and equals `d` unless the instance
/// was built from a real solution of the implicit equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: u32,
    pub gamma: Option<f64>,
    pub lambda: f64,
    pub d: u32,
    pub d_real: f64,
    pub b: usize,
    pub mu: f64,
    pub seed: u64,
    /// Plateau index when known (given or inferred from `d`).
    pub m: Option<u32>,
}

impl SystemConfig {
    /// Instance with an explicit arrival rate.
    pub fn with_lambda(n: u32, lambda: f64, d: u32, b: usize) -> Result<Self> {
        let cfg = Self {
            n,
            gamma: None,
            lambda,
            d,
            d_real: d as f64,
            b,
            mu: 1.0,
            seed: 0,
            m: None,
        };
        cfg.validate(false, false)?;
        Ok(cfg)
    }

    /// Instance in the heavy-traffic scaling.
    pub fn with_gamma(n: u32, gamma: f64, d: u32, b: usize) -> Result<Self> {
        check_gamma(gamma)?;
        let mut cfg = Self::with_lambda(n, heavy_traffic_lambda(n as f64, gamma), d, b)?;
        cfg.gamma = Some(gamma);
        Ok(cfg)
    }

    /// Heavy-traffic instance whose `d` solves the implicit equation for `m`.
    pub fn from_regime(n: u32, gamma: f64, m: u32, b: usize, rounding: Rounding) -> Result<(Self, RegimeSolution)> {
        let sol = regime::solve_implicit_d(n as f64, gamma, m, rounding)?;
        let mut cfg = Self::with_gamma(n, gamma, sol.d_int.min(n.max(1)), b)?;
        cfg.d_real = sol.d_real;
        cfg.m = Some(m);
        Ok((cfg, sol))
    }

    /// Degenerate instance with zero arrivals, only for tests.
    pub fn test_mode_idle(n: u32, d: u32, b: usize) -> Self {
        Self {
            n,
            gamma: None,
            lambda: 0.0,
            d,
            d_real: d as f64,
            b,
            mu: 1.0,
            seed: 0,
            m: None,
        }
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Copy whose analytic `d` is `d_real` (simulation `d` unchanged).
    pub fn with_real_d(mut self, d_real: f64) -> Self {
        self.d_real = d_real;
        self
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn validate(&self, allow_d_above_n: bool, test_mode: bool) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.b == 0 {
            return Err(Error::Config("b must be at least 1".into()));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if self.d > self.n && !allow_d_above_n {
            return Err(Error::Config(format!("d = {} exceeds n = {}", self.d, self.n)));
        }
        if !(self.d_real >= 1.0) {
            return Err(Error::Config("real d must be at least 1".into()));
        }
        if (self.mu - 1.0).abs() > 0.0 {
            return Err(Error::Config("service rate is fixed at 1".into()));
        }
        let low_ok = if test_mode { self.lambda >= 0.0 } else { self.lambda > 0.0 };
        if !low_ok || !(self.lambda < self.nf()) {
            return Err(Error::Config(format!(
                "lambda = {} must lie in (0, n = {})",
                self.lambda, self.n
            )));
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 0.5 {
        Ok(())
    } else {
        Err(Error::Config(format!("gamma = {gamma} must lie in (0, 0.5)")))
    }
}

/// Sample count as given in a config document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DSpec {
    Int(u32),
    Real(f64),
}

/// JSON config document.
///
/// Either `gamma` or `lambda` (or both, if consistent) must be present.
/// Either `d` or `m` must be present; with only `m`, `d` solves the
/// implicit equation and is rounded per `rounding`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: u32,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub d: Option<DSpec>,
    #[serde(default)]
    pub m: Option<u32>,
    pub b: usize,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rounding: Rounding,
    #[serde(default)]
    pub allow_d_above_n: bool,
    #[serde(default)]
    pub test_mode: bool,
}

fn default_mu() -> f64 {
    1.0
}

/// Tolerance for the consistency of a `(gamma, lambda)` pair.
pub const LAMBDA_CONSISTENCY_TOL: f64 = 1e-9;

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolves the document into a validated instance, plus the regime
    /// solution when `d` came from the implicit equation.
    pub fn resolve(&self) -> Result<(SystemConfig, Option<RegimeSolution>)> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        let nf = n as f64;
        if let Some(g) = self.gamma {
            check_gamma(g)?;
        }
        let lambda = match (self.gamma, self.lambda) {
            (Some(g), Some(l)) => {
                let expected = heavy_traffic_lambda(nf, g);
                if (l - expected).abs() > LAMBDA_CONSISTENCY_TOL {
                    return Err(Error::Config(format!(
                        "lambda = {l} inconsistent with gamma = {g} (expected {expected})"
                    )));
                }
                l
            }
            (Some(g), None) => heavy_traffic_lambda(nf, g),
            (None, Some(l)) => l,
            (None, None) => return Err(Error::Config("one of gamma or lambda is required".into())),
        };
        let mut regime_sol = None;
        let (d, d_real) = match (self.d, self.m) {
            (Some(DSpec::Int(d)), _) => (d, d as f64),
            (Some(DSpec::Real(x)), _) => {
                if !(x >= 1.0) {
                    return Err(Error::Config(format!("d = {x} must be at least 1")));
                }
                (self.rounding.apply(x), x)
            }
            (None, Some(m)) => {
                let g = self
                    .gamma
                    .ok_or_else(|| Error::Config("solving d from m requires gamma".into()))?;
                let sol = regime::solve_implicit_d(nf, g, m, self.rounding)?;
                let pair = (sol.d_int, sol.d_real);
                regime_sol = Some(sol);
                pair
            }
            (None, None) => return Err(Error::Config("one of d or m is required".into())),
        };
        let cfg = SystemConfig {
            n,
            gamma: self.gamma,
            lambda,
            d,
            d_real,
            b: self.b,
            mu: self.mu,
            seed: self.seed,
            m: self.m,
        };
        cfg.validate(self.allow_d_above_n, self.test_mode)?;
        Ok((cfg, regime_sol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_modes() {
        assert_eq!(Rounding::Floor.apply(9.6), 9);
        assert_eq!(Rounding::Ceil.apply(9.2), 10);
        assert_eq!(Rounding::Nearest.apply(9.5), 10);
        assert_eq!(Rounding::Floor.apply(0.3), 1);
    }

    #[test]
    fn invariants_enforced() {
        assert!(SystemConfig::with_lambda(4, 4.0, 2, 2).is_err());
        assert!(SystemConfig::with_lambda(4, 0.0, 2, 2).is_err());
        assert!(SystemConfig::with_lambda(4, 1.0, 5, 2).is_err());
        assert!(SystemConfig::with_lambda(4, 1.0, 0, 2).is_err());
        assert!(SystemConfig::with_lambda(4, 1.0, 2, 0).is_err());
        assert!(SystemConfig::with_lambda(4, 1.0, 4, 1).is_ok());
        assert!(SystemConfig::with_gamma(100, 0.5, 2, 2).is_err());
    }

    #[test]
    fn json_gamma_and_lambda_must_agree() {
        let ok = r#"{"n": 100, "gamma": 0.5, "d": 2, "b": 3}"#;
        assert!(ConfigFile::from_json(ok).unwrap().resolve().is_err());
        let l = heavy_traffic_lambda(100.0, 0.25);
        let good = format!(r#"{{"n": 100, "gamma": 0.25, "lambda": {l}, "d": 2, "b": 3}}"#);
        assert!(ConfigFile::from_json(&good).unwrap().resolve().is_ok());
        let bad = format!(r#"{{"n": 100, "gamma": 0.25, "lambda": {}, "d": 2, "b": 3}}"#, l + 1e-6);
        assert!(ConfigFile::from_json(&bad).unwrap().resolve().is_err());
    }

    #[test]
    fn json_m_solves_for_d() {
        let doc = r#"{"n": 10000, "gamma": 0.3, "m": 2, "b": 4, "rounding": "floor"}"#;
        let (cfg, sol) = ConfigFile::from_json(doc).unwrap().resolve().unwrap();
        let sol = sol.unwrap();
        assert_eq!(cfg.d, sol.d_real.floor() as u32);
        assert_eq!(cfg.d_real, sol.d_real);
    }

    #[test]
    fn json_test_mode_allows_idle() {
        let doc = r#"{"n": 3, "lambda": 0.0, "d": 2, "b": 2}"#;
        assert!(ConfigFile::from_json(doc).unwrap().resolve().is_err());
        let doc = r#"{"n": 3, "lambda": 0.0, "d": 2, "b": 2, "test_mode": true}"#;
        assert!(ConfigFile::from_json(doc).unwrap().resolve().is_ok());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ConfigFile::from_json(r#"{"n": 3, "lambda": 1, "d": 2, "b": 2, "bogus": 1}"#).is_err());
    }
}
