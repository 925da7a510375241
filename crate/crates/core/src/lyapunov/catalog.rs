//! The Lyapunov catalog and the regions on which each member's drift is analyzed.
//!
//! Shorthand: `T = sqrt(m n) log n`, `ld = log d`, `nld = n log d`.

use serde::{Deserialize, Serialize};

use super::{Affine, AffineMin, Evaluation};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::regime::RegimeSolution;
use crate::state::StateVector;

/// Instance parameters for the catalog. `n` is real so that analytic scans can
/// exceed the simulator's range; `d` is the integer used by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogParams {
    pub n: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub d: u32,
    pub m: u32,
    pub b: usize,
    /// Cap on `sum_{l >= m+2} s_l` assumed by the upper-bound family.
    pub b_m2: f64,
}

impl CatalogParams {
    /// Heavy-traffic instance `lambda = n - n^(1-gamma)` with the default cap `b_m2 = 1`.
    pub fn heavy_traffic(n: f64, gamma: f64, d: u32, m: u32, b: usize) -> Self {
        let lambda = crate::config::heavy_traffic_lambda(n, gamma);
        Self { n, gamma, lambda, d, m, b, b_m2: 1.0 }
    }

    /// Uses the integer `d` of the regime solution.
    pub fn from_regime(regime: &RegimeSolution, b: usize) -> Self {
        Self::heavy_traffic(regime.n, regime.gamma, regime.d_int, regime.m, b)
    }

    pub fn from_config(cfg: &SystemConfig, m: u32) -> Self {
        Self {
            n: cfg.nf(),
            gamma: cfg.gamma.unwrap_or_else(|| 1.0 - (cfg.nf() - cfg.lambda).ln() / cfg.nf().ln()),
            lambda: cfg.lambda,
            d: cfg.d,
            m,
            b: cfg.b,
            b_m2: 1.0,
        }
    }

    pub fn with_b_m2(mut self, b_m2: f64) -> Self {
        self.b_m2 = b_m2;
        self
    }

    pub fn drift_model(&self) -> super::DriftModel {
        super::DriftModel { n: self.n, lambda: self.lambda, d: self.d, b: self.b }
    }

    /// `sqrt(m n) log n`.
    pub fn t(&self) -> f64 {
        (self.mf() * self.n).sqrt() * self.n.ln()
    }

    fn mf(&self) -> f64 {
        self.m as f64
    }

    fn ld(&self) -> f64 {
        (self.d as f64).ln()
    }

    fn nld(&self) -> f64 {
        self.n * self.ld()
    }

    fn dp(&self, e: i64) -> f64 {
        (self.d as f64).powi(e as i32)
    }

    fn multi(&self) -> f64 {
        if self.m > 1 {
            1.0
        } else {
            0.0
        }
    }

    fn n_pow(&self) -> f64 {
        self.n.powf(1.0 - self.gamma)
    }

    /// Upper-band correction `B_i`.
    fn b_term(&self, i: usize) -> f64 {
        let (m, i) = (self.mf(), i as i64);
        let mi = self.m as i64;
        18.0 * m * self.dp(i - 1) * self.t()
            + 36.0 * m.powi(3) * self.nld() * self.ld() / self.dp(mi - i + 2)
            + self.n_pow() / self.dp(mi - i) * self.multi()
    }

    fn constant(&self, c: f64) -> Affine {
        Affine::constant(self.b, c)
    }

    /// `c - s_i`.
    fn cap_minus(&self, c: f64, i: usize) -> Affine {
        Affine::level(self.b, i, -1.0).shifted(c)
    }

    /// `s_i - c`.
    fn level_minus(&self, i: usize, c: f64) -> Affine {
        Affine::level(self.b, i, 1.0).shifted(-c)
    }
}

/// Which part of a min-of-two family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    #[default]
    Min,
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    BaseV1,
    /// `L_{lk}`; `l = 0` has only the first branch.
    LowerL {
        l: usize,
        k: usize,
        #[serde(default)]
        branch: Branch,
    },
    /// `W_l` of the inner lower-bound induction.
    LowerW { l: usize, k: usize },
    /// `Z_{ik}` built from `W_{ik}`; `i = 0` has only the first branch.
    LowerZ {
        i: usize,
        k: usize,
        #[serde(default)]
        branch: Branch,
    },
    LowerWtilde { j: usize, k: usize },
    /// Upper-bound building block `L_l`, `l` in `1..=m+1`.
    UpperL { l: usize },
    /// `U_j = min(U_j^(1), U_j^(2))`; `U_0` has only the first branch.
    UpperU {
        j: usize,
        #[serde(default)]
        branch: Branch,
    },
    /// `U_{m+2} = sum_{l >= m+2} s_l`.
    TailSumU,
    UpperWtilde { j: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::BaseV1 => "base_v1",
            Family::LowerL { .. } => "lower_l",
            Family::LowerW { .. } => "lower_w",
            Family::LowerZ { .. } => "lower_z",
            Family::LowerWtilde { .. } => "lower_wtilde",
            Family::UpperL { .. } | Family::UpperU { .. } => "upper_lu",
            Family::TailSumU => "tail_sum_u",
            Family::UpperWtilde { .. } => "upper_wtilde",
        }
    }

    /// Named indices, in a fixed order.
    pub fn indices(&self) -> Vec<(&'static str, usize)> {
        match *self {
            Family::BaseV1 | Family::TailSumU => vec![],
            Family::LowerL { l, k, .. } => vec![("l", l), ("k", k)],
            Family::LowerW { l, k } => vec![("l", l), ("k", k)],
            Family::LowerZ { i, k, .. } => vec![("i", i), ("k", k)],
            Family::LowerWtilde { j, k } => vec![("j", j), ("k", k)],
            Family::UpperL { l } => vec![("l", l)],
            Family::UpperU { j, .. } => vec![("j", j)],
            Family::UpperWtilde { j } => vec![("j", j)],
        }
    }

    pub fn branch(&self) -> Branch {
        match *self {
            Family::LowerL { branch, .. } | Family::LowerZ { branch, .. } | Family::UpperU { branch, .. } => branch,
            _ => Branch::Min,
        }
    }
}

/// Intersection of closed constraints `g(s) <= 0`, each `g` a min of affine branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub constraints: Vec<(String, AffineMin)>,
}

impl RegionSpec {
    pub fn everything() -> Self {
        Self { constraints: vec![] }
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        self.constraints.iter().all(|(_, g)| g.value(s) <= 0.0)
    }

    pub fn contains_state(&self, state: &StateVector) -> bool {
        self.contains(&super::to_f64(state))
    }

    /// Labels of the violated constraints.
    pub fn violated(&self, s: &[f64]) -> Vec<&str> {
        self.constraints.iter().filter(|(_, g)| g.value(s) > 0.0).map(|(l, _)| l.as_str()).collect()
    }

    pub fn and(mut self, label: impl Into<String>, g: impl Into<AffineMin>) -> Self {
        self.constraints.push((label.into(), g.into()));
        self
    }

    /// `{f <= cap}`.
    pub fn cap(self, label: impl Into<String>, f: &AffineMin, cap: f64) -> Self {
        let g = AffineMin::min_of(f.branches.iter().map(|br| br.shifted(-cap)).collect());
        self.and(label, g)
    }

    /// `{s_i >= floor}`.
    pub fn floor(self, label: impl Into<String>, b: usize, i: usize, floor: f64) -> Self {
        self.and(label, Affine::level(b, i, -1.0).shifted(floor))
    }
}

/// A catalog member bound to an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    pub family: Family,
    pub params: CatalogParams,
}

impl LyapunovSpec {
    pub fn new(family: Family, params: CatalogParams) -> Result<Self> {
        let spec = Self { family, params };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.params.m as usize;
        let bad = |msg: String| Err(Error::InvalidIndex(format!("{}: {msg}", self.family.name())));
        if m == 0 {
            return bad("m must be at least 1".into());
        }
        let lower_k = |k: usize| (2..=m).contains(&k);
        let first_only = |idx: usize, branch: Branch| idx == 0 && branch == Branch::Second;
        match self.family {
            Family::BaseV1 | Family::TailSumU => Ok(()),
            Family::LowerL { l, k, branch } | Family::LowerZ { i: l, k, branch } => {
                if !lower_k(k) || l >= k {
                    bad(format!("need 0 <= index <= k-1 and 2 <= k <= m, got index {l}, k {k}, m {m}"))
                } else if first_only(l, branch) {
                    bad("index 0 has no second branch".into())
                } else {
                    Ok(())
                }
            }
            Family::LowerW { l: j, k } | Family::LowerWtilde { j, k } => {
                if !lower_k(k) || !(1..=k).contains(&j) {
                    bad(format!("need 1 <= index <= k and 2 <= k <= m, got index {j}, k {k}, m {m}"))
                } else {
                    Ok(())
                }
            }
            Family::UpperL { l } => {
                if (1..=m + 1).contains(&l) {
                    Ok(())
                } else {
                    bad(format!("need 1 <= l <= m+1, got l {l}, m {m}"))
                }
            }
            Family::UpperU { j, branch } => {
                if j > m {
                    bad(format!("need 0 <= j <= m, got j {j}, m {m}"))
                } else if first_only(j, branch) {
                    bad("U_0 has no second branch".into())
                } else {
                    Ok(())
                }
            }
            Family::UpperWtilde { j } => {
                if (1..=m).contains(&j) {
                    Ok(())
                } else {
                    bad(format!("need 1 <= j <= m, got j {j}, m {m}"))
                }
            }
        }
    }

    /// The function as a min of affine branches (a single branch unless `Branch::Min`
    /// on a min-family).
    pub fn function(&self) -> Result<AffineMin> {
        self.validate()?;
        let p = &self.params;
        let pick = |first: Affine, second: Option<Affine>, branch: Branch| -> AffineMin {
            match (branch, second) {
                (Branch::Second, Some(s)) => s.into(),
                (Branch::Min, Some(s)) => AffineMin::min_of(vec![first, s]),
                _ => first.into(),
            }
        };
        Ok(match self.family {
            Family::BaseV1 => base_v1(p).into(),
            Family::LowerL { l, k, branch } => {
                let (first, second) = lower_l_branches(p, l, k);
                pick(first, second, branch)
            }
            Family::LowerW { l, k } => lower_w(p, l, k).into(),
            Family::LowerZ { i, k, branch } => {
                let (first, second) = lower_z_branches(p, i, k);
                pick(first, second, branch)
            }
            Family::LowerWtilde { j, k } => lower_wtilde(p, j, k).into(),
            Family::UpperL { l } => upper_l(p, l).into(),
            Family::UpperU { j, branch } => {
                let (first, second) = upper_u_branches(p, j);
                pick(first, second, branch)
            }
            Family::TailSumU => tail_sum(p).into(),
            Family::UpperWtilde { j } => upper_wtilde(p, j).into(),
        })
    }

    pub fn evaluate(&self, state: &StateVector) -> Result<Evaluation> {
        if state.b() != self.params.b || state.n() as f64 != self.params.n {
            return Err(Error::InvalidState("state does not match the catalog parameters".into()));
        }
        Ok(self.function()?.evaluate(&super::to_f64(state)))
    }

    /// The set on which the drift of this member is analyzed.
    pub fn region(&self) -> Result<RegionSpec> {
        self.validate()?;
        let p = &self.params;
        let t = p.t();
        let (m, b) = (p.m as usize, p.b);
        let with = |family: Family| LyapunovSpec { family, params: *p }.function();
        Ok(match self.family {
            Family::BaseV1 | Family::UpperL { .. } => RegionSpec::everything(),
            Family::LowerL { l, k, .. } => {
                if l + 1 == k {
                    RegionSpec::everything()
                } else {
                    let cap = with(Family::LowerL { l: l + 1, k, branch: Branch::Min })?;
                    let mut r = RegionSpec::everything().cap(format!("C1[{},{k}]", l + 1), &cap, t);
                    for q in l + 1..k {
                        r = r.floor(format!("D1[{q}]"), b, q, d1_floor(p, q, k));
                    }
                    r
                }
            }
            Family::LowerW { l: j, k } => {
                if j == k {
                    return Err(Error::InvalidIndex("lower_w: drift is analyzed for j <= k-1".into()));
                }
                let cap = with(Family::LowerW { l: j + 1, k })?;
                let mut r = RegionSpec::everything().cap(format!("C2[{}]", j + 1), &cap, t);
                if j >= 2 {
                    r = r.floor(format!("D2[{}]", j - 1), b, j - 1, d1_floor(p, j - 1, k));
                }
                r
            }
            Family::LowerZ { i, k, .. } => {
                if i + 1 == k {
                    RegionSpec::everything()
                } else {
                    let cap = with(Family::LowerZ { i: i + 1, k, branch: Branch::Min })?;
                    let mut r = RegionSpec::everything().cap(format!("C3[{},{k}]", i + 1), &cap, t);
                    for q in i + 1..k {
                        r = r.floor(format!("D3[{q}]"), b, q, d3_floor(p, q, k));
                    }
                    r
                }
            }
            Family::LowerWtilde { j, k } => {
                if j == k {
                    return Err(Error::InvalidIndex("lower_wtilde: drift is analyzed for j <= k-1".into()));
                }
                let cap = with(Family::LowerWtilde { j: j + 1, k })?;
                let mut r = RegionSpec::everything().cap(format!("C4[{}]", j + 1), &cap, t);
                if j >= 2 {
                    r = r.floor(format!("D4[{}]", j - 1), b, j - 1, d3_floor(p, j - 1, k));
                }
                r
            }
            Family::UpperU { j, .. } => {
                if j == m {
                    let mut r = RegionSpec::everything();
                    if m > 1 {
                        r = r.floor(format!("D~[{}]", m - 1), b, m - 1, dtilde_floor_base(p));
                    }
                    let mut tail = Affine::constant(b, -p.b_m2);
                    for q in m + 2..=b {
                        tail.add_level(q, 1.0);
                    }
                    r.and(format!("D~[{}]", m + 2), tail)
                } else {
                    let cap = with(Family::UpperU { j: j + 1, branch: Branch::Min })?;
                    let mut r = RegionSpec::everything().cap(format!("C~1[{}]", j + 1), &cap, t);
                    if j >= 2 {
                        r = r.floor(format!("D~1[{}]", j - 1), b, j - 1, dtilde_floor(p, j - 1));
                    }
                    r
                }
            }
            Family::TailSumU => {
                // Conditioning event of the tail estimate: s_{m+1} <= b B_m.
                let cap = b as f64 * p.b_term(m);
                RegionSpec::everything().and(format!("s[{}]<=bB[{m}]", m + 1), p.level_minus(m + 1, cap))
            }
            Family::UpperWtilde { j } => {
                if j == m {
                    return Err(Error::InvalidIndex("upper_wtilde: drift is analyzed for j <= m-1".into()));
                }
                let cap = with(Family::UpperWtilde { j: j + 1 })?;
                RegionSpec::everything().cap(format!("C~2[{}]", j + 1), &cap, t)
            }
        })
    }
}

/// `V_1 = n - 2m nld/d - 2 nld/d^2 - T - s_1`.
fn base_v1(p: &CatalogParams) -> Affine {
    let c = p.n - 2.0 * p.mf() * p.nld() / p.dp(1) - 2.0 * p.nld() / p.dp(2) - p.t();
    p.cap_minus(c, 1)
}

/// `V_{ik}`: `s_i - n + 3 i m nld/d^(k-i+1)` for `i < k`, `n - 3 k m nld/d - s_k` for `i = k`.
fn lower_v(p: &CatalogParams, i: usize, k: usize) -> Affine {
    let m = p.mf();
    if i == k {
        p.cap_minus(p.n - 3.0 * k as f64 * m * p.nld() / p.dp(1), k)
    } else {
        p.level_minus(i, p.n - 3.0 * i as f64 * m * p.nld() / p.dp((k - i + 1) as i64))
    }
}

fn lower_l_branches(p: &CatalogParams, l: usize, k: usize) -> (Affine, Option<Affine>) {
    let mut first = lower_v(p, k, k);
    for j in l + 1..k {
        first = first.minus(&lower_v(p, j, k));
    }
    let second = (l >= 1).then(|| lower_v(p, l, k));
    (first, second)
}

/// Floor of `D^(1)_q` (also `D^(2)_q`): `n - 5 m nld / (2 d^(k-q))`.
fn d1_floor(p: &CatalogParams, q: usize, k: usize) -> f64 {
    p.n - 5.0 * p.mf() * p.nld() / (2.0 * p.dp((k - q) as i64))
}

/// Floor of `D^(3)_q` (also `D^(4)_q`): `n - 9 m^2 nld / d^(k-q+1)`.
fn d3_floor(p: &CatalogParams, q: usize, k: usize) -> f64 {
    p.n - 9.0 * p.mf().powi(2) * p.nld() / p.dp((k - q + 1) as i64)
}

/// `W_l = n - 3(2m+k-l) m nld/d^(k-l+1) - s_l`.
fn lower_w(p: &CatalogParams, l: usize, k: usize) -> Affine {
    let m = p.mf();
    let coef = 3.0 * (2.0 * m + k as f64 - l as f64) * m;
    p.cap_minus(p.n - coef * p.nld() / p.dp((k - l + 1) as i64), l)
}

/// `W_{ik}` of the Z-family.
fn lower_zw(p: &CatalogParams, i: usize, k: usize) -> Affine {
    let (m, t) = (p.mf(), p.t());
    if i == k {
        let kf = k as f64;
        let c = p.n
            - 2.0 * m * p.nld() / p.dp(1)
            - 2.0 * kf * p.dp(k as i64 - 1) * t
            - 10.0 * m * m * p.nld() / p.dp(2);
        p.cap_minus(c, k)
    } else {
        let (fi, e) = (i as f64, (k - i) as i64);
        let c = p.n
            - 2.0 * m * p.nld() / p.dp(e + 1)
            - (2.0 * fi + 1.0) * p.dp(i as i64 - 1) * t
            - 3.0 * (fi + 1.0) * m * p.nld() / p.dp(e + 2);
        p.level_minus(i, c)
    }
}

fn lower_z_branches(p: &CatalogParams, i: usize, k: usize) -> (Affine, Option<Affine>) {
    let mut first = lower_zw(p, k, k);
    for l in i + 1..k {
        first = first.minus(&lower_zw(p, l, k));
    }
    let second = (i >= 1).then(|| lower_zw(p, i, k));
    (first, second)
}

/// `W~_j = n - 2m nld/d^(k-j+1) - (4m-j) d^(j-1) T - 16(k-j+1) m^2 nld ld/d^(k-j+2) - s_j`.
fn lower_wtilde(p: &CatalogParams, j: usize, k: usize) -> Affine {
    let (m, fj, e) = (p.mf(), j as f64, (k - j) as i64);
    let c = p.n
        - 2.0 * m * p.nld() / p.dp(e + 1)
        - (4.0 * m - fj) * p.dp(j as i64 - 1) * p.t()
        - 16.0 * (e as f64 + 1.0) * m * m * p.nld() * p.ld() / p.dp(e + 2);
    p.cap_minus(c, j)
}

/// Upper-bound `L_l`; `L_{m+1}` is the tail sum minus its allowance.
fn upper_l(p: &CatalogParams, l: usize) -> Affine {
    let (m, mi, t) = (p.mf(), p.m as usize, p.t());
    if l == mi + 1 {
        let fold = 1.0 + (p.b as f64 - 1.0) * if p.b_m2 >= 2.0 { 1.0 } else { 0.0 };
        let allowance = fold
            * (8.0 * m * p.dp(mi as i64 - 1) * t
                + 18.0 * m.powi(3) * p.nld() * p.ld() / p.dp(2)
                + p.n_pow() * p.multi());
        let mut f = Affine::constant(p.b, -allowance);
        for q in mi + 1..=p.b {
            f.add_level(q, 1.0);
        }
        f
    } else {
        let (fl, e) = (l as f64, (mi - l) as i64);
        let c = p.n - 2.0 * m * p.nld() / p.dp(e + 1)
            + 3.0 * fl * p.dp(l as i64 - 1) * t
            + fl * m * p.nld() / p.dp(e + 2);
        p.cap_minus(c, l)
    }
}

fn upper_u_branches(p: &CatalogParams, j: usize) -> (Affine, Option<Affine>) {
    let mi = p.m as usize;
    let mut first = upper_l(p, mi + 1);
    for l in j + 1..=mi {
        first = first.minus(&upper_l(p, l));
    }
    let second = (j >= 1).then(|| upper_l(p, j));
    (first, second)
}

/// Floor of `D~^(1)_q`: `n - 2m nld/d^(m-q+1) - 4m d^(q-1) T - 16 m^3 nld ld/d^(m-q+2)`.
fn dtilde_floor(p: &CatalogParams, q: usize) -> f64 {
    let (m, e) = (p.mf(), p.m as i64 - q as i64);
    p.n - 2.0 * m * p.nld() / p.dp(e + 1)
        - 4.0 * m * p.dp(q as i64 - 1) * p.t()
        - 16.0 * m.powi(3) * p.nld() * p.ld() / p.dp(e + 2)
}

/// Floor on `s_{m-1}` in the base case of the upper induction (`m > 1`).
fn dtilde_floor_base(p: &CatalogParams) -> f64 {
    let m = p.mf();
    p.n - (2.0 * m * p.nld() / p.dp(2)
        + 4.0 * m * p.dp(p.m as i64 - 2) * p.t()
        + 16.0 * m.powi(3) * p.nld() * p.ld() / p.dp(3))
        * p.multi()
}

fn tail_sum(p: &CatalogParams) -> Affine {
    let mut f = p.constant(0.0);
    for q in p.m as usize + 2..=p.b {
        f.add_level(q, 1.0);
    }
    f
}

/// `W~_j = s_j - n + 2m nld/d^(m-j+1) - B_j - 2(m-j) m nld/d^(m-j+2)`.
fn upper_wtilde(p: &CatalogParams, j: usize) -> Affine {
    let (m, e) = (p.mf(), p.m as i64 - j as i64);
    let c = p.n - 2.0 * m * p.nld() / p.dp(e + 1)
        + p.b_term(j)
        + 2.0 * e as f64 * m * p.nld() / p.dp(e + 2);
    p.level_minus(j, c)
}
