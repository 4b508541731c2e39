//! Deterministic capacity sequences.
//!
//! `c*_k = c / (1 + alpha c (k-1))` approximates the capacities of HL(alpha)
//! regularised at infinity; `c~_k = c exp(-alpha C~_{1,k-1})` is that
//! regularised sequence itself. Prefix sums are kept in double-double so that
//! the exact inequalities between them can be checked at `1e-12` relative
//! slack out to a million terms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::conformal::C_MAX;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub alpha: f64,
    pub c: f64,
    pub n_max: usize,
}

impl ScheduleParams {
    pub fn new(alpha: f64, c: f64, n_max: usize) -> Result<Self> {
        let p = Self { alpha, c, n_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidParams(format!(
                "alpha = {} outside [0, 2); the model is only covered for alpha < 2",
                self.alpha
            )));
        }
        if !(self.c > 0.0 && self.c <= C_MAX) {
            return Err(Error::InvalidParams(format!(
                "c = {} outside (0, {C_MAX}]",
                self.c
            )));
        }
        Ok(())
    }

    /// `alpha = 0` is the constant-capacity model.
    pub fn is_constant(&self) -> bool {
        self.alpha == 0.0
    }

    pub fn c_star(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        if self.is_constant() {
            return self.c;
        }
        self.c / (1.0 + self.alpha * self.c * (k as f64 - 1.0))
    }
}

pub fn c_star(params: &ScheduleParams, k: usize) -> f64 {
    params.c_star(k)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

impl DoubleDouble {
    fn add(self, x: f64) -> Self {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = two_sum(s, e + self.lo);
        Self { hi, lo }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }

    /// `self - other` rounded once to f64.
    fn diff(self, other: Self) -> f64 {
        let (s, e) = two_sum(self.hi, -other.hi);
        s + (e + (self.lo - other.lo))
    }
}

#[derive(Debug, Clone)]
pub struct CapacitySchedule {
    params: ScheduleParams,
    // prefix[k] = C*_{1,k}, prefix[0] = 0
    prefix: Vec<DoubleDouble>,
}

impl CapacitySchedule {
    pub fn new(params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        let mut prefix = Vec::with_capacity(params.n_max + 1);
        let mut acc = DoubleDouble::default();
        prefix.push(acc);
        for k in 1..=params.n_max {
            acc = acc.add(params.c_star(k));
            prefix.push(acc);
        }
        Ok(Self { params, prefix })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.params.n_max
    }

    pub fn c_star(&self, k: usize) -> f64 {
        self.params.c_star(k)
    }

    /// `C*_{k,n} = sum_{i=k}^{n} c*_i`; `k = n + 1` is the empty sum.
    pub fn c_star_sum(&self, k: usize, n: usize) -> Result<f64> {
        if k == 0 || n > self.params.n_max || k > n + 1 {
            return Err(Error::Index(format!(
                "C*_{{k,n}} needs 1 <= k <= n+1 and n <= {}; got k={k}, n={n}",
                self.params.n_max
            )));
        }
        Ok(self.sum_unchecked(k, n))
    }

    #[inline]
    pub(crate) fn sum_unchecked(&self, k: usize, n: usize) -> f64 {
        if k > n {
            return 0.0;
        }
        if self.params.is_constant() {
            return (n - k + 1) as f64 * self.params.c;
        }
        self.prefix[n].diff(self.prefix[k - 1])
    }

    /// `(1/alpha) log((1 + alpha c n)/(1 + alpha c (k-1)))`, the integral
    /// approximation of `C*_{k,n}`.
    pub fn log_approximation(&self, k: usize, n: usize) -> f64 {
        let ScheduleParams { alpha, c, .. } = self.params;
        let base = 1.0 + alpha * c * (k as f64 - 1.0);
        (alpha * c * (n + 1 - k) as f64 / base).ln_1p() / alpha
    }

    /// Relative error `eps_{k,n}` of the log approximation.
    pub fn epsilon_kn(&self, k: usize, n: usize) -> Result<f64> {
        if self.params.is_constant() {
            return Err(Error::InvalidParams("epsilon_kn needs alpha > 0".into()));
        }
        if k == n + 1 {
            return Err(Error::DegenerateDenominator(format!(
                "log approximation vanishes at k - 1 = n = {n}"
            )));
        }
        let sum = self.c_star_sum(k, n)?;
        let approx = self.log_approximation(k, n);
        Ok((sum - approx) / approx)
    }

    /// Uniform upper bound `alpha c / log(1 + alpha c n)` on `eps_{k,n}`.
    pub fn epsilon_bound(&self, n: usize) -> f64 {
        let ScheduleParams { alpha, c, .. } = self.params;
        alpha * c / (alpha * c * n as f64).ln_1p()
    }

    /// `kappa_n = c*_n - c exp(-alpha C*_{1,n-1})`.
    pub fn kappa_defect(&self, n: usize) -> Result<f64> {
        if n < 2 || n > self.params.n_max {
            return Err(Error::Index(format!(
                "kappa_n needs 2 <= n <= {}; got {n}",
                self.params.n_max
            )));
        }
        let ScheduleParams { alpha, c, .. } = self.params;
        Ok(self.c_star(n) - c * (-alpha * self.sum_unchecked(1, n - 1)).exp())
    }

    pub fn kappa_bound(&self, n: usize) -> f64 {
        let ScheduleParams { alpha, c, .. } = self.params;
        2.0 * alpha * c * c / (1.0 + alpha * c * (n as f64 - 1.0))
    }

    /// Both sides, in log form, of
    /// `(1 + alpha c k)^{1 + eps_{k,n}} <= (1 + alpha c e^{alpha c})(1 + alpha c k)`.
    pub fn power_bound_sides(&self, k: usize, n: usize) -> Result<(f64, f64)> {
        let ScheduleParams { alpha, c, .. } = self.params;
        let eps = self.epsilon_kn(k, n)?;
        let log_base = (alpha * c * k as f64).ln_1p();
        let lhs = (1.0 + eps) * log_base;
        let rhs = (alpha * c * (alpha * c).exp()).ln_1p() + log_base;
        Ok((lhs, rhs))
    }
}

/// The sequence regularised at infinity, `c~_k = c exp(-alpha C~_{1,k-1})`.
#[derive(Debug, Clone)]
pub struct InftySchedule {
    params: ScheduleParams,
    // tilde[k - 1] = c~_k
    tilde: Vec<f64>,
    tilde_prefix: Vec<DoubleDouble>,
}

impl InftySchedule {
    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn c_tilde(&self, k: usize) -> f64 {
        self.tilde[k - 1]
    }

    pub fn c_tilde_prefix(&self, n: usize) -> f64 {
        self.tilde_prefix[n].value()
    }
}

pub fn tilde_schedule(params: ScheduleParams) -> Result<InftySchedule> {
    params.validate()?;
    let mut tilde = Vec::with_capacity(params.n_max);
    let mut tilde_prefix = Vec::with_capacity(params.n_max + 1);
    let mut acc = DoubleDouble::default();
    tilde_prefix.push(acc);
    for _ in 1..=params.n_max {
        let ct = params.c * (-params.alpha * acc.value()).exp();
        tilde.push(ct);
        acc = acc.add(ct);
        tilde_prefix.push(acc);
    }
    Ok(InftySchedule {
        params,
        tilde,
        tilde_prefix,
    })
}

/// `C*_{1,n} - C~_{1,n}`.
pub fn schedule_gap(schedule: &CapacitySchedule, infty: &InftySchedule, n: usize) -> Result<f64> {
    if schedule.params != infty.params {
        return Err(Error::InvalidParams(
            "schedules were built from different parameters".into(),
        ));
    }
    if n > schedule.n_max() {
        return Err(Error::Index(format!("n = {n} > n_max")));
    }
    if schedule.params.is_constant() {
        return Ok(0.0);
    }
    Ok(schedule.prefix[n].diff(infty.tilde_prefix[n]))
}

/// One row of the schedule CSV dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub k: usize,
    pub c_star: f64,
    #[serde(rename = "C_star_1k")]
    pub c_star_prefix: f64,
    pub c_tilde: f64,
    #[serde(rename = "C_tilde_1k")]
    pub c_tilde_prefix: f64,
    pub gap: f64,
}

pub fn schedule_rows(schedule: &CapacitySchedule, infty: &InftySchedule) -> Vec<ScheduleRow> {
    (1..=schedule.n_max())
        .map(|k| ScheduleRow {
            k,
            c_star: schedule.c_star(k),
            c_star_prefix: schedule.sum_unchecked(1, k),
            c_tilde: infty.c_tilde(k),
            c_tilde_prefix: infty.c_tilde_prefix(k),
            gap: schedule_gap(schedule, infty, k).unwrap_or(f64::NAN),
        })
        .collect()
}

/// Grid constants for uniform sup estimates on `|z| = r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshParams {
    pub gamma: f64,
    /// Worst-case point count `gamma n^{3/2}` (saturating).
    pub points: f64,
    pub n: usize,
}

impl MeshParams {
    /// Lipschitz bound on `|M_n(z) - M_n(w)|` between neighbours of an
    /// `m`-point grid: `(gamma / 4 pi) (2 pi / m) n log n`.
    pub fn grid_error_bound(&self, m: usize) -> f64 {
        let n = self.n as f64;
        let log_n = if self.n > 1 { n.ln() } else { 0.0 };
        self.gamma / (4.0 * PI) * (2.0 * PI / m as f64) * n * log_n
    }
}

pub fn mesh_params(alpha: f64, c: f64, r: f64, n: usize) -> Result<MeshParams> {
    if !(r > 1.0) {
        return Err(Error::InvalidParams(format!("r = {r} must exceed 1")));
    }
    if !(alpha > 0.0 && alpha < 2.0) || !(c > 0.0) {
        return Err(Error::InvalidParams(format!(
            "mesh constants need alpha in (0, 2) and c > 0; got alpha={alpha}, c={c}"
        )));
    }
    let ac = alpha * c;
    let gamma = 4.0 * PI * r / c
        * (c.exp() + 1.0)
        * (1.0 + ac)
        * (1.0 + alpha * ac.exp())
        * ((r / (r - 1.0)).ln() + 1.0)
        * (ac.ln_1p() + 1.0);
    Ok(MeshParams {
        gamma,
        points: gamma * (n as f64).powf(1.5),
        n,
    })
}
