//! Single-particle conformal maps of the exterior disk `{|z| > 1}`.
//!
//! Every particle map has the form
//!
//! ```text
//! f_c(z) = e^c z exp(2c / (z - 1) + delta_c(z))
//! ```
//!
//! with capacity `c = log f'(inf)`. Two members are provided: the idealized
//! map with `delta_c == 0`, and the slit map that attaches a radial segment
//! `(1, tip]` at `z = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexPoint = Complex64;

/// Largest accepted particle capacity.
pub const C_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticleFamily {
    Slit,
    Idealized,
}

impl ParticleFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParticleFamily::Slit => "slit",
            ParticleFamily::Idealized => "idealized",
        }
    }
}

impl std::str::FromStr for ParticleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slit" => Ok(ParticleFamily::Slit),
            "idealized" => Ok(ParticleFamily::Idealized),
            other => Err(Error::InvalidParams(format!(
                "unknown particle family `{other}` (expected slit|idealized)"
            ))),
        }
    }
}

impl std::fmt::Display for ParticleFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A particle map attached at `z = 1` with capacity `c`.
///
/// Constants that depend only on `c` are cached so that repeated evaluation
/// inside a composition costs one complex square root (slit) or one complex
/// exponential (idealized).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleParticleMap {
    family: ParticleFamily,
    capacity: f64,
    exp_c: f64,
    // slit: l^2 = e^c - 1 and S = sqrt(1 + l^2) = e^{c/2}
    slit_l2: f64,
    slit_s: f64,
}

impl SingleParticleMap {
    pub fn new(family: ParticleFamily, capacity: f64) -> Result<Self> {
        if !(capacity > 0.0 && capacity <= C_MAX) || !capacity.is_finite() {
            return Err(Error::InvalidParams(format!(
                "capacity c = {capacity} must lie in (0, {C_MAX}]"
            )));
        }
        Ok(Self::new_unchecked(family, capacity))
    }

    /// Builds a map without the `c_max` cap; `c` must still be positive.
    pub(crate) fn new_unchecked(family: ParticleFamily, capacity: f64) -> Self {
        debug_assert!(capacity > 0.0);
        Self {
            family,
            capacity,
            exp_c: capacity.exp(),
            slit_l2: capacity.exp_m1(),
            slit_s: (0.5 * capacity).exp(),
        }
    }

    pub fn family(&self) -> ParticleFamily {
        self.family
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Slit half-width parameter `l = sqrt(e^c - 1)`.
    pub fn slit_parameter(&self) -> f64 {
        self.slit_l2.sqrt()
    }

    /// Image of the attach point `z = 1` (the slit tip; for the idealized
    /// family there is no finite tip and `inf` is returned).
    pub fn tip(&self) -> f64 {
        match self.family {
            ParticleFamily::Slit => {
                let l = self.slit_parameter();
                (self.slit_s + l).powi(2)
            }
            ParticleFamily::Idealized => f64::INFINITY,
        }
    }

    /// Points on the unit circle are accepted: both families extend
    /// continuously to the boundary, except the idealized map at `z = 1`.
    pub fn eval(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        check_exterior(z)?;
        match self.family {
            ParticleFamily::Idealized => {
                if z == Complex64::new(1.0, 0.0) {
                    return Err(Error::Domain("idealized map is singular at z = 1".into()));
                }
                Ok(self.eval_idealized_raw(z))
            }
            ParticleFamily::Slit => Ok(self.eval_slit_raw(z)),
        }
    }

    /// Evaluation without the domain check, for hot loops where the caller
    /// already knows `|z| > 1`.
    #[inline]
    pub fn eval_unchecked(&self, z: ComplexPoint) -> ComplexPoint {
        match self.family {
            ParticleFamily::Idealized => self.eval_idealized_raw(z),
            ParticleFamily::Slit => self.eval_slit_raw(z),
        }
    }

    #[inline]
    fn eval_idealized_raw(&self, z: ComplexPoint) -> ComplexPoint {
        let two_c = 2.0 * self.capacity;
        z * self.exp_c * (two_c / (z - 1.0)).exp()
    }

    /// `T^{-1}(G(T(z)))` with `T(z) = (z-1)/(z+1)`, `G(w) = sqrt(w^2+l^2)/S`,
    /// rearranged as `(S(z+1) + q(z+1))^2 / (4z)` with `q = sqrt(w^2 + l^2)`,
    /// which avoids the cancellation in `1 - G` for large `|z|`.
    ///
    /// `q(z+1)` is computed as `+-sqrt((z-1)^2 + l^2 (z+1)^2)`, the sign
    /// picked so that `Re q > 0`.
    #[inline]
    fn eval_slit_raw(&self, z: ComplexPoint) -> ComplexPoint {
        let zp1 = z + 1.0;
        if zp1.re == 0.0 && zp1.im == 0.0 {
            return Complex64::new(-1.0, 0.0);
        }
        let zm1 = z - 1.0;
        let mut p = principal_sqrt(zm1 * zm1 + self.slit_l2 * (zp1 * zp1));
        if p.re * zp1.re + p.im * zp1.im < 0.0 {
            p = -p;
        }
        let t = p + self.slit_s * zp1;
        t * t / (4.0 * z)
    }
}

/// Principal square root without the polar round trip.
#[inline]
fn principal_sqrt(v: Complex64) -> Complex64 {
    let (a, b) = (v.re, v.im);
    if a == 0.0 && b == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let t = (0.5 * (a.abs() + (a * a + b * b).sqrt())).sqrt();
    if a >= 0.0 {
        Complex64::new(t, 0.5 * b / t)
    } else {
        Complex64::new(0.5 * b.abs() / t, t.copysign(b))
    }
}

fn check_exterior(z: ComplexPoint) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("non-finite point {z}")));
    }
    if z.norm_sqr() < 1.0 {
        return Err(Error::Domain(format!(
            "|z| = {} is inside the unit disk",
            z.norm()
        )));
    }
    Ok(())
}

pub fn eval_idealized(c: f64, z: ComplexPoint) -> Result<ComplexPoint> {
    SingleParticleMap::new(ParticleFamily::Idealized, c)?.eval(z)
}

pub fn eval_slit(c: f64, z: ComplexPoint) -> Result<ComplexPoint> {
    SingleParticleMap::new(ParticleFamily::Slit, c)?.eval(z)
}

/// `z -> e^{i theta} f(e^{-i theta} z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedParticleMap {
    base: SingleParticleMap,
    angle: f64,
    phase: Complex64,
}

impl RotatedParticleMap {
    pub fn new(base: SingleParticleMap, angle: f64) -> Self {
        let angle = angle.rem_euclid(2.0 * PI);
        Self {
            base,
            angle,
            phase: Complex64::from_polar(1.0, angle),
        }
    }

    pub fn base(&self) -> &SingleParticleMap {
        &self.base
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn eval(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        Ok(self.phase * self.base.eval(self.phase.conj() * z)?)
    }

    #[inline]
    pub fn eval_unchecked(&self, z: ComplexPoint) -> ComplexPoint {
        self.phase * self.base.eval_unchecked(self.phase.conj() * z)
    }
}

pub fn eval_rotated(map: &RotatedParticleMap, z: ComplexPoint) -> Result<ComplexPoint> {
    map.eval(z)
}

/// Numeric `log f'(inf)` from `log(f(R)/R)` at `R = 1e4, 1e5, 1e6`, with two
/// levels of Richardson extrapolation removing the `1/R` and `1/R^2` terms.
pub fn capacity_estimate(map: &SingleParticleMap) -> f64 {
    let g = |r: f64| {
        let z = Complex64::new(r, 0.0);
        (map.eval_unchecked(z) / z).ln().re
    };
    let (g4, g5, g6) = (g(1e4), g(1e5), g(1e6));
    let first_lo = (10.0 * g5 - g4) / 9.0;
    let first_hi = (10.0 * g6 - g5) / 9.0;
    (100.0 * first_hi - first_lo) / 99.0
}

// Radius where branch tracking starts; log(f(z)/(e^c z)) is within ~c/R of 0 there.
const TRACK_START_RADIUS: f64 = 1e6;
const TRACK_STEPS: usize = 96;

/// `delta_c(z) = log(f(z)/(e^c z)) - 2c/(z-1)` on the continuous branch that
/// vanishes at infinity.
///
/// The logarithm is tracked along the ray from `z` out to `|z| = 1e6` on a
/// geometric grid; a jump of more than `pi/2` in the argument between two
/// neighbouring samples is reported as [`Error::Branch`].
pub fn delta_residual(map: &SingleParticleMap, z: ComplexPoint) -> Result<ComplexPoint> {
    check_exterior(z)?;
    if map.family == ParticleFamily::Idealized {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let ratio = |p: ComplexPoint| map.eval_slit_raw(p) / (p * map.exp_c);

    let radius = z.norm();
    let dir = z / radius;
    let start = TRACK_START_RADIUS.max(radius);
    let ln_span = (start / radius).ln();

    let mut arg = ratio(dir * start).arg();
    let mut prev = arg;
    for step in 1..=TRACK_STEPS {
        let t = start * (-ln_span * step as f64 / TRACK_STEPS as f64).exp();
        let p = if step == TRACK_STEPS { z } else { dir * t };
        let a = ratio(p).arg();
        let mut d = a - prev;
        if d > PI {
            d -= 2.0 * PI;
        } else if d < -PI {
            d += 2.0 * PI;
        }
        if d.abs() > 0.5 * PI {
            return Err(Error::Branch { re: p.re, im: p.im });
        }
        arg += d;
        prev = a;
    }
    let g = ratio(z);
    let log_g = Complex64::new(g.norm().ln(), arg);
    Ok(log_g - 2.0 * map.capacity / (z - 1.0))
}

/// `sup_grid |delta_c(z)| |z-1| (|z|-1) / (c^{3/2} |z|)`, an empirical estimate
/// of the class constant for this map.
pub fn class_bound_ratio(map: &SingleParticleMap, grid: &[ComplexPoint]) -> Result<f64> {
    let c32 = map.capacity.powf(1.5);
    let mut sup = 0.0_f64;
    for &z in grid {
        let d = delta_residual(map, z)?;
        let r = z.norm();
        let ratio = d.norm() * (z - 1.0).norm() * (r - 1.0) / (c32 * r);
        sup = sup.max(ratio);
    }
    Ok(sup)
}

/// `n` points equally spaced on the circle of radius `r`.
pub fn circle_grid(r: f64, n: usize) -> Vec<ComplexPoint> {
    (0..n)
        .map(|j| Complex64::from_polar(r, 2.0 * PI * j as f64 / n as f64))
        .collect()
}

/// Polar grid hugging the attach point: radii `1 + s` with `s` log-spaced on
/// `[s_min, s_max]`, angles uniform on `[-psi_max, psi_max]`.
///
/// The residual bound is tight at distance `~ sqrt(c)` from `z = 1`, so a grid
/// resolving that layer recovers the `c^{3/2}` scaling that a fixed circle
/// cannot see.
pub fn attach_layer_grid(
    s_min: f64,
    s_max: f64,
    n_radial: usize,
    psi_max: f64,
    n_angular: usize,
) -> Vec<ComplexPoint> {
    let mut out = Vec::with_capacity(n_radial * n_angular);
    let (lo, hi) = (s_min.ln(), s_max.ln());
    for i in 0..n_radial {
        let s = (lo + (hi - lo) * i as f64 / (n_radial - 1).max(1) as f64).exp();
        for j in 0..n_angular {
            let psi = -psi_max + 2.0 * psi_max * j as f64 / (n_angular - 1).max(1) as f64;
            out.push(Complex64::from_polar(1.0 + s, psi));
        }
    }
    out
}
