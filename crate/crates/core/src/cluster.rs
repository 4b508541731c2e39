//! HL(alpha) cluster realizations and the quantities built from their maps.
//!
//! A realization fixes the attach angles and the capacity schedule; the
//! cluster map is `phi_n = f_1 o f_2 o ... o f_n` with
//! `f_k(z) = e^{i theta_k} f_{c*_k}(e^{-i theta_k} z)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::angles::sample_angles;
use crate::conformal::{
    attach_layer_grid, class_bound_ratio, ComplexPoint, ParticleFamily, RotatedParticleMap,
    SingleParticleMap,
};
use crate::error::{Error, Result};
use crate::schedule::{mesh_params, CapacitySchedule, ScheduleParams};

/// Intermediates may exceed the capacity envelope `e^{C*} |z|` by at most this factor.
pub const GUARD_FACTOR: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct ClusterRealization {
    params: ScheduleParams,
    family: ParticleFamily,
    seed: Option<u64>,
    angles: Vec<f64>,
    schedule: CapacitySchedule,
    maps: Vec<RotatedParticleMap>,
}

impl ClusterRealization {
    /// Samples `params.n_max` uniform attach angles from `seed`.
    pub fn sample(params: ScheduleParams, family: ParticleFamily, seed: u64) -> Result<Self> {
        let angles = sample_angles(seed, params.n_max);
        let mut real = Self::with_angles(params, family, angles)?;
        real.seed = Some(seed);
        Ok(real)
    }

    /// A realization with caller-chosen angles (any sequence is allowed).
    pub fn with_angles(
        params: ScheduleParams,
        family: ParticleFamily,
        angles: Vec<f64>,
    ) -> Result<Self> {
        if angles.len() != params.n_max {
            return Err(Error::InvalidParams(format!(
                "{} angles given for n = {}",
                angles.len(),
                params.n_max
            )));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParams("non-finite attach angle".into()));
        }
        let schedule = CapacitySchedule::new(params)?;
        let maps = angles
            .iter()
            .enumerate()
            .map(|(i, &theta)| {
                let base = SingleParticleMap::new(family, params.c_star(i + 1))?;
                Ok(RotatedParticleMap::new(base, theta))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            family,
            seed: None,
            angles,
            schedule,
            maps,
        })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn family(&self) -> ParticleFamily {
        self.family
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn schedule(&self) -> &CapacitySchedule {
        &self.schedule
    }

    pub fn n(&self) -> usize {
        self.params.n_max
    }

    pub fn particle(&self, k: usize) -> &RotatedParticleMap {
        &self.maps[k - 1]
    }

    /// `C*_{k,n}` with the empty-sum convention for `k = n + 1`.
    pub fn capacity_sum(&self, k: usize, n: usize) -> f64 {
        self.schedule.sum_unchecked(k, n)
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k > self.n() {
            return Err(Error::Index(format!("k = {k} exceeds n = {}", self.n())));
        }
        Ok(())
    }

    /// `phi_k(z) = f_1(f_2(...f_k(z)))`; `k = 0` is the identity.
    pub fn evaluate_phi(&self, z: ComplexPoint, k: usize) -> Result<ComplexPoint> {
        self.check_index(k)?;
        if !(z.norm_sqr() > 1.0) || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::Domain(format!("|z| = {} is not > 1", z.norm())));
        }
        self.compose(z, k)
    }

    /// Composition without the argument checks; every intermediate is still
    /// checked to stay in the exterior disk.
    pub(crate) fn compose(&self, z: ComplexPoint, k: usize) -> Result<ComplexPoint> {
        let mut w = z;
        for (j, map) in self.maps[..k].iter().enumerate().rev() {
            w = map.eval_unchecked(w);
            let r2 = w.norm_sqr();
            if !(r2 > 1.0 && r2.is_finite()) {
                return Err(Error::NumericGuard(format!(
                    "intermediate {w} after particle {} left the exterior disk or overflowed",
                    j + 1
                )));
            }
        }
        let envelope = self.capacity_sum(1, k).exp() * (z.norm() + 4.0);
        if !(w.norm() <= GUARD_FACTOR * envelope) {
            return Err(Error::NumericGuard(format!(
                "|phi_{k}(z)| = {} exceeds {GUARD_FACTOR:e} x capacity envelope",
                w.norm()
            )));
        }
        Ok(w)
    }

    /// `M_n(z) = e^{-C*_{1,n}} phi_n(z) - z`.
    pub fn error_at(&self, z: ComplexPoint, n: usize) -> Result<ComplexPoint> {
        self.check_index(n)?;
        Ok((-self.capacity_sum(1, n)).exp() * self.compose(z, n)? - z)
    }

    /// `M_n` sampled on `M` equally spaced points of `|z| = r`.
    pub fn error_field(&self, r: f64, grid: usize, n: usize) -> Result<FieldSample> {
        check_radius(r)?;
        check_grid(grid)?;
        self.check_index(n)?;
        let scale = (-self.capacity_sum(1, n)).exp();
        let values = (0..grid)
            .into_par_iter()
            .map(|j| {
                let z = grid_point(r, grid, j);
                Ok(scale * self.compose(z, n)? - z)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FieldSample { r, values })
    }

    /// `sup_grid |M_n|` at each checkpoint.
    ///
    /// Each checkpoint recomposes from scratch (`phi_n` grows at its innermost
    /// end), so the cost is `O(M * sum(checkpoints))`.
    pub fn sup_error_trace(
        &self,
        r: f64,
        grid: usize,
        checkpoints: &[usize],
    ) -> Result<Vec<TracePoint>> {
        let ScheduleParams { alpha, c, .. } = self.params;
        checkpoints
            .iter()
            .map(|&n| {
                if n == 0 {
                    return Err(Error::Index("checkpoint 0 is not allowed".into()));
                }
                let sup = self.error_field(r, grid, n)?.sup_norm();
                let nf = n as f64;
                let grid_error_bound = if alpha > 0.0 {
                    mesh_params(alpha, c, r, n)?.grid_error_bound(grid)
                } else {
                    f64::NAN
                };
                Ok(TracePoint {
                    n,
                    sup_error: sup,
                    rate_bound: nf.ln() / nf.sqrt(),
                    grid_error_bound,
                })
            })
            .collect()
    }

    /// `X_{k,n}(z) = e^{-C*_{1,n}} (phi_k(e^{C*_{k+1,n}} z) - phi_{k-1}(e^{C*_{k,n}} z))`.
    pub fn increment_x(&self, z: ComplexPoint, k: usize, n: usize) -> Result<ComplexPoint> {
        if k == 0 || k > n {
            return Err(Error::Index(format!("increment needs 1 <= k <= n; k={k}, n={n}")));
        }
        self.check_index(n)?;
        if !(z.norm_sqr() > 1.0) {
            return Err(Error::Domain(format!("|z| = {} is not > 1", z.norm())));
        }
        let outer = self.compose(self.capacity_sum(k + 1, n).exp() * z, k)?;
        let inner = self.compose(self.capacity_sum(k, n).exp() * z, k - 1)?;
        Ok((-self.capacity_sum(1, n)).exp() * (outer - inner))
    }

    /// `|avg_theta phi_{k-1}(e^{i theta} f_{c*_k}(e^{-i theta} z)) - phi_{k-1}(e^{c*_k} z)|`
    /// by the `Q`-point trapezoid rule.
    pub fn conditional_mean_check(&self, z: ComplexPoint, k: usize, nodes: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::Index("k must be >= 1".into()));
        }
        self.check_index(k)?;
        let base = self.maps[k - 1].base();
        let mean = self.quadrature(nodes, |theta| {
            let e = Complex64::from_polar(1.0, theta);
            self.compose(e * base.eval_unchecked(e.conj() * z), k - 1)
        })?;
        let target = self.compose(base.capacity().exp() * z, k - 1)?;
        Ok((mean - target).norm())
    }

    fn quadrature<F>(&self, nodes: usize, f: F) -> Result<ComplexPoint>
    where
        F: Fn(f64) -> Result<ComplexPoint>,
    {
        if nodes == 0 {
            return Err(Error::InvalidParams("quadrature needs at least one node".into()));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..nodes {
            acc += f(2.0 * PI * j as f64 / nodes as f64)?;
        }
        Ok(acc / nodes as f64)
    }

    /// `T_n(z) = sum_k E(|X_{k,n}(z)|^2 | F_{k-1})`, each conditional
    /// expectation by `Q`-point quadrature over `theta_k`.
    pub fn variation_estimate_t(&self, z: ComplexPoint, n: usize, nodes: usize) -> Result<f64> {
        self.check_index(n)?;
        if nodes == 0 {
            return Err(Error::InvalidParams("quadrature needs at least one node".into()));
        }
        let scale = (-self.capacity_sum(1, n)).exp();
        let terms = (1..=n)
            .into_par_iter()
            .map(|k| {
                let base = self.maps[k - 1].base();
                let w = self.capacity_sum(k + 1, n).exp() * z;
                let centre = self.compose(base.capacity().exp() * w, k - 1)?;
                let mut acc = 0.0;
                for j in 0..nodes {
                    let e = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / nodes as f64);
                    let v = self.compose(e * base.eval_unchecked(e.conj() * w), k - 1)?;
                    acc += (scale * (v - centre)).norm_sqr();
                }
                Ok(acc / nodes as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(terms.iter().sum())
    }

    /// Image of the circle `(1 + offset) e^{i theta}` under `phi_n`.
    pub fn boundary_trace(&self, n: usize, offset: f64, points: usize) -> Result<Vec<BoundaryPoint>> {
        self.check_index(n)?;
        if !(offset > 0.0) {
            return Err(Error::InvalidParams(format!("offset {offset} must be positive")));
        }
        (0..points)
            .into_par_iter()
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / points as f64;
                let w = self.compose(Complex64::from_polar(1.0 + offset, theta), n)?;
                Ok(BoundaryPoint {
                    theta,
                    re: w.re,
                    im: w.im,
                })
            })
            .collect()
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::InvalidParams(format!("radius r = {r} must exceed 1")));
    }
    Ok(())
}

fn check_grid(grid: usize) -> Result<()> {
    if grid == 0 || !grid.is_power_of_two() {
        return Err(Error::InvalidParams(format!(
            "grid size M = {grid} must be a power of two"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn grid_point(r: f64, grid: usize, j: usize) -> ComplexPoint {
    Complex64::from_polar(r, 2.0 * PI * j as f64 / grid as f64)
}

/// Samples of a field on `{r e^{2 pi i j / M}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub r: f64,
    pub values: Vec<ComplexPoint>,
}

impl FieldSample {
    pub fn new(r: f64, values: Vec<ComplexPoint>) -> Result<Self> {
        check_radius(r)?;
        check_grid(values.len())?;
        Ok(Self { r, values })
    }

    /// Samples `f` on the `M`-point circle of radius `r`.
    pub fn from_fn<F: Fn(ComplexPoint) -> ComplexPoint>(r: f64, grid: usize, f: F) -> Result<Self> {
        check_radius(r)?;
        check_grid(grid)?;
        Ok(Self {
            r,
            values: (0..grid).map(|j| f(grid_point(r, grid, j))).collect(),
        })
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn point(&self, j: usize) -> ComplexPoint {
        grid_point(self.r, self.values.len(), j)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for v in &mut self.values {
            *v *= factor;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub n: usize,
    pub sup_error: f64,
    /// `log n / sqrt(n)`.
    pub rate_bound: f64,
    pub grid_error_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub theta: f64,
    pub re: f64,
    pub im: f64,
}

/// Constant-capacity trace with its non-convergence witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alpha0Trace {
    pub trace: Vec<TracePoint>,
    pub epsilon_witness: f64,
    pub lambda_hat: f64,
}

impl Alpha0Trace {
    /// Largest sup error over checkpoints in `[lo, hi]`.
    pub fn running_max(&self, lo: usize, hi: usize) -> f64 {
        running_max(&self.trace, lo, hi)
    }
}

pub fn running_max(trace: &[TracePoint], lo: usize, hi: usize) -> f64 {
    trace
        .iter()
        .filter(|t| t.n >= lo && t.n <= hi)
        .map(|t| t.sup_error)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Empirical class constant used in the witness: 0 for the idealized family,
/// the attach-layer sup of the residual ratio for the slit family.
pub fn lambda_hat(family: ParticleFamily, c: f64) -> Result<f64> {
    match family {
        ParticleFamily::Idealized => Ok(0.0),
        ParticleFamily::Slit => {
            let map = SingleParticleMap::new(family, c)?;
            class_bound_ratio(&map, &attach_layer_grid(1e-4, 2.0, 40, 0.8, 33))
        }
    }
}

/// `(2c - lambda c^{3/2}) / (1 + e^{-c})`.
pub fn epsilon_witness(c: f64, lambda: f64) -> f64 {
    (2.0 * c - lambda * c.powf(1.5)) / (1.0 + (-c).exp())
}

/// Sup-error trace of the constant-capacity cluster `Psi_n` at the given
/// checkpoints, together with the witness `epsilon`.
pub fn alpha0_trace(
    c: f64,
    family: ParticleFamily,
    angles: Vec<f64>,
    r: f64,
    grid: usize,
    checkpoints: &[usize],
) -> Result<Alpha0Trace> {
    let params = ScheduleParams::new(0.0, c, angles.len())?;
    let real = ClusterRealization::with_angles(params, family, angles)?;
    let trace = real.sup_error_trace(r, grid, checkpoints)?;
    let lambda = lambda_hat(family, c)?;
    Ok(Alpha0Trace {
        trace,
        epsilon_witness: epsilon_witness(c, lambda),
        lambda_hat: lambda,
    })
}
