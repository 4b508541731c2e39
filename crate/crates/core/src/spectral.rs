//! Laurent coefficients of the rescaled fluctuation field `sqrt(n) M_n(z)`.
//!
//! Two estimators are provided. [`extract_spectrum`] reads the coefficients
//! off samples of the actual field on a circle; [`mode_sums`] evaluates the
//! leading-order per-particle expansion
//! `a_{k,n}(m) = 2 c*_k sqrt(n) e^{i theta_k (m+1)} e^{-(m+1) C*_{k+1,n}}`
//! directly from the angles and the schedule, with no map composition.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::cluster::{ClusterRealization, FieldSample};
use crate::conformal::ComplexPoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaurentSpectrum {
    pub r: f64,
    pub n: usize,
    pub m_max: usize,
    /// `a_0 .. a_{m_max}`, where `a_m = A_m + i B_m`.
    pub coeffs: Vec<ComplexPoint>,
    /// `sup|F| r^{-M + m_max}`.
    pub aliasing_bound: f64,
}

/// All `M` positive-frequency projections `r^m (1/M) sum_j F_j e^{2 pi i j m / M}`.
///
/// Index `m` holds the `z^{-m}` coefficient for `m < M/2`; indices near `M`
/// collect any content that aliases from `z^{-(m + M)}` or `z^{M - m}`.
pub fn laurent_dft(field: &FieldSample) -> Vec<ComplexPoint> {
    let grid = field.values.len();
    let mut buf = field.values.clone();
    FftPlanner::<f64>::new()
        .plan_fft_inverse(grid)
        .process(&mut buf);
    let inv = 1.0 / grid as f64;
    let mut rm = 1.0;
    for v in buf.iter_mut() {
        *v *= rm * inv;
        rm *= field.r;
    }
    buf
}

pub fn extract_spectrum(field: &FieldSample, n: usize, m_max: usize) -> Result<LaurentSpectrum> {
    let grid = field.values.len();
    if grid < 4 * m_max || grid == 0 {
        return Err(Error::GridTooSmall {
            grid,
            required: 4 * m_max,
        });
    }
    let mut coeffs = laurent_dft(field);
    coeffs.truncate(m_max + 1);
    let aliasing_bound = field.sup_norm() * field.r.powi(-(grid as i32) + m_max as i32);
    Ok(LaurentSpectrum {
        r: field.r,
        n,
        m_max,
        coeffs,
        aliasing_bound,
    })
}

/// `sqrt(n) M_n` on the `M`-point circle of radius `r`.
pub fn fluctuation_field(real: &ClusterRealization, r: f64, grid: usize, n: usize) -> Result<FieldSample> {
    Ok(real.error_field(r, grid, n)?.scaled((n as f64).sqrt()))
}

/// Spectrum of `sqrt(n) M_n` for one realization.
pub fn realization_spectrum(
    real: &ClusterRealization,
    r: f64,
    grid: usize,
    n: usize,
    m_max: usize,
) -> Result<LaurentSpectrum> {
    extract_spectrum(&fluctuation_field(real, r, grid, n)?, n, m_max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSums {
    pub n: usize,
    pub m_max: usize,
    /// `M(n, m) = sum_k a_{k,n}(m)` for `m = 0..=m_max`.
    pub sums: Vec<ComplexPoint>,
}

fn require_growth(real: &ClusterRealization) -> Result<()> {
    if real.params().alpha <= 0.0 {
        return Err(Error::InvalidParams(
            "mode sums are defined for alpha in (0, 2)".into(),
        ));
    }
    Ok(())
}

fn check_n(real: &ClusterRealization, n: usize) -> Result<()> {
    if n > real.n() {
        return Err(Error::Index(format!("n = {n} exceeds realization size {}", real.n())));
    }
    Ok(())
}

/// `(2 c*_k sqrt(n) e^{-C*_{k+1,n}}, e^{i theta_k} e^{-C*_{k+1,n}})`: the
/// modulus of `a_{k,n}(0)` and the per-mode ratio `q_k`, so that
/// `a_{k,n}(m) = 2 c*_k sqrt(n) q_k^{m+1}`.
fn particle_terms(real: &ClusterRealization, n: usize) -> impl Iterator<Item = (f64, ComplexPoint)> + '_ {
    let root_n = (n as f64).sqrt();
    (1..=n).map(move |k| {
        let decay = (-real.capacity_sum(k + 1, n)).exp();
        let lead = 2.0 * real.schedule().c_star(k) * root_n;
        (lead, Complex64::from_polar(decay, real.angles()[k - 1]))
    })
}

pub fn mode_sums(real: &ClusterRealization, n: usize, m_max: usize) -> Result<ModeSums> {
    require_growth(real)?;
    check_n(real, n)?;
    let mut sums = vec![Complex64::new(0.0, 0.0); m_max + 1];
    for (lead, q) in particle_terms(real, n) {
        let mut pow = q;
        for s in sums.iter_mut() {
            *s += lead * pow;
            pow *= q;
        }
    }
    Ok(ModeSums { n, m_max, sums })
}

/// Per-mode coefficient `a_{k,n}(m)`.
pub fn mode_coefficient(real: &ClusterRealization, k: usize, n: usize, m: usize) -> Result<ComplexPoint> {
    require_growth(real)?;
    check_n(real, n)?;
    if k == 0 || k > n {
        return Err(Error::Index(format!("need 1 <= k <= n; k={k}, n={n}")));
    }
    let decay = (-real.capacity_sum(k + 1, n)).exp();
    let lead = 2.0 * real.schedule().c_star(k) * (n as f64).sqrt();
    Ok(lead * Complex64::from_polar(decay.powi(m as i32 + 1), real.angles()[k - 1] * (m + 1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSup {
    /// `sup_grid |sqrt(n) M_n(z) - sum_{m <= m_max} M(n,m) z^{-m}|`.
    pub sup: f64,
    /// Bound on the discarded modes `m > m_max` on `|z| = r`.
    pub tail_bound: f64,
}

/// Grid sup of the difference between the true rescaled field and its
/// truncated leading-order expansion.
pub fn residual_sup(real: &ClusterRealization, n: usize, r: f64, grid: usize, m_max: usize) -> Result<ResidualSup> {
    require_growth(real)?;
    check_n(real, n)?;
    if n == 0 {
        return Ok(ResidualSup { sup: 0.0, tail_bound: 0.0 });
    }
    let field = fluctuation_field(real, r, grid, n)?;
    let modes = mode_sums(real, n, m_max)?;
    let mut sup = 0.0_f64;
    for (j, v) in field.values.iter().enumerate() {
        let zinv = 1.0 / field.point(j);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut series = Complex64::new(0.0, 0.0);
        for s in &modes.sums {
            series += s * pow;
            pow *= zinv;
        }
        sup = sup.max((v - series).norm());
    }
    let tail_bound = particle_terms(real, n)
        .map(|(lead, q)| {
            let rho = q.norm() / r;
            lead * q.norm() * rho.powi(m_max as i32 + 1) / (1.0 - rho)
        })
        .sum();
    Ok(ResidualSup { sup, tail_bound })
}

/// `Y_{k,n}(z) = sqrt(n) X_{k,n}(z) - 2 c*_k sqrt(n) z / (e^{-i theta_k} e^{C*_{k+1,n}} z - 1)`.
pub fn residual_increment(real: &ClusterRealization, z: ComplexPoint, k: usize, n: usize) -> Result<ComplexPoint> {
    let x = real.increment_x(z, k, n)?;
    let root_n = (n as f64).sqrt();
    let rot = Complex64::from_polar(real.capacity_sum(k + 1, n).exp(), -real.angles()[k - 1]);
    let lead = 2.0 * real.schedule().c_star(k) * root_n * z / (rot * z - 1.0);
    Ok(root_n * x - lead)
}

/// Ensemble mean of `sum_{m=T}^{m_max} |a_m|^2 r^{-m}`.
pub fn tail_mass(spectra: &[LaurentSpectrum], cutoff: usize, r: f64) -> Result<f64> {
    if spectra.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in spectra {
        if cutoff > s.m_max {
            return Err(Error::Index(format!("cutoff {cutoff} > m_max {}", s.m_max)));
        }
        total += s.coeffs[cutoff..]
            .iter()
            .enumerate()
            .map(|(i, a)| a.norm_sqr() * r.powi(-((cutoff + i) as i32)))
            .sum::<f64>();
    }
    Ok(total / spectra.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DhDistance {
    pub value: f64,
    /// Weight of the levels beyond the last sampled one, `2^{-L+1}`.
    pub truncation_bound: f64,
}

/// Radii `1 + 2^{-m}` for `m = 0..levels`.
pub fn dh_radii(levels: usize) -> Vec<f64> {
    (0..levels).map(|m| 1.0 + 0.5f64.powi(m as i32)).collect()
}

/// `sum_m 2^{-m} min(1, sup_grid |f - g|)` over the sampled levels.
pub fn dh_distance(f: &[FieldSample], g: &[FieldSample]) -> Result<DhDistance> {
    if f.len() != g.len() {
        return Err(Error::MismatchedLevels(format!("{} vs {} levels", f.len(), g.len())));
    }
    let radii = dh_radii(f.len());
    let mut value = 0.0;
    for (m, ((a, b), r)) in f.iter().zip(g).zip(&radii).enumerate() {
        if a.values.len() != b.values.len() {
            return Err(Error::MismatchedLevels(format!("level {m}: grid sizes differ")));
        }
        if (a.r - r).abs() > 1e-12 || (b.r - r).abs() > 1e-12 {
            return Err(Error::MismatchedLevels(format!(
                "level {m} must be sampled at radius {r}"
            )));
        }
        let sup = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        value += 0.5f64.powi(m as i32) * sup.min(1.0);
    }
    Ok(DhDistance {
        value,
        truncation_bound: 0.5f64.powi(f.len() as i32 - 1),
    })
}

/// `sqrt(n) M_n` at every level radius of the metric.
pub fn level_fields(real: &ClusterRealization, n: usize, levels: usize, grid: usize) -> Result<Vec<FieldSample>> {
    dh_radii(levels)
        .into_iter()
        .map(|r| fluctuation_field(real, r, grid, n))
        .collect()
}
