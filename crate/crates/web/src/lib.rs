//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every function takes plain numbers and returns a flat `Float64Array`, so
//! the page needs no glue beyond the generated module.

use hlgrowth::schedule::tilde_schedule;
use hlgrowth::spectral::realization_spectrum;
use hlgrowth::stats::theory_variance;
use hlgrowth::{CapacitySchedule, ClusterRealization, ParticleFamily, ScheduleParams};
use wasm_bindgen::prelude::*;

fn family(slit: bool) -> ParticleFamily {
    if slit {
        ParticleFamily::Slit
    } else {
        ParticleFamily::Idealized
    }
}

fn js_err(e: hlgrowth::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Boundary of the cluster after `n` particles, as `[x0, y0, x1, y1, ...]`:
/// the image of the circle of radius `1 + 1e-4` at `points` angles.
#[wasm_bindgen]
pub fn cluster_outline(alpha: f64, c: f64, n: usize, seed: u64, points: usize, slit: bool) -> Result<Vec<f64>, JsError> {
    let params = ScheduleParams::new(alpha, c, n).map_err(js_err)?;
    let real = ClusterRealization::sample(params, family(slit), seed).map_err(js_err)?;
    let trace = real.boundary_trace(n, 1e-4, points).map_err(js_err)?;
    Ok(trace.iter().flat_map(|b| [b.re, b.im]).collect())
}

/// Laurent coefficients of `sqrt(n) (e^{-C} phi_n(z) - z)` on `|z| = 1.25`,
/// as `[re_0, im_0, re_1, im_1, ...]` for `m = 0..=modes`.
#[wasm_bindgen]
pub fn fluctuation_spectrum(alpha: f64, c: f64, n: usize, seed: u64, modes: usize, slit: bool) -> Result<Vec<f64>, JsError> {
    let params = ScheduleParams::new(alpha, c, n).map_err(js_err)?;
    let real = ClusterRealization::sample(params, family(slit), seed).map_err(js_err)?;
    let grid = (4 * modes).next_power_of_two().max(64);
    let spec = realization_spectrum(&real, 1.25, grid, n, modes).map_err(js_err)?;
    Ok(spec.coeffs.iter().flat_map(|a| [a.re, a.im]).collect())
}

/// Limit variance of the real and imaginary parts of each coefficient,
/// for `m = 0..=modes`.
#[wasm_bindgen]
pub fn limit_variances(alpha: f64, modes: usize) -> Result<Vec<f64>, JsError> {
    (0..=modes).map(|m| theory_variance(alpha, m).map_err(js_err)).collect()
}

/// Capacity schedules as `[c*_1, c~_1, c*_2, c~_2, ...]` for `k = 1..=n`.
#[wasm_bindgen]
pub fn capacity_schedules(alpha: f64, c: f64, n: usize) -> Result<Vec<f64>, JsError> {
    let params = ScheduleParams::new(alpha, c, n).map_err(js_err)?;
    let star = CapacitySchedule::new(params).map_err(js_err)?;
    let tilde = tilde_schedule(params).map_err(js_err)?;
    Ok((1..=n).flat_map(|k| [star.c_star(k), tilde.c_tilde(k)]).collect())
}
