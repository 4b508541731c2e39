//! Seed ensembles and the statistical reports built on them.
//!
//! Every acceptance band here is a multiple of a standard error under a
//! Gaussian reference. Reports are plain data: they serialize to JSON and
//! render as aligned text tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cluster::{ClusterRealization, TracePoint};
use crate::conformal::{ComplexPoint, ParticleFamily};
use crate::error::{Error, Result};
use crate::schedule::ScheduleParams;
use crate::spectral::{extract_spectrum, fluctuation_field, mode_coefficient, mode_sums};

/// Limit variance `2 / (alpha (2m + 2 - alpha))` of `A_m` and of `B_m`.
pub fn theory_variance(alpha: f64, m: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!(
            "limit variance needs 0 < alpha < 2, got {alpha}"
        )));
    }
    Ok(2.0 / (alpha * (2.0 * m as f64 + 2.0 - alpha)))
}

/// Leading-order `Var(A_m)` at finite `n`:
/// `2n sum_k (c*_k)^2 e^{-2(m+1) C*_{k+1,n}}`, the conditional variance sum
/// before the limit is taken. Approaches `theory_variance` like
/// `1 - (1 + alpha c n)^{-(2m+2-alpha)/alpha}`, which is slow near `alpha = 2`.
pub fn finite_n_variance(alpha: f64, c: f64, n: usize, m: usize) -> f64 {
    let decay = 2.0 * (m as f64 + 1.0);
    let mut tail = 0.0; // C*_{k+1,n}
    let mut sum = 0.0;
    for k in (1..=n).rev() {
        let ck = c / (1.0 + alpha * c * (k - 1) as f64);
        sum += ck * ck * (-decay * tail).exp();
        tail += ck;
    }
    2.0 * n as f64 * sum
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    /// `params.n_max` must cover the largest checkpoint.
    pub params: ScheduleParams,
    pub family: ParticleFamily,
    pub seeds: Vec<u64>,
    pub r: f64,
    pub grid: usize,
    pub m_max: usize,
    pub checkpoints: Vec<usize>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return Err(Error::InvalidParams("seed list contains duplicates".into()));
        }
        if !(self.r > 1.0 && self.r.is_finite()) {
            return Err(Error::InvalidParams(format!("radius r = {} must exceed 1", self.r)));
        }
        if !self.grid.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "grid size M = {} must be a power of two",
                self.grid
            )));
        }
        if self.grid < 4 * self.m_max {
            return Err(Error::GridTooSmall {
                grid: self.grid,
                required: 4 * self.m_max,
            });
        }
        if self.checkpoints.is_empty() {
            return Err(Error::InvalidParams("at least one checkpoint is required".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams("checkpoints must be strictly increasing".into()));
        }
        if self.checkpoints[0] == 0 || *self.checkpoints.last().unwrap() > self.params.n_max {
            return Err(Error::InvalidParams(format!(
                "checkpoints must lie in 1..={}",
                self.params.n_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSample {
    pub n: usize,
    /// DFT coefficients of `sqrt(n) M_n`, `m = 0..=m_max`.
    pub spectrum: Vec<ComplexPoint>,
    /// Direct mode sums `M(n, m)`; absent for `alpha = 0`.
    pub mode_sums: Option<Vec<ComplexPoint>>,
    pub sup_error: f64,
    pub aliasing_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub checkpoints: Vec<CheckpointSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSamples {
    pub config: EnsembleConfig,
    /// Successful seeds in increasing seed order.
    pub records: Vec<SeedRecord>,
    pub failures: Vec<SeedFailure>,
}

/// Which coefficient estimator to read out of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Dft,
    ModeSums,
}

/// Per-seed coefficient vectors at one `n`, rows in seed order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<Vec<ComplexPoint>>,
}

impl CoefficientTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.rows.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn real_parts(&self, m: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[m].re).collect()
    }

    pub fn imag_parts(&self, m: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[m].im).collect()
    }
}

impl EnsembleSamples {
    pub fn table(&self, n: usize, estimator: Estimator) -> Result<CoefficientTable> {
        let mut seeds = Vec::with_capacity(self.records.len());
        let mut rows = Vec::with_capacity(self.records.len());
        for rec in &self.records {
            let cp = rec
                .checkpoints
                .iter()
                .find(|cp| cp.n == n)
                .ok_or_else(|| Error::Index(format!("n = {n} is not a checkpoint")))?;
            let row = match estimator {
                Estimator::Dft => cp.spectrum.clone(),
                Estimator::ModeSums => cp.mode_sums.clone().ok_or_else(|| {
                    Error::InvalidParams("mode sums are not recorded for alpha = 0".into())
                })?,
            };
            seeds.push(rec.seed);
            rows.push(row);
        }
        Ok(CoefficientTable { n, seeds, rows })
    }

    /// Sup-error traces, one per successful seed.
    pub fn traces(&self) -> Vec<Vec<TracePoint>> {
        self.records
            .iter()
            .map(|rec| {
                rec.checkpoints
                    .iter()
                    .map(|cp| {
                        let nf = cp.n as f64;
                        TracePoint {
                            n: cp.n,
                            sup_error: cp.sup_error,
                            rate_bound: nf.ln() / nf.sqrt(),
                            grid_error_bound: f64::NAN,
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn run_seed(config: &EnsembleConfig, seed: u64) -> Result<SeedRecord> {
    let real = ClusterRealization::sample(config.params, config.family, seed)?;
    let checkpoints = config
        .checkpoints
        .iter()
        .map(|&n| {
            let field = fluctuation_field(&real, config.r, config.grid, n)?;
            let spec = extract_spectrum(&field, n, config.m_max)?;
            let mode_sums = if config.params.alpha > 0.0 {
                Some(mode_sums(&real, n, config.m_max)?.sums)
            } else {
                None
            };
            Ok(CheckpointSample {
                n,
                sup_error: field.sup_norm() / (n as f64).sqrt(),
                spectrum: spec.coeffs,
                mode_sums,
                aliasing_bound: spec.aliasing_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedRecord { seed, checkpoints })
}

/// Simulates every seed and records spectra, mode sums and sup errors at each
/// checkpoint. A failing seed is recorded in `failures` and does not stop the
/// others. Output order is by seed regardless of scheduling.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleSamples> {
    config.validate()?;
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    let outcomes: Vec<(u64, Result<SeedRecord>)> = seeds
        .par_iter()
        .map(|&seed| (seed, run_seed(config, seed)))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(EnsembleSamples {
        config: config.clone(),
        records,
        failures,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
fn variance(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Standard error of a sample variance under a Gaussian reference.
pub fn variance_standard_error(var: f64, samples: usize) -> f64 {
    var * (2.0 / (samples as f64 - 1.0)).sqrt()
}

fn require_samples(got: usize, need: usize, what: &str) -> Result<()> {
    if got < need {
        return Err(Error::InvalidParams(format!(
            "{what} needs at least {need} samples, got {got}"
        )));
    }
    Ok(())
}

fn check_modes(table: &CoefficientTable, m_max: usize) -> Result<()> {
    if table.modes() <= m_max {
        return Err(Error::Index(format!(
            "table holds {} modes, m_max = {m_max} requested",
            table.modes()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeVariance {
    pub m: usize,
    pub var_a: f64,
    pub var_b: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub theory: f64,
    pub z_a: f64,
    pub z_b: f64,
    /// `(Var A - Var B) / sqrt(se_a^2 + se_b^2)`.
    pub z_ab: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub alpha: f64,
    pub n: usize,
    pub samples: usize,
    pub modes: Vec<ModeVariance>,
    pub notes: Vec<String>,
}

pub const M0_NOTE: &str =
    "m = 0 is compared with the same variance formula, whose per-mode derivation assumes m > 0";

impl VarianceReport {
    pub fn max_abs_z(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.z_a.abs().max(m.z_b.abs()))
            .fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "variance report  alpha={}  n={}  N={}\n{:>3} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8}\n",
            self.alpha, self.n, self.samples, "m", "theory", "var_A", "se_A", "var_B", "se_B", "z_A", "z_B", "z_AB"
        );
        for r in &self.modes {
            let _ = writeln!(
                s,
                "{:>3} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>8.3} {:>8.3} {:>8.3}",
                r.m, r.theory, r.var_a, r.se_a, r.var_b, r.se_b, r.z_a, r.z_b, r.z_ab
            );
        }
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        s
    }
}

/// Per-mode variances of `A_m = Re a_m` and `B_m = Im a_m` for `m = 0..=m_max`,
/// with z-scores against [`theory_variance`].
pub fn variance_report(table: &CoefficientTable, alpha: f64, m_max: usize) -> Result<VarianceReport> {
    require_samples(table.len(), 50, "variance_report")?;
    check_modes(table, m_max)?;
    let n_samples = table.len();
    let modes = (0..=m_max)
        .map(|m| {
            let theory = theory_variance(alpha, m)?;
            let var_a = variance(&table.real_parts(m));
            let var_b = variance(&table.imag_parts(m));
            let se_a = variance_standard_error(var_a, n_samples);
            let se_b = variance_standard_error(var_b, n_samples);
            Ok(ModeVariance {
                m,
                var_a,
                var_b,
                se_a,
                se_b,
                theory,
                z_a: (var_a - theory) / se_a,
                z_b: (var_b - theory) / se_b,
                z_ab: (var_a - var_b) / se_a.hypot(se_b),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceReport {
        alpha,
        n: table.n,
        samples: n_samples,
        modes,
        notes: vec![M0_NOTE.to_string()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairKind {
    AA,
    BB,
    AB,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEntry {
    pub kind: PairKind,
    pub i: usize,
    pub j: usize,
    pub corr: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub n: usize,
    pub samples: usize,
    pub m_max: usize,
    /// `3 / sqrt(N)`.
    pub band: f64,
    /// Sample variances of `A_0..A_{m_max}` then `B_0..B_{m_max}`.
    pub diagonal_a: Vec<f64>,
    pub diagonal_b: Vec<f64>,
    pub entries: Vec<CorrelationEntry>,
}

impl CovarianceReport {
    pub fn max_abs_corr(&self) -> f64 {
        self.entries.iter().map(|e| e.corr.abs()).fold(0.0, f64::max)
    }

    pub fn all_within_band(&self) -> bool {
        self.entries.iter().all(|e| e.within_band)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "correlation report  n={}  N={}  band=+-{:.4}\n{:>4} {:>3} {:>3} {:>9}  ok\n",
            self.n, self.samples, self.band, "pair", "i", "j", "corr"
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:>4} {:>3} {:>3} {:>9.4}  {}",
                format!("{:?}", e.kind),
                e.i,
                e.j,
                e.corr,
                if e.within_band { "yes" } else { "NO" }
            );
        }
        let _ = writeln!(s, "max |corr| = {:.4}", self.max_abs_corr());
        s
    }
}

/// Correlations for all pairs `(A_i, A_j)` and `(B_i, B_j)` with `i < j`, and
/// `(A_i, B_j)` for all `i, j <= m_max`.
pub fn covariance_report(table: &CoefficientTable, m_max: usize) -> Result<CovarianceReport> {
    require_samples(table.len(), 50, "covariance_report")?;
    check_modes(table, m_max)?;
    let a: Vec<Vec<f64>> = (0..=m_max).map(|m| table.real_parts(m)).collect();
    let b: Vec<Vec<f64>> = (0..=m_max).map(|m| table.imag_parts(m)).collect();
    let band = 3.0 / (table.len() as f64).sqrt();
    let mut entries = Vec::new();
    let mut push = |kind, i, j, corr: f64| {
        entries.push(CorrelationEntry {
            kind,
            i,
            j,
            corr,
            within_band: corr.abs() <= band,
        })
    };
    for i in 0..=m_max {
        for j in i + 1..=m_max {
            push(PairKind::AA, i, j, correlation(&a[i], &a[j]));
        }
    }
    for i in 0..=m_max {
        for j in i + 1..=m_max {
            push(PairKind::BB, i, j, correlation(&b[i], &b[j]));
        }
    }
    for i in 0..=m_max {
        for j in 0..=m_max {
            push(PairKind::AB, i, j, correlation(&a[i], &b[j]));
        }
    }
    Ok(CovarianceReport {
        n: table.n,
        samples: table.len(),
        m_max,
        band,
        diagonal_a: a.iter().map(|x| variance(x)).collect(),
        diagonal_b: b.iter().map(|x| variance(x)).collect(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeDiagnostics {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Max distance between the empirical CDF and the fitted normal CDF.
    pub ks_distance: f64,
    pub skewness_ok: bool,
    pub kurtosis_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeNormality {
    pub m: usize,
    pub a: ShapeDiagnostics,
    pub b: ShapeDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub n: usize,
    pub samples: usize,
    /// `3 sqrt(6/N)`.
    pub skewness_band: f64,
    /// `3 sqrt(24/N)`.
    pub kurtosis_band: f64,
    pub modes: Vec<ModeNormality>,
    /// False when any diagnostic leaves its band; informational only.
    pub looks_gaussian: bool,
}

impl NormalityReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "normality report  n={}  N={}  skew band=+-{:.3}  kurt band=+-{:.3}\n{:>3} {:>4} {:>9} {:>9} {:>8}\n",
            self.n, self.samples, self.skewness_band, self.kurtosis_band, "m", "part", "skew", "ex.kurt", "KS"
        );
        for r in &self.modes {
            for (part, d) in [("A", &r.a), ("B", &r.b)] {
                let _ = writeln!(
                    s,
                    "{:>3} {:>4} {:>9.4} {:>9.4} {:>8.4}{}",
                    r.m,
                    part,
                    d.skewness,
                    d.excess_kurtosis,
                    d.ks_distance,
                    if d.skewness_ok && d.kurtosis_ok { "" } else { "  (outside band)" }
                );
            }
        }
        if !self.looks_gaussian {
            s.push_str("flag: shape diagnostics outside Gaussian bands (finite-n regime)\n");
        }
        s
    }
}

/// Sample skewness, excess kurtosis and KS distance against the normal
/// with the sample mean and standard deviation.
pub fn shape_diagnostics(xs: &[f64], skew_band: f64, kurt_band: f64) -> ShapeDiagnostics {
    let n = xs.len() as f64;
    let mu = mean(xs);
    let m2 = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mu).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / n;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let ks_distance = match Normal::new(mu, m2.sqrt()) {
        Ok(normal) => {
            let mut sorted = xs.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = normal.cdf(x);
                    (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
                })
                .fold(0.0, f64::max)
        }
        Err(_) => f64::NAN,
    };
    ShapeDiagnostics {
        skewness,
        excess_kurtosis,
        ks_distance,
        skewness_ok: skewness.abs() <= skew_band,
        kurtosis_ok: excess_kurtosis.abs() <= kurt_band,
    }
}

pub fn normality_report(table: &CoefficientTable, m_max: usize) -> Result<NormalityReport> {
    require_samples(table.len(), 100, "normality_report")?;
    check_modes(table, m_max)?;
    let n = table.len() as f64;
    let skewness_band = 3.0 * (6.0 / n).sqrt();
    let kurtosis_band = 3.0 * (24.0 / n).sqrt();
    let modes: Vec<ModeNormality> = (0..=m_max)
        .map(|m| ModeNormality {
            m,
            a: shape_diagnostics(&table.real_parts(m), skewness_band, kurtosis_band),
            b: shape_diagnostics(&table.imag_parts(m), skewness_band, kurtosis_band),
        })
        .collect();
    let looks_gaussian = modes.iter().all(|r| {
        r.a.skewness_ok && r.a.kurtosis_ok && r.b.skewness_ok && r.b.kurtosis_ok
    });
    Ok(NormalityReport {
        n: table.n,
        samples: table.len(),
        skewness_band,
        kurtosis_band,
        modes,
        looks_gaussian,
    })
}

/// `max_k |a_{k,n}(m)|`, the largest single-particle contribution to mode `m`.
pub fn lindeberg_diagnostic(real: &ClusterRealization, n: usize, m: usize) -> Result<f64> {
    (1..=n).try_fold(0.0f64, |acc, k| Ok(acc.max(mode_coefficient(real, k, n, m)?.norm())))
}

/// `2c(1 + alpha c) sqrt(n) / (1 + alpha c n)`, an upper envelope for the
/// `m = 0` diagnostic.
pub fn lindeberg_envelope(alpha: f64, c: f64, n: usize) -> f64 {
    let n = n as f64;
    2.0 * c * (1.0 + alpha * c) * n.sqrt() / (1.0 + alpha * c * n)
}

/// `sum_k (Re a_{k,n}(m))^2` along one realization.
pub fn quadratic_variation(real: &ClusterRealization, n: usize, m: usize) -> Result<f64> {
    (1..=n).try_fold(0.0, |acc, k| Ok(acc + mode_coefficient(real, k, n, m)?.re.powi(2)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFitReport {
    pub alpha: f64,
    pub seeds: usize,
    pub checkpoints: Vec<usize>,
    /// Fraction of `(seed, n)` with `sup_error <= log n / sqrt n`.
    pub fraction_within: f64,
    /// Least-squares slope of `log sup` against `log n`, all points pooled.
    pub slope: f64,
    pub slope_band: (f64, f64),
    pub medians: Vec<f64>,
    pub medians_decreasing: bool,
    pub excluded: Option<String>,
}

pub const SLOPE_BAND: (f64, f64) = (-0.65, -0.35);

impl RateFitReport {
    pub fn slope_in_band(&self) -> bool {
        self.slope >= self.slope_band.0 && self.slope <= self.slope_band.1
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("rate fit  alpha={}  seeds={}\n", self.alpha, self.seeds);
        if let Some(note) = &self.excluded {
            let _ = writeln!(s, "excluded: {note}");
            return s;
        }
        let _ = writeln!(s, "{:>8} {:>12} {:>12}", "n", "median sup", "log n/sqrt n");
        for (n, med) in self.checkpoints.iter().zip(&self.medians) {
            let nf = *n as f64;
            let _ = writeln!(s, "{:>8} {:>12.6} {:>12.6}", n, med, nf.ln() / nf.sqrt());
        }
        let _ = writeln!(
            s,
            "fraction within bound {:.4}; slope {:.4} (band [{}, {}]); medians decreasing: {}",
            self.fraction_within, self.slope, self.slope_band.0, self.slope_band.1, self.medians_decreasing
        );
        s
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Checks sup-error traces against the `log n / sqrt n` rate. Traces must
/// share their checkpoints. For `alpha = 0` no rate is claimed and the report
/// only records the exclusion.
pub fn rate_fit(alpha: f64, traces: &[Vec<TracePoint>]) -> Result<RateFitReport> {
    let checkpoints: Vec<usize> = traces
        .first()
        .map(|t| t.iter().map(|p| p.n).collect())
        .unwrap_or_default();
    if alpha == 0.0 {
        return Ok(RateFitReport {
            alpha,
            seeds: traces.len(),
            checkpoints,
            fraction_within: f64::NAN,
            slope: f64::NAN,
            slope_band: SLOPE_BAND,
            medians: Vec::new(),
            medians_decreasing: false,
            excluded: Some("alpha = 0: no convergence, so no rate is fitted".into()),
        });
    }
    require_samples(traces.len(), 20, "rate_fit")?;
    if checkpoints.len() < 4 {
        return Err(Error::InvalidParams("rate_fit needs at least 4 checkpoints".into()));
    }
    if traces
        .iter()
        .any(|t| t.len() != checkpoints.len() || t.iter().zip(&checkpoints).any(|(p, &n)| p.n != n))
    {
        return Err(Error::MismatchedLevels("traces use different checkpoints".into()));
    }
    let points: Vec<(f64, f64)> = traces
        .iter()
        .flatten()
        .map(|p| ((p.n as f64).ln(), p.sup_error))
        .collect();
    let within = traces
        .iter()
        .flatten()
        .filter(|p| p.sup_error <= p.rate_bound)
        .count();
    let fraction_within = within as f64 / points.len() as f64;
    let slope = least_squares_slope(points.iter().map(|&(x, y)| (x, y.ln())));
    let medians: Vec<f64> = (0..checkpoints.len())
        .map(|j| median(&mut traces.iter().map(|t| t[j].sup_error).collect::<Vec<_>>()))
        .collect();
    let medians_decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    Ok(RateFitReport {
        alpha,
        seeds: traces.len(),
        checkpoints,
        fraction_within,
        slope,
        slope_band: SLOPE_BAND,
        medians,
        medians_decreasing,
        excluded: None,
    })
}

pub fn least_squares_slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let k = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / k, sy / k);
    let (sxy, sxx) = points.fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx).powi(2))
    });
    sxy / sxx
}

/// How the particle count is chosen for each `alpha` in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepLength {
    Fixed(usize),
    /// `n = ceil(t / (alpha c))`, so that `alpha c n = t` for every `alpha`.
    CapacityScaled(f64),
    /// Smallest `n` in `[min_n, max_n]` whose `finite_n_variance` at `m = 0`
    /// reaches `fraction` of the limit; `max_n` if none does.
    LimitFraction { fraction: f64, min_n: usize, max_n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub c: f64,
    pub family: ParticleFamily,
    pub seeds: Vec<u64>,
    pub r: f64,
    pub grid: usize,
    pub length: SweepLength,
}

impl SweepConfig {
    pub fn particles(&self, alpha: f64) -> usize {
        match self.length {
            SweepLength::Fixed(n) => n,
            SweepLength::CapacityScaled(t) => (t / (alpha * self.c)).ceil() as usize,
            SweepLength::LimitFraction { fraction, min_n, max_n } => {
                let target = fraction * 2.0 / (alpha * (2.0 - alpha));
                let reaches = |n: usize| finite_n_variance(alpha, self.c, n, 0) >= target;
                if reaches(min_n) {
                    return min_n;
                }
                if !reaches(max_n) {
                    return max_n;
                }
                let (mut lo, mut hi) = (min_n, max_n);
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if reaches(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub alpha: f64,
    pub n: usize,
    pub samples: usize,
    pub var_a0: f64,
    pub se: f64,
    pub theory: f64,
    pub finite_n_theory: f64,
    pub z: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Theory strictly decreases then strictly increases along the grid.
    pub theory_valley_shaped: bool,
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "alpha sweep (m = 0)\n{:>6} {:>7} {:>5} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
            "alpha", "n", "N", "theory", "finite-n", "var_A0", "se", "z"
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:>6} {:>7} {:>5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>8.3}",
                e.alpha, e.n, e.samples, e.theory, e.finite_n_theory, e.var_a0, e.se, e.z
            );
        }
        let _ = writeln!(s, "theory valley-shaped on grid: {}", self.theory_valley_shaped);
        s
    }
}

/// True when `values` strictly decrease to a single minimum and then strictly
/// increase (either side may be empty).
pub fn is_valley_shaped(values: &[f64]) -> bool {
    let mut i = 1;
    while i < values.len() && values[i] < values[i - 1] {
        i += 1;
    }
    while i < values.len() && values[i] > values[i - 1] {
        i += 1;
    }
    i >= values.len()
}

/// Empirical `Var(A_0)` per `alpha` against `2 / (alpha (2 - alpha))`.
pub fn alpha_sweep(alphas: &[f64], config: &SweepConfig) -> Result<SweepReport> {
    let mut entries = Vec::with_capacity(alphas.len());
    let mut theories = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let theory = theory_variance(alpha, 0)?;
        let n = config.particles(alpha);
        let ens = run_ensemble(&EnsembleConfig {
            params: ScheduleParams::new(alpha, config.c, n)?,
            family: config.family,
            seeds: config.seeds.clone(),
            r: config.r,
            grid: config.grid,
            m_max: 0,
            checkpoints: vec![n],
        })?;
        let table = ens.table(n, Estimator::Dft)?;
        require_samples(table.len(), 2, "alpha_sweep")?;
        let var_a0 = variance(&table.real_parts(0));
        let se = variance_standard_error(var_a0, table.len());
        entries.push(SweepEntry {
            alpha,
            n,
            samples: table.len(),
            var_a0,
            se,
            theory,
            finite_n_theory: finite_n_variance(alpha, config.c, n, 0),
            z: (var_a0 - theory) / se,
            failures: ens.failures.len(),
        });
        theories.push(theory);
    }
    Ok(SweepReport {
        entries,
        theory_valley_shaped: is_valley_shaped(&theories),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal as RNormal};

    fn synthetic_table(var: f64, samples: usize, modes: usize, seed: u64) -> CoefficientTable {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let d = RNormal::new(0.0, var.sqrt()).unwrap();
        let rows = (0..samples)
            .map(|_| {
                (0..modes)
                    .map(|_| Complex64::new(d.sample(&mut rng), d.sample(&mut rng)))
                    .collect()
            })
            .collect();
        CoefficientTable {
            n: 0,
            seeds: (0..samples as u64).collect(),
            rows,
        }
    }

    #[test]
    fn theory_values() {
        assert_eq!(theory_variance(1.0, 0).unwrap(), 2.0);
        assert_relative_eq!(theory_variance(1.0, 1).unwrap(), 2.0 / 3.0);
        assert_relative_eq!(theory_variance(0.5, 2).unwrap(), 8.0 / 11.0, epsilon = 1e-15);
        assert!(theory_variance(0.0, 0).is_err());
        assert!(theory_variance(2.0, 3).is_err());
        for a in [0.1, 0.4, 0.9, 1.3] {
            assert_relative_eq!(
                theory_variance(a, 0).unwrap(),
                theory_variance(2.0 - a, 0).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn theory_diverges_at_endpoints() {
        let down: Vec<f64> = (1..=8).map(|j| 0.5f64.powi(j)).collect();
        for m in 0..6 {
            let v: Vec<f64> = down.iter().map(|&a| theory_variance(a, m).unwrap()).collect();
            assert!(v.windows(2).all(|w| w[1] > w[0]));
        }
        let up: Vec<f64> = down.iter().map(|a| 2.0 - a).collect();
        let v: Vec<f64> = up.iter().map(|&a| theory_variance(a, 0).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        let grid = [0.25, 0.5, 1.0, 1.5, 1.75];
        let v: Vec<f64> = grid.iter().map(|&a| theory_variance(a, 0).unwrap()).collect();
        assert!(is_valley_shaped(&v));
        assert!(!is_valley_shaped(&[1.0, 2.0, 1.0]));
    }

    #[test]
    fn estimator_recovers_synthetic_variance() {
        for (i, var) in [0.1, 1.0, 10.0].into_iter().enumerate() {
            let t = synthetic_table(var, 400, 3, 100 + i as u64);
            for m in 0..3 {
                let v = variance(&t.real_parts(m));
                assert!((v - var).abs() <= 3.0 * variance_standard_error(var, 400), "{var} {v}");
            }
        }
    }

    #[test]
    fn synthetic_gaussian_is_inside_bands() {
        let t = synthetic_table(1.0, 400, 6, 5);
        let rep = normality_report(&t, 5).unwrap();
        assert!(rep.looks_gaussian, "{}", rep.to_table());
        assert!(rep.modes.iter().all(|m| m.a.ks_distance < 0.1));
        let cov = covariance_report(&t, 5).unwrap();
        assert!(cov.all_within_band(), "{}", cov.to_table());
        assert_eq!(cov.entries.len(), 15 + 15 + 36);
        assert_relative_eq!(cov.diagonal_a[2], variance(&t.real_parts(2)));
    }

    #[test]
    fn skewed_input_is_flagged() {
        let mut t = synthetic_table(1.0, 400, 1, 9);
        for row in t.rows.iter_mut() {
            row[0] = Complex64::new(row[0].re.exp(), row[0].im);
        }
        let rep = normality_report(&t, 0).unwrap();
        assert!(!rep.modes[0].a.skewness_ok);
        assert!(!rep.looks_gaussian);
        assert!(rep.to_table().contains("flag"));
    }

    #[test]
    fn sample_size_preconditions() {
        let t = synthetic_table(1.0, 60, 2, 1);
        assert!(variance_report(&t, 1.0, 1).is_ok());
        assert!(normality_report(&t, 1).is_err());
        assert!(variance_report(&t, 1.0, 2).is_err());
        let small = synthetic_table(1.0, 10, 2, 1);
        assert!(variance_report(&small, 1.0, 1).is_err());
    }

    #[test]
    fn variance_report_z_scores() {
        let t = synthetic_table(2.0, 400, 1, 77);
        let rep = variance_report(&t, 1.0, 0).unwrap();
        assert!(rep.modes[0].z_a.abs() <= 3.0);
        assert!(rep.to_table().contains("note:"));
    }

    #[test]
    fn ensemble_is_sorted_and_deterministic() {
        let cfg = EnsembleConfig {
            params: ScheduleParams::new(1.0, 0.05, 40).unwrap(),
            family: ParticleFamily::Slit,
            seeds: vec![5, 2, 9],
            r: 1.5,
            grid: 64,
            m_max: 4,
            checkpoints: vec![20, 40],
        };
        let a = run_ensemble(&cfg).unwrap();
        assert_eq!(a.records.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![2, 5, 9]);
        assert_eq!(a, run_ensemble(&cfg).unwrap());
        let t = a.table(40, Estimator::ModeSums).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.modes(), 5);
        assert!(a.table(30, Estimator::Dft).is_err());
        assert_eq!(a.traces()[0].len(), 2);
    }

    #[test]
    fn ensemble_validation() {
        let mut cfg = EnsembleConfig {
            params: ScheduleParams::new(1.0, 0.05, 40).unwrap(),
            family: ParticleFamily::Slit,
            seeds: vec![],
            r: 1.5,
            grid: 64,
            m_max: 4,
            checkpoints: vec![40],
        };
        let empty = run_ensemble(&cfg).unwrap();
        assert!(empty.records.is_empty() && empty.failures.is_empty());
        cfg.seeds = vec![1, 1];
        assert!(run_ensemble(&cfg).is_err());
        cfg.seeds = vec![1];
        cfg.checkpoints = vec![41];
        assert!(run_ensemble(&cfg).is_err());
        cfg.checkpoints = vec![40];
        cfg.grid = 8;
        assert!(matches!(run_ensemble(&cfg), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn lindeberg_below_envelope() {
        let (alpha, c, n) = (1.0, 0.01, 2000);
        let real = ClusterRealization::sample(ScheduleParams::new(alpha, c, n).unwrap(), ParticleFamily::Slit, 3)
            .unwrap();
        let v0 = lindeberg_diagnostic(&real, n, 0).unwrap();
        assert!(v0 <= lindeberg_envelope(alpha, c, n));
        assert!(lindeberg_diagnostic(&real, 200, 0).unwrap() > v0);
        assert!(lindeberg_diagnostic(&real, n, 16).unwrap() < v0);
    }

    #[test]
    fn finite_n_variance_matches_integral_and_limit() {
        // integral form 2nc/(2m+2-alpha) (1 - x^{-(2m+2-alpha)/alpha}) / x, x = 1 + alpha c n
        for (alpha, n) in [(1.0, 3000), (1.75, 1715), (0.25, 12000)] {
            let c = 0.01;
            let x: f64 = 1.0 + alpha * c * n as f64;
            let q = 2.0 - alpha;
            let integral = 2.0 * n as f64 * c / q * (1.0 - x.powf(-q / alpha)) / x;
            assert_relative_eq!(finite_n_variance(alpha, c, n, 0), integral, max_relative = 0.02);
        }
        assert_relative_eq!(finite_n_variance(0.5, 0.01, 1_000_000, 2), theory_variance(0.5, 2).unwrap(), max_relative = 0.01);
        assert!(finite_n_variance(1.75, 0.01, 1715, 0) < 0.4 * theory_variance(1.75, 0).unwrap());
    }

    #[test]
    fn limit_fraction_length() {
        let cfg = SweepConfig {
            c: 0.5,
            family: ParticleFamily::Slit,
            seeds: Vec::new(),
            r: 1.5,
            grid: 32,
            length: SweepLength::LimitFraction { fraction: 0.95, min_n: 1000, max_n: 200_000 },
        };
        assert_eq!(cfg.particles(0.5), 1000);
        let n = cfg.particles(1.5);
        assert!(n > 1000 && n < 200_000);
        assert!(finite_n_variance(1.5, 0.5, n, 0) >= 0.95 * theory_variance(1.5, 0).unwrap());
        assert!(finite_n_variance(1.5, 0.5, n - 1, 0) < 0.95 * theory_variance(1.5, 0).unwrap());
        assert_eq!(cfg.particles(1.75), 200_000);
    }

    #[test]
    fn quadratic_variation_near_theory() {
        let (alpha, c, n) = (1.0, 0.01, 3000);
        let params = ScheduleParams::new(alpha, c, n).unwrap();
        let qs: Vec<f64> = (0..20)
            .map(|s| {
                let real = ClusterRealization::sample(params, ParticleFamily::Idealized, s).unwrap();
                quadratic_variation(&real, n, 1).unwrap()
            })
            .collect();
        let target = finite_n_variance(alpha, c, n, 1);
        assert!((mean(&qs) - target).abs() < 0.1 * target, "{} {target}", mean(&qs));
    }

    #[test]
    fn rate_fit_on_synthetic_traces() {
        let checkpoints = [250, 500, 1000, 2000, 4000];
        let traces: Vec<Vec<TracePoint>> = (0..20)
            .map(|s| {
                checkpoints
                    .iter()
                    .map(|&n| {
                        let nf = n as f64;
                        TracePoint {
                            n,
                            sup_error: (1.0 + 0.01 * s as f64) * 0.5 / nf.sqrt(),
                            rate_bound: nf.ln() / nf.sqrt(),
                            grid_error_bound: f64::NAN,
                        }
                    })
                    .collect()
            })
            .collect();
        let rep = rate_fit(1.0, &traces).unwrap();
        assert_eq!(rep.fraction_within, 1.0);
        assert_relative_eq!(rep.slope, -0.5, epsilon = 1e-12);
        assert!(rep.slope_in_band() && rep.medians_decreasing);
        let excluded = rate_fit(0.0, &traces).unwrap();
        assert!(excluded.excluded.is_some());
        assert!(rate_fit(1.0, &traces[..5]).is_err());
    }
}
