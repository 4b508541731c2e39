use std::fmt::Write as _;

use hlgrowth::schedule::{schedule_gap, CapacitySchedule, InftySchedule};
use hlgrowth::stats::{
    covariance_report, normality_report, rate_fit, variance_report, CovarianceReport, EnsembleSamples, Estimator,
    NormalityReport, RateFitReport, SeedFailure, VarianceReport,
};
use serde::Serialize;

use crate::error::CliResult;

#[derive(Debug, Serialize)]
pub struct CheckpointReport {
    pub n: usize,
    pub variance: Option<VarianceReport>,
    pub covariance: Option<CovarianceReport>,
    pub normality: Option<NormalityReport>,
    /// Ensemble mean of `|a_m(DFT) - M(n, m)|` per mode.
    pub cross_estimator: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct EnsembleReport {
    pub manifest_hash: String,
    pub seeds_requested: usize,
    pub seeds_completed: usize,
    pub failures: Vec<SeedFailure>,
    pub checkpoints: Vec<CheckpointReport>,
    pub rate_fit: Option<RateFitReport>,
    pub notes: Vec<String>,
}

pub fn ensemble_report(samples: &EnsembleSamples, manifest_hash: String) -> CliResult<EnsembleReport> {
    let cfg = &samples.config;
    let alpha = cfg.params.alpha;
    let completed = samples.records.len();
    let mut checkpoints = Vec::new();
    for &n in &cfg.checkpoints {
        let mut notes = Vec::new();
        let table = samples.table(n, Estimator::Dft)?;
        let variance = if alpha > 0.0 && completed >= 50 {
            Some(variance_report(&table, alpha, cfg.m_max)?)
        } else {
            notes.push(skip_note("variance report", alpha, completed, 50));
            None
        };
        let covariance = if completed >= 50 {
            Some(covariance_report(&table, cfg.m_max)?)
        } else {
            notes.push(format!("correlation report skipped: {completed} seeds < 50"));
            None
        };
        let normality = if completed >= 100 {
            Some(normality_report(&table, cfg.m_max)?)
        } else {
            notes.push(format!("normality report skipped: {completed} seeds < 100"));
            None
        };
        let cross_estimator = if alpha > 0.0 && completed > 0 {
            let sums = samples.table(n, Estimator::ModeSums)?;
            Some(
                (0..=cfg.m_max)
                    .map(|m| {
                        table
                            .rows
                            .iter()
                            .zip(&sums.rows)
                            .map(|(a, b)| (a[m] - b[m]).norm())
                            .sum::<f64>()
                            / completed as f64
                    })
                    .collect(),
            )
        } else {
            None
        };
        checkpoints.push(CheckpointReport {
            n,
            variance,
            covariance,
            normality,
            cross_estimator,
            notes,
        });
    }
    let traces = samples.traces();
    let mut notes = Vec::new();
    let rate = if alpha == 0.0 || (completed >= 20 && cfg.checkpoints.len() >= 4) {
        Some(rate_fit(alpha, &traces)?)
    } else {
        notes.push("rate fit skipped: needs at least 20 seeds and 4 checkpoints".to_string());
        None
    };
    Ok(EnsembleReport {
        manifest_hash,
        seeds_requested: cfg.seeds.len(),
        seeds_completed: completed,
        failures: samples.failures.clone(),
        checkpoints,
        rate_fit: rate,
        notes,
    })
}

fn skip_note(what: &str, alpha: f64, completed: usize, need: usize) -> String {
    if alpha == 0.0 {
        format!("{what} skipped: no limit variance at alpha = 0")
    } else {
        format!("{what} skipped: {completed} seeds < {need}")
    }
}

impl EnsembleReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "manifest sha256:{}\nseeds completed {}/{}\n",
            self.manifest_hash, self.seeds_completed, self.seeds_requested
        );
        for f in &self.failures {
            let _ = writeln!(s, "seed {} failed: {}", f.seed, f.error);
        }
        for cp in &self.checkpoints {
            let _ = writeln!(s, "\n== n = {} ==", cp.n);
            if let Some(v) = &cp.variance {
                s.push_str(&v.to_table());
            }
            if let Some(c) = &cp.covariance {
                let _ = writeln!(
                    s,
                    "correlations: {} pairs, max |corr| {:.4}, band +-{:.4}, all within: {}",
                    c.entries.len(),
                    c.max_abs_corr(),
                    c.band,
                    c.all_within_band()
                );
            }
            if let Some(nr) = &cp.normality {
                s.push_str(&nr.to_table());
            }
            if let Some(x) = &cp.cross_estimator {
                let _ = writeln!(s, "{:>3} {:>14}", "m", "mean|DFT - M|");
                for (m, v) in x.iter().enumerate() {
                    let _ = writeln!(s, "{:>3} {:>14.6}", m, v);
                }
            }
            for note in &cp.notes {
                let _ = writeln!(s, "note: {note}");
            }
        }
        if let Some(r) = &self.rate_fit {
            s.push('\n');
            s.push_str(&r.to_table());
        }
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        s
    }
}

#[derive(Debug, Serialize)]
pub struct Alpha0Report {
    pub manifest_hash: String,
    pub c: f64,
    pub lambda_hat: f64,
    pub epsilon_witness: f64,
    pub threshold: f64,
    pub window: (usize, usize),
    pub running_max: f64,
    pub witness_holds: bool,
}

impl Alpha0Report {
    pub fn to_table(&self) -> String {
        format!(
            "manifest sha256:{}\n{:<28}{}\n{:<28}{:.6}\n{:<28}{:.6}\n{:<28}{:.6}\n{:<28}[{}, {}]\n{:<28}{:.6}\n{:<28}{}\n",
            self.manifest_hash,
            "c",
            self.c,
            "lambda_hat",
            self.lambda_hat,
            "epsilon_witness",
            self.epsilon_witness,
            "threshold (0.5 eps)",
            self.threshold,
            "window",
            self.window.0,
            self.window.1,
            "running max of sup error",
            self.running_max,
            "running max >= threshold",
            self.witness_holds
        )
    }
}

#[derive(Debug, Serialize)]
pub struct ScheduleAudit {
    pub manifest_hash: String,
    pub alpha: f64,
    pub c: f64,
    pub n: usize,
    pub max_gap: f64,
    pub min_gap: f64,
    pub gap_ok: bool,
    pub max_kappa_over_bound: f64,
    pub min_kappa: f64,
    pub kappa_ok: bool,
    pub max_ratio: f64,
    pub ratio_cap: f64,
    pub ratio_ok: bool,
    pub epsilon_pairs: usize,
    pub min_epsilon: f64,
    pub max_epsilon_over_bound: f64,
    pub epsilon_ok: bool,
    pub max_power_excess: f64,
    pub power_ok: bool,
    pub all_ok: bool,
    pub notes: Vec<String>,
}

const REL: f64 = 1e-12;

/// Checks the schedule inequalities for every `n' <= n`, and the
/// `epsilon_{k,n'}` and power bounds for all `k` at `n' = 1, 2, 4, ..., n`.
pub fn schedule_audit(
    schedule: &CapacitySchedule,
    infty: &InftySchedule,
    manifest_hash: String,
) -> CliResult<ScheduleAudit> {
    let p = *schedule.params();
    let (alpha, c, n) = (p.alpha, p.c, p.n_max);
    let mut notes = Vec::new();
    let (mut max_gap, mut min_gap) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut gap_ok = true;
    let (mut max_kappa, mut min_kappa) = (0.0f64, f64::INFINITY);
    let mut kappa_ok = true;
    let mut max_ratio = f64::NEG_INFINITY;
    let ratio_cap = (alpha * (alpha + 6.0) * c).exp();
    for m in 1..=n {
        let gap = schedule_gap(schedule, infty, m)?;
        max_gap = max_gap.max(gap);
        min_gap = min_gap.min(gap);
        gap_ok &= gap >= -REL * schedule.c_star_sum(1, m)? && gap <= 6.0 * c;
        max_ratio = max_ratio.max(infty.c_tilde(m) / schedule.c_star(m));
        if m >= 2 {
            let kappa = schedule.kappa_defect(m)?;
            let bound = schedule.kappa_bound(m);
            min_kappa = min_kappa.min(kappa);
            if bound > 0.0 {
                max_kappa = max_kappa.max(kappa / bound);
            }
            kappa_ok &= kappa >= -REL * c && kappa <= bound * (1.0 + REL) + REL * c;
        }
    }
    let ratio_ok = max_ratio <= ratio_cap * (1.0 + REL);

    let mut epsilon_pairs = 0;
    let mut min_epsilon = f64::INFINITY;
    let mut max_eps_ratio = 0.0f64;
    let mut epsilon_ok = true;
    let mut max_power_excess = f64::NEG_INFINITY;
    let mut power_ok = true;
    if alpha > 0.0 {
        let mut levels: Vec<usize> = std::iter::successors(Some(1usize), |&m| m.checked_mul(2))
            .take_while(|&m| m <= n)
            .collect();
        if levels.last() != Some(&n) && n > 0 {
            levels.push(n);
        }
        for &m in &levels {
            let bound = schedule.epsilon_bound(m);
            for k in 1..=m {
                let eps = schedule.epsilon_kn(k, m)?;
                epsilon_pairs += 1;
                min_epsilon = min_epsilon.min(eps);
                max_eps_ratio = max_eps_ratio.max(eps / bound);
                epsilon_ok &= eps > 0.0 && eps <= bound * (1.0 + REL);
                let (lhs, rhs) = schedule.power_bound_sides(k, m)?;
                max_power_excess = max_power_excess.max(lhs - rhs);
                power_ok &= lhs <= rhs + REL * rhs.abs();
            }
        }
    } else {
        notes.push("alpha = 0: constant capacities, epsilon and power bounds do not apply".into());
    }
    Ok(ScheduleAudit {
        manifest_hash,
        alpha,
        c,
        n,
        max_gap,
        min_gap,
        gap_ok,
        max_kappa_over_bound: max_kappa,
        min_kappa,
        kappa_ok,
        max_ratio,
        ratio_cap,
        ratio_ok,
        epsilon_pairs,
        min_epsilon,
        max_epsilon_over_bound: max_eps_ratio,
        epsilon_ok,
        max_power_excess,
        power_ok,
        all_ok: gap_ok && kappa_ok && ratio_ok && epsilon_ok && power_ok,
        notes,
    })
}

impl ScheduleAudit {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "manifest sha256:{}\nschedule audit  alpha={}  c={}  n={}\n",
            self.manifest_hash, self.alpha, self.c, self.n
        );
        let rows: [(&str, String, bool); 5] = [
            (
                "0 <= C* - C~ <= 6c",
                format!("[{:.3e}, {:.3e}] vs 6c = {:.3e}", self.min_gap, self.max_gap, 6.0 * self.c),
                self.gap_ok,
            ),
            (
                "kappa in [0, bound]",
                format!("min {:.3e}, max/bound {:.4}", self.min_kappa, self.max_kappa_over_bound),
                self.kappa_ok,
            ),
            (
                "c~/c* <= e^{a(a+6)c}",
                format!("max {:.8} vs {:.8}", self.max_ratio, self.ratio_cap),
                self.ratio_ok,
            ),
            (
                "eps in (0, bound]",
                format!(
                    "{} pairs, min {:.3e}, max/bound {:.4}",
                    self.epsilon_pairs, self.min_epsilon, self.max_epsilon_over_bound
                ),
                self.epsilon_ok,
            ),
            (
                "power bound",
                format!("max lhs - rhs {:.3e}", self.max_power_excess),
                self.power_ok,
            ),
        ];
        for (name, detail, ok) in rows {
            let _ = writeln!(s, "{:<22} {:<4} {}", name, if ok { "ok" } else { "FAIL" }, detail);
        }
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        s
    }
}
