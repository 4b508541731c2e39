//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use hlgrowth::cluster::{alpha0_trace, epsilon_witness};
use hlgrowth::conformal::{attach_layer_grid, capacity_estimate, class_bound_ratio, delta_residual, SingleParticleMap};
use hlgrowth::schedule::tilde_schedule;
use hlgrowth::stats::{
    alpha_sweep, covariance_report, rate_fit, run_ensemble, variance_report, EnsembleConfig, EnsembleSamples,
    Estimator, SweepConfig, SweepLength,
};
use hlgrowth::{CapacitySchedule, ClusterRealization, ComplexPoint, ParticleFamily, ScheduleParams};
use clap::Parser;
use hlgrowth_cli::args::Cli;
use hlgrowth_cli::report::schedule_audit;
use hlgrowth_cli::run::run;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn a1_ensemble() -> EnsembleSamples {
    let config = EnsembleConfig {
        params: ScheduleParams::new(1.0, 0.01, 3000).unwrap(),
        family: ParticleFamily::Slit,
        seeds: seeds(400),
        r: 1.25,
        grid: 512,
        m_max: 5,
        checkpoints: vec![3000],
    };
    run_ensemble(&config).unwrap()
}

fn a1(ens: &EnsembleSamples) -> Outcome {
    let table = ens.table(3000, Estimator::Dft).unwrap();
    let report = variance_report(&table, 1.0, 5).unwrap();
    let cells: Vec<String> = report
        .modes
        .iter()
        .map(|m| format!("m={} A {:.3} B {:.3} th {:.3}", m.m, m.var_a, m.var_b, m.theory))
        .collect();
    let worst = report
        .modes
        .iter()
        .map(|m| m.z_a.abs().max(m.z_b.abs()))
        .fold(0.0, f64::max);
    outcome(
        worst <= 3.0 && ens.failures.is_empty() && table.len() == 400,
        format!("N={} max|z|={:.2}; {}", table.len(), worst, cells.join("; ")),
    )
}

fn a2(ens: &EnsembleSamples) -> Outcome {
    let table = ens.table(3000, Estimator::Dft).unwrap();
    let report = covariance_report(&table, 5).unwrap();
    outcome(
        report.all_within_band() && (report.band - 0.15).abs() < 1e-12,
        format!(
            "{} pairs, max|corr|={:.4}, band {:.2}",
            report.entries.len(),
            report.max_abs_corr(),
            report.band
        ),
    )
}

fn a3() -> Outcome {
    let config = EnsembleConfig {
        params: ScheduleParams::new(1.0, 0.01, 4000).unwrap(),
        family: ParticleFamily::Slit,
        seeds: seeds(20),
        r: 1.25,
        grid: 512,
        m_max: 5,
        checkpoints: vec![500, 4000],
    };
    let ens = run_ensemble(&config).unwrap();
    let gap = |n: usize| -> Vec<f64> {
        let dft = ens.table(n, Estimator::Dft).unwrap();
        let sums = ens.table(n, Estimator::ModeSums).unwrap();
        (0..=5)
            .map(|m| {
                dft.rows.iter().zip(&sums.rows).map(|(a, b)| (a[m] - b[m]).norm()).sum::<f64>()
                    / dft.len() as f64
            })
            .collect()
    };
    let (early, late) = (gap(500), gap(4000));
    let ratios: Vec<f64> = late.iter().zip(&early).map(|(l, e)| l / e).collect();
    outcome(
        ratios.iter().all(|&r| r < 0.5),
        format!(
            "ratio n=4000/n=500 per m: [{}]",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn a4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 1.5] {
        let config = EnsembleConfig {
            params: ScheduleParams::new(alpha, 0.01, 4000).unwrap(),
            family: ParticleFamily::Slit,
            seeds: seeds(50),
            r: 1.5,
            grid: 1024,
            m_max: 0,
            checkpoints: vec![250, 500, 1000, 2000, 4000],
        };
        let ens = run_ensemble(&config).unwrap();
        let fit = rate_fit(alpha, &ens.traces()).unwrap();
        pass &= fit.fraction_within >= 0.95 && fit.medians_decreasing && ens.failures.is_empty();
        parts.push(format!(
            "alpha={alpha}: within {:.3}, medians [{}] decreasing={}",
            fit.fraction_within,
            fit.medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", "),
            fit.medians_decreasing
        ));
    }
    outcome(pass, parts.join("; "))
}

fn a5() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 1.5] {
        for c in [1e-3, 1e-2] {
            for n in [10_000, 1_000_000] {
                let p = ScheduleParams::new(alpha, c, n).unwrap();
                let schedule = CapacitySchedule::new(p).unwrap();
                let infty = tilde_schedule(p).unwrap();
                let audit = schedule_audit(&schedule, &infty, String::new()).unwrap();
                pass &= audit.all_ok;
                if !audit.all_ok {
                    parts.push(format!("alpha={alpha} c={c} n={n} audit failed"));
                }
            }
            // random (k, n) pairs for the epsilon and power bounds
            let p = ScheduleParams::new(alpha, c, 1_000_000).unwrap();
            let schedule = CapacitySchedule::new(p).unwrap();
            let mut rng = rand::rngs::StdRng::seed_from_u64(5);
            for _ in 0..10_000 {
                let n = rng.gen_range(1..=1_000_000);
                let k = rng.gen_range(1..=n);
                let eps = schedule.epsilon_kn(k, n).unwrap();
                let bound = schedule.epsilon_bound(n);
                let (lhs, rhs) = schedule.power_bound_sides(k, n).unwrap();
                let ok = eps > 0.0 && eps <= bound * (1.0 + 1e-12) && lhs <= rhs + 1e-12 * rhs.abs();
                if !ok {
                    pass = false;
                    parts.push(format!("alpha={alpha} c={c} k={k} n={n}: eps {eps} bound {bound}"));
                }
            }
        }
    }
    if parts.is_empty() {
        parts.push("6 (alpha, c) pairs, full audits at n=1e4 and 1e6, 6e4 random (k, n)".into());
    }
    outcome(pass, parts.join("; "))
}

fn a6() -> Outcome {
    let c = 0.05;
    let eps = epsilon_witness(c, 0.0);
    let threshold = 0.5 * eps;
    let window: Vec<usize> = (10..=20).map(|j| j * 100).collect();
    let runs = |alpha: f64, family: ParticleFamily| -> Vec<(f64, f64)> {
        use rayon::prelude::*;
        seeds(20)
            .into_par_iter()
            .map(|seed| {
                let trace = if alpha == 0.0 {
                    let angles = hlgrowth::angles::sample_angles(seed, 2000);
                    alpha0_trace(c, family, angles, 1.5, 512, &window).unwrap().trace
                } else {
                    let p = ScheduleParams::new(alpha, c, 2000).unwrap();
                    ClusterRealization::sample(p, family, seed)
                        .unwrap()
                        .sup_error_trace(1.5, 512, &window)
                        .unwrap()
                };
                let max = trace.iter().map(|t| t.sup_error).fold(f64::NEG_INFINITY, f64::max);
                let min = trace.iter().map(|t| t.sup_error).fold(f64::INFINITY, f64::min);
                (max, min)
            })
            .collect()
    };
    let zero = runs(0.0, ParticleFamily::Idealized);
    let control = runs(1.0, ParticleFamily::Idealized);
    let zero_min_max = zero.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let control_max = control.iter().map(|p| p.0).fold(0.0, f64::max);
    let control_min = control.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let zero_ok = zero_min_max >= threshold;
    let control_ok = control.iter().all(|p| p.0 < threshold);
    outcome(
        zero_ok && control_ok,
        format!(
            "eps={eps:.5} threshold={threshold:.5}; alpha=0 smallest running max {zero_min_max:.4} ({}); \
             alpha=1 control running max up to {control_max:.4}, smallest window value {control_min:.4} ({})",
            if zero_ok { "ok" } else { "fail" },
            if control_ok { "ok" } else { "fail" }
        ),
    )
}

fn a7() -> Outcome {
    let p = ScheduleParams::new(1.0, 0.01, 4000).unwrap();
    let real = ClusterRealization::sample(p, ParticleFamily::Slit, 0).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(1..=500);
        let z = Complex64::from_polar(rng.gen_range(1.5..3.0), rng.gen_range(0.0..2.0 * PI));
        worst = worst.max(real.conditional_mean_check(z, k, 4096).unwrap());
    }
    let z = Complex64::new(1.5, 0.0);
    let scaled: Vec<f64> = [500, 1000, 2000, 4000]
        .iter()
        .map(|&n| n as f64 * real.variation_estimate_t(z, n, 32).unwrap())
        .collect();
    let spread = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        worst <= 1e-8 && spread <= 5.0,
        format!(
            "max conditional-mean residual {worst:.2e}; n T_n = [{}], spread {spread:.3}",
            scaled.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn a8() -> Outcome {
    // n per alpha: the leading-order finite-n variance must reach 95% of the
    // limit, which near alpha = 2 needs large alpha c n
    let config = SweepConfig {
        c: 0.5,
        family: ParticleFamily::Slit,
        seeds: seeds(200),
        r: 1.5,
        grid: 32,
        length: SweepLength::LimitFraction {
            fraction: 0.95,
            min_n: 1000,
            max_n: 200_000,
        },
    };
    let alphas = [0.25, 0.5, 1.0, 1.5, 1.75];
    let report = alpha_sweep(&alphas, &config).unwrap();
    let within = report.entries.iter().all(|e| e.z.abs() <= 3.0 && e.failures == 0);
    let parts: Vec<String> = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "a={} n={} var {:.3} finite-n {:.3} th {:.3} z {:+.2}",
                e.alpha, e.n, e.var_a0, e.finite_n_theory, e.theory, e.z
            )
        })
        .collect();
    outcome(
        within && report.theory_valley_shaped,
        format!("{}; theory valley-shaped: {}", parts.join("; "), report.theory_valley_shaped),
    )
}

fn a9() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();

    let mut cap_err = 0.0f64;
    for family in [ParticleFamily::Slit, ParticleFamily::Idealized] {
        for c in [1e-3, 1e-2, 1e-1, 0.5] {
            let map = SingleParticleMap::new(family, c).unwrap();
            cap_err = cap_err.max((capacity_estimate(&map) - c).abs());
        }
    }
    pass &= cap_err <= 1e-8;
    parts.push(format!("capacity err {cap_err:.1e}"));

    let mut tip_err = 0.0f64;
    for c in [1e-3, 1e-2, 1e-1, 0.5] {
        let d = SingleParticleMap::new(ParticleFamily::Slit, c).unwrap().tip() - 1.0;
        tip_err = tip_err.max((c.exp() - (1.0 + d * d / (4.0 * (1.0 + d)))).abs());
    }
    pass &= tip_err <= 1e-10;
    parts.push(format!("tip err {tip_err:.1e}"));

    let ideal = SingleParticleMap::new(ParticleFamily::Idealized, 0.1).unwrap();
    let ideal_zero = (0..64).all(|j| {
        let z = Complex64::from_polar(1.0 + 0.05 * (j + 1) as f64, 0.3 * j as f64);
        delta_residual(&ideal, z).unwrap().norm() == 0.0
    });
    pass &= ideal_zero;
    parts.push(format!("idealized delta = 0: {ideal_zero}"));

    let grid = attach_layer_grid(1e-4, 2.0, 40, 0.8, 33);
    let pts: Vec<(f64, f64)> = [1e-3, 1e-2, 1e-1]
        .iter()
        .map(|&c| {
            let map = SingleParticleMap::new(ParticleFamily::Slit, c).unwrap();
            let sup = class_bound_ratio(&map, &grid).unwrap() * c.powf(1.5);
            (c.ln(), sup.ln())
        })
        .collect();
    let slope = hlgrowth::stats::least_squares_slope(pts.iter().copied());
    pass &= (slope - 1.5).abs() <= 0.1;
    parts.push(format!("residual slope {slope:.3}"));

    let env = distortion_excess();
    pass &= env <= 1e-4;
    parts.push(format!("distortion envelope excess {env:.1e}"));
    outcome(pass, parts.join("; "))
}

/// Largest violation of `(r^2-1)/r^2 <= |F'(z)| <= r^2/(r^2-1)` for
/// `F = e^{-C} phi_n`, by central differences.
fn distortion_excess() -> f64 {
    let mut rng = rand::rngs::StdRng::seed_from_u64(17);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for family in [ParticleFamily::Slit, ParticleFamily::Idealized] {
        for (alpha, c) in [(1.0, 0.05), (0.5, 0.1), (0.0, 0.02)] {
            let n = 300;
            let p = ScheduleParams::new(alpha, c, n).unwrap();
            let real = ClusterRealization::sample(p, family, 4).unwrap();
            for _ in 0..200 {
                let z: ComplexPoint = Complex64::from_polar(rng.gen_range(1.2..3.0), rng.gen_range(0.0..2.0 * PI));
                let plus = real.error_at(z + h, n).unwrap();
                let minus = real.error_at(z - h, n).unwrap();
                let deriv = ((plus - minus) / (2.0 * h) + 1.0).norm();
                let r2 = z.norm_sqr();
                let (lo, hi) = ((r2 - 1.0) / r2, r2 / (r2 - 1.0));
                worst = worst.max(lo - deriv).max(deriv - hi);
            }
        }
    }
    worst
}

fn a10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 6] = [
        &["simulate", "--n", "500", "--grid", "256", "--seed", "7"],
        &["spectrum", "--n", "500", "--grid", "128", "--modes", "8", "--seed", "3"],
        &["ensemble", "--n", "300", "--seeds", "0..60", "--grid", "64", "--modes", "4", "--checkpoints", "100,200,250,300"],
        &["alpha0", "--n", "400", "--grid", "128", "--seed", "7"],
        &["schedule-check", "--n", "2000"],
        &["render", "--n", "500", "--grid", "512"],
    ];
    let mut failures = Vec::new();
    let mut compared = 0;
    for (i, args) in runs.iter().enumerate() {
        let first = tmp.path().join(format!("{i}-first"));
        let replay = tmp.path().join(format!("{i}-replay"));
        let manifest = first.join("manifest.json");
        let ok = run_hl(args, &first) && run_hl(&["replay", manifest.to_str().unwrap()], &replay);
        if !ok {
            failures.push(format!("{} did not run", args[0]));
            continue;
        }
        for entry in fs::read_dir(&first).unwrap() {
            let name = entry.unwrap().file_name();
            compared += 1;
            if fs::read(first.join(&name)).ok() != fs::read(replay.join(&name)).ok() {
                failures.push(format!("{} {:?} differs", args[0], name));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("6 subcommands, {compared} files byte-identical on replay")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

/// Parses and runs one `hl` invocation in-process.
fn run_hl(args: &[&str], out: &Path) -> bool {
    let argv = ["hl"].iter().chain(args).map(|a| a.to_string()).chain(["--out".into(), out.display().to_string()]);
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli).is_ok(),
        Err(_) => false,
    }
}

fn report(id: &str, title: &str, start: Instant, o: &Outcome) {
    println!(
        "{id} {} {title} ({:.1}s): {}",
        if o.pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        o.detail
    );
}

fn main() -> ExitCode {
    // optional criterion ids to run, e.g. `-- A6 A8`; libtest flags are ignored
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: &str| only.is_empty() || only.iter().any(|o| o == id);
    let mut all = true;
    let mut check = |id: &str, title: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(id) {
            return;
        }
        let start = Instant::now();
        let o = f();
        report(id, title, start, &o);
        all &= o.pass;
    };
    let ens = (wanted("A1") || wanted("A2")).then(|| {
        let start = Instant::now();
        let ens = a1_ensemble();
        println!("(shared ensemble for A1/A2: {:.1}s)", start.elapsed().as_secs_f64());
        ens
    });
    if let Some(ens) = &ens {
        check("A1", "fluctuation variances", &mut || a1(ens));
        check("A2", "covariance structure", &mut || a2(ens));
    }
    check("A3", "cross-estimator agreement", &mut a3);
    check("A4", "uniform convergence rate", &mut a4);
    check("A5", "schedule inequalities", &mut a5);
    check("A6", "alpha = 0 non-convergence", &mut a6);
    check("A7", "martingale and variation checks", &mut a7);
    check("A8", "phase-transition sweep", &mut a8);
    check("A9", "conformal unit suite", &mut a9);
    check("A10", "reproducibility", &mut a10);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
