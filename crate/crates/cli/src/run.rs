use std::path::{Path, PathBuf};

use hlgrowth::angles::sample_angles;
use hlgrowth::cluster::alpha0_trace;
use hlgrowth::schedule::{schedule_rows, tilde_schedule};
use hlgrowth::spectral::{mode_sums, realization_spectrum};
use hlgrowth::stats::{run_ensemble, EnsembleConfig};
use hlgrowth::{CapacitySchedule, ClusterRealization, ParticleFamily, ScheduleParams};
use serde::Serialize;

use crate::args::{
    Alpha0Args, Checkpoints, Cli, Command, EnsembleArgs, RenderArgs, ScheduleCheckArgs, SimulateArgs, SpectrumArgs,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{ManifestFields, RunManifest};
use crate::output::{read_manifest, OutputDir};
use crate::report::{ensemble_report, schedule_audit, Alpha0Report};
use crate::svg::{emit_svg, SvgStyle};

/// Radial offset of the circle whose image `render` draws.
pub const BOUNDARY_OFFSET: f64 = 1e-4;

const SPECTRUM_HEADER: &[&str] = &["seed", "m", "re_a", "im_a", "r", "n"];
const MODE_SUMS_HEADER: &[&str] = &["seed", "m", "re_M", "im_M"];

#[derive(Serialize)]
struct TraceRow {
    n: usize,
    sup_error: f64,
    bound: f64,
    grid_error_bound: f64,
}

#[derive(Serialize)]
struct Alpha0Row {
    n: usize,
    sup_error: f64,
    bound: f64,
    grid_error_bound: f64,
    epsilon_witness: f64,
}

#[derive(Serialize)]
struct SpectrumRow {
    seed: u64,
    m: usize,
    re_a: f64,
    im_a: f64,
    r: f64,
    n: usize,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct ModeSumRow {
    seed: u64,
    m: usize,
    re_M: f64,
    im_M: f64,
}

#[derive(Serialize)]
struct BoundaryRow {
    theta: f64,
    re: f64,
    im: f64,
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os("HL_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("hl-out"))
}

pub fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        // fails only if a pool already exists (e.g. a second in-process call)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let out = cli.out.unwrap_or_else(default_out_dir);
    execute(&cli.command, &out)
}

/// Runs one command, writing into `out`; returns the written paths.
pub fn execute(command: &Command, out: &Path) -> CliResult<Vec<PathBuf>> {
    match command {
        Command::Simulate(a) => simulate(command, a, out),
        Command::Spectrum(a) => spectrum(command, a, out),
        Command::Ensemble(a) => ensemble(command, a, out),
        Command::Alpha0(a) => alpha0(command, a, out),
        Command::ScheduleCheck(a) => schedule_check(command, a, out),
        Command::Render(a) => render(command, a, out),
        Command::Replay(a) => {
            let manifest = read_manifest(&a.manifest)?;
            if let Command::Replay(_) = manifest.invocation {
                return Err(CliError::Validation("manifest records a replay".into()));
            }
            execute(&manifest.invocation, out)
        }
    }
}

fn params(alpha: f64, c: f64, n: usize) -> CliResult<ScheduleParams> {
    if n == 0 {
        return Err(CliError::Validation("n must be at least 1".into()));
    }
    Ok(ScheduleParams::new(alpha, c, n)?)
}

fn check_radius(r: f64) -> CliResult<()> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(CliError::Validation(format!("r = {r} must satisfy r > 1")));
    }
    Ok(())
}

fn check_grid(grid: usize, modes: usize) -> CliResult<()> {
    if grid == 0 || !grid.is_power_of_two() {
        return Err(CliError::Validation(format!("grid = {grid} must be a power of two")));
    }
    if grid < 4 * modes {
        return Err(CliError::Validation(format!(
            "grid = {grid} must be at least 4 * modes = {}",
            4 * modes
        )));
    }
    Ok(())
}

fn resolve_checkpoints(given: &Option<Checkpoints>, n: usize, default: impl FnOnce() -> Vec<usize>) -> CliResult<Vec<usize>> {
    let cps = given.as_ref().map(|c| c.0.clone()).unwrap_or_else(default);
    if cps.is_empty() {
        return Err(CliError::Validation("at least one checkpoint is required".into()));
    }
    if cps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Validation("checkpoints must be strictly increasing".into()));
    }
    if cps[0] == 0 || cps[cps.len() - 1] > n {
        return Err(CliError::Validation(format!("checkpoints must lie in 1..={n}")));
    }
    Ok(cps)
}

/// `n/16, n/8, n/4, n/2, n`, dropping zeros and repeats.
fn halving_checkpoints(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..5).rev().map(|s| n >> s).filter(|&m| m > 0).collect();
    v.dedup();
    v
}

fn finish(out: &OutputDir, command: &Command, fields: ManifestFields, files: &[&str]) -> CliResult<String> {
    let manifest = RunManifest::new(command, fields, files.iter().map(|f| f.to_string()).collect());
    out.write_manifest(&manifest)
}

fn written(out: &OutputDir, files: &[&str]) -> Vec<PathBuf> {
    std::iter::once("manifest.json")
        .chain(files.iter().copied())
        .map(|f| out.path(f))
        .collect()
}

fn simulate(command: &Command, a: &SimulateArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    let p = params(a.alpha, a.c, a.n)?;
    check_radius(a.r)?;
    check_grid(a.grid, 0)?;
    let cps = resolve_checkpoints(&a.checkpoints, a.n, || halving_checkpoints(a.n))?;
    let real = ClusterRealization::sample(p, a.particle, a.seed)?;
    let trace = real.sup_error_trace(a.r, a.grid, &cps)?;
    let dir = OutputDir::create(out)?;
    let rows = trace.iter().map(|t| TraceRow {
        n: t.n,
        sup_error: t.sup_error,
        bound: t.rate_bound,
        grid_error_bound: t.grid_error_bound,
    });
    dir.write_csv("trace.csv", rows)?;
    let files = ["trace.csv"];
    finish(
        &dir,
        command,
        ManifestFields {
            alpha: a.alpha,
            c: a.c,
            n: a.n,
            family: a.particle,
            seeds: vec![a.seed],
            r: Some(a.r),
            grid: Some(a.grid),
            m_max: None,
            checkpoints: cps,
        },
        &files,
    )?;
    Ok(written(&dir, &files))
}

fn spectrum(command: &Command, a: &SpectrumArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    let p = params(a.alpha, a.c, a.n)?;
    check_radius(a.r)?;
    check_grid(a.grid, a.modes)?;
    let real = ClusterRealization::sample(p, a.particle, a.seed)?;
    let spec = realization_spectrum(&real, a.r, a.grid, a.n, a.modes)?;
    let dir = OutputDir::create(out)?;
    let rows = spec.coeffs.iter().enumerate().map(|(m, z)| SpectrumRow {
        seed: a.seed,
        m,
        re_a: z.re,
        im_a: z.im,
        r: a.r,
        n: a.n,
    });
    dir.write_csv("spectrum.csv", rows)?;
    let mut files = vec!["spectrum.csv"];
    if a.alpha > 0.0 {
        let sums = mode_sums(&real, a.n, a.modes)?;
        let rows = sums.sums.iter().enumerate().map(|(m, z)| ModeSumRow {
            seed: a.seed,
            m,
            re_M: z.re,
            im_M: z.im,
        });
        dir.write_csv("mode_sums.csv", rows)?;
        files.push("mode_sums.csv");
    }
    finish(
        &dir,
        command,
        ManifestFields {
            alpha: a.alpha,
            c: a.c,
            n: a.n,
            family: a.particle,
            seeds: vec![a.seed],
            r: Some(a.r),
            grid: Some(a.grid),
            m_max: Some(a.modes),
            checkpoints: vec![a.n],
        },
        &files,
    )?;
    Ok(written(&dir, &files))
}

fn ensemble(command: &Command, a: &EnsembleArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    let p = params(a.alpha, a.c, a.n)?;
    check_radius(a.r)?;
    check_grid(a.grid, a.modes)?;
    let cps = resolve_checkpoints(&a.checkpoints, a.n, || vec![a.n])?;
    let config = EnsembleConfig {
        params: p,
        family: a.particle,
        seeds: a.seeds.0.clone(),
        r: a.r,
        grid: a.grid,
        m_max: a.modes,
        checkpoints: cps.clone(),
    };
    config.validate()?;
    let samples = run_ensemble(&config)?;
    let dir = OutputDir::create(out)?;

    let mut spectrum_rows = Vec::new();
    let mut sum_rows = Vec::new();
    for rec in &samples.records {
        for cp in &rec.checkpoints {
            for (m, z) in cp.spectrum.iter().enumerate() {
                spectrum_rows.push(SpectrumRow {
                    seed: rec.seed,
                    m,
                    re_a: z.re,
                    im_a: z.im,
                    r: a.r,
                    n: cp.n,
                });
            }
            // mode sums are only recorded at the final checkpoint
            if cp.n == a.n {
                if let Some(sums) = &cp.mode_sums {
                    for (m, z) in sums.iter().enumerate() {
                        sum_rows.push(ModeSumRow {
                            seed: rec.seed,
                            m,
                            re_M: z.re,
                            im_M: z.im,
                        });
                    }
                }
            }
        }
    }
    dir.write_csv_with_header("spectrum.csv", SPECTRUM_HEADER, spectrum_rows)?;
    let mut files = vec!["spectrum.csv"];
    if a.alpha > 0.0 {
        dir.write_csv_with_header("mode_sums.csv", MODE_SUMS_HEADER, sum_rows)?;
        files.push("mode_sums.csv");
    }
    files.extend(["report.json", "report.txt"]);
    let hash = finish(
        &dir,
        command,
        ManifestFields {
            alpha: a.alpha,
            c: a.c,
            n: a.n,
            family: a.particle,
            seeds: a.seeds.0.clone(),
            r: Some(a.r),
            grid: Some(a.grid),
            m_max: Some(a.modes),
            checkpoints: cps,
        },
        &files,
    )?;
    let report = ensemble_report(&samples, hash)?;
    dir.write_json("report.json", &report)?;
    dir.write_bytes("report.txt", report.to_table().as_bytes())?;
    Ok(written(&dir, &files))
}

fn alpha0(command: &Command, a: &Alpha0Args, out: &Path) -> CliResult<Vec<PathBuf>> {
    params(0.0, a.c, a.n)?;
    check_radius(a.r)?;
    check_grid(a.grid, 0)?;
    let step = (a.n / 20).max(1);
    let cps = resolve_checkpoints(&a.checkpoints, a.n, || {
        let mut v: Vec<usize> = (1..=a.n / step).map(|j| j * step).collect();
        if v.last() != Some(&a.n) {
            v.push(a.n);
        }
        v
    })?;
    let result = alpha0_trace(a.c, a.particle, sample_angles(a.seed, a.n), a.r, a.grid, &cps)?;
    let dir = OutputDir::create(out)?;
    let rows = result.trace.iter().map(|t| Alpha0Row {
        n: t.n,
        sup_error: t.sup_error,
        bound: t.rate_bound,
        grid_error_bound: t.grid_error_bound,
        epsilon_witness: result.epsilon_witness,
    });
    dir.write_csv("trace.csv", rows)?;
    let files = ["trace.csv", "report.json", "report.txt"];
    let hash = finish(
        &dir,
        command,
        ManifestFields {
            alpha: 0.0,
            c: a.c,
            n: a.n,
            family: a.particle,
            seeds: vec![a.seed],
            r: Some(a.r),
            grid: Some(a.grid),
            m_max: None,
            checkpoints: cps,
        },
        &files,
    )?;
    let window = (a.n / 2, a.n);
    let running_max = result.running_max(window.0, window.1);
    let threshold = 0.5 * result.epsilon_witness;
    let report = Alpha0Report {
        manifest_hash: hash,
        c: a.c,
        lambda_hat: result.lambda_hat,
        epsilon_witness: result.epsilon_witness,
        threshold,
        window,
        running_max,
        witness_holds: running_max >= threshold,
    };
    dir.write_json("report.json", &report)?;
    dir.write_bytes("report.txt", report.to_table().as_bytes())?;
    Ok(written(&dir, &files))
}

fn schedule_check(command: &Command, a: &ScheduleCheckArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    let p = params(a.alpha, a.c, a.n)?;
    let schedule = CapacitySchedule::new(p)?;
    let infty = tilde_schedule(p)?;
    let dir = OutputDir::create(out)?;
    dir.write_csv("schedule.csv", schedule_rows(&schedule, &infty))?;
    let files = ["schedule.csv", "report.json", "report.txt"];
    let hash = finish(
        &dir,
        command,
        ManifestFields {
            alpha: a.alpha,
            c: a.c,
            n: a.n,
            family: ParticleFamily::Slit,
            seeds: Vec::new(),
            r: None,
            grid: None,
            m_max: None,
            checkpoints: Vec::new(),
        },
        &files,
    )?;
    let audit = schedule_audit(&schedule, &infty, hash)?;
    dir.write_json("report.json", &audit)?;
    dir.write_bytes("report.txt", audit.to_table().as_bytes())?;
    Ok(written(&dir, &files))
}

fn render(command: &Command, a: &RenderArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    // n = 0 is allowed here: it draws the unit circle
    let p = ScheduleParams::new(a.alpha, a.c, a.n)?;
    if a.grid < 3 {
        return Err(CliError::Validation("render needs at least 3 boundary points".into()));
    }
    let real = ClusterRealization::sample(p, a.particle, a.seed)?;
    let pts = real.boundary_trace(a.n, BOUNDARY_OFFSET, a.grid)?;
    let dir = OutputDir::create(out)?;
    dir.write_csv(
        "boundary.csv",
        pts.iter().map(|b| BoundaryRow {
            theta: b.theta,
            re: b.re,
            im: b.im,
        }),
    )?;
    let xy: Vec<(f64, f64)> = pts.iter().map(|b| (b.re, b.im)).collect();
    dir.write_bytes("cluster.svg", emit_svg(&xy, &SvgStyle::default()).as_bytes())?;
    let files = ["boundary.csv", "cluster.svg"];
    finish(
        &dir,
        command,
        ManifestFields {
            alpha: a.alpha,
            c: a.c,
            n: a.n,
            family: a.particle,
            seeds: vec![a.seed],
            r: Some(1.0 + BOUNDARY_OFFSET),
            grid: Some(a.grid),
            m_max: None,
            checkpoints: vec![a.n],
        },
        &files,
    )?;
    Ok(written(&dir, &files))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_checkpoints() {
        assert_eq!(halving_checkpoints(2000), vec![125, 250, 500, 1000, 2000]);
        assert_eq!(halving_checkpoints(3), vec![1, 3]);
        assert!(resolve_checkpoints(&Some(Checkpoints(vec![5, 3])), 10, Vec::new).is_err());
        assert!(resolve_checkpoints(&Some(Checkpoints(vec![5, 11])), 10, Vec::new).is_err());
    }
}
