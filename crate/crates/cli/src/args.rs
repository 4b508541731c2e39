use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use hlgrowth::ParticleFamily;
use serde::{Deserialize, Serialize};

/// Largest seed list accepted from a range expression.
const MAX_SEEDS: u64 = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "hl", version, about = "Simulate and analyse regularized Hastings-Levitov clusters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output directory (default: $HL_OUT, else ./hl-out)
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Sup-error trace of one cluster at a set of checkpoints
    Simulate(SimulateArgs),
    /// Laurent coefficients of one cluster's fluctuation field, with mode sums
    Spectrum(SpectrumArgs),
    /// Spectra over many seeds plus variance, correlation and normality reports
    Ensemble(EnsembleArgs),
    /// Constant-capacity trace with its non-convergence witness
    Alpha0(Alpha0Args),
    /// Capacity schedule table and its inequality audit
    ScheduleCheck(ScheduleCheckArgs),
    /// SVG outline of a cluster boundary
    Render(RenderArgs),
    /// Re-run the invocation recorded in a manifest
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Spectrum(_) => "spectrum",
            Command::Ensemble(_) => "ensemble",
            Command::Alpha0(_) => "alpha0",
            Command::ScheduleCheck(_) => "schedule-check",
            Command::Render(_) => "render",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
    #[arg(long, default_value = "slit")]
    pub particle: ParticleFamily,
    /// Comma-separated particle counts (default: n/16, n/8, ..., n)
    #[arg(long)]
    pub checkpoints: Option<Checkpoints>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.25, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    /// Highest Laurent mode m_max
    #[arg(long, default_value_t = 16)]
    pub modes: usize,
    #[arg(long, default_value = "slit")]
    pub particle: ParticleFamily,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EnsembleArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Seed list: `a..b`, `a..=b`, or `s1,s2,...`
    #[arg(long, default_value = "0..100")]
    pub seeds: SeedList,
    #[arg(long, default_value_t = 1.25, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    #[arg(long, default_value_t = 8)]
    pub modes: usize,
    #[arg(long, default_value = "slit")]
    pub particle: ParticleFamily,
    /// Comma-separated particle counts (default: n)
    #[arg(long)]
    pub checkpoints: Option<Checkpoints>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Alpha0Args {
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    #[arg(long, default_value = "idealized")]
    pub particle: ParticleFamily,
    /// Comma-separated particle counts (default: every n/20)
    #[arg(long)]
    pub checkpoints: Option<Checkpoints>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScheduleCheckArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of boundary points
    #[arg(long, default_value_t = 4096)]
    pub grid: usize,
    #[arg(long, default_value = "slit")]
    pub particle: ParticleFamily,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    /// Path to a manifest.json written by an earlier run
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(SeedList(Vec::new()));
        }
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
        let range = |lo: u64, hi: u64| {
            if hi.saturating_sub(lo) > MAX_SEEDS {
                return Err(format!("seed range holds more than {MAX_SEEDS} seeds"));
            }
            Ok(SeedList((lo..hi).collect()))
        };
        if let Some((a, b)) = s.split_once("..=") {
            let (lo, hi) = (parse(a)?, parse(b)?);
            return range(lo, hi.checked_add(1).ok_or("seed range overflows")?);
        }
        if let Some((a, b)) = s.split_once("..") {
            return range(parse(a)?, parse(b)?);
        }
        s.split(',').map(parse).collect::<Result<_, _>>().map(SeedList)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Checkpoints(pub Vec<usize>);

impl FromStr for Checkpoints {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad checkpoint `{t}`: {e}")))
            .collect::<Result<_, _>>()
            .map(Checkpoints)
    }
}
