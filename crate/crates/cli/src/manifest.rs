use hlgrowth::angles::RNG_ALGORITHM;
use hlgrowth::ParticleFamily;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;

/// Self-description written next to every set of outputs. Contains no
/// timestamps or paths, so equal invocations produce equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub alpha: f64,
    pub c: f64,
    pub n: usize,
    pub family: ParticleFamily,
    pub seeds: Vec<u64>,
    pub r: Option<f64>,
    #[serde(rename = "M")]
    pub grid: Option<usize>,
    pub m_max: Option<usize>,
    pub checkpoints: Vec<usize>,
    pub rng: String,
    pub version: String,
    pub config_hash: String,
    pub files: Vec<String>,
    pub invocation: Command,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of an invocation.
pub fn config_hash(command: &Command) -> String {
    sha256_hex(&serde_json::to_vec(command).expect("invocations always serialize"))
}

pub struct ManifestFields {
    pub alpha: f64,
    pub c: f64,
    pub n: usize,
    pub family: ParticleFamily,
    pub seeds: Vec<u64>,
    pub r: Option<f64>,
    pub grid: Option<usize>,
    pub m_max: Option<usize>,
    pub checkpoints: Vec<usize>,
}

impl RunManifest {
    pub fn new(command: &Command, fields: ManifestFields, files: Vec<String>) -> Self {
        RunManifest {
            command: command.name().to_string(),
            alpha: fields.alpha,
            c: fields.c,
            n: fields.n,
            family: fields.family,
            seeds: fields.seeds,
            r: fields.r,
            grid: fields.grid,
            m_max: fields.m_max,
            checkpoints: fields.checkpoints,
            rng: RNG_ALGORITHM.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(command),
            files,
            invocation: command.clone(),
        }
    }
}
