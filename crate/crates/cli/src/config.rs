//! TOML run configuration: a file schema that mirrors the library's
//! `RunConfig`/`BatchSpec` with everything optional, plus flag overrides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spir_core::orchestrator::{
    AdversarySpec, BatchSpec, DatabaseSpec, LinkParams, ProtocolSpec, RunConfig, TargetSpec,
};
use spir_core::planner::{BlockStats, EpsilonBudget};
use spir_core::qkd::QkdModelParams;

use crate::CliError;

/// Everything a config file may carry. `run` uses the batch half; `plan`
/// reads only `[block]` and `[epsilon]`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub entry_bits: Option<usize>,
    pub protocol: Option<ProtocolSpec>,
    #[serde(default)]
    pub links: LinksFile,
    pub database: Option<DatabaseSpec>,
    pub target: Option<TargetSpec>,
    pub adversary: Option<AdversarySpec>,
    pub block: Option<BlockStats>,
    pub epsilon: Option<EpsilonBudget>,
}

/// Per-link channel parameters with every field defaulting to ideal, so a
/// config can perturb a single link without spelling out the other two.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinksFile {
    pub u_d1: QkdFile,
    pub u_d2: QkdFile,
    pub d1_d2: QkdFile,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QkdFile {
    pub p_abort: f64,
    pub p_mismatch: f64,
    pub p_leak: f64,
}

impl From<QkdFile> for QkdModelParams {
    fn from(f: QkdFile) -> Self {
        QkdModelParams {
            p_abort: f.p_abort,
            p_mismatch: f.p_mismatch,
            p_leak: f.p_leak,
        }
    }
}

impl LinksFile {
    pub fn into_params(self) -> LinkParams {
        LinkParams {
            u_d1: self.u_d1.into(),
            u_d2: self.u_d2.into(),
            d1_d2: self.d1_d2.into(),
        }
    }
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Merge file values and flag overrides into a validated batch. Flags win;
/// absent fields fall back to ideal links, a random database and target,
/// an honest adversary, one entry bit, 100 trials, and seed 0.
pub fn resolve_batch(
    file: &FileConfig,
    seed: Option<u64>,
    trials: Option<u64>,
) -> Result<BatchSpec, CliError> {
    let protocol = file
        .protocol
        .ok_or_else(|| CliError::Usage("config is missing the [protocol] table".into()))?;
    let config = RunConfig {
        protocol,
        entry_bits: file.entry_bits.unwrap_or(1),
        links: file.links.into_params(),
        adversary: file.adversary.clone().unwrap_or(AdversarySpec::Honest),
    };
    let batch = BatchSpec {
        config,
        trials: trials.or(file.trials).unwrap_or(100),
        seed: seed.or(file.seed).unwrap_or(0),
        database: file.database.clone().unwrap_or(DatabaseSpec::Random),
        target: file.target.clone().unwrap_or(TargetSpec::Random),
    };
    batch
        .validate()
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    Ok(batch)
}

/// SHA-256 over the canonical JSON of a resolved input; embedded in every
/// output artifact so a reader can tell which inputs produced it.
pub fn digest_of<T: Serialize>(v: &T) -> String {
    let json = serde_json::to_string(v).expect("inputs serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}
