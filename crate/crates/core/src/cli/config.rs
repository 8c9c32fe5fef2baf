//! The single TOML configuration file and artifact helpers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aspects::{AugmentConfig, ClassifierConfig, LdaConfig};
use crate::corpus::{NegativeKind, PrepareConfig};
use crate::error::{Error, Result};
use crate::text::{DecodeConfig, ModelConfig};
use crate::train::{DataPaths, RunConfig, TaskToggles, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AspectsSection {
    pub candidates: Vec<usize>,
    pub top_n: usize,
    pub lda: LdaConfig,
    pub classifier: ClassifierConfig,
}

impl Default for AspectsSection {
    fn default() -> Self {
        Self {
            candidates: vec![5, 10, 15],
            top_n: 10,
            lda: LdaConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NegativesSection {
    pub kinds: Vec<NegativeKind>,
}

impl Default for NegativesSection {
    fn default() -> Self {
        Self {
            kinds: NegativeKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSection {
    pub permutations: usize,
    pub decode: DecodeConfig,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            permutations: 10_000,
            decode: DecodeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreSection {
    /// Comments generated per story, for the most confident aspects.
    pub comments: usize,
    pub decode: DecodeConfig,
}

impl Default for ScoreSection {
    fn default() -> Self {
        Self {
            comments: 3,
            decode: DecodeConfig::default(),
        }
    }
}

/// Everything every command reads. Each command hashes only its own
/// section together with the seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub seed: u64,
    pub prepare: PrepareConfig,
    pub aspects: AspectsSection,
    pub augment: AugmentConfig,
    pub negatives: NegativesSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tasks: TaskToggles,
    pub data: DataPaths,
    pub evaluate: EvaluateSection,
    pub score: ScoreSection,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn run(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            model: self.model.clone(),
            train: self.train.clone(),
            tasks: self.tasks,
            data: self.data.clone(),
        }
    }
}

/// SHA-256 of `(seed, section)` in canonical JSON.
pub fn section_hash<T: Serialize>(seed: u64, section: &T) -> String {
    let value = serde_json::json!({ "seed": seed, "section": section });
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance written next to JSONL outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str, seed: u64, outputs: &[&str]) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::DecodeStrategy;

    #[test]
    fn partial_tables_fall_back_to_defaults() {
        let cfg: AppConfig = toml::from_str(
            "[train.optimizer]\nlr = 5e-4\n\n[score.decode]\nmax_new_tokens = 8\n\n\
             [evaluate.decode]\nstrategy = \"beam\"\nwidth = 2\n",
        )
        .unwrap();
        let default = AppConfig::default();
        assert_eq!(cfg.train.optimizer.lr, 5e-4);
        assert_eq!(cfg.train.optimizer.beta1, default.train.optimizer.beta1);
        assert_eq!(cfg.score.decode.max_new_tokens, 8);
        assert_eq!(cfg.score.decode.strategy, DecodeStrategy::Greedy);
        assert_eq!(
            cfg.evaluate.decode.strategy,
            DecodeStrategy::Beam { width: 2 }
        );
    }
}
