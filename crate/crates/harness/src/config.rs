use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Fully resolved parameters of one run, written as `config.json` beside
/// the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Subcommand arguments.
    #[serde(default)]
    pub args: serde_json::Value,
}

impl ExperimentConfig {
    pub const FILE_NAME: &'static str = "config.json";

    /// SHA-256 over the command, seed and arguments. The output directory
    /// and thread count do not affect results and are left out.
    pub fn hash(&self) -> String {
        let key = serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "args": self.args,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(Self::FILE_NAME), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
