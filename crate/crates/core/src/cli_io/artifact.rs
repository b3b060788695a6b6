//! Fitted-chart artifact: one self-describing JSON file per Phase-I fit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::charts::{ChartRecipe, FittedChart};
use crate::error::{Result, SpcError};

pub const ARTIFACT_FORMAT: &str = "robust-spc-chart/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self { config_hash, seed, tool_version: TOOL_VERSION.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartArtifact {
    pub format: String,
    pub family: String,
    pub recipe: ChartRecipe,
    pub dim: usize,
    pub subgroup_size: usize,
    pub phase1_subgroups: usize,
    pub fitted: FittedChart,
    pub provenance: Provenance,
}

impl ChartArtifact {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: ChartArtifact = serde_json::from_str(text)
            .map_err(|e| SpcError::Parse { line: e.line() as u64, message: e.to_string() })?;
        if a.format != ARTIFACT_FORMAT {
            return Err(SpcError::Parse {
                line: 1,
                message: format!("unsupported artifact format {:?}", a.format),
            });
        }
        if a.fitted.charts.is_empty() {
            return Err(SpcError::Parse { line: 1, message: "artifact has no charts".into() });
        }
        Ok(a)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| SpcError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpcError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
