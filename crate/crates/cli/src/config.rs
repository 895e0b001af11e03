use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sren::data::{SrtMode, SrtRanges};
use sren::equivariance::HarnessConfig;
use sren::fourier_argand::BasisConfig;
use sren::geometry::GridConfig;
use sren::network::{Architecture, GeometryMode, TrainConfig};

use crate::error::{CliError, CliResult};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema: u32,
    pub seed: u64,
    pub basis: BasisConfig,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub harness: HarnessConfig,
    pub sweep: SweepConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA,
            seed: 0,
            basis: BasisConfig::default(),
            grid: GridConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            harness: HarnessConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub geometry: GeometryMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            geometry: GeometryMode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory holding the four IDX files (optionally gzipped).
    pub mnist_dir: PathBuf,
    /// `None` uses every training image.
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub mode: SrtMode,
    pub ranges: SrtRanges,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            mnist_dir: PathBuf::from("data/mnist"),
            train_size: Some(2000),
            test_size: Some(2000),
            mode: SrtMode::Plain,
            ranges: SrtRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Degrees.
    pub angles: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            angles: (0..8).map(|k| 45.0 * k as f64).collect(),
            scales: vec![1.0, 1.25, 1.5, 1.75, 2.0, 2.5],
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults) and applies `--key.path=value`
    /// overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| sren::Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(RunConfig::default()).expect("default config serializes"),
        };
        for raw in overrides {
            apply_override(&mut value, raw)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema != SCHEMA {
            return Err(CliError::Config(format!(
                "config schema {} is not supported (expected {SCHEMA})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }
}

/// Sets `a.b.c` in `root` from `--a.b.c=value`. The value is parsed as JSON
/// when possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, raw: &str) -> CliResult<()> {
    let body = raw.strip_prefix("--").ok_or_else(|| {
        CliError::Config(format!("override {raw:?} must look like --key.path=value"))
    })?;
    let (key, text) = body
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {raw:?} has no '='")))?;
    let value = serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad key path {key:?}")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("{key:?}: {part:?} is not inside an object"))
        })?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("{key:?} does not name an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
