use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::GbdtParams;
use crate::dgi::DgiConfig;
use crate::egsage::EncoderConfig;
use crate::error::{Error, Result};
use crate::explain::{ExplainerConfig, GnnExplainerConfig, SurrogateConfig};
use crate::flowdata::FlowSchema;
use crate::synthgen::Preset;
use crate::xaieval::DEFAULT_LEVELS;

pub const CONFIG_ENV: &str = "FLOWSAGE_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataOptions {
    pub preset: Preset,
    /// File name inside `paths.data`.
    pub flows_file: String,
    pub train_fraction: f64,
    /// Column layout; the generator's layout when absent.
    pub schema: Option<FlowSchema>,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            preset: Preset::Benchmark,
            flows_file: "flows.csv".into(),
            train_fraction: 0.7,
            schema: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainOptions {
    pub target_class: String,
    pub sparsity: f64,
    /// Cap on explained targets per `explain` run.
    pub max_targets: usize,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            target_class: "Bot".into(),
            sparsity: 0.7,
            max_targets: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XaiOptions {
    pub levels: Vec<f64>,
    pub class_sparsity: f64,
    /// Targets per class for the class-distribution report.
    pub class_targets: usize,
}

impl Default for XaiOptions {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS.to_vec(),
            class_sparsity: 0.7,
            class_targets: 30,
        }
    }
}

/// Everything a command needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed, copied into every stage.
    pub seed: u64,
    pub paths: Paths,
    pub data: DataOptions,
    pub encoder: EncoderConfig,
    pub dgi: DgiConfig,
    pub gbdt: GbdtParams,
    pub surrogate: SurrogateConfig,
    pub explainer: ExplainerConfig,
    pub gnnexplainer: GnnExplainerConfig,
    pub explain: ExplainOptions,
    pub xai: XaiOptions,
}

#[derive(Serialize)]
struct TrainStage<'a> {
    seed: u64,
    data: &'a DataOptions,
    encoder: &'a EncoderConfig,
    dgi: &'a DgiConfig,
    gbdt: &'a GbdtParams,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {path:?}: {e}")))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Copies the master seed into the stage configs.
    pub fn resolved(mut self) -> Self {
        self.dgi.seed = self.seed;
        self.gbdt.seed = self.seed;
        self.explainer.seed = self.seed;
        self
    }

    pub fn schema(&self) -> FlowSchema {
        self.data.schema.clone().unwrap_or_else(|| self.data.preset.config(self.seed).schema())
    }

    pub fn flows_path(&self) -> PathBuf {
        self.paths.data.join(&self.data.flows_file)
    }

    /// Hash of everything except `paths`, which never affect numbers.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        sha256_hex(serde_json::to_string(&c).expect("config serialises").as_bytes())
    }

    /// Hash of the settings that determine the trained detector.
    pub fn train_hash(&self) -> String {
        let stage = TrainStage {
            seed: self.seed,
            data: &self.data,
            encoder: &self.encoder,
            dgi: &self.dgi,
            gbdt: &self.gbdt,
        };
        sha256_hex(serde_json::to_string(&stage).expect("config serialises").as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.data.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("data.train_fraction must be in (0, 1), got {f}")));
        }
        let levels = &self.xai.levels;
        if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) || levels.iter().any(|l| !(0.0..1.0).contains(l)) {
            return Err(Error::Config(format!("xai.levels must strictly increase within [0, 1), got {levels:?}")));
        }
        for (name, s) in [("explain.sparsity", self.explain.sparsity), ("xai.class_sparsity", self.xai.class_sparsity)] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {s}")));
            }
        }
        if self.encoder.hidden == 0 || self.encoder.depth == 0 {
            return Err(Error::Config("encoder.hidden and encoder.depth must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml("seed = 1\n[encoder]\nhiden = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("hiden"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = PipelineConfig::from_toml("seed = 3\n[dgi]\nepochs = 5\n").unwrap();
        assert_eq!(c.dgi.epochs, 5);
        assert_eq!(c.encoder.hidden, 256);
        assert_eq!(c.xai.levels, DEFAULT_LEVELS.to_vec());
        assert_eq!(c.data.train_fraction, 0.7);
    }

    #[test]
    fn toml_round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.models = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.explain.sparsity = 0.8;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.train_hash(), b.train_hash());
        b.gbdt.n_trees = 3;
        assert_ne!(a.train_hash(), b.train_hash());
    }

    #[test]
    fn resolved_copies_seed() {
        let c = PipelineConfig { seed: 9, ..Default::default() }.resolved();
        assert_eq!((c.dgi.seed, c.gbdt.seed, c.explainer.seed), (9, 9, 9));
    }

    #[test]
    fn bad_levels_fail_validation() {
        let mut c = PipelineConfig::default();
        c.xai.levels = vec![0.7, 0.5];
        assert!(c.validate().is_err());
        c.xai.levels = vec![0.5, 1.0];
        assert!(c.validate().is_err());
    }
}
