//! Run configuration: one JSON document with a section per pipeline stage.
//!
//! Unknown keys are rejected, defaults are filled at load, and a resolved
//! copy is written next to every command's outputs. A single top-level seed
//! drives coarsening order, initialization, splits, dropout, and synthetic
//! data through fixed per-purpose derivations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use supernode_core::dataio::{Orientation, SyntheticSpec};
use supernode_core::error::{Error, Result};
use supernode_core::gnn::{ArchitectureConfig, Head};
use supernode_core::graph::LambdaMaxMode;
use supernode_core::interpret::Reduction;
use supernode_core::train::{ClassWeighting, TrainConfig};

pub const RUN_CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub graph: GraphSection,
    pub coarsen: CoarsenSection,
    pub data: DataSection,
    pub architecture: ArchSection,
    pub train: TrainSection,
    pub explain: ExplainSection,
    pub enrich: EnrichSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    /// Three-column edge-list TSV.
    pub edge_list: Option<PathBuf>,
    pub min_weight: f64,
    /// `approximate` (λ_max = 2) or `estimated` (power iteration).
    pub lambda_max: LambdaMaxSetting,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            edge_list: None,
            min_weight: 0.0,
            lambda_max: LambdaMaxSetting::Approximate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMaxSetting {
    Approximate,
    Estimated,
}

impl From<LambdaMaxSetting> for LambdaMaxMode {
    fn from(s: LambdaMaxSetting) -> Self {
        match s {
            LambdaMaxSetting::Approximate => LambdaMaxMode::Approximate,
            LambdaMaxSetting::Estimated => LambdaMaxMode::Estimated,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarsenSection {
    pub n_levels: usize,
    /// Load a previously written hierarchy instead of rebuilding it.
    pub hierarchy: Option<PathBuf>,
}

impl Default for CoarsenSection {
    fn default() -> Self {
        CoarsenSection {
            n_levels: 7,
            hierarchy: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub expression: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub orientation: Orientation,
    /// Optional two-column id mapping applied before graph alignment.
    pub mapping: Option<PathBuf>,
    pub missing_threshold: f64,
    /// Apply log2(x+1) after missing-value filtering. Off by default; the
    /// synthetic generator produces values that are already signed.
    pub log_transform: bool,
    pub synth: SynthSection,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            expression: None,
            labels: None,
            orientation: Orientation::SamplesAsRows,
            mapping: None,
            missing_threshold: 0.20,
            log_transform: false,
            synth: SynthSection::default(),
        }
    }
}

/// Synthetic-task parameters; the generator seed derives from the top-level
/// seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub graph_size: usize,
    pub n_planted_modules: usize,
    pub module_size: usize,
    pub effect_size: f64,
    pub noise_sigma: f64,
    pub n_samples_per_class: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            graph_size: 256,
            n_planted_modules: 2,
            module_size: 16,
            effect_size: 3.0,
            noise_sigma: 1.0,
            n_samples_per_class: 200,
        }
    }
}

impl SynthSection {
    pub fn to_spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            graph_size: self.graph_size,
            n_planted_modules: self.n_planted_modules,
            module_size: self.module_size,
            effect_size: self.effect_size,
            noise_sigma: self.noise_sigma,
            n_samples_per_class: self.n_samples_per_class,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    /// Levels consumed by the model; defaults to the full hierarchy depth.
    pub n_levels: Option<usize>,
    pub conv_start_level: usize,
    /// Empty selects the default doubling schedule (2, 4, 8, …).
    pub channel_schedule: Vec<usize>,
    pub hidden_units: usize,
    pub dropout_p: f64,
    pub head: Head,
}

impl Default for ArchSection {
    fn default() -> Self {
        ArchSection {
            n_levels: None,
            conv_start_level: 4,
            channel_schedule: vec![],
            hidden_units: 256,
            dropout_p: 0.5,
            head: Head::SigmoidBinary,
        }
    }
}

impl ArchSection {
    pub fn to_core(&self, hierarchy_depth: usize) -> ArchitectureConfig {
        ArchitectureConfig {
            n_levels: self.n_levels.unwrap_or(hierarchy_depth),
            conv_start_level: self.conv_start_level,
            channel_schedule: self.channel_schedule.clone(),
            hidden_units: self.hidden_units,
            dropout_p: self.dropout_p,
            head: self.head,
        }
    }
}

/// Training hyperparameters; the optimizer seed comes from the top level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub class_weighting: ClassWeighting,
    pub fractions: [f64; 3],
    /// Checkpoint consumed by `evaluate` and `explain` (written by `train`).
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainSection {
            learning_rate: base.learning_rate,
            beta1: base.beta1,
            beta2: base.beta2,
            epsilon: base.epsilon,
            batch_size: base.batch_size,
            max_epochs: base.max_epochs,
            patience: base.patience,
            class_weighting: base.class_weighting,
            fractions: base.fractions,
            checkpoint: None,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            class_weighting: self.class_weighting,
            fractions: self.fractions,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    pub target_class: usize,
    pub reduction: Reduction,
    /// Rows kept in the ranking TSVs; 0 keeps everything.
    pub top_k: usize,
    pub partition: Partition,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            target_class: 1,
            reduction: Reduction::Mean,
            top_k: 25,
            partition: Partition::Test,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnrichSection {
    /// GMT gene-set file.
    pub gmt: Option<PathBuf>,
    /// Hierarchy level whose supernodes are tested; defaults to the final
    /// level.
    pub level: Option<usize>,
    /// Explicit supernode indices to test.
    pub supernodes: Vec<usize>,
    /// Supernode ranking TSV (from `explain`); its top `top_k` rows are
    /// tested when `supernodes` is empty.
    pub ranking: Option<PathBuf>,
    pub top_k: usize,
}

impl Default for EnrichSection {
    fn default() -> Self {
        EnrichSection {
            gmt: None,
            level: None,
            supernodes: vec![],
            ranking: None,
            top_k: 4,
        }
    }
}

/// Parse and schema-validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Schema(format!("cannot read config {}: {e}", path.display()))
    })?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("config {}: {e}", path.display())))?;
    validate(&config)?;
    Ok(config)
}

/// Re-check cross-field constraints (also applied after flag overrides).
pub fn validate(config: &RunConfig) -> Result<()> {
    if !(0.0..=1.0).contains(&config.data.missing_threshold) {
        return Err(Error::Schema(format!(
            "data.missing_threshold {} not in [0, 1]",
            config.data.missing_threshold
        )));
    }
    if config.coarsen.n_levels == 0 {
        return Err(Error::Schema("coarsen.n_levels must be at least 1".into()));
    }
    // Full architecture validation needs the hierarchy, but the depth the
    // model will see is already known here.
    if !(0.0..1.0).contains(&config.architecture.dropout_p) {
        return Err(Error::Schema(format!(
            "architecture.dropout_p {} not in [0, 1)",
            config.architecture.dropout_p
        )));
    }
    let model_levels = config
        .architecture
        .n_levels
        .unwrap_or(config.coarsen.n_levels);
    if config.architecture.conv_start_level > model_levels {
        return Err(Error::Schema(format!(
            "architecture.conv_start_level {} outside 0..={model_levels}",
            config.architecture.conv_start_level
        )));
    }
    config.train.to_core(config.seed).validate()?;
    Ok(())
}

/// Write the resolved (defaults filled) config next to the outputs.
pub fn write_resolved(config: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join("config.resolved.json");
    std::fs::write(&path, serde_json::to_string_pretty(config)?)?;
    Ok(path)
}
