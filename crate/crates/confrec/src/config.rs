//! Run configuration: a sectioned TOML file with every protocol default
//! pre-filled, plus dotted-key command-line overrides (`--set model.d=64`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expander::GraphKind;
use crate::synth::SynthConfig;

/// Input/output locations. All artifacts live under `workdir` with fixed
/// names so the pipeline stages compose without extra flags: `prepared.bin`,
/// `graph.knn`, `graph.walk`, `ckpt/`, `reports/`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Line-delimited JSON click log consumed by `prepare`.
    pub events: PathBuf,
    /// Directory that receives every artifact.
    pub workdir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            events: PathBuf::from("events.jsonl"),
            workdir: PathBuf::from("run"),
        }
    }
}

/// Corpus encoding and splitting.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Drop words appearing in fewer than this many distinct news.
    pub min_freq: u32,
    pub stop_words: Vec<String>,
    /// Title length after truncation/padding.
    pub m: usize,
    /// Entities per news after truncation/padding.
    pub p: usize,
    /// Share of evaluation positives routed to the validation set.
    pub valid_fraction: f64,
    /// History cap per user.
    pub h_max: usize,
    /// Seed for the validation sample and evaluation negatives.
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            min_freq: 5,
            stop_words: Vec::new(),
            m: 10,
            p: 20,
            valid_fraction: 0.2,
            h_max: 50,
            seed: 17,
        }
    }
}

/// Content-graph construction and expansion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExpanderConfig {
    /// Neighbors kept per node in both graphs.
    pub k: usize,
    /// Items added per expansion when building news/user lists. Keeping this
    /// below `k` lets the walk re-rank: weak direct edges can drop out of the
    /// visit-count top list in favour of nodes reachable through many paths.
    pub expand_k: usize,
    /// Walkers launched per node.
    pub n_walk: u32,
    /// Restart probability per step.
    pub p_restart: f64,
    /// Steps per walker.
    pub d_depth: u32,
    pub seed: u64,
}

impl Default for ExpanderConfig {
    fn default() -> Self {
        ExpanderConfig {
            k: 30,
            expand_k: 10,
            n_walk: 100_000,
            p_restart: 0.19,
            d_depth: 3,
            seed: 23,
        }
    }
}

/// Architecture dimensions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// News/user representation width.
    pub d: usize,
    /// Attention heads (everywhere); `heads * d_h` must equal `d`.
    pub heads: usize,
    /// Per-head width.
    pub d_h: usize,
    /// Word embedding width.
    pub n1: usize,
    /// Entity/type embedding width.
    pub n2: usize,
    /// Backbone depth.
    pub layers: usize,
    /// Attention temperature.
    pub tau: f32,
    /// Parameters start from `U(-init_scale, init_scale)`.
    pub init_scale: f32,
    /// Sampled neighbors per node per backbone layer.
    pub neighbor_cap: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 128,
            heads: 4,
            d_h: 32,
            n1: 64,
            n2: 64,
            layers: 2,
            tau: 1.0,
            init_scale: 0.01,
            neighbor_cap: 20,
        }
    }
}

/// Optimization settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f32,
    /// Weight of the L2 term; the click loss is scaled by `1 - lambda`.
    pub lambda: f32,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation-F1 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            lambda: 0.001,
            batch_size: 128,
            epochs: 50,
            patience: 3,
            seed: 42,
        }
    }
}

/// Which pathways are active.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Expand content lists through the similarity graph.
    pub enable_ne: bool,
    /// Attend over the lists (off: mean-pool; both off: content slots zero).
    pub enable_tafa: bool,
    /// Which similarity graph feeds the expansion.
    pub graph: GraphKind,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            enable_ne: true,
            enable_tafa: true,
            graph: GraphKind::Walk,
        }
    }
}

/// Complete run configuration; every field has a default, so an empty file
/// (or no file) is a valid starting point.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub expander: ExpanderConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
    /// Synthetic-corpus generator settings (used by the `synth` command).
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Parse a TOML file and apply `--set` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_toml(&text, overrides)
    }

    /// Parse TOML text and apply `--set` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut value: toml::Value = toml::from_str(text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        apply_overrides(&mut value, overrides)?;
        let config: RunConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("config error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// The built-in defaults with `--set` overrides applied.
    pub fn from_overrides(overrides: &[String]) -> Result<RunConfig> {
        let mut value =
            toml::Value::try_from(RunConfig::default()).expect("defaults serialize to a table");
        apply_overrides(&mut value, overrides)?;
        let config: RunConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("config error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.heads * self.model.d_h != self.model.d {
            return Err(Error::Config(format!(
                "heads * d_h must equal d ({} * {} != {})",
                self.model.heads, self.model.d_h, self.model.d
            )));
        }
        if !(0.0..=1.0).contains(&self.corpus.valid_fraction) {
            return Err(Error::Config(format!(
                "valid_fraction must lie in [0, 1], got {}",
                self.corpus.valid_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.train.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1), got {}",
                self.train.lambda
            )));
        }
        if self.expander.k == 0 {
            return Err(Error::Config("expander.k must be at least 1".into()));
        }
        if self.expander.expand_k == 0 {
            return Err(Error::Config("expander.expand_k must be at least 1".into()));
        }
        if self.train.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2, got {}",
                self.train.batch_size
            )));
        }
        Ok(())
    }
}

/// Apply `key.path=value` overrides to a parsed TOML tree. Values are parsed
/// as TOML scalars (numbers, booleans, strings, arrays); anything that does
/// not parse is taken as a bare string.
fn apply_overrides(root: &mut toml::Value, overrides: &[String]) -> Result<()> {
    for entry in overrides {
        let (key, raw) = entry.split_once('=').ok_or_else(|| {
            Error::Config(format!("override {entry:?} is not of the form key.path=value"))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("override {entry:?} has an empty key")));
        }
        let value = parse_scalar(raw.trim());

        let mut node = &mut *root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            let table = node.as_table_mut().ok_or_else(|| {
                Error::Config(format!("override {key}: {part} is not a table"))
            })?;
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: parent is not a table")))?;
        table.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

/// Parse one override value through TOML's own scalar grammar.
fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(doc) = toml::from_str::<toml::Value>(&format!("v = {raw}")) {
        if let Some(v) = doc.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let config = RunConfig::default();
        let text = config.to_toml();
        let back = RunConfig::from_toml(&text, &[]).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let config = RunConfig::from_toml("", &[]).unwrap();
        assert_eq!(config, RunConfig::default());
    }

    #[test]
    fn protocol_defaults_are_prefilled() {
        let c = RunConfig::default();
        assert_eq!(c.model.d, 128);
        assert_eq!(c.model.heads, 4);
        assert_eq!(c.model.d_h, 32);
        assert_eq!(c.model.n1, 64);
        assert_eq!(c.model.n2, 64);
        assert_eq!(c.model.layers, 2);
        assert_eq!(c.expander.k, 30);
        assert_eq!(c.expander.n_walk, 100_000);
        assert_eq!(c.expander.p_restart, 0.19);
        assert_eq!(c.expander.d_depth, 3);
        assert_eq!(c.train.lr, 5e-4);
        assert_eq!(c.train.lambda, 0.001);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.corpus.h_max, 50);
        assert_eq!(c.corpus.min_freq, 5);
        assert_eq!(c.corpus.m, 10);
        assert_eq!(c.corpus.p, 20);
        assert_eq!(c.model.tau, 1.0);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let config = RunConfig::from_overrides(&[
            "model.d=64".into(),
            "model.d_h=16".into(),
            "train.lr=0.002".into(),
            "ablation.graph=\"knn\"".into(),
            "ablation.enable_tafa=false".into(),
            "paths.workdir=\"/tmp/x\"".into(),
            "corpus.stop_words=[\"the\",\"a\"]".into(),
        ])
        .unwrap();
        assert_eq!(config.model.d, 64);
        assert_eq!(config.train.lr, 0.002);
        assert_eq!(config.ablation.graph, GraphKind::Knn);
        assert!(!config.ablation.enable_tafa);
        assert_eq!(config.paths.workdir, PathBuf::from("/tmp/x"));
        assert_eq!(config.corpus.stop_words, vec!["the", "a"]);
    }

    #[test]
    fn bare_strings_need_no_quotes() {
        let config = RunConfig::from_overrides(&["ablation.graph=knn".into()]).unwrap();
        assert_eq!(config.ablation.graph, GraphKind::Knn);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[model]\nwidth = 3\n", &[]).is_err());
        assert!(RunConfig::from_toml("[extra]\nx = 1\n", &[]).is_err());
        assert!(RunConfig::from_overrides(&["model.width=3".into()]).is_err());
    }

    #[test]
    fn malformed_overrides_are_rejected() {
        assert!(RunConfig::from_overrides(&["model.d".into()]).is_err());
        assert!(RunConfig::from_overrides(&["=3".into()]).is_err());
    }

    #[test]
    fn inconsistent_dims_are_rejected() {
        assert!(RunConfig::from_overrides(&["model.d=100".into()]).is_err());
        let err = RunConfig::from_overrides(&["train.lambda=1.5".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn synth_section_round_trips() {
        let config = RunConfig::from_overrides(&[
            "synth.n_users=50".into(),
            "synth.n_events=500".into(),
        ])
        .unwrap();
        assert_eq!(config.synth.n_users, 50);
        assert_eq!(config.synth.n_events, 500);
        let back = RunConfig::from_toml(&config.to_toml(), &[]).unwrap();
        assert_eq!(config, back);
    }
}
