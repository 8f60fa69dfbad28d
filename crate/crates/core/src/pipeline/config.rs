//! Experiment configuration: one JSON document with full defaults, strict
//! unknown-key rejection, and field-path diagnostics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusConfig;
use crate::error::{Error, Result};
use crate::nn::EncoderConfig;
use crate::rqvae::RqVaeTrainConfig;
use crate::sid::adapt::{AdaptationConfig, AdaptationVariant};
use crate::sid::vocab::SidSubset;
use crate::trainer::{PretrainConfig, ScheduleName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTarget {
    /// Index the pretrained fused towers directly.
    Pretrained,
    /// Index the adapted SID-token item tower.
    Adapted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// One full retrain per repetition seed.
    Retrain,
    /// One trained checkpoint; repetitions bootstrap-resample the eval set.
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub schedule: ScheduleName,
    pub pretrain: PretrainConfig,
    pub rqvae: RqVaeTrainConfig,
    pub adapt: AdaptationConfig,
    pub sid_subset: SidSubset,
    pub adaptation: AdaptationVariant,
    pub eval_target: EvalTarget,
    pub eval_mode: EvalMode,
    pub seeds: Vec<u64>,
    pub search_mode: crate::eval::SearchMode,
    pub coarse_clusters: usize,
    pub n_probe: usize,
    pub random_image_ablation: bool,
    pub train_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            schedule: ScheduleName::Order6,
            pretrain: PretrainConfig::default(),
            rqvae: RqVaeTrainConfig::default(),
            adapt: AdaptationConfig::default(),
            sid_subset: SidSubset::All,
            adaptation: AdaptationVariant::Full,
            eval_target: EvalTarget::Adapted,
            eval_mode: EvalMode::Retrain,
            seeds: vec![0, 1, 2, 3, 4],
            search_mode: crate::eval::SearchMode::Exact,
            coarse_clusters: crate::eval::DEFAULT_COARSE_CLUSTERS,
            n_probe: crate::eval::DEFAULT_N_PROBE,
            random_image_ablation: false,
            train_fraction: 0.8,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.pretrain.validate()?;
        self.rqvae.validate()?;
        self.adapt.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must list at least one seed"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
        }
        if self.coarse_clusters == 0 || self.n_probe == 0 {
            return Err(Error::config("n_probe", "coarse_clusters and n_probe must be positive"));
        }
        Ok(())
    }

    /// Encoder dimensions implied by the corpus.
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig::desk_scale(self.corpus.vocab_base_size(), self.corpus.d_img)
    }

    /// Report row label for this run.
    pub fn variant_label(&self) -> String {
        match self.eval_target {
            EvalTarget::Pretrained => self.schedule.name().to_string(),
            EvalTarget::Adapted => {
                format!("{}+sids-{}+{}", self.schedule.name(), self.sid_subset, self.adaptation)
            }
        }
    }
}

/// Parses a config file; an empty file is the full default config when
/// `allow_empty` is set. Unknown keys and invalid enums fail with the field
/// path in the message.
pub fn load_config_with(path: &Path, allow_empty: bool) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, allow_empty)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    load_config_with(path, false)
}

pub fn parse_config(text: &str, allow_empty: bool) -> Result<ExperimentConfig> {
    if text.trim().is_empty() {
        if allow_empty {
            let config = ExperimentConfig::default();
            config.validate()?;
            return Ok(config);
        }
        return Err(Error::config("config", "file is empty (pass defaults-allowed to accept)"));
    }
    let mut de = serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| Error::config(e.path().to_string(), e.inner().to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Canonical serialization used for files and hashing.
pub fn save_config(path: &Path, config: &ExperimentConfig) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, canonical_json(config)?)?;
    Ok(())
}

pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_with_flag_yields_defaults() {
        let config = parse_config("", true).unwrap();
        assert_eq!(config, ExperimentConfig::default());
        assert!(parse_config("", false).is_err());
    }

    #[test]
    fn unknown_schedule_names_the_field() {
        let err = parse_config(r#"{"schedule": "Order9"}"#, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("schedule"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(r#"{"schedul": "Order6"}"#, false).unwrap_err();
        assert!(err.to_string().contains("schedul"), "{err}");
    }

    #[test]
    fn partial_configs_fill_defaults() {
        let config = parse_config(r#"{"seeds": [7], "schedule": "Joint"}"#, false).unwrap();
        assert_eq!(config.seeds, vec![7]);
        assert_eq!(config.schedule, ScheduleName::Joint);
        assert_eq!(config.corpus, CorpusConfig::default());
    }

    #[test]
    fn roundtrip_is_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let config = parse_config(r#"{"seeds": [3, 4]}"#, false).unwrap();
        save_config(&path, &config).unwrap();
        let loaded = load_config(&path).unwrap();
        assert_eq!(config, loaded);
        let again = dir.path().join("config2.json");
        save_config(&again, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn validation_flags_bad_values() {
        assert!(parse_config(r#"{"seeds": []}"#, false).is_err());
        assert!(parse_config(r#"{"train_fraction": 1.5}"#, false).is_err());
    }
}
