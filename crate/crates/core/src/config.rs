//! TOML run configuration shared by every CLI subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encode::{EncodeConfig, Modality};
use crate::error::{Error, Result};
use crate::explain::SaliencyMode;
use crate::ingest::{DEFAULT_FRACTIONS, DEFAULT_WINDOW_H};
use crate::model::{EncoderConfig, ModelConfig, Task, TextEncoderConfig, TrainConfig};
use crate::synth::SynthSpec;
use crate::text::CONTEXT_LENGTH;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input files (the `synth` output directory).
    pub data_dir: PathBuf,
    /// Everything the pipeline writes.
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    pub cohort: CohortConfig,
    #[serde(default)]
    pub encode: EncodeConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    #[serde(default)]
    pub explain: ExplainConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    #[serde(default = "default_window")]
    pub window_h: f64,
    pub split_seed: u64,
    #[serde(default = "default_fractions")]
    pub fractions: [f64; 3],
}

fn default_window() -> f64 {
    DEFAULT_WINDOW_H
}

fn default_fractions() -> [f64; 3] {
    DEFAULT_FRACTIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub task: Task,
    /// Modality letters joined by `|`, e.g. `"C|M|X|E"`.
    pub modalities: String,
    pub text: bool,
    pub vision: EncoderConfig,
    pub text_encoder: TextSection,
    pub fusion_dim: usize,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            task: Task::Mortality,
            modalities: "C".into(),
            text: false,
            vision: EncoderConfig::default(),
            text_encoder: TextSection::default(),
            fusion_dim: 64,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextSection {
    pub bpe_vocab_size: usize,
    pub context_length: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    pub feature_dim: usize,
}

impl Default for TextSection {
    fn default() -> Self {
        TextSection { bpe_vocab_size: 2048, context_length: CONTEXT_LENGTH, embed_dim: 64, n_layers: 2, n_heads: 4, mlp_ratio: 4, feature_dim: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub lr_schedule: Option<Vec<f64>>,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { learning_rate: 2e-4, lr_schedule: None, weight_decay: 3e-8, epochs: 3, batch_size: 16, seed: 0 }
    }
}

impl TrainSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            lr_schedule: self.lr_schedule.clone(),
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Prediction CSVs written by `eval`.
    pub a: PathBuf,
    pub b: PathBuf,
    #[serde(default = "default_boot")]
    pub n_boot: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_boot() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub mode: SaliencyMode,
    pub alpha: f64,
    /// Test instances to explain, in split order.
    pub max_instances: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { mode: SaliencyMode::LastLayerMean, alpha: 0.6, max_instances: 16 }
    }
}

pub fn parse_modalities(s: &str) -> Result<Vec<Modality>> {
    let mut out = Vec::new();
    for part in s.split('|').map(str::trim).filter(|p| !p.is_empty()) {
        let mut chars = part.chars();
        let m = match (chars.next(), chars.next()) {
            (Some(c), None) => Modality::from_letter(c),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("unknown modality {part:?}; use C, M, X or E")))?;
        if out.contains(&m) {
            return Err(Error::Config(format!("modality {part} listed twice")));
        }
        out.push(m);
    }
    out.sort_by_key(|m| Modality::FUSION_ORDER.iter().position(|o| o == m));
    Ok(out)
}

impl RunConfig {
    /// Reads a TOML file; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        fix(&mut self.out_dir);
        if let Some(c) = self.compare.as_mut() {
            fix(&mut c.a);
            fix(&mut c.b);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cohort.window_h > 0.0) {
            return Err(Error::Config("cohort.window_h must be positive".into()));
        }
        if self.encode.canvas_size < 8 {
            return Err(Error::Config("encode.canvas_size is too small".into()));
        }
        if !(0.0..=1.0).contains(&self.explain.alpha) {
            return Err(Error::Config("explain.alpha must lie in [0, 1]".into()));
        }
        self.train.to_train_config().validate()?;
        self.model_config(None)?.validate()
    }

    pub fn modalities(&self) -> Result<Vec<Modality>> {
        parse_modalities(&self.model.modalities)
    }

    /// Model configuration; `vocab_size` comes from the trained tokenizer when text is on.
    pub fn model_config(&self, vocab_size: Option<usize>) -> Result<ModelConfig> {
        let t = &self.model.text_encoder;
        Ok(ModelConfig {
            modalities: self.modalities()?,
            vision: self.model.vision.clone(),
            text: self.model.text.then(|| TextEncoderConfig {
                vocab_size: vocab_size.unwrap_or(t.bpe_vocab_size),
                context_length: t.context_length,
                embed_dim: t.embed_dim,
                n_layers: t.n_layers,
                n_heads: t.n_heads,
                mlp_ratio: t.mlp_ratio,
                feature_dim: t.feature_dim,
            }),
            fusion_dim: self.model.fusion_dim,
            n_outputs: self.model.task.n_outputs(),
            init_seed: self.model.init_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
data_dir = "data"
[cohort]
split_seed = 7
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.task, Task::Mortality);
        assert_eq!(cfg.cohort.fractions, DEFAULT_FRACTIONS);
        assert_eq!(cfg.modalities().unwrap(), vec![Modality::Clinical]);
    }

    #[test]
    fn modality_string_is_ordered() {
        let m = parse_modalities("E|C|X").unwrap();
        assert_eq!(m, vec![Modality::Clinical, Modality::Cxr, Modality::Ecg]);
        assert!(parse_modalities("C|C").is_err());
        assert!(parse_modalities("Q").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[train]\nlearningrate = 1.0\n");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }

    #[test]
    fn split_seed_is_required() {
        assert!(toml::from_str::<RunConfig>("data_dir = \"d\"\n[cohort]\n").is_err());
    }
}
