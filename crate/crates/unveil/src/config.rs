//! Experiment configuration: strict JSON (unknown keys are errors) with
//! `key.path=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use unveil_core::optim::Optimizer;
use unveil_core::synth::{Regime, SynthConfig};
use unveil_core::train::TrainConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeTag {
    TextRich,
    VisualRich,
}

impl From<RegimeTag> for Regime {
    fn from(tag: RegimeTag) -> Self {
        match tag {
            RegimeTag::TextRich => Regime::TextRich,
            RegimeTag::VisualRich => Regime::VisualRich,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerTag {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Gold,
    Answers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub regime: RegimeTag,
    pub num_topics: usize,
    pub corpus_size: usize,
    pub num_queries: usize,
    pub visual_dim: usize,
    pub text_dim: usize,
    pub latent_dim: usize,
    pub doc_spread: f64,
    /// `null` takes the regime's preset.
    pub visual_noise: Option<f64>,
    /// `null` takes the regime's preset.
    pub text_noise: Option<f64>,
    pub query_noise: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let p = SynthConfig::preset(Regime::TextRich, 0);
        Self {
            regime: RegimeTag::TextRich,
            num_topics: p.num_topics,
            corpus_size: p.corpus_size,
            num_queries: p.num_queries,
            visual_dim: p.visual_dim,
            text_dim: p.text_dim,
            latent_dim: p.latent_dim,
            doc_spread: p.doc_spread,
            visual_noise: None,
            text_noise: None,
            query_noise: p.query_noise,
        }
    }
}

impl SynthSection {
    pub fn to_core(&self, seed: u64) -> SynthConfig {
        let regime = Regime::from(self.regime);
        let (visual, text) = regime.noise();
        SynthConfig {
            num_topics: self.num_topics,
            corpus_size: self.corpus_size,
            num_queries: self.num_queries,
            visual_dim: self.visual_dim,
            text_dim: self.text_dim,
            latent_dim: self.latent_dim,
            doc_spread: self.doc_spread,
            visual_noise: self.visual_noise.unwrap_or(visual),
            text_noise: self.text_noise.unwrap_or(text),
            query_noise: self.query_noise,
            regime,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden_dims: Vec::new(),
            embedding_dim: 32,
        }
    }
}

impl ModelSection {
    /// Layer widths of an encoder reading `input_dim` features.
    pub fn dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.embedding_dim);
        dims
    }
}

/// Flat mirror of [`TrainConfig`]; the seed comes from the experiment root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau_soft: f64,
    pub tau_weight: f64,
    pub optimizer: OptimizerTag,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub align_normalized: bool,
    pub include_hard_in_distill: bool,
    pub use_align: bool,
    pub use_soft: bool,
    pub use_reweight: bool,
}

impl TrainSection {
    /// Stage 1 on the synthetic benchmark: the published batch size, epoch
    /// count, temperatures and optimiser, with a learning rate sized for
    /// encoders trained from scratch.
    pub fn bench() -> Self {
        Self {
            learning_rate: 3e-3,
            ..Self::from_core(&TrainConfig::default())
        }
    }

    /// Stage 2 on the synthetic benchmark.
    pub fn bench_distill() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 40,
            ..Self::bench()
        }
    }

    pub fn from_core(c: &TrainConfig) -> Self {
        let (optimizer, beta1, beta2, eps) = match c.optimizer {
            Optimizer::Adam { beta1, beta2, eps } => (OptimizerTag::Adam, beta1, beta2, eps),
            Optimizer::Sgd => {
                let Optimizer::Adam { beta1, beta2, eps } = Optimizer::adam() else { unreachable!() };
                (OptimizerTag::Sgd, beta1, beta2, eps)
            }
        };
        Self {
            batch_size: c.batch_size,
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            tau_soft: c.tau_soft,
            tau_weight: c.tau_weight,
            optimizer,
            beta1,
            beta2,
            eps,
            align_normalized: c.align_normalized,
            include_hard_in_distill: c.include_hard_in_distill,
            use_align: c.use_align,
            use_soft: c.use_soft,
            use_reweight: c.use_reweight,
        }
    }

    pub fn to_core(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            tau_soft: self.tau_soft,
            tau_weight: self.tau_weight,
            seed,
            optimizer: match self.optimizer {
                OptimizerTag::Adam => Optimizer::Adam {
                    beta1: self.beta1,
                    beta2: self.beta2,
                    eps: self.eps,
                },
                OptimizerTag::Sgd => Optimizer::Sgd,
            },
            align_normalized: self.align_normalized,
            include_hard_in_distill: self.include_hard_in_distill,
            use_align: self.use_align,
            use_soft: self.use_soft,
            use_reweight: self.use_reweight,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self::bench()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k: usize,
    /// Weight of the first run in hybrid fusion.
    pub alpha: f64,
    pub judge: JudgeMode,
    /// Documents sampled for the teacher/student cosine report.
    pub alignment_sample: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: 0.5,
            judge: JudgeMode::Gold,
            alignment_sample: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root of every random stream: data, initialisation and shuffling.
    pub seed: u64,
    pub synth: SynthSection,
    pub model: ModelSection,
    pub train: TrainSection,
    /// Stage-2 settings; `null` reuses `train`.
    pub distill: Option<TrainSection>,
    pub eval: EvalSection,
    pub workers: usize,
    pub ablation_seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            distill: Some(TrainSection::bench_distill()),
            eval: EvalSection::default(),
            workers: 1,
            ablation_seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl ExperimentConfig {
    pub fn synth_config(&self) -> SynthConfig {
        self.synth.to_core(self.seed)
    }

    pub fn stage1_config(&self) -> TrainConfig {
        self.train.to_core(self.seed)
    }

    pub fn distill_config(&self) -> TrainConfig {
        self.distill.as_ref().unwrap_or(&self.train).to_core(self.seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_config().validate()?;
        self.stage1_config().validate()?;
        self.distill_config().validate()?;
        if self.model.embedding_dim == 0 || self.model.hidden_dims.contains(&0) {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.alpha) {
            return Err(Error::Config(format!("eval.alpha must lie in [0, 1], got {}", self.eval.alpha)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// Reads `path` (or the defaults when `None`) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let parsed: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                // round-trip through the typed form so unknown keys fail here
                let typed: ExperimentConfig =
                    serde_json::from_value(parsed).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::to_value(typed).expect("config serialises")
            }
            None => serde_json::to_value(Self::default()).expect("config serialises"),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Applies one `dotted.key=value` override. The value is parsed as JSON,
/// falling back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let mut node = &mut *root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            return Ok(());
        }
        if slot.is_null() && *part == "distill" {
            // materialise the stage-2 section before writing into it
            *slot = serde_json::to_value(TrainSection::bench_distill()).expect("serialises");
        }
        node = slot;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_file_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"train": {"batch_size": 8, "warmup": 3}}"#).unwrap();
        let err = ExperimentConfig::load(Some(&p), &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("warmup"), "{err}");
    }

    #[test]
    fn overrides_apply_and_reject_unknown_keys() {
        let c = ExperimentConfig::load(None, &["eval.k=5".into(), "synth.regime=visual_rich".into()]).unwrap();
        assert_eq!(c.eval.k, 5);
        assert_eq!(c.synth_config().regime, Regime::VisualRich);
        assert_eq!(c.synth_config().visual_noise, 0.1);
        let err = ExperimentConfig::load(None, &["train.momentum=0.9".into()]).unwrap_err();
        assert!(err.to_string().contains("train.momentum"));
        let err = ExperimentConfig::load(None, &["seed".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn distill_section_can_be_overridden_alone() {
        let c = ExperimentConfig::load(None, &["distill.epochs=3".into()]).unwrap();
        assert_eq!(c.distill_config().epochs, 3);
        assert_eq!(c.stage1_config().epochs, c.train.epochs);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for o in ["eval.alpha=1.5", "train.batch_size=1", "workers=0", "train.tau_soft=0"] {
            let err = ExperimentConfig::load(None, &[o.to_string()]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{o}: {err}");
        }
    }

    #[test]
    fn train_section_mirrors_core_defaults() {
        let core = TrainConfig::default();
        assert_eq!(TrainSection::from_core(&core).to_core(0), core);
    }
}
