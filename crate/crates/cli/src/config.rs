//! Run configuration: a JSON file whose values are overridden by flags.

use std::path::Path;

use clap::Args;
use s3a::datakit::{SubclassScheme, SynthConfig};
use s3a::protocol::{Algorithm, BreakdownRule, PipelineConfig, ProtocolKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
    /// Average-pool factor applied to square image vectors before training.
    pub pool: Option<usize>,
    pub subclass_scheme: SubclassScheme,
    pub protocol: ProtocolKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            pipeline: PipelineConfig::default(),
            pool: None,
            subclass_scheme: SubclassScheme::default(),
            protocol: ProtocolKind::CrossEthnicity,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = crate::read_text(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// Logs the resolved configuration as a single JSON line on stderr.
    pub fn log(&self, command: &str) {
        let line = serde_json::to_string(self).expect("config serialises");
        eprintln!("s3a {command}: resolved config {line}");
    }
}

pub const CONFIG_HELP: &str = "JSON config file. Top-level keys: synth {input_dim, subclasses_per_class, \
samples_per_group, class_shift, subclass_shift, noise_sigma, seed}; pipeline {train {lambda, learning_rate, \
pretrain_epochs, finetune_epochs, irls_refresh_every, epsilon, seed, grad_clip, tolerance, finetune_penalty}, \
hidden_dims, svm {cost_pos, cost_neg, epochs}, folds, seed, algorithms, breakdown}; pool; subclass_scheme; \
protocol. Unknown keys are rejected; flags override file values.";

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub subclasses_per_class: Option<usize>,
    #[arg(long)]
    pub samples_per_group: Option<usize>,
    #[arg(long)]
    pub class_shift: Option<f64>,
    #[arg(long)]
    pub subclass_shift: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SynthFlags {
    pub fn apply(&self, c: &mut SynthConfig) {
        set(&mut c.input_dim, self.input_dim);
        set(&mut c.subclasses_per_class, self.subclasses_per_class);
        set(&mut c.samples_per_group, self.samples_per_group);
        set(&mut c.class_shift, self.class_shift);
        set(&mut c.subclass_shift, self.subclass_shift);
        set(&mut c.noise_sigma, self.noise_sigma);
        set(&mut c.seed, self.seed);
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    #[arg(long)]
    pub irls_refresh_every: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Seed of weight initialisation.
    #[arg(long)]
    pub train_seed: Option<u64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Comma-separated hidden layer sizes.
    #[arg(long, value_delimiter = ',')]
    pub hidden_dims: Option<Vec<usize>>,
    /// Average-pool factor for square image vectors.
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    pub subclass_scheme: Option<SubclassScheme>,
}

impl TrainFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        let t = &mut c.pipeline.train;
        set(&mut t.lambda, self.lambda);
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.pretrain_epochs, self.pretrain_epochs);
        set(&mut t.finetune_epochs, self.finetune_epochs);
        set(&mut t.irls_refresh_every, self.irls_refresh_every);
        set(&mut t.epsilon, self.epsilon);
        set(&mut t.seed, self.train_seed);
        set(&mut t.tolerance, self.tolerance);
        if self.grad_clip.is_some() {
            t.grad_clip = self.grad_clip;
        }
        if self.hidden_dims.is_some() {
            c.pipeline.hidden_dims = self.hidden_dims.clone();
        }
        if self.pool.is_some() {
            c.pool = self.pool;
        }
        set(&mut c.subclass_scheme, self.subclass_scheme);
    }
}

#[derive(Debug, Clone, Args)]
pub struct SvmFlags {
    #[arg(long)]
    pub cost_pos: Option<f64>,
    #[arg(long)]
    pub cost_neg: Option<f64>,
    #[arg(long)]
    pub svm_epochs: Option<usize>,
}

impl SvmFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        let s = &mut c.pipeline.svm;
        set(&mut s.cost_pos, self.cost_pos);
        set(&mut s.cost_neg, self.cost_neg);
        set(&mut s.epochs, self.svm_epochs);
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProtocolFlags {
    #[arg(long, value_parser = parse_protocol)]
    pub protocol: Option<ProtocolKind>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seed of splits and fold assignment.
    #[arg(long)]
    pub protocol_seed: Option<u64>,
    /// Comma-separated subset of S3A, SPARSE_AE.
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
    pub algorithms: Option<Vec<Algorithm>>,
    #[arg(long, value_parser = parse_breakdown)]
    pub breakdown: Option<BreakdownRule>,
}

impl ProtocolFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.protocol, self.protocol);
        set(&mut c.pipeline.folds, self.folds);
        set(&mut c.pipeline.seed, self.protocol_seed);
        if self.algorithms.is_some() {
            c.pipeline.algorithms = self.algorithms.clone().unwrap_or_default();
        }
        set(&mut c.pipeline.breakdown, self.breakdown);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn enum_value<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

fn parse_scheme(s: &str) -> Result<SubclassScheme, String> {
    enum_value(&s.to_ascii_uppercase())
}

fn parse_protocol(s: &str) -> Result<ProtocolKind, String> {
    enum_value(&s.replace('-', "_"))
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    enum_value(&s.to_ascii_uppercase().replace('-', "_"))
}

fn parse_breakdown(s: &str) -> Result<BreakdownRule, String> {
    enum_value(&s.to_ascii_uppercase().replace('-', "_"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let c = RunConfig::default();
        let text = c.to_json();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"pipeline": {"folds": 3, "bogus": 1}}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"pipeline": {"folds": 3}}"#).unwrap();
        assert_eq!(partial.pipeline.folds, 3);
    }

    #[test]
    fn enum_flags_parse() {
        assert_eq!(parse_protocol("cross-ethnicity").unwrap(), ProtocolKind::CrossEthnicity);
        assert_eq!(parse_algorithm("sparse-ae").unwrap(), Algorithm::SparseAe);
        assert_eq!(parse_scheme("gender").unwrap(), SubclassScheme::Gender);
        assert!(parse_breakdown("nope").is_err());
    }
}
