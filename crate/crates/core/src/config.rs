//! Experiment configuration.
//!
//! Configs are TOML. Any field left out takes the default of the selected
//! phase, so a file may be as small as `phase = "phase1"` plus a dataset path.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, SplitRule};
use crate::layers::BatchNormConfig;
use crate::model::{ModelSpec, NeuronKind};
use crate::neuron::{LifHyper, QlifHyper};
use crate::train::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Weather, four variables, QLIF against classical LIF.
    Phase1,
    /// Air quality, next-day PM2.5, 48-unit LSTM.
    Phase2a,
    /// Hourly wind speed, univariate.
    Phase2b,
    /// Everything comes from the config file.
    Custom,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Phase1 => "phase1",
            Phase::Phase2a => "phase2a",
            Phase::Phase2b => "phase2b",
            Phase::Custom => "custom",
        }
    }

    pub fn default_lstm_units(self) -> usize {
        match self {
            Phase::Phase2a => 48,
            _ => 24,
        }
    }

    pub fn default_max_epochs(self) -> usize {
        match self {
            Phase::Phase1 | Phase::Custom => 15,
            Phase::Phase2a | Phase::Phase2b => 30,
        }
    }

    pub fn preset_schema(self) -> Option<DatasetSchema> {
        match self {
            Phase::Phase1 => Some(DatasetSchema::weather()),
            Phase::Phase2a => Some(DatasetSchema::air_quality()),
            Phase::Phase2b => Some(DatasetSchema::wind()),
            Phase::Custom => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase1" => Ok(Phase::Phase1),
            "phase2a" => Ok(Phase::Phase2a),
            "phase2b" => Ok(Phase::Phase2b),
            "custom" => Ok(Phase::Custom),
            other => Err(Error::Config(format!("unknown phase {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Raw CSV file.
    pub csv: Option<PathBuf>,
    /// Schema file; the phase preset is used when absent.
    pub schema: Option<PathBuf>,
    /// Replaces the schema's split rule.
    pub split: Option<SplitRule>,
    /// Windowed-dataset cache written by `preprocess`; preferred over `csv`.
    pub cache: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub neuron_kind: NeuronKind,
    pub lstm_units: usize,
    pub qlif: QlifHyper,
    pub lif: LifHyper,
    pub input_dropout: f64,
    pub hidden_dropout: f64,
    pub batchnorm: BatchNormConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            neuron_kind: NeuronKind::Qlif,
            lstm_units: 24,
            qlif: QlifHyper::default(),
            lif: LifHyper::default(),
            input_dropout: 0.1,
            hidden_dropout: 0.2,
            batchnorm: BatchNormConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phase: Phase,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Fraction of the split used, for quick runs on small machines.
    pub device_scale: f64,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
}

impl ExperimentConfig {
    pub fn for_phase(phase: Phase) -> Self {
        ExperimentConfig {
            phase,
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("runs"),
            device_scale: 1.0,
            dataset: DatasetConfig::default(),
            model: ModelConfig {
                lstm_units: phase.default_lstm_units(),
                ..ModelConfig::default()
            },
            training: TrainConfig {
                max_epochs: phase.default_max_epochs(),
                ..TrainConfig::default()
            },
        }
    }

    /// Parses TOML, filling omitted fields from the phase defaults. Relative
    /// dataset paths resolve against the config file's directory.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let phase = match user.get("phase") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Config("phase must be a string".into())),
            None => Phase::Phase1,
        };
        let mut merged = toml::Table::try_from(Self::for_phase(phase))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let mut cfg: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(base) = base {
            for p in [&mut cfg.dataset.csv, &mut cfg.dataset.schema, &mut cfg.dataset.cache]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.device_scale > 0.0 && self.device_scale <= 1.0) {
            return Err(Error::Config(format!(
                "device_scale must lie in (0, 1], got {}",
                self.device_scale
            )));
        }
        if self.phase == Phase::Custom && self.dataset.schema.is_none() && self.dataset.cache.is_none() {
            return Err(Error::Config("custom phase needs dataset.schema or dataset.cache".into()));
        }
        self.training.validate()?;
        self.model_spec(1, 1, 1).validate()
    }

    /// Schema from file or phase preset, with the split override applied.
    pub fn schema(&self) -> Result<DatasetSchema> {
        let mut schema = match &self.dataset.schema {
            Some(path) => DatasetSchema::load(path)?,
            None => self
                .phase
                .preset_schema()
                .ok_or_else(|| Error::Config("custom phase needs dataset.schema".into()))?,
        };
        if let Some(split) = self.dataset.split {
            schema.split = split;
        }
        Ok(schema)
    }

    pub fn model_spec(&self, n_features: usize, n_targets: usize, window: usize) -> ModelSpec {
        let m = &self.model;
        ModelSpec {
            neuron_kind: m.neuron_kind,
            n_features,
            n_targets,
            lstm_units: m.lstm_units,
            window,
            qlif: m.qlif,
            lif: m.lif,
            input_dropout: m.input_dropout,
            hidden_dropout: m.hidden_dropout,
            batchnorm: m.batchnorm,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_hyperparameter_table() {
        let c = ExperimentConfig::for_phase(Phase::Phase1);
        let t = &c.training;
        assert_eq!(t.optimizer.lr0, 1e-3);
        assert_eq!(t.batch_size, 64);
        assert_eq!(t.patience, 5);
        assert_eq!(t.optimizer.l2, 1e-4);
        assert_eq!(c.model.input_dropout, 0.1);
        assert_eq!(c.model.hidden_dropout, 0.2);
        assert_eq!(c.model.qlif.threshold, 0.75);
        assert_eq!(c.model.qlif.t1, 10.0);
        assert_eq!(c.schema().unwrap().window, 12);
        assert_eq!(t.max_epochs, 15);
    }

    #[test]
    fn phase_defaults() {
        let a = ExperimentConfig::from_toml("phase = \"phase2a\"", None).unwrap();
        assert_eq!(a.model.lstm_units, 48);
        assert_eq!(a.training.max_epochs, 30);
        let s = a.schema().unwrap();
        let spec = a.model_spec(s.inputs.len(), s.targets.len(), s.window);
        assert_eq!((spec.n_features, spec.n_targets, spec.lstm_units), (3, 1, 48));

        let b = ExperimentConfig::from_toml("phase = \"phase2b\"", None).unwrap();
        let s = b.schema().unwrap();
        let spec = b.model_spec(s.inputs.len(), s.targets.len(), s.window);
        assert_eq!((spec.n_features, spec.n_targets, spec.lstm_units, spec.window), (1, 1, 24, 12));
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let text = "phase = \"phase1\"\nseeds = [7]\n[training]\nbatch_size = 32\n[dataset]\ncsv = \"w.csv\"\nsplit = { kind = \"fixed\", train = 2000, test = 500 }\n";
        let c = ExperimentConfig::from_toml(text, Some(Path::new("/data"))).unwrap();
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.training.batch_size, 32);
        assert_eq!(c.training.patience, 5);
        assert_eq!(c.dataset.csv.as_deref(), Some(Path::new("/data/w.csv")));
        assert_eq!(c.schema().unwrap().split, SplitRule::Fixed { train: 2000, test: 500 });
    }

    #[test]
    fn snapshot_roundtrips() {
        let c = ExperimentConfig::for_phase(Phase::Phase2b);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap(), None).unwrap(), c);
    }

    #[test]
    fn invalid_configs() {
        for text in [
            "phase = \"phase9\"",
            "seeds = []",
            "device_scale = 0.0",
            "typo = 1",
            "[training]\nbatch_size = 0",
            "phase = \"custom\"",
            "[model]\ninput_dropout = 1.0",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text, None), Err(Error::Config(_))), "{text}");
        }
    }
}
