//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic, load_idx, SyntheticTask, TaskData, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::layers::ThresholdActivation;
use crate::model::{LayerSpec, Model};
use crate::optimizer::{EtaSchedule, OptimizerState};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    /// Output directory; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Xor2,
    Parity {
        n: usize,
    },
    Teacher {
        inputs: usize,
        classes: usize,
        train_size: usize,
        test_size: usize,
        /// Defaults to the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// IDX files; relative paths are resolved against the config file.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_threshold")]
        threshold: u8,
    },
}

fn default_threshold() -> u8 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Initial accumulation rate; defaults to `2 / batch_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub schedule: EtaSchedule,
    pub head_lr: f64,
    /// Minimum accumulator magnitude for a flip; 0 applies the plain sign rule.
    #[serde(default)]
    pub flip_threshold: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg.effective())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut self.data
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if let Some(out) = &mut self.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.model.layers.is_empty() {
            return Err(Error::Config("model needs at least one Boolean layer".into()));
        }
        if self.model.layers.iter().any(|l| l.width == 0) {
            return Err(Error::Config("layer width must be positive".into()));
        }
        let o = &self.optimizer;
        for (name, v) in [
            ("optimizer.eta", o.eta.unwrap_or(0.0)),
            ("optimizer.head_lr", o.head_lr),
            ("optimizer.flip_threshold", o.flip_threshold),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        o.schedule.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &self.data
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if !p.is_file() {
                    return Err(Error::Config(format!("data file not found: {}", p.display())));
                }
            }
        }
        if let DataConfig::Parity { n } = self.data {
            if n == 0 || n > crate::data::MAX_PARITY_BITS {
                return Err(Error::Config(format!("parity bits {n} out of range")));
            }
        }
        Ok(())
    }

    /// Input width implied by the data source, when known without reading files.
    fn input_width(&self) -> Option<usize> {
        match self.data {
            DataConfig::Xor2 => Some(2),
            DataConfig::Parity { n } => Some(n),
            DataConfig::Teacher { inputs, .. } => Some(inputs),
            DataConfig::Idx { .. } => None,
        }
    }

    /// The config with every default made explicit.
    pub fn effective(mut self) -> Self {
        self.optimizer.eta.get_or_insert(OptimizerState::default_eta(self.train.batch_size));
        if let DataConfig::Teacher { seed, .. } = &mut self.data {
            seed.get_or_insert(self.seed);
        }
        if let Some(mut fan_in) = self.input_width() {
            for l in &mut self.model.layers {
                let d = ThresholdActivation::for_fan_in(fan_in);
                l.tau.get_or_insert(d.tau);
                l.window.get_or_insert(d.window);
                fan_in = l.width;
            }
        }
        self
    }

    pub fn load_data(&self) -> Result<TaskData> {
        match &self.data {
            DataConfig::Xor2 => gen_synthetic(SyntheticTask::Xor2, 0, 0),
            DataConfig::Parity { n } => gen_synthetic(SyntheticTask::Parity { n: *n }, 0, 0),
            DataConfig::Teacher {
                inputs,
                classes,
                train_size,
                test_size,
                seed,
            } => gen_synthetic(
                SyntheticTask::Teacher {
                    inputs: *inputs,
                    classes: *classes,
                    seed: seed.unwrap_or(self.seed),
                },
                *train_size,
                *test_size,
            ),
            DataConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                threshold,
            } => {
                let mut train = load_idx(train_images, train_labels, *threshold)?;
                let mut test = load_idx(test_images, test_labels, *threshold)?;
                let classes = train.classes.max(test.classes);
                train.classes = classes;
                test.classes = classes;
                train.split = crate::data::Split::Train;
                test.split = crate::data::Split::Test;
                Ok(TaskData { train, test })
            }
        }
    }

    pub fn build_model(&self, data: &TaskData) -> Result<Model> {
        Model::new(data.train.features(), data.train.classes, &self.model.layers, self.seed)
    }

    pub fn build_optimizer(&self) -> Result<OptimizerState> {
        let eta = self.optimizer.eta.unwrap_or(OptimizerState::default_eta(self.train.batch_size));
        OptimizerState::new(eta, self.optimizer.schedule)
            .and_then(|o| o.with_flip_threshold(self.optimizer.flip_threshold))
            .map_err(|e| Error::Config(e.to_string()))
    }
}
