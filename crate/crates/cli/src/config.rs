//! TOML run configuration: data source, model, training and evaluation
//! sections plus a single mandatory seed.

use std::path::{Path, PathBuf};

use mtpp_core::models::balanced_spec;
use mtpp_core::{
    load_dataset, simulate_hawkes, Dataset, DecoderFamily, EvalConfig, HawkesConfig, ModelSpec,
    MonotoneActivation, Setting, SplitSpec, TrainConfig, Widths,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Multivariate Hawkes generator used when no data file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub mu: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub horizon: f64,
    pub sequences: usize,
}

impl SynthConfig {
    pub fn hawkes(&self) -> CliResult<HawkesConfig> {
        Ok(HawkesConfig::new(
            self.mu.clone(),
            self.alpha.clone(),
            self.beta.clone(),
            self.horizon,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitShares {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitShares {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Sequence file; mutually exclusive with `synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_marks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub split: SplitShares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: DecoderFamily,
    pub setting: Setting,
    /// Filled from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_marks: Option<usize>,
    #[serde(default)]
    pub widths: Widths,
    #[serde(default)]
    pub activation: MonotoneActivation,
    /// Resize the hidden width so the parameter count matches this setting
    /// of the same family with the configured widths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_with: Option<Setting>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Drives data synthesis, the split, initialization, batching, Monte
    /// Carlo quadrature and PIT randomization.
    pub seed: u64,
    /// Output directory; `--out` takes precedence. Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Evaluate on the test split after training.
    #[serde(default = "yes")]
    pub evaluate: bool,
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads a config file; a relative data path is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(CliError::io(format!("reading {}", path.display())))?;
        let mut cfg = Self::parse(&text, path)?;
        if let Some(p) = &cfg.data.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        setting: Option<Setting>,
        family: Option<DecoderFamily>,
    ) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(s) = setting {
            self.model.setting = s;
        }
        if let Some(f) = family {
            self.model.family = f;
        }
    }

    /// Copies the run seed into every seeded subsection.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.train.quadrature.seed = self.seed;
        self.eval.seed = self.seed;
        self.eval.quadrature.seed = self.seed;
    }

    pub fn validate(&self) -> CliResult<()> {
        let err = |m: &str| CliError::Config {
            path: PathBuf::from("<config>"),
            message: m.to_string(),
        };
        match (&self.data.path, &self.data.synth) {
            (Some(_), Some(_)) => {
                return Err(err("data.path and data.synth are mutually exclusive"))
            }
            (None, None) => return Err(err("one of data.path or data.synth is required")),
            _ => {}
        }
        self.train.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        let s = self.data.split;
        SplitSpec {
            train: s.train,
            val: s.val,
            test: s.test,
            seed: self.seed,
        }
    }

    /// Loads the data file or simulates the configured Hawkes process.
    pub fn load_data(&self) -> CliResult<Dataset> {
        self.validate()?;
        if let Some(path) = &self.data.path {
            return Ok(load_dataset(path, self.data.num_marks)?);
        }
        let synth = self.data.synth.as_ref().expect("validated");
        Ok(simulate_hawkes(
            &synth.hawkes()?,
            synth.sequences,
            self.seed,
        )?)
    }

    /// Model spec for `num_marks` marks, after optional budget balancing.
    pub fn model_spec(&self, num_marks: usize) -> CliResult<ModelSpec> {
        let m = &self.model;
        let mut spec = ModelSpec::new(m.family, m.setting, m.num_marks.unwrap_or(num_marks))
            .with_widths(m.widths);
        spec.activation = m.activation;
        spec.validate()?;
        if let Some(reference) = m.balance_with {
            let target = ModelSpec {
                setting: reference,
                ..spec
            };
            let (enc, dec) = mtpp_core::models::param_budget(&target)?;
            spec = balanced_spec(&spec, enc + dec)?;
        }
        Ok(spec)
    }

    /// Freezes a model spec into the config so a run directory can rebuild it.
    pub fn pin_model(&mut self, spec: &ModelSpec) {
        self.model.family = spec.family;
        self.model.setting = spec.setting;
        self.model.num_marks = Some(spec.num_marks);
        self.model.widths = spec.widths;
        self.model.activation = spec.activation;
        self.model.balance_with = None;
    }

    /// Canonical TOML without the output directory.
    pub fn to_toml(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        toml::to_string(&c).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_toml`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Comment line carried by every output CSV.
    pub fn comment(&self) -> String {
        format!("mtpp {} config={}", env!("CARGO_PKG_VERSION"), self.hash())
    }
}
