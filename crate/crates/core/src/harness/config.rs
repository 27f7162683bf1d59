use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::diagnostics::{EvalGrid, PatchPartition};
use crate::error::{Error, Result};
use crate::model::{Backbone, HeadMode, Variant};
use crate::physics::{LossWeights, PhysicalConstants, ResamplePolicy};
use crate::training::{TrainConfig, TRAIN_CHUNK};

/// A run description. Only `model.backbone` and `train.iterations` are required.
///
/// ```json
/// { "model": { "backbone": "LSTM_LNN_PINN" }, "train": { "iterations": 5000, "lr": 8e-4 } }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub problem: PhysicalConstants,
    pub model: ModelSection,
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: Variant,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default)]
    pub head: HeadMode,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_depth() -> usize {
    2
}

fn default_width() -> usize {
    64
}

fn default_activation() -> Activation {
    Activation::Tanh
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    /// Defaults to the backbone's reference learning rate.
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default = "one")]
    pub sample_seed: u64,
    #[serde(default = "default_n_int")]
    pub n_int: usize,
    #[serde(default = "default_n_bnd")]
    pub n_bnd: usize,
    #[serde(default)]
    pub resample: ResamplePolicy,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default = "one_usize")]
    pub history_every: usize,
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default = "default_chunk")]
    pub chunk: usize,
    #[serde(default)]
    pub threads: usize,
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn default_n_int() -> usize {
    4096
}

fn default_n_bnd() -> usize {
    512
}

fn default_chunk() -> usize {
    TRAIN_CHUNK
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub resolution: usize,
    pub ring: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            resolution: EvalGrid::DEFAULT_RESOLUTION,
            ring: EvalGrid::DEFAULT_RING,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub patch_side: f64,
    /// Smoothing bandwidth; half the patch diameter when absent.
    pub bandwidth: Option<f64>,
    pub alpha: [f64; 3],
    pub beta_g: f64,
    /// Accepted range of energy-to-indicator ratios.
    pub interval: [f64; 2],
    pub bound_samples: usize,
    pub bound_seed: u64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            patch_side: PatchPartition::DEFAULT_SIDE,
            bandwidth: None,
            alpha: [1.0; 3],
            beta_g: 1.0,
            interval: [1e-2, 1e2],
            bound_samples: 256,
            bound_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Minimal configuration for `backbone` with every default filled in.
    pub fn new(backbone: Variant, iterations: usize) -> Self {
        serde_json::from_value(serde_json::json!({
            "model": { "backbone": backbone },
            "train": { "iterations": iterations }
        }))
        .expect("minimal config")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, returning it with its verbatim text.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = RunConfig::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, text))
    }

    pub fn backbone(&self) -> Backbone {
        Backbone::new(self.model.backbone)
            .with_size(self.model.depth, self.model.width)
            .with_head(self.model.head)
            .with_activation(self.model.activation)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            backbone: self.backbone(),
            lr: t.lr.unwrap_or_else(|| self.model.backbone.reference_lr()),
            iterations: t.iterations,
            init_seed: t.init_seed,
            sample_seed: t.sample_seed,
            n_int: t.n_int,
            n_bnd: t.n_bnd,
            resample: t.resample,
            weights: t.weights,
            checkpoint_every: t.checkpoint_every,
            history_every: t.history_every,
            clip: t.clip,
            chunk: t.chunk,
            threads: t.threads,
        }
    }

    pub fn grid(&self) -> Result<EvalGrid> {
        EvalGrid::new(self.eval.resolution, self.eval.ring)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.train_config().validate()?;
        self.grid().map_err(|e| Error::Config(e.to_string()))?;
        let d = &self.diagnostics;
        if !(d.patch_side > 0.0 && d.patch_side <= 2.0) {
            return Err(Error::Config(format!("diagnostics.patch_side {} outside (0, 2]", d.patch_side)));
        }
        if !(d.interval[0] > 0.0 && d.interval[0] <= d.interval[1]) {
            return Err(Error::Config(format!("diagnostics.interval {:?} is not an ordered positive range", d.interval)));
        }
        if d.bound_samples < crate::diagnostics::MIN_SAMPLES {
            return Err(Error::Config(format!(
                "diagnostics.bound_samples must be at least {}",
                crate::diagnostics::MIN_SAMPLES
            )));
        }
        if d.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || !(d.beta_g > 0.0) {
            return Err(Error::Config("diagnostics.alpha and beta_g must be nonnegative and finite".into()));
        }
        Ok(())
    }
}

/// Learning-rate sweep over one or more backbones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub backbones: Vec<Variant>,
    #[serde(default = "default_lrs")]
    pub lr: Vec<f64>,
    pub iterations: usize,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default = "one")]
    pub sample_seed: u64,
    #[serde(default = "default_n_int")]
    pub n_int: usize,
    #[serde(default = "default_n_bnd")]
    pub n_bnd: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default)]
    pub problem: PhysicalConstants,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub threads: usize,
}

/// `1e-4, 2e-4, …, 1e-3`.
pub fn default_lrs() -> Vec<f64> {
    (1..=10).map(|k| k as f64 * 1e-4).collect()
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec = SweepSpec::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((spec, text))
    }

    pub fn validate(&self) -> Result<()> {
        if self.backbones.is_empty() {
            return Err(Error::Config("sweep needs at least one backbone".into()));
        }
        if self.lr.is_empty() || self.lr.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Config("sweep learning rates must be positive".into()));
        }
        if self.lr.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sweep learning rates must be strictly increasing".into()));
        }
        for r in self.runs() {
            r.validate()?;
        }
        Ok(())
    }

    /// One run configuration per `(backbone, lr)` pair, backbone-major.
    pub fn runs(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &b in &self.backbones {
            for &lr in &self.lr {
                let mut c = RunConfig::new(b, self.iterations);
                c.problem = self.problem;
                c.model.depth = self.depth;
                c.model.width = self.width;
                c.train.lr = Some(lr);
                c.train.init_seed = self.init_seed;
                c.train.sample_seed = self.sample_seed;
                c.train.n_int = self.n_int;
                c.train.n_bnd = self.n_bnd;
                c.train.threads = self.threads;
                c.eval = self.eval.clone();
                out.push(c);
            }
        }
        out
    }
}
