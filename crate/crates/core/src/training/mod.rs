//! Full-batch Adam training of the composite residual objective.

mod adam;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Backbone, ModelParams, Variant};
use crate::physics::{batch_loss, batches, reduce, CollocationSet, LossParts, LossWeights, NonDimScheme, ResamplePolicy};

pub use adam::{adam_step, AdamState};

/// Rows per tape when differentiating the objective.
pub const TRAIN_CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub backbone: Backbone,
    pub lr: f64,
    pub iterations: usize,
    pub init_seed: u64,
    pub sample_seed: u64,
    pub n_int: usize,
    pub n_bnd: usize,
    pub resample: ResamplePolicy,
    pub weights: LossWeights,
    /// Save a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub history_every: usize,
    /// Optional max-norm gradient clip.
    pub clip: Option<f64>,
    pub chunk: usize,
    /// Worker threads for batch evaluation; 0 runs everything on the caller's thread.
    pub threads: usize,
}

impl TrainConfig {
    pub fn new(variant: Variant) -> Self {
        TrainConfig {
            backbone: Backbone::new(variant),
            lr: variant.reference_lr(),
            iterations: 50_000,
            init_seed: 0,
            sample_seed: 1,
            n_int: 4096,
            n_bnd: 512,
            resample: ResamplePolicy::Fixed,
            weights: LossWeights::default(),
            checkpoint_every: 0,
            history_every: 1,
            clip: None,
            chunk: TRAIN_CHUNK,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.n_int == 0 || self.n_bnd == 0 {
            return Err(Error::Config("collocation counts must be at least 1".into()));
        }
        if self.history_every == 0 {
            return Err(Error::Config("history_every must be at least 1".into()));
        }
        if self.backbone.depth == 0 || self.backbone.width == 0 {
            return Err(Error::Config("backbone depth and width must be at least 1".into()));
        }
        if let Some(c) = self.clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("clip must be positive, got {c}")));
            }
        }
        self.weights.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub loss_total: f64,
    pub loss_pde: f64,
    pub loss_bc: f64,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub records: Vec<HistoryRecord>,
}

impl LossHistory {
    /// Standard deviation of `log10(loss_total)` over the last `fraction` of records.
    pub fn tail_log10_std(&self, fraction: f64) -> Option<f64> {
        let n = self.records.len();
        let take = ((n as f64 * fraction).round() as usize).min(n);
        if take < 2 {
            return None;
        }
        let logs: Vec<f64> = self.records[n - take..].iter().map(|r| r.loss_total.log10()).collect();
        let mean = logs.iter().sum::<f64>() / take as f64;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (take - 1) as f64;
        Some(var.sqrt())
    }
}

/// Everything needed to resume training bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub backbone: Backbone,
    pub seed: u64,
    pub iteration: usize,
    pub params: ModelParams,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Structural(format!("checkpoint encoding: {e}")))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if c.params.flat.len() != c.params.layout.total || c.adam.m.len() != c.params.flat.len() {
            return Err(Error::format(path, "parameter vector does not match its layout"));
        }
        if c.params.backbone != c.backbone {
            return Err(Error::format(path, "backbone tag does not match the stored parameters"));
        }
        Ok(c)
    }
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    pub history: LossHistory,
    pub checkpoints: Vec<Checkpoint>,
    pub seconds: f64,
}

/// Stateful optimisation loop; [`train`] drives it to completion.
pub struct Trainer {
    pub config: TrainConfig,
    pub scheme: NonDimScheme,
    pub params: ModelParams,
    pub adam: AdamState,
    pub set: CollocationSet,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(config: TrainConfig, scheme: NonDimScheme) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(config.backbone, config.init_seed);
        let adam = AdamState::new(params.len(), config.lr);
        Self::assemble(config, scheme, params, adam)
    }

    /// Continues from a checkpoint; the collocation set is rebuilt from the config seeds.
    pub fn resume(config: TrainConfig, scheme: NonDimScheme, checkpoint: Checkpoint) -> Result<Self> {
        config.validate()?;
        if checkpoint.backbone != config.backbone {
            return Err(Error::Config(format!(
                "checkpoint holds {:?}, config asks for {:?}",
                checkpoint.backbone, config.backbone
            )));
        }
        let mut adam = checkpoint.adam;
        adam.lr = config.lr;
        Self::assemble(config, scheme, checkpoint.params, adam)
    }

    fn assemble(config: TrainConfig, scheme: NonDimScheme, params: ModelParams, adam: AdamState) -> Result<Self> {
        let set = CollocationSet::new(config.n_int, config.n_bnd, config.sample_seed, config.resample);
        let pool = if config.threads > 0 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Trainer {
            config,
            scheme,
            params,
            adam,
            set,
            pool,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.adam.t as usize
    }

    /// Objective value and gradient at the current parameters.
    pub fn loss_and_grad(&self) -> Result<(LossParts, Vec<f64>)> {
        let work = batches(&self.set, self.config.chunk);
        let eval = |b: &crate::physics::Batch| {
            batch_loss(&self.params, b, &self.scheme, &self.config.weights, true).map(|(v, g)| (b.part, v, g))
        };
        let results: Result<Vec<_>> = match &self.pool {
            Some(pool) => pool.install(|| work.par_iter().map(eval).collect()),
            None => work.iter().map(eval).collect(),
        };
        let (parts, grad) = reduce(results?, self.params.len());
        let iteration = self.steps_done() + 1;
        for (name, v) in [("loss_pde", parts.pde), ("loss_bc", parts.bc)] {
            if !v.is_finite() {
                return Err(Error::TrainingAborted {
                    iteration,
                    reason: format!("{name} is {v}"),
                });
            }
        }
        let grad = grad.ok_or_else(|| Error::Structural("objective produced no gradient".into()))?;
        Ok((parts, grad))
    }

    /// One optimisation step; returns the loss measured before the update.
    pub fn step(&mut self) -> Result<LossParts> {
        self.set.refresh(self.steps_done());
        let (parts, mut grad) = self.loss_and_grad()?;
        if let Some(max) = self.config.clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max {
                let s = max / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        adam_step(&mut self.adam, &mut self.params.flat, &grad)?;
        Ok(parts)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            backbone: self.config.backbone,
            seed: self.config.init_seed,
            iteration: self.steps_done(),
            params: self.params.clone(),
            adam: self.adam.clone(),
        }
    }

    /// Runs until `config.iterations` steps have been taken in total.
    pub fn run(mut self) -> Result<TrainOutcome> {
        let start = Instant::now();
        let mut history = LossHistory::default();
        let mut checkpoints = Vec::new();
        while self.steps_done() < self.config.iterations {
            let parts = self.step()?;
            let it = self.steps_done();
            if it.is_multiple_of(self.config.history_every) || it == 1 {
                history.records.push(HistoryRecord {
                    iteration: it,
                    loss_total: parts.total,
                    loss_pde: parts.pde,
                    loss_bc: parts.bc,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
            if self.config.checkpoint_every > 0 && it.is_multiple_of(self.config.checkpoint_every) {
                checkpoints.push(self.checkpoint());
            }
        }
        Ok(TrainOutcome {
            params: self.params,
            adam: self.adam,
            history,
            checkpoints,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Trains a fresh model from `config`.
pub fn train(config: TrainConfig, scheme: NonDimScheme) -> Result<TrainOutcome> {
    Trainer::new(config, scheme)?.run()
}
