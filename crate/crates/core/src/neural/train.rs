//! Adam training of a [`Model`] against modal target responses.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neural::{condition_vector, grid_image, round_f32, Model, ShapeLatent};
use crate::resonator::{loss_gradient, sigmoid, FrequencyGrid, MagnitudeResponse, RawCoefficients};

/// Learning-rate shape over the configured number of steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from `learning_rate` down to zero at `steps`.
    #[default]
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            schedule: LrSchedule::default(),
            grad_clip: 3000.0,
            batch_size: 32,
            steps: 4000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Rate applied by the update that follows `step` completed ones.
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let progress = (step as f64 / self.steps.max(1) as f64).min(1.0);
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::Config(format!("gradient clip {}", self.grad_clip)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0)
        {
            return Err(Error::Config(
                "Adam moments need 0 <= beta < 1 and epsilon > 0".into(),
            ));
        }
        Ok(())
    }
}

/// First and second moment estimates, `f32`-representable like the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    /// Updates applied so far.
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

struct Sample {
    shape: usize,
    pos: [f64; 2],
    phi: [f64; 5],
    target: MagnitudeResponse,
}

/// Dataset prepared for training: shape images, conditions and targets.
pub struct TrainData {
    grid: FrequencyGrid,
    images: Vec<Vec<f64>>,
    samples: Vec<Sample>,
}

impl TrainData {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        if ds.examples.is_empty() {
            return Err(Error::InvalidParameter("empty dataset".into()));
        }
        let grid = ds.frequency_grid()?;
        let (shapes, ids) = ds.shape_table();
        let samples = ds
            .examples
            .iter()
            .zip(ids)
            .enumerate()
            .map(|(i, (e, shape))| Sample {
                shape,
                pos: e.position,
                phi: e.material.normalize(),
                target: ds.target(i, &grid),
            })
            .collect();
        Ok(TrainData {
            grid,
            images: shapes.iter().map(grid_image).collect(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
}

/// Batch for a step: uniform draws with replacement from a ChaCha stream
/// keyed by `(seed, step)`, so any step can be replayed independently.
pub fn batch_indices(seed: u64, step: u64, n: usize, batch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}

fn check_raw(model: &Model, raw: Vec<f64>) -> Result<RawCoefficients> {
    RawCoefficients::new(raw, model.config().branches, model.config().depth)
}

/// Mean loss over `indices` and its gradient with respect to every parameter.
/// The encoder runs once per distinct shape in the batch.
pub fn loss_and_gradient(
    model: &Model,
    data: &TrainData,
    indices: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.param_count()];
    let mut by_shape: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        by_shape.entry(data.samples[i].shape).or_default().push(i);
    }
    let scale = 1.0 / indices.len() as f64;
    let latent_dim = model.config().latent_dim;
    let mut total = 0.0;
    for (shape, members) in by_shape {
        let (v, enc_cache) = model.encoder_forward(&data.images[shape]);
        let latent = ShapeLatent { v };
        let mut dlatent = vec![0.0; latent_dim];
        for i in members {
            let s = &data.samples[i];
            let cond = condition_vector(&latent, s.pos, &s.phi);
            let (raw, cache) = model.head_forward(&cond);
            let raw = check_raw(model, raw)?;
            let lg = loss_gradient(&raw, &s.target, &data.grid)?;
            total += lg.loss;
            let draw: Vec<f64> = lg.grad.iter().map(|g| g * scale).collect();
            let dcond = model.head_backward(&cache, &draw, &mut grad);
            for ((d, g), v) in dlatent.iter_mut().zip(&dcond).zip(&latent.v) {
                let s = sigmoid(*v);
                *d += g * s * (1.0 - s);
            }
        }
        model.encoder_backward(&enc_cache, &dlatent, &mut grad);
    }
    Ok((total * scale, grad))
}

/// Spectral loss of every example.
pub fn evaluate(model: &Model, data: &TrainData) -> Result<Vec<f64>> {
    let latents: Vec<ShapeLatent> = data
        .images
        .iter()
        .map(|img| ShapeLatent {
            v: model.encoder_forward(img).0,
        })
        .collect();
    data.samples
        .iter()
        .map(|s| {
            let (raw, _) = model.head_forward(&condition_vector(&latents[s.shape], s.pos, &s.phi));
            let raw = check_raw(model, raw)?;
            let bank = crate::resonator::map_raw_to_bank(&raw, data.grid.sample_rate())?;
            crate::resonator::spectral_loss(
                &crate::resonator::frequency_response(&bank, &data.grid)?,
                &s.target,
            )
        })
        .collect()
}

pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub adam: AdamState,
    /// Batch loss before each update.
    pub curve: Vec<f64>,
    /// Gradient norm of the latest update, before clipping.
    pub grad_norm: f64,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(model.param_count());
        Ok(Trainer {
            model,
            config,
            adam,
            curve: Vec::new(),
            grad_norm: 0.0,
        })
    }

    /// Continues from saved optimizer state.
    pub fn resume(model: Model, config: TrainConfig, adam: AdamState) -> Result<Self> {
        config.validate()?;
        if adam.m.len() != model.param_count() || adam.v.len() != model.param_count() {
            return Err(Error::Dimension(
                "optimizer state does not match the model".into(),
            ));
        }
        Ok(Trainer {
            model,
            config,
            adam,
            curve: Vec::new(),
            grad_norm: 0.0,
        })
    }

    /// One Adam update; returns the batch loss measured before it.
    pub fn step(&mut self, data: &TrainData) -> Result<f64> {
        let step = self.adam.step;
        let idx = batch_indices(self.config.seed, step, data.len(), self.config.batch_size);
        let (loss, mut grad) = loss_and_gradient(&self.model, data, &idx)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step: step as usize,
                loss,
            });
        }
        let c = &self.config;
        self.grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if c.grad_clip > 0.0 && self.grad_norm > c.grad_clip {
            let k = c.grad_clip / self.grad_norm;
            grad.iter_mut().for_each(|g| *g *= k);
        }
        let t = (step + 1) as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let lr = c.learning_rate_at(step);
        let params = self.model.params_mut();
        for (i, g) in grad.iter().enumerate() {
            let m = round_f32(c.beta1 * self.adam.m[i] + (1.0 - c.beta1) * g);
            let v = round_f32(c.beta2 * self.adam.v[i] + (1.0 - c.beta2) * g * g);
            self.adam.m[i] = m;
            self.adam.v[i] = v;
            let update = lr * (m / bc1) / ((v / bc2).sqrt() + c.epsilon);
            params[i] = round_f32(params[i] - update);
        }
        self.adam.step += 1;
        self.curve.push(loss);
        Ok(loss)
    }

    /// Runs until `config.steps` updates have been applied in total.
    pub fn run(&mut self, data: &TrainData, progress: impl FnMut(u64, f64)) -> Result<()> {
        self.run_until(data, self.config.steps, progress)
    }

    /// Like [`Trainer::run`] but stops after `total` updates (capped at
    /// `config.steps`); the schedule still spans `config.steps`, so a run
    /// split this way and resumed matches an uninterrupted one.
    pub fn run_until(
        &mut self,
        data: &TrainData,
        total: usize,
        mut progress: impl FnMut(u64, f64),
    ) -> Result<()> {
        while (self.adam.step as usize) < total.min(self.config.steps) {
            let loss = self.step(data)?;
            progress(self.adam.step, loss);
        }
        Ok(())
    }
}

/// Trains from scratch; returns the final model and its loss curve.
pub fn train(model: Model, data: &TrainData, config: TrainConfig) -> Result<(Model, Vec<f64>)> {
    let mut t = Trainer::new(model, config)?;
    t.run(data, |_, _| {})?;
    Ok((t.model, t.curve))
}
