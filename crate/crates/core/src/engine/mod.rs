//! Real-time synthesis: a control context that turns events into filter
//! coefficients and excitation, and an allocation-free audio context that
//! renders them.
//!
//! The two sides talk through a latest-wins triple buffer holding whole
//! [`FilterBank`](crate::resonator::FilterBank) values and a bounded SPSC
//! queue of fixed-size excitation chunks.

mod audio;
mod control;
mod offline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::{ScrapeState, SurfaceTexture};
use crate::material::MaterialParams;
use crate::modal::ShapeGrid;
use crate::resonator::DEFAULT_SAMPLE_RATE;

pub use audio::Renderer;
pub use control::{ControlOutcome, Controller};
pub use offline::{
    render_offline, sweep_position, CoefficientRow, ModulationSchedule, OfflineRender,
    ScheduleParam, SweepAxis, SweepRow, SweepSpec, SweepTable,
};

/// Samples per excitation chunk sent to the audio context.
pub const CHUNK_LEN: usize = 64;
/// Excitation chunks the queue can hold.
pub const QUEUE_CHUNKS: usize = 1024;
/// Length of the audio-side excitation accumulator, samples.
pub const ACCUMULATOR_LEN: usize = 1 << 15;
/// Gap after which a scrape starts a new stroke instead of continuing.
pub const SCRAPE_GAP: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub sample_rate: f64,
    pub block_size: usize,
    pub control_rate: f64,
    pub branches: usize,
    pub depth: usize,
    /// Blocks over which the output is crossfaded after a coefficient swap;
    /// 0 swaps hard.
    pub crossfade_blocks: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            sample_rate: DEFAULT_SAMPLE_RATE,
            block_size: 256,
            control_rate: 1000.0,
            branches: 32,
            depth: 1,
            crossfade_blocks: 1,
        }
    }
}

impl EngineConfig {
    /// The control rate may not exceed the sample rate; it need not divide it
    /// (ticks are placed at `floor(k * sr / rate)`).
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Config(format!("sample rate {}", self.sample_rate)));
        }
        if self.block_size == 0 || self.block_size > ACCUMULATOR_LEN / 4 {
            return Err(Error::Config(format!("block size {}", self.block_size)));
        }
        if !(self.control_rate > 0.0 && self.control_rate <= self.sample_rate) {
            return Err(Error::Config(format!("control rate {}", self.control_rate)));
        }
        if self.branches == 0 || self.depth == 0 {
            return Err(Error::Config("branches and depth must be positive".into()));
        }
        Ok(())
    }

    pub fn crossfade_len(&self) -> usize {
        self.crossfade_blocks * self.block_size
    }

    /// First sample of control tick `k`.
    pub fn tick_start(&self, k: u64) -> u64 {
        (k as f64 * self.sample_rate / self.control_rate).floor() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureSpec {
    Flat {
        size: usize,
    },
    Fractal {
        roughness: f64,
        size: usize,
        seed: u64,
    },
}

impl TextureSpec {
    pub fn build(&self) -> Result<SurfaceTexture> {
        match *self {
            TextureSpec::Flat { size } => SurfaceTexture::flat(size),
            TextureSpec::Fractal {
                roughness,
                size,
                seed,
            } => crate::excitation::fractal_texture(roughness, size, seed),
        }
    }
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec::Fractal {
            roughness: 0.5,
            size: 128,
            seed: 0,
        }
    }
}

/// Events from the interface. Positions outside `[0, 1]^2` are accepted.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlMessage {
    SetShape(ShapeGrid),
    SetMaterial(MaterialParams),
    Hit {
        x: f64,
        y: f64,
        beta_k: f64,
        amplitude: f64,
    },
    Scrape(ScrapeState),
    SetTexture(TextureSpec),
    /// A texture that was already built, e.g. from an image.
    SetTextureData(SurfaceTexture),
    SetCustomImpulse(Vec<f64>),
}

/// Fixed-size excitation payload; plain data so the audio side never frees.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Chunk {
    pub stream: Stream,
    /// Start a new event at the audio side's current read position.
    pub restart: bool,
    pub len: usize,
    pub data: [f64; CHUNK_LEN],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Stream {
    Impulse = 0,
    Scrape = 1,
}

/// Connects a controller and a renderer.
pub fn engine(
    model: Option<crate::neural::Model>,
    config: EngineConfig,
) -> Result<(Controller, Renderer)> {
    config.validate()?;
    if let Some(m) = &model {
        check_model(m, &config)?;
    }
    let silent = crate::resonator::BiquadSection {
        g: 0.0,
        ..crate::resonator::BiquadSection::IDENTITY
    };
    let initial = crate::resonator::FilterBank::new(
        config.branches,
        config.depth,
        vec![silent; config.branches * config.depth],
        config.sample_rate,
    )?;
    let (bank_in, bank_out) = triple_buffer::triple_buffer(&initial);
    let (tx, rx) = rtrb::RingBuffer::new(QUEUE_CHUNKS);
    let renderer = Renderer::new(&config, initial, bank_out, rx);
    let controller = Controller::new(model, config, bank_in, tx)?;
    Ok((controller, renderer))
}

pub(crate) fn check_model(model: &crate::neural::Model, config: &EngineConfig) -> Result<()> {
    let mc = model.config();
    if mc.branches != config.branches || mc.depth != config.depth {
        return Err(Error::Config(format!(
            "model predicts L={}, M={} but the engine is configured for L={}, M={}",
            mc.branches, mc.depth, config.branches, config.depth
        )));
    }
    if mc.sample_rate != config.sample_rate {
        return Err(Error::Config(format!(
            "model sample rate {} differs from engine sample rate {}",
            mc.sample_rate, config.sample_rate
        )));
    }
    Ok(())
}
