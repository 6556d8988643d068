//! Websocket wire format.
//!
//! Text frames are JSON objects tagged by `"type"`. Binary frames carry
//! audio: `u32` LE sequence number, `u32` LE sample count, then that many
//! `f32` LE mono samples. Shapes travel as base64 of the 512-byte packed
//! grid (row-major, LSB-first, bottom row first).

use anyhow::{bail, Context, Result};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use neures_core::engine::{ControlMessage, TextureSpec};
use neures_core::excitation::{ScrapeState, DEFAULT_SCRAPER_MASS};
use neures_core::material::MaterialParams;
use neures_core::modal::shape::PACKED_LEN;
use neures_core::modal::ShapeGrid;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;
pub const AUDIO_HEADER_LEN: usize = 8;

/// Published JSON schema for every text frame.
pub const SCHEMA: &str = include_str!("../../../protocol/schema.json");

fn default_mass() -> f64 {
    DEFAULT_SCRAPER_MASS
}

fn one() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    6.0
}

fn half() -> f64 {
    0.5
}

fn default_texture_size() -> usize {
    128
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    Fractal,
    Flat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Frame {
    /// Server: sent first on connect and then periodically. Client: may
    /// announce its protocol version; a mismatch closes the session.
    Status {
        version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_rate: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        block_size: Option<usize>,
        /// Audio frames discarded because the client fell behind.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dropped_frames: Option<u64>,
    },
    Shape {
        data: String,
    },
    Material {
        density: f64,
        youngs_modulus: f64,
        poisson_ratio: f64,
        alpha: f64,
        beta: f64,
    },
    Hit {
        x: f64,
        y: f64,
        #[serde(default = "default_beta")]
        beta_k: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Position at client time `t` (seconds); the server differentiates.
    Scrape {
        x: f64,
        y: f64,
        t: f64,
        #[serde(default = "default_mass")]
        mass: f64,
        #[serde(default = "one")]
        mix_v: f64,
        #[serde(default = "one")]
        mix_h: f64,
    },
    Texture {
        kind: TextureKind,
        #[serde(default = "half")]
        roughness: f64,
        #[serde(default = "default_texture_size")]
        size: usize,
        #[serde(default)]
        seed: u64,
    },
    ImpulseCustom {
        samples: Vec<f64>,
    },
    Error {
        code: String,
        message: String,
    },
}

impl Frame {
    /// Parses and checks everything the schema checks, including the shape
    /// payload length.
    pub fn parse(text: &str) -> Result<Frame> {
        let frame: Frame = serde_json::from_str(text).context("malformed frame")?;
        if let Frame::Shape { data } = &frame {
            let bytes = B64.decode(data).context("shape data is not base64")?;
            if bytes.len() != PACKED_LEN {
                bail!(
                    "shape data decodes to {} bytes, expected {PACKED_LEN}",
                    bytes.len()
                );
            }
        }
        Ok(frame)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }

    pub fn status(sample_rate: f64, block_size: usize, dropped_frames: u64) -> Frame {
        Frame::Status {
            version: PROTOCOL_VERSION,
            sample_rate: Some(sample_rate),
            block_size: Some(block_size),
            dropped_frames: Some(dropped_frames),
        }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Frame {
        Frame::Error {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn shape(grid: &ShapeGrid) -> Frame {
        Frame::Shape {
            data: B64.encode(grid.to_bytes()),
        }
    }

    pub fn material(m: &MaterialParams) -> Frame {
        Frame::Material {
            density: m.density,
            youngs_modulus: m.youngs_modulus,
            poisson_ratio: m.poisson_ratio,
            alpha: m.alpha,
            beta: m.beta,
        }
    }

    /// The engine message for a client frame; `None` for frames that carry
    /// no control (status, error).
    pub fn to_control(&self) -> Result<Option<ControlMessage>> {
        Ok(Some(match self {
            Frame::Status { .. } | Frame::Error { .. } => return Ok(None),
            Frame::Shape { data } => {
                let bytes = B64.decode(data).context("shape data is not base64")?;
                ControlMessage::SetShape(ShapeGrid::from_bytes(&bytes)?)
            }
            Frame::Material {
                density,
                youngs_modulus,
                poisson_ratio,
                alpha,
                beta,
            } => ControlMessage::SetMaterial(MaterialParams {
                density: *density,
                youngs_modulus: *youngs_modulus,
                poisson_ratio: *poisson_ratio,
                alpha: *alpha,
                beta: *beta,
            }),
            Frame::Hit {
                x,
                y,
                beta_k,
                amplitude,
            } => ControlMessage::Hit {
                x: *x,
                y: *y,
                beta_k: *beta_k,
                amplitude: *amplitude,
            },
            Frame::Scrape {
                x,
                y,
                t,
                mass,
                mix_v,
                mix_h,
            } => ControlMessage::Scrape(ScrapeState {
                time: *t,
                pos: [*x, *y],
                mass: *mass,
                mix_v: *mix_v,
                mix_h: *mix_h,
            }),
            Frame::Texture {
                kind,
                roughness,
                size,
                seed,
            } => ControlMessage::SetTexture(match kind {
                TextureKind::Fractal => TextureSpec::Fractal {
                    roughness: *roughness,
                    size: *size,
                    seed: *seed,
                },
                TextureKind::Flat => TextureSpec::Flat { size: *size },
            }),
            Frame::ImpulseCustom { samples } => ControlMessage::SetCustomImpulse(samples.clone()),
        }))
    }
}

pub fn encode_audio(seq: u32, samples: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(AUDIO_HEADER_LEN + 4 * samples.len());
    out.extend_from_slice(&seq.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_audio(data: &[u8]) -> Result<(u32, Vec<f32>)> {
    if data.len() < AUDIO_HEADER_LEN {
        bail!("audio frame of {} bytes has no header", data.len());
    }
    let seq = u32::from_le_bytes(data[0..4].try_into().unwrap());
    let n = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let body = &data[AUDIO_HEADER_LEN..];
    if body.len() != 4 * n {
        bail!(
            "audio frame declares {n} samples but carries {} bytes",
            body.len()
        );
    }
    let samples = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((seq, samples))
}
