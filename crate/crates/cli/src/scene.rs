//! Offline scenes: a JSON list of hits, scrape gestures and parameter
//! schedules rendered deterministically through the engine.

use std::path::Path;

use anyhow::{bail, Context, Result};
use neures_core::engine::{engine, ControlMessage, EngineConfig, ModulationSchedule, TextureSpec};
use neures_core::excitation::{ScrapeState, DEFAULT_SCRAPER_MASS};
use neures_core::material::MaterialParams;
use neures_core::modal::ShapeGrid;
use neures_core::neural::Model;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

fn one() -> f64 {
    1.0
}

fn six() -> f64 {
    6.0
}

fn default_mass() -> f64 {
    DEFAULT_SCRAPER_MASS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneEvent {
    Hit {
        time: f64,
        x: f64,
        y: f64,
        #[serde(default = "six")]
        beta_k: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `[time, x, y]` points at control rate or slower.
    Scrape {
        points: Vec<[f64; 3]>,
        #[serde(default = "default_mass")]
        mass: f64,
        #[serde(default = "one")]
        mix_v: f64,
        #[serde(default = "one")]
        mix_h: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    /// Seconds.
    pub duration: f64,
    /// PGM outline, relative to the scene file; the full square if absent.
    #[serde(default)]
    pub shape: Option<String>,
    #[serde(default)]
    pub material: Option<MaterialParams>,
    #[serde(default)]
    pub texture: Option<TextureSpec>,
    /// Drawn impulse used instead of the Kaiser window for hits.
    #[serde(default)]
    pub impulse: Option<Vec<f64>>,
    /// Parameter tracks applied every control tick; x/y tracks override the
    /// event positions.
    #[serde(default)]
    pub schedule: ModulationSchedule,
    #[serde(default)]
    pub events: Vec<SceneEvent>,
}

impl Scene {
    pub fn load(path: &Path) -> Result<(Scene, ShapeGrid)> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let scene: Scene = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("scene {}: {e}", path.display())))?;
        let shape = match &scene.shape {
            None => ShapeGrid::full(),
            Some(p) => {
                let full = path.parent().unwrap_or(Path::new(".")).join(p);
                ShapeGrid::read_pgm(&full).map_err(|e| ConfigError(format!("scene shape: {e}")))?
            }
        };
        Ok((scene, shape))
    }

    fn timeline(&self) -> Vec<(f64, ControlMessage)> {
        let mut out = Vec::new();
        for ev in &self.events {
            match ev {
                SceneEvent::Hit {
                    time,
                    x,
                    y,
                    beta_k,
                    amplitude,
                } => out.push((
                    *time,
                    ControlMessage::Hit {
                        x: *x,
                        y: *y,
                        beta_k: *beta_k,
                        amplitude: *amplitude,
                    },
                )),
                SceneEvent::Scrape {
                    points,
                    mass,
                    mix_v,
                    mix_h,
                } => {
                    for p in points {
                        out.push((
                            p[0],
                            ControlMessage::Scrape(ScrapeState {
                                time: p[0],
                                pos: [p[1], p[2]],
                                mass: *mass,
                                mix_v: *mix_v,
                                mix_h: *mix_h,
                            }),
                        ));
                    }
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

/// Renders a scene; fails on any non-finite output sample.
pub fn render_scene(
    model: &Model,
    config: &EngineConfig,
    scene: &Scene,
    shape: &ShapeGrid,
    base: MaterialParams,
) -> Result<Vec<f64>> {
    if !(scene.duration > 0.0 && scene.duration.is_finite()) {
        bail!(ConfigError(format!("scene duration {}", scene.duration)));
    }
    scene
        .schedule
        .validate()
        .map_err(|e| ConfigError(format!("scene schedule: {e}")))?;
    let material = scene.material.unwrap_or(base);
    let (mut ctl, mut rend) = engine(Some(model.clone()), config.clone())?;
    ctl.control_step(ControlMessage::SetShape(shape.clone()))?;
    ctl.control_step(ControlMessage::SetMaterial(material))?;
    if let Some(t) = &scene.texture {
        ctl.control_step(ControlMessage::SetTexture(t.clone()))?;
    }
    if let Some(s) = &scene.impulse {
        ctl.control_step(ControlMessage::SetCustomImpulse(s.clone()))?;
    }
    let timeline = scene.timeline();
    let mut next = 0;
    let total = (scene.duration * config.sample_rate).round() as u64;
    let mut audio = vec![0.0; total as usize];
    let mut tick = 0u64;
    while config.tick_start(tick) < total {
        let t_end = (tick + 1) as f64 / config.control_rate;
        while next < timeline.len() && timeline[next].0 < t_end {
            ctl.control_step(timeline[next].1.clone())?;
            next += 1;
        }
        if !scene.schedule.tracks.is_empty() {
            let (m, p) = scene.schedule.evaluate(
                tick as f64 / config.control_rate,
                material,
                ctl.position(),
            );
            ctl.update(m, p)?;
        }
        let s0 = config.tick_start(tick) as usize;
        let s1 = config.tick_start(tick + 1).min(total) as usize;
        rend.render(&mut audio[s0..s1]);
        tick += 1;
    }
    if let Some(i) = audio.iter().position(|v| !v.is_finite()) {
        bail!("non-finite output at sample {i}");
    }
    Ok(audio)
}
