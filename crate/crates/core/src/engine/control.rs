use crate::error::{Error, Result};
use crate::excitation::{
    draw_impulse, force_at, kaiser_impulse, ImpulseSpec, ScrapeState, SurfaceTexture,
};
use crate::material::MaterialParams;
use crate::modal::ShapeGrid;
use crate::neural::{Model, ShapeLatent};
use crate::resonator::FilterBank;

use super::{
    check_model, Chunk, ControlMessage, EngineConfig, Stream, TextureSpec, CHUNK_LEN, SCRAPE_GAP,
};

/// What a control step did.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlOutcome {
    /// A new coefficient set went to the audio context.
    pub published: bool,
    /// The position lies outside the current shape.
    pub outside: bool,
    /// Excitation samples enqueued.
    pub excitation: usize,
}

struct Stroke {
    start: f64,
    last: ScrapeState,
}

/// Control context: owns the model, caches the shape latent, and feeds the
/// renderer. May allocate and block.
pub struct Controller {
    model: Option<Model>,
    config: EngineConfig,
    shape: ShapeGrid,
    latent: Option<ShapeLatent>,
    material: MaterialParams,
    position: [f64; 2],
    custom_impulse: Option<Vec<f64>>,
    impulse_len: usize,
    texture: SurfaceTexture,
    stroke: Option<Stroke>,
    bank: Option<FilterBank>,
    mailbox: triple_buffer::Input<FilterBank>,
    queue: rtrb::Producer<Chunk>,
    encode_calls: u64,
    predict_calls: u64,
    dropped: u64,
}

impl Controller {
    pub(crate) fn new(
        model: Option<Model>,
        config: EngineConfig,
        mailbox: triple_buffer::Input<FilterBank>,
        queue: rtrb::Producer<Chunk>,
    ) -> Result<Self> {
        let mut c = Controller {
            model: None,
            config,
            shape: ShapeGrid::full(),
            latent: None,
            material: MaterialParams::default(),
            position: [0.5, 0.5],
            custom_impulse: None,
            impulse_len: ImpulseSpec::default().length,
            texture: TextureSpec::default().build()?,
            stroke: None,
            bank: None,
            mailbox,
            queue,
            encode_calls: 0,
            predict_calls: 0,
            dropped: 0,
        };
        if let Some(m) = model {
            c.load_model(m)?;
        }
        Ok(c)
    }

    /// Installs weights and encodes the current shape.
    pub fn load_model(&mut self, model: Model) -> Result<()> {
        check_model(&model, &self.config)?;
        self.model = Some(model);
        self.encode()?;
        Ok(())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn model(&self) -> Option<&Model> {
        self.model.as_ref()
    }

    pub fn shape(&self) -> &ShapeGrid {
        &self.shape
    }

    pub fn latent(&self) -> Option<&ShapeLatent> {
        self.latent.as_ref()
    }

    pub fn material(&self) -> MaterialParams {
        self.material
    }

    pub fn position(&self) -> [f64; 2] {
        self.position
    }

    /// Last published coefficient set.
    pub fn bank(&self) -> Option<&FilterBank> {
        self.bank.as_ref()
    }

    pub fn encode_calls(&self) -> u64 {
        self.encode_calls
    }

    pub fn predict_calls(&self) -> u64 {
        self.predict_calls
    }

    /// Excitation chunks lost to a full queue.
    pub fn dropped_chunks(&self) -> u64 {
        self.dropped
    }

    pub fn control_step(&mut self, msg: ControlMessage) -> Result<ControlOutcome> {
        if self.model.is_none() {
            return Err(Error::NoModel);
        }
        match msg {
            ControlMessage::SetShape(grid) => {
                self.shape = grid;
                self.encode()?;
                self.predict()
            }
            ControlMessage::SetMaterial(mat) => {
                mat.validate()?;
                self.material = mat;
                self.predict()
            }
            ControlMessage::Hit {
                x,
                y,
                beta_k,
                amplitude,
            } => {
                let impulse = match &self.custom_impulse {
                    Some(s) => s.iter().map(|v| v * amplitude).collect(),
                    None => kaiser_impulse(&ImpulseSpec {
                        beta: beta_k,
                        length: self.impulse_len,
                        amplitude,
                    })?,
                };
                crate::error::check_finite("hit", &[x, y, amplitude])?;
                self.position = [x, y];
                let mut out = self.predict()?;
                out.excitation = self.push_excitation(&impulse, true);
                Ok(out)
            }
            ControlMessage::Scrape(s) => self.scrape(s),
            ControlMessage::SetTexture(spec) => {
                self.texture = spec.build()?;
                Ok(ControlOutcome::default())
            }
            ControlMessage::SetTextureData(tex) => {
                self.texture = tex;
                Ok(ControlOutcome::default())
            }
            ControlMessage::SetCustomImpulse(samples) => {
                self.custom_impulse = if samples.is_empty() {
                    None
                } else {
                    Some(draw_impulse(&samples)?)
                };
                Ok(ControlOutcome::default())
            }
        }
    }

    /// Sets material and position together and publishes one coefficient set;
    /// this is what a modulation schedule drives each tick.
    pub fn update(
        &mut self,
        material: MaterialParams,
        position: [f64; 2],
    ) -> Result<ControlOutcome> {
        if self.model.is_none() {
            return Err(Error::NoModel);
        }
        crate::error::check_finite("position", &position)?;
        self.material = material;
        self.position = position;
        self.predict()
    }

    /// Publishes a coefficient set directly, bypassing the model.
    pub fn publish_bank(&mut self, bank: &FilterBank) -> Result<()> {
        if bank.branches() != self.config.branches || bank.depth() != self.config.depth {
            return Err(Error::Dimension(format!(
                "bank is {}x{}, engine is {}x{}",
                bank.branches(),
                bank.depth(),
                self.config.branches,
                self.config.depth
            )));
        }
        self.mailbox.input_buffer_mut().copy_from(bank);
        self.mailbox.publish();
        self.bank = Some(bank.clone());
        Ok(())
    }

    /// Queues raw excitation. `restart` places the first sample at the
    /// renderer's current position; otherwise it continues the previous
    /// continuous excitation. Returns the number of samples queued.
    pub fn push_excitation(&mut self, samples: &[f64], restart: bool) -> usize {
        self.push(Stream::Impulse, samples, restart)
    }

    fn push(&mut self, stream: Stream, samples: &[f64], restart: bool) -> usize {
        let mut queued = 0;
        for (i, part) in samples.chunks(CHUNK_LEN).enumerate() {
            let mut data = [0.0; CHUNK_LEN];
            data[..part.len()].copy_from_slice(part);
            let chunk = Chunk {
                stream,
                restart: restart && i == 0,
                len: part.len(),
                data,
            };
            if self.queue.push(chunk).is_err() {
                self.dropped += 1;
            } else {
                queued += part.len();
            }
        }
        queued
    }

    fn encode(&mut self) -> Result<()> {
        let model = self.model.as_ref().ok_or(Error::NoModel)?;
        self.latent = Some(model.encode(&self.shape));
        self.encode_calls += 1;
        Ok(())
    }

    fn predict(&mut self) -> Result<ControlOutcome> {
        let model = self.model.as_ref().ok_or(Error::NoModel)?;
        let latent = self.latent.as_ref().ok_or(Error::NoModel)?;
        let bank = model.predict_bank(latent, self.position, &self.material.normalize())?;
        self.predict_calls += 1;
        self.publish_bank(&bank)?;
        Ok(ControlOutcome {
            published: true,
            outside: !self.shape.contains(self.position),
            excitation: 0,
        })
    }

    /// Positions come from the client; velocity is the slope of the linear
    /// path between successive messages.
    fn scrape(&mut self, s: ScrapeState) -> Result<ControlOutcome> {
        s.validate()?;
        self.position = s.pos;
        let mut out = self.predict()?;
        let sr = self.config.sample_rate;
        let force = match &self.stroke {
            Some(st) if s.time > st.last.time && s.time - st.last.time <= SCRAPE_GAP => {
                let a = st.last;
                let dt = s.time - a.time;
                let vel = [(s.pos[0] - a.pos[0]) / dt, (s.pos[1] - a.pos[1]) / dt];
                let n0 = ((a.time - st.start) * sr).floor() as u64;
                let n1 = ((s.time - st.start) * sr).floor() as u64;
                let samples: Vec<f64> = (n0..n1)
                    .map(|n| {
                        let f = (st.start + n as f64 / sr - a.time) / dt;
                        let p = [
                            a.pos[0] + f * (s.pos[0] - a.pos[0]),
                            a.pos[1] + f * (s.pos[1] - a.pos[1]),
                        ];
                        force_at(&self.texture, p, vel, a.mass, a.mix_v, a.mix_h)
                    })
                    .collect();
                Some((samples, n0 == 0))
            }
            _ => None,
        };
        match force {
            Some((samples, first)) => {
                out.excitation = self.push(Stream::Scrape, &samples, first);
                self.stroke.as_mut().unwrap().last = s;
            }
            None => {
                self.stroke = Some(Stroke {
                    start: s.time,
                    last: s,
                });
            }
        }
        Ok(out)
    }
}
