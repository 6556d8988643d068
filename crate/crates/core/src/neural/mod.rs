//! Coefficient predictor: a strided convolutional shape encoder feeding a
//! fully connected head that emits raw resonator coefficients.
//!
//! The encoder runs once per shape. Its linear output is the shape latent;
//! the head sees `[sigmoid(latent); x; y; normalized material]`, so every
//! component of its input lies in `[0, 1]` for in-range materials.
//!
//! Parameters are stored in `f64` but always hold `f32`-representable
//! values, so checkpoints round-trip exactly.

pub mod checkpoint;
mod layers;
pub mod train;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::material::MaterialParams;
use crate::modal::shape::{ShapeGrid, GRID};
use crate::resonator::{
    logit, map_raw_to_bank, raw_angle_for, sigmoid, FilterBank, RawCoefficients,
    DEFAULT_SAMPLE_RATE, RAW_PER_SECTION, R_MAX,
};

use layers::{
    conv_backward, conv_forward, dense_backward, dense_forward, silu, silu_grad, ConvShape,
};

/// Position (2) plus normalized material (5).
pub const CONDITION_EXTRA: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    /// Parallel branches `L`.
    pub branches: usize,
    /// Cascade depth `M`.
    pub depth: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Output channels of the stride-2 convolution stages.
    pub channels: Vec<usize>,
    pub sample_rate: f64,
    /// Band in Hz over which initial pole frequencies are log-spaced.
    pub init_band: [f64; 2],
    /// Initial pole frequency of each branch's first section, in Hz. Empty
    /// means log-spaced over `init_band`.
    pub init_freqs: Vec<f64>,
    /// Initial pole radius of the first section in each branch.
    pub init_radius: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 64,
            branches: 32,
            depth: 1,
            hidden_width: 256,
            hidden_layers: 3,
            channels: vec![8, 16, 32, 64],
            sample_rate: DEFAULT_SAMPLE_RATE,
            init_band: [50.0, 5000.0],
            init_freqs: Vec::new(),
            init_radius: 0.99,
        }
    }
}

impl ModelConfig {
    pub fn output_len(&self) -> usize {
        RAW_PER_SECTION * self.branches * self.depth
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 || self.branches == 0 || self.depth == 0 {
            return bad("latent_dim, branches and depth must be positive".into());
        }
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return bad("the head needs at least one hidden layer".into());
        }
        if self.channels.is_empty()
            || self.channels.contains(&0)
            || GRID >> self.channels.len() == 0
        {
            return bad(format!("unusable encoder channels {:?}", self.channels));
        }
        if !(self.sample_rate > 0.0) {
            return bad(format!("sample rate {}", self.sample_rate));
        }
        let [lo, hi] = self.init_band;
        if !(lo > 0.0 && hi >= lo && hi < self.sample_rate / 2.0) {
            return bad(format!("init band {lo}..{hi} Hz"));
        }
        if !self.init_freqs.is_empty() && self.init_freqs.len() != self.branches {
            return bad(format!(
                "{} initial frequencies for {} branches",
                self.init_freqs.len(),
                self.branches
            ));
        }
        if let Some(f) = self
            .init_freqs
            .iter()
            .find(|f| !(**f > 0.0 && **f < self.sample_rate / 2.0))
        {
            return bad(format!("initial frequency {f} Hz"));
        }
        if !(self.init_radius > 0.0 && self.init_radius < R_MAX) {
            return bad(format!("init radius {}", self.init_radius));
        }
        Ok(())
    }
}

/// Named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Dense {
    nin: usize,
    nout: usize,
    w: usize,
    b: usize,
}

impl Dense {
    fn w<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.nin * self.nout]
    }
    fn b<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.nout]
    }
    /// Disjoint `(dW, db)` slices of a gradient vector (`b` follows `w`).
    fn grads<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let (w, rest) = g[self.w..].split_at_mut(self.nin * self.nout);
        (w, &mut rest[..self.nout])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Conv {
    shape: ConvShape,
    w: usize,
    b: usize,
}

impl Conv {
    fn w<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.shape.weight_len()]
    }
    fn b<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.shape.cout]
    }
    fn grads<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let (w, rest) = g[self.w..].split_at_mut(self.shape.weight_len());
        (w, &mut rest[..self.shape.cout])
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    convs: Vec<Conv>,
    proj: Dense,
    head: Vec<Dense>,
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorSpec {
                name,
                shape,
                offset,
            });
            offset
        };
        let mut convs = Vec::new();
        let (mut cin, mut size) = (1, GRID);
        for (i, &cout) in cfg.channels.iter().enumerate() {
            let shape = ConvShape { cin, cout, size };
            let w = push(format!("encoder.conv{i}.weight"), vec![cout, cin, 3, 3]);
            let b = push(format!("encoder.conv{i}.bias"), vec![cout]);
            convs.push(Conv { shape, w, b });
            cin = cout;
            size /= 2;
        }
        let mut dense = |name: &str, nin: usize, nout: usize| {
            let w = push(format!("{name}.weight"), vec![nout, nin]);
            let b = push(format!("{name}.bias"), vec![nout]);
            Dense { nin, nout, w, b }
        };
        let proj = dense("encoder.proj", cin, cfg.latent_dim);
        let mut head = Vec::new();
        let mut nin = cfg.latent_dim + CONDITION_EXTRA;
        for i in 0..cfg.hidden_layers {
            head.push(dense(&format!("head.fc{i}"), nin, cfg.hidden_width));
            nin = cfg.hidden_width;
        }
        head.push(dense("head.out", nin, cfg.output_len()));
        Layout {
            convs,
            proj,
            head,
            tensors,
            total,
        }
    }
}

/// Encoder output for one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeLatent {
    pub v: Vec<f64>,
}

pub fn normalize_material(mat: &MaterialParams) -> [f64; 5] {
    mat.normalize()
}

pub fn denormalize_material(phi: [f64; 5]) -> MaterialParams {
    MaterialParams::from_normalized(phi)
}

/// `[sigmoid(v); x; y; phi]`.
pub fn condition_vector(latent: &ShapeLatent, pos: [f64; 2], phi: &[f64; 5]) -> Vec<f64> {
    let mut c = Vec::with_capacity(latent.v.len() + CONDITION_EXTRA);
    c.extend(latent.v.iter().map(|v| sigmoid(*v)));
    c.extend_from_slice(&pos);
    c.extend_from_slice(phi);
    c
}

pub(crate) fn grid_image(grid: &ShapeGrid) -> Vec<f64> {
    let mut img = vec![0.0; GRID * GRID];
    for y in 0..GRID {
        for x in 0..GRID {
            if grid.get(x, y) {
                img[y * GRID + x] = 1.0;
            }
        }
    }
    img
}

#[inline]
pub(crate) fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Weights plus hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
}

pub(crate) struct EncoderCache {
    /// Input of each convolution stage, then the last stage's activation.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pooled: Vec<f64>,
}

pub(crate) struct HeadCache {
    /// Input of each dense layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
}

impl Model {
    /// Random initialization. Head output biases place each branch's first
    /// section at its `init_freqs` entry (or a log-spaced frequency in
    /// `init_band`) with radius `init_radius` and unit raw gain; later
    /// stages start as mild unit-gain resonances log-spaced over the band.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |dst: &mut [f64], a: f64| {
            for v in dst {
                *v = round_f32(rng.random_range(-a..a));
            }
        };
        for c in &layout.convs {
            let fan_in = (c.shape.cin * 9) as f64;
            uniform(
                &mut params[c.w..c.w + c.shape.weight_len()],
                (6.0 / fan_in).sqrt(),
            );
        }
        let p = layout.proj;
        uniform(
            &mut params[p.w..p.w + p.nin * p.nout],
            (3.0 / p.nin as f64).sqrt(),
        );
        let n_head = layout.head.len();
        for (i, d) in layout.head.iter().enumerate() {
            let scale = if i + 1 == n_head {
                0.1 * (3.0 / d.nin as f64).sqrt()
            } else {
                (6.0 / d.nin as f64).sqrt()
            };
            uniform(&mut params[d.w..d.w + d.nin * d.nout], scale);
        }
        let out = layout.head[n_head - 1];
        let bias = &mut params[out.b..out.b + out.nout];
        let (l_count, m_count) = (config.branches, config.depth);
        let n = l_count * m_count;
        let [lo, hi] = config.init_band;
        for l in 0..l_count {
            for m in 0..m_count {
                let k = l * m_count + m;
                let f = match config.init_freqs.get(l) {
                    Some(f) if m == 0 => *f,
                    _ if n == 1 => lo,
                    _ => lo * (hi / lo).powf(k as f64 / (n - 1) as f64),
                };
                let s = &mut bias[k * RAW_PER_SECTION..(k + 1) * RAW_PER_SECTION];
                s[1] = raw_angle_for(2.0 * PI * f / config.sample_rate);
                if m == 0 {
                    s[0] = logit(config.init_radius / R_MAX);
                    s[4] = 1.0;
                } else {
                    s[0] = logit(0.5 / R_MAX);
                    s[4] = n as f64;
                }
                s.iter_mut().for_each(|v| *v = round_f32(*v));
            }
        }
        Ok(Model {
            config,
            layout,
            params,
        })
    }

    /// Rebuilds a model from a flat parameter vector in layout order.
    pub fn from_parts(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Dimension(format!(
                "{} parameters for a model of {}",
                params.len(),
                layout.total
            )));
        }
        check_finite("model parameters", &params)?;
        Ok(Model {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.layout.tensors
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.params[t.range()])
    }

    /// Mutable view of a named tensor; written values are rounded to `f32`.
    pub fn set_tensor(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let t = self
            .layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Dimension(format!("no tensor named {name}")))?;
        if values.len() != t.len() {
            return Err(Error::Dimension(format!("{name} holds {} values", t.len())));
        }
        for (p, v) in self.params[t.range()].iter_mut().zip(values) {
            *p = round_f32(*v);
        }
        Ok(())
    }

    pub(crate) fn encoder_forward(&self, image: &[f64]) -> (Vec<f64>, EncoderCache) {
        let p = &self.params;
        let mut acts = vec![image.to_vec()];
        let mut pre = Vec::with_capacity(self.layout.convs.len());
        for c in &self.layout.convs {
            let m = c.shape.out_size();
            let mut z = vec![0.0; c.shape.cout * m * m];
            conv_forward(c.shape, c.w(p), c.b(p), acts.last().unwrap(), &mut z);
            acts.push(z.iter().map(|v| silu(*v)).collect());
            pre.push(z);
        }
        let last = self.layout.convs.last().unwrap().shape;
        let area = (last.out_size() * last.out_size()) as f64;
        let pooled: Vec<f64> = acts
            .last()
            .unwrap()
            .chunks_exact(last.out_size() * last.out_size())
            .map(|plane| plane.iter().sum::<f64>() / area)
            .collect();
        let mut latent = vec![0.0; self.config.latent_dim];
        dense_forward(
            self.layout.proj.w(p),
            self.layout.proj.b(p),
            &pooled,
            &mut latent,
        );
        (latent, EncoderCache { acts, pre, pooled })
    }

    /// Accumulates parameter gradients for `d loss / d latent = dlatent`.
    pub(crate) fn encoder_backward(&self, cache: &EncoderCache, dlatent: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let proj = self.layout.proj;
        let mut dpooled = vec![0.0; proj.nin];
        {
            let (dw, db) = proj.grads(grad);
            dense_backward(
                proj.w(p),
                &cache.pooled,
                dlatent,
                dw,
                db,
                Some(&mut dpooled),
            );
        }
        let last = self.layout.convs.last().unwrap().shape;
        let plane = last.out_size() * last.out_size();
        let mut dact: Vec<f64> = dpooled
            .iter()
            .flat_map(|g| std::iter::repeat_n(g / plane as f64, plane))
            .collect();
        for (i, c) in self.layout.convs.iter().enumerate().rev() {
            let dz: Vec<f64> = dact
                .iter()
                .zip(&cache.pre[i])
                .map(|(g, z)| g * silu_grad(*z))
                .collect();
            let mut din = if i > 0 {
                Some(vec![0.0; cache.acts[i].len()])
            } else {
                None
            };
            let (dw, db) = c.grads(grad);
            conv_backward(
                c.shape,
                c.w(p),
                &cache.acts[i],
                &dz,
                dw,
                db,
                din.as_deref_mut(),
            );
            if let Some(d) = din {
                dact = d;
            }
        }
    }

    pub(crate) fn head_forward(&self, cond: &[f64]) -> (Vec<f64>, HeadCache) {
        let p = &self.params;
        let mut inputs = Vec::with_capacity(self.layout.head.len());
        let mut pre = Vec::with_capacity(self.layout.head.len() - 1);
        let mut x = cond.to_vec();
        let n = self.layout.head.len();
        for (i, d) in self.layout.head.iter().enumerate() {
            let mut z = vec![0.0; d.nout];
            dense_forward(d.w(p), d.b(p), &x, &mut z);
            inputs.push(x);
            if i + 1 < n {
                x = z.iter().map(|v| silu(*v)).collect();
                pre.push(z);
            } else {
                x = z;
            }
        }
        (x, HeadCache { inputs, pre })
    }

    /// Accumulates parameter gradients and returns `d loss / d condition`.
    pub(crate) fn head_backward(
        &self,
        cache: &HeadCache,
        draw: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let p = &self.params;
        let mut dy = draw.to_vec();
        for (i, d) in self.layout.head.iter().enumerate().rev() {
            let mut dx = vec![0.0; d.nin];
            {
                let (dw, db) = d.grads(grad);
                dense_backward(d.w(p), &cache.inputs[i], &dy, dw, db, Some(&mut dx));
            }
            if i > 0 {
                for (g, z) in dx.iter_mut().zip(&cache.pre[i - 1]) {
                    *g *= silu_grad(*z);
                }
            }
            dy = dx;
        }
        dy
    }

    pub fn encode(&self, grid: &ShapeGrid) -> ShapeLatent {
        ShapeLatent {
            v: self.encoder_forward(&grid_image(grid)).0,
        }
    }

    /// Raw coefficients for a latent, a position in `[0, 1]^2` (positions
    /// outside the unit square or the shape are accepted) and a normalized
    /// material.
    pub fn predict(
        &self,
        latent: &ShapeLatent,
        pos: [f64; 2],
        phi: &[f64; 5],
    ) -> Result<RawCoefficients> {
        if latent.v.len() != self.config.latent_dim {
            return Err(Error::Dimension(format!(
                "latent of {} for a model expecting {}",
                latent.v.len(),
                self.config.latent_dim
            )));
        }
        check_finite("position", &pos)?;
        check_finite("material", phi)?;
        let (raw, _) = self.head_forward(&condition_vector(latent, pos, phi));
        RawCoefficients::new(raw, self.config.branches, self.config.depth)
    }

    pub fn predict_bank(
        &self,
        latent: &ShapeLatent,
        pos: [f64; 2],
        phi: &[f64; 5],
    ) -> Result<FilterBank> {
        map_raw_to_bank(&self.predict(latent, pos, phi)?, self.config.sample_rate)
    }
}
