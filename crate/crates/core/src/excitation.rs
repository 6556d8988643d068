//! Excitation signals: Kaiser-window impacts, drawn impulses, fractal surface
//! textures and the scraping force model.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::pgm;

pub const MAX_DRAWN_LEN: usize = 8192;
pub const DEFAULT_SCRAPER_MASS: f64 = 0.01;

/// Modified Bessel function of the first kind, order zero, by its power
/// series `sum ((x/2)^k / k!)^2`, summed until terms stop changing the total.
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseSpec {
    /// Kaiser shape parameter.
    pub beta: f64,
    pub length: usize,
    pub amplitude: f64,
}

impl Default for ImpulseSpec {
    fn default() -> Self {
        ImpulseSpec {
            beta: 6.0,
            length: 65,
            amplitude: 1.0,
        }
    }
}

impl ImpulseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidParameter(format!(
                "impulse length {} < 2",
                self.length
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kaiser beta {}",
                self.beta
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::NonFinite {
                what: "amplitude",
                index: 0,
            });
        }
        Ok(())
    }
}

/// `w[n] = I0(beta sqrt(1 - (2n/(N-1) - 1)^2)) / I0(beta)`, scaled by amplitude.
pub fn kaiser_impulse(spec: &ImpulseSpec) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.length];
    kaiser_impulse_into(spec, &mut out)?;
    Ok(out)
}

/// Kaiser impulse written into a caller buffer of length `spec.length`.
pub fn kaiser_impulse_into(spec: &ImpulseSpec, out: &mut [f64]) -> Result<()> {
    spec.validate()?;
    if out.len() != spec.length {
        return Err(Error::Dimension(format!(
            "buffer of {} for impulse of {}",
            out.len(),
            spec.length
        )));
    }
    let n = spec.length;
    let denom = bessel_i0(spec.beta);
    for i in 0..=(n - 1) / 2 {
        let r = 2.0 * i as f64 / (n - 1) as f64 - 1.0;
        let v = spec.amplitude * bessel_i0(spec.beta * (1.0 - r * r).max(0.0).sqrt()) / denom;
        out[i] = v;
        out[n - 1 - i] = v;
    }
    Ok(())
}

/// User-drawn impulse, peak-normalized to unit magnitude.
pub fn draw_impulse(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() || samples.len() > MAX_DRAWN_LEN {
        return Err(Error::InvalidParameter(format!(
            "drawn impulse needs 1..={MAX_DRAWN_LEN} samples, got {}",
            samples.len()
        )));
    }
    check_finite("drawn impulse", samples)?;
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::InvalidParameter("drawn impulse is all zeros".into()));
    }
    Ok(samples.iter().map(|v| v / peak).collect())
}

/// Height field over the unit square with precomputed derivative fields.
///
/// Row 0 is the bottom edge. Derivatives are per grid cell, so a texture
/// holding `S[row][col] = col` has `dS/dx = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceTexture {
    width: usize,
    height: usize,
    values: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
    sxx: Vec<f64>,
    syy: Vec<f64>,
}

/// `(dS/dx, dS/dy, d2S/dx2, d2S/dy2)` at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Derivatives {
    pub sx: f64,
    pub sy: f64,
    pub sxx: f64,
    pub syy: f64,
}

/// Central first and second differences along one axis; edges reuse the
/// nearest interior stencil.
fn diff_along(
    values: &[f64],
    len: usize,
    stride: usize,
    count: usize,
    offset_step: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut d1 = vec![0.0; values.len()];
    let mut d2 = vec![0.0; values.len()];
    for line in 0..count {
        let base = line * offset_step;
        let at = |i: usize| values[base + i * stride];
        for i in 0..len {
            let c = i.clamp(1, len - 2);
            let idx = base + i * stride;
            d1[idx] = if i == 0 {
                at(1) - at(0)
            } else if i == len - 1 {
                at(len - 1) - at(len - 2)
            } else {
                0.5 * (at(i + 1) - at(i - 1))
            };
            d2[idx] = at(c + 1) - 2.0 * at(c) + at(c - 1);
        }
    }
    (d1, d2)
}

impl SurfaceTexture {
    /// Texture from row-major heights (bottom row first), used as given.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width < 4 || height < 4 {
            return Err(Error::InvalidParameter(format!(
                "texture {width}x{height} smaller than 4x4"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height} texture",
                values.len()
            )));
        }
        check_finite("texture", &values)?;
        let (sx, sxx) = diff_along(&values, width, 1, height, width);
        let (sy, syy) = diff_along(&values, height, width, width, 1);
        Ok(SurfaceTexture {
            width,
            height,
            values,
            sx,
            sy,
            sxx,
            syy,
        })
    }

    /// Texture with zero mean and unit variance.
    pub fn standardized(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        standardize(&mut values);
        Self::from_values(width, height, values)
    }

    pub fn flat(size: usize) -> Result<Self> {
        Self::from_values(size, size, vec![0.0; size * size])
    }

    /// Grayscale image import: samples mapped to `[0, 1]`, then standardized.
    /// The image's top row becomes the texture's top edge.
    pub fn from_pgm(data: &[u8]) -> Result<Self> {
        let img = pgm::decode(data)?;
        let norm = img.normalized();
        let (w, h) = (img.width, img.height);
        let mut values = vec![0.0; w * h];
        for row in 0..h {
            values[row * w..(row + 1) * w].copy_from_slice(&norm[(h - 1 - row) * w..(h - row) * w]);
        }
        Self::standardized(w, h, values)
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear lookup of the derivative fields at `(x, y)` in `[0, 1]^2`.
    /// Out-of-range coordinates are clamped and reported with `true`.
    pub fn surface_derivatives(&self, x: f64, y: f64) -> (Derivatives, bool) {
        let clamped = !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y);
        let u = x.clamp(0.0, 1.0) * (self.width - 1) as f64;
        let v = y.clamp(0.0, 1.0) * (self.height - 1) as f64;
        let i0 = (u.floor() as usize).min(self.width - 2);
        let j0 = (v.floor() as usize).min(self.height - 2);
        let (fu, fv) = (u - i0 as f64, v - j0 as f64);
        let w = self.width;
        let idx = [
            j0 * w + i0,
            j0 * w + i0 + 1,
            (j0 + 1) * w + i0,
            (j0 + 1) * w + i0 + 1,
        ];
        let wts = [
            (1.0 - fu) * (1.0 - fv),
            fu * (1.0 - fv),
            (1.0 - fu) * fv,
            fu * fv,
        ];
        let lerp = |f: &[f64]| idx.iter().zip(&wts).map(|(&i, w)| w * f[i]).sum::<f64>();
        (
            Derivatives {
                sx: lerp(&self.sx),
                sy: lerp(&self.sy),
                sxx: lerp(&self.sxx),
                syy: lerp(&self.syy),
            },
            clamped,
        )
    }

    /// Scale from normalized velocity to grid cells per second.
    pub fn grid_scale(&self) -> [f64; 2] {
        [(self.width - 1) as f64, (self.height - 1) as f64]
    }
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter_mut().for_each(|v| *v -= mean);
    let var = values.iter().map(|v| v * v).sum::<f64>() / n;
    if var > 0.0 {
        let inv = 1.0 / var.sqrt();
        values.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Spectral-synthesis fractal noise: random phases with radial amplitude
/// `f^-(H+1)`, inverse transformed and standardized.
pub fn fractal_texture(roughness: f64, size: usize, seed: u64) -> Result<SurfaceTexture> {
    if !size.is_power_of_two() || size < 4 {
        return Err(Error::InvalidParameter(format!(
            "texture size {size} must be a power of two >= 4"
        )));
    }
    if !(0.0..=1.0).contains(&roughness) {
        return Err(Error::InvalidParameter(format!(
            "roughness {roughness} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex64::new(0.0, 0.0); size * size];
    let freq = |i: usize| {
        if i <= size / 2 {
            i as f64
        } else {
            i as f64 - size as f64
        }
    };
    for row in 0..size {
        for col in 0..size {
            let f = freq(row).hypot(freq(col));
            let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            if f > 0.0 {
                spec[row * size + col] = Complex64::from_polar(f.powf(-(roughness + 1.0)), phase);
            }
        }
    }
    let fft = FftPlanner::new().plan_fft_inverse(size);
    for row in spec.chunks_mut(size) {
        fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); size];
    for col in 0..size {
        for (r, c) in column.iter_mut().enumerate() {
            *c = spec[r * size + col];
        }
        fft.process(&mut column);
        for (r, c) in column.iter().enumerate() {
            spec[r * size + col] = *c;
        }
    }
    let values = spec.iter().map(|c| c.re).collect();
    SurfaceTexture::standardized(size, size, values)
}

/// One control-rate sample of a scrape gesture. Velocity is derived from
/// successive positions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrapeState {
    /// Seconds.
    pub time: f64,
    /// Normalized position in `[0, 1]^2`.
    pub pos: [f64; 2],
    /// Scraper mass, kg.
    pub mass: f64,
    /// Vertical force mix.
    pub mix_v: f64,
    /// Horizontal force mix.
    pub mix_h: f64,
}

impl ScrapeState {
    pub fn at(time: f64, pos: [f64; 2]) -> Self {
        ScrapeState {
            time,
            pos,
            mass: DEFAULT_SCRAPER_MASS,
            mix_v: 1.0,
            mix_h: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(
            "scrape state",
            &[
                self.time,
                self.pos[0],
                self.pos[1],
                self.mass,
                self.mix_v,
                self.mix_h,
            ],
        )?;
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scraper mass {}",
                self.mass
            )));
        }
        Ok(())
    }
}

/// Scraping force for a normalized position and velocity:
/// `mix_v * m (Sxx vx^2 + Syy vy^2) + mix_h (vx Sx + vy Sy)`, with the
/// velocity converted to grid cells per second.
#[inline]
pub fn force_at(
    tex: &SurfaceTexture,
    pos: [f64; 2],
    vel: [f64; 2],
    mass: f64,
    mix_v: f64,
    mix_h: f64,
) -> f64 {
    let (d, _) = tex.surface_derivatives(pos[0], pos[1]);
    let [gx, gy] = tex.grid_scale();
    let (vx, vy) = (vel[0] * gx, vel[1] * gy);
    let fv = mass * (d.sxx * vx * vx + d.syy * vy * vy);
    let fh = vx * d.sx + vy * d.sy;
    mix_v * fv + mix_h * fh
}

/// Force signal along a control-rate trajectory, one sample per `1/sr` from
/// the first to the last timestamp. Position is linearly interpolated;
/// velocity is the first difference of the interpolated path (the first
/// sample reuses the second's). Mass and mixes hold from the segment start.
pub fn scrape_force(
    tex: &SurfaceTexture,
    trajectory: &[ScrapeState],
    sample_rate: f64,
) -> Result<Vec<f64>> {
    let first = trajectory
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty scrape trajectory".into()))?;
    for s in trajectory {
        s.validate()?;
    }
    if trajectory.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::InvalidParameter(
            "scrape timestamps must increase".into(),
        ));
    }
    let t0 = first.time;
    let duration = trajectory.last().unwrap().time - t0;
    let n = (duration * sample_rate).floor() as usize + 1;
    let mut seg = 0;
    let mut state_at = |t: f64| {
        while seg + 2 < trajectory.len() && t > trajectory[seg + 1].time {
            seg += 1;
        }
        if trajectory.len() == 1 {
            return (first.pos, *first);
        }
        let (a, b) = (&trajectory[seg], &trajectory[seg + 1]);
        let f = ((t - a.time) / (b.time - a.time)).clamp(0.0, 1.0);
        (
            [
                a.pos[0] + f * (b.pos[0] - a.pos[0]),
                a.pos[1] + f * (b.pos[1] - a.pos[1]),
            ],
            *a,
        )
    };
    let positions: Vec<([f64; 2], ScrapeState)> = (0..n)
        .map(|i| state_at(t0 + i as f64 / sample_rate))
        .collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (p, s) = positions[i];
        let vel = if n < 2 {
            [0.0, 0.0]
        } else {
            let (a, b) = if i == 0 { (0, 1) } else { (i - 1, i) };
            [
                (positions[b].0[0] - positions[a].0[0]) * sample_rate,
                (positions[b].0[1] - positions[a].0[1]) * sample_rate,
            ]
        };
        out.push(force_at(tex, p, vel, s.mass, s.mix_v, s.mix_h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `I0(x) = (1/pi) int_0^pi exp(x cos t) dt`; the trapezoid rule converges
    /// geometrically for this periodic integrand.
    fn i0_quadrature(x: f64) -> f64 {
        let n = 2000;
        let h = std::f64::consts::PI / n as f64;
        let mut s = 0.5 * (x.exp() + (-x).exp());
        for k in 1..n {
            s += (x * (k as f64 * h).cos()).exp();
        }
        s * h / std::f64::consts::PI
    }

    #[test]
    fn bessel_matches_integral_representation() {
        for x in [0.0, 0.1, 1.0, 2.5, 6.0, 10.0, 20.0, 35.0] {
            let a = bessel_i0(x);
            let b = i0_quadrature(x);
            assert!((a - b).abs() <= 1e-12 * b, "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn kaiser_examples() {
        let rect = kaiser_impulse(&ImpulseSpec {
            beta: 0.0,
            length: 17,
            amplitude: 1.0,
        })
        .unwrap();
        assert!(rect.iter().all(|v| *v == 1.0));
        let w = kaiser_impulse(&ImpulseSpec::default()).unwrap();
        assert_eq!(w[32], 1.0);
        assert!((w[0] - 1.0 / i0_quadrature(6.0)).abs() < 1e-14);
        // 1/I0(6) = 0.0148733...
        assert!((w[0] - 0.01488).abs() < 1e-5);
        for n in [2usize, 3, 10, 64, 65] {
            let w = kaiser_impulse(&ImpulseSpec {
                beta: 3.7,
                length: n,
                amplitude: 0.3,
            })
            .unwrap();
            assert!((0..n).all(|i| w[i] == w[n - 1 - i]));
        }
        assert!(kaiser_impulse(&ImpulseSpec {
            length: 1,
            ..ImpulseSpec::default()
        })
        .is_err());
        assert!(kaiser_impulse(&ImpulseSpec {
            beta: -1.0,
            ..ImpulseSpec::default()
        })
        .is_err());
    }

    #[test]
    fn drawn_impulse_examples() {
        assert_eq!(draw_impulse(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(draw_impulse(&[0.5, -0.25]).unwrap(), vec![1.0, -0.5]);
        assert!(draw_impulse(&[0.0, 0.0]).is_err());
        assert!(draw_impulse(&[]).is_err());
        assert!(draw_impulse(&vec![1.0; MAX_DRAWN_LEN + 1]).is_err());
        assert!(draw_impulse(&[f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn drawn_impulse_scales_uniformly(v in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            let out = draw_impulse(&v).unwrap();
            let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (a, b) in v.iter().zip(&out) {
                prop_assert!((b * peak - a).abs() <= 1e-12 * peak);
            }
            prop_assert!((out.iter().fold(0.0f64, |m, x| m.max(x.abs())) - 1.0).abs() < 1e-15);
        }
    }

    fn ramp(size: usize, f: impl Fn(f64, f64) -> f64) -> SurfaceTexture {
        let values = (0..size * size)
            .map(|i| f((i % size) as f64, (i / size) as f64))
            .collect();
        SurfaceTexture::from_values(size, size, values).unwrap()
    }

    #[test]
    fn derivatives_of_simple_fields() {
        let flat = SurfaceTexture::flat(8).unwrap();
        assert_eq!(flat.surface_derivatives(0.3, 0.7).0, Derivatives::default());
        let lin = ramp(16, |x, _| x);
        for (x, y) in [(0.0, 0.0), (0.37, 0.5), (1.0, 0.2)] {
            let (d, clamped) = lin.surface_derivatives(x, y);
            assert!(!clamped);
            assert!((d.sx - 1.0).abs() < 1e-12 && d.sy.abs() < 1e-12);
            assert!(d.sxx.abs() < 1e-12 && d.syy.abs() < 1e-12);
        }
        let quad = ramp(16, |_, y| y * y);
        let (d, _) = quad.surface_derivatives(0.5, 0.5);
        assert!((d.syy - 2.0).abs() < 1e-12);
        assert!((d.sy - 15.0).abs() < 1e-9, "{}", d.sy);
        let (_, clamped) = lin.surface_derivatives(1.2, -0.1);
        assert!(clamped);
    }

    #[test]
    fn fractal_texture_properties() {
        let a = fractal_texture(0.5, 64, 3).unwrap();
        assert_eq!(a, fractal_texture(0.5, 64, 3).unwrap());
        assert_ne!(a, fractal_texture(0.5, 64, 4).unwrap());
        let n = a.values().len() as f64;
        let mean = a.values().iter().sum::<f64>() / n;
        let var = a.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
        let grad_var = |h: f64| {
            let t = fractal_texture(h, 128, 9).unwrap();
            let v = t.values();
            let diffs: Vec<f64> = (0..128 * 128)
                .filter(|i| i % 128 != 127)
                .map(|i| v[i + 1] - v[i])
                .collect();
            diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64
        };
        let g = [grad_var(0.2), grad_var(0.5), grad_var(0.8)];
        assert!(g[0] > g[1] && g[1] > g[2], "{g:?}");
        assert!(fractal_texture(0.5, 48, 0).is_err());
    }

    #[test]
    fn pgm_import_is_standardized_and_oriented() {
        // top image row bright, so the texture's top edge is high
        let mut px = vec![0u16; 16 * 16];
        px[..16].iter_mut().for_each(|p| *p = 255);
        let tex = SurfaceTexture::from_pgm(&pgm::encode_p5(16, 16, 255, &px)).unwrap();
        let v = tex.values();
        assert!(v[15 * 16] > v[0]);
        assert!(v.iter().sum::<f64>().abs() < 1e-9);
    }

    fn line(v: f64, steps: usize, rate: f64) -> Vec<ScrapeState> {
        (0..=steps)
            .map(|i| {
                let t = i as f64 / rate;
                ScrapeState {
                    mix_v: 0.0,
                    ..ScrapeState::at(t, [0.2 + v * t, 0.5])
                }
            })
            .collect()
    }

    #[test]
    fn scrape_force_examples() {
        let lin = ramp(32, |x, _| x);
        let traj = line(0.3, 100, 1000.0);
        let f = scrape_force(&lin, &traj, 44_100.0).unwrap();
        assert_eq!(f.len(), 4411);
        let expect = 0.3 * 31.0;
        assert!(
            f.iter().all(|v| (v - expect).abs() < 1e-9 * expect),
            "{}",
            f[10]
        );
        let flat = SurfaceTexture::flat(32).unwrap();
        assert!(scrape_force(&flat, &traj, 44_100.0)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        let still = line(0.0, 10, 1000.0);
        let tex = fractal_texture(0.5, 32, 1).unwrap();
        assert!(scrape_force(&tex, &still, 44_100.0)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        assert!(scrape_force(&tex, &[], 44_100.0).is_err());
        let mut back = line(0.1, 3, 1000.0);
        back[2].time = back[1].time;
        assert!(scrape_force(&tex, &back, 44_100.0).is_err());
    }

    fn mixed(traj: &[ScrapeState], mass: f64, mix_v: f64, mix_h: f64) -> Vec<ScrapeState> {
        traj.iter()
            .map(|s| ScrapeState {
                mass,
                mix_v,
                mix_h,
                ..*s
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn force_mix_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..100) {
            let tex = fractal_texture(0.6, 32, seed).unwrap();
            let traj: Vec<ScrapeState> = (0..20)
                .map(|i| ScrapeState::at(i as f64 * 1e-3, [0.3 + 0.01 * i as f64, 0.6 - 0.005 * i as f64]))
                .collect();
            let sr = 8000.0;
            let both = scrape_force(&tex, &mixed(&traj, 0.01, a, b), sr).unwrap();
            let fv = scrape_force(&tex, &mixed(&traj, 0.01, 1.0, 0.0), sr).unwrap();
            let fh = scrape_force(&tex, &mixed(&traj, 0.01, 0.0, 1.0), sr).unwrap();
            let heavy = scrape_force(&tex, &mixed(&traj, 0.03, 1.0, 0.0), sr).unwrap();
            for i in 0..both.len() {
                let scale = fv[i].abs().max(fh[i].abs()).max(1.0);
                prop_assert!((both[i] - a * fv[i] - b * fh[i]).abs() <= 1e-12 * scale * 4.0);
                prop_assert!((heavy[i] - 3.0 * fv[i]).abs() <= 1e-12 * scale * 4.0);
            }
        }
    }

    #[test]
    fn velocity_scaling_of_force_terms() {
        // on S = x^2 + y^2 curvature is constant, so compressing time by c
        // scales F_v by c^2 and leaves F_h linear in c along the same path
        let tex = ramp(32, |x, y| x * x + y * y);
        let path = |c: f64| -> Vec<ScrapeState> {
            (0..=40)
                .map(|i| ScrapeState::at(i as f64 * 1e-3 / c, [0.2 + 0.01 * i as f64, 0.4]))
                .collect()
        };
        let sr = 4000.0;
        let c = 2.0;
        let fv1 = scrape_force(&tex, &mixed(&path(1.0), 0.01, 1.0, 0.0), sr).unwrap();
        let fv2 = scrape_force(&tex, &mixed(&path(c), 0.01, 1.0, 0.0), sr).unwrap();
        assert!(fv1[5..]
            .iter()
            .all(|v| (v - fv1[5]).abs() < 1e-9 * fv1[5].abs()));
        assert!((fv2[5] - c * c * fv1[5]).abs() < 1e-9 * fv2[5].abs());
        let fh1 = scrape_force(&tex, &mixed(&path(1.0), 0.01, 0.0, 1.0), sr).unwrap();
        let fh2 = scrape_force(&tex, &mixed(&path(c), 0.01, 0.0, 1.0), sr).unwrap();
        // same position at sample 2k of the faster path... compare at matched positions
        for k in 1..20 {
            assert!((fh2[k] - c * fh1[2 * k]).abs() < 1e-6 * fh2[k].abs(), "{k}");
        }
    }
}
