//! Bank of second-order resonators.
//!
//! A [`FilterBank`] holds `L` parallel branches, each a cascade of `M`
//! second-order sections with transfer function
//!
//! ```text
//! H(z) = g (1 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
//! ```
//!
//! Branch outputs are summed without weights. Sections are realized in
//! Direct-Form-II. Coefficients normally come from [`map_raw_to_bank`], which
//! maps unconstrained network outputs onto stable sections.

use std::f64::consts::{LN_10, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

/// Largest pole radius reachable through [`map_raw_to_bank`].
pub const R_MAX: f64 = 0.9999;
/// Magnitude floor applied to every response, in dB.
pub const DB_FLOOR: f64 = -100.0;
pub const DEFAULT_SAMPLE_RATE: f64 = 44_100.0;
pub const DEFAULT_BINS: usize = 1024;
pub const DEFAULT_F_LO: f64 = 20.0;
/// Upper edge of the default loss grid as a fraction of the sample rate.
pub const DEFAULT_F_HI_RATIO: f64 = 0.45;

/// Raw values per section: pole radius, pole angle, b1, b2, gain.
pub const RAW_PER_SECTION: usize = 5;

const DB_PER_LN_POWER: f64 = 10.0 / LN_10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiquadSection {
    pub g: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadSection {
    pub const IDENTITY: BiquadSection = BiquadSection {
        g: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    pub fn coefficients(&self) -> [f64; 5] {
        [self.g, self.b1, self.b2, self.a1, self.a2]
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients().iter().all(|c| c.is_finite())
    }

    /// Stability triangle: both poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Response at `zinv = z^-1`.
    #[inline]
    pub fn response(&self, zinv: Complex64) -> Complex64 {
        let zinv2 = zinv * zinv;
        let num = 1.0 + self.b1 * zinv + self.b2 * zinv2;
        let den = 1.0 + self.a1 * zinv + self.a2 * zinv2;
        self.g * num / den
    }

    /// Largest root modulus of `z^2 + a1 z + a2`.
    pub fn pole_radius(&self) -> f64 {
        max_root_modulus(self.a1, self.a2)
    }

    /// Largest root modulus of `z^2 + b1 z + b2`.
    pub fn zero_radius(&self) -> f64 {
        max_root_modulus(self.b1, self.b2)
    }
}

/// Largest root modulus of the monic quadratic `z^2 + p z + q`.
pub fn max_root_modulus(p: f64, q: f64) -> f64 {
    let disc = p * p - 4.0 * q;
    if disc < 0.0 {
        q.sqrt()
    } else {
        let s = disc.sqrt();
        ((-p + s) * 0.5).abs().max(((-p - s) * 0.5).abs())
    }
}

/// `L` parallel branches of `M` cascaded sections, stored branch-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    sections: Vec<BiquadSection>,
    branches: usize,
    depth: usize,
    sample_rate: f64,
}

impl FilterBank {
    pub fn new(
        branches: usize,
        depth: usize,
        sections: Vec<BiquadSection>,
        sample_rate: f64,
    ) -> Result<Self> {
        if branches == 0 || depth == 0 {
            return Err(Error::Dimension(format!(
                "bank needs at least one branch and one section (got L={branches}, M={depth})"
            )));
        }
        if sections.len() != branches * depth {
            return Err(Error::Dimension(format!(
                "expected {} sections for L={branches}, M={depth}, got {}",
                branches * depth,
                sections.len()
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate {sample_rate}"
            )));
        }
        for (i, s) in sections.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite {
                    what: "section coefficients",
                    index: i,
                });
            }
            if !s.is_stable() {
                return Err(Error::InvalidParameter(format!(
                    "section {i} is unstable (a1={}, a2={})",
                    s.a1, s.a2
                )));
            }
        }
        Ok(FilterBank {
            sections,
            branches,
            depth,
            sample_rate,
        })
    }

    pub fn identity(branches: usize, depth: usize, sample_rate: f64) -> Result<Self> {
        Self::new(
            branches,
            depth,
            vec![BiquadSection::IDENTITY; branches * depth],
            sample_rate,
        )
    }

    /// Number of parallel branches (`L`).
    pub fn branches(&self) -> usize {
        self.branches
    }

    /// Cascade depth (`M`).
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn sections(&self) -> &[BiquadSection] {
        &self.sections
    }

    pub fn section(&self, branch: usize, stage: usize) -> &BiquadSection {
        &self.sections[branch * self.depth + stage]
    }

    pub fn branch(&self, branch: usize) -> &[BiquadSection] {
        &self.sections[branch * self.depth..(branch + 1) * self.depth]
    }

    /// Always `5 * M * L`.
    pub fn coefficient_count(&self) -> usize {
        RAW_PER_SECTION * self.sections.len()
    }

    pub fn same_shape(&self, other: &FilterBank) -> bool {
        self.branches == other.branches && self.depth == other.depth
    }

    /// Overwrites this bank with `other` without reallocating. Both banks must
    /// have the same dimensions.
    pub fn copy_from(&mut self, other: &FilterBank) {
        assert!(
            self.same_shape(other),
            "copy_from between differently sized banks"
        );
        self.sections.copy_from_slice(&other.sections);
        self.sample_rate = other.sample_rate;
    }

    /// Complex response `sum_l prod_m H_{l,m}` at `zinv = z^-1`.
    pub fn response_at(&self, zinv: Complex64) -> Complex64 {
        self.sections
            .chunks_exact(self.depth)
            .map(|branch| {
                branch
                    .iter()
                    .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(zinv))
            })
            .sum()
    }
}

/// Direct-Form-II delay lines, two values per section.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    w: Vec<[f64; 2]>,
    branches: usize,
    depth: usize,
}

impl FilterState {
    pub fn new(branches: usize, depth: usize) -> Self {
        FilterState {
            w: vec![[0.0; 2]; branches * depth],
            branches,
            depth,
        }
    }

    pub fn for_bank(bank: &FilterBank) -> Self {
        Self::new(bank.branches, bank.depth)
    }

    pub fn reset(&mut self) {
        self.w.iter_mut().for_each(|w| *w = [0.0; 2]);
    }

    pub fn matches(&self, bank: &FilterBank) -> bool {
        self.branches == bank.branches && self.depth == bank.depth
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().flatten().all(|v| v.is_finite())
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.w
    }

    /// Copies delay-line values without reallocating.
    pub fn copy_from(&mut self, other: &FilterState) {
        self.w.copy_from_slice(&other.w);
    }
}

/// Runs `input` through the bank, writing into `output` (overwritten).
///
/// Allocation-free; state carries over between calls.
pub fn process_block(
    bank: &FilterBank,
    state: &mut FilterState,
    input: &[f64],
    output: &mut [f64],
) -> Result<()> {
    if !state.matches(bank) {
        return Err(Error::Dimension(format!(
            "state is {}x{}, bank is {}x{}",
            state.branches, state.depth, bank.branches, bank.depth
        )));
    }
    if input.is_empty() || input.len() != output.len() {
        return Err(Error::Dimension(format!(
            "input block of {} samples, output block of {}",
            input.len(),
            output.len()
        )));
    }
    process_unchecked(bank, state, input, output);
    Ok(())
}

#[inline]
pub(crate) fn process_unchecked(
    bank: &FilterBank,
    state: &mut FilterState,
    input: &[f64],
    output: &mut [f64],
) {
    output.iter_mut().for_each(|y| *y = 0.0);
    let depth = bank.depth;
    for (sections, delays) in bank
        .sections
        .chunks_exact(depth)
        .zip(state.w.chunks_exact_mut(depth))
    {
        for (x, y) in input.iter().zip(output.iter_mut()) {
            let mut v = *x;
            for (s, w) in sections.iter().zip(delays.iter_mut()) {
                let w0 = v - s.a1 * w[0] - s.a2 * w[1];
                v = s.g * (w0 + s.b1 * w[0] + s.b2 * w[1]);
                w[1] = w[0];
                w[0] = w0;
            }
            *y += v;
        }
    }
}

/// Impulse response of a freshly reset bank.
pub fn impulse_response(bank: &FilterBank, len: usize) -> Vec<f64> {
    let mut input = vec![0.0; len];
    let mut output = vec![0.0; len];
    if len == 0 {
        return output;
    }
    input[0] = 1.0;
    let mut state = FilterState::for_bank(bank);
    process_unchecked(bank, &mut state, &input, &mut output);
    output
}

/// Frequencies at which responses are evaluated, with cached `e^{-jw}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    freqs: Vec<f64>,
    zinv: Vec<Complex64>,
    sample_rate: f64,
}

impl FrequencyGrid {
    pub fn new(freqs: Vec<f64>, sample_rate: f64) -> Result<Self> {
        let nyquist = sample_rate / 2.0;
        for &f in &freqs {
            if !(f > 0.0 && f < nyquist) {
                return Err(Error::FrequencyOutOfRange { freq: f, nyquist });
            }
        }
        let zinv = freqs
            .iter()
            .map(|&f| Complex64::from_polar(1.0, -2.0 * PI * f / sample_rate))
            .collect();
        Ok(FrequencyGrid {
            freqs,
            zinv,
            sample_rate,
        })
    }

    /// `bins` logarithmically spaced frequencies covering `[lo, hi]`.
    pub fn log_spaced(bins: usize, lo: f64, hi: f64, sample_rate: f64) -> Result<Self> {
        if bins < 2 || !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "log grid needs >= 2 bins and 0 < lo < hi (got {bins}, {lo}, {hi})"
            )));
        }
        let ratio = (hi / lo).ln() / (bins - 1) as f64;
        let freqs = (0..bins).map(|k| lo * (ratio * k as f64).exp()).collect();
        Self::new(freqs, sample_rate)
    }

    /// 1024 log-spaced bins over `[20 Hz, 0.45 sr]`.
    pub fn default_for(sample_rate: f64) -> Result<Self> {
        Self::log_spaced(
            DEFAULT_BINS,
            DEFAULT_F_LO,
            DEFAULT_F_HI_RATIO * sample_rate,
            sample_rate,
        )
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub(crate) fn zinv(&self) -> &[Complex64] {
        &self.zinv
    }
}

/// Log-magnitudes in dB, floored at [`DB_FLOOR`].
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeResponse {
    pub freqs: Vec<f64>,
    pub db: Vec<f64>,
}

impl MagnitudeResponse {
    pub fn len(&self) -> usize {
        self.db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.db.is_empty()
    }
}

#[inline]
pub(crate) fn to_db(h: Complex64) -> f64 {
    let p = h.norm_sqr();
    if p > 0.0 {
        (DB_PER_LN_POWER * p.ln()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

pub fn complex_response(bank: &FilterBank, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    if bank.sample_rate != grid.sample_rate {
        return Err(Error::Dimension(format!(
            "bank sample rate {} differs from grid sample rate {}",
            bank.sample_rate, grid.sample_rate
        )));
    }
    Ok(grid.zinv.iter().map(|&z| bank.response_at(z)).collect())
}

pub fn frequency_response(bank: &FilterBank, grid: &FrequencyGrid) -> Result<MagnitudeResponse> {
    let h = complex_response(bank, grid)?;
    Ok(MagnitudeResponse {
        freqs: grid.freqs.clone(),
        db: h.into_iter().map(to_db).collect(),
    })
}

/// Mean squared dB error between two responses on the same grid.
pub fn spectral_loss(pred: &MagnitudeResponse, target: &MagnitudeResponse) -> Result<f64> {
    if pred.freqs != target.freqs || pred.db.len() != target.db.len() || pred.db.is_empty() {
        return Err(Error::GridMismatch);
    }
    let sum: f64 = pred
        .db
        .iter()
        .zip(&target.db)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.db.len() as f64)
}

/// Unconstrained network output, `5 * M * L` values laid out
/// `[branch][stage][radius, angle, b1, b2, gain]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCoefficients {
    pub values: Vec<f64>,
    pub branches: usize,
    pub depth: usize,
}

impl RawCoefficients {
    pub fn new(values: Vec<f64>, branches: usize, depth: usize) -> Result<Self> {
        if values.len() != RAW_PER_SECTION * branches * depth || branches == 0 || depth == 0 {
            return Err(Error::Dimension(format!(
                "{} raw values for L={branches}, M={depth}",
                values.len()
            )));
        }
        Ok(RawCoefficients {
            values,
            branches,
            depth,
        })
    }

    pub fn zeros(branches: usize, depth: usize) -> Self {
        RawCoefficients {
            values: vec![0.0; RAW_PER_SECTION * branches * depth],
            branches,
            depth,
        }
    }

    pub fn section(&self, branch: usize, stage: usize) -> &[f64] {
        let i = (branch * self.depth + stage) * RAW_PER_SECTION;
        &self.values[i..i + RAW_PER_SECTION]
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Stable section from one raw 5-tuple. `sections` is `M * L`.
#[inline]
fn section_from_raw(raw: &[f64], sections: usize) -> BiquadSection {
    let r = R_MAX * sigmoid(raw[0]);
    let theta = PI * sigmoid(raw[1]);
    BiquadSection {
        g: raw[4] / sections as f64,
        b1: 2.0 * raw[2].tanh(),
        b2: raw[3].tanh(),
        a1: -2.0 * r * theta.cos(),
        a2: r * r,
    }
}

/// Maps raw values onto a stable bank.
///
/// Pole radius `r = R_MAX * sigmoid(raw0)` and angle `theta = pi * sigmoid(raw1)`
/// give `a1 = -2 r cos(theta)`, `a2 = r^2`; zeros are bounded by
/// `b1 = 2 tanh(raw2)`, `b2 = tanh(raw3)`; gain is `raw4 / (M * L)`.
pub fn map_raw_to_bank(raw: &RawCoefficients, sample_rate: f64) -> Result<FilterBank> {
    check_finite("raw coefficients", &raw.values)?;
    let n = raw.branches * raw.depth;
    let sections = raw
        .values
        .chunks_exact(RAW_PER_SECTION)
        .map(|c| section_from_raw(c, n))
        .collect();
    FilterBank::new(raw.branches, raw.depth, sections, sample_rate)
}

/// Pole angle (radians/sample) whose raw angle channel value is returned.
pub fn raw_angle_for(theta: f64) -> f64 {
    logit((theta / PI).clamp(1e-9, 1.0 - 1e-9))
}

#[derive(Clone, Debug)]
pub struct LossGradient {
    pub loss: f64,
    /// Same layout as [`RawCoefficients::values`].
    pub grad: Vec<f64>,
}

/// Spectral loss of `map_raw_to_bank(raw)` against `target` and its exact
/// gradient with respect to the raw values.
pub fn loss_gradient(
    raw: &RawCoefficients,
    target: &MagnitudeResponse,
    grid: &FrequencyGrid,
) -> Result<LossGradient> {
    check_finite("raw coefficients", &raw.values)?;
    if target.freqs != grid.freqs {
        return Err(Error::GridMismatch);
    }
    let depth = raw.depth;
    let n_sections = raw.branches * depth;
    let sections: Vec<BiquadSection> = raw
        .values
        .chunks_exact(RAW_PER_SECTION)
        .map(|c| section_from_raw(c, n_sections))
        .collect();

    // d loss / d (g, b1, b2, a1, a2) per section
    let mut dcoef = vec![[0.0f64; 5]; n_sections];
    let mut num = vec![Complex64::default(); n_sections];
    let mut den = vec![Complex64::default(); n_sections];
    let mut h_sec = vec![Complex64::default(); n_sections];
    let mut h_branch = vec![Complex64::default(); raw.branches];
    let mut others = vec![Complex64::default(); depth];
    let k_bins = grid.len() as f64;
    let mut loss = 0.0;

    for (&zinv, &t) in grid.zinv.iter().zip(&target.db) {
        let zinv2 = zinv * zinv;
        let mut h = Complex64::default();
        for (l, hb) in h_branch.iter_mut().enumerate() {
            let mut prod = Complex64::new(1.0, 0.0);
            for m in 0..depth {
                let i = l * depth + m;
                let s = &sections[i];
                num[i] = 1.0 + s.b1 * zinv + s.b2 * zinv2;
                den[i] = 1.0 + s.a1 * zinv + s.a2 * zinv2;
                h_sec[i] = s.g * num[i] / den[i];
                prod *= h_sec[i];
            }
            *hb = prod;
            h += prod;
        }
        let power = h.norm_sqr();
        let raw_db = if power > 0.0 {
            DB_PER_LN_POWER * power.ln()
        } else {
            f64::NEG_INFINITY
        };
        let p = raw_db.max(DB_FLOOR);
        let diff = p - t;
        loss += diff * diff;
        if raw_db <= DB_FLOOR {
            continue;
        }
        // d loss / d p = 2 diff / K, d p / dH = (20/ln10) conj(H) / |H|^2 (real part taken below)
        let u = h.conj() * (2.0 * diff / k_bins * 2.0 * DB_PER_LN_POWER / power);
        for l in 0..raw.branches {
            // product of the other sections in this branch
            let base = l * depth;
            if depth == 1 {
                others[0] = Complex64::new(1.0, 0.0);
            } else {
                let mut prefix = Complex64::new(1.0, 0.0);
                for m in 0..depth {
                    others[m] = prefix;
                    prefix *= h_sec[base + m];
                }
                let mut suffix = Complex64::new(1.0, 0.0);
                for m in (0..depth).rev() {
                    others[m] *= suffix;
                    suffix *= h_sec[base + m];
                }
            }
            for m in 0..depth {
                let i = base + m;
                let s = &sections[i];
                let q = u * others[m];
                let inv_den = 1.0 / den[i];
                let q_d = q * inv_den;
                let q_gd = q_d * s.g;
                let q_gnd2 = q_gd * num[i] * inv_den;
                let d = &mut dcoef[i];
                d[0] += (q_d * num[i]).re;
                d[1] += (q_gd * zinv).re;
                d[2] += (q_gd * zinv2).re;
                d[3] -= (q_gnd2 * zinv).re;
                d[4] -= (q_gnd2 * zinv2).re;
            }
        }
    }

    let mut grad = vec![0.0; raw.values.len()];
    for ((g_out, c), d) in grad
        .chunks_exact_mut(RAW_PER_SECTION)
        .zip(raw.values.chunks_exact(RAW_PER_SECTION))
        .zip(&dcoef)
    {
        let s0 = sigmoid(c[0]);
        let s1 = sigmoid(c[1]);
        let r = R_MAX * s0;
        let theta = PI * s1;
        let (sin_t, cos_t) = theta.sin_cos();
        let d_r = d[3] * (-2.0 * cos_t) + d[4] * (2.0 * r);
        let d_theta = d[3] * (2.0 * r * sin_t);
        g_out[0] = d_r * R_MAX * s0 * (1.0 - s0);
        g_out[1] = d_theta * PI * s1 * (1.0 - s1);
        let t2 = c[2].tanh();
        let t3 = c[3].tanh();
        g_out[2] = d[1] * 2.0 * (1.0 - t2 * t2);
        g_out[3] = d[2] * (1.0 - t3 * t3);
        g_out[4] = d[0] / n_sections as f64;
    }

    Ok(LossGradient {
        loss: loss / k_bins,
        grad,
    })
}
