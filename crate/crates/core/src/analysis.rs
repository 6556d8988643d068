//! Measurement helpers: spectral peaks, spectrograms and their similarity,
//! and 32-bit float WAV output.

use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Local maxima of `values`, strongest first. Plateaus report their first bin.
pub fn find_peaks(values: &[f64]) -> Vec<usize> {
    if values.len() < 3 {
        return Vec::new();
    }
    let mut peaks: Vec<usize> = (1..values.len() - 1)
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks
}

/// Frequency of the local maximum at `i`, refined by fitting a parabola
/// through the three samples in log frequency.
pub fn peak_frequency(freqs: &[f64], values: &[f64], i: usize) -> f64 {
    let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
    let curve = a - 2.0 * b + c;
    let d = if curve < 0.0 {
        0.5 * (a - c) / curve
    } else {
        0.0
    };
    let step = if d >= 0.0 {
        (freqs[i + 1] / freqs[i]).ln()
    } else {
        (freqs[i] / freqs[i - 1]).ln()
    };
    freqs[i] * (d * step).exp()
}

/// Relative frequency error of each of the `count` strongest target peaks
/// against the nearest predicted peak (`inf` if the prediction has none).
pub fn peak_frequency_errors(
    freqs: &[f64],
    target_db: &[f64],
    pred_db: &[f64],
    count: usize,
) -> Vec<f64> {
    let pred: Vec<f64> = find_peaks(pred_db)
        .iter()
        .map(|&i| peak_frequency(freqs, pred_db, i))
        .collect();
    find_peaks(target_db)
        .iter()
        .take(count)
        .map(|&i| {
            let f = peak_frequency(freqs, target_db, i);
            pred.iter()
                .map(|p| (p - f).abs() / f)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Magnitude STFT with a periodic Hann window.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: f64,
    /// `frames[t][k]`, `k` in `0..=frame_len / 2`.
    pub frames: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.frame_len as f64
    }

    pub fn frame_time(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate
    }

    /// Frequency of the strongest bin of each frame.
    pub fn peak_track(&self) -> Vec<f64> {
        self.frames
            .iter()
            .map(|f| {
                let k = f
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map_or(0, |(k, _)| k);
                self.bin_freq(k)
            })
            .collect()
    }

    /// Frames scaled to dB relative to the global maximum, floored at `-range_db`.
    pub fn log_frames(&self, range_db: f64) -> Vec<Vec<f64>> {
        let max = self.frames.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
        let floor = 10f64.powf(-range_db / 20.0) * max.max(f64::MIN_POSITIVE);
        self.frames
            .iter()
            .map(|f| {
                f.iter()
                    .map(|v| 20.0 * (v.max(floor) / max.max(f64::MIN_POSITIVE)).log10())
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self, range_db: f64) -> String {
        let mut out = String::from("time,freq,db\n");
        for (t, frame) in self.log_frames(range_db).iter().enumerate() {
            for (k, v) in frame.iter().enumerate() {
                out.push_str(&format!(
                    "{:.6},{:.3},{:.3}\n",
                    self.frame_time(t),
                    self.bin_freq(k),
                    v
                ));
            }
        }
        out
    }
}

pub fn stft(signal: &[f64], frame_len: usize, hop: usize, sample_rate: f64) -> Result<Spectrogram> {
    if frame_len < 2 || hop == 0 {
        return Err(Error::InvalidParameter(format!(
            "stft frame {frame_len}, hop {hop}"
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let window: Vec<f64> = (0..frame_len)
        .map(|n| {
            (std::f64::consts::PI * n as f64 / frame_len as f64)
                .sin()
                .powi(2)
        })
        .collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_len];
    let mut frames = Vec::new();
    let mut start = 0;
    while start + frame_len <= signal.len().max(frame_len) {
        for (n, b) in buf.iter_mut().enumerate() {
            let x = signal.get(start + n).copied().unwrap_or(0.0);
            *b = Complex64::new(x * window[n], 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..=frame_len / 2].iter().map(|c| c.norm()).collect());
        start += hop;
    }
    Ok(Spectrogram {
        frame_len,
        hop,
        sample_rate,
        frames,
    })
}

/// Cosine similarity of two log-magnitude spectrograms, each normalized to
/// its own peak and floored `range_db` below it, compared as offsets above
/// the floor. Only the common frames are used.
pub fn log_spectrogram_similarity(a: &Spectrogram, b: &Spectrogram, range_db: f64) -> Result<f64> {
    if a.bins() != b.bins() {
        return Err(Error::Dimension(format!(
            "{} vs {} spectrogram bins",
            a.bins(),
            b.bins()
        )));
    }
    let (la, lb) = (a.log_frames(range_db), b.log_frames(range_db));
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (fa, fb) in la.iter().zip(&lb) {
        for (x, y) in fa.iter().zip(fb) {
            let (x, y) = (x + range_db, y + range_db);
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(if aa == bb { 1.0 } else { 0.0 });
    }
    Ok(ab / (aa.sqrt() * bb.sqrt()))
}

pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wav_err = |e: hound::Error| Error::format("wav", e.to_string());
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for s in samples {
        w.write_sample(*s as f32).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let wav_err = |e: hound::Error| Error::format("wav", e.to_string());
    let mut r = hound::WavReader::open(path).map_err(wav_err)?;
    let rate = r.spec().sample_rate;
    let samples = r
        .samples::<f32>()
        .collect::<std::result::Result<_, _>>()
        .map_err(wav_err)?;
    Ok((samples, rate))
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
