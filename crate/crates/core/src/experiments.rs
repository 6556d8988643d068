//! Modulation and sweep experiments on a trained model, compared against
//! the modal reference where one exists.

use serde::{Deserialize, Serialize};

use crate::analysis::{log_spectrogram_similarity, stft, Spectrogram};
use crate::engine::{
    render_offline, sweep_position, EngineConfig, ModulationSchedule, OfflineRender, ScheduleParam,
    SweepAxis, SweepSpec, SweepTable,
};
use crate::error::{Error, Result};
use crate::excitation::{kaiser_impulse, ImpulseSpec};
use crate::material::MaterialParams;
use crate::modal::{render_modulated_reference, ModalBasis, OlaConfig, PlateConfig, ShapeGrid};
use crate::neural::Model;

pub const SPECTROGRAM_RANGE_DB: f64 = 80.0;

/// A Young's-modulus ramp after a single hit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlideConfig {
    pub duration: f64,
    pub e_start: f64,
    pub e_end: f64,
    /// Everything but Young's modulus.
    pub material: MaterialParams,
    /// Hit position; `None` picks the interior vertex nearest the centroid.
    pub position: Option<[f64; 2]>,
    pub impulse: ImpulseSpec,
    pub ola_hop: usize,
    pub frame_len: usize,
    pub frame_hop: usize,
}

impl Default for GlideConfig {
    fn default() -> Self {
        GlideConfig {
            duration: 1.0,
            e_start: 5e10,
            e_end: 8e9,
            material: MaterialParams {
                alpha: 1.0,
                beta: 3e-7,
                ..MaterialParams::default()
            },
            position: None,
            impulse: ImpulseSpec::default(),
            ola_hop: 512,
            frame_len: 2048,
            frame_hop: 512,
        }
    }
}

impl GlideConfig {
    pub fn schedule(&self) -> ModulationSchedule {
        ModulationSchedule::constant().with(
            ScheduleParam::YoungsModulus,
            vec![[0.0, self.e_start], [self.duration, self.e_end]],
        )
    }
}

#[derive(Clone, Debug)]
pub struct GlideResult {
    pub position: [f64; 2],
    pub neural: OfflineRender,
    pub reference: Vec<f64>,
    pub neural_spec: Spectrogram,
    pub reference_spec: Spectrogram,
    pub similarity: f64,
    /// Octaves per second of the dominant spectral peak.
    pub neural_slope: f64,
    pub reference_slope: f64,
}

/// Least-squares slope of `log2(track)` against time.
pub fn glide_slope(spec: &Spectrogram) -> f64 {
    let track = spec.peak_track();
    let pts: Vec<(f64, f64)> = track
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(t, f)| (spec.frame_time(t), f.log2()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mf = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mf)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    cov / var
}

/// Interior mesh vertex closest to the shape's centroid.
pub fn central_position(basis: &ModalBasis) -> [f64; 2] {
    let c = basis.grid().centroid();
    basis
        .unit()
        .interior_nodes()
        .into_iter()
        .min_by(|a, b| {
            let da = (a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2);
            let db = (b[0] - c[0]).powi(2) + (b[1] - c[1]).powi(2);
            da.total_cmp(&db)
        })
        .unwrap_or(c)
}

/// Neural render under the ramp next to the overlap-added modal reference.
pub fn young_modulus_glide(
    model: &Model,
    engine: &EngineConfig,
    shape: &ShapeGrid,
    plate: PlateConfig,
    cfg: &GlideConfig,
) -> Result<GlideResult> {
    let basis = ModalBasis::new(shape, plate)?;
    let position = cfg.position.unwrap_or_else(|| central_position(&basis));
    let sr = engine.sample_rate;
    let total = (cfg.duration * sr).round() as usize;
    let mut excitation = kaiser_impulse(&cfg.impulse)?;
    excitation.resize(total, 0.0);
    let schedule = cfg.schedule();
    let neural = render_offline(
        model,
        engine,
        shape,
        cfg.material,
        position,
        &schedule,
        &excitation,
        cfg.duration,
    )?;
    let ramp = |t: f64| schedule.evaluate(t, cfg.material, position).0;
    let reference = render_modulated_reference(
        &basis,
        &ramp,
        position,
        &excitation,
        OlaConfig::half_overlap(cfg.ola_hop),
        sr,
    )?;
    if neural
        .audio
        .iter()
        .chain(&reference)
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite {
            what: "glide render",
            index: 0,
        });
    }
    let neural_spec = stft(&neural.audio, cfg.frame_len, cfg.frame_hop, sr)?;
    let reference_spec = stft(&reference, cfg.frame_len, cfg.frame_hop, sr)?;
    let similarity =
        log_spectrogram_similarity(&neural_spec, &reference_spec, SPECTROGRAM_RANGE_DB)?;
    Ok(GlideResult {
        position,
        neural_slope: glide_slope(&neural_spec),
        reference_slope: glide_slope(&reference_spec),
        neural,
        reference,
        neural_spec,
        reference_spec,
        similarity,
    })
}

/// Every parameter ramped from below to above its training range, position
/// sweeping across the shape; there is no modal reference for this.
pub fn extrapolation_schedule(duration: f64) -> ModulationSchedule {
    use crate::material::MATERIAL_RANGES;
    let params = [
        ScheduleParam::Density,
        ScheduleParam::YoungsModulus,
        ScheduleParam::PoissonRatio,
        ScheduleParam::Alpha,
        ScheduleParam::Beta,
    ];
    let mut s = ModulationSchedule::constant();
    for (p, (lo, hi)) in params.into_iter().zip(MATERIAL_RANGES) {
        let span = hi - lo;
        // stay physically admissible: positive values, Poisson below 0.5
        let a = (lo - 0.25 * span).max(0.05 * lo);
        let b = if p == ScheduleParam::PoissonRatio {
            0.49
        } else {
            hi + 0.25 * span
        };
        let pts = if p == ScheduleParam::Density {
            vec![[0.0, b], [duration, a]]
        } else {
            vec![[0.0, a], [duration, b]]
        };
        s = s.with(p, pts);
    }
    s.with(ScheduleParam::X, vec![[0.0, 0.3], [duration, 0.7]])
        .with(ScheduleParam::Y, vec![[0.0, 0.7], [duration, 0.3]])
}

/// Vertical sweep through the centre column at resolution `1 / (steps - 1)`.
pub fn boundary_sweep(
    model: &Model,
    shape: &ShapeGrid,
    material: &MaterialParams,
    x: f64,
    steps: usize,
) -> Result<SweepTable> {
    let latent = model.encode(shape);
    sweep_position(
        model,
        &latent,
        shape,
        material,
        &SweepSpec::unit(SweepAxis::Y, x, steps),
    )
}
