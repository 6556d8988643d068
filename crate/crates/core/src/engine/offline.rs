use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::modal::ShapeGrid;
use crate::neural::{Model, ShapeLatent};

use super::{engine, ControlMessage, EngineConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleParam {
    Density,
    YoungsModulus,
    PoissonRatio,
    Alpha,
    Beta,
    X,
    Y,
}

/// Piecewise-linear breakpoints `[time_s, value]` per parameter. Parameters
/// without a track keep their base value; values hold outside the first and
/// last breakpoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModulationSchedule {
    pub tracks: BTreeMap<ScheduleParam, Vec<[f64; 2]>>,
}

impl ModulationSchedule {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn with(mut self, param: ScheduleParam, points: Vec<[f64; 2]>) -> Self {
        self.tracks.insert(param, points);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (param, pts) in &self.tracks {
            if pts.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "{param:?} track has no breakpoints"
                )));
            }
            if pts.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{param:?} track is not finite"
                )));
            }
            if pts.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return Err(Error::InvalidParameter(format!(
                    "{param:?} timestamps must increase"
                )));
            }
        }
        Ok(())
    }

    /// Latest breakpoint time over all tracks.
    pub fn end_time(&self) -> f64 {
        self.tracks
            .values()
            .filter_map(|p| p.last().map(|b| b[0]))
            .fold(0.0, f64::max)
    }

    fn track_value(pts: &[[f64; 2]], t: f64) -> f64 {
        let i = pts.partition_point(|b| b[0] <= t);
        if i == 0 {
            return pts[0][1];
        }
        if i == pts.len() {
            return pts[i - 1][1];
        }
        let (a, b) = (pts[i - 1], pts[i]);
        a[1] + (t - a[0]) / (b[0] - a[0]) * (b[1] - a[1])
    }

    pub fn evaluate(
        &self,
        t: f64,
        base: MaterialParams,
        pos: [f64; 2],
    ) -> (MaterialParams, [f64; 2]) {
        let mut m = base;
        let mut p = pos;
        for (param, pts) in &self.tracks {
            let v = Self::track_value(pts, t);
            match param {
                ScheduleParam::Density => m.density = v,
                ScheduleParam::YoungsModulus => m.youngs_modulus = v,
                ScheduleParam::PoissonRatio => m.poisson_ratio = v,
                ScheduleParam::Alpha => m.alpha = v,
                ScheduleParam::Beta => m.beta = v,
                ScheduleParam::X => p[0] = v,
                ScheduleParam::Y => p[1] = v,
            }
        }
        (m, p)
    }
}

/// One section's coefficients at one control tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientRow {
    pub tick: u64,
    pub section: usize,
    pub g: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineRender {
    pub audio: Vec<f64>,
    pub log: Vec<CoefficientRow>,
    /// Ticks whose position fell outside the shape.
    pub outside_ticks: usize,
}

impl OfflineRender {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("tick,section,g,b1,b2,a1,a2\n");
        for r in &self.log {
            s.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e}\n",
                r.tick, r.section, r.g, r.b1, r.b2, r.a1, r.a2
            ));
        }
        s
    }
}

/// Deterministic render: each control tick evaluates the schedule, predicts,
/// swaps coefficients and renders up to the next tick. `excitation` starts at
/// sample 0 and is cut or zero-padded to the duration.
#[allow(clippy::too_many_arguments)]
pub fn render_offline(
    model: &Model,
    config: &EngineConfig,
    shape: &ShapeGrid,
    material: MaterialParams,
    position: [f64; 2],
    schedule: &ModulationSchedule,
    excitation: &[f64],
    duration: f64,
) -> Result<OfflineRender> {
    schedule.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter(format!("duration {duration}")));
    }
    if schedule
        .tracks
        .values()
        .flatten()
        .any(|b| b[0] < 0.0 || b[0] > duration)
    {
        return Err(Error::InvalidParameter(format!(
            "schedule breakpoints must lie in [0, {duration}] s"
        )));
    }
    let (mut ctl, mut rend) = engine(Some(model.clone()), config.clone())?;
    ctl.control_step(ControlMessage::SetShape(shape.clone()))?;
    let total = (duration * config.sample_rate).round() as u64;
    let mut audio = vec![0.0; total as usize];
    let mut log = Vec::new();
    let mut outside_ticks = 0;
    let mut tick = 0u64;
    while config.tick_start(tick) < total {
        let t = tick as f64 / config.control_rate;
        let (m, p) = schedule.evaluate(t, material, position);
        if ctl.update(m, p)?.outside {
            outside_ticks += 1;
        }
        for (i, s) in ctl.bank().expect("published").sections().iter().enumerate() {
            log.push(CoefficientRow {
                tick,
                section: i,
                g: s.g,
                b1: s.b1,
                b2: s.b2,
                a1: s.a1,
                a2: s.a2,
            });
        }
        let s0 = config.tick_start(tick) as usize;
        let s1 = config.tick_start(tick + 1).min(total) as usize;
        let src = &excitation[s0.min(excitation.len())..s1.min(excitation.len())];
        if !src.is_empty() {
            ctl.push_excitation(src, s0 == 0);
        }
        rend.render(&mut audio[s0..s1]);
        tick += 1;
    }
    Ok(OfflineRender {
        audio,
        log,
        outside_ticks,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    X,
    Y,
}

/// `steps` positions from `start` to `end` along `axis`, with the other
/// coordinate held at `fixed`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub fixed: f64,
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl SweepSpec {
    /// The unit interval at resolution `1 / (steps - 1)`.
    pub fn unit(axis: SweepAxis, fixed: f64, steps: usize) -> Self {
        SweepSpec {
            axis,
            fixed,
            start: 0.0,
            end: 1.0,
            steps,
        }
    }
}

/// Averages over all sections at one sweep position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub coord: f64,
    pub inside: bool,
    pub gain: f64,
    pub zero_radius: f64,
    pub pole_radius: f64,
}

impl SweepRow {
    fn values(&self) -> [f64; 3] {
        [self.gain, self.zero_radius, self.pole_radius]
    }
}

/// Largest adjacent-step change of one column against the median step
/// between rows that are both inside the shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub max_step: f64,
    pub interior_median: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Indices `i` where rows `i - 1` and `i` straddle the outline.
    pub fn boundary_crossings(&self) -> Vec<usize> {
        (1..self.rows.len())
            .filter(|&i| self.rows[i].inside != self.rows[i - 1].inside)
            .collect()
    }

    /// Stats for gain, zero radius and pole radius, in that order.
    pub fn smoothness(&self) -> [StepStats; 3] {
        std::array::from_fn(|c| {
            let steps: Vec<(f64, bool)> = self
                .rows
                .windows(2)
                .map(|w| {
                    (
                        (w[1].values()[c] - w[0].values()[c]).abs(),
                        w[0].inside && w[1].inside,
                    )
                })
                .collect();
            let max_step = steps.iter().map(|s| s.0).fold(0.0, f64::max);
            let mut interior: Vec<f64> = steps.iter().filter(|s| s.1).map(|s| s.0).collect();
            interior.sort_by(f64::total_cmp);
            let interior_median = if interior.is_empty() {
                f64::NAN
            } else if interior.len() % 2 == 1 {
                interior[interior.len() / 2]
            } else {
                0.5 * (interior[interior.len() / 2 - 1] + interior[interior.len() / 2])
            };
            let ratio = if max_step == 0.0 {
                0.0
            } else {
                max_step / interior_median
            };
            StepStats {
                max_step,
                interior_median,
                ratio,
            }
        })
    }

    pub fn to_csv(&self) -> String {
        let crossings = self.boundary_crossings();
        let mut s =
            String::from("coord,inside,boundary,mean_abs_gain,mean_zero_radius,mean_pole_radius\n");
        for (i, r) in self.rows.iter().enumerate() {
            s.push_str(&format!(
                "{:.6},{},{},{:e},{:e},{:e}\n",
                r.coord,
                r.inside as u8,
                crossings.contains(&i) as u8,
                r.gain,
                r.zero_radius,
                r.pole_radius
            ));
        }
        s
    }
}

/// Mean |g|, zero radius and pole radius over all sections at evenly spaced
/// positions, inside and outside the shape.
pub fn sweep_position(
    model: &Model,
    latent: &ShapeLatent,
    shape: &ShapeGrid,
    material: &MaterialParams,
    spec: &SweepSpec,
) -> Result<SweepTable> {
    if spec.steps == 0
        || !(spec.start.is_finite() && spec.end.is_finite() && spec.fixed.is_finite())
    {
        return Err(Error::InvalidParameter(
            "sweep needs finite bounds and at least one step".into(),
        ));
    }
    let phi = material.normalize();
    let mut rows = Vec::with_capacity(spec.steps);
    for i in 0..spec.steps {
        let coord = if spec.steps == 1 {
            spec.start
        } else {
            spec.start + (spec.end - spec.start) * i as f64 / (spec.steps - 1) as f64
        };
        let pos = match spec.axis {
            SweepAxis::X => [coord, spec.fixed],
            SweepAxis::Y => [spec.fixed, coord],
        };
        let bank = model.predict_bank(latent, pos, &phi)?;
        let n = bank.sections().len() as f64;
        let mean = |f: &dyn Fn(&crate::resonator::BiquadSection) -> f64| {
            bank.sections().iter().map(f).sum::<f64>() / n
        };
        rows.push(SweepRow {
            coord,
            inside: shape.contains(pos),
            gain: mean(&|s| s.g.abs()),
            zero_radius: mean(&|s| s.zero_radius()),
            pole_radius: mean(&|s| s.pole_radius()),
        });
    }
    Ok(SweepTable { rows })
}
