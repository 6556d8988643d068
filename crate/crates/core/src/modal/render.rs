//! Driving-point responses and reference audio from modal data.
//!
//! Mode `k` becomes the two-pole resonator
//! `phi_k(p)^2 / (1 - 2 R cos(theta) z^-1 + R^2 z^-2)` with
//! `R = exp(-sigma_k / sr)` and `theta = omega_k / sr` (impulse invariance of
//! the decaying mode). Modes at or above Nyquist are dropped.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::modal::{ModalBasis, ModalData, NodeLookup};
use crate::resonator::{to_db, FrequencyGrid, MagnitudeResponse};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalResonator {
    pub amplitude: f64,
    pub radius: f64,
    /// Pole angle, radians per sample.
    pub theta: f64,
}

impl ModalResonator {
    #[inline]
    pub fn response(&self, zinv: Complex64) -> Complex64 {
        let den = 1.0 - 2.0 * self.radius * self.theta.cos() * zinv
            + self.radius * self.radius * zinv * zinv;
        self.amplitude / den
    }
}

/// Resonators seen from the vertex nearest to `pos`.
pub fn modal_resonators(
    modal: &ModalData,
    pos: [f64; 2],
    sample_rate: f64,
) -> (Vec<ModalResonator>, NodeLookup) {
    let lookup = modal.nearest_node(pos);
    let res = modal
        .omega
        .iter()
        .zip(&modal.sigma)
        .zip(&modal.shapes)
        .filter(|((w, _), _)| **w / sample_rate < PI)
        .map(|((w, s), shape)| {
            let phi = shape[lookup.node];
            ModalResonator {
                amplitude: phi * phi,
                radius: (-s / sample_rate).exp(),
                theta: w / sample_rate,
            }
        })
        .collect();
    (res, lookup)
}

/// Driving-point magnitude response at `pos`. The lookup flags positions
/// outside the shape, which fall back to the nearest interior vertex.
pub fn target_response(
    modal: &ModalData,
    pos: [f64; 2],
    grid: &FrequencyGrid,
) -> Result<(MagnitudeResponse, NodeLookup)> {
    let (res, lookup) = modal_resonators(modal, pos, grid.sample_rate());
    let db = grid
        .zinv()
        .iter()
        .map(|&z| to_db(res.iter().map(|r| r.response(z)).sum()))
        .collect();
    Ok((
        MagnitudeResponse {
            freqs: grid.freqs().to_vec(),
            db,
        },
        lookup,
    ))
}

/// Sum of modal resonator outputs, same length as the input.
fn run_resonators(res: &[ModalResonator], input: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|y| *y = 0.0);
    for r in res {
        let c1 = 2.0 * r.radius * r.theta.cos();
        let c2 = r.radius * r.radius;
        let (mut y1, mut y2) = (0.0, 0.0);
        for (x, o) in input.iter().zip(out.iter_mut()) {
            let y = r.amplitude * x + c1 * y1 - c2 * y2;
            y2 = y1;
            y1 = y;
            *o += y;
        }
    }
}

/// Excitation filtered through the modal resonators at `pos`.
pub fn render_reference(
    modal: &ModalData,
    excitation: &[f64],
    pos: [f64; 2],
    sample_rate: f64,
) -> Result<Vec<f64>> {
    crate::error::check_finite("excitation", excitation)?;
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample rate {sample_rate}"
        )));
    }
    let (res, _) = modal_resonators(modal, pos, sample_rate);
    let mut out = vec![0.0; excitation.len()];
    run_resonators(&res, excitation, &mut out);
    Ok(out)
}

/// Frame layout for the overlap-add reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OlaConfig {
    pub hop: usize,
    pub window: usize,
}

impl OlaConfig {
    /// Hann window with 50% overlap.
    pub fn half_overlap(hop: usize) -> Self {
        OlaConfig {
            hop,
            window: 2 * hop,
        }
    }
}

/// Time-varying reference: each frame renders the whole excitation through
/// the system frozen at the frame centre's parameters, and frames are
/// overlap-added with a Hann window `sin^2(pi (n + 1/2) / N)` divided by the
/// running window sum.
pub fn render_modulated_reference(
    basis: &ModalBasis,
    schedule: &dyn Fn(f64) -> MaterialParams,
    pos: [f64; 2],
    excitation: &[f64],
    ola: OlaConfig,
    sample_rate: f64,
) -> Result<Vec<f64>> {
    crate::error::check_finite("excitation", excitation)?;
    if ola.hop == 0 || ola.window == 0 {
        return Err(Error::InvalidParameter(
            "hop and window must be positive".into(),
        ));
    }
    if ola.hop > ola.window {
        return Err(Error::InvalidParameter(format!(
            "hop {} larger than window {}",
            ola.hop, ola.window
        )));
    }
    let total = excitation.len();
    let win: Vec<f64> = (0..ola.window)
        .map(|n| (PI * (n as f64 + 0.5) / ola.window as f64).sin().powi(2))
        .collect();
    let mut acc = vec![0.0; total];
    let mut wsum = vec![0.0; total];
    let mut frame_out = vec![0.0; total];
    let mut start = -((ola.window - ola.hop) as i64);
    while start < total as i64 {
        let centre = (start as f64 + ola.window as f64 / 2.0).clamp(0.0, total as f64);
        let modal = basis.modal_data(&schedule(centre / sample_rate))?;
        let (res, _) = modal_resonators(&modal, pos, sample_rate);
        let end = ((start + ola.window as i64) as usize).min(total);
        run_resonators(&res, &excitation[..end], &mut frame_out[..end]);
        let from = start.max(0) as usize;
        for t in from..end {
            let w = win[(t as i64 - start) as usize];
            acc[t] += w * frame_out[t];
            wsum[t] += w;
        }
        start += ola.hop as i64;
    }
    Ok(acc.iter().zip(&wsum).map(|(a, w)| a / w).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::shape::ShapeGrid;
    use crate::modal::{apply_rayleigh, PlateConfig};

    fn rect_basis() -> ModalBasis {
        ModalBasis::new(
            &ShapeGrid::rectangle(12, 20, 40, 24).unwrap(),
            PlateConfig {
                n_modes: 10,
                ..PlateConfig::default()
            },
        )
        .unwrap()
    }

    fn single_mode(modal: &ModalData, k: usize) -> ModalData {
        let mut m = modal.clone();
        m.omega = vec![modal.omega[k]];
        m.sigma = vec![modal.sigma[k]];
        m.shapes = vec![modal.shapes[k].clone()];
        m
    }

    fn impulse(len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        x[0] = 1.0;
        x
    }

    #[test]
    fn zero_excitation_gives_silence() {
        let modal = rect_basis().modal_data(&MaterialParams::default()).unwrap();
        let y = render_reference(&modal, &[0.0; 512], [0.5, 0.5], 44_100.0).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rendering_is_linear_in_modes() {
        let modal = rect_basis().modal_data(&MaterialParams::default()).unwrap();
        let x = impulse(2048);
        let pos = [0.31, 0.52];
        let both = {
            let mut m = modal.clone();
            m.omega.truncate(2);
            m.sigma.truncate(2);
            m.shapes.truncate(2);
            render_reference(&m, &x, pos, 44_100.0).unwrap()
        };
        let a = render_reference(&single_mode(&modal, 0), &x, pos, 44_100.0).unwrap();
        let b = render_reference(&single_mode(&modal, 1), &x, pos, 44_100.0).unwrap();
        for i in 0..x.len() {
            assert!((both[i] - a[i] - b[i]).abs() <= 1e-12 * both[i].abs().max(1.0));
        }
    }

    #[test]
    fn undamped_peaks_sit_at_mode_frequencies() {
        let basis = rect_basis();
        let modal = apply_rayleigh(
            &basis.modal_data(&MaterialParams::default()).unwrap(),
            0.0,
            0.0,
        )
        .unwrap();
        let grid = FrequencyGrid::log_spaced(1024, 20.0, 19_845.0, 44_100.0).unwrap();
        let (resp, lookup) = target_response(&modal, [0.33, 0.41], &grid).unwrap();
        assert!(lookup.inside);
        for k in 0..modal.n_modes() {
            let f = modal.omega[k] / (2.0 * PI);
            let phi = modal.shapes[k][lookup.node];
            if phi.abs() < 1e-3 * modal.shapes[k].iter().fold(0.0f64, |m, v| m.max(v.abs())) {
                continue;
            }
            let nearest = grid
                .freqs()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
                .unwrap()
                .0;
            let local_max = (nearest.saturating_sub(1)..=(nearest + 1).min(1023))
                .max_by(|&a, &b| resp.db[a].total_cmp(&resp.db[b]))
                .unwrap();
            assert!(local_max.abs_diff(nearest) <= 1, "mode {k} at {f} Hz");
        }
    }

    #[test]
    fn mode_vanishes_on_its_nodal_line() {
        // mode shapes of the centred rectangle are antisymmetric for even indices;
        // on the vertical mid-line the (2,1) mode has no amplitude
        let modal = rect_basis().modal_data(&MaterialParams::default()).unwrap();
        let (res, lookup) = modal_resonators(&modal, [32.0 / 64.0, 32.0 / 64.0], 44_100.0);
        assert!(lookup.inside);
        // second mode of a 40x24 rectangle is (2,1)
        assert!(res[1].amplitude < 1e-20, "{}", res[1].amplitude);
        assert!(res[0].amplitude > 1e-6);
    }

    #[test]
    fn mirrored_positions_give_identical_responses() {
        let modal = rect_basis().modal_data(&MaterialParams::default()).unwrap();
        let grid = FrequencyGrid::default_for(44_100.0).unwrap();
        // rectangle spans x in [12, 52] cells; mirror about x = 32 cells
        let (a, _) = target_response(&modal, [20.0 / 64.0, 27.0 / 64.0], &grid).unwrap();
        let (b, _) = target_response(&modal, [44.0 / 64.0, 27.0 / 64.0], &grid).unwrap();
        let (c, _) = target_response(&modal, [20.0 / 64.0, 37.0 / 64.0], &grid).unwrap();
        for k in 0..grid.len() {
            assert!((a.db[k] - b.db[k]).abs() < 1e-6, "bin {k}");
            assert!((a.db[k] - c.db[k]).abs() < 1e-6, "bin {k}");
        }
    }

    #[test]
    fn ola_with_constant_schedule_matches_frozen_render() {
        let basis = rect_basis();
        let mat = MaterialParams::default();
        let modal = basis.modal_data(&mat).unwrap();
        let x = impulse(6000);
        let frozen = render_reference(&modal, &x, [0.3, 0.4], 44_100.0).unwrap();
        let ola = render_modulated_reference(
            &basis,
            &|_| mat,
            [0.3, 0.4],
            &x,
            OlaConfig::half_overlap(256),
            44_100.0,
        )
        .unwrap();
        let scale = frozen.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in frozen.iter().zip(&ola) {
            assert!((a - b).abs() < 1e-6 * scale);
        }
        assert!(render_modulated_reference(
            &basis,
            &|_| mat,
            [0.3, 0.4],
            &x,
            OlaConfig {
                hop: 600,
                window: 512
            },
            44_100.0
        )
        .is_err());
    }

    #[test]
    fn material_scaling_of_frequencies() {
        let basis = rect_basis();
        let base = MaterialParams::default();
        let w0 = basis.modal_data(&base).unwrap().omega;
        let stiff = basis
            .modal_data(&MaterialParams {
                youngs_modulus: 4.0 * base.youngs_modulus,
                ..base
            })
            .unwrap()
            .omega;
        let dense = basis
            .modal_data(&MaterialParams {
                density: 4.0 * base.density,
                ..base
            })
            .unwrap()
            .omega;
        for k in 0..w0.len() {
            assert!((stiff[k] / w0[k] - 2.0).abs() < 1e-12);
            assert!((dense[k] / w0[k] - 0.5).abs() < 1e-12);
        }
    }
}
