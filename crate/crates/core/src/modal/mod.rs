//! Finite-element modal ground truth for plate-like shapes.

pub mod eigen;
pub mod fem;
pub mod mesh;
pub mod render;
pub mod shape;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::MaterialParams;

pub use eigen::{EigenMethod, Eigenpairs};
pub use fem::{assemble, PlateSystem, DEFAULT_THICKNESS};
pub use mesh::{triangulate, TriMesh, DEFAULT_PHYSICAL_SIZE};
pub use render::{
    render_modulated_reference, render_reference, target_response, ModalResonator, OlaConfig,
};
pub use shape::{random_shape, random_shape_with, BlobParams, ShapeGrid};

pub const DEFAULT_MODES: usize = 32;

/// Plate discretization settings shared by every material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateConfig {
    /// Side of the square the 64x64 grid spans, meters.
    pub physical_size: f64,
    /// Plate thickness, meters.
    pub thickness: f64,
    pub n_modes: usize,
}

impl Default for PlateConfig {
    fn default() -> Self {
        PlateConfig {
            physical_size: DEFAULT_PHYSICAL_SIZE,
            thickness: DEFAULT_THICKNESS,
            n_modes: DEFAULT_MODES,
        }
    }
}

/// Modes of a discretized plate.
#[derive(Clone, Debug)]
pub struct ModalData {
    /// Angular eigenfrequencies, rad/s, ascending.
    pub omega: Vec<f64>,
    /// Decay rates, 1/s.
    pub sigma: Vec<f64>,
    /// Mass-normalized mode shapes over all mesh vertices (zero on the outline).
    pub shapes: Vec<Vec<f64>>,
    /// Vertex positions in `[0, 1]^2`.
    pub node_positions: Vec<[f64; 2]>,
    pub boundary: Vec<bool>,
    pub grid: ShapeGrid,
}

/// Result of mapping a continuous position onto the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeLookup {
    pub node: usize,
    /// False when the position is outside the occupied cells.
    pub inside: bool,
}

impl ModalData {
    pub fn n_modes(&self) -> usize {
        self.omega.len()
    }

    /// Nearest interior vertex to a normalized position.
    pub fn nearest_node(&self, pos: [f64; 2]) -> NodeLookup {
        let node = self
            .node_positions
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.boundary[*i])
            .map(|(i, p)| (i, (p[0] - pos[0]).powi(2) + (p[1] - pos[1]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("plate has interior vertices");
        NodeLookup {
            node,
            inside: self.grid.contains(pos),
        }
    }

    /// Normalized positions of interior vertices.
    pub fn interior_nodes(&self) -> Vec<[f64; 2]> {
        self.node_positions
            .iter()
            .zip(&self.boundary)
            .filter(|(_, b)| !**b)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Generalized eigensolve of an assembled plate; damping left at zero.
pub fn eigensolve(sys: &PlateSystem, n_modes: usize) -> Result<ModalData> {
    eigensolve_with(sys, n_modes, EigenMethod::Auto)
}

pub fn eigensolve_with(
    sys: &PlateSystem,
    n_modes: usize,
    method: EigenMethod,
) -> Result<ModalData> {
    let pairs = eigen::smallest_eigenpairs(sys, n_modes, method)?;
    let n_nodes = sys.node_positions.len();
    let shapes = pairs
        .vectors
        .iter()
        .map(|v| {
            let mut full = vec![0.0; n_nodes];
            for (&node, x) in sys.dofs.iter().zip(v) {
                full[node] = *x;
            }
            full
        })
        .collect();
    let omega: Vec<f64> = pairs
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    if omega.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Eigensolver("non-positive eigenfrequency".into()));
    }
    Ok(ModalData {
        sigma: vec![0.0; omega.len()],
        omega,
        shapes,
        node_positions: sys.node_positions.clone(),
        boundary: sys.boundary.clone(),
        grid: sys.grid.clone(),
    })
}

/// Per-mode decay `sigma = (alpha + beta omega^2) / 2`.
pub fn apply_rayleigh(modal: &ModalData, alpha: f64, beta: f64) -> Result<ModalData> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "damping must be non-negative (alpha={alpha}, beta={beta})"
        )));
    }
    let mut out = modal.clone();
    out.sigma = modal
        .omega
        .iter()
        .map(|w| (alpha + beta * w * w) / 2.0)
        .collect();
    Ok(out)
}

/// Eigen-solution of a shape for unit rigidity and unit areal density.
///
/// For a fixed mesh the stiffness is linear in `D` and the mass linear in
/// `rho h`, so any material follows by exact rescaling:
/// `omega = omega_unit sqrt(D / (rho h))`, `phi = phi_unit / sqrt(rho h)`.
#[derive(Clone, Debug)]
pub struct ModalBasis {
    unit: ModalData,
    pub plate: PlateConfig,
}

impl ModalBasis {
    pub fn new(grid: &ShapeGrid, plate: PlateConfig) -> Result<Self> {
        let mesh = triangulate(grid, plate.physical_size)?;
        let sys = fem::assemble_unit(&mesh)?;
        Ok(ModalBasis {
            unit: eigensolve(&sys, plate.n_modes)?,
            plate,
        })
    }

    pub fn grid(&self) -> &ShapeGrid {
        &self.unit.grid
    }

    pub fn unit(&self) -> &ModalData {
        &self.unit
    }

    /// Damped modes for a material.
    pub fn modal_data(&self, mat: &MaterialParams) -> Result<ModalData> {
        mat.validate()?;
        let d = mat.flexural_rigidity(self.plate.thickness);
        let rho_h = mat.areal_density(self.plate.thickness);
        let freq_scale = (d / rho_h).sqrt();
        let shape_scale = 1.0 / rho_h.sqrt();
        let mut out = self.unit.clone();
        out.omega.iter_mut().for_each(|w| *w *= freq_scale);
        for s in &mut out.shapes {
            s.iter_mut().for_each(|x| *x *= shape_scale);
        }
        apply_rayleigh(&out, mat.alpha, mat.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::fem::assemble;

    #[test]
    fn rayleigh_examples() {
        let modal = ModalData {
            omega: vec![100.0, 200.0, 400.0],
            sigma: vec![0.0; 3],
            shapes: vec![],
            node_positions: vec![],
            boundary: vec![],
            grid: ShapeGrid::full(),
        };
        assert!(apply_rayleigh(&modal, 0.0, 0.0)
            .unwrap()
            .sigma
            .iter()
            .all(|s| *s == 0.0));
        assert!(apply_rayleigh(&modal, 2.0, 0.0)
            .unwrap()
            .sigma
            .iter()
            .all(|s| *s == 1.0));
        let s = apply_rayleigh(&modal, 1.0, 1e-6).unwrap().sigma;
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(s[1], (1.0 + 1e-6 * 200.0 * 200.0) / 2.0);
        assert!(apply_rayleigh(&modal, -1.0, 0.0).is_err());
        assert!(apply_rayleigh(&modal, 1.0, -1e-7).is_err());
    }

    #[test]
    fn rescaled_basis_matches_direct_solve() {
        let grid = ShapeGrid::rectangle(10, 20, 20, 14).unwrap();
        let plate = PlateConfig {
            n_modes: 8,
            ..PlateConfig::default()
        };
        let basis = ModalBasis::new(&grid, plate).unwrap();
        let mat = MaterialParams {
            density: 2700.0,
            youngs_modulus: 3.1e10,
            poisson_ratio: 0.33,
            alpha: 3.0,
            beta: 1e-6,
        };
        let from_basis = basis.modal_data(&mat).unwrap();
        let sys = assemble(
            &triangulate(&grid, plate.physical_size).unwrap(),
            &mat,
            plate.thickness,
        )
        .unwrap();
        let direct = apply_rayleigh(&eigensolve(&sys, 8).unwrap(), mat.alpha, mat.beta).unwrap();
        for k in 0..8 {
            assert!((from_basis.omega[k] - direct.omega[k]).abs() < 1e-9 * direct.omega[k]);
            assert!((from_basis.sigma[k] - direct.sigma[k]).abs() < 1e-9 * direct.sigma[k]);
        }
        // non-degenerate rectangle: shapes agree up to rounding
        for k in 0..8 {
            let err = from_basis.shapes[k]
                .iter()
                .zip(&direct.shapes[k])
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let scale = direct.shapes[k].iter().fold(0.0f64, |m, a| m.max(a.abs()));
            assert!(err < 1e-7 * scale, "mode {k}: {err} vs {scale}");
        }
    }

    #[test]
    fn nearest_node_skips_outline() {
        let grid = ShapeGrid::rectangle(0, 0, 32, 32).unwrap();
        let basis = ModalBasis::new(
            &grid,
            PlateConfig {
                n_modes: 4,
                ..PlateConfig::default()
            },
        )
        .unwrap();
        let m = basis.unit();
        let at_corner = m.nearest_node([0.0, 0.0]);
        assert!(at_corner.inside);
        assert_eq!(m.node_positions[at_corner.node], [1.0 / 64.0, 1.0 / 64.0]);
        let outside = m.nearest_node([0.9, 0.9]);
        assert!(!outside.inside);
        assert!(!m.boundary[outside.node]);
    }
}
