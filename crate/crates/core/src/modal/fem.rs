//! Thin-plate finite-element matrices on linear triangles.
//!
//! Bending stiffness uses the squared-Laplacian form `K = D L Ml^-1 L`, where
//! `L` is the linear-element Laplacian and `Ml` the lumped mass, restricted to
//! interior vertices. Restricting `L` before forming the product gives the
//! simply-supported conditions `w = 0` and `laplacian(w) = 0` on the outline.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::modal::mesh::TriMesh;
use crate::modal::shape::ShapeGrid;

pub const DEFAULT_THICKNESS: f64 = 0.005;

/// Gradients of the three barycentric basis functions and the area.
fn element_geometry(mesh: &TriMesh, t: usize) -> Result<([[f64; 2]; 3], f64)> {
    let area = mesh.area(t);
    if !(area > 1e-300) {
        return Err(Error::DegenerateTriangle(t));
    }
    let p = mesh.triangles[t].map(|i| mesh.vertices[i]);
    let mut grads = [[0.0; 2]; 3];
    for (k, g) in grads.iter_mut().enumerate() {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        *g = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    Ok((grads, area))
}

/// Linear-element Laplacian stiffness over all mesh vertices.
pub fn laplacian_matrix(mesh: &TriMesh) -> Result<CsrMatrix<f64>> {
    let n = mesh.vertex_count();
    let mut coo = CooMatrix::new(n, n);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (grads, area) = element_geometry(mesh, t)?;
        for a in 0..3 {
            for b in 0..3 {
                let v = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                coo.push(tri[a], tri[b], v);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// Consistent linear-element mass matrix (unit areal density).
pub fn consistent_mass(mesh: &TriMesh) -> Result<CsrMatrix<f64>> {
    let n = mesh.vertex_count();
    let mut coo = CooMatrix::new(n, n);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (_, area) = element_geometry(mesh, t)?;
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { 2.0 } else { 1.0 };
                coo.push(tri[a], tri[b], area * w / 12.0);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// Row-sum lumped mass (one third of each adjacent triangle's area).
pub fn lumped_mass(mesh: &TriMesh) -> Result<Vec<f64>> {
    let mut m = vec![0.0; mesh.vertex_count()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (_, area) = element_geometry(mesh, t)?;
        for &v in tri {
            m[v] += area / 3.0;
        }
    }
    Ok(m)
}

fn restrict(full: &CsrMatrix<f64>, dof_of: &[Option<usize>], n: usize) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n, n);
    for (row, col, v) in full.triplet_iter() {
        if let (Some(i), Some(j)) = (dof_of[row], dof_of[col]) {
            coo.push(i, j, *v);
        }
    }
    CsrMatrix::from(&coo)
}

/// Assembled plate restricted to interior (free) vertices.
#[derive(Clone, Debug)]
pub struct PlateSystem {
    /// Mesh vertex index of each degree of freedom.
    pub dofs: Vec<usize>,
    /// `rho h M0` on interior vertices.
    pub mass: CsrMatrix<f64>,
    /// Interior block of the Laplacian.
    pub laplacian: CsrMatrix<f64>,
    /// Lumped mass (area) of interior vertices.
    pub lumped: Vec<f64>,
    /// Flexural rigidity `D`.
    pub rigidity: f64,
    pub areal_density: f64,
    pub node_positions: Vec<[f64; 2]>,
    pub boundary: Vec<bool>,
    pub grid: ShapeGrid,
    pub physical_size: f64,
}

pub(crate) fn csr_matvec(a: &CsrMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let (offsets, cols, vals) = a.csr_data();
    for (row, y) in out.iter_mut().enumerate() {
        let range = offsets[row]..offsets[row + 1];
        *y = cols[range.clone()]
            .iter()
            .zip(&vals[range])
            .map(|(&c, v)| v * x[c])
            .sum();
    }
}

impl PlateSystem {
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn apply_mass(&self, x: &[f64], out: &mut [f64]) {
        csr_matvec(&self.mass, x, out);
    }

    /// `out = D L Ml^-1 L x`.
    pub fn apply_stiffness(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; x.len()];
        csr_matvec(&self.laplacian, x, &mut tmp);
        for (t, m) in tmp.iter_mut().zip(&self.lumped) {
            *t /= m;
        }
        csr_matvec(&self.laplacian, &tmp, out);
        out.iter_mut().for_each(|v| *v *= self.rigidity);
    }

    pub fn mass_dense(&self) -> DMatrix<f64> {
        csr_to_dense(&self.mass)
    }

    pub fn stiffness_dense(&self) -> DMatrix<f64> {
        let l = csr_to_dense(&self.laplacian);
        let mut scaled = l.clone();
        for (i, m) in self.lumped.iter().enumerate() {
            scaled.row_mut(i).scale_mut(1.0 / m);
        }
        (&l * scaled) * self.rigidity
    }
}

pub(crate) fn csr_to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Plate with unit rigidity and unit areal density.
pub fn assemble_unit(mesh: &TriMesh) -> Result<PlateSystem> {
    let lap = laplacian_matrix(mesh)?;
    let mass = consistent_mass(mesh)?;
    let lumped_all = lumped_mass(mesh)?;
    let mut dof_of = vec![None; mesh.vertex_count()];
    let mut dofs = Vec::new();
    for (v, b) in mesh.boundary.iter().enumerate() {
        if !*b {
            dof_of[v] = Some(dofs.len());
            dofs.push(v);
        }
    }
    let n = dofs.len();
    Ok(PlateSystem {
        mass: restrict(&mass, &dof_of, n),
        laplacian: restrict(&lap, &dof_of, n),
        lumped: dofs.iter().map(|&v| lumped_all[v]).collect(),
        dofs,
        rigidity: 1.0,
        areal_density: 1.0,
        node_positions: mesh.normalized.clone(),
        boundary: mesh.boundary.clone(),
        grid: mesh.grid.clone(),
        physical_size: mesh.physical_size,
    })
}

/// Mass `rho h M0` and stiffness `D L Ml^-1 L` for a material and thickness.
pub fn assemble(mesh: &TriMesh, mat: &MaterialParams, thickness: f64) -> Result<PlateSystem> {
    mat.validate()?;
    if !(thickness > 0.0) {
        return Err(Error::InvalidParameter(format!("thickness {thickness}")));
    }
    let mut sys = assemble_unit(mesh)?;
    sys.rigidity = mat.flexural_rigidity(thickness);
    sys.areal_density = mat.areal_density(thickness);
    let rho_h = sys.areal_density;
    sys.mass.values_mut().iter_mut().for_each(|v| *v *= rho_h);
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::mesh::triangulate;
    use crate::modal::shape::random_shape;

    fn small_mesh() -> TriMesh {
        triangulate(&ShapeGrid::rectangle(0, 0, 12, 9).unwrap(), 0.5).unwrap()
    }

    #[test]
    fn laplacian_rows_sum_to_zero_at_interior_vertices() {
        let mesh = triangulate(&ShapeGrid::full(), 0.5).unwrap();
        let lap = laplacian_matrix(&mesh).unwrap();
        let ones = vec![1.0; mesh.vertex_count()];
        let mut out = vec![0.0; mesh.vertex_count()];
        csr_matvec(&lap, &ones, &mut out);
        for (v, s) in out.iter().enumerate() {
            if !mesh.boundary[v] {
                assert!(s.abs() < 1e-12, "row {v} sums to {s}");
            }
        }
        // full row sums vanish everywhere for the unrestricted operator
        assert!(out.iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn mass_sums_to_area() {
        let mesh = small_mesh();
        let m = consistent_mass(&mesh).unwrap();
        let total: f64 = m.values().iter().sum();
        let area = 12.0 * 9.0 * (0.5f64 / 64.0).powi(2);
        assert!((total - area).abs() < 1e-15);
        let lumped: f64 = lumped_mass(&mesh).unwrap().iter().sum();
        assert!((lumped - area).abs() < 1e-15);
    }

    #[test]
    fn material_scaling_is_exact() {
        let mesh = small_mesh();
        let base = MaterialParams::default();
        let a = assemble(&mesh, &base, DEFAULT_THICKNESS).unwrap();
        let heavy = assemble(
            &mesh,
            &MaterialParams {
                density: 2.0 * base.density,
                ..base
            },
            DEFAULT_THICKNESS,
        )
        .unwrap();
        assert_eq!(heavy.mass_dense(), a.mass_dense() * 2.0);
        assert_eq!(heavy.stiffness_dense(), a.stiffness_dense());
        let stiff = assemble(
            &mesh,
            &MaterialParams {
                youngs_modulus: 2.0 * base.youngs_modulus,
                ..base
            },
            DEFAULT_THICKNESS,
        )
        .unwrap();
        assert_eq!(stiff.stiffness_dense(), a.stiffness_dense() * 2.0);
        assert_eq!(stiff.mass_dense(), a.mass_dense());
    }

    #[test]
    fn matrices_are_symmetric_and_mass_is_positive_definite() {
        let mesh = triangulate(&random_shape(4), 0.5).unwrap();
        let sys = assemble(&mesh, &MaterialParams::default(), DEFAULT_THICKNESS).unwrap();
        let m = sys.mass_dense();
        let k = sys.stiffness_dense();
        assert!((&m - m.transpose()).amax() < 1e-18);
        assert!((&k - k.transpose()).amax() <= 1e-12 * k.amax());
        assert!(m.clone().cholesky().is_some());
        let x: Vec<f64> = (0..sys.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; sys.len()];
        sys.apply_stiffness(&x, &mut y);
        let dense = &k * nalgebra::DVector::from_column_slice(&x);
        for (a, b) in y.iter().zip(dense.iter()) {
            assert!((a - b).abs() <= 1e-9 * dense.amax());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mesh = small_mesh();
        let mut mat = MaterialParams::default();
        assert!(assemble(&mesh, &mat, 0.0).is_err());
        mat.poisson_ratio = 0.6;
        assert!(assemble(&mesh, &mat, DEFAULT_THICKNESS).is_err());
        let mut degenerate = mesh.clone();
        let t = degenerate.triangles[0];
        degenerate.triangles[0] = [t[0], t[0], t[1]];
        assert!(matches!(
            laplacian_matrix(&degenerate),
            Err(Error::DegenerateTriangle(0))
        ));
    }
}
