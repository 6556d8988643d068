//! Smallest generalized eigenpairs `K phi = omega^2 M phi` of a plate.
//!
//! Small systems are reduced with a Cholesky factor of `M` and solved densely
//! (O(n^3)). Larger systems use a block Krylov space of the shift-invert
//! operator `K^-1 M` followed by Rayleigh-Ritz on `(K, M)`. Only the interior
//! Laplacian needs factoring since `K^-1 = D^-1 L^-1 Ml L^-1`. Blocks keep
//! repeated eigenvalues (square plates) from being missed.

use nalgebra::{DMatrix, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::CscMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::modal::fem::PlateSystem;

/// Systems up to this many unknowns are solved densely under [`EigenMethod::Auto`].
pub const DENSE_LIMIT: usize = 400;
const BLOCK: usize = 8;
const RESIDUAL_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Krylov,
}

/// Mass-orthonormal eigenvectors over the system's degrees of freedom.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    /// `omega^2`, ascending.
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn smallest_eigenpairs(
    sys: &PlateSystem,
    n_modes: usize,
    method: EigenMethod,
) -> Result<Eigenpairs> {
    let n = sys.len();
    if n_modes == 0 || n_modes > n {
        return Err(Error::TooManyModes {
            requested: n_modes,
            available: n,
        });
    }
    let mut pairs = match method {
        EigenMethod::Dense => dense(sys, n_modes)?,
        EigenMethod::Krylov => krylov(sys, n_modes)?,
        EigenMethod::Auto if n <= DENSE_LIMIT => dense(sys, n_modes)?,
        EigenMethod::Auto => krylov(sys, n_modes)?,
    };
    for v in &mut pairs.vectors {
        fix_sign(v);
    }
    Ok(pairs)
}

/// Largest-magnitude component made positive.
fn fix_sign(v: &mut [f64]) {
    let idx = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, x)| {
            if x.abs() > best.1 + 1e-12 * best.1 {
                (i, x.abs())
            } else {
                best
            }
        })
        .0;
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dense(sys: &PlateSystem, n_modes: usize) -> Result<Eigenpairs> {
    let k = sys.stiffness_dense();
    let m = sys.mass_dense();
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Eigensolver("mass matrix is not positive definite".into()))?;
    let c = chol.l();
    // A = C^-1 K C^-T
    let ck = c
        .solve_lower_triangular(&k)
        .ok_or_else(|| Error::Eigensolver("singular mass factor".into()))?;
    let a = c
        .solve_lower_triangular(&ck.transpose())
        .ok_or_else(|| Error::Eigensolver("singular mass factor".into()))?;
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let ct = c.transpose();
    let mut eigenvalues = Vec::with_capacity(n_modes);
    let mut vectors = Vec::with_capacity(n_modes);
    for &i in order.iter().take(n_modes) {
        let y = eig.eigenvectors.column(i).into_owned();
        let phi = ct
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Eigensolver("singular mass factor".into()))?;
        eigenvalues.push(eig.eigenvalues[i]);
        vectors.push(phi.as_slice().to_vec());
    }
    Ok(Eigenpairs {
        eigenvalues,
        vectors,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

struct KrylovBasis<'a> {
    sys: &'a PlateSystem,
    q: Vec<Vec<f64>>,
    mq: Vec<Vec<f64>>,
    kq: Vec<Vec<f64>>,
    /// Upper triangle of `Q^T K Q`, row `i` holding columns `i..`.
    t: Vec<Vec<f64>>,
}

impl KrylovBasis<'_> {
    /// M-orthogonalizes `v` against the basis (two passes) and appends it
    /// unless it is numerically dependent.
    fn push(&mut self, mut v: Vec<f64>) -> bool {
        let n = v.len();
        let mut mv = vec![0.0; n];
        self.sys.apply_mass(&v, &mut mv);
        let norm0 = dot(&v, &mv).sqrt();
        if !(norm0 > 0.0) {
            return false;
        }
        for _ in 0..2 {
            for (q, mq) in self.q.iter().zip(&self.mq) {
                let c = dot(mq, &v);
                axpy(-c, q, &mut v);
            }
        }
        self.sys.apply_mass(&v, &mut mv);
        let norm = dot(&v, &mv).sqrt();
        if !(norm > 1e-10 * norm0) {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        mv.iter_mut().for_each(|x| *x /= norm);
        let mut kv = vec![0.0; n];
        self.sys.apply_stiffness(&v, &mut kv);
        for (row, q) in self.t.iter_mut().zip(&self.q) {
            row.push(dot(q, &kv));
        }
        self.t.push(vec![dot(&v, &kv)]);
        self.q.push(v);
        self.mq.push(mv);
        self.kq.push(kv);
        true
    }

    fn dim(&self) -> usize {
        self.q.len()
    }

    /// Ritz pairs for the `n_modes` smallest values and the worst relative
    /// residual among them.
    fn rayleigh_ritz(&self, n_modes: usize) -> (Eigenpairs, f64) {
        let d = self.dim();
        let mut t = DMatrix::zeros(d, d);
        for (i, row) in self.t.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                t[(i, i + off)] = *v;
                t[(i + off, i)] = *v;
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let n = self.sys.len();
        let mut worst = 0.0f64;
        let mut eigenvalues = Vec::with_capacity(n_modes);
        let mut vectors = Vec::with_capacity(n_modes);
        for &i in order.iter().take(n_modes) {
            let theta = eig.eigenvalues[i];
            let y = eig.eigenvectors.column(i);
            let mut phi = vec![0.0; n];
            let mut kphi = vec![0.0; n];
            let mut mphi = vec![0.0; n];
            for (j, c) in y.iter().enumerate() {
                axpy(*c, &self.q[j], &mut phi);
                axpy(*c, &self.kq[j], &mut kphi);
                axpy(*c, &self.mq[j], &mut mphi);
            }
            let res: f64 = kphi
                .iter()
                .zip(&mphi)
                .map(|(k, m)| (k - theta * m).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = dot(&kphi, &kphi).sqrt();
            worst = worst.max(res / scale);
            eigenvalues.push(theta);
            vectors.push(phi);
        }
        (
            Eigenpairs {
                eigenvalues,
                vectors,
            },
            worst,
        )
    }
}

fn krylov(sys: &PlateSystem, n_modes: usize) -> Result<Eigenpairs> {
    let n = sys.len();
    let csc = CscMatrix::from(&sys.laplacian);
    let chol = CscCholesky::factor(&csc)
        .map_err(|e| Error::Eigensolver(format!("Laplacian factorization failed: {e}")))?;
    // x = K^-1 M v = D^-1 L^-1 Ml L^-1 M v, a block at a time
    let apply_inverse = |block: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut rhs = DMatrix::zeros(n, block.len());
        let mut mv = vec![0.0; n];
        for (j, v) in block.iter().enumerate() {
            sys.apply_mass(v, &mut mv);
            rhs.column_mut(j).copy_from_slice(&mv);
        }
        let mut x = chol.solve(&rhs);
        for (i, m) in sys.lumped.iter().enumerate() {
            x.row_mut(i).scale_mut(*m);
        }
        let x = chol.solve(&x) / sys.rigidity;
        x.column_iter().map(|c| c.as_slice().to_vec()).collect()
    };

    let max_dim = n.min(8 * n_modes + 8 * BLOCK);
    let check_every = 4 * BLOCK;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut basis = KrylovBasis {
        sys,
        q: Vec::new(),
        mq: Vec::new(),
        kq: Vec::new(),
        t: Vec::new(),
    };
    let mut block: Vec<Vec<f64>> = (0..BLOCK)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut next_check = (n_modes + 2 * BLOCK).min(max_dim);
    let mut best = None;
    loop {
        let start = basis.dim();
        for v in apply_inverse(&block) {
            if basis.dim() >= max_dim {
                break;
            }
            basis.push(v);
        }
        if basis.dim() == start {
            // Krylov space exhausted: restart from fresh random directions
            for _ in 0..BLOCK {
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                if basis.dim() < max_dim {
                    basis.push(v);
                }
            }
        }
        if basis.dim() >= next_check || basis.dim() >= max_dim {
            let (pairs, residual) = basis.rayleigh_ritz(n_modes.min(basis.dim()));
            if pairs.eigenvalues.len() == n_modes && residual < RESIDUAL_TOL {
                return Ok(pairs);
            }
            best = Some((pairs, residual));
            next_check = basis.dim() + check_every;
        }
        if basis.dim() >= max_dim {
            break;
        }
        block = basis.q[start.min(basis.dim())..].to_vec();
        if block.is_empty() {
            block = basis.q[basis.dim().saturating_sub(BLOCK)..].to_vec();
        }
    }
    match best {
        Some((pairs, residual)) if pairs.eigenvalues.len() == n_modes && residual < 1e-9 => {
            Ok(pairs)
        }
        Some((_, residual)) => Err(Error::Eigensolver(format!(
            "no convergence in {max_dim} Krylov vectors (residual {residual:e})"
        ))),
        None => Err(Error::Eigensolver("empty Krylov space".into())),
    }
}

/// Relative residual `|K phi - lambda M phi| / |K phi|`.
pub fn residual(sys: &PlateSystem, eigenvalue: f64, phi: &[f64]) -> f64 {
    let n = sys.len();
    let mut k = vec![0.0; n];
    let mut m = vec![0.0; n];
    sys.apply_stiffness(phi, &mut k);
    sys.apply_mass(phi, &mut m);
    let r: f64 = k
        .iter()
        .zip(&m)
        .map(|(a, b)| (a - eigenvalue * b).powi(2))
        .sum::<f64>()
        .sqrt();
    r / dot(&k, &k).sqrt()
}

/// Largest deviation of `Phi^T M Phi` from the identity.
pub fn orthonormality_error(sys: &PlateSystem, vectors: &[Vec<f64>]) -> f64 {
    let n = sys.len();
    let mut worst = 0.0f64;
    let mut mv = vec![0.0; n];
    for (i, a) in vectors.iter().enumerate() {
        sys.apply_mass(a, &mut mv);
        for (j, b) in vectors.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(b, &mv) - expect).abs());
        }
    }
    worst
}
