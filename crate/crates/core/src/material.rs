use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training ranges `[lo, hi]` for density, Young's modulus, Poisson's ratio,
/// mass-proportional and stiffness-proportional damping, in that order.
pub const MATERIAL_RANGES: [(f64, f64); 5] = [
    (500.0, 15_000.0),
    (8e9, 5e10),
    (0.1, 0.4),
    (1.0, 10.0),
    (3e-7, 2e-6),
];

pub const MATERIAL_NAMES: [&str; 5] = [
    "density",
    "youngs_modulus",
    "poisson_ratio",
    "alpha",
    "beta",
];

/// Isotropic plate material with Rayleigh damping `C = alpha M + beta K`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// kg/m^3
    pub density: f64,
    /// Pa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Mass-proportional damping, 1/s.
    pub alpha: f64,
    /// Stiffness-proportional damping, s.
    pub beta: f64,
}

impl Default for MaterialParams {
    /// Midpoint of every training range.
    fn default() -> Self {
        MaterialParams::from_normalized([0.5; 5])
    }
}

impl MaterialParams {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.density,
            self.youngs_modulus,
            self.poisson_ratio,
            self.alpha,
            self.beta,
        ]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        MaterialParams {
            density: v[0],
            youngs_modulus: v[1],
            poisson_ratio: v[2],
            alpha: v[3],
            beta: v[4],
        }
    }

    /// Physically admissible (not necessarily inside the training ranges).
    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite material {self:?}"
            )));
        }
        if self.density <= 0.0 || self.youngs_modulus <= 0.0 {
            return Err(Error::InvalidParameter(
                "density and Young's modulus must be positive".into(),
            ));
        }
        if !(self.poisson_ratio > -1.0 && self.poisson_ratio < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "Poisson's ratio {} outside (-1, 0.5)",
                self.poisson_ratio
            )));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidParameter("negative damping".into()));
        }
        Ok(())
    }

    pub fn in_training_range(&self) -> bool {
        self.to_array()
            .iter()
            .zip(MATERIAL_RANGES)
            .all(|(v, (lo, hi))| (lo..=hi).contains(v))
    }

    /// Per-component affine map of the training ranges onto `[0, 1]`.
    /// Values outside the ranges extrapolate linearly.
    pub fn normalize(&self) -> [f64; 5] {
        let mut out = self.to_array();
        for (x, (lo, hi)) in out.iter_mut().zip(MATERIAL_RANGES) {
            *x = (*x - lo) / (hi - lo);
        }
        out
    }

    pub fn from_normalized(n: [f64; 5]) -> Self {
        let mut v = n;
        for (x, (lo, hi)) in v.iter_mut().zip(MATERIAL_RANGES) {
            *x = lo + *x * (hi - lo);
        }
        Self::from_array(v)
    }

    /// Kirchhoff flexural rigidity `E h^3 / (12 (1 - nu^2))`.
    pub fn flexural_rigidity(&self, thickness: f64) -> f64 {
        self.youngs_modulus * thickness.powi(3)
            / (12.0 * (1.0 - self.poisson_ratio * self.poisson_ratio))
    }

    /// `sqrt(E / (rho (1 - nu^2)))`. Every modal frequency of a fixed plate
    /// is proportional to it.
    pub fn frequency_scale(&self) -> f64 {
        (self.youngs_modulus / (self.density * (1.0 - self.poisson_ratio * self.poisson_ratio)))
            .sqrt()
    }

    pub fn areal_density(&self, thickness: f64) -> f64 {
        self.density * thickness
    }
}
