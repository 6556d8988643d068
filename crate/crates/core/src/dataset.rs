//! Training examples and their binary container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "NRWB" | version u32 | n_examples u64 | n_bins u32
//! sample_rate f64 | f_lo f64 | f_hi f64
//! per example: grid [u8; 512] | material 5 x f64 | position 2 x f64 | target n_bins x f32
//! ```
//!
//! The grid is the packed bitset of [`ShapeGrid::to_bytes`]; the material
//! order is density, Young's modulus, Poisson's ratio, alpha, beta; targets
//! are dB magnitudes on the log-spaced grid `[f_lo, f_hi]`.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{find_peaks, peak_frequency};
use crate::error::{Error, Result};
use crate::material::{MaterialParams, MATERIAL_RANGES};
use crate::modal::shape::PACKED_LEN;
use crate::modal::{random_shape, target_response, ModalBasis, PlateConfig, ShapeGrid};
use crate::resonator::{
    FrequencyGrid, MagnitudeResponse, DEFAULT_BINS, DEFAULT_F_HI_RATIO, DEFAULT_F_LO,
    DEFAULT_SAMPLE_RATE,
};

pub const DATASET_MAGIC: [u8; 4] = *b"NRWB";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 3 * 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub grid: ShapeGrid,
    pub material: MaterialParams,
    pub position: [f64; 2],
    pub target: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sample_rate: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub n_bins: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::log_spaced(self.n_bins, self.f_lo, self.f_hi, self.sample_rate)
    }

    pub fn target(&self, i: usize, grid: &FrequencyGrid) -> MagnitudeResponse {
        MagnitudeResponse {
            freqs: grid.freqs().to_vec(),
            db: self.examples[i].target.iter().map(|v| *v as f64).collect(),
        }
    }

    /// Distinct shapes in order of first appearance, and each example's
    /// index into them.
    pub fn shape_table(&self) -> (Vec<ShapeGrid>, Vec<usize>) {
        let mut shapes: Vec<ShapeGrid> = Vec::new();
        let ids = self
            .examples
            .iter()
            .map(|e| match shapes.iter().position(|s| *s == e.grid) {
                Some(i) => i,
                None => {
                    shapes.push(e.grid.clone());
                    shapes.len() - 1
                }
            })
            .collect();
        (shapes, ids)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let record = PACKED_LEN + 7 * 8 + 4 * self.n_bins;
        let mut out = Vec::with_capacity(HEADER_LEN + record * self.examples.len());
        out.extend_from_slice(&DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.examples.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_bins as u32).to_le_bytes());
        for v in [self.sample_rate, self.f_lo, self.f_hi] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for e in &self.examples {
            out.extend_from_slice(&e.grid.to_bytes());
            for v in e.material.to_array().iter().chain(&e.position) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in &e.target {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::format("dataset", reason);
        if data.len() < HEADER_LEN {
            return Err(bad(format!(
                "{} bytes is shorter than the header",
                data.len()
            )));
        }
        if data[..4] != DATASET_MAGIC {
            return Err(bad("missing NRWB magic".into()));
        }
        let mut cur = Cursor { data, pos: 4 };
        let version = cur.u32();
        if version != DATASET_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let n = cur.u64() as usize;
        let n_bins = cur.u32() as usize;
        let (sample_rate, f_lo, f_hi) = (cur.f64(), cur.f64(), cur.f64());
        let record = PACKED_LEN + 7 * 8 + 4 * n_bins;
        let expected = n
            .checked_mul(record)
            .and_then(|b| b.checked_add(HEADER_LEN));
        if expected != Some(data.len()) {
            return Err(bad(format!(
                "{} bytes for {n} records of {n_bins} bins",
                data.len()
            )));
        }
        let mut examples = Vec::with_capacity(n);
        for _ in 0..n {
            let grid = ShapeGrid::from_bytes(cur.take(PACKED_LEN))?;
            let mut m = [0.0; 5];
            m.iter_mut().for_each(|v| *v = cur.f64());
            let position = [cur.f64(), cur.f64()];
            let target = (0..n_bins).map(|_| cur.f32()).collect();
            examples.push(Example {
                grid,
                material: MaterialParams::from_array(m),
                position,
                target,
            });
        }
        Ok(Dataset {
            sample_rate,
            f_lo,
            f_hi,
            n_bins,
            examples,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }

    /// Peak frequencies that recur across the dataset, for initial pole
    /// placement. Target peaks are rescaled to the median material first
    /// (modal frequencies scale with [`MaterialParams::frequency_scale`]),
    /// then neighbours within 1.5% are grouped. Returns the `count` most
    /// populated groups in ascending order, padded with log-spaced values
    /// when there are fewer groups.
    pub fn mode_frequencies(&self, count: usize) -> Result<Vec<f64>> {
        const GROUP: f64 = 0.015;
        let grid = self.frequency_grid()?;
        let mut scales: Vec<f64> = self
            .examples
            .iter()
            .map(|e| e.material.frequency_scale())
            .collect();
        scales.sort_by(f64::total_cmp);
        let Some(&reference) = scales.get(scales.len() / 2) else {
            return Err(Error::InvalidParameter("empty dataset".into()));
        };
        let mut peaks = Vec::new();
        for e in &self.examples {
            let db: Vec<f64> = e.target.iter().map(|v| *v as f64).collect();
            let k = reference / e.material.frequency_scale();
            peaks.extend(
                find_peaks(&db)
                    .into_iter()
                    .map(|i| k * peak_frequency(grid.freqs(), &db, i)),
            );
        }
        peaks.sort_by(f64::total_cmp);
        let mut groups: Vec<(usize, f64)> = Vec::new();
        let mut rest = &peaks[..];
        while let Some(&first) = rest.first() {
            let n = rest.partition_point(|f| *f < first * (1.0 + GROUP));
            let centre = (rest[..n].iter().map(|f| f.ln()).sum::<f64>() / n as f64).exp();
            groups.push((n, centre));
            rest = &rest[n..];
        }
        if groups.is_empty() {
            return Err(Error::InvalidParameter(
                "dataset targets have no peaks".into(),
            ));
        }
        groups.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)));
        let mut freqs: Vec<f64> = groups.iter().take(count).map(|g| g.1).collect();
        let (lo, hi) = (peaks[0], peaks[peaks.len() - 1]);
        let missing = count - freqs.len();
        freqs.extend((0..missing).map(|j| lo * (hi / lo).powf((j as f64 + 0.5) / missing as f64)));
        freqs.sort_by(f64::total_cmp);
        Ok(freqs)
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        s
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take(4).try_into().unwrap())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take(8).try_into().unwrap())
    }
}

/// How a dataset is drawn: for every shape, `materials` uniform draws from
/// the training ranges and `positions` distinct interior mesh vertices;
/// examples are their cross product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub shapes: usize,
    pub materials: usize,
    pub positions: usize,
    pub seed: u64,
    pub sample_rate: f64,
    pub bins: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub plate: PlateConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            shapes: 1,
            materials: 10,
            positions: 100,
            seed: 0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            bins: DEFAULT_BINS,
            f_lo: DEFAULT_F_LO,
            f_hi: DEFAULT_F_HI_RATIO * DEFAULT_SAMPLE_RATE,
            plate: PlateConfig::default(),
        }
    }
}

pub fn sample_material(rng: &mut impl Rng) -> MaterialParams {
    let mut v = [0.0; 5];
    for (x, (lo, hi)) in v.iter_mut().zip(MATERIAL_RANGES) {
        *x = rng.random_range(lo..=hi);
    }
    MaterialParams::from_array(v)
}

/// Draws a dataset. Shapes come from [`random_shape`] with seeds derived from
/// `spec.seed`, unless `fixed_shape` is given (then `spec.shapes` copies of it
/// would be redundant and only one is used).
pub fn generate(spec: &DatasetSpec, fixed_shape: Option<&ShapeGrid>) -> Result<Dataset> {
    if spec.shapes == 0 || spec.materials == 0 || spec.positions == 0 {
        return Err(Error::InvalidParameter(
            "dataset counts must be positive".into(),
        ));
    }
    let grid = FrequencyGrid::log_spaced(spec.bins, spec.f_lo, spec.f_hi, spec.sample_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_shapes = if fixed_shape.is_some() {
        1
    } else {
        spec.shapes
    };
    let mut examples = Vec::with_capacity(n_shapes * spec.materials * spec.positions);
    for _ in 0..n_shapes {
        let shape = match fixed_shape {
            Some(s) => s.clone(),
            None => random_shape(rng.random()),
        };
        let basis = ModalBasis::new(&shape, spec.plate)?;
        let nodes = basis.unit().interior_nodes();
        if spec.positions > nodes.len() {
            return Err(Error::InvalidParameter(format!(
                "{} positions requested, shape has {} interior vertices",
                spec.positions,
                nodes.len()
            )));
        }
        let mut picks = index::sample(&mut rng, nodes.len(), spec.positions).into_vec();
        picks.sort_unstable();
        let positions: Vec<[f64; 2]> = picks.iter().map(|&i| nodes[i]).collect();
        for _ in 0..spec.materials {
            let material = sample_material(&mut rng);
            let modal = basis.modal_data(&material)?;
            for &position in &positions {
                let (resp, _) = target_response(&modal, position, &grid)?;
                examples.push(Example {
                    grid: shape.clone(),
                    material,
                    position,
                    target: resp.db.iter().map(|v| *v as f32).collect(),
                });
            }
        }
    }
    Ok(Dataset {
        sample_rate: spec.sample_rate,
        f_lo: spec.f_lo,
        f_hi: spec.f_hi,
        n_bins: spec.bins,
        examples,
    })
}
