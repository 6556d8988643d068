//! 64x64 occupancy grids describing the resonating object.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pgm;

pub const GRID: usize = 64;
pub const MIN_AREA: usize = 16;
/// Byte length of the packed bitset.
pub const PACKED_LEN: usize = GRID * GRID / 8;

/// Binary occupancy, one `u64` per row. Row 0 is the bottom row and bit `x`
/// of a row is column `x`, so `(0, 0)` is the bottom-left cell.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ShapeGrid {
    rows: [u64; GRID],
}

impl fmt::Debug for ShapeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ShapeGrid(area={})", self.area())?;
        for y in (0..GRID).rev() {
            let line: String = (0..GRID)
                .map(|x| if self.get(x, y) { '#' } else { '.' })
                .collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl ShapeGrid {
    /// Validated grid: exactly one 4-connected component of at least
    /// [`MIN_AREA`] cells.
    pub fn new(rows: [u64; GRID]) -> Result<Self> {
        let grid = ShapeGrid { rows };
        grid.validate()?;
        Ok(grid)
    }

    pub fn from_fn(mut occupied: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut rows = [0u64; GRID];
        for (y, row) in rows.iter_mut().enumerate() {
            for x in 0..GRID {
                if occupied(x, y) {
                    *row |= 1 << x;
                }
            }
        }
        Self::new(rows)
    }

    pub fn full() -> Self {
        ShapeGrid {
            rows: [u64::MAX; GRID],
        }
    }

    /// Axis-aligned rectangle of cells `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn rectangle(x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Self::from_fn(|x, y| (x0..x0 + w).contains(&x) && (y0..y0 + h).contains(&y))
    }

    fn validate(&self) -> Result<()> {
        let area = self.area();
        if area == 0 {
            return Err(Error::InvalidShape("empty grid".into()));
        }
        if area < MIN_AREA {
            return Err(Error::InvalidShape(format!(
                "area {area} below minimum {MIN_AREA}"
            )));
        }
        let components = self.components();
        if components.len() != 1 {
            return Err(Error::InvalidShape(format!(
                "{} disconnected regions",
                components.len()
            )));
        }
        Ok(())
    }

    /// 4-connected components as cell lists, largest first.
    fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let mut seen = [0u64; GRID];
        let mut out = Vec::new();
        for y in 0..GRID {
            for x in 0..GRID {
                if !self.get(x, y) || seen[y] >> x & 1 == 1 {
                    continue;
                }
                let mut comp = Vec::new();
                let mut stack = vec![(x, y)];
                seen[y] |= 1 << x;
                while let Some((cx, cy)) = stack.pop() {
                    comp.push((cx, cy));
                    let mut visit = |nx: usize, ny: usize| {
                        if self.get(nx, ny) && seen[ny] >> nx & 1 == 0 {
                            seen[ny] |= 1 << nx;
                            stack.push((nx, ny));
                        }
                    };
                    if cx > 0 {
                        visit(cx - 1, cy);
                    }
                    if cx + 1 < GRID {
                        visit(cx + 1, cy);
                    }
                    if cy > 0 {
                        visit(cx, cy - 1);
                    }
                    if cy + 1 < GRID {
                        visit(cx, cy + 1);
                    }
                }
                out.push(comp);
            }
        }
        out.sort_by_key(|c| std::cmp::Reverse(c.len()));
        out
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        x < GRID && y < GRID && self.rows[y] >> x & 1 == 1
    }

    pub fn rows(&self) -> &[u64; GRID] {
        &self.rows
    }

    pub fn area(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    /// Cell containing a normalized position, if any.
    pub fn cell_at(pos: [f64; 2]) -> Option<(usize, usize)> {
        if !(0.0..=1.0).contains(&pos[0]) || !(0.0..=1.0).contains(&pos[1]) {
            return None;
        }
        let cx = ((pos[0] * GRID as f64) as usize).min(GRID - 1);
        let cy = ((pos[1] * GRID as f64) as usize).min(GRID - 1);
        Some((cx, cy))
    }

    /// Whether a normalized position in `[0, 1]^2` lies in an occupied cell.
    pub fn contains(&self, pos: [f64; 2]) -> bool {
        Self::cell_at(pos).is_some_and(|(x, y)| self.get(x, y))
    }

    /// Row-major, bottom row first, LSB-first within each byte.
    pub fn to_bytes(&self) -> [u8; PACKED_LEN] {
        let mut out = [0u8; PACKED_LEN];
        for (chunk, row) in out.chunks_exact_mut(8).zip(&self.rows) {
            chunk.copy_from_slice(&row.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != PACKED_LEN {
            return Err(Error::InvalidShape(format!(
                "packed grid must be {PACKED_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let mut rows = [0u64; GRID];
        for (row, chunk) in rows.iter_mut().zip(bytes.chunks_exact(8)) {
            *row = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Self::new(rows)
    }

    /// Binary graymap (P5), top image row = top grid row, occupied = 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let pixels: Vec<u16> = (0..GRID)
            .rev()
            .flat_map(|y| (0..GRID).map(move |x| (y, x)))
            .map(|(y, x)| if self.get(x, y) { 255 } else { 0 })
            .collect();
        pgm::encode_p5(GRID, GRID, 255, &pixels)
    }

    /// Reads a 64x64 P2 or P5 graymap; any nonzero pixel is occupied.
    pub fn from_pgm(data: &[u8]) -> Result<Self> {
        let img = pgm::decode(data)?;
        if img.width != GRID || img.height != GRID {
            return Err(Error::format(
                "PGM shape",
                format!("expected {GRID}x{GRID}, got {}x{}", img.width, img.height),
            ));
        }
        Self::from_fn(|x, y| img.pixels[(GRID - 1 - y) * GRID + x] != 0)
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&data)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    /// Occupied cell centres in normalized coordinates.
    pub fn centroid(&self) -> [f64; 2] {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..GRID {
            for x in 0..GRID {
                if self.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1.0;
                }
            }
        }
        [sx / n / GRID as f64, sy / n / GRID as f64]
    }
}

/// Parameters of the radial blob generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobParams {
    /// Mean radius in cells.
    pub radius: f64,
    /// Relative radius modulation; 0 gives a disc.
    pub perturbation: f64,
    /// Number of angular harmonics in the modulation.
    pub harmonics: usize,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            radius: 22.0,
            perturbation: 0.35,
            harmonics: 5,
        }
    }
}

const MAX_SHAPE_ATTEMPTS: usize = 64;

/// Deterministic random blob with the default generator settings.
pub fn random_shape(seed: u64) -> ShapeGrid {
    random_shape_with(seed, &BlobParams::default())
}

/// Circle whose radius is modulated by a smooth periodic function of the
/// angle (harmonic `k` weighted by `1/k`), rasterized at cell centres.
/// Only the largest connected region is kept; undersized results are
/// redrawn from the same seeded stream.
pub fn random_shape_with(seed: u64, params: &BlobParams) -> ShapeGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_SHAPE_ATTEMPTS {
        let radius = params.radius * rng.random_range(0.8..1.1);
        let harmonics: Vec<(f64, f64)> = (1..=params.harmonics)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..TAU)))
            .collect();
        let norm: f64 = (1..=params.harmonics)
            .map(|k| 1.0 / k as f64)
            .sum::<f64>()
            .max(1.0);
        let c = GRID as f64 / 2.0;
        let rows = rasterize(|x, y| {
            let dx = x - c;
            let dy = y - c;
            let phi = dy.atan2(dx);
            let wobble: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(i, (a, p))| a * ((i + 1) as f64 * phi + p).cos() / (i + 1) as f64)
                .sum();
            let r = radius * (1.0 + params.perturbation * wobble / norm);
            (dx * dx + dy * dy).sqrt() < r
        });
        if let Some(grid) = keep_largest_component(rows) {
            return grid;
        }
    }
    // fallback that always validates
    let c = GRID as f64 / 2.0;
    keep_largest_component(rasterize(|x, y| {
        (x - c).powi(2) + (y - c).powi(2) < (GRID as f64 / 4.0).powi(2)
    }))
    .expect("disc is a valid shape")
}

#[cfg(test)]
pub(crate) fn unchecked_for_tests(rows: [u64; GRID]) -> ShapeGrid {
    ShapeGrid { rows }
}

fn rasterize(inside: impl Fn(f64, f64) -> bool) -> [u64; GRID] {
    let mut rows = [0u64; GRID];
    for (y, row) in rows.iter_mut().enumerate() {
        for x in 0..GRID {
            if inside(x as f64 + 0.5, y as f64 + 0.5) {
                *row |= 1 << x;
            }
        }
    }
    rows
}

fn keep_largest_component(rows: [u64; GRID]) -> Option<ShapeGrid> {
    let raw = ShapeGrid { rows };
    let comps = raw.components();
    let largest = comps.first()?;
    let mut kept = [0u64; GRID];
    for &(x, y) in largest {
        kept[y] |= 1 << x;
    }
    ShapeGrid::new(kept).ok()
}
