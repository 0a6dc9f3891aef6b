use sha2::{Digest, Sha256};

use super::grid::{Grid, HoelderExponent};
use crate::error::{Error, Result};
use crate::linalg;

/// A level-2 rough path sampled on a uniform grid.
///
/// Level 1 is stored as values `X^1_{0,t_k}`; level 2 only on consecutive
/// cells `X^2_{t_k,t_{k+1}}`. Any other block `X^2_{t_i,t_k}` is rebuilt by
/// the Chen relation, so every reconstruction is consistent by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRoughPath {
    dim: usize,
    grid: Grid,
    level1: Vec<f64>,
    cells: Vec<f64>,
    alpha: HoelderExponent,
}

impl GridRoughPath {
    pub fn new(dim: usize, grid: Grid, level1: Vec<f64>, cells: Vec<f64>, alpha: HoelderExponent) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("rough path dimension must be positive".into()));
        }
        let n = grid.n_steps();
        if level1.len() != (n + 1) * dim {
            return Err(Error::DimensionMismatch {
                what: "level-1 values",
                expected: (n + 1) * dim,
                got: level1.len(),
            });
        }
        if cells.len() != n * dim * dim {
            return Err(Error::DimensionMismatch {
                what: "level-2 cells",
                expected: n * dim * dim,
                got: cells.len(),
            });
        }
        if level1[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter("level-1 path must start at 0".into()));
        }
        if let Some(p) = level1.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: p / dim });
        }
        if let Some(p) = cells.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: p / (dim * dim) });
        }
        Ok(Self {
            dim,
            grid,
            level1,
            cells,
            alpha,
        })
    }

    pub fn zero(dim: usize, grid: Grid, alpha: HoelderExponent) -> Self {
        let n = grid.n_steps();
        Self {
            dim,
            grid,
            level1: vec![0.0; (n + 1) * dim],
            cells: vec![0.0; n * dim * dim],
            alpha,
        }
    }

    /// Lifts a path by the piecewise-linear (geometric) rule on each cell:
    /// `X^2_{t_k,t_{k+1}} = 1/2 dX (x) dX`.
    pub fn piecewise_linear(dim: usize, grid: Grid, values: &[f64], alpha: HoelderExponent) -> Result<Self> {
        let n = grid.n_steps();
        if values.len() != (n + 1) * dim {
            return Err(Error::DimensionMismatch {
                what: "path values",
                expected: (n + 1) * dim,
                got: values.len(),
            });
        }
        let level1: Vec<f64> = values
            .chunks(dim)
            .flat_map(|v| v.iter().zip(&values[..dim]).map(|(a, b)| a - b))
            .collect();
        let mut cells = vec![0.0; n * dim * dim];
        for k in 0..n {
            let dx = linalg::sub(&level1[(k + 1) * dim..(k + 2) * dim], &level1[k * dim..(k + 1) * dim]);
            let cell = &mut cells[k * dim * dim..(k + 1) * dim * dim];
            for a in 0..dim {
                for b in 0..dim {
                    cell[a * dim + b] = 0.5 * dx[a] * dx[b];
                }
            }
        }
        Self::new(dim, grid, level1, cells, alpha)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn alpha(&self) -> HoelderExponent {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: HoelderExponent) -> Self {
        self.alpha = alpha;
        self
    }

    /// `X^1_{0,t_k}`.
    pub fn level1_at(&self, k: usize) -> &[f64] {
        &self.level1[k * self.dim..(k + 1) * self.dim]
    }

    pub fn level1(&self) -> &[f64] {
        &self.level1
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Stored `X^2_{t_k,t_{k+1}}`.
    pub fn cell(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.cells[k * dd..(k + 1) * dd]
    }

    /// `X^1_{t_i,t_k}` written into `out`.
    pub fn increment_into(&self, i: usize, k: usize, out: &mut [f64]) {
        let a = self.level1_at(i);
        let b = self.level1_at(k);
        for ((o, x), y) in out.iter_mut().zip(b).zip(a) {
            *o = x - y;
        }
    }

    pub fn increment(&self, i: usize, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.increment_into(i, k, &mut out);
        out
    }

    fn check_pair(&self, i: usize, k: usize) -> Result<()> {
        self.grid.check_index(i)?;
        self.grid.check_index(k)?;
        if i > k {
            return Err(Error::InvalidRange { start: i, end: k });
        }
        Ok(())
    }

    /// `X^2_{t_i,t_k} = sum_{j=i}^{k-1} [X^2_{t_j,t_{j+1}} + X^1_{t_i,t_j} (x) X^1_{t_j,t_{j+1}}]`.
    pub fn chen_block(&self, i: usize, k: usize) -> Result<Vec<f64>> {
        self.check_pair(i, k)?;
        let d = self.dim;
        if k == i + 1 {
            return Ok(self.cell(i).to_vec());
        }
        let mut out = vec![0.0; d * d];
        let mut running = vec![0.0; d];
        let mut dx = vec![0.0; d];
        for j in i..k {
            self.increment_into(j, j + 1, &mut dx);
            linalg::add_assign(&mut out, self.cell(j));
            linalg::outer_add(&running, &dx, &mut out);
            self.increment_into(i, j + 1, &mut running);
        }
        Ok(out)
    }

    /// Level-1 magnitude and level-2 block along a row `(i, k)`, `k = i+1..=last`,
    /// accumulated incrementally with the Chen relation.
    pub(crate) fn scan_level2_row(&self, i: usize, last: usize, visit: &mut dyn FnMut(usize, &[f64])) {
        let d = self.dim;
        let mut block = vec![0.0; d * d];
        let mut running = vec![0.0; d];
        let mut dx = vec![0.0; d];
        for j in i..last {
            self.increment_into(j, j + 1, &mut dx);
            if j == i {
                block.copy_from_slice(self.cell(j));
            } else {
                linalg::add_assign(&mut block, self.cell(j));
                linalg::outer_add(&running, &dx, &mut block);
            }
            self.increment_into(i, j + 1, &mut running);
            visit(j + 1, &block);
        }
    }

    /// Dilation `delta X = (delta X^1, delta^2 X^2)`.
    pub fn dilate(&self, delta: f64) -> GridRoughPath {
        let d2 = delta * delta;
        GridRoughPath {
            dim: self.dim,
            grid: self.grid,
            level1: self.level1.iter().map(|v| delta * v).collect(),
            cells: self.cells.iter().map(|v| d2 * v).collect(),
            alpha: self.alpha,
        }
    }

    /// The same rough path seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<GridRoughPath> {
        let grid = self.grid.coarsen(factor)?;
        let d = self.dim;
        let n = grid.n_steps();
        let mut level1 = Vec::with_capacity((n + 1) * d);
        for k in 0..=n {
            level1.extend_from_slice(self.level1_at(k * factor));
        }
        let mut cells = Vec::with_capacity(n * d * d);
        for k in 0..n {
            cells.extend(self.chen_block(k * factor, (k + 1) * factor)?);
        }
        GridRoughPath::new(d, grid, level1, cells, self.alpha)
    }

    /// Restriction to the coordinates `coords`: level 1 components and the
    /// corresponding sub-block of every cell.
    pub fn project(&self, coords: &[usize]) -> Result<GridRoughPath> {
        let d = self.dim;
        if let Some(&c) = coords.iter().find(|&&c| c >= d) {
            return Err(Error::IndexOutOfRange { index: c, len: d });
        }
        let p = coords.len();
        let n = self.n_steps();
        let mut level1 = Vec::with_capacity((n + 1) * p);
        for k in 0..=n {
            let v = self.level1_at(k);
            level1.extend(coords.iter().map(|&c| v[c]));
        }
        let mut cells = Vec::with_capacity(n * p * p);
        for k in 0..n {
            let c = self.cell(k);
            for &a in coords {
                for &b in coords {
                    cells.push(c[a * d + b]);
                }
            }
        }
        GridRoughPath::new(p, self.grid, level1, cells, self.alpha)
    }

    /// Returns a copy with every cell shifted by `lambda * Id * h`.
    pub(crate) fn shift_diagonal(&self, coords: &[usize], lambda: f64) -> GridRoughPath {
        let mut out = self.clone();
        let d = self.dim;
        let h = self.grid.step();
        for k in 0..self.n_steps() {
            let cell = &mut out.cells[k * d * d..(k + 1) * d * d];
            for &c in coords {
                cell[c * d + c] += lambda * h;
            }
        }
        out
    }

    /// Hex SHA-256 of the binary serialization; used to prove that two
    /// consumers saw the identical driver.
    pub fn content_hash(&self) -> String {
        let bytes = super::io::to_bytes(self);
        hex::encode(Sha256::digest(&bytes))
    }

    /// Largest relative violation of the Chen relation over the given
    /// triples, each entry `(i, j, k)` with `i <= j <= k`.
    pub fn chen_defect(&self, triples: &[(usize, usize, usize)]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for &(i, j, k) in triples {
            if !(i <= j && j <= k) {
                return Err(Error::InvalidRange { start: i, end: k });
            }
            let lhs = self.chen_block(i, k)?;
            let left = self.chen_block(i, j)?;
            let right = self.chen_block(j, k)?;
            let cross = linalg::outer(&self.increment(i, j), &self.increment(j, k));
            let mut diff = 0.0_f64;
            let mut scale = 0.0_f64;
            for q in 0..lhs.len() {
                let rhs = left[q] + right[q] + cross[q];
                diff = diff.max((lhs[q] - rhs).abs());
                scale = scale
                    .max(lhs[q].abs())
                    .max(left[q].abs())
                    .max(right[q].abs())
                    .max(cross[q].abs());
            }
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            } else {
                worst = worst.max(diff);
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_point() -> GridRoughPath {
        let grid = Grid::new(2.0, 2).unwrap();
        GridRoughPath::new(
            1,
            grid,
            vec![0.0, 1.0, 3.0],
            vec![0.5, 2.0],
            HoelderExponent::new(0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn chen_block_hand_example() {
        let rp = three_point();
        assert_eq!(rp.chen_block(0, 2).unwrap(), vec![4.5]);
        // re-derived by splitting at the middle point
        let split = rp.chen_block(0, 1).unwrap()[0]
            + rp.chen_block(1, 2).unwrap()[0]
            + rp.increment(0, 1)[0] * rp.increment(1, 2)[0];
        assert_eq!(split, 4.5);
    }

    #[test]
    fn chen_block_diagonal_and_cell() {
        let rp = three_point();
        assert_eq!(rp.chen_block(1, 1).unwrap(), vec![0.0]);
        assert_eq!(rp.chen_block(1, 2).unwrap(), rp.cell(1).to_vec());
        assert!(matches!(rp.chen_block(0, 3), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(rp.chen_block(2, 1), Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn dilate_example() {
        let rp = three_point().dilate(-2.0);
        assert_eq!(rp.level1(), &[0.0, -2.0, -6.0]);
        assert_eq!(rp.cells(), &[2.0, 8.0]);
        assert_eq!(rp.chen_block(0, 2).unwrap(), vec![4.0 * 4.5]);
        assert_eq!(three_point().dilate(1.0), three_point());
        let z = three_point().dilate(0.0);
        assert!(z.level1().iter().chain(z.cells()).all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_construction() {
        let grid = Grid::new(1.0, 2).unwrap();
        let a = HoelderExponent::new(0.5).unwrap();
        assert!(GridRoughPath::new(1, grid, vec![1.0, 1.0, 2.0], vec![0.0, 0.0], a).is_err());
        assert!(GridRoughPath::new(1, grid, vec![0.0, 1.0], vec![0.0, 0.0], a).is_err());
        assert!(GridRoughPath::new(1, grid, vec![0.0, f64::NAN, 1.0], vec![0.0, 0.0], a).is_err());
    }

    #[test]
    fn coarsen_preserves_blocks() {
        let grid = Grid::new(1.0, 4).unwrap();
        let a = HoelderExponent::new(0.5).unwrap();
        let rp = GridRoughPath::new(
            2,
            grid,
            vec![0.0, 0.0, 1.0, 0.5, 0.2, 1.0, -0.3, 0.7, 0.1, 0.1],
            (0..16).map(|q| 0.01 * q as f64).collect(),
            a,
        )
        .unwrap();
        let c = rp.coarsen(2).unwrap();
        assert_eq!(c.cell(1), rp.chen_block(2, 4).unwrap().as_slice());
        assert_eq!(c.chen_block(0, 2).unwrap().len(), 4);
        let full = rp.chen_block(0, 4).unwrap();
        let coarse = c.chen_block(0, 2).unwrap();
        for (x, y) in full.iter().zip(&coarse) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
