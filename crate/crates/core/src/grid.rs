//! Square-grid partition of the study region, its 4-neighbour cell network,
//! hop-distance neighbourhoods and the binary coverage matrix.
//!
//! Hop distance on the 4-neighbour network equals the Manhattan distance in
//! cell units, so every distance query here is answered analytically. The
//! adjacency lists are still materialised because they are the network the
//! rest of the crate (and the BFS oracles in the tests) reason about.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cell edge length in kilometres.
pub const DEFAULT_CELL_SIZE_KM: f64 = 0.5;

const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Index of a grid cell, `row * nx + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId(pub usize);

impl CellId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Square-cell partition of a planar region, in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, nx: usize, ny: usize) -> Result<Self> {
        let grid = GridSpec {
            origin_x,
            origin_y,
            cell_size,
            nx,
            ny,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// A grid anchored at the origin with the default cell size.
    pub fn with_dims(nx: usize, ny: usize) -> Result<Self> {
        Self::new(0.0, 0.0, DEFAULT_CELL_SIZE_KM, nx, ny)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be positive, got {}x{}",
                self.nx, self.ny
            )));
        }
        // Network construction stores up to four neighbours per cell.
        match self.nx.checked_mul(self.ny).and_then(|n| n.checked_mul(4)) {
            Some(_) => Ok(()),
            None => Err(Error::InvalidGrid(format!(
                "{}x{} cells overflow the index range",
                self.nx, self.ny
            ))),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn check_cell(&self, cell: CellId) -> Result<()> {
        if cell.0 < self.n_cells() {
            Ok(())
        } else {
            Err(Error::InvalidCell {
                index: cell.0,
                n_cells: self.n_cells(),
            })
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> CellId {
        debug_assert!(row < self.ny && col < self.nx);
        CellId(row * self.nx + col)
    }

    pub fn row_col(&self, cell: CellId) -> (usize, usize) {
        (cell.0 / self.nx, cell.0 % self.nx)
    }

    /// Cell containing the planar point `(x, y)`. Points on or beyond the far
    /// edges are rejected rather than clamped.
    pub fn cell_at(&self, x: f64, y: f64) -> Result<CellId> {
        let fx = (x - self.origin_x) / self.cell_size;
        let fy = (y - self.origin_y) / self.cell_size;
        if !(fx.is_finite() && fy.is_finite())
            || fx < 0.0
            || fy < 0.0
            || fx >= self.nx as f64
            || fy >= self.ny as f64
        {
            return Err(Error::OutOfGrid { x, y });
        }
        let col = (fx.floor() as usize).min(self.nx - 1);
        let row = (fy.floor() as usize).min(self.ny - 1);
        Ok(self.cell(row, col))
    }

    pub fn center(&self, cell: CellId) -> (f64, f64) {
        let (row, col) = self.row_col(cell);
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Hop distance on the 4-neighbour network, i.e. Manhattan distance in cells.
    pub fn hop_distance(&self, a: CellId, b: CellId) -> usize {
        let (ra, ca) = self.row_col(a);
        let (rb, cb) = self.row_col(b);
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }

    /// Manhattan distance between cell centres in km.
    pub fn distance_km(&self, a: CellId, b: CellId) -> f64 {
        self.hop_distance(a, b) as f64 * self.cell_size
    }

    /// Largest hop distance between any two cells.
    pub fn diameter(&self) -> usize {
        self.nx + self.ny - 2
    }
}

/// Equirectangular projection of latitude/longitude onto planar km offsets
/// around a reference point. Adequate at metropolitan scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub ref_lat: f64,
    pub ref_lon: f64,
}

impl Projection {
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let x = EARTH_RADIUS_KM * (lon - self.ref_lon).to_radians() * self.ref_lat.to_radians().cos();
        let y = EARTH_RADIUS_KM * (lat - self.ref_lat).to_radians();
        (x, y)
    }
}

/// Cells of a grid connected to their North, East, South and West neighbours.
#[derive(Debug, Clone)]
pub struct CellNetwork {
    grid: GridSpec,
    adjacency: Vec<Vec<CellId>>,
}

pub fn build_network(grid: GridSpec) -> Result<CellNetwork> {
    grid.validate()?;
    let mut adjacency = Vec::with_capacity(grid.n_cells());
    for row in 0..grid.ny {
        for col in 0..grid.nx {
            let mut adj = Vec::with_capacity(4);
            if row > 0 {
                adj.push(grid.cell(row - 1, col));
            }
            if col > 0 {
                adj.push(grid.cell(row, col - 1));
            }
            if col + 1 < grid.nx {
                adj.push(grid.cell(row, col + 1));
            }
            if row + 1 < grid.ny {
                adj.push(grid.cell(row + 1, col));
            }
            adjacency.push(adj);
        }
    }
    Ok(CellNetwork { grid, adjacency })
}

impl CellNetwork {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_cells(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, cell: CellId) -> &[CellId] {
        &self.adjacency[cell.0]
    }

    /// Total number of directed adjacency entries.
    pub fn adjacency_entries(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn hop_distance(&self, a: CellId, b: CellId) -> usize {
        self.grid.hop_distance(a, b)
    }

    /// Cells at exactly `hops` from `cell`, sorted by index.
    pub fn neighborhood(&self, cell: CellId, hops: usize) -> Result<Vec<CellId>> {
        self.grid.check_cell(cell)?;
        let mut out = Vec::new();
        self.for_each_at_distance(cell, hops, |c| out.push(c));
        out.sort_unstable();
        Ok(out)
    }

    /// Cells within `h` hops of `cell` (the station's coverage set), sorted by index.
    pub fn coverage_set(&self, cell: CellId, h: usize) -> Result<Vec<CellId>> {
        self.grid.check_cell(cell)?;
        let mut out = Vec::new();
        self.for_each_within(cell, h, |c, _| out.push(c));
        out.sort_unstable();
        Ok(out)
    }

    /// Visits every cell at exactly `hops` from `cell`.
    fn for_each_at_distance(&self, cell: CellId, hops: usize, mut f: impl FnMut(CellId)) {
        let (row, col) = self.grid.row_col(cell);
        let (row, col) = (row as i64, col as i64);
        let j = hops as i64;
        for dr in -j..=j {
            let r = row + dr;
            if r < 0 || r >= self.grid.ny as i64 {
                continue;
            }
            let rem = j - dr.abs();
            for dc in if rem == 0 { vec![0] } else { vec![-rem, rem] } {
                let c = col + dc;
                if c >= 0 && c < self.grid.nx as i64 {
                    f(self.grid.cell(r as usize, c as usize));
                }
            }
        }
    }

    /// Visits every cell within `h` hops of `cell` together with its hop distance.
    pub fn for_each_within(&self, cell: CellId, h: usize, mut f: impl FnMut(CellId, usize)) {
        let (row, col) = self.grid.row_col(cell);
        let h = h.min(self.grid.diameter());
        let r_lo = row.saturating_sub(h);
        let r_hi = (row + h).min(self.grid.ny - 1);
        for r in r_lo..=r_hi {
            let rem = h - r.abs_diff(row);
            let c_lo = col.saturating_sub(rem);
            let c_hi = (col + rem).min(self.grid.nx - 1);
            for c in c_lo..=c_hi {
                f(self.grid.cell(r, c), r.abs_diff(row) + c.abs_diff(col));
            }
        }
    }
}

/// Sparse binary incidence matrix of a set-cover instance.
///
/// Entry `(i, j)` is one when the station candidate of column `j` covers the
/// cell of row `i`. Both orientations are stored so rows and columns can be
/// walked without a transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct ScpMatrix {
    h: usize,
    row_cols: Vec<Vec<u32>>,
    col_rows: Vec<Vec<u32>>,
}

impl ScpMatrix {
    /// Builds a matrix from the column lists of each row.
    pub fn from_rows(h: usize, n_cols: usize, row_cols: Vec<Vec<u32>>) -> Result<Self> {
        let mut col_rows = vec![Vec::new(); n_cols];
        for (r, cols) in row_cols.iter().enumerate() {
            for &c in cols {
                let slot = col_rows.get_mut(c as usize).ok_or(Error::DimensionMismatch {
                    expected: n_cols,
                    got: c as usize + 1,
                })?;
                slot.push(r as u32);
            }
        }
        let mut row_cols = row_cols;
        for cols in &mut row_cols {
            cols.sort_unstable();
            cols.dedup();
        }
        for rows in &mut col_rows {
            rows.sort_unstable();
            rows.dedup();
        }
        Ok(ScpMatrix {
            h,
            row_cols,
            col_rows,
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn n_rows(&self) -> usize {
        self.row_cols.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_rows.len()
    }

    /// Columns covering row `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.row_cols[i]
    }

    /// Rows covered by column `j`.
    pub fn col(&self, j: usize) -> &[u32] {
        &self.col_rows[j]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.row_cols[i].binary_search(&(j as u32)).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.row_cols.iter().map(Vec::len).sum()
    }

    /// Dense 0/1 rendering, mostly useful for tests and small fixtures.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.n_rows())
            .map(|i| (0..self.n_cols()).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }
}

/// Coverage matrix restricted to `retained` cells: rows and columns both index
/// `retained` in the given order.
pub fn build_scp_matrix(net: &CellNetwork, h: usize, retained: &[CellId]) -> Result<ScpMatrix> {
    if retained.is_empty() {
        return Err(Error::InvalidParameter("retained cell set is empty".into()));
    }
    let mut position = vec![u32::MAX; net.n_cells()];
    for (k, &cell) in retained.iter().enumerate() {
        net.grid().check_cell(cell)?;
        if position[cell.0] != u32::MAX {
            return Err(Error::InvalidParameter(format!(
                "cell {cell} retained twice"
            )));
        }
        position[cell.0] = k as u32;
    }
    let row_cols = retained
        .iter()
        .map(|&cell| {
            let mut cols = Vec::new();
            net.for_each_within(cell, h, |c, _| {
                let p = position[c.0];
                if p != u32::MAX {
                    cols.push(p);
                }
            });
            cols
        })
        .collect();
    ScpMatrix::from_rows(h, retained.len(), row_cols)
}
