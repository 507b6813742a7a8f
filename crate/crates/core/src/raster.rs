//! Equirectangular density grids of city weights, with a log-scale view for
//! display and ESRI ASCII / CSV writers.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{BBox, CityAggregate};
use crate::geodesy::GeoPoint;

pub const DEFAULT_ROWS: usize = 200;
pub const DEFAULT_COLS: usize = 400;
pub const NODATA: i32 = -1;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Raw counts, row-major, row 0 northernmost.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub bbox: BBox,
    pub n_rows: usize,
    pub n_cols: usize,
    pub cells: Vec<u64>,
    /// Cities outside the box, and their summed weight.
    pub overflow_cities: u64,
    pub overflow_weight: u64,
}

/// Cell index along one axis. Values on an interior edge fall to the lower
/// index; the outer edges are inclusive.
fn axis_index(v: f64, min: f64, max: f64, n: usize) -> usize {
    let t = (v - min) / (max - min) * n as f64;
    let idx = t.ceil() as isize - 1;
    idx.clamp(0, n as isize - 1) as usize
}

impl DensityGrid {
    pub fn cell_height(&self) -> f64 {
        (self.bbox.lat_max - self.bbox.lat_min) / self.n_rows as f64
    }

    pub fn cell_width(&self) -> f64 {
        (self.bbox.lon_max - self.bbox.lon_min) / self.n_cols as f64
    }

    /// `(row, col)` of the cell holding `p`, or `None` outside the box.
    pub fn cell_of(&self, p: GeoPoint) -> Option<(usize, usize)> {
        if !self.bbox.contains(p) {
            return None;
        }
        let b = &self.bbox;
        let from_south = axis_index(p.lat(), b.lat_min, b.lat_max, self.n_rows);
        let col = axis_index(p.lon(), b.lon_min, b.lon_max, self.n_cols);
        Some((self.n_rows - 1 - from_south, col))
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.cells[row * self.n_cols + col]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }
}

/// Bins every city's full weight into the cell containing its geocode.
pub fn density_grid(
    cities: &[CityAggregate],
    bbox: BBox,
    n_rows: usize,
    n_cols: usize,
) -> Result<DensityGrid, RasterError> {
    if n_rows == 0 || n_cols == 0 {
        return Err(RasterError::InvalidGrid(format!("{n_rows} x {n_cols}")));
    }
    if !(bbox.lat_min < bbox.lat_max && bbox.lon_min < bbox.lon_max) {
        return Err(RasterError::InvalidGrid("bounding box has zero extent".into()));
    }
    let mut grid = DensityGrid {
        bbox,
        n_rows,
        n_cols,
        cells: Vec::new(),
        overflow_cities: 0,
        overflow_weight: 0,
    };
    let n_cells = n_rows * n_cols;
    let (cells, overflow_cities, overflow_weight) = cities
        .par_iter()
        .fold(
            || (vec![0u64; n_cells], 0u64, 0u64),
            |(mut cells, oc, ow), c| match grid.cell_of(c.point()) {
                Some((r, col)) => {
                    cells[r * n_cols + col] += c.weight();
                    (cells, oc, ow)
                }
                None => (cells, oc + 1, ow + c.weight()),
            },
        )
        .reduce(
            || (vec![0u64; n_cells], 0, 0),
            |(mut a, ac, aw), (b, bc, bw)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                (a, ac + bc, aw + bw)
            },
        );
    grid.cells = cells;
    grid.overflow_cities = overflow_cities;
    grid.overflow_weight = overflow_weight;
    Ok(grid)
}

/// `log10(1 + c)` per cell, same layout as the grid.
pub fn log_display(grid: &DensityGrid) -> Vec<f64> {
    grid.cells
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { (1.0 + c as f64).log10() })
        .collect()
}

/// Cell values to serialize.
#[derive(Debug, Clone, Copy)]
pub enum GridValues<'a> {
    Counts(&'a [u64]),
    Display(&'a [f64]),
}

impl GridValues<'_> {
    fn fmt_cell(&self, i: usize) -> String {
        match self {
            GridValues::Counts(c) => c[i].to_string(),
            GridValues::Display(d) => d[i].to_string(),
        }
    }
}

/// ESRI ASCII grid, rows north to south. Square cells are described by
/// `cellsize`; otherwise the widely read `dx`/`dy` pair is emitted.
pub fn write_ascii_grid<W: Write>(mut w: W, grid: &DensityGrid, values: GridValues<'_>) -> io::Result<()> {
    let (dx, dy) = (grid.cell_width(), grid.cell_height());
    writeln!(w, "ncols {}", grid.n_cols)?;
    writeln!(w, "nrows {}", grid.n_rows)?;
    writeln!(w, "xllcorner {}", grid.bbox.lon_min)?;
    writeln!(w, "yllcorner {}", grid.bbox.lat_min)?;
    if dx == dy {
        writeln!(w, "cellsize {dx}")?;
    } else {
        writeln!(w, "dx {dx}")?;
        writeln!(w, "dy {dy}")?;
    }
    writeln!(w, "NODATA_value {NODATA}")?;
    for r in 0..grid.n_rows {
        let row: Vec<String> = (0..grid.n_cols).map(|c| values.fmt_cell(r * grid.n_cols + c)).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// CSV matrix: header `lat,<lon of each column center>`, then one row per
/// grid row (north to south) led by its center latitude.
pub fn write_grid_csv<W: Write>(mut w: W, grid: &DensityGrid, values: GridValues<'_>) -> io::Result<()> {
    let (dx, dy) = (grid.cell_width(), grid.cell_height());
    let mut header = vec!["lat".to_string()];
    header.extend((0..grid.n_cols).map(|c| (grid.bbox.lon_min + (c as f64 + 0.5) * dx).to_string()));
    writeln!(w, "{}", header.join(","))?;
    for r in 0..grid.n_rows {
        let lat = grid.bbox.lat_max - (r as f64 + 0.5) * dy;
        let mut row = vec![lat.to_string()];
        row.extend((0..grid.n_cols).map(|c| values.fmt_cell(r * grid.n_cols + c)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
