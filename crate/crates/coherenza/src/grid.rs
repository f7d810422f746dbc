//! Grid geometry, rainfall fields, 1-hop neighborhoods and the spatial mean.
//!
//! A [`GridSpec`] lists the land cells of a regular lat/lon lattice; sea cells
//! are simply absent. Location ids are assigned in ascending `(lat, lon)`
//! order and index every per-location array in this crate. A
//! [`RainfallField`] holds one annual total per location per year, and
//! [`compute_aimr`] reduces it to the spatial-mean series. [`smooth_1hop`]
//! replaces each cell by the mean of itself and its (up to 8) present Moore
//! neighbors; absent cells never contribute to the divisor.

use ndarray::Array2;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

/// Snap tolerance for lattice alignment, in degrees. Coordinates whose
/// deviation from the nearest lattice node exceeds this are rejected.
pub const LATTICE_TOLERANCE_DEG: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must contain at least one location")]
    Empty,
    #[error("grid step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("coordinate ({lat}, {lon}) is not finite")]
    NonFiniteCoordinate { lat: f64, lon: f64 },
    #[error("coordinate ({lat}, {lon}) is off the {step}-degree lattice")]
    OffLattice { lat: f64, lon: f64, step: f64 },
    #[error("duplicate location at ({lat}, {lon})")]
    DuplicateLocation { lat: f64, lon: f64 },
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("a rainfall field needs at least 2 years, got {0}")]
    TooFewYears(usize),
    #[error("value matrix has {got} columns but the grid has {expected} locations")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("value at year index {year}, location {location} is negative or non-finite: {value}")]
    BadValue {
        year: usize,
        location: usize,
        value: f64,
    },
}

/// Land-masked regular grid. Only listed cells exist; everything else is sea.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    points: Vec<(f64, f64)>,
    lattice: Vec<(i64, i64)>,
    index: HashMap<(i64, i64), usize>,
    grid_step: f64,
    lat0: f64,
    lon0: f64,
}

impl GridSpec {
    /// Builds a grid from `(lat, lon)` pairs. Input order is irrelevant:
    /// points are sorted by `(lat, lon)` and ids reassigned canonically.
    pub fn new(points: Vec<(f64, f64)>, grid_step: f64) -> Result<Self, GridError> {
        if points.is_empty() {
            return Err(GridError::Empty);
        }
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(GridError::BadStep(grid_step));
        }
        for &(lat, lon) in &points {
            if !(lat.is_finite() && lon.is_finite()) {
                return Err(GridError::NonFiniteCoordinate { lat, lon });
            }
        }
        let lat0 = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let lon0 = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);

        let mut keyed: Vec<((i64, i64), (f64, f64))> = Vec::with_capacity(points.len());
        for &(lat, lon) in &points {
            let row = snap((lat - lat0) / grid_step);
            let col = snap((lon - lon0) / grid_step);
            let off_lat = (lat - (lat0 + row as f64 * grid_step)).abs();
            let off_lon = (lon - (lon0 + col as f64 * grid_step)).abs();
            if off_lat > LATTICE_TOLERANCE_DEG || off_lon > LATTICE_TOLERANCE_DEG {
                return Err(GridError::OffLattice {
                    lat,
                    lon,
                    step: grid_step,
                });
            }
            keyed.push(((row, col), (lat, lon)));
        }
        keyed.sort_by_key(|k| k.0);
        for pair in keyed.windows(2) {
            if pair[0].0 == pair[1].0 {
                let (lat, lon) = pair[1].1;
                return Err(GridError::DuplicateLocation { lat, lon });
            }
        }
        let lattice: Vec<(i64, i64)> = keyed.iter().map(|k| k.0).collect();
        let points: Vec<(f64, f64)> = keyed.iter().map(|k| k.1).collect();
        let index = lattice
            .iter()
            .enumerate()
            .map(|(id, &rc)| (rc, id))
            .collect();
        Ok(Self {
            points,
            lattice,
            index,
            grid_step,
            lat0,
            lon0,
        })
    }

    /// Fully land-covered `rows x cols` rectangle, the default synthetic grid.
    pub fn full_rect(
        rows: usize,
        cols: usize,
        grid_step: f64,
        lat0: f64,
        lon0: f64,
    ) -> Result<Self, GridError> {
        let mut points = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                points.push((lat0 + r as f64 * grid_step, lon0 + c as f64 * grid_step));
            }
        }
        Self::new(points, grid_step)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// `(lat, lon)` of a location id.
    pub fn point(&self, id: usize) -> (f64, f64) {
        self.points[id]
    }

    /// Integer `(row, col)` of a location relative to the grid origin.
    pub fn lattice_index(&self, id: usize) -> (i64, i64) {
        self.lattice[id]
    }

    /// Looks up the location id of a coordinate, if that cell is present.
    pub fn position_of(&self, lat: f64, lon: f64) -> Option<usize> {
        let row = snap((lat - self.lat0) / self.grid_step);
        let col = snap((lon - self.lon0) / self.grid_step);
        let off_lat = (lat - (self.lat0 + row as f64 * self.grid_step)).abs();
        let off_lon = (lon - (self.lon0 + col as f64 * self.grid_step)).abs();
        if off_lat > LATTICE_TOLERANCE_DEG || off_lon > LATTICE_TOLERANCE_DEG {
            return None;
        }
        self.index.get(&(row, col)).copied()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

fn snap(x: f64) -> i64 {
    x.round() as i64
}

/// 1-hop (Moore) adjacency restricted to present cells. Nominal neighborhood
/// size is 8; coastal and island cells have fewer neighbors, never imputed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<usize>>,
}

impl NeighborGraph {
    /// Neighbor ids of `id`, ascending, excluding `id` itself.
    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }
}

const MOORE_OFFSETS: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Builds the 1-hop neighbor graph of a grid. Cells missing from the grid
/// (sea) are skipped, so coastal cells get truncated neighborhoods.
pub fn build_neighbor_graph(grid: &GridSpec) -> NeighborGraph {
    let adjacency = (0..grid.len())
        .map(|id| {
            let (row, col) = grid.lattice_index(id);
            let mut adj: Vec<usize> = MOORE_OFFSETS
                .iter()
                .filter_map(|&(dr, dc)| grid.index.get(&(row + dr, col + dc)).copied())
                .collect();
            adj.sort_unstable();
            adj
        })
        .collect();
    NeighborGraph { adjacency }
}

/// Annual rainfall totals per location per year, non-negative and complete.
#[derive(Debug, Clone, PartialEq)]
pub struct RainfallField {
    grid: Arc<GridSpec>,
    first_year: i32,
    values: Array2<f64>,
}

impl RainfallField {
    /// `values` is `[n_years x n_locations]`, year-major.
    pub fn new(
        grid: Arc<GridSpec>,
        first_year: i32,
        values: Array2<f64>,
    ) -> Result<Self, FieldError> {
        if values.ncols() != grid.len() {
            return Err(FieldError::ShapeMismatch {
                got: values.ncols(),
                expected: grid.len(),
            });
        }
        if values.nrows() < 2 {
            return Err(FieldError::TooFewYears(values.nrows()));
        }
        for ((year, location), &value) in values.indexed_iter() {
            if !value.is_finite() || value < 0.0 {
                return Err(FieldError::BadValue {
                    year,
                    location,
                    value,
                });
            }
        }
        Ok(Self {
            grid,
            first_year,
            values,
        })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn n_locations(&self) -> usize {
        self.grid.len()
    }

    pub fn n_years(&self) -> usize {
        self.values.nrows()
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    /// Calendar year of a year index.
    pub fn year_at(&self, index: usize) -> i32 {
        self.first_year + index as i32
    }

    pub fn value(&self, year_index: usize, location: usize) -> f64 {
        self.values[(year_index, location)]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Spatial-mean series over all grid cells, one value per year.
#[derive(Debug, Clone, PartialEq)]
pub struct AimrSeries {
    first_year: i32,
    values: Vec<f64>,
}

impl AimrSeries {
    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Unweighted spatial mean per year. Summation runs in ascending location id
/// order so results are reproducible bit for bit.
pub fn compute_aimr(field: &RainfallField) -> AimrSeries {
    let n = field.n_locations() as f64;
    let values = field
        .values()
        .rows()
        .into_iter()
        .map(|row| row.iter().sum::<f64>() / n)
        .collect();
    AimrSeries {
        first_year: field.first_year(),
        values,
    }
}

/// Replaces each cell by the mean over itself and its present 1-hop
/// neighbors. The divisor is `1 + |adj(s)|`: absent (sea) cells contribute
/// neither to the sum nor to the divisor.
pub fn smooth_1hop(field: &RainfallField, graph: &NeighborGraph) -> RainfallField {
    assert_eq!(
        graph.len(),
        field.n_locations(),
        "neighbor graph and field must share a grid"
    );
    let n_years = field.n_years();
    let n = field.n_locations();
    let mut smoothed = Array2::zeros((n_years, n));
    for s in 0..n {
        // Sum in ascending location id order, self included.
        let mut members: Vec<usize> = Vec::with_capacity(1 + graph.neighbors(s).len());
        members.extend_from_slice(graph.neighbors(s));
        let insert_at = members.partition_point(|&m| m < s);
        members.insert(insert_at, s);
        let divisor = members.len() as f64;
        for t in 0..n_years {
            let sum: f64 = members.iter().map(|&m| field.value(t, m)).sum();
            smoothed[(t, s)] = sum / divisor;
        }
    }
    RainfallField {
        grid: Arc::clone(field.grid()),
        first_year: field.first_year(),
        values: smoothed,
    }
}
