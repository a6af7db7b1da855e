//! Spatial discretization, measurement assignment and aggregation, masks.
//!
//! A map lives on an `n_y × n_x` rectangular grid.  Row index `i` moves
//! along y, column index `j` along x, so grid point `(i, j)` sits at
//! `origin + (j·delta_x, i·delta_y)`.  Scattered measurements are assigned
//! to their nearest grid point and averaged per cell in the linear power
//! domain; cells that receive no measurement keep a fill value of 0 dB and
//! are excluded from the observation set Ω.

use std::collections::BTreeSet;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, linear_to_db};

/// Set of grid cells, ordered row-major by construction.
pub type CellSet = BTreeSet<(usize, usize)>;

/// Fill value (dB) stored at unobserved cells of a sampled map.
pub const FILL_DB: f64 = 0.0;

/// Geometry of the rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_y: usize,
    pub n_x: usize,
    /// Spacing along x in meters.
    pub delta_x: f64,
    /// Spacing along y in meters.
    pub delta_y: f64,
    /// World coordinates (x, y) of grid point (0, 0), in meters.
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(n_y: usize, n_x: usize, delta_x: f64, delta_y: f64, origin: [f64; 2]) -> Result<Self> {
        if n_y < 1 || n_x < 1 {
            return Err(Error::InvalidConfig(format!(
                "grid must have at least one cell per axis, got {n_y}×{n_x}"
            )));
        }
        if !(delta_x > 0.0) || !(delta_y > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid spacings must be positive, got delta_x={delta_x}, delta_y={delta_y}"
            )));
        }
        Ok(GridSpec { n_y, n_x, delta_x, delta_y, origin })
    }

    /// Square grid with equal spacing and origin at (0, 0).
    pub fn square(n: usize, delta: f64) -> Result<Self> {
        GridSpec::new(n, n, delta, delta, [0.0, 0.0])
    }

    pub fn n_cells(&self) -> usize {
        self.n_y * self.n_x
    }

    /// World coordinates (x, y) of grid point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + j as f64 * self.delta_x,
            self.origin[1] + i as f64 * self.delta_y,
        ]
    }

    /// Squared Euclidean distance between grid point `(i, j)` and `p`.
    pub fn dist2(&self, i: usize, j: usize, p: [f64; 2]) -> f64 {
        let q = self.point(i, j);
        (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
    }

    /// Nearest grid point to `p`; ties resolved to the smallest `(i, j)` in
    /// row-major order.  Points outside the grid hull map to the nearest
    /// boundary point.
    pub fn nearest_cell(&self, p: [f64; 2]) -> (usize, usize) {
        let cand = |t: f64, n: usize| -> [usize; 2] {
            let a = t.floor().clamp(0.0, (n - 1) as f64) as usize;
            let b = (a + 1).min(n - 1);
            [a, b]
        };
        let is_cand = cand((p[1] - self.origin[1]) / self.delta_y, self.n_y);
        let js_cand = cand((p[0] - self.origin[0]) / self.delta_x, self.n_x);
        let mut best = (is_cand[0], js_cand[0]);
        let mut best_d = self.dist2(best.0, best.1, p);
        for &i in &is_cand {
            for &j in &js_cand {
                let d = self.dist2(i, j, p);
                if d < best_d || (d == best_d && (i, j) < best) {
                    best = (i, j);
                    best_d = d;
                }
            }
        }
        best
    }
}

/// Scattered measurements: locations in meters, one dB value per frequency.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub locations: Vec<[f64; 2]>,
    /// `N × N_f`, dB.
    pub values: Array2<f64>,
    /// Frequencies in Hz, length `N_f`.
    pub frequencies: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(locations: Vec<[f64; 2]>, values: Array2<f64>, frequencies: Vec<f64>) -> Result<Self> {
        if values.nrows() != locations.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} locations but {} value rows",
                locations.len(),
                values.nrows()
            )));
        }
        if values.ncols() != frequencies.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} value columns but {} frequencies",
                values.ncols(),
                frequencies.len()
            )));
        }
        if locations.iter().flatten().any(|v| !v.is_finite())
            || values.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite measurement location or value".into()));
        }
        Ok(MeasurementSet { locations, values, frequencies })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// Dense true or estimated map: `n_y × n_x × n_f`, dB.
#[derive(Debug, Clone, PartialEq)]
pub struct MapTensor {
    pub grid: GridSpec,
    pub frequencies: Vec<f64>,
    /// `(n_y, n_x, n_f)`.
    pub values: Array3<f64>,
}

impl MapTensor {
    pub fn new(grid: GridSpec, frequencies: Vec<f64>, values: Array3<f64>) -> Result<Self> {
        let expect = (grid.n_y, grid.n_x, frequencies.len());
        if values.dim() != expect {
            return Err(Error::ShapeMismatch(format!(
                "map values have shape {:?}, grid and frequencies imply {:?}",
                values.dim(),
                expect
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite map value".into()));
        }
        Ok(MapTensor { grid, frequencies, values })
    }

    pub fn n_f(&self) -> usize {
        self.frequencies.len()
    }
}

/// Sparse observation of a map: dense value tensor with misses filled,
/// plus the observation set and its {0,1} mask.
#[derive(Debug, Clone)]
pub struct SampledMap {
    pub grid: GridSpec,
    pub frequencies: Vec<f64>,
    /// `(n_y, n_x, n_f)`, dB; equals [`FILL_DB`] off `omega`.
    pub values: Array3<f64>,
    /// Observed cells, in construction order.
    pub omega: Vec<(usize, usize)>,
    /// `n_y × n_x`, 1.0 on `omega`, 0.0 elsewhere.
    pub sample_mask: Array2<f64>,
    /// Optional side-information channels (e.g. a combined building mask).
    pub meta_masks: Vec<Array2<f64>>,
}

impl SampledMap {
    /// Builds the mask from `omega` and checks the consistency invariants.
    pub fn new(
        grid: GridSpec,
        frequencies: Vec<f64>,
        values: Array3<f64>,
        omega: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let expect = (grid.n_y, grid.n_x, frequencies.len());
        if values.dim() != expect {
            return Err(Error::ShapeMismatch(format!(
                "sampled values have shape {:?}, expected {:?}",
                values.dim(),
                expect
            )));
        }
        let mut sample_mask = Array2::zeros((grid.n_y, grid.n_x));
        for &(i, j) in &omega {
            if i >= grid.n_y || j >= grid.n_x {
                return Err(Error::InvalidConfig(format!(
                    "observed cell ({i}, {j}) outside {}×{} grid",
                    grid.n_y, grid.n_x
                )));
            }
            if sample_mask[[i, j]] != 0.0 {
                return Err(Error::InvalidConfig(format!("cell ({i}, {j}) observed twice")));
            }
            sample_mask[[i, j]] = 1.0;
        }
        for ((i, j, _), v) in values.indexed_iter() {
            if sample_mask[[i, j]] == 0.0 && *v != FILL_DB {
                return Err(Error::InvalidConfig(format!(
                    "unobserved cell ({i}, {j}) holds {v} instead of the fill value"
                )));
            }
        }
        Ok(SampledMap { grid, frequencies, values, omega, sample_mask, meta_masks: Vec::new() })
    }

    pub fn n_f(&self) -> usize {
        self.frequencies.len()
    }

    pub fn omega_set(&self) -> CellSet {
        self.omega.iter().copied().collect()
    }

    /// Replaces the sample mask by the combined {0,1,−1} sample/building
    /// mask.  Fails if a building cell was observed.
    pub fn combine_with_buildings(&mut self, buildings: &CellSet) -> Result<()> {
        self.sample_mask = combine_masks(&self.sample_mask, buildings)?;
        Ok(())
    }
}

/// Per-cell measurement index lists, row-major; `assignment[i * n_x + j]`
/// holds the indices assigned to grid point `(i, j)`.
pub type Assignment = Vec<Vec<usize>>;

/// Assigns every measurement to its nearest grid point (ties row-major).
pub fn assign_to_grid(grid: &GridSpec, meas: &MeasurementSet) -> Assignment {
    let mut assignment = vec![Vec::new(); grid.n_cells()];
    for (n, &p) in meas.locations.iter().enumerate() {
        let (i, j) = grid.nearest_cell(p);
        assignment[i * grid.n_x + j].push(n);
    }
    assignment
}

/// Averages the measurements assigned to each cell (arithmetic mean of
/// linear powers, result in dB).  Cells without measurements keep the fill
/// value and stay outside Ω.
pub fn aggregate(grid: &GridSpec, meas: &MeasurementSet, assignment: &Assignment) -> Result<SampledMap> {
    if assignment.len() != grid.n_cells() {
        return Err(Error::ShapeMismatch(format!(
            "assignment covers {} cells, grid has {}",
            assignment.len(),
            grid.n_cells()
        )));
    }
    let n_f = meas.frequencies.len();
    let mut values = Array3::from_elem((grid.n_y, grid.n_x, n_f), FILL_DB);
    let mut omega = Vec::new();
    for i in 0..grid.n_y {
        for j in 0..grid.n_x {
            let members = &assignment[i * grid.n_x + j];
            if members.is_empty() {
                continue;
            }
            omega.push((i, j));
            for f in 0..n_f {
                let mean_linear = members
                    .iter()
                    .map(|&n| db_to_linear(meas.values[[n, f]]))
                    .sum::<f64>()
                    / members.len() as f64;
                values[[i, j, f]] = linear_to_db(mean_linear);
            }
        }
    }
    SampledMap::new(grid.clone(), meas.frequencies.clone(), values, omega)
}

/// Combines a {0,1} sample mask with a building set into a {0,1,−1} mask:
/// 1 on observed cells, −1 on building cells, 0 elsewhere.
pub fn combine_masks(sample_mask: &Array2<f64>, buildings: &CellSet) -> Result<Array2<f64>> {
    let (n_y, n_x) = sample_mask.dim();
    let mut combined = sample_mask.clone();
    for &(i, j) in buildings {
        if i >= n_y || j >= n_x {
            return Err(Error::InvalidConfig(format!(
                "building cell ({i}, {j}) outside {n_y}×{n_x} grid"
            )));
        }
        if combined[[i, j]] == 1.0 {
            return Err(Error::InvalidConfig(format!(
                "cell ({i}, {j}) is both observed and a building"
            )));
        }
        combined[[i, j]] = -1.0;
    }
    Ok(combined)
}

/// Replaces each cell by the linear-domain mean over its `k` nearest grid
/// points (including itself; distance ties row-major).
pub fn smooth_map(map: &MapTensor, k_neighbors: usize) -> Result<MapTensor> {
    let grid = &map.grid;
    if k_neighbors < 1 {
        return Err(Error::InvalidConfig("k_neighbors must be at least 1".into()));
    }
    if k_neighbors > grid.n_cells() {
        return Err(Error::InvalidConfig(format!(
            "k_neighbors = {k_neighbors} exceeds the {} grid cells",
            grid.n_cells()
        )));
    }
    if k_neighbors == 1 {
        return Ok(map.clone());
    }
    let n_f = map.n_f();
    let mut out = Array3::zeros(map.values.dim());
    let mut order: Vec<(f64, usize, usize)> = Vec::with_capacity(grid.n_cells());
    for ci in 0..grid.n_y {
        for cj in 0..grid.n_x {
            let p = grid.point(ci, cj);
            order.clear();
            for i in 0..grid.n_y {
                for j in 0..grid.n_x {
                    order.push((grid.dist2(i, j, p), i, j));
                }
            }
            order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            for f in 0..n_f {
                let mean_linear = order[..k_neighbors]
                    .iter()
                    .map(|&(_, i, j)| db_to_linear(map.values[[i, j, f]]))
                    .sum::<f64>()
                    / k_neighbors as f64;
                out[[ci, cj, f]] = linear_to_db(mean_linear);
            }
        }
    }
    MapTensor::new(grid.clone(), map.frequencies.clone(), out)
}
