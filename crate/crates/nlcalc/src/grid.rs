//! Point-cloud discretization: nodes, midpoint quadrature weights, and
//! horizon-limited neighbor lists.
//!
//! Nodes interact only within the horizon `eps`; the neighbor relation is
//! symmetric, excludes the node itself, and every list is sorted ascending
//! so that summation order is deterministic.

use crate::{Error, Result};
use std::sync::Arc;

/// Point cloud with quadrature weights and horizon neighbor lists.
///
/// Positions are padded to three components; unused trailing components are
/// zero, so Euclidean distances are valid in every dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    positions: Vec<[f64; 3]>,
    weights: Vec<f64>,
    horizon: f64,
    neighbors: Vec<Vec<usize>>,
}

impl Grid {
    /// Builds a grid from explicit nodes and weights, running the brute-force
    /// neighbor search.
    pub fn from_points(
        dim: usize,
        positions: Vec<[f64; 3]>,
        weights: Vec<f64>,
        horizon: f64,
    ) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::config(format!("dim must be 1, 2, or 3, got {dim}")));
        }
        if positions.len() != weights.len() {
            return Err(Error::config("positions and weights differ in length"));
        }
        if positions.is_empty() {
            return Err(Error::config("grid has no nodes"));
        }
        if !(horizon > 0.0) {
            return Err(Error::config(format!("horizon must be positive, got {horizon}")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::config(format!("weights must be strictly positive, got {w}")));
        }
        let neighbors = brute_force_neighbors(&positions, horizon);
        Ok(Arc::new(Grid { dim, positions, weights, horizon, neighbors }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        self.positions[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sorted indices j with `0 < |x_j - x_i| <= horizon`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let a = self.positions[i];
        let b = self.positions[j];
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        let dz = b[2] - a[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Bond vector `x_j - x_i`.
    pub fn bond(&self, i: usize, j: usize) -> [f64; 3] {
        let a = self.positions[i];
        let b = self.positions[j];
        [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
    }

    /// Total quadrature measure of the grid.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn brute_force_neighbors(positions: &[[f64; 3]], horizon: f64) -> Vec<Vec<usize>> {
    let n = positions.len();
    let mut lists = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[j][0] - positions[i][0];
            let dy = positions[j][1] - positions[i][1];
            let dz = positions[j][2] - positions[i][2];
            let d = (dx * dx + dy * dy + dz * dz).sqrt();
            if d > 0.0 && d <= horizon {
                lists[i].push(j);
                lists[j].push(i);
            }
        }
    }
    // the scan emits j ascending for the first index but out of order for the
    // second; sort both to honor the determinism contract
    for l in &mut lists {
        l.sort_unstable();
    }
    lists
}

/// Builds a uniform lattice over an axis-aligned box, nodes at cell centers,
/// weight `spacing^dim` per node.
pub fn build_uniform_grid(bounds: &[[f64; 2]], spacing: f64, horizon: f64) -> Result<Arc<Grid>> {
    let dim = bounds.len();
    if !(1..=3).contains(&dim) {
        return Err(Error::config(format!("bounds must list 1..=3 axes, got {dim}")));
    }
    if !(spacing > 0.0) {
        return Err(Error::config(format!("spacing must be positive, got {spacing}")));
    }
    if horizon < spacing {
        return Err(Error::config(format!(
            "horizon {horizon} is smaller than spacing {spacing}: neighbor lists would be empty"
        )));
    }
    let mut cells = [1usize; 3];
    for (axis, b) in bounds.iter().enumerate() {
        let len = b[1] - b[0];
        if !(len > 0.0) {
            return Err(Error::config(format!("axis {axis}: hi must exceed lo, got [{}, {}]", b[0], b[1])));
        }
        let count = len / spacing;
        let rounded = count.round();
        if rounded < 1.0 || (count - rounded).abs() > 1e-9 * count.max(1.0) {
            return Err(Error::config(format!(
                "axis {axis}: extent {len} is not an integer multiple of spacing {spacing}"
            )));
        }
        cells[axis] = rounded as usize;
    }
    let n: usize = cells[..dim].iter().product();
    let mut positions = Vec::with_capacity(n);
    let mut idx = [0usize; 3];
    loop {
        let mut p = [0.0; 3];
        for axis in 0..dim {
            p[axis] = bounds[axis][0] + (idx[axis] as f64 + 0.5) * spacing;
        }
        positions.push(p);
        // odometer increment, axis 0 fastest
        let mut axis = 0;
        loop {
            idx[axis] += 1;
            if idx[axis] < cells[axis] {
                break;
            }
            idx[axis] = 0;
            axis += 1;
            if axis == dim {
                let weight = spacing.powi(dim as i32);
                let weights = vec![weight; positions.len()];
                return Grid::from_points(dim, positions, weights, horizon);
            }
        }
    }
}

/// Partition of the node indices into a subdomain and its complement.
#[derive(Debug, Clone)]
pub struct Subdomain {
    grid: Arc<Grid>,
    member: Vec<bool>,
}

impl Subdomain {
    pub fn new(grid: Arc<Grid>, member: Vec<bool>) -> Result<Self> {
        if member.len() != grid.len() {
            return Err(Error::config("membership flags must cover every node"));
        }
        Ok(Subdomain { grid, member })
    }

    pub fn all(grid: Arc<Grid>) -> Self {
        let member = vec![true; grid.len()];
        Subdomain { grid, member }
    }

    pub fn empty(grid: Arc<Grid>) -> Self {
        let member = vec![false; grid.len()];
        Subdomain { grid, member }
    }

    /// Axis-aligned box selection in physical coordinates (inclusive).
    pub fn from_box(grid: Arc<Grid>, lo: [f64; 3], hi: [f64; 3]) -> Self {
        let member = (0..grid.len())
            .map(|i| {
                let p = grid.position(i);
                (0..grid.dim()).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
            })
            .collect();
        Subdomain { grid, member }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn contains(&self, i: usize) -> bool {
        self.member[i]
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.member.len()).filter(|&i| self.member[i])
    }
}

/// Checks that two fields or kernels live on the same grid.
pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch("operands live on different grids"))
    }
}
