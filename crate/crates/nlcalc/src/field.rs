//! One-point and two-point fields over a grid, with the discrete duality
//! pairings.
//!
//! A field stores a contiguous block of `rank.len()` components per node
//! (one-point) or per node pair (two-point). Two-point fields come in a
//! dense variant over all ordered pairs and a sparse variant over the
//! horizon pairs plus the diagonal; sparse entries outside the stored
//! pattern are zero.

use crate::grid::same_grid;
use crate::{Error, Grid, Result};
use rand::Rng;
use std::sync::Arc;

/// Component structure of a field value: scalar, vector in `R^k`, or a
/// `k x k` tensor stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector(usize),
    Tensor(usize),
}

impl Rank {
    pub fn len(&self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector(k) => *k,
            Rank::Tensor(k) => k * k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = match self {
            Rank::Scalar => return Ok(()),
            Rank::Vector(k) | Rank::Tensor(k) => *k,
        };
        if (1..=3).contains(&k) {
            Ok(())
        } else {
            Err(Error::Dimension(format!("component dimension must be 1..=3, got {k}")))
        }
    }
}

/// Scalar-, vector-, or tensor-valued function of one node.
#[derive(Debug, Clone)]
pub struct OnePointField {
    grid: Arc<Grid>,
    rank: Rank,
    values: Vec<f64>,
}

impl OnePointField {
    pub fn zeros(grid: Arc<Grid>, rank: Rank) -> Result<Self> {
        rank.validate()?;
        let values = vec![0.0; grid.len() * rank.len()];
        Ok(OnePointField { grid, rank, values })
    }

    /// Fills node `i` from `f(i, x_i)`.
    pub fn from_fn(
        grid: Arc<Grid>,
        rank: Rank,
        mut f: impl FnMut(usize, [f64; 3], &mut [f64]),
    ) -> Result<Self> {
        let mut field = Self::zeros(grid, rank)?;
        let stride = rank.len();
        for i in 0..field.grid.len() {
            let x = field.grid.position(i);
            f(i, x, &mut field.values[i * stride..(i + 1) * stride]);
        }
        Ok(field)
    }

    /// Constant value at every node.
    pub fn constant(grid: Arc<Grid>, rank: Rank, value: &[f64]) -> Result<Self> {
        if value.len() != rank.len() {
            return Err(Error::Dimension("constant length does not match rank".into()));
        }
        Self::from_fn(grid, rank, |_, _, out| out.copy_from_slice(value))
    }

    /// Componentwise uniform in `[-1, 1]`.
    pub fn random(grid: Arc<Grid>, rank: Rank, rng: &mut impl Rng) -> Result<Self> {
        Self::from_fn(grid, rank, |_, _, out| {
            for v in out {
                *v = rng.gen_range(-1.0..=1.0);
            }
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn value(&self, i: usize) -> &[f64] {
        let s = self.rank.len();
        &self.values[i * s..(i + 1) * s]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.rank.len();
        &mut self.values[i * s..(i + 1) * s]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Max absolute component over all nodes.
    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Weighted L2 norm `sqrt(sum_i w_i |f_i|^2)`.
    pub fn norm_l2(&self) -> f64 {
        let s = self.rank.len();
        let mut total = 0.0;
        for i in 0..self.grid.len() {
            let block = &self.values[i * s..(i + 1) * s];
            let sq: f64 = block.iter().map(|v| v * v).sum();
            total += self.grid.weight(i) * sq;
        }
        total.sqrt()
    }

    /// `self + scale * other`, checking grid and rank agreement.
    pub fn axpy(&self, scale: f64, other: &OnePointField) -> Result<OnePointField> {
        same_grid(&self.grid, &other.grid)?;
        if self.rank != other.rank {
            return Err(Error::RankMismatch { expected: self.rank, got: other.rank });
        }
        let mut out = self.clone();
        for (o, v) in out.values.iter_mut().zip(&other.values) {
            *o += scale * v;
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> OnePointField {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }
}

#[derive(Debug, Clone)]
enum PairStorage {
    /// All `N^2` ordered pairs, row-major in the pair indices.
    Dense(Vec<f64>),
    /// Per node: the diagonal pair followed by the horizon pairs in
    /// neighbor-list order. `row_start[i]` indexes entry slots.
    Sparse { row_start: Vec<usize>, values: Vec<f64> },
}

/// Scalar-, vector-, or tensor-valued function of an ordered node pair.
#[derive(Debug, Clone)]
pub struct TwoPointField {
    grid: Arc<Grid>,
    rank: Rank,
    storage: PairStorage,
}

impl TwoPointField {
    pub fn zeros_dense(grid: Arc<Grid>, rank: Rank) -> Result<Self> {
        rank.validate()?;
        let n = grid.len();
        let values = vec![0.0; n * n * rank.len()];
        Ok(TwoPointField { grid, rank, storage: PairStorage::Dense(values) })
    }

    pub fn zeros_sparse(grid: Arc<Grid>, rank: Rank) -> Result<Self> {
        rank.validate()?;
        let n = grid.len();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut slots = 0usize;
        for i in 0..n {
            row_start.push(slots);
            slots += 1 + grid.neighbors(i).len();
        }
        row_start.push(slots);
        let values = vec![0.0; slots * rank.len()];
        Ok(TwoPointField { grid, rank, storage: PairStorage::Sparse { row_start, values } })
    }

    /// Dense fill from `f(i, j, out)` over all ordered pairs.
    pub fn from_fn_dense(
        grid: Arc<Grid>,
        rank: Rank,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut field = Self::zeros_dense(grid, rank)?;
        let n = field.grid.len();
        let s = rank.len();
        if let PairStorage::Dense(values) = &mut field.storage {
            for i in 0..n {
                for j in 0..n {
                    let at = (i * n + j) * s;
                    f(i, j, &mut values[at..at + s]);
                }
            }
        }
        Ok(field)
    }

    /// Sparse fill over the stored pattern: the diagonal and horizon pairs.
    pub fn from_fn_sparse(
        grid: Arc<Grid>,
        rank: Rank,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut field = Self::zeros_sparse(grid.clone(), rank)?;
        let s = rank.len();
        if let PairStorage::Sparse { row_start, values } = &mut field.storage {
            for i in 0..grid.len() {
                let base = row_start[i];
                let at = base * s;
                f(i, i, &mut values[at..at + s]);
                for (off, &j) in grid.neighbors(i).iter().enumerate() {
                    let at = (base + 1 + off) * s;
                    f(i, j, &mut values[at..at + s]);
                }
            }
        }
        Ok(field)
    }

    pub fn random_dense(grid: Arc<Grid>, rank: Rank, rng: &mut impl Rng) -> Result<Self> {
        Self::from_fn_dense(grid, rank, |_, _, out| {
            for v in out {
                *v = rng.gen_range(-1.0..=1.0);
            }
        })
    }

    pub fn random_sparse(grid: Arc<Grid>, rank: Rank, rng: &mut impl Rng) -> Result<Self> {
        Self::from_fn_sparse(grid, rank, |_, _, out| {
            for v in out {
                *v = rng.gen_range(-1.0..=1.0);
            }
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, PairStorage::Sparse { .. })
    }

    fn sparse_slot(&self, i: usize, j: usize) -> Option<usize> {
        match &self.storage {
            PairStorage::Sparse { row_start, .. } => {
                if i == j {
                    return Some(row_start[i]);
                }
                self.grid.neighbors(i).binary_search(&j).ok().map(|off| row_start[i] + 1 + off)
            }
            PairStorage::Dense(_) => None,
        }
    }

    /// Copies the value at `(i, j)` into `out`; zero when the pair is
    /// outside a sparse pattern.
    pub fn block_into(&self, i: usize, j: usize, out: &mut [f64]) {
        let s = self.rank.len();
        match &self.storage {
            PairStorage::Dense(values) => {
                let at = (i * self.grid.len() + j) * s;
                out[..s].copy_from_slice(&values[at..at + s]);
            }
            PairStorage::Sparse { values, .. } => match self.sparse_slot(i, j) {
                Some(slot) => out[..s].copy_from_slice(&values[slot * s..(slot + 1) * s]),
                None => out[..s].fill(0.0),
            },
        }
    }

    /// Convenience accessor for values with at most 9 components.
    pub fn block(&self, i: usize, j: usize) -> [f64; 9] {
        let mut out = [0.0; 9];
        self.block_into(i, j, &mut out);
        out
    }

    pub fn set(&mut self, i: usize, j: usize, value: &[f64]) -> Result<()> {
        let s = self.rank.len();
        let n = self.grid.len();
        match &mut self.storage {
            PairStorage::Dense(values) => {
                let at = (i * n + j) * s;
                values[at..at + s].copy_from_slice(value);
                Ok(())
            }
            PairStorage::Sparse { .. } => {
                let slot = self
                    .sparse_slot(i, j)
                    .ok_or_else(|| Error::Precondition(format!("pair ({i}, {j}) outside sparse pattern")))?;
                if let PairStorage::Sparse { values, .. } = &mut self.storage {
                    values[slot * s..(slot + 1) * s].copy_from_slice(value);
                }
                Ok(())
            }
        }
    }

    /// Max absolute component over stored entries.
    pub fn norm_inf(&self) -> f64 {
        let values = match &self.storage {
            PairStorage::Dense(v) => v,
            PairStorage::Sparse { values, .. } => values,
        };
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Weighted L2 norm `sqrt(sum_ij w_i w_j |f_ij|^2)`.
    pub fn norm_l2(&self) -> f64 {
        let s = self.rank.len();
        let mut total = 0.0;
        match &self.storage {
            PairStorage::Dense(values) => {
                let n = self.grid.len();
                for i in 0..n {
                    let wi = self.grid.weight(i);
                    for j in 0..n {
                        let at = (i * n + j) * s;
                        let sq: f64 = values[at..at + s].iter().map(|v| v * v).sum();
                        total += wi * self.grid.weight(j) * sq;
                    }
                }
            }
            PairStorage::Sparse { row_start, values } => {
                for i in 0..self.grid.len() {
                    let wi = self.grid.weight(i);
                    let base = row_start[i];
                    let diag: f64 = values[base * s..(base + 1) * s].iter().map(|v| v * v).sum();
                    total += wi * wi * diag;
                    for (off, &j) in self.grid.neighbors(i).iter().enumerate() {
                        let at = (base + 1 + off) * s;
                        let sq: f64 = values[at..at + s].iter().map(|v| v * v).sum();
                        total += wi * self.grid.weight(j) * sq;
                    }
                }
            }
        }
        total.sqrt()
    }

    pub fn axpy(&self, scale: f64, other: &TwoPointField) -> Result<TwoPointField> {
        same_grid(&self.grid, &other.grid)?;
        if self.rank != other.rank {
            return Err(Error::RankMismatch { expected: self.rank, got: other.rank });
        }
        // mixed storage falls back to a dense result
        match (&self.storage, &other.storage) {
            (PairStorage::Dense(a), PairStorage::Dense(b)) => {
                let mut out = self.clone();
                if let PairStorage::Dense(v) = &mut out.storage {
                    for (o, (x, y)) in v.iter_mut().zip(a.iter().zip(b)) {
                        *o = x + scale * y;
                    }
                }
                Ok(out)
            }
            (PairStorage::Sparse { values: a, .. }, PairStorage::Sparse { values: b, .. }) => {
                let mut out = self.clone();
                if let PairStorage::Sparse { values: v, .. } = &mut out.storage {
                    for (o, (x, y)) in v.iter_mut().zip(a.iter().zip(b)) {
                        *o = x + scale * y;
                    }
                }
                Ok(out)
            }
            _ => {
                let s = self.rank.len();
                let mut buf_a = vec![0.0; s];
                let mut buf_b = vec![0.0; s];
                TwoPointField::from_fn_dense(self.grid.clone(), self.rank, |i, j, out| {
                    self.block_into(i, j, &mut buf_a);
                    other.block_into(i, j, &mut buf_b);
                    for ((o, a), b) in out.iter_mut().zip(&buf_a).zip(&buf_b) {
                        *o = a + scale * b;
                    }
                })
            }
        }
    }

    pub fn scale(&self, factor: f64) -> TwoPointField {
        let mut out = self.clone();
        let values = match &mut out.storage {
            PairStorage::Dense(v) => v,
            PairStorage::Sparse { values, .. } => values,
        };
        for v in values {
            *v *= factor;
        }
        out
    }
}

/// Discrete one-point duality pairing `sum_i w_i (u_i . v_i)`.
pub fn inner_product_one_point(u: &OnePointField, v: &OnePointField) -> Result<f64> {
    same_grid(u.grid(), v.grid())?;
    if u.rank != v.rank {
        return Err(Error::RankMismatch { expected: u.rank, got: v.rank });
    }
    let s = u.rank.len();
    let mut total = 0.0;
    for i in 0..u.grid.len() {
        let a = &u.values[i * s..(i + 1) * s];
        let b = &v.values[i * s..(i + 1) * s];
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        total += u.grid.weight(i) * dot;
    }
    Ok(total)
}

/// Discrete two-point duality pairing `sum_i sum_j w_i w_j (nu_ij . gamma_ij)`.
///
/// When both operands are sparse only the shared pattern is visited; in all
/// other cases every ordered pair is visited in ascending `(i, j)` order, so
/// a dense field that vanishes outside the horizon produces the same sum.
pub fn inner_product_two_point(nu: &TwoPointField, gamma: &TwoPointField) -> Result<f64> {
    same_grid(nu.grid(), gamma.grid())?;
    if nu.rank != gamma.rank {
        return Err(Error::RankMismatch { expected: nu.rank, got: gamma.rank });
    }
    let grid = &nu.grid;
    let s = nu.rank.len();
    let n = grid.len();
    let mut total = 0.0;
    if nu.is_sparse() && gamma.is_sparse() {
        let mut a = [0.0; 9];
        let mut b = [0.0; 9];
        for i in 0..n {
            let wi = grid.weight(i);
            nu.block_into(i, i, &mut a);
            gamma.block_into(i, i, &mut b);
            let dot: f64 = a[..s].iter().zip(&b[..s]).map(|(x, y)| x * y).sum();
            total += wi * wi * dot;
            for &j in grid.neighbors(i) {
                nu.block_into(i, j, &mut a);
                gamma.block_into(i, j, &mut b);
                let dot: f64 = a[..s].iter().zip(&b[..s]).map(|(x, y)| x * y).sum();
                total += wi * grid.weight(j) * dot;
            }
        }
    } else {
        let mut a = [0.0; 9];
        let mut b = [0.0; 9];
        for i in 0..n {
            let wi = grid.weight(i);
            for j in 0..n {
                nu.block_into(i, j, &mut a);
                gamma.block_into(i, j, &mut b);
                let dot: f64 = a[..s].iter().zip(&b[..s]).map(|(x, y)| x * y).sum();
                total += wi * grid.weight(j) * dot;
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build_uniform_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_1d() -> Arc<Grid> {
        build_uniform_grid(&[[0.0, 1.0]], 0.25, 0.3).unwrap()
    }

    #[test]
    fn unit_field_measures_domain() {
        let g = grid_1d();
        let u = OnePointField::constant(g.clone(), Rank::Scalar, &[1.0]).unwrap();
        let v = OnePointField::constant(g, Rank::Scalar, &[1.0]).unwrap();
        assert_eq!(inner_product_one_point(&u, &v).unwrap(), 1.0);
    }

    #[test]
    fn zero_field_annihilates() {
        let g = grid_1d();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = OnePointField::random(g.clone(), Rank::Vector(1), &mut rng).unwrap();
        let v = OnePointField::zeros(g, Rank::Vector(1)).unwrap();
        assert_eq!(inner_product_one_point(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn one_point_matches_hand_sum() {
        let g = build_uniform_grid(&[[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], 0.5, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = OnePointField::random(g.clone(), Rank::Vector(3), &mut rng).unwrap();
        let v = OnePointField::random(g.clone(), Rank::Vector(3), &mut rng).unwrap();
        let mut oracle = 0.0;
        for i in 0..g.len() {
            for c in 0..3 {
                oracle += g.weight(i) * u.value(i)[c] * v.value(i)[c];
            }
        }
        let got = inner_product_one_point(&u, &v).unwrap();
        assert!((got - oracle).abs() <= 1e-15 * oracle.abs().max(1.0));
    }

    #[test]
    fn two_point_single_entry() {
        let g = grid_1d();
        let mut nu = TwoPointField::zeros_dense(g.clone(), Rank::Scalar).unwrap();
        nu.set(0, 1, &[1.0]).unwrap();
        assert_eq!(inner_product_two_point(&nu, &nu).unwrap(), 0.0625);
    }

    #[test]
    fn antisymmetric_symmetric_orthogonal() {
        let g = grid_1d();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = TwoPointField::random_dense(g.clone(), Rank::Scalar, &mut rng).unwrap();
        let anti = TwoPointField::from_fn_dense(g.clone(), Rank::Scalar, |i, j, out| {
            out[0] = raw.block(i, j)[0] - raw.block(j, i)[0];
        })
        .unwrap();
        let sym = TwoPointField::from_fn_dense(g, Rank::Scalar, |i, j, out| {
            out[0] = raw.block(i, j)[0] + raw.block(j, i)[0];
        })
        .unwrap();
        let ip = inner_product_two_point(&anti, &sym).unwrap();
        assert!(ip.abs() < 1e-14);
    }

    #[test]
    fn two_point_matches_oracle_double_sum() {
        let g = build_uniform_grid(&[[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], 0.5, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nu = TwoPointField::random_dense(g.clone(), Rank::Vector(3), &mut rng).unwrap();
        let ga = TwoPointField::random_dense(g.clone(), Rank::Vector(3), &mut rng).unwrap();
        let mut oracle = 0.0;
        for i in 0..g.len() {
            for j in 0..g.len() {
                let a = nu.block(i, j);
                let b = ga.block(i, j);
                let dot: f64 = (0..3).map(|c| a[c] * b[c]).sum();
                oracle += g.weight(i) * g.weight(j) * dot;
            }
        }
        let got = inner_product_two_point(&nu, &ga).unwrap();
        assert!((got - oracle).abs() <= 1e-15 * oracle.abs().max(1.0));
    }

    #[test]
    fn sparse_dense_agree_inside_horizon() {
        let g = build_uniform_grid(&[[0.0, 1.0], [0.0, 1.0]], 0.25, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sparse = TwoPointField::random_sparse(g.clone(), Rank::Vector(2), &mut rng).unwrap();
        let mut buf = [0.0; 9];
        let dense = TwoPointField::from_fn_dense(g.clone(), Rank::Vector(2), |i, j, out| {
            sparse.block_into(i, j, &mut buf);
            out.copy_from_slice(&buf[..2]);
        })
        .unwrap();
        let a = inner_product_two_point(&sparse, &sparse).unwrap();
        let b = inner_product_two_point(&dense, &dense).unwrap();
        let c = inner_product_two_point(&dense, &sparse).unwrap();
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        assert!((c - b).abs() <= 1e-15 * b.abs().max(1.0));
    }

    #[test]
    fn mismatched_ranks_rejected() {
        let g = grid_1d();
        let u = OnePointField::zeros(g.clone(), Rank::Scalar).unwrap();
        let v = OnePointField::zeros(g, Rank::Vector(2)).unwrap();
        assert!(inner_product_one_point(&u, &v).is_err());
    }
}
