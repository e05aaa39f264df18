//! State-based linear peridynamics: material model, nonlinear force state,
//! its linearization, and the operator `L` in three equivalent forms.
//!
//! The three forms are rearrangements of the same finite sums:
//!
//! 1. direct evaluation of the linearized bond-force integrals,
//! 2. application of an assembled two-point block kernel `C = K + S`,
//! 3. composition of the specialized nonlocal calculus operators with the
//!    peridynamic alpha kernel (two variants).
//!
//! The weighted volume `m` normalizes the force state. The analytic value
//! integrates the influence function over the continuum ball; the discrete
//! per-node value uses the grid quadrature instead, which makes the
//! undeformed state exactly stress-free on the grid. Comparisons between
//! the nonlinear state and its linearization must use the same mode on
//! both sides, otherwise the quadrature defect of `m` shows up as a
//! zeroth-order mismatch.

use crate::field::{OnePointField, Rank, TwoPointField};
use crate::grid::same_grid;
use crate::kernels::peridynamic_alpha;
use crate::ops;
use crate::{Error, Grid, Result};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

/// Which weighted volume normalizes the force state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightedVolumeMode {
    /// Closed-form ball integral of the influence function.
    Analytic,
    /// Grid quadrature of the same integrand around each node.
    DiscretePerNode,
}

/// Isotropic heterogeneous material on a 3D grid.
#[derive(Debug, Clone)]
pub struct PeridynamicMaterial {
    grid: Arc<Grid>,
    bulk: Vec<f64>,
    shear: Vec<f64>,
    density: Vec<f64>,
    influence_exponent: f64,
    influence_radius: f64,
    volume_mode: WeightedVolumeMode,
    m_analytic: f64,
    m_node: Vec<f64>,
}

impl PeridynamicMaterial {
    pub fn new(
        grid: Arc<Grid>,
        bulk: &OnePointField,
        shear: &OnePointField,
        density: &OnePointField,
        influence_exponent: f64,
        influence_radius: Option<f64>,
    ) -> Result<Self> {
        if grid.dim() != 3 {
            return Err(Error::Dimension("peridynamic materials require a 3D grid".into()));
        }
        for (name, field) in [("bulk", bulk), ("shear", shear), ("density", density)] {
            same_grid(&grid, field.grid())?;
            if field.rank() != Rank::Scalar {
                return Err(Error::RankMismatch { expected: Rank::Scalar, got: field.rank() });
            }
            if field.values().iter().any(|v| !(*v > 0.0)) {
                return Err(Error::config(format!("{name} modulus must be strictly positive at every node")));
            }
        }
        if influence_exponent >= 5.0 {
            return Err(Error::config(format!(
                "influence exponent must satisfy r < 5 for a finite weighted volume, got {influence_exponent}"
            )));
        }
        let delta = influence_radius.unwrap_or_else(|| grid.horizon());
        if !(delta > 0.0) {
            return Err(Error::config(format!("influence radius must be positive, got {delta}")));
        }
        let r = influence_exponent;
        let m_analytic = 4.0 * PI * delta.powf(5.0 - r) / (5.0 - r);
        let mut mat = PeridynamicMaterial {
            grid,
            bulk: bulk.values().to_vec(),
            shear: shear.values().to_vec(),
            density: density.values().to_vec(),
            influence_exponent: r,
            influence_radius: delta,
            volume_mode: WeightedVolumeMode::Analytic,
            m_analytic,
            m_node: Vec::new(),
        };
        mat.m_node = (0..mat.grid.len()).map(|i| mat.discrete_weighted_volume(i)).collect();
        Ok(mat)
    }

    /// Homogeneous constants at every node.
    pub fn homogeneous(grid: Arc<Grid>, bulk: f64, shear: f64, density: f64, r: f64, delta: Option<f64>) -> Result<Self> {
        let b = OnePointField::constant(grid.clone(), Rank::Scalar, &[bulk])?;
        let s = OnePointField::constant(grid.clone(), Rank::Scalar, &[shear])?;
        let d = OnePointField::constant(grid.clone(), Rank::Scalar, &[density])?;
        Self::new(grid, &b, &s, &d, r, delta)
    }

    pub fn with_volume_mode(mut self, mode: WeightedVolumeMode) -> Self {
        self.volume_mode = mode;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn influence_radius(&self) -> f64 {
        self.influence_radius
    }

    pub fn influence_exponent(&self) -> f64 {
        self.influence_exponent
    }

    pub fn density(&self, i: usize) -> f64 {
        self.density[i]
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub fn bulk(&self, i: usize) -> f64 {
        self.bulk[i]
    }

    pub fn shear(&self, i: usize) -> f64 {
        self.shear[i]
    }

    /// Radial influence weight `1/d^r` inside the closed ball of radius
    /// `delta`, zero outside. The closed cutoff matches the neighbor-list
    /// convention, so the alpha kernel equals `bond * w(d)` on every stored
    /// pair.
    pub fn influence_weight(&self, distance: f64) -> f64 {
        if distance > self.influence_radius {
            0.0
        } else if self.influence_exponent == 2.0 {
            1.0 / (distance * distance)
        } else if self.influence_exponent == 0.0 {
            1.0
        } else {
            distance.powf(-self.influence_exponent)
        }
    }

    /// Analytic weighted volume `4 pi delta^(5-r) / (5-r)`.
    pub fn weighted_volume(&self) -> f64 {
        self.m_analytic
    }

    /// Quadrature weighted volume at node `i`:
    /// `sum_j w_j w(d_ij) d_ij^2` over the horizon.
    pub fn discrete_weighted_volume(&self, i: usize) -> f64 {
        let mut acc = 0.0;
        for &j in self.grid.neighbors(i) {
            let d = self.grid.distance(i, j);
            acc += self.grid.weight(j) * self.influence_weight(d) * d * d;
        }
        acc
    }

    /// Weighted volume used in force normalization at node `i`.
    pub fn m_at(&self, i: usize) -> f64 {
        match self.volume_mode {
            WeightedVolumeMode::Analytic => self.m_analytic,
            WeightedVolumeMode::DiscretePerNode => self.m_node[i],
        }
    }

    /// `(c1, c2) = (15 mu / m, 9 (k - 5/3 mu) / m^2)` at node `i`.
    pub fn material_constants(&self, i: usize) -> (f64, f64) {
        let m = self.m_at(i);
        let c1 = 15.0 * self.shear[i] / m;
        let c2 = 9.0 / (m * m) * (self.bulk[i] - (5.0 / 3.0) * self.shear[i]);
        (c1, c2)
    }

    fn deformed_bond(&self, u: &OnePointField, i: usize, j: usize) -> [f64; 3] {
        let bond = self.grid.bond(i, j);
        let ui = u.value(i);
        let uj = u.value(j);
        [bond[0] + uj[0] - ui[0], bond[1] + uj[1] - ui[1], bond[2] + uj[2] - ui[2]]
    }

    /// Nonlocal volumetric strain at node `i`:
    /// `(3/m) (sum_j w_j w(d) d |deformed_ij| - m)`.
    pub fn dilatation(&self, u: &OnePointField, i: usize) -> Result<f64> {
        self.check_displacement(u)?;
        self.dilatation_unchecked(u, i)
    }

    fn dilatation_unchecked(&self, u: &OnePointField, i: usize) -> Result<f64> {
        let m = self.m_at(i);
        let mut acc = 0.0;
        for &j in self.grid.neighbors(i) {
            let d = self.grid.distance(i, j);
            let def = self.deformed_bond(u, i, j);
            let len = (def[0] * def[0] + def[1] * def[1] + def[2] * def[2]).sqrt();
            if len == 0.0 {
                return Err(Error::Singular(format!("nodes {i} and {j} deform onto the same point")));
            }
            acc += self.grid.weight(j) * self.influence_weight(d) * d * len;
        }
        Ok(3.0 / m * (acc - m))
    }

    /// Dilatation at every node, the cache pass before force evaluation.
    pub fn dilatation_all(&self, u: &OnePointField) -> Result<Vec<f64>> {
        self.check_displacement(u)?;
        let thetas: Vec<Result<f64>> =
            (0..self.grid.len()).into_par_iter().map(|i| self.dilatation_unchecked(u, i)).collect();
        thetas.into_iter().collect()
    }

    fn check_displacement(&self, u: &OnePointField) -> Result<()> {
        same_grid(&self.grid, u.grid())?;
        if u.rank() != Rank::Vector(3) {
            return Err(Error::RankMismatch { expected: Rank::Vector(3), got: u.rank() });
        }
        Ok(())
    }

    /// Force state for the bond `(i, j)` given the cached dilatation at `i`:
    /// magnitude, direction, and force density `T = sigma gamma`.
    pub fn force_state_entry(
        &self,
        u: &OnePointField,
        theta_i: f64,
        i: usize,
        j: usize,
    ) -> Result<(f64, [f64; 3], [f64; 3])> {
        let d = self.grid.distance(i, j);
        let w = self.influence_weight(d);
        let def = self.deformed_bond(u, i, j);
        let len = (def[0] * def[0] + def[1] * def[1] + def[2] * def[2]).sqrt();
        if len == 0.0 {
            return Err(Error::Singular(format!("nodes {i} and {j} deform onto the same point")));
        }
        let gamma = [def[0] / len, def[1] / len, def[2] / len];
        let m = self.m_at(i);
        let sigma = 3.0 * self.bulk[i] / m * w * d * theta_i
            + 15.0 * self.shear[i] / m * w * (len - d - d * theta_i / 3.0);
        let force = [sigma * gamma[0], sigma * gamma[1], sigma * gamma[2]];
        Ok((sigma, gamma, force))
    }

    /// Materialized force state over every horizon pair.
    pub fn force_state(&self, u: &OnePointField) -> Result<ForceState> {
        let thetas = self.dilatation_all(u)?;
        let grid = self.grid.clone();
        let mut sigma = TwoPointField::zeros_sparse(grid.clone(), Rank::Scalar)?;
        let mut gamma = TwoPointField::zeros_sparse(grid.clone(), Rank::Vector(3))?;
        let mut force = TwoPointField::zeros_sparse(grid.clone(), Rank::Vector(3))?;
        for i in 0..grid.len() {
            for &j in grid.neighbors(i) {
                let (s, g, t) = self.force_state_entry(u, thetas[i], i, j)?;
                sigma.set(i, j, &[s])?;
                gamma.set(i, j, &g)?;
                force.set(i, j, &t)?;
            }
        }
        Ok(ForceState { sigma, gamma, force })
    }

    /// Right-hand side of the equation of motion,
    /// `sum_j w_j (T(x_i, x_j - x_i) - T(x_j, x_i - x_j)) + b_i`.
    pub fn nonlinear_rhs(&self, u: &OnePointField, b: &OnePointField) -> Result<OnePointField> {
        self.check_displacement(u)?;
        self.check_displacement(b)?;
        let thetas = self.dilatation_all(u)?;
        let grid = self.grid.clone();
        let mut out = OnePointField::zeros(grid.clone(), Rank::Vector(3))?;
        let results: Vec<Result<[f64; 3]>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = [0.0f64; 3];
                for &j in grid.neighbors(i) {
                    let (_, _, t_ij) = self.force_state_entry(u, thetas[i], i, j)?;
                    let (_, _, t_ji) = self.force_state_entry(u, thetas[j], j, i)?;
                    let w = grid.weight(j);
                    for c in 0..3 {
                        acc[c] += w * (t_ij[c] - t_ji[c]);
                    }
                }
                Ok(acc)
            })
            .collect();
        for (i, r) in results.into_iter().enumerate() {
            let v = r?;
            let slot = out.value_mut(i);
            for c in 0..3 {
                slot[c] = v[c] + b.value(i)[c];
            }
        }
        Ok(out)
    }

    /// Linearized force density `T_lin(i, j)`: stiff bond term plus the
    /// dilatation coupling through the node-`i` horizon integral.
    pub fn linearized_force(&self, u: &OnePointField, i: usize, j: usize) -> Result<[f64; 3]> {
        self.check_displacement(u)?;
        Ok(self.linearized_force_cached(u, self.dilatation_integral(u, i), i, j))
    }

    /// `sum_l w_l w(d_il) (x_l - x_i) . (u_l - u_i)`, the inner integral of
    /// the dilatation coupling.
    fn dilatation_integral(&self, u: &OnePointField, i: usize) -> f64 {
        let mut acc = 0.0;
        for &l in self.grid.neighbors(i) {
            let d = self.grid.distance(i, l);
            let w = self.influence_weight(d);
            let bond = self.grid.bond(i, l);
            let ul = u.value(l);
            let ui = u.value(i);
            acc += self.grid.weight(l)
                * w
                * (bond[0] * (ul[0] - ui[0]) + bond[1] * (ul[1] - ui[1]) + bond[2] * (ul[2] - ui[2]));
        }
        acc
    }

    fn linearized_force_cached(&self, u: &OnePointField, integral_i: f64, i: usize, j: usize) -> [f64; 3] {
        let d = self.grid.distance(i, j);
        let w = self.influence_weight(d);
        let bond = self.grid.bond(i, j);
        let ui = u.value(i);
        let uj = u.value(j);
        let du = [uj[0] - ui[0], uj[1] - ui[1], uj[2] - ui[2]];
        let m = self.m_at(i);
        let bond_du = bond[0] * du[0] + bond[1] * du[1] + bond[2] * du[2];
        let stiff = 15.0 * self.shear[i] / m * w / (d * d) * bond_du;
        let couple = 9.0 / (m * m) * w * (self.bulk[i] - (5.0 / 3.0) * self.shear[i]) * integral_i;
        [
            stiff * bond[0] + couple * bond[0],
            stiff * bond[1] + couple * bond[1],
            stiff * bond[2] + couple * bond[2],
        ]
    }

    /// Direct evaluation of the three linearized integrals.
    pub fn apply_l_direct(&self, u: &OnePointField) -> Result<OnePointField> {
        self.check_displacement(u)?;
        let grid = self.grid.clone();
        let mut out = OnePointField::zeros(grid.clone(), Rank::Vector(3))?;
        out.values_mut().par_chunks_mut(3).enumerate().for_each(|(i, slot)| {
            let ui = u.value(i);
            // stiffness integral over the horizon of i
            for &j in grid.neighbors(i) {
                let d = self.grid.distance(i, j);
                let w = self.influence_weight(d);
                let bond = grid.bond(i, j);
                let uj = u.value(j);
                let du = [uj[0] - ui[0], uj[1] - ui[1], uj[2] - ui[2]];
                let (c1_i, _) = self.material_constants(i);
                let (c1_j, _) = self.material_constants(j);
                let bond_du = bond[0] * du[0] + bond[1] * du[1] + bond[2] * du[2];
                let s = grid.weight(j) * (c1_i + c1_j) * w / (d * d) * bond_du;
                for c in 0..3 {
                    slot[c] += s * bond[c];
                }
            }
            // dilatation coupling centered at i: double integral over the
            // horizon of i
            let (_, c2_i) = self.material_constants(i);
            let mut inner_i = [0.0f64; 3];
            let mut integral_i = 0.0;
            for &l in grid.neighbors(i) {
                let d = grid.distance(i, l);
                let w = self.influence_weight(d);
                let bond = grid.bond(i, l);
                let ul = u.value(l);
                integral_i += grid.weight(l)
                    * w
                    * (bond[0] * (ul[0] - ui[0]) + bond[1] * (ul[1] - ui[1]) + bond[2] * (ul[2] - ui[2]));
            }
            for &j in grid.neighbors(i) {
                let d = grid.distance(i, j);
                let w = self.influence_weight(d);
                let bond = grid.bond(i, j);
                let s = grid.weight(j) * c2_i * w * integral_i;
                inner_i[0] += s * bond[0];
                inner_i[1] += s * bond[1];
                inner_i[2] += s * bond[2];
            }
            // dilatation coupling centered at the neighbors: for each j in
            // the horizon of i, integrate over the horizon of j
            let mut inner_j = [0.0f64; 3];
            for &j in grid.neighbors(i) {
                let d_ij = grid.distance(i, j);
                let w_ij = self.influence_weight(d_ij);
                let bond_ij = grid.bond(i, j);
                let (_, c2_j) = self.material_constants(j);
                let uj = u.value(j);
                let mut integral_j = 0.0;
                for &l in grid.neighbors(j) {
                    let d = grid.distance(j, l);
                    let w = self.influence_weight(d);
                    let bond = grid.bond(j, l);
                    let ul = u.value(l);
                    integral_j += grid.weight(l)
                        * w
                        * (bond[0] * (ul[0] - uj[0]) + bond[1] * (ul[1] - uj[1]) + bond[2] * (ul[2] - uj[2]));
                }
                let s = grid.weight(j) * c2_j * w_ij * integral_j;
                inner_j[0] += s * bond_ij[0];
                inner_j[1] += s * bond_ij[1];
                inner_j[2] += s * bond_ij[2];
            }
            for c in 0..3 {
                slot[c] += inner_i[c] + inner_j[c];
            }
        });
        Ok(out)
    }

    /// Assembles the block kernel `C = K + S` over the two-hop pattern.
    pub fn assemble_c(&self) -> Result<SparseOperator> {
        let grid = self.grid.clone();
        let n = grid.len();
        let two_hop = 2.0 * grid.horizon();
        let pattern: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).filter(|&j| j != i && grid.distance(i, j) <= two_hop).collect())
            .collect();
        let blocks: Vec<Vec<[f64; 9]>> = (0..n)
            .into_par_iter()
            .map(|i| {
                pattern[i]
                    .iter()
                    .map(|&j| {
                        let mut block = [0.0f64; 9];
                        let d_ij = grid.distance(i, j);
                        let in_horizon = d_ij <= grid.horizon();
                        let bond_ij = grid.bond(i, j);
                        // K: stiffness dyad on horizon pairs
                        if in_horizon {
                            let (c1_i, _) = self.material_constants(i);
                            let (c1_j, _) = self.material_constants(j);
                            let w = self.influence_weight(d_ij);
                            let s = (c1_i + c1_j) * w / (d_ij * d_ij);
                            for r in 0..3 {
                                for c in 0..3 {
                                    block[r * 3 + c] += s * bond_ij[r] * bond_ij[c];
                                }
                            }
                        }
                        // S term 1: shared-neighbor integral
                        for &l in grid.neighbors(i) {
                            if grid.distance(j, l) > grid.horizon() || l == j {
                                continue;
                            }
                            let (_, c2_l) = self.material_constants(l);
                            let d_il = grid.distance(i, l);
                            let d_jl = grid.distance(j, l);
                            let w = self.influence_weight(d_il) * self.influence_weight(d_jl);
                            let bond_li = grid.bond(i, l);
                            let bond_lj = grid.bond(l, j);
                            let s = grid.weight(l) * c2_l * w;
                            for r in 0..3 {
                                for c in 0..3 {
                                    block[r * 3 + c] += s * bond_li[r] * bond_lj[c];
                                }
                            }
                        }
                        if in_horizon {
                            // S term 2: neighbor-centered integral
                            let (_, c2_j) = self.material_constants(j);
                            let w_ij = self.influence_weight(d_ij);
                            let mut integral = [0.0f64; 3];
                            for &l in grid.neighbors(j) {
                                let d_jl = grid.distance(j, l);
                                let w_jl = self.influence_weight(d_jl);
                                let bond_jl = grid.bond(j, l);
                                let s = grid.weight(l) * w_jl;
                                for c in 0..3 {
                                    integral[c] += s * bond_jl[c];
                                }
                            }
                            for r in 0..3 {
                                for c in 0..3 {
                                    block[r * 3 + c] -= c2_j * w_ij * bond_ij[r] * integral[c];
                                }
                            }
                            // S term 3: self-centered integral
                            let (_, c2_i) = self.material_constants(i);
                            let mut integral = [0.0f64; 3];
                            for &l in grid.neighbors(i) {
                                let d_il = grid.distance(i, l);
                                let w_il = self.influence_weight(d_il);
                                let bond_il = grid.bond(i, l);
                                let s = grid.weight(l) * w_il;
                                for c in 0..3 {
                                    integral[c] += s * bond_il[c];
                                }
                            }
                            // the dyad here is (z - x) ⊗ (y - x)
                            for r in 0..3 {
                                for c in 0..3 {
                                    block[r * 3 + c] += c2_i * w_ij * integral[r] * bond_ij[c];
                                }
                            }
                        }
                        block
                    })
                    .collect()
            })
            .collect();
        Ok(SparseOperator::from_parts(grid, pattern, blocks))
    }

    /// Composition form `G(c1 G* u) + G(c2 Gbar* u)` or its
    /// divergence-route variant; both return the value of `-L u`.
    pub fn apply_l_operator(&self, u: &OnePointField, path: OperatorPath) -> Result<OnePointField> {
        self.check_displacement(u)?;
        if self.influence_exponent != 2.0 {
            return Err(Error::Precondition(format!(
                "the operator form requires influence exponent r = 2, got {}",
                self.influence_exponent
            )));
        }
        if self.influence_radius != self.grid.horizon() {
            return Err(Error::Precondition(format!(
                "the operator form requires the influence radius ({}) to equal the horizon ({})",
                self.influence_radius,
                self.grid.horizon()
            )));
        }
        let alpha = peridynamic_alpha(&self.grid)?;
        let grid = self.grid.clone();

        // c2-weighted averaging term, shared by both paths
        let avg = ops::averaging_adjoint_alpha(&alpha, u)?;
        let avg_weighted = TwoPointField::from_fn_sparse(grid.clone(), Rank::Scalar, |i, _, out| {
            let (_, c2_i) = self.material_constants(i);
            out[0] = c2_i * avg.value(i)[0];
        })?;
        let term2 = ops::grad_alpha(&alpha, &avg_weighted)?;

        let term1 = match path {
            OperatorPath::GradGrad => {
                let gs = ops::grad_adjoint_alpha(&alpha, u)?;
                let weighted = TwoPointField::from_fn_sparse(grid.clone(), Rank::Scalar, |i, j, out| {
                    let (c1_i, _) = self.material_constants(i);
                    out[0] = c1_i * gs.block(i, j)[0];
                })?;
                ops::grad_alpha(&alpha, &weighted)?
            }
            OperatorPath::DivGrad => {
                let ds = ops::div_tensor_adjoint_alpha(&alpha, u)?;
                let weighted = TwoPointField::from_fn_sparse(grid.clone(), Rank::Tensor(3), |i, j, out| {
                    let (c1_i, _) = self.material_constants(i);
                    let t = ds.block(i, j);
                    // transpose scaled by c1(i)
                    for r in 0..3 {
                        for c in 0..3 {
                            out[r * 3 + c] = c1_i * t[c * 3 + r];
                        }
                    }
                })?;
                ops::div_tensor_alpha(&alpha, &weighted)?
            }
        };
        term1.axpy(1.0, &term2)
    }
}

/// Which theorem route the operator form takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorPath {
    /// `G(c1 G* u) + G(c2 Gbar* u)`
    GradGrad,
    /// `D(c1 (D* u)^T) + G(c2 Gbar* u)`
    DivGrad,
}

/// Materialized force state over the horizon pairs.
#[derive(Debug, Clone)]
pub struct ForceState {
    pub sigma: TwoPointField,
    pub gamma: TwoPointField,
    pub force: TwoPointField,
}

/// Assembled block operator with row-sum diagonal: applying it computes
/// `(L u)_i = sum_j w_j C_ij (u_j - u_i)`, which annihilates constants
/// exactly.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    grid: Arc<Grid>,
    pattern: Vec<Vec<usize>>,
    blocks: Vec<Vec<[f64; 9]>>,
    diag: Vec<[f64; 9]>,
}

impl SparseOperator {
    fn from_parts(grid: Arc<Grid>, pattern: Vec<Vec<usize>>, blocks: Vec<Vec<[f64; 9]>>) -> Self {
        let diag = pattern
            .iter()
            .zip(&blocks)
            .map(|(row, bl)| {
                let mut d = [0.0f64; 9];
                for (&j, b) in row.iter().zip(bl) {
                    let w = grid.weight(j);
                    for c in 0..9 {
                        d[c] -= w * b[c];
                    }
                }
                d
            })
            .collect();
        SparseOperator { grid, pattern, blocks, diag }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn row(&self, i: usize) -> (&[usize], &[[f64; 9]]) {
        (&self.pattern[i], &self.blocks[i])
    }

    /// Row-sum diagonal block `-sum_j w_j C_ij`.
    pub fn diagonal_block(&self, i: usize) -> &[f64; 9] {
        &self.diag[i]
    }

    /// `(L u)_i = sum_j w_j C_ij (u_j - u_i)`.
    pub fn apply(&self, u: &OnePointField) -> Result<OnePointField> {
        same_grid(&self.grid, u.grid())?;
        if u.rank() != Rank::Vector(3) {
            return Err(Error::RankMismatch { expected: Rank::Vector(3), got: u.rank() });
        }
        let grid = self.grid.clone();
        let mut out = OnePointField::zeros(grid.clone(), Rank::Vector(3))?;
        out.values_mut().par_chunks_mut(3).enumerate().for_each(|(i, slot)| {
            let ui = u.value(i);
            for (&j, block) in self.pattern[i].iter().zip(&self.blocks[i]) {
                let uj = u.value(j);
                let du = [uj[0] - ui[0], uj[1] - ui[1], uj[2] - ui[2]];
                let w = grid.weight(j);
                for r in 0..3 {
                    slot[r] += w * (block[r * 3] * du[0] + block[r * 3 + 1] * du[1] + block[r * 3 + 2] * du[2]);
                }
            }
        });
        Ok(out)
    }

    /// `sum_j w_j ||C_ij||_F` per row, the quantity behind the stable-step
    /// estimate.
    pub fn weighted_row_norm(&self, i: usize) -> f64 {
        self.pattern[i]
            .iter()
            .zip(&self.blocks[i])
            .map(|(&j, b)| {
                let fro: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                self.grid.weight(j) * fro
            })
            .sum()
    }

    /// Max Frobenius norm over stored blocks, a cheap magnitude probe.
    pub fn norm_inf(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|row| row.iter())
            .map(|b| b.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build_uniform_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bar_grid() -> Arc<Grid> {
        build_uniform_grid(&[[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], 0.25, 0.45).unwrap()
    }

    fn unit_material(grid: &Arc<Grid>) -> PeridynamicMaterial {
        PeridynamicMaterial::homogeneous(grid.clone(), 1.0, 1.0, 1.0, 2.0, None).unwrap()
    }

    fn random_material(grid: &Arc<Grid>, seed: u64) -> PeridynamicMaterial {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bulk = OnePointField::from_fn(grid.clone(), Rank::Scalar, |_, _, out| {
            out[0] = 1.0 + 0.4 * rng.gen_range(-1.0..=1.0)
        })
        .unwrap();
        let shear = OnePointField::from_fn(grid.clone(), Rank::Scalar, |_, _, out| {
            out[0] = 0.8 + 0.3 * rng.gen_range(-1.0..=1.0)
        })
        .unwrap();
        let density = OnePointField::from_fn(grid.clone(), Rank::Scalar, |_, _, out| {
            out[0] = 1.0 + 0.2 * rng.gen_range(-1.0..=1.0)
        })
        .unwrap();
        PeridynamicMaterial::new(grid.clone(), &bulk, &shear, &density, 2.0, None).unwrap()
    }

    fn random_displacement(grid: &Arc<Grid>, amp: f64, seed: u64) -> OnePointField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OnePointField::from_fn(grid.clone(), Rank::Vector(3), |_, _, out| {
            for v in out.iter_mut() {
                *v = amp * rng.gen_range(-1.0..=1.0);
            }
        })
        .unwrap()
    }

    fn max_rel_diff(a: &OnePointField, b: &OnePointField) -> f64 {
        let scale = a.norm_inf().max(b.norm_inf()).max(1e-300);
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
            / scale
    }

    #[test]
    fn influence_weight_values() {
        let g = bar_grid();
        let mat = PeridynamicMaterial::homogeneous(g, 1.0, 1.0, 1.0, 2.0, Some(1.0)).unwrap();
        assert_eq!(mat.influence_weight(0.5), 4.0);
        assert_eq!(mat.influence_weight(1.2), 0.0);
        let g = bar_grid();
        let mat0 = PeridynamicMaterial::homogeneous(g, 1.0, 1.0, 1.0, 0.0, Some(1.0)).unwrap();
        assert_eq!(mat0.influence_weight(0.7), 1.0);
    }

    #[test]
    fn analytic_weighted_volume() {
        let g = bar_grid();
        let mat = PeridynamicMaterial::homogeneous(g.clone(), 1.0, 1.0, 1.0, 2.0, Some(0.1)).unwrap();
        let expect = 4.0 / 3.0 * PI * 0.1f64.powi(3);
        assert!((mat.weighted_volume() - expect).abs() <= 1e-15 * expect);
        let mat0 = PeridynamicMaterial::homogeneous(g, 1.0, 1.0, 1.0, 0.0, Some(1.0)).unwrap();
        let expect0 = 4.0 * PI / 5.0;
        assert!((mat0.weighted_volume() - expect0).abs() <= 1e-15 * expect0);
    }

    #[test]
    fn r_at_least_five_rejected() {
        let g = bar_grid();
        assert!(PeridynamicMaterial::homogeneous(g, 1.0, 1.0, 1.0, 5.0, None).is_err());
    }

    #[test]
    fn material_constant_values() {
        // m = 1 by choosing delta = (3 / (4 pi))^(1/3) at r = 2
        let g = bar_grid();
        let delta = (3.0 / (4.0 * PI)).powf(1.0 / 3.0);
        let mat = PeridynamicMaterial::homogeneous(g.clone(), 1.0, 1.0, 1.0, 2.0, Some(delta)).unwrap();
        let (c1, c2) = mat.material_constants(0);
        assert!((c1 - 15.0).abs() < 1e-12);
        assert!((c2 - (-6.0)).abs() < 1e-12);

        let mat = PeridynamicMaterial::homogeneous(g.clone(), 1.0, 1.0, 1.0, 2.0, Some(0.1)).unwrap();
        let (c1, _) = mat.material_constants(0);
        assert!((c1 - 3581.0).abs() < 0.1, "c1 = {c1}");

        // k = (5/3) mu makes the coupling coefficient vanish exactly
        let mu = 0.9;
        let mat = PeridynamicMaterial::homogeneous(g, (5.0 / 3.0) * mu, mu, 1.0, 2.0, None).unwrap();
        let (_, c2) = mat.material_constants(3);
        assert_eq!(c2, 0.0);
    }

    #[test]
    fn dilatation_reference_state() {
        let g = bar_grid();
        let mat = unit_material(&g);
        let zero = OnePointField::zeros(g.clone(), Rank::Vector(3)).unwrap();
        // analytic mode reports exactly the quadrature defect of m
        let m = mat.weighted_volume();
        for i in [0usize, 13, 31] {
            let theta = mat.dilatation(&zero, i).unwrap();
            let defect = 3.0 / m * (mat.discrete_weighted_volume(i) - m);
            assert!((theta - defect).abs() <= 1e-12 * defect.abs().max(1.0));
        }
        // rigid translation leaves the dilatation unchanged
        let shift = OnePointField::constant(g.clone(), Rank::Vector(3), &[0.3, -0.1, 0.2]).unwrap();
        for i in [0usize, 13, 31] {
            let a = mat.dilatation(&zero, i).unwrap();
            let b = mat.dilatation(&shift, i).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        // per-node quadrature mode is exactly stress free
        let mat = unit_material(&g).with_volume_mode(WeightedVolumeMode::DiscretePerNode);
        for i in 0..g.len() {
            assert_eq!(mat.dilatation(&zero, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn force_state_reference_and_unit_direction() {
        let g = bar_grid();
        let mat = unit_material(&g).with_volume_mode(WeightedVolumeMode::DiscretePerNode);
        let zero = OnePointField::zeros(g.clone(), Rank::Vector(3)).unwrap();
        let (sigma, _, force) = mat.force_state_entry(&zero, 0.0, 13, g.neighbors(13)[0]).unwrap();
        assert_eq!(sigma, 0.0);
        assert_eq!(force, [0.0; 3]);

        let u = random_displacement(&g, 0.01, 5);
        let state = mat.force_state(&u).unwrap();
        for i in 0..g.len() {
            for &j in g.neighbors(i) {
                let gm = state.gamma.block(i, j);
                let norm = (gm[0] * gm[0] + gm[1] * gm[1] + gm[2] * gm[2]).sqrt();
                assert!((norm - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn coincident_deformation_is_singular() {
        let g = bar_grid();
        let mat = unit_material(&g);
        // collapse node 1 onto node 0
        let mut u = OnePointField::zeros(g.clone(), Rank::Vector(3)).unwrap();
        let bond = g.bond(1, 0);
        u.value_mut(1).copy_from_slice(&bond);
        assert!(matches!(mat.dilatation(&u, 0), Err(Error::Singular(_))));
    }

    #[test]
    fn nonlinear_rhs_momentum_balance() {
        let g = bar_grid();
        let mat = random_material(&g, 11);
        let u = random_displacement(&g, 0.02, 12);
        let b = OnePointField::zeros(g.clone(), Rank::Vector(3)).unwrap();
        let rhs = mat.nonlinear_rhs(&u, &b).unwrap();
        let mut total = [0.0f64; 3];
        let mut scale = 0.0f64;
        for i in 0..g.len() {
            for c in 0..3 {
                total[c] += g.weight(i) * rhs.value(i)[c];
                scale += (g.weight(i) * rhs.value(i)[c]).abs();
            }
        }
        for c in 0..3 {
            assert!(total[c].abs() <= 1e-12 * scale.max(1.0), "net force {total:?}");
        }
    }

    #[test]
    fn linearized_force_vanishes_on_constants_and_is_linear() {
        let g = bar_grid();
        let mat = random_material(&g, 21);
        let shift = OnePointField::constant(g.clone(), Rank::Vector(3), &[0.4, 0.2, -0.7]).unwrap();
        for i in 0..g.len() {
            for &j in g.neighbors(i) {
                assert_eq!(mat.linearized_force(&shift, i, j).unwrap(), [0.0; 3]);
            }
        }
        let u = random_displacement(&g, 1.0, 22);
        let v = random_displacement(&g, 1.0, 23);
        let combo = u.scale(1.3).axpy(-0.6, &v).unwrap();
        for (i, j) in [(0, g.neighbors(0)[0]), (13, g.neighbors(13)[2])] {
            let tu = mat.linearized_force(&u, i, j).unwrap();
            let tv = mat.linearized_force(&v, i, j).unwrap();
            let tc = mat.linearized_force(&combo, i, j).unwrap();
            for c in 0..3 {
                let expect = 1.3 * tu[c] - 0.6 * tv[c];
                assert!((tc[c] - expect).abs() <= 1e-14 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn uniform_expansion_dilatation_integral() {
        // u = eps x gives sum_l w_l w(d) |bond|^2 eps = eps m_disc for the
        // inner integral; checked against a hand-written z sum
        let g = bar_grid();
        let mat = unit_material(&g).with_volume_mode(WeightedVolumeMode::DiscretePerNode);
        let eps = 1e-3;
        let u = OnePointField::from_fn(g.clone(), Rank::Vector(3), |_, x, out| {
            out[0] = eps * x[0];
            out[1] = eps * x[1];
            out[2] = eps * x[2];
        })
        .unwrap();
        let i = 31;
        let mut oracle = 0.0;
        for &l in g.neighbors(i) {
            let d = g.distance(i, l);
            let bond = g.bond(i, l);
            let du = [eps * bond[0], eps * bond[1], eps * bond[2]];
            oracle += g.weight(l) * mat.influence_weight(d) * (bond[0] * du[0] + bond[1] * du[1] + bond[2] * du[2]);
        }
        let got = mat.dilatation_integral(&u, i);
        assert!((got - oracle).abs() <= 1e-13 * oracle.abs());
        // theta_lin = 3 integral / m = 3 eps with the shared quadrature m
        let theta_lin = 3.0 * got / mat.m_at(i);
        assert!((theta_lin - 3.0 * eps).abs() <= 1e-12);
    }

    #[test]
    fn finite_difference_linearization_first_order() {
        let g = bar_grid();
        let mat = random_material(&g, 31).with_volume_mode(WeightedVolumeMode::DiscretePerNode);
        let dir = random_displacement(&g, 1.0, 32);
        let zero = OnePointField::zeros(g.clone(), Rank::Vector(3)).unwrap();
        let (i, j) = (31, g.neighbors(31)[1]);
        let t_lin = mat.linearized_force(&dir, i, j).unwrap();
        let mut errors = Vec::new();
        for h in [1e-2, 1e-3, 1e-4] {
            let scaled = dir.scale(h);
            let theta = mat.dilatation(&scaled, i).unwrap();
            let (_, _, t_h) = mat.force_state_entry(&scaled, theta, i, j).unwrap();
            let theta0 = mat.dilatation(&zero, i).unwrap();
            let (_, _, t_0) = mat.force_state_entry(&zero, theta0, i, j).unwrap();
            let err = (0..3)
                .map(|c| ((t_h[c] - t_0[c]) / h - t_lin[c]).abs())
                .fold(0.0f64, f64::max);
            errors.push(err);
        }
        let order1 = (errors[0] / errors[1]).log10();
        let order2 = (errors[1] / errors[2]).log10();
        assert!(order1 >= 0.9, "errors {errors:?}, first order {order1}");
        assert!(order2 >= 0.9, "errors {errors:?}, second order {order2}");
    }

    #[test]
    fn assembled_kernel_block_symmetry() {
        let g = bar_grid();
        let mat = random_material(&g, 41);
        let op = mat.assemble_c().unwrap();
        // K part is symmetric under i <-> j and within each block; check via
        // a shear-only material where S vanishes
        let mu = 0.7;
        let mat_k = PeridynamicMaterial::homogeneous(g.clone(), (5.0 / 3.0) * mu, mu, 1.0, 2.0, None).unwrap();
        let op_k = mat_k.assemble_c().unwrap();
        for i in 0..g.len() {
            let (cols, blocks) = op_k.row(i);
            for (&j, b) in cols.iter().zip(blocks) {
                let (cols_j, blocks_j) = op_k.row(j);
                let pos = cols_j.iter().position(|&x| x == i).unwrap();
                let bt = &blocks_j[pos];
                for r in 0..3 {
                    for c in 0..3 {
                        assert!((b[r * 3 + c] - bt[c * 3 + r]).abs() <= 1e-12 * b[r * 3 + c].abs().max(1.0));
                        assert!((b[r * 3 + c] - b[c * 3 + r]).abs() <= 1e-12 * b[r * 3 + c].abs().max(1.0));
                    }
                }
            }
        }
        drop(op);
    }

    #[test]
    fn pure_shear_coupled_material_has_zero_s_blocks() {
        let g = bar_grid();
        let mu = 1.1;
        let mat = PeridynamicMaterial::homogeneous(g.clone(), (5.0 / 3.0) * mu, mu, 1.0, 2.0, None).unwrap();
        let op = mat.assemble_c().unwrap();
        for i in 0..g.len() {
            let (cols, blocks) = op.row(i);
            for (&j, b) in cols.iter().zip(blocks) {
                if g.distance(i, j) > g.horizon() {
                    // outside the horizon only S could contribute
                    let fro: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!(fro <= 1e-14, "S block ({i},{j}) = {fro}");
                }
            }
        }
    }

    #[test]
    fn three_way_equivalence_homogeneous() {
        let g = bar_grid();
        let mat = unit_material(&g);
        let u = random_displacement(&g, 1.0, 51);
        let direct = mat.apply_l_direct(&u).unwrap();
        let kernel = mat.assemble_c().unwrap().apply(&u).unwrap();
        let op1 = mat.apply_l_operator(&u, OperatorPath::GradGrad).unwrap().scale(-1.0);
        let op2 = mat.apply_l_operator(&u, OperatorPath::DivGrad).unwrap().scale(-1.0);
        assert!(max_rel_diff(&direct, &kernel) <= 1e-10, "direct vs kernel {}", max_rel_diff(&direct, &kernel));
        assert!(max_rel_diff(&direct, &op1) <= 1e-10, "direct vs grad-grad {}", max_rel_diff(&direct, &op1));
        assert!(max_rel_diff(&op1, &op2) <= 1e-13, "two operator routes {}", max_rel_diff(&op1, &op2));
    }

    #[test]
    fn three_way_equivalence_heterogeneous() {
        let g = bar_grid();
        let mat = random_material(&g, 61);
        let u = random_displacement(&g, 1.0, 62);
        let direct = mat.apply_l_direct(&u).unwrap();
        let kernel = mat.assemble_c().unwrap().apply(&u).unwrap();
        let op1 = mat.apply_l_operator(&u, OperatorPath::GradGrad).unwrap().scale(-1.0);
        assert!(max_rel_diff(&direct, &kernel) <= 1e-10);
        assert!(max_rel_diff(&direct, &op1) <= 1e-10);
    }

    #[test]
    fn constants_annihilated_by_every_form() {
        let g = bar_grid();
        let mat = random_material(&g, 71);
        let shift = OnePointField::constant(g.clone(), Rank::Vector(3), &[0.2, -0.5, 0.9]).unwrap();
        assert_eq!(mat.assemble_c().unwrap().apply(&shift).unwrap().norm_inf(), 0.0);
        assert!(mat.apply_l_direct(&shift).unwrap().norm_inf() <= 1e-13);
        assert!(mat.apply_l_operator(&shift, OperatorPath::GradGrad).unwrap().norm_inf() <= 1e-13);
    }

    #[test]
    fn operator_form_requires_inverse_square_weight() {
        let g = bar_grid();
        let mat = PeridynamicMaterial::homogeneous(g.clone(), 1.0, 1.0, 1.0, 1.5, None).unwrap();
        let u = random_displacement(&g, 1.0, 81);
        assert!(matches!(mat.apply_l_operator(&u, OperatorPath::GradGrad), Err(Error::Precondition(_))));
    }

    #[test]
    fn energy_quadratic_form_nonnegative_for_bond_only_material() {
        let g = bar_grid();
        let mu = 0.8;
        let mat = PeridynamicMaterial::homogeneous(g.clone(), (5.0 / 3.0) * mu, mu, 1.0, 2.0, None).unwrap();
        let op = mat.assemble_c().unwrap();
        for seed in 0..5 {
            let u = random_displacement(&g, 1.0, 90 + seed);
            let lu = op.apply(&u).unwrap();
            let mut quad = 0.0;
            for i in 0..g.len() {
                for c in 0..3 {
                    quad -= g.weight(i) * u.value(i)[c] * lu.value(i)[c];
                }
            }
            let norm = u.norm_l2();
            assert!(quad >= -1e-10 * norm * norm, "quadratic form {quad}");
        }
    }
}
