//! Closed forms for the beta (symmetric) kernel family.
//!
//! The divergence here is the exact delta collapse of the general operator
//! with the beta embedding, `sum_j w_j (nu(i,j) - nu(j,i)) . b(i,j)`; this
//! sign is the one consistent with the embedding, with the adjoint below,
//! and with the induced Laplacian. The scalar action keeps the sign of the
//! display it reproduces, `sum_j w_j (u(j) - u(i)) bhat(i,j)`, which turns
//! the operator into a nonlocal Laplacian when `bhat = -2 |a|^2`.

use super::dot;
use crate::field::{OnePointField, Rank, TwoPointField};
use crate::grid::same_grid;
use crate::kernels::BetaKernel;
use crate::{Error, Result};
use rayon::prelude::*;

/// `(D_b nu)(i) = sum_j w_j (nu(i,j) - nu(j,i)) . b(i,j)`.
pub fn div_beta(beta: &BetaKernel, nu: &TwoPointField) -> Result<OnePointField> {
    same_grid(beta.grid(), nu.grid())?;
    let k = beta.k();
    if nu.rank() != Rank::Vector(k) {
        return Err(Error::RankMismatch { expected: Rank::Vector(k), got: nu.rank() });
    }
    let grid = beta.grid().clone();
    let mut out = OnePointField::zeros(grid.clone(), Rank::Scalar)?;
    out.values_mut().par_iter_mut().enumerate().for_each(|(i, slot)| {
        let mut fij = [0.0; 9];
        let mut fji = [0.0; 9];
        let mut acc = 0.0;
        for &j in grid.neighbors(i) {
            let b = beta.get(i, j);
            nu.block_into(i, j, &mut fij);
            nu.block_into(j, i, &mut fji);
            let mut diff = [0.0; 3];
            for c in 0..k {
                diff[c] = fij[c] - fji[c];
            }
            acc += grid.weight(j) * dot(&diff, &b, k);
        }
        *slot = acc;
    });
    Ok(out)
}

/// `(D*_b u)(i,j) = -(u(j) - u(i)) b(i,j)`, sparse over the horizon.
pub fn div_adjoint_beta(beta: &BetaKernel, u: &OnePointField) -> Result<TwoPointField> {
    same_grid(beta.grid(), u.grid())?;
    if u.rank() != Rank::Scalar {
        return Err(Error::RankMismatch { expected: Rank::Scalar, got: u.rank() });
    }
    let k = beta.k();
    TwoPointField::from_fn_sparse(beta.grid().clone(), Rank::Vector(k), |i, j, out| {
        let b = beta.get(i, j);
        let du = u.value(j)[0] - u.value(i)[0];
        for c in 0..k {
            out[c] = -du * b[c];
        }
    })
}

/// `(D_b D*_b u)(i) = -2 sum_j w_j (u(j) - u(i)) |b(i,j)|^2`, componentwise
/// for scalar and vector fields.
pub fn laplacian_beta(beta: &BetaKernel, u: &OnePointField) -> Result<OnePointField> {
    same_grid(beta.grid(), u.grid())?;
    let k = beta.k();
    let s = match u.rank() {
        Rank::Scalar => 1,
        Rank::Vector(kk) if kk == k => k,
        other => return Err(Error::RankMismatch { expected: Rank::Vector(k), got: other }),
    };
    let grid = beta.grid().clone();
    let mut out = OnePointField::zeros(grid.clone(), u.rank())?;
    out.values_mut().par_chunks_mut(s).enumerate().for_each(|(i, slot)| {
        for &j in grid.neighbors(i) {
            let b = beta.get(i, j);
            let b2 = dot(&b, &b, k);
            let w = grid.weight(j);
            for c in 0..s {
                slot[c] += -2.0 * w * (u.value(j)[c] - u.value(i)[c]) * b2;
            }
        }
    });
    Ok(out)
}

/// `(Gbar*_b u)(i) = -sum_j w_j (u(j) - u(i)) . b(i,j)`, the averaging of
/// the adjoint gradient under the beta embedding.
pub fn averaging_adjoint_beta(beta: &BetaKernel, u: &OnePointField) -> Result<OnePointField> {
    same_grid(beta.grid(), u.grid())?;
    let k = beta.k();
    if u.rank() != Rank::Vector(k) {
        return Err(Error::RankMismatch { expected: Rank::Vector(k), got: u.rank() });
    }
    let grid = beta.grid().clone();
    OnePointField::from_fn(grid.clone(), Rank::Scalar, |i, _, out| {
        let mut acc = 0.0;
        for &j in grid.neighbors(i) {
            let b = beta.get(i, j);
            let mut du = [0.0; 3];
            for c in 0..k {
                du[c] = u.value(j)[c] - u.value(i)[c];
            }
            acc -= grid.weight(j) * dot(&du, &b, k);
        }
        out[0] = acc;
    })
}

/// Scalar action `sum_j w_j (u(j) - u(i)) (b_dir . b(i,j))`.
pub fn div_beta_scalar(
    beta: &BetaKernel,
    u: &OnePointField,
    direction: &[f64],
) -> Result<OnePointField> {
    same_grid(beta.grid(), u.grid())?;
    if u.rank() != Rank::Scalar {
        return Err(Error::RankMismatch { expected: Rank::Scalar, got: u.rank() });
    }
    let k = beta.k();
    if direction.len() < k {
        return Err(Error::Dimension("direction shorter than kernel dimension".into()));
    }
    let grid = beta.grid().clone();
    OnePointField::from_fn(grid.clone(), Rank::Scalar, |i, _, out| {
        let mut acc = 0.0;
        for &j in grid.neighbors(i) {
            let b = beta.get(i, j);
            acc += grid.weight(j) * (u.value(j)[0] - u.value(i)[0]) * dot(direction, &b, k);
        }
        out[0] = acc;
    })
}

/// Scalar action with a caller-supplied symmetric weight `bhat(i,j)` in
/// place of `b_dir . b(i,j)`; `bhat = -2 |a(i,j)|^2` reproduces the alpha
/// Laplacian entrywise.
pub fn div_beta_scalar_weighted(
    grid: &std::sync::Arc<crate::Grid>,
    u: &OnePointField,
    bhat: impl Fn(usize, usize) -> f64,
) -> Result<OnePointField> {
    same_grid(grid, u.grid())?;
    if u.rank() != Rank::Scalar {
        return Err(Error::RankMismatch { expected: Rank::Scalar, got: u.rank() });
    }
    let g = grid.clone();
    OnePointField::from_fn(g.clone(), Rank::Scalar, |i, _, out| {
        let mut acc = 0.0;
        for &j in g.neighbors(i) {
            acc += g.weight(j) * (u.value(j)[0] - u.value(i)[0]) * bhat(i, j);
        }
        out[0] = acc;
    })
}
