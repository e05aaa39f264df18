//! Closed forms for the alpha (antisymmetric) kernel family.
//!
//! These are the single-sum collapses of the general operators under the
//! delta embedding; each matches its general counterpart term for term, so
//! the two paths agree to roundoff. Sums run over horizon neighbors only.

use super::{cross3, dot, matvec_acc, outer_acc, require_curl_space};
use crate::field::{OnePointField, Rank, TwoPointField};
use crate::grid::same_grid;
use crate::kernels::AlphaKernel;
use crate::{Error, Result};
use rayon::prelude::*;

fn check_ranks(expected: Rank, got: Rank) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::RankMismatch { expected, got })
    }
}

/// `(D_a nu)(i) = sum_j w_j (nu(i,j) + nu(j,i)) . a(i,j)`.
pub fn div_alpha(alpha: &AlphaKernel, nu: &TwoPointField) -> Result<OnePointField> {
    same_grid(alpha.grid(), nu.grid())?;
    let k = alpha.k();
    check_ranks(Rank::Vector(k), nu.rank())?;
    let grid = alpha.grid().clone();
    let mut out = OnePointField::zeros(grid.clone(), Rank::Scalar)?;
    out.values_mut().par_iter_mut().enumerate().for_each(|(i, slot)| {
        let mut fij = [0.0; 9];
        let mut fji = [0.0; 9];
        let mut acc = 0.0;
        for &j in grid.neighbors(i) {
            let a = alpha.get(i, j);
            nu.block_into(i, j, &mut fij);
            nu.block_into(j, i, &mut fji);
            let mut sum = [0.0; 3];
            for c in 0..k {
                sum[c] = fij[c] + fji[c];
            }
            acc += grid.weight(j) * dot(&sum, &a, k);
        }
        *slot = acc;
    });
    Ok(out)
}

/// `(D*_a u)(i,j) = -(u(j) - u(i)) a(i,j)`, sparse over the horizon.
pub fn div_adjoint_alpha(alpha: &AlphaKernel, u: &OnePointField) -> Result<TwoPointField> {
    same_grid(alpha.grid(), u.grid())?;
    check_ranks(Rank::Scalar, u.rank())?;
    let k = alpha.k();
    TwoPointField::from_fn_sparse(alpha.grid().clone(), Rank::Vector(k), |i, j, out| {
        let a = alpha.get(i, j);
        let du = u.value(j)[0] - u.value(i)[0];
        for c in 0..k {
            out[c] = -du * a[c];
        }
    })
}

/// `(G_a eta)(i) = sum_j w_j (eta(j,i) + eta(i,j)) a(i,j)`.
pub fn grad_alpha(alpha: &AlphaKernel, eta: &TwoPointField) -> Result<OnePointField> {
    same_grid(alpha.grid(), eta.grid())?;
    check_ranks(Rank::Scalar, eta.rank())?;
    let k = alpha.k();
    let grid = alpha.grid().clone();
    let mut out = OnePointField::zeros(grid.clone(), Rank::Vector(k))?;
    out.values_mut().par_chunks_mut(k).enumerate().for_each(|(i, slot)| {
        let mut fij = [0.0; 9];
        let mut fji = [0.0; 9];
        for &j in grid.neighbors(i) {
            let a = alpha.get(i, j);
            eta.block_into(i, j, &mut fij);
            eta.block_into(j, i, &mut fji);
            let s = grid.weight(j) * (fji[0] + fij[0]);
            for c in 0..k {
                slot[c] += s * a[c];
            }
        }
    });
    Ok(out)
}

/// `(G*_a u)(i,j) = -(u(j) - u(i)) . a(i,j)`, sparse over the horizon.
pub fn grad_adjoint_alpha(alpha: &AlphaKernel, u: &OnePointField) -> Result<TwoPointField> {
    same_grid(alpha.grid(), u.grid())?;
    let k = alpha.k();
    check_ranks(Rank::Vector(k), u.rank())?;
    TwoPointField::from_fn_sparse(alpha.grid().clone(), Rank::Scalar, |i, j, out| {
        let a = alpha.get(i, j);
        let mut du = [0.0; 3];
        for c in 0..k {
            du[c] = u.value(j)[c] - u.value(i)[c];
        }
        out[0] = -dot(&du, &a, k);
    })
}

/// `(C_a eta)(i) = sum_j w_j (eta(j,i) + eta(i,j)) x a(i,j)`.
///
/// The cross-product order is the exact delta collapse of the general curl,
/// keeping the closed form equal to the embedded form term for term.
pub fn curl_alpha(alpha: &AlphaKernel, eta: &TwoPointField) -> Result<OnePointField> {
    require_curl_space(alpha.grid().dim(), alpha.k())?;
    same_grid(alpha.grid(), eta.grid())?;
    check_ranks(Rank::Vector(3), eta.rank())?;
    let grid = alpha.grid().clone();
    let mut out = OnePointField::zeros(grid.clone(), Rank::Vector(3))?;
    out.values_mut().par_chunks_mut(3).enumerate().for_each(|(i, slot)| {
        let mut fij = [0.0; 9];
        let mut fji = [0.0; 9];
        for &j in grid.neighbors(i) {
            let a = alpha.get(i, j);
            eta.block_into(i, j, &mut fij);
            eta.block_into(j, i, &mut fji);
            let sum = [fji[0] + fij[0], fji[1] + fij[1], fji[2] + fij[2]];
            let cr = cross3(&sum, &a);
            let w = grid.weight(j);
            for c in 0..3 {
                slot[c] += w * cr[c];
            }
        }
    });
    Ok(out)
}

/// `(C*_a u)(i,j) = (u(j) - u(i)) x a(i,j)`, the delta collapse of the
/// general adjoint curl.
pub fn curl_adjoint_alpha(alpha: &AlphaKernel, u: &OnePointField) -> Result<TwoPointField> {
    require_curl_space(alpha.grid().dim(), alpha.k())?;
    same_grid(alpha.grid(), u.grid())?;
    check_ranks(Rank::Vector(3), u.rank())?;
    TwoPointField::from_fn_sparse(alpha.grid().clone(), Rank::Vector(3), |i, j, out| {
        let a = alpha.get(i, j);
        let du = [
            u.value(j)[0] - u.value(i)[0],
            u.value(j)[1] - u.value(i)[1],
            u.value(j)[2] - u.value(i)[2],
        ];
        let cr = cross3(&du, &a);
        out.copy_from_slice(&cr);
    })
}

/// `(D_a Psi)(i) = sum_j w_j (Psi(j,i) + Psi(i,j)) a(i,j)` (matrix-vector).
pub fn div_tensor_alpha(alpha: &AlphaKernel, psi: &TwoPointField) -> Result<OnePointField> {
    same_grid(alpha.grid(), psi.grid())?;
    let k = alpha.k();
    check_ranks(Rank::Tensor(k), psi.rank())?;
    let grid = alpha.grid().clone();
    let mut out = OnePointField::zeros(grid.clone(), Rank::Vector(k))?;
    out.values_mut().par_chunks_mut(k).enumerate().for_each(|(i, slot)| {
        let mut fij = [0.0; 9];
        let mut fji = [0.0; 9];
        let mut sum = [0.0; 9];
        for &j in grid.neighbors(i) {
            let a = alpha.get(i, j);
            psi.block_into(i, j, &mut fij);
            psi.block_into(j, i, &mut fji);
            for c in 0..k * k {
                sum[c] = fji[c] + fij[c];
            }
            matvec_acc(slot, grid.weight(j), &sum, &a, k);
        }
    });
    Ok(out)
}

/// `(D*_a u)(i,j) = -(u(j) - u(i)) ⊗ a(i,j)`, sparse over the horizon.
pub fn div_tensor_adjoint_alpha(alpha: &AlphaKernel, u: &OnePointField) -> Result<TwoPointField> {
    same_grid(alpha.grid(), u.grid())?;
    let k = alpha.k();
    check_ranks(Rank::Vector(k), u.rank())?;
    TwoPointField::from_fn_sparse(alpha.grid().clone(), Rank::Tensor(k), |i, j, out| {
        let a = alpha.get(i, j);
        let mut du = [0.0; 3];
        for c in 0..k {
            du[c] = u.value(j)[c] - u.value(i)[c];
        }
        outer_acc(out, -1.0, &du, &a, k);
    })
}

/// `(G_a nu)(i) = sum_j w_j (nu(j,i) + nu(i,j)) ⊗ a(i,j)`.
pub fn grad_vector_alpha(alpha: &AlphaKernel, nu: &TwoPointField) -> Result<OnePointField> {
    same_grid(alpha.grid(), nu.grid())?;
    let k = alpha.k();
    check_ranks(Rank::Vector(k), nu.rank())?;
    let grid = alpha.grid().clone();
    let mut out = OnePointField::zeros(grid.clone(), Rank::Tensor(k))?;
    out.values_mut().par_chunks_mut(k * k).enumerate().for_each(|(i, slot)| {
        let mut fij = [0.0; 9];
        let mut fji = [0.0; 9];
        let mut sum = [0.0; 3];
        for &j in grid.neighbors(i) {
            let a = alpha.get(i, j);
            nu.block_into(i, j, &mut fij);
            nu.block_into(j, i, &mut fji);
            for c in 0..k {
                sum[c] = fji[c] + fij[c];
            }
            outer_acc(slot, grid.weight(j), &sum, &a, k);
        }
    });
    Ok(out)
}

/// `(G*_a U)(i,j) = -(U(j) - U(i)) a(i,j)` (matrix-vector), sparse.
pub fn grad_vector_adjoint_alpha(alpha: &AlphaKernel, u: &OnePointField) -> Result<TwoPointField> {
    same_grid(alpha.grid(), u.grid())?;
    let k = alpha.k();
    check_ranks(Rank::Tensor(k), u.rank())?;
    TwoPointField::from_fn_sparse(alpha.grid().clone(), Rank::Vector(k), |i, j, out| {
        let a = alpha.get(i, j);
        let mut du = [0.0; 9];
        for c in 0..k * k {
            du[c] = u.value(j)[c] - u.value(i)[c];
        }
        matvec_acc(out, -1.0, &du, &a, k);
    })
}

/// `(D_a D*_a u)(i) = -2 sum_j w_j (u(j) - u(i)) |a(i,j)|^2`, valid
/// componentwise for scalar and vector fields.
pub fn laplacian_alpha(alpha: &AlphaKernel, u: &OnePointField) -> Result<OnePointField> {
    same_grid(alpha.grid(), u.grid())?;
    let k = alpha.k();
    let s = match u.rank() {
        Rank::Scalar => 1,
        Rank::Vector(kk) if kk == k => k,
        other => return Err(Error::RankMismatch { expected: Rank::Vector(k), got: other }),
    };
    let grid = alpha.grid().clone();
    let mut out = OnePointField::zeros(grid.clone(), u.rank())?;
    out.values_mut().par_chunks_mut(s).enumerate().for_each(|(i, slot)| {
        for &j in grid.neighbors(i) {
            let a = alpha.get(i, j);
            let a2 = dot(&a, &a, k);
            let w = grid.weight(j);
            for c in 0..s {
                slot[c] += -2.0 * w * (u.value(j)[c] - u.value(i)[c]) * a2;
            }
        }
    });
    Ok(out)
}

/// `(Gbar*_a u)(i) = -sum_j w_j (u(j) - u(i)) . a(i,j)`.
pub fn averaging_adjoint_alpha(alpha: &AlphaKernel, u: &OnePointField) -> Result<OnePointField> {
    same_grid(alpha.grid(), u.grid())?;
    let k = alpha.k();
    check_ranks(Rank::Vector(k), u.rank())?;
    let grid = alpha.grid().clone();
    OnePointField::from_fn(grid.clone(), Rank::Scalar, |i, _, out| {
        let mut acc = 0.0;
        for &j in grid.neighbors(i) {
            let a = alpha.get(i, j);
            let mut du = [0.0; 3];
            for c in 0..k {
                du[c] = u.value(j)[c] - u.value(i)[c];
            }
            acc -= grid.weight(j) * dot(&du, &a, k);
        }
        out[0] = acc;
    })
}

/// Scalar action `sum_j w_j (u(j) + u(i)) (a_dir . a(i,j))` obtained by
/// feeding `nu(x,y) = a_dir u(x)` to the divergence.
pub fn div_alpha_scalar(
    alpha: &AlphaKernel,
    u: &OnePointField,
    direction: &[f64],
) -> Result<OnePointField> {
    same_grid(alpha.grid(), u.grid())?;
    check_ranks(Rank::Scalar, u.rank())?;
    let k = alpha.k();
    if direction.len() < k {
        return Err(Error::Dimension("direction shorter than kernel dimension".into()));
    }
    let grid = alpha.grid().clone();
    OnePointField::from_fn(grid.clone(), Rank::Scalar, |i, _, out| {
        let mut acc = 0.0;
        for &j in grid.neighbors(i) {
            let a = alpha.get(i, j);
            acc += grid.weight(j) * (u.value(j)[0] + u.value(i)[0]) * dot(direction, &a, k);
        }
        out[0] = acc;
    })
}
