//! Operators in the general three-point-kernel form.
//!
//! Forward operators contract the kernel with a two-point field over both
//! trailing arguments; adjoints contract a one-point field over the leading
//! argument. Adjoint outputs are dense because a general kernel has no
//! sparsity contract.

use super::{cross3, dot, matvec_acc, outer_acc, require_curl_space};
use crate::field::{OnePointField, Rank, TwoPointField};
use crate::grid::same_grid;
use crate::kernels::GeneralKernel;
use crate::{Error, Result};
use rayon::prelude::*;

fn check_two_point(kernel: &GeneralKernel, field: &TwoPointField, rank: Rank) -> Result<()> {
    same_grid(kernel.grid(), field.grid())?;
    if field.rank() != rank {
        return Err(Error::RankMismatch { expected: rank, got: field.rank() });
    }
    Ok(())
}

fn check_one_point(kernel: &GeneralKernel, field: &OnePointField, rank: Rank) -> Result<()> {
    same_grid(kernel.grid(), field.grid())?;
    if field.rank() != rank {
        return Err(Error::RankMismatch { expected: rank, got: field.rank() });
    }
    Ok(())
}

/// Shared driver for the one-point-valued forward operators: for each output
/// node `i`, accumulates `term(kappa(i,j,l), field(j,l))` over all ordered
/// pairs weighted by `w_j w_l`.
fn forward_one_point(
    kernel: &GeneralKernel,
    field: &TwoPointField,
    out_rank: Rank,
    term: impl Fn(&[f64; 3], &[f64], f64, &mut [f64]) + Sync,
) -> Result<OnePointField> {
    let grid = kernel.grid().clone();
    let n = grid.len();
    let s_in = field.rank().len();
    let mut out = OnePointField::zeros(grid.clone(), out_rank)?;
    let s_out = out_rank.len();
    let values = out.values_mut();
    values
        .par_chunks_mut(s_out)
        .enumerate()
        .for_each(|(i, slot)| {
            let mut kv = [0.0; 3];
            let mut fv = [0.0; 9];
            for j in 0..n {
                let wj = grid.weight(j);
                for l in 0..n {
                    kernel.eval_into(i, j, l, &mut kv);
                    field.block_into(j, l, &mut fv);
                    term(&kv, &fv[..s_in], wj * grid.weight(l), slot);
                }
            }
        });
    Ok(out)
}

/// Shared driver for the two-point-valued adjoints: for each ordered pair
/// `(a, b)`, accumulates `term(kappa(c,a,b), field(c))` over nodes `c`
/// weighted by `w_c`.
fn adjoint_two_point(
    kernel: &GeneralKernel,
    field: &OnePointField,
    out_rank: Rank,
    term: impl Fn(&[f64; 3], &[f64], f64, &mut [f64]) + Sync,
) -> Result<TwoPointField> {
    let grid = kernel.grid().clone();
    let n = grid.len();
    let mut out = TwoPointField::zeros_dense(grid.clone(), out_rank)?;
    let s_out = out_rank.len();
    // one row of pairs per output node a
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut row = vec![0.0; n * s_out];
            let mut kv = [0.0; 3];
            for b in 0..n {
                let slot = &mut row[b * s_out..(b + 1) * s_out];
                for c in 0..n {
                    kernel.eval_into(c, a, b, &mut kv);
                    term(&kv, field.value(c), grid.weight(c), slot);
                }
            }
            row
        })
        .collect();
    for (a, row) in rows.iter().enumerate() {
        for b in 0..n {
            out.set(a, b, &row[b * s_out..(b + 1) * s_out])?;
        }
    }
    Ok(out)
}

/// `(D nu)(i) = sum_jl w_j w_l kappa(i,j,l) . nu(j,l)`.
pub fn div_general(kernel: &GeneralKernel, nu: &TwoPointField) -> Result<OnePointField> {
    let k = kernel.k();
    check_two_point(kernel, nu, Rank::Vector(k))?;
    forward_one_point(kernel, nu, Rank::Scalar, move |kv, fv, w, slot| {
        slot[0] += w * dot(kv, fv, k);
    })
}

/// `(D* u)(a,b) = sum_c w_c u(c) kappa(c,a,b)`.
pub fn div_adjoint_general(kernel: &GeneralKernel, u: &OnePointField) -> Result<TwoPointField> {
    let k = kernel.k();
    check_one_point(kernel, u, Rank::Scalar)?;
    adjoint_two_point(kernel, u, Rank::Vector(k), move |kv, fv, w, slot| {
        let s = w * fv[0];
        for c in 0..k {
            slot[c] += s * kv[c];
        }
    })
}

/// `(G eta)(i) = sum_jl w_j w_l eta(j,l) kappa(i,j,l)`.
pub fn grad_general(kernel: &GeneralKernel, eta: &TwoPointField) -> Result<OnePointField> {
    let k = kernel.k();
    check_two_point(kernel, eta, Rank::Scalar)?;
    forward_one_point(kernel, eta, Rank::Vector(k), move |kv, fv, w, slot| {
        let s = w * fv[0];
        for c in 0..k {
            slot[c] += s * kv[c];
        }
    })
}

/// `(G* v)(a,b) = sum_c w_c v(c) . kappa(c,a,b)`.
pub fn grad_adjoint_general(kernel: &GeneralKernel, v: &OnePointField) -> Result<TwoPointField> {
    let k = kernel.k();
    check_one_point(kernel, v, Rank::Vector(k))?;
    adjoint_two_point(kernel, v, Rank::Scalar, move |kv, fv, w, slot| {
        slot[0] += w * dot(fv, kv, k);
    })
}

/// `(C eta)(i) = sum_jl w_j w_l eta(j,l) x kappa(i,j,l)`; requires `dim = k = 3`.
pub fn curl_general(kernel: &GeneralKernel, eta: &TwoPointField) -> Result<OnePointField> {
    require_curl_space(kernel.grid().dim(), kernel.k())?;
    check_two_point(kernel, eta, Rank::Vector(3))?;
    forward_one_point(kernel, eta, Rank::Vector(3), |kv, fv, w, slot| {
        let c = cross3(fv, kv);
        for (o, x) in slot.iter_mut().zip(c) {
            *o += w * x;
        }
    })
}

/// `(C* u)(a,b) = sum_c w_c kappa(c,a,b) x u(c)`; requires `dim = k = 3`.
pub fn curl_adjoint_general(kernel: &GeneralKernel, u: &OnePointField) -> Result<TwoPointField> {
    require_curl_space(kernel.grid().dim(), kernel.k())?;
    check_one_point(kernel, u, Rank::Vector(3))?;
    adjoint_two_point(kernel, u, Rank::Vector(3), |kv, fv, w, slot| {
        let c = cross3(kv, fv);
        for (o, x) in slot.iter_mut().zip(c) {
            *o += w * x;
        }
    })
}

/// `(D Psi)(i) = sum_jl w_j w_l Psi(j,l) kappa(i,j,l)` (matrix-vector).
pub fn div_tensor_general(kernel: &GeneralKernel, psi: &TwoPointField) -> Result<OnePointField> {
    let k = kernel.k();
    check_two_point(kernel, psi, Rank::Tensor(k))?;
    forward_one_point(kernel, psi, Rank::Vector(k), move |kv, fv, w, slot| {
        matvec_acc(slot, w, fv, kv, k);
    })
}

/// `(D* u)(a,b) = sum_c w_c u(c) ⊗ kappa(c,a,b)`.
pub fn div_tensor_adjoint_general(kernel: &GeneralKernel, u: &OnePointField) -> Result<TwoPointField> {
    let k = kernel.k();
    check_one_point(kernel, u, Rank::Vector(k))?;
    adjoint_two_point(kernel, u, Rank::Tensor(k), move |kv, fv, w, slot| {
        outer_acc(slot, w, fv, kv, k);
    })
}

/// `(G nu)(i) = sum_jl w_j w_l nu(j,l) ⊗ kappa(i,j,l)`.
pub fn grad_vector_general(kernel: &GeneralKernel, nu: &TwoPointField) -> Result<OnePointField> {
    let k = kernel.k();
    check_two_point(kernel, nu, Rank::Vector(k))?;
    forward_one_point(kernel, nu, Rank::Tensor(k), move |kv, fv, w, slot| {
        outer_acc(slot, w, fv, kv, k);
    })
}

/// `(G* U)(a,b) = sum_c w_c U(c) kappa(c,a,b)` (matrix-vector).
pub fn grad_vector_adjoint_general(kernel: &GeneralKernel, u: &OnePointField) -> Result<TwoPointField> {
    let k = kernel.k();
    check_one_point(kernel, u, Rank::Tensor(k))?;
    adjoint_two_point(kernel, u, Rank::Vector(k), move |kv, fv, w, slot| {
        matvec_acc(slot, w, fv, kv, k);
    })
}

/// `D D* u` by composition, for scalar or vector `u`. The caller negates to
/// obtain the Laplacian sign.
pub fn laplacian_general(kernel: &GeneralKernel, u: &OnePointField) -> Result<OnePointField> {
    match u.rank() {
        Rank::Scalar => div_general(kernel, &div_adjoint_general(kernel, u)?),
        Rank::Vector(k) if k == kernel.k() => {
            div_tensor_general(kernel, &div_tensor_adjoint_general(kernel, u)?)
        }
        other => Err(Error::RankMismatch { expected: Rank::Vector(kernel.k()), got: other }),
    }
}

/// `(Gbar* u)(i) = sum_l w_l (G* u)(i, l)`.
pub fn averaging_adjoint_general(kernel: &GeneralKernel, u: &OnePointField) -> Result<OnePointField> {
    let gs = grad_adjoint_general(kernel, u)?;
    let grid = kernel.grid().clone();
    let n = grid.len();
    OnePointField::from_fn(grid.clone(), Rank::Scalar, |i, _, out| {
        let mut acc = 0.0;
        let mut buf = [0.0; 9];
        for l in 0..n {
            gs.block_into(i, l, &mut buf);
            acc += grid.weight(l) * buf[0];
        }
        out[0] = acc;
    })
}
