//! Closed forms for the composite lambda-alpha kernel family.
//!
//! The divergence uses the rearranged nested-sum form: an inner
//! lambda-weighted symmetrization of the two-point argument followed by the
//! alpha contraction. The adjoint couples nodes up to two horizons apart, so
//! its output is dense.

use super::dot;
use crate::field::{OnePointField, Rank, TwoPointField};
use crate::grid::same_grid;
use crate::kernels::LambdaAlphaKernel;
use crate::{Error, Result};
use rayon::prelude::*;

fn flux_at(kl: &LambdaAlphaKernel, nu: &TwoPointField, i: usize) -> f64 {
    let grid = kl.grid();
    let k = kl.k();
    let mut fa = [0.0; 9];
    let mut fb = [0.0; 9];
    let mut acc = 0.0;
    for &j in grid.neighbors(i) {
        let a = kl.alpha().get(i, j);
        // inner sum over the support of lambda(i, .): diagonal plus horizon
        let mut inner = [0.0; 3];
        let lam_ii = kl.lambda(i, i);
        if lam_ii != 0.0 {
            nu.block_into(i, j, &mut fa);
            nu.block_into(j, i, &mut fb);
            let s = grid.weight(i) * lam_ii;
            for c in 0..k {
                inner[c] += s * (fa[c] + fb[c]);
            }
        }
        for &l in grid.neighbors(i) {
            let lam = kl.lambda(i, l);
            if lam == 0.0 {
                continue;
            }
            nu.block_into(l, j, &mut fa);
            nu.block_into(j, l, &mut fb);
            let s = grid.weight(l) * lam;
            for c in 0..k {
                inner[c] += s * (fa[c] + fb[c]);
            }
        }
        acc += grid.weight(j) * dot(&a, &inner, k);
    }
    acc
}

/// `(D_la nu)(i) = sum_j w_j a(i,j) . ( sum_l w_l (nu(l,j) + nu(j,l)) lambda(i,l) )`.
pub fn div_lambda_alpha(kl: &LambdaAlphaKernel, nu: &TwoPointField) -> Result<OnePointField> {
    same_grid(kl.grid(), nu.grid())?;
    let k = kl.k();
    if nu.rank() != Rank::Vector(k) {
        return Err(Error::RankMismatch { expected: Rank::Vector(k), got: nu.rank() });
    }
    let grid = kl.grid().clone();
    let mut out = OnePointField::zeros(grid, Rank::Scalar)?;
    out.values_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, slot)| *slot = flux_at(kl, nu, i));
    Ok(out)
}

/// Flux of `nu` into a single node, the per-node reading of the divergence.
pub fn flux_into(kl: &LambdaAlphaKernel, nu: &TwoPointField, i: usize) -> Result<f64> {
    same_grid(kl.grid(), nu.grid())?;
    let k = kl.k();
    if nu.rank() != Rank::Vector(k) {
        return Err(Error::RankMismatch { expected: Rank::Vector(k), got: nu.rank() });
    }
    if i >= kl.grid().len() {
        return Err(Error::Precondition(format!("node index {i} out of range")));
    }
    Ok(flux_at(kl, nu, i))
}

/// `(D*_la u)(a,b) = sum_c w_c u(c) (lambda(c,b) alpha(c,a) + lambda(c,a) alpha(c,b))`.
///
/// Nonzero entries extend to pairs two horizons apart, hence the dense
/// output.
pub fn div_adjoint_lambda_alpha(kl: &LambdaAlphaKernel, u: &OnePointField) -> Result<TwoPointField> {
    same_grid(kl.grid(), u.grid())?;
    if u.rank() != Rank::Scalar {
        return Err(Error::RankMismatch { expected: Rank::Scalar, got: u.rank() });
    }
    let grid = kl.grid().clone();
    let k = kl.k();
    let n = grid.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut row = vec![0.0; n * k];
            // candidate c nodes: alpha(c, a) needs c within the horizon of a,
            // alpha(c, b) needs c within the horizon of b
            for b in 0..n {
                let slot = &mut row[b * k..(b + 1) * k];
                for &c in grid.neighbors(a) {
                    let lam = kl.lambda(c, b);
                    if lam != 0.0 {
                        let al = kl.alpha().get(c, a);
                        let s = grid.weight(c) * u.value(c)[0] * lam;
                        for x in 0..k {
                            slot[x] += s * al[x];
                        }
                    }
                }
                for &c in grid.neighbors(b) {
                    let lam = kl.lambda(c, a);
                    if lam != 0.0 {
                        let al = kl.alpha().get(c, b);
                        let s = grid.weight(c) * u.value(c)[0] * lam;
                        for x in 0..k {
                            slot[x] += s * al[x];
                        }
                    }
                }
            }
            row
        })
        .collect();
    let mut out = TwoPointField::zeros_dense(grid, Rank::Vector(k))?;
    for (a, row) in rows.iter().enumerate() {
        for b in 0..n {
            out.set(a, b, &row[b * k..(b + 1) * k])?;
        }
    }
    Ok(out)
}
