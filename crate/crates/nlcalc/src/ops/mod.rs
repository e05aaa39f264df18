//! Nonlocal operators: general three-point-kernel forms (double and triple
//! sums) and the specialized single-sum closed forms for the alpha, beta,
//! and lambda-alpha kernel families.
//!
//! Every operator pairs with an adjoint under the discrete duality pairings;
//! the adjoint sums are transpositions of the forward sums, so adjointness
//! holds to roundoff by construction. One-point outputs are computed in
//! parallel across output nodes with a fixed ascending summation order
//! inside each output.

mod alpha;
mod beta;
mod general;
mod lambda_alpha;

pub use alpha::*;
pub use beta::*;
pub use general::*;
pub use lambda_alpha::*;

use crate::{Error, Result};

/// The five operator families of the calculus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorFamily {
    Divergence,
    Gradient,
    Curl,
    TensorDivergence,
    VectorGradient,
}

impl OperatorFamily {
    pub const ALL: [OperatorFamily; 5] = [
        OperatorFamily::Divergence,
        OperatorFamily::Gradient,
        OperatorFamily::Curl,
        OperatorFamily::TensorDivergence,
        OperatorFamily::VectorGradient,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            OperatorFamily::Divergence => "divergence",
            OperatorFamily::Gradient => "gradient",
            OperatorFamily::Curl => "curl",
            OperatorFamily::TensorDivergence => "tensor_divergence",
            OperatorFamily::VectorGradient => "vector_gradient",
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64], k: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..k {
        s += a[c] * b[c];
    }
    s
}

#[inline]
pub(crate) fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `out += s * (a ⊗ b)` for `k x k` row-major tensors.
#[inline]
pub(crate) fn outer_acc(out: &mut [f64], s: f64, a: &[f64], b: &[f64], k: usize) {
    for r in 0..k {
        for c in 0..k {
            out[r * k + c] += s * a[r] * b[c];
        }
    }
}

/// `out += s * (M v)` for a `k x k` row-major tensor.
#[inline]
pub(crate) fn matvec_acc(out: &mut [f64], s: f64, m: &[f64], v: &[f64], k: usize) {
    for r in 0..k {
        let mut acc = 0.0;
        for c in 0..k {
            acc += m[r * k + c] * v[c];
        }
        out[r] += s * acc;
    }
}

pub(crate) fn require_curl_space(dim: usize, k: usize) -> Result<()> {
    if dim == 3 && k == 3 {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "curl operators require dim = k = 3, got dim {dim}, k {k}"
        )))
    }
}
