//! Three-point divergence kernels and the specialized two-point families.
//!
//! The general kernel is a vector-valued function of three nodes. A kernel
//! is admissible as a divergence kernel when its weighted sum over the first
//! argument vanishes for every pair of the other two; the checks here report
//! the worst residual of that condition. The specialized families embed into
//! the general form through the discrete delta `d(i, l) = kron_il / w_i`,
//! which makes every continuum delta-collapse step exact at the level of
//! finite sums.

use crate::field::{Rank, TwoPointField};
use crate::grid::same_grid;
use crate::{Error, Grid, Result};
use rayon::prelude::*;
use std::sync::Arc;

/// Default absolute tolerance for admissibility residuals. Conditions that
/// hold by algebraic cancellation stay far below this; anything larger
/// indicates a construction bug.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

/// Result of a kernel condition check.
#[derive(Debug, Clone, Copy)]
pub struct KernelCheck {
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl KernelCheck {
    fn new(max_residual: f64, tol: f64) -> Self {
        KernelCheck { max_residual, tol, pass: max_residual <= tol }
    }
}

/// Antisymmetric vector-valued two-point kernel with compact support on the
/// horizon. The checked constructor samples one orientation per unordered
/// pair and mirrors it with an exact negation, so `a(i, j) = -a(j, i)` holds
/// bit-for-bit; `a(i, i) = 0` by convention.
#[derive(Debug, Clone)]
pub struct AlphaKernel {
    values: TwoPointField,
    k: usize,
}

impl AlphaKernel {
    pub fn antisymmetric_from_fn(
        grid: Arc<Grid>,
        k: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let rank = Rank::Vector(k);
        rank.validate()?;
        let mut values = TwoPointField::zeros_sparse(grid.clone(), rank)?;
        for i in 0..grid.len() {
            for &j in grid.neighbors(i) {
                if j < i {
                    continue;
                }
                let v = f(i, j);
                let neg = [-v[0], -v[1], -v[2]];
                values.set(i, j, &v[..k])?;
                values.set(j, i, &neg[..k])?;
            }
        }
        Ok(AlphaKernel { values, k })
    }

    /// Wraps an arbitrary sparse two-point vector field without enforcing
    /// antisymmetry. Intended for admissibility counterexamples and
    /// tabulated kernels; run [`AlphaKernel::antisymmetry_residual`] before
    /// trusting it.
    pub fn from_two_point_unchecked(values: TwoPointField) -> Result<Self> {
        let k = match values.rank() {
            Rank::Vector(k) => k,
            other => return Err(Error::RankMismatch { expected: Rank::Vector(3), got: other }),
        };
        if !values.is_sparse() {
            return Err(Error::Precondition("alpha kernels use sparse two-point storage".into()));
        }
        Ok(AlphaKernel { values, k })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.values.grid()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> [f64; 3] {
        let mut out = [0.0; 9];
        self.values.block_into(i, j, &mut out);
        [out[0], out[1], out[2]]
    }

    /// Max component of `a(i, j) + a(j, i)` over all stored pairs.
    pub fn antisymmetry_residual(&self) -> f64 {
        let grid = self.grid();
        let mut worst = 0.0f64;
        for i in 0..grid.len() {
            let diag = self.get(i, i);
            for v in &diag[..self.k] {
                worst = worst.max(v.abs());
            }
            for &j in grid.neighbors(i) {
                let a = self.get(i, j);
                let b = self.get(j, i);
                for c in 0..self.k {
                    worst = worst.max((a[c] + b[c]).abs());
                }
            }
        }
        worst
    }

    pub fn is_antisymmetric(&self, tol: f64) -> bool {
        self.antisymmetry_residual() <= tol
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.norm_inf()
    }
}

/// Symmetric vector-valued two-point kernel; mirror of [`AlphaKernel`] with
/// an exact copy instead of a negation.
#[derive(Debug, Clone)]
pub struct BetaKernel {
    values: TwoPointField,
    k: usize,
}

impl BetaKernel {
    pub fn symmetric_from_fn(
        grid: Arc<Grid>,
        k: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let rank = Rank::Vector(k);
        rank.validate()?;
        let mut values = TwoPointField::zeros_sparse(grid.clone(), rank)?;
        for i in 0..grid.len() {
            for &j in grid.neighbors(i) {
                if j < i {
                    continue;
                }
                let v = f(i, j);
                values.set(i, j, &v[..k])?;
                values.set(j, i, &v[..k])?;
            }
        }
        Ok(BetaKernel { values, k })
    }

    pub fn from_two_point_unchecked(values: TwoPointField) -> Result<Self> {
        let k = match values.rank() {
            Rank::Vector(k) => k,
            other => return Err(Error::RankMismatch { expected: Rank::Vector(3), got: other }),
        };
        if !values.is_sparse() {
            return Err(Error::Precondition("beta kernels use sparse two-point storage".into()));
        }
        Ok(BetaKernel { values, k })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.values.grid()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> [f64; 3] {
        let mut out = [0.0; 9];
        self.values.block_into(i, j, &mut out);
        [out[0], out[1], out[2]]
    }

    /// Max component of `b(i, j) - b(j, i)` over all stored pairs.
    pub fn symmetry_residual(&self) -> f64 {
        let grid = self.grid();
        let mut worst = 0.0f64;
        for i in 0..grid.len() {
            for &j in grid.neighbors(i) {
                let a = self.get(i, j);
                let b = self.get(j, i);
                for c in 0..self.k {
                    worst = worst.max((a[c] - b[c]).abs());
                }
            }
        }
        worst
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.norm_inf()
    }
}

/// Composite kernel `k(x, y, z) = lambda(x, z) a(x, y) + lambda(x, y) a(x, z)`
/// built from a scalar two-point weight and an alpha kernel. Admissibility is
/// a joint condition on the pair; it is checked, never assumed.
#[derive(Debug, Clone)]
pub struct LambdaAlphaKernel {
    lambda: TwoPointField,
    alpha: AlphaKernel,
}

impl LambdaAlphaKernel {
    pub fn new(lambda: TwoPointField, alpha: AlphaKernel) -> Result<Self> {
        same_grid(lambda.grid(), alpha.grid())?;
        if lambda.rank() != Rank::Scalar {
            return Err(Error::RankMismatch { expected: Rank::Scalar, got: lambda.rank() });
        }
        if !lambda.is_sparse() {
            return Err(Error::Precondition("lambda must have compact support within the horizon".into()));
        }
        Ok(LambdaAlphaKernel { lambda, alpha })
    }

    /// `lambda = ` discrete delta, which collapses the composite kernel back
    /// to the plain alpha embedding.
    pub fn delta(alpha: AlphaKernel) -> Result<Self> {
        let grid = alpha.grid().clone();
        let lambda = TwoPointField::from_fn_sparse(grid.clone(), Rank::Scalar, |i, j, out| {
            out[0] = if i == j { 1.0 / grid.weight(i) } else { 0.0 };
        })?;
        Self::new(lambda, alpha)
    }

    /// Gaussian bump `lambda(x, z) = exp(-|z - x|^2 / (2 width^2))` truncated
    /// at the horizon.
    pub fn gaussian(alpha: AlphaKernel, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::config(format!("gaussian width must be positive, got {width}")));
        }
        let grid = alpha.grid().clone();
        let lambda = TwoPointField::from_fn_sparse(grid.clone(), Rank::Scalar, |i, j, out| {
            let d = grid.distance(i, j);
            out[0] = (-d * d / (2.0 * width * width)).exp();
        })?;
        Self::new(lambda, alpha)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.alpha.grid()
    }

    pub fn k(&self) -> usize {
        self.alpha.k()
    }

    pub fn alpha(&self) -> &AlphaKernel {
        &self.alpha
    }

    pub fn lambda(&self, i: usize, j: usize) -> f64 {
        let mut out = [0.0; 9];
        self.lambda.block_into(i, j, &mut out);
        out[0]
    }

    /// Admissibility residual of the joint condition, computed through the
    /// general embedding.
    pub fn admissibility(&self, tol: f64) -> KernelCheck {
        check_divergence_kernel(&lambda_alpha_embed(self), tol)
    }
}

#[derive(Clone)]
enum KernelRepr {
    /// `values[((i * n + j) * n + l) * k + c]`
    Dense(Arc<Vec<f64>>),
    Alpha(Arc<AlphaKernel>),
    Beta(Arc<BetaKernel>),
    LambdaAlpha(Arc<LambdaAlphaKernel>),
}

/// General three-point kernel, stored densely or evaluated on demand from an
/// embedded two-point family.
#[derive(Clone)]
pub struct GeneralKernel {
    grid: Arc<Grid>,
    k: usize,
    repr: KernelRepr,
}

impl std::fmt::Debug for GeneralKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let repr = match &self.repr {
            KernelRepr::Dense(_) => "dense",
            KernelRepr::Alpha(_) => "alpha-embed",
            KernelRepr::Beta(_) => "beta-embed",
            KernelRepr::LambdaAlpha(_) => "lambda-alpha-embed",
        };
        f.debug_struct("GeneralKernel")
            .field("n", &self.grid.len())
            .field("k", &self.k)
            .field("repr", &repr)
            .finish()
    }
}

impl GeneralKernel {
    /// Materializes a dense kernel from an evaluation rule. Memory is
    /// `N^3 k` doubles; callers cap `N`.
    pub fn from_fn(
        grid: Arc<Grid>,
        k: usize,
        mut f: impl FnMut(usize, usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        Rank::Vector(k).validate()?;
        let n = grid.len();
        let mut values = vec![0.0; n * n * n * k];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let v = f(i, j, l);
                    let at = ((i * n + j) * n + l) * k;
                    values[at..at + k].copy_from_slice(&v[..k]);
                }
            }
        }
        Ok(GeneralKernel { grid, k, repr: KernelRepr::Dense(Arc::new(values)) })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Kernel value at node triple `(i, j, l)`.
    #[inline]
    pub fn eval_into(&self, i: usize, j: usize, l: usize, out: &mut [f64; 3]) {
        *out = [0.0; 3];
        match &self.repr {
            KernelRepr::Dense(values) => {
                let n = self.grid.len();
                let at = ((i * n + j) * n + l) * self.k;
                out[..self.k].copy_from_slice(&values[at..at + self.k]);
            }
            KernelRepr::Alpha(alpha) => {
                if i == l {
                    let a = alpha.get(i, j);
                    let inv_w = 1.0 / self.grid.weight(i);
                    for c in 0..self.k {
                        out[c] += inv_w * a[c];
                    }
                }
                if i == j {
                    let a = alpha.get(i, l);
                    let inv_w = 1.0 / self.grid.weight(i);
                    for c in 0..self.k {
                        out[c] += inv_w * a[c];
                    }
                }
            }
            KernelRepr::Beta(beta) => {
                if i == l {
                    let b = beta.get(i, j);
                    let inv_w = 1.0 / self.grid.weight(i);
                    for c in 0..self.k {
                        out[c] -= inv_w * b[c];
                    }
                }
                if i == j {
                    let b = beta.get(i, l);
                    let inv_w = 1.0 / self.grid.weight(i);
                    for c in 0..self.k {
                        out[c] += inv_w * b[c];
                    }
                }
            }
            KernelRepr::LambdaAlpha(la) => {
                let lam_il = la.lambda(i, l);
                if lam_il != 0.0 {
                    let a = la.alpha().get(i, j);
                    for c in 0..self.k {
                        out[c] += lam_il * a[c];
                    }
                }
                let lam_ij = la.lambda(i, j);
                if lam_ij != 0.0 {
                    let a = la.alpha().get(i, l);
                    for c in 0..self.k {
                        out[c] += lam_ij * a[c];
                    }
                }
            }
        }
    }

    pub fn eval(&self, i: usize, j: usize, l: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.eval_into(i, j, l, &mut out);
        out
    }

    /// Nodes `i` at which `k(i, j, l)` can be nonzero for fixed `(j, l)`,
    /// sorted ascending; `None` means every node (dense storage).
    pub fn support_first_index(&self, j: usize, l: usize, buf: &mut Vec<usize>) -> bool {
        buf.clear();
        match &self.repr {
            KernelRepr::Dense(_) => false,
            KernelRepr::Alpha(_) | KernelRepr::Beta(_) => {
                buf.push(j.min(l));
                if j != l {
                    buf.push(j.max(l));
                }
                true
            }
            KernelRepr::LambdaAlpha(_) => {
                // term 1 needs i ~ j through alpha and i in {l} + N(l) through
                // lambda; term 2 mirrors with j and l swapped
                let nj = self.grid.neighbors(j);
                let nl = self.grid.neighbors(l);
                for &i in nj {
                    if i == l || nl.binary_search(&i).is_ok() {
                        buf.push(i);
                    }
                }
                for &i in nl {
                    if i == j || nj.binary_search(&i).is_ok() {
                        buf.push(i);
                    }
                }
                buf.sort_unstable();
                buf.dedup();
                true
            }
        }
    }

    /// Weighted L2 norm `sqrt(sum_ijl w_i w_j w_l |k(i,j,l)|^2)`.
    pub fn norm_l2(&self) -> f64 {
        let n = self.grid.len();
        // per-row partials are combined in index order so the result does
        // not depend on the thread schedule
        let partials: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut v = [0.0; 3];
                let wi = self.grid.weight(i);
                let mut acc = 0.0;
                for j in 0..n {
                    let wj = self.grid.weight(j);
                    for l in 0..n {
                        self.eval_into(i, j, l, &mut v);
                        let sq: f64 = v[..self.k].iter().map(|x| x * x).sum();
                        acc += wi * wj * self.grid.weight(l) * sq;
                    }
                }
                acc
            })
            .collect();
        partials.iter().sum::<f64>().sqrt()
    }

    pub fn family_label(&self) -> &'static str {
        match &self.repr {
            KernelRepr::Dense(_) => "general",
            KernelRepr::Alpha(_) => "alpha",
            KernelRepr::Beta(_) => "beta",
            KernelRepr::LambdaAlpha(_) => "lambda_alpha",
        }
    }
}

/// Embeds an alpha kernel into the general form:
/// `k(i, j, l) = d(i, l) a(i, j) + d(i, j) a(i, l)`.
pub fn alpha_embed(alpha: &AlphaKernel) -> GeneralKernel {
    GeneralKernel {
        grid: alpha.grid().clone(),
        k: alpha.k(),
        repr: KernelRepr::Alpha(Arc::new(alpha.clone())),
    }
}

/// Embeds a beta kernel into the general form:
/// `k(i, j, l) = -d(i, l) b(i, j) + d(i, j) b(i, l)`.
pub fn beta_embed(beta: &BetaKernel) -> GeneralKernel {
    GeneralKernel {
        grid: beta.grid().clone(),
        k: beta.k(),
        repr: KernelRepr::Beta(Arc::new(beta.clone())),
    }
}

/// Embeds a composite lambda-alpha kernel into the general form:
/// `k(i, j, l) = lambda(i, l) a(i, j) + lambda(i, j) a(i, l)`.
pub fn lambda_alpha_embed(kl: &LambdaAlphaKernel) -> GeneralKernel {
    GeneralKernel {
        grid: kl.grid().clone(),
        k: kl.k(),
        repr: KernelRepr::LambdaAlpha(Arc::new(kl.clone())),
    }
}

/// The peridynamic kernel `a(x, y) = (y - x) / |y - x|^2` on the horizon.
pub fn peridynamic_alpha(grid: &Arc<Grid>) -> Result<AlphaKernel> {
    let g = grid.clone();
    let k = g.dim();
    AlphaKernel::antisymmetric_from_fn(grid.clone(), k, move |i, j| {
        let bond = g.bond(i, j);
        let d2 = bond[0] * bond[0] + bond[1] * bond[1] + bond[2] * bond[2];
        [bond[0] / d2, bond[1] / d2, bond[2] / d2]
    })
}

/// Divergence-kernel admissibility: max over `(j, l)` of the max component
/// of `sum_i w_i k(i, j, l)`.
pub fn check_divergence_kernel(kernel: &GeneralKernel, tol: f64) -> KernelCheck {
    let grid = kernel.grid();
    let n = grid.len();
    let k = kernel.k();
    let max_residual = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut worst = 0.0f64;
            let mut v = [0.0; 3];
            let mut cand = Vec::new();
            for l in 0..n {
                let mut sum = [0.0f64; 3];
                if kernel.support_first_index(j, l, &mut cand) {
                    for &i in &cand {
                        kernel.eval_into(i, j, l, &mut v);
                        let wi = grid.weight(i);
                        for c in 0..k {
                            sum[c] += wi * v[c];
                        }
                    }
                } else {
                    for i in 0..n {
                        kernel.eval_into(i, j, l, &mut v);
                        let wi = grid.weight(i);
                        for c in 0..k {
                            sum[c] += wi * v[c];
                        }
                    }
                }
                for c in 0..k {
                    worst = worst.max(sum[c].abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    KernelCheck::new(max_residual, tol)
}

/// Constant-annihilation condition for the one-point operators: max over `i`
/// of the max component of `sum_j sum_l w_j w_l k(i, j, l)`.
pub fn check_constant_kernel_condition(kernel: &GeneralKernel, tol: f64) -> KernelCheck {
    let grid = kernel.grid();
    let n = grid.len();
    let k = kernel.k();
    let max_residual = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut v = [0.0; 3];
            let mut sum = [0.0f64; 3];
            for j in 0..n {
                let wj = grid.weight(j);
                for l in 0..n {
                    kernel.eval_into(i, j, l, &mut v);
                    let w = wj * grid.weight(l);
                    for c in 0..k {
                        sum[c] += w * v[c];
                    }
                }
            }
            sum[..k].iter().fold(0.0f64, |m, x| m.max(x.abs()))
        })
        .reduce(|| 0.0, f64::max);
    KernelCheck::new(max_residual, tol)
}

/// Tagged union over every kernel family the library knows.
#[derive(Debug, Clone)]
pub enum NonlocalKernel {
    Alpha(AlphaKernel),
    Beta(BetaKernel),
    LambdaAlpha(LambdaAlphaKernel),
    General(GeneralKernel),
}

impl NonlocalKernel {
    pub fn family_label(&self) -> &'static str {
        match self {
            NonlocalKernel::Alpha(_) => "alpha",
            NonlocalKernel::Beta(_) => "beta",
            NonlocalKernel::LambdaAlpha(_) => "lambda_alpha",
            NonlocalKernel::General(_) => "general",
        }
    }

    /// View of the kernel in the general three-point form.
    pub fn to_general(&self) -> GeneralKernel {
        match self {
            NonlocalKernel::Alpha(a) => alpha_embed(a),
            NonlocalKernel::Beta(b) => beta_embed(b),
            NonlocalKernel::LambdaAlpha(kl) => lambda_alpha_embed(kl),
            NonlocalKernel::General(g) => g.clone(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        match self {
            NonlocalKernel::Alpha(a) => a.grid(),
            NonlocalKernel::Beta(b) => b.grid(),
            NonlocalKernel::LambdaAlpha(kl) => kl.grid(),
            NonlocalKernel::General(g) => g.grid(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            NonlocalKernel::Alpha(a) => a.k(),
            NonlocalKernel::Beta(b) => b.k(),
            NonlocalKernel::LambdaAlpha(kl) => kl.k(),
            NonlocalKernel::General(g) => g.k(),
        }
    }
}
