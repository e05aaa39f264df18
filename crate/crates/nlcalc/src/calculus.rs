//! Identity-verification harness: every calculus identity and conditional
//! statement becomes a residual computation with a pass/fail verdict.
//!
//! Each report row asserts `pass == (max_abs_residual <= threshold)` with
//! the threshold an absolute tolerance scaled by the infinity norm of the
//! largest intermediate. Rows also carry the verdict the theory predicts
//! for the kernel family at hand (`expected_pass`); conditional identities
//! whose kernel condition fails are expected to fail, and the suite as a
//! whole succeeds when every row matches its prediction.
//!
//! Two predictions deserve a note because they differ from a naive reading
//! of the continuum statements. The decomposition `G*G = C*C + D*D` and the
//! pair `G*(C nu) = 0`, `C*(G eta) = 0` require the single-integral
//! cross-kernel condition; for the delta-embedded families that condition
//! picks up diagonal terms with positive discrete measure, so those rows
//! genuinely fail, and the harness expects them to. The iff structure is
//! what the suite verifies: condition and conclusion rows agree in both
//! directions.

use crate::field::{OnePointField, Rank, TwoPointField};
use crate::grid::Subdomain;
use crate::kernels::{check_constant_kernel_condition, check_divergence_kernel, AlphaKernel, GeneralKernel, NonlocalKernel};
use crate::ops;
use crate::{inner_product_one_point, inner_product_two_point, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Default relative tolerance for identities that hold by exact summation
/// rearrangement.
pub const IDENTITY_TOL: f64 = 1e-12;

/// One verified identity: residual, threshold, verdict, and the verdict the
/// theory predicts for this kernel family.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub identity: String,
    pub kernel: String,
    pub seed: u64,
    pub max_abs_residual: f64,
    pub relative_residual: f64,
    pub threshold: f64,
    pub pass: bool,
    /// `Some(true)`: theory predicts the residual vanishes. `Some(false)`:
    /// theory predicts a genuine nonzero residual. `None`: report-only.
    pub expected_pass: Option<bool>,
    pub skipped: bool,
}

impl IdentityReport {
    fn evaluated(
        identity: impl Into<String>,
        kernel: impl Into<String>,
        seed: u64,
        max_abs_residual: f64,
        scale: f64,
        tol: f64,
    ) -> Self {
        let denom = scale.max(1.0);
        let threshold = tol * denom;
        IdentityReport {
            identity: identity.into(),
            kernel: kernel.into(),
            seed,
            max_abs_residual,
            relative_residual: max_abs_residual / denom,
            threshold,
            pass: max_abs_residual <= threshold,
            expected_pass: None,
            skipped: false,
        }
    }

    fn skipped(identity: impl Into<String>, kernel: impl Into<String>, seed: u64) -> Self {
        IdentityReport {
            identity: identity.into(),
            kernel: kernel.into(),
            seed,
            max_abs_residual: 0.0,
            relative_residual: 0.0,
            threshold: 0.0,
            pass: true,
            expected_pass: None,
            skipped: true,
        }
    }

    /// Whether the row is consistent with the predicted verdict. Skipped and
    /// report-only rows are always consistent.
    pub fn meets_expectation(&self) -> bool {
        self.skipped || self.expected_pass.map_or(true, |e| self.pass == e)
    }

    /// CSV cell for the pass column: `true`, `false`, or `skipped`.
    pub fn pass_cell(&self) -> &'static str {
        if self.skipped {
            "skipped"
        } else if self.pass {
            "true"
        } else {
            "false"
        }
    }
}

fn with_expectation(mut reports: Vec<IdentityReport>, family: &str) -> Vec<IdentityReport> {
    for r in &mut reports {
        r.expected_pass = predicted_verdict(&r.identity, family);
    }
    reports
}

/// The verdict theory predicts for an identity row under a kernel family.
pub fn predicted_verdict(identity: &str, family: &str) -> Option<bool> {
    let admissible = matches!(family, "alpha" | "beta");
    match identity {
        // unconditional rearrangements
        "integration_by_parts"
        | "greens_first"
        | "greens_second"
        | "greens_first_subdomain"
        | "greens_second_subdomain"
        | "norm_bound_divergence"
        | "norm_bound_adjoint"
        | "trace_divergence"
        | "trace_adjoint_gradient" => Some(true),
        // need the divergence-kernel condition
        "admissibility" | "constant_annihilation_div" | "constant_annihilation_grad"
        | "constant_annihilation_curl" | "divergence_theorem_div" | "divergence_theorem_grad"
        | "divergence_theorem_curl" => admissible.then_some(true),
        // need the pairwise cross-kernel condition, which the delta-embedded
        // families satisfy exactly
        "cross_pair_condition" | "div_curl_adjoint_zero" | "curl_div_adjoint_zero"
        | "laplacian_decomposition_one_point" => admissible.then_some(true),
        // need the single-integral cross-kernel condition, which fails for
        // the delta-embedded families on the discrete diagonal
        "cross_single_condition" | "grad_adjoint_curl_zero" | "curl_adjoint_grad_zero"
        | "laplacian_decomposition_two_point" => admissible.then_some(false),
        // constant action of the one-point operators
        "constant_action_condition" | "constant_action_div" | "constant_action_grad"
        | "constant_action_curl" => match family {
            "alpha" => Some(false),
            "beta" => Some(true),
            _ => None,
        },
        _ => None,
    }
}

fn seeded_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt))
}

/// Seeded random subdomain from independent coin flips.
pub fn random_subdomain(grid: &std::sync::Arc<crate::Grid>, seed: u64) -> Subdomain {
    let mut rng = seeded_rng(seed, 0xd0_11a5);
    let member = (0..grid.len()).map(|_| rng.gen_bool(0.5)).collect();
    Subdomain::new(grid.clone(), member).expect("flag count matches grid")
}

/// Residuals of the three adjoint-on-constant evaluations.
pub fn verify_constant_annihilation(
    kernel: &GeneralKernel,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let grid = kernel.grid().clone();
    let k = kernel.k();
    let label = kernel.family_label();
    let a_scalar = OnePointField::constant(grid.clone(), Rank::Scalar, &[1.0])?;
    let ones = vec![1.0; k];
    let a_vec = OnePointField::constant(grid.clone(), Rank::Vector(k), &ones)?;
    let mut out = Vec::new();
    let r = ops::div_adjoint_general(kernel, &a_scalar)?;
    out.push(IdentityReport::evaluated("constant_annihilation_div", label, seed, r.norm_inf(), 1.0, tol));
    let r = ops::grad_adjoint_general(kernel, &a_vec)?;
    out.push(IdentityReport::evaluated("constant_annihilation_grad", label, seed, r.norm_inf(), 1.0, tol));
    if k == 3 && grid.dim() == 3 {
        let r = ops::curl_adjoint_general(kernel, &a_vec)?;
        out.push(IdentityReport::evaluated("constant_annihilation_curl", label, seed, r.norm_inf(), 1.0, tol));
    } else {
        out.push(IdentityReport::skipped("constant_annihilation_curl", label, seed));
    }
    Ok(with_expectation(out, label))
}

fn field_difference_residual(a: &OnePointField, b: &OnePointField) -> (f64, f64) {
    let mut worst = 0.0f64;
    for (x, y) in a.values().iter().zip(b.values()) {
        worst = worst.max((x - y).abs());
    }
    (worst, a.norm_inf().max(b.norm_inf()))
}

fn two_point_difference_residual(a: &TwoPointField, b: &TwoPointField) -> (f64, f64) {
    let n = a.grid().len();
    let s = a.rank().len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let x = a.block(i, j);
            let y = b.block(i, j);
            for c in 0..s {
                worst = worst.max((x[c] - y[c]).abs());
            }
        }
    }
    (worst, a.norm_inf().max(b.norm_inf()))
}

/// Residuals of the two Laplacian decompositions. The one-point form needs
/// the pairwise cross-kernel condition, the two-point form the
/// single-integral one; both rows report what actually happened.
pub fn verify_laplacian_decomposition(
    kernel: &GeneralKernel,
    u: &OnePointField,
    nu: &TwoPointField,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let label = kernel.family_label();
    if kernel.k() != 3 || kernel.grid().dim() != 3 {
        return Ok(vec![
            IdentityReport::skipped("laplacian_decomposition_one_point", label, seed),
            IdentityReport::skipped("laplacian_decomposition_two_point", label, seed),
        ]);
    }
    let mut out = Vec::new();

    let dd = ops::div_tensor_general(kernel, &ops::div_tensor_adjoint_general(kernel, u)?)?;
    let cc = ops::curl_general(kernel, &ops::curl_adjoint_general(kernel, u)?)?;
    let gg = ops::grad_general(kernel, &ops::grad_adjoint_general(kernel, u)?)?;
    let sum = cc.axpy(1.0, &gg)?;
    let (res, scale) = field_difference_residual(&dd, &sum);
    out.push(IdentityReport::evaluated("laplacian_decomposition_one_point", label, seed, res, scale, tol));

    let gg2 = ops::grad_vector_adjoint_general(kernel, &ops::grad_vector_general(kernel, nu)?)?;
    let cc2 = ops::curl_adjoint_general(kernel, &ops::curl_general(kernel, nu)?)?;
    let dd2 = ops::div_adjoint_general(kernel, &ops::div_general(kernel, nu)?)?;
    let sum2 = cc2.axpy(1.0, &dd2)?;
    let (res, scale) = two_point_difference_residual(&gg2, &sum2);
    out.push(IdentityReport::evaluated("laplacian_decomposition_two_point", label, seed, res, scale, tol));

    Ok(with_expectation(out, label))
}

/// Max residual of `sum_jl w_j w_l kappa(i,j,l) x kappa(i2,j,l)` over all
/// `(i, i2)`, with the scale of the absolute-value sums.
fn cross_pair_condition(kernel: &GeneralKernel) -> (f64, f64) {
    let grid = kernel.grid();
    let n = grid.len();
    let results: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut worst = 0.0f64;
            let mut scale = 0.0f64;
            let mut ka = [0.0; 3];
            let mut kb = [0.0; 3];
            for i2 in 0..n {
                let mut sum = [0.0f64; 3];
                let mut abs_sum = 0.0f64;
                for j in 0..n {
                    let wj = grid.weight(j);
                    for l in 0..n {
                        kernel.eval_into(i, j, l, &mut ka);
                        kernel.eval_into(i2, j, l, &mut kb);
                        let w = wj * grid.weight(l);
                        let c = ops_cross(&ka, &kb);
                        for x in 0..3 {
                            sum[x] += w * c[x];
                            abs_sum += (w * c[x]).abs();
                        }
                    }
                }
                worst = worst.max(sum.iter().fold(0.0f64, |m, x| m.max(x.abs())));
                scale = scale.max(abs_sum);
            }
            (worst, scale)
        })
        .collect();
    results.into_iter().fold((0.0, 0.0), |(a, b), (x, y)| (a.max(x), b.max(y)))
}

fn ops_cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Max residual of `sum_z w_z kappa(z,w,r) x kappa(z,x,y)` over 4-tuples.
/// Exhaustive when the kernel exposes support hints or the grid is small;
/// otherwise a seeded sample of tuples.
fn cross_single_condition(kernel: &GeneralKernel, seed: u64) -> (f64, f64) {
    let grid = kernel.grid();
    let n = grid.len();
    let mut probe = Vec::new();
    let has_hints = kernel.support_first_index(0, 0, &mut probe);
    let eval_tuple = |w: usize, r: usize, x: usize, y: usize, cand: &mut Vec<usize>| -> (f64, f64) {
        let mut sum = [0.0f64; 3];
        let mut abs_sum = 0.0f64;
        let mut ka = [0.0; 3];
        let mut kb = [0.0; 3];
        let mut accumulate = |z: usize, ka: &mut [f64; 3], kb: &mut [f64; 3]| {
            kernel.eval_into(z, w, r, ka);
            kernel.eval_into(z, x, y, kb);
            let wz = grid.weight(z);
            let c = ops_cross(ka, kb);
            for t in 0..3 {
                sum[t] += wz * c[t];
                abs_sum += (wz * c[t]).abs();
            }
        };
        if has_hints {
            // support of z for the first factor intersected with the second
            let mut second = Vec::new();
            kernel.support_first_index(w, r, cand);
            kernel.support_first_index(x, y, &mut second);
            for &z in cand.iter() {
                if second.contains(&z) {
                    accumulate(z, &mut ka, &mut kb);
                }
            }
        } else {
            for z in 0..n {
                accumulate(z, &mut ka, &mut kb);
            }
        }
        (sum.iter().fold(0.0f64, |m, v| m.max(v.abs())), abs_sum)
    };

    if has_hints || n <= 24 {
        let results: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|w| {
                let mut cand = Vec::new();
                let mut worst = 0.0f64;
                let mut scale = 0.0f64;
                for r in 0..n {
                    for x in 0..n {
                        for y in 0..n {
                            let (res, abs) = eval_tuple(w, r, x, y, &mut cand);
                            worst = worst.max(res);
                            scale = scale.max(abs);
                        }
                    }
                }
                (worst, scale)
            })
            .collect();
        results.into_iter().fold((0.0, 0.0), |(a, b), (x, y)| (a.max(x), b.max(y)))
    } else {
        let mut rng = seeded_rng(seed, 0xc0ffee);
        let mut cand = Vec::new();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for _ in 0..200_000 {
            let w = rng.gen_range(0..n);
            let r = rng.gen_range(0..n);
            let x = rng.gen_range(0..n);
            let y = rng.gen_range(0..n);
            let (res, abs) = eval_tuple(w, r, x, y, &mut cand);
            worst = worst.max(res);
            scale = scale.max(abs);
        }
        (worst, scale)
    }
}

/// Conditions and conclusions of the conditional identities, reported side
/// by side so the iff structure is observable.
pub fn verify_conditional_identities(
    kernel: &GeneralKernel,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let grid = kernel.grid().clone();
    let k = kernel.k();
    let label = kernel.family_label();
    let mut out = Vec::new();

    // constant-action condition and conclusions
    let cond = check_constant_kernel_condition(kernel, tol);
    out.push(IdentityReport::evaluated("constant_action_condition", label, seed, cond.max_residual, 1.0, tol));
    let ones = vec![1.0; k];
    let nu_const = TwoPointField::from_fn_dense(grid.clone(), Rank::Vector(k), |_, _, v| v.copy_from_slice(&ones))?;
    let da = ops::div_general(kernel, &nu_const)?;
    out.push(IdentityReport::evaluated("constant_action_div", label, seed, da.norm_inf(), 1.0, tol));
    let eta_const = TwoPointField::from_fn_dense(grid.clone(), Rank::Scalar, |_, _, v| v[0] = 1.0)?;
    let ga = ops::grad_general(kernel, &eta_const)?;
    out.push(IdentityReport::evaluated("constant_action_grad", label, seed, ga.norm_inf(), 1.0, tol));

    let curl_ok = k == 3 && grid.dim() == 3;
    if curl_ok {
        let ca = ops::curl_general(kernel, &nu_const)?;
        out.push(IdentityReport::evaluated("constant_action_curl", label, seed, ca.norm_inf(), 1.0, tol));
    } else {
        out.push(IdentityReport::skipped("constant_action_curl", label, seed));
    }

    if curl_ok {
        let mut rng = seeded_rng(seed, 1);
        let u = OnePointField::random(grid.clone(), Rank::Vector(3), &mut rng)?;
        let v = OnePointField::random(grid.clone(), Rank::Scalar, &mut rng)?;
        let nu = TwoPointField::random_dense(grid.clone(), Rank::Vector(3), &mut rng)?;
        let eta = TwoPointField::random_dense(grid.clone(), Rank::Scalar, &mut rng)?;

        let (res, scale) = cross_pair_condition(kernel);
        out.push(IdentityReport::evaluated("cross_pair_condition", label, seed, res, scale, tol));
        let dc = ops::div_general(kernel, &ops::curl_adjoint_general(kernel, &u)?)?;
        let cs = ops::curl_adjoint_general(kernel, &u)?;
        out.push(IdentityReport::evaluated("div_curl_adjoint_zero", label, seed, dc.norm_inf(), cs.norm_inf(), tol));
        let cd = ops::curl_general(kernel, &ops::div_adjoint_general(kernel, &v)?)?;
        let ds = ops::div_adjoint_general(kernel, &v)?;
        out.push(IdentityReport::evaluated("curl_div_adjoint_zero", label, seed, cd.norm_inf(), ds.norm_inf(), tol));

        let (res, scale) = cross_single_condition(kernel, seed);
        out.push(IdentityReport::evaluated("cross_single_condition", label, seed, res, scale, tol));
        let cnu = ops::curl_general(kernel, &nu)?;
        let gc = ops::grad_adjoint_general(kernel, &cnu)?;
        out.push(IdentityReport::evaluated("grad_adjoint_curl_zero", label, seed, gc.norm_inf(), cnu.norm_inf(), tol));
        let geta = ops::grad_general(kernel, &eta)?;
        let cg = ops::curl_adjoint_general(kernel, &geta)?;
        out.push(IdentityReport::evaluated("curl_adjoint_grad_zero", label, seed, cg.norm_inf(), geta.norm_inf(), tol));
    } else {
        for name in [
            "cross_pair_condition",
            "div_curl_adjoint_zero",
            "curl_div_adjoint_zero",
            "cross_single_condition",
            "grad_adjoint_curl_zero",
            "curl_adjoint_grad_zero",
        ] {
            out.push(IdentityReport::skipped(name, label, seed));
        }
    }
    Ok(with_expectation(out, label))
}

/// Divergence-theorem residuals: the subdomain integral must cancel the
/// complement integral, for the divergence and its gradient/curl analogues.
pub fn verify_divergence_theorem(
    kernel: &GeneralKernel,
    nu: &TwoPointField,
    eta: &TwoPointField,
    omega: &Subdomain,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let grid = kernel.grid().clone();
    let k = kernel.k();
    let label = kernel.family_label();
    let mut out = Vec::new();

    let split_residual = |field: &OnePointField| -> (f64, f64) {
        let s = field.rank().len();
        let mut inside = vec![0.0f64; s];
        let mut outside = vec![0.0f64; s];
        let mut scale = vec![0.0f64; s];
        for i in 0..grid.len() {
            let w = grid.weight(i);
            let target = if omega.contains(i) { &mut inside } else { &mut outside };
            for c in 0..s {
                target[c] += w * field.value(i)[c];
            }
            for c in 0..s {
                scale[c] += w * field.value(i)[c].abs();
            }
        }
        let mut worst = 0.0f64;
        let mut norm1 = 0.0f64;
        for c in 0..s {
            worst = worst.max((inside[c] + outside[c]).abs());
            norm1 = norm1.max(scale[c]);
        }
        (worst, norm1)
    };

    let div = ops::div_general(kernel, nu)?;
    let (res, scale) = split_residual(&div);
    out.push(IdentityReport::evaluated("divergence_theorem_div", label, seed, res, scale, tol));

    let grad = ops::grad_general(kernel, eta)?;
    let (res, scale) = split_residual(&grad);
    out.push(IdentityReport::evaluated("divergence_theorem_grad", label, seed, res, scale, tol));

    if k == 3 && grid.dim() == 3 {
        let curl = ops::curl_general(kernel, nu)?;
        let (res, scale) = split_residual(&curl);
        out.push(IdentityReport::evaluated("divergence_theorem_curl", label, seed, res, scale, tol));
    } else {
        out.push(IdentityReport::skipped("divergence_theorem_curl", label, seed));
    }
    Ok(with_expectation(out, label))
}

/// `<u, D nu> = <nu, D* u>`, an exact rearrangement for any kernel.
pub fn verify_integration_by_parts(
    kernel: &GeneralKernel,
    u: &OnePointField,
    nu: &TwoPointField,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let label = kernel.family_label();
    let lhs = inner_product_one_point(u, &ops::div_general(kernel, nu)?)?;
    let rhs = inner_product_two_point(nu, &ops::div_adjoint_general(kernel, u)?)?;
    let report = IdentityReport::evaluated(
        "integration_by_parts",
        label,
        seed,
        (lhs - rhs).abs(),
        lhs.abs().max(rhs.abs()),
        tol,
    );
    Ok(with_expectation(vec![report], label))
}

/// Green's first and second identities plus their subdomain corollaries.
pub fn verify_greens_identities(
    kernel: &GeneralKernel,
    u: &OnePointField,
    v: &OnePointField,
    omega: &Subdomain,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let grid = kernel.grid().clone();
    let label = kernel.family_label();
    let ds_v = ops::div_adjoint_general(kernel, v)?;
    let ds_u = ops::div_adjoint_general(kernel, u)?;
    let ddv = ops::div_general(kernel, &ds_v)?;
    let ddu = ops::div_general(kernel, &ds_u)?;

    let full_u_ddv = inner_product_one_point(u, &ddv)?;
    let pair = inner_product_two_point(&ds_v, &ds_u)?;
    let full_v_ddu = inner_product_one_point(v, &ddu)?;

    let mut out = Vec::new();
    out.push(IdentityReport::evaluated(
        "greens_first",
        label,
        seed,
        (full_u_ddv - pair).abs(),
        full_u_ddv.abs().max(pair.abs()),
        tol,
    ));
    out.push(IdentityReport::evaluated(
        "greens_second",
        label,
        seed,
        (full_u_ddv - full_v_ddu).abs(),
        full_u_ddv.abs().max(full_v_ddu.abs()),
        tol,
    ));

    // subdomain splits
    let mut in_u_ddv = 0.0;
    let mut out_u_ddv = 0.0;
    let mut in_mix = 0.0;
    let mut out_mix = 0.0;
    for i in 0..grid.len() {
        let w = grid.weight(i);
        let t1 = w * u.value(i)[0] * ddv.value(i)[0];
        let t2 = w * (u.value(i)[0] * ddv.value(i)[0] - v.value(i)[0] * ddu.value(i)[0]);
        if omega.contains(i) {
            in_u_ddv += t1;
            in_mix += t2;
        } else {
            out_u_ddv += t1;
            out_mix += t2;
        }
    }
    out.push(IdentityReport::evaluated(
        "greens_first_subdomain",
        label,
        seed,
        (in_u_ddv - pair + out_u_ddv).abs(),
        pair.abs().max(in_u_ddv.abs()).max(out_u_ddv.abs()),
        tol,
    ));
    out.push(IdentityReport::evaluated(
        "greens_second_subdomain",
        label,
        seed,
        (in_mix + out_mix).abs(),
        in_mix.abs().max(out_mix.abs()),
        tol,
    ));
    Ok(with_expectation(out, label))
}

/// Operator-norm bounds over seeded trials: reports `max(ratio - 1, 0)`.
pub fn verify_norm_bounds(
    kernel: &GeneralKernel,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let grid = kernel.grid().clone();
    let k = kernel.k();
    let label = kernel.family_label();
    let kernel_norm = kernel.norm_l2();
    let mut rng = seeded_rng(seed, 2);
    let mut worst_div = 0.0f64;
    let mut worst_adj = 0.0f64;
    for _ in 0..trials {
        let nu = TwoPointField::random_dense(grid.clone(), Rank::Vector(k), &mut rng)?;
        let u = OnePointField::random(grid.clone(), Rank::Scalar, &mut rng)?;
        let denom = nu.norm_l2() * kernel_norm;
        if denom > 0.0 {
            worst_div = worst_div.max(ops::div_general(kernel, &nu)?.norm_l2() / denom);
        }
        let denom = u.norm_l2() * kernel_norm;
        if denom > 0.0 {
            worst_adj = worst_adj.max(ops::div_adjoint_general(kernel, &u)?.norm_l2() / denom);
        }
    }
    let out = vec![
        IdentityReport::evaluated("norm_bound_divergence", label, seed, (worst_div - 1.0).max(0.0), 1.0, tol),
        IdentityReport::evaluated("norm_bound_adjoint", label, seed, (worst_adj - 1.0).max(0.0), 1.0, tol),
    ];
    Ok(with_expectation(out, label))
}

/// Trace identities `D nu = trace(G nu)` and `G* u = trace(D* u)`.
pub fn verify_trace_identities(
    kernel: &GeneralKernel,
    nu: &TwoPointField,
    u: &OnePointField,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let grid = kernel.grid().clone();
    let k = kernel.k();
    let label = kernel.family_label();
    let div = ops::div_general(kernel, nu)?;
    let gv = ops::grad_vector_general(kernel, nu)?;
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let t = gv.value(i);
        let trace: f64 = (0..k).map(|c| t[c * k + c]).sum();
        worst = worst.max((div.value(i)[0] - trace).abs());
    }
    let mut out = vec![IdentityReport::evaluated(
        "trace_divergence",
        label,
        seed,
        worst,
        div.norm_inf(),
        tol,
    )];

    let gs = ops::grad_adjoint_general(kernel, u)?;
    let ds = ops::div_tensor_adjoint_general(kernel, u)?;
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            let t = ds.block(i, j);
            let trace: f64 = (0..k).map(|c| t[c * k + c]).sum();
            worst = worst.max((gs.block(i, j)[0] - trace).abs());
        }
    }
    out.push(IdentityReport::evaluated("trace_adjoint_gradient", label, seed, worst, gs.norm_inf(), tol));
    Ok(with_expectation(out, label))
}

/// Runs the specialized alpha closed forms through the identity list,
/// rejecting kernels that fail the antisymmetry precondition.
pub fn verify_alpha_identity_suite(alpha: &AlphaKernel, seed: u64, tol: f64) -> Result<Vec<IdentityReport>> {
    let anti = alpha.antisymmetry_residual();
    if anti > tol * alpha.norm_inf().max(1.0) {
        return Err(Error::Precondition(format!(
            "alpha kernel is not antisymmetric (residual {anti:.3e}); suite rejected"
        )));
    }
    let grid = alpha.grid().clone();
    let k = alpha.k();
    let label = "alpha";
    let mut rng = seeded_rng(seed, 3);
    let mut out = Vec::new();

    let ones = vec![1.0; k];
    let a_scalar = OnePointField::constant(grid.clone(), Rank::Scalar, &[1.0])?;
    let a_vec = OnePointField::constant(grid.clone(), Rank::Vector(k), &ones)?;
    let r = ops::div_adjoint_alpha(alpha, &a_scalar)?;
    out.push(IdentityReport::evaluated("constant_annihilation_div", label, seed, r.norm_inf(), 1.0, tol));
    let r = ops::grad_adjoint_alpha(alpha, &a_vec)?;
    out.push(IdentityReport::evaluated("constant_annihilation_grad", label, seed, r.norm_inf(), 1.0, tol));

    let nu_const = TwoPointField::from_fn_dense(grid.clone(), Rank::Vector(k), |_, _, v| v.copy_from_slice(&ones))?;
    let da = ops::div_alpha(alpha, &nu_const)?;
    out.push(IdentityReport::evaluated("constant_action_div", label, seed, da.norm_inf(), 1.0, tol));

    let curl_ok = k == 3 && grid.dim() == 3;
    if curl_ok {
        let u = OnePointField::random(grid.clone(), Rank::Vector(3), &mut rng)?;
        let v = OnePointField::random(grid.clone(), Rank::Scalar, &mut rng)?;
        let nu = TwoPointField::random_dense(grid.clone(), Rank::Vector(3), &mut rng)?;
        let eta = TwoPointField::random_dense(grid.clone(), Rank::Scalar, &mut rng)?;

        let r = ops::curl_adjoint_alpha(alpha, &a_vec)?;
        out.push(IdentityReport::evaluated("constant_annihilation_curl", label, seed, r.norm_inf(), 1.0, tol));

        let cs = ops::curl_adjoint_alpha(alpha, &u)?;
        let dc = ops::div_alpha(alpha, &cs)?;
        out.push(IdentityReport::evaluated("div_curl_adjoint_zero", label, seed, dc.norm_inf(), cs.norm_inf(), tol));
        let ds = ops::div_adjoint_alpha(alpha, &v)?;
        let cd = ops::curl_alpha(alpha, &ds)?;
        out.push(IdentityReport::evaluated("curl_div_adjoint_zero", label, seed, cd.norm_inf(), ds.norm_inf(), tol));

        let cnu = ops::curl_alpha(alpha, &nu)?;
        let gc = ops::grad_adjoint_alpha(alpha, &cnu)?;
        out.push(IdentityReport::evaluated("grad_adjoint_curl_zero", label, seed, gc.norm_inf(), cnu.norm_inf(), tol));
        let geta = ops::grad_alpha(alpha, &eta)?;
        let cg = ops::curl_adjoint_alpha(alpha, &geta)?;
        out.push(IdentityReport::evaluated("curl_adjoint_grad_zero", label, seed, cg.norm_inf(), geta.norm_inf(), tol));

        // one-point decomposition through the closed forms
        let dd = ops::div_tensor_alpha(alpha, &ops::div_tensor_adjoint_alpha(alpha, &u)?)?;
        let cc = ops::curl_alpha(alpha, &ops::curl_adjoint_alpha(alpha, &u)?)?;
        let gg = ops::grad_alpha(alpha, &ops::grad_adjoint_alpha(alpha, &u)?)?;
        let sum = cc.axpy(1.0, &gg)?;
        let (res, scale) = field_difference_residual(&dd, &sum);
        out.push(IdentityReport::evaluated("laplacian_decomposition_one_point", label, seed, res, scale, tol));
    } else {
        for name in [
            "constant_annihilation_curl",
            "div_curl_adjoint_zero",
            "curl_div_adjoint_zero",
            "grad_adjoint_curl_zero",
            "curl_adjoint_grad_zero",
            "laplacian_decomposition_one_point",
        ] {
            out.push(IdentityReport::skipped(name, label, seed));
        }
    }

    // trace identity through the closed forms
    let u_vec = OnePointField::random(grid.clone(), Rank::Vector(k), &mut rng)?;
    let gs = ops::grad_adjoint_alpha(alpha, &u_vec)?;
    let ds = ops::div_tensor_adjoint_alpha(alpha, &u_vec)?;
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        for &j in grid.neighbors(i) {
            let t = ds.block(i, j);
            let trace: f64 = (0..k).map(|c| t[c * k + c]).sum();
            worst = worst.max((gs.block(i, j)[0] - trace).abs());
        }
    }
    out.push(IdentityReport::evaluated("trace_adjoint_gradient", label, seed, worst, gs.norm_inf(), tol));

    let mut out = with_expectation(out, label);
    // suite-level rows keep the alpha_ prefix distinct in the CSV
    for r in &mut out {
        r.identity = format!("alpha_suite_{}", r.identity);
    }
    Ok(out)
}

/// Which suites to run; `Default` enables everything applicable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SuiteSelection {
    All,
    Named(Vec<String>),
}

impl SuiteSelection {
    fn wants(&self, name: &str) -> bool {
        match self {
            SuiteSelection::All => true,
            SuiteSelection::Named(list) => list.iter().any(|s| s == name),
        }
    }
}

pub const SUITE_NAMES: [&str; 9] = [
    "admissibility",
    "constants",
    "decomposition",
    "conditional",
    "divergence_theorem",
    "greens",
    "norm_bounds",
    "trace",
    "alpha_suite",
];

/// Runs the selected suites on a kernel, generating every random input from
/// the seed. Reports are reproducible bit for bit from `(kernel, seed)`.
pub fn run_identity_suites(
    kernel: &NonlocalKernel,
    selection: &SuiteSelection,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    if let SuiteSelection::Named(names) = selection {
        for name in names {
            if !SUITE_NAMES.contains(&name.as_str()) {
                return Err(Error::config(format!(
                    "unknown suite {name:?}; available: {}",
                    SUITE_NAMES.join(", ")
                )));
            }
        }
    }
    let general = kernel.to_general();
    let grid = general.grid().clone();
    let k = general.k();
    let label = kernel.family_label();
    let mut reports = Vec::new();

    if selection.wants("admissibility") {
        let check = check_divergence_kernel(&general, tol);
        let mut r = IdentityReport::evaluated("admissibility", label, seed, check.max_residual, 1.0, tol);
        r.expected_pass = predicted_verdict("admissibility", label);
        reports.push(r);
    }
    if selection.wants("constants") {
        reports.extend(verify_constant_annihilation(&general, seed, tol)?);
    }
    if selection.wants("decomposition") {
        let mut rng = seeded_rng(seed, 4);
        let u = OnePointField::random(grid.clone(), Rank::Vector(k), &mut rng)?;
        let nu = TwoPointField::random_dense(grid.clone(), Rank::Vector(k), &mut rng)?;
        reports.extend(verify_laplacian_decomposition(&general, &u, &nu, seed, tol)?);
    }
    if selection.wants("conditional") {
        reports.extend(verify_conditional_identities(&general, seed, tol)?);
    }
    if selection.wants("divergence_theorem") {
        let mut rng = seeded_rng(seed, 5);
        let nu = TwoPointField::random_dense(grid.clone(), Rank::Vector(k), &mut rng)?;
        let eta = TwoPointField::random_dense(grid.clone(), Rank::Scalar, &mut rng)?;
        let omega = random_subdomain(&grid, seed);
        reports.extend(verify_divergence_theorem(&general, &nu, &eta, &omega, seed, tol)?);
    }
    if selection.wants("greens") {
        let mut rng = seeded_rng(seed, 6);
        let u = OnePointField::random(grid.clone(), Rank::Scalar, &mut rng)?;
        let v = OnePointField::random(grid.clone(), Rank::Scalar, &mut rng)?;
        let nu = TwoPointField::random_dense(grid.clone(), Rank::Vector(k), &mut rng)?;
        let omega = random_subdomain(&grid, seed.wrapping_add(1));
        reports.extend(verify_integration_by_parts(&general, &u, &nu, seed, tol)?);
        reports.extend(verify_greens_identities(&general, &u, &v, &omega, seed, tol)?);
    }
    if selection.wants("norm_bounds") {
        reports.extend(verify_norm_bounds(&general, 20, seed, tol)?);
    }
    if selection.wants("trace") {
        let mut rng = seeded_rng(seed, 7);
        let nu = TwoPointField::random_dense(grid.clone(), Rank::Vector(k), &mut rng)?;
        let u = OnePointField::random(grid.clone(), Rank::Vector(k), &mut rng)?;
        reports.extend(verify_trace_identities(&general, &nu, &u, seed, tol)?);
    }
    if selection.wants("alpha_suite") {
        if let NonlocalKernel::Alpha(alpha) = kernel {
            reports.extend(verify_alpha_identity_suite(alpha, seed, tol)?);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build_uniform_grid;
    use crate::kernels::{alpha_embed, beta_embed, peridynamic_alpha, BetaKernel};
    use rand::Rng;

    fn grid() -> std::sync::Arc<crate::Grid> {
        build_uniform_grid(&[[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], 0.25, 0.45).unwrap()
    }

    fn random_beta(grid: &std::sync::Arc<crate::Grid>, seed: u64) -> BetaKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BetaKernel::symmetric_from_fn(grid.clone(), 3, move |_, _| {
            [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]
        })
        .unwrap()
    }

    #[test]
    fn alpha_suite_meets_every_expectation() {
        let g = grid();
        let alpha = peridynamic_alpha(&g).unwrap();
        let kernel = NonlocalKernel::Alpha(alpha);
        let reports = run_identity_suites(&kernel, &SuiteSelection::All, 42, IDENTITY_TOL).unwrap();
        assert!(reports.len() >= 20, "got {} rows", reports.len());
        for r in &reports {
            assert!(
                r.meets_expectation(),
                "{} (kernel {}): pass={} expected={:?} residual={:.3e}",
                r.identity,
                r.kernel,
                r.pass,
                r.expected_pass,
                r.max_abs_residual
            );
        }
        // the documented failure rows really fail
        let constant_action = reports.iter().find(|r| r.identity == "constant_action_div").unwrap();
        assert!(!constant_action.pass);
        let cross_single = reports.iter().find(|r| r.identity == "cross_single_condition").unwrap();
        assert!(!cross_single.pass);
    }

    #[test]
    fn beta_suite_constant_action_passes() {
        let g = grid();
        let kernel = NonlocalKernel::Beta(random_beta(&g, 7));
        let reports = run_identity_suites(&kernel, &SuiteSelection::All, 43, IDENTITY_TOL).unwrap();
        for r in &reports {
            assert!(
                r.meets_expectation(),
                "{}: pass={} expected={:?} residual={:.3e} threshold={:.3e}",
                r.identity,
                r.pass,
                r.expected_pass,
                r.max_abs_residual,
                r.threshold
            );
        }
        let constant_action = reports.iter().find(|r| r.identity == "constant_action_div").unwrap();
        assert!(constant_action.pass, "beta annihilates constant two-point fields");
    }

    #[test]
    fn symmetric_alpha_rejected_by_suite_guard() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut field = TwoPointField::zeros_sparse(g.clone(), Rank::Vector(3)).unwrap();
        for i in 0..g.len() {
            for &j in g.neighbors(i) {
                if j < i {
                    continue;
                }
                let v = [rng.gen_range(-1.0..=1.0), 0.0, 0.0];
                field.set(i, j, &v).unwrap();
                field.set(j, i, &v).unwrap();
            }
        }
        let bad = AlphaKernel::from_two_point_unchecked(field).unwrap();
        assert!(verify_alpha_identity_suite(&bad, 1, IDENTITY_TOL).is_err());
    }

    #[test]
    fn conditional_iff_structure_alpha_vs_beta() {
        let g = grid();
        let alpha_reports =
            verify_conditional_identities(&alpha_embed(&peridynamic_alpha(&g).unwrap()), 3, IDENTITY_TOL).unwrap();
        let find = |rs: &[IdentityReport], n: &str| rs.iter().find(|r| r.identity == n).unwrap().pass;
        // alpha: pairwise condition and conclusions pass together, the
        // single-integral condition and conclusions fail together, constants
        // fail together
        assert!(!find(&alpha_reports, "constant_action_condition"));
        assert!(!find(&alpha_reports, "constant_action_div"));
        assert!(find(&alpha_reports, "cross_pair_condition"));
        assert!(find(&alpha_reports, "div_curl_adjoint_zero"));
        assert!(find(&alpha_reports, "curl_div_adjoint_zero"));
        assert!(!find(&alpha_reports, "cross_single_condition"));
        assert!(!find(&alpha_reports, "grad_adjoint_curl_zero"));

        let beta_reports =
            verify_conditional_identities(&beta_embed(&random_beta(&g, 17)), 3, IDENTITY_TOL).unwrap();
        assert!(find(&beta_reports, "constant_action_condition"));
        assert!(find(&beta_reports, "constant_action_div"));
        assert!(find(&beta_reports, "cross_pair_condition"));
        assert!(find(&beta_reports, "div_curl_adjoint_zero"));
        assert!(!find(&beta_reports, "cross_single_condition"));
        assert!(!find(&beta_reports, "grad_adjoint_curl_zero"));
    }

    #[test]
    fn divergence_theorem_full_and_empty_subdomains_agree() {
        let g = grid();
        let alpha = peridynamic_alpha(&g).unwrap();
        let kernel = alpha_embed(&alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let nu = TwoPointField::random_dense(g.clone(), Rank::Vector(3), &mut rng).unwrap();
        let eta = TwoPointField::random_dense(g.clone(), Rank::Scalar, &mut rng).unwrap();
        let all = Subdomain::all(g.clone());
        let none = Subdomain::empty(g.clone());
        let r_all = verify_divergence_theorem(&kernel, &nu, &eta, &all, 1, IDENTITY_TOL).unwrap();
        let r_none = verify_divergence_theorem(&kernel, &nu, &eta, &none, 1, IDENTITY_TOL).unwrap();
        for (a, b) in r_all.iter().zip(&r_none) {
            assert!(a.pass && b.pass);
            assert!((a.max_abs_residual - b.max_abs_residual).abs() <= 1e-15);
        }
    }

    #[test]
    fn greens_second_identity_exact_for_equal_fields() {
        let g = grid();
        let alpha = peridynamic_alpha(&g).unwrap();
        let kernel = alpha_embed(&alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let u = OnePointField::random(g.clone(), Rank::Scalar, &mut rng).unwrap();
        let omega = random_subdomain(&g, 5);
        let reports = verify_greens_identities(&kernel, &u, &u, &omega, 1, IDENTITY_TOL).unwrap();
        let second = reports.iter().find(|r| r.identity == "greens_second").unwrap();
        assert_eq!(second.max_abs_residual, 0.0);
    }

    #[test]
    fn unknown_suite_name_rejected() {
        let g = grid();
        let kernel = NonlocalKernel::Alpha(peridynamic_alpha(&g).unwrap());
        let sel = SuiteSelection::Named(vec!["nonsense".into()]);
        assert!(run_identity_suites(&kernel, &sel, 1, IDENTITY_TOL).is_err());
    }
}
