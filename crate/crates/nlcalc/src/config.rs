//! JSON run configuration: strict schema, builders for grids, kernels, and
//! materials.
//!
//! Unknown keys are rejected everywhere so a typo cannot silently change a
//! run. Every command is a pure function of the parsed configuration and
//! the seed.

use crate::dynamics::{Constraint, PrescribedMotion};
use crate::field::{OnePointField, Rank, TwoPointField};
use crate::kernels::{AlphaKernel, BetaKernel, GeneralKernel, LambdaAlphaKernel, NonlocalKernel};
use crate::peridyn::PeridynamicMaterial;
use crate::{build_uniform_grid, Error, Grid, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::Path;
use std::sync::Arc;

/// Largest node count for which a dense general kernel may be materialized.
pub const DENSE_KERNEL_NODE_CAP: usize = 128;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub material: Option<MaterialConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub bounds: Vec<[f64; 2]>,
    pub spacing: f64,
    pub horizon: f64,
    /// Physical padding per side, rounded up to whole cells.
    #[serde(default)]
    pub padding: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<Arc<Grid>> {
        if self.bounds.len() != self.dim {
            return Err(Error::config(format!(
                "grid.bounds lists {} axes but dim = {}",
                self.bounds.len(),
                self.dim
            )));
        }
        if self.padding < 0.0 {
            return Err(Error::config("grid.padding must be nonnegative"));
        }
        let mut bounds = self.bounds.clone();
        if self.padding > 0.0 {
            if !(self.spacing > 0.0) {
                return Err(Error::config("grid.spacing must be positive"));
            }
            let cells = (self.padding / self.spacing - 1e-9).ceil().max(0.0);
            let pad = cells * self.spacing;
            for b in &mut bounds {
                b[0] -= pad;
                b[1] += pad;
            }
        }
        build_uniform_grid(&bounds, self.spacing, self.horizon)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(rename = "type")]
    pub family: KernelFamilyConfig,
    pub form: String,
    /// Codomain dimension for random and tabulated kernels; defaults to the
    /// grid dimension.
    #[serde(default)]
    pub k: Option<usize>,
    /// Seed for random kernels.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Direction vector for the radial beta form.
    #[serde(default)]
    pub direction: Option<[f64; 3]>,
    /// Tabulated two-point values `i,j,c1[,c2[,c3]]`.
    #[serde(default)]
    pub csv: Option<String>,
    /// Lambda weight for the composite family.
    #[serde(default)]
    pub lambda: Option<LambdaConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamilyConfig {
    Alpha,
    Beta,
    LambdaAlpha,
    General,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "form")]
pub enum LambdaConfig {
    Delta,
    Gaussian { width: f64 },
}

impl KernelConfig {
    pub fn build(&self, grid: &Arc<Grid>) -> Result<NonlocalKernel> {
        let k = self.k.unwrap_or_else(|| grid.dim());
        Rank::Vector(k).validate()?;
        let seed = self.seed.unwrap_or(0);
        match self.family {
            KernelFamilyConfig::Alpha => {
                let alpha = match self.form.as_str() {
                    "peridynamic" => crate::kernels::peridynamic_alpha(grid)?,
                    "random" => random_alpha(grid, k, seed, true),
                    "random_symmetric_violation" => random_alpha(grid, k, seed, false),
                    "custom" => {
                        let path = self.csv.as_deref().ok_or_else(|| {
                            Error::config("alpha custom form needs kernel.csv")
                        })?;
                        load_alpha_csv(grid, k, Path::new(path))?
                    }
                    other => {
                        return Err(Error::config(format!(
                            "unknown alpha form {other:?}; use peridynamic, random, random_symmetric_violation, or custom"
                        )))
                    }
                };
                Ok(NonlocalKernel::Alpha(alpha))
            }
            KernelFamilyConfig::Beta => {
                let beta = match self.form.as_str() {
                    "radial" => {
                        let dir = self.direction.unwrap_or([1.0, 0.0, 0.0]);
                        let g = grid.clone();
                        BetaKernel::symmetric_from_fn(grid.clone(), k, move |i, j| {
                            let d = g.distance(i, j);
                            let w = 1.0 / (d * d);
                            [dir[0] * w, dir[1] * w, dir[2] * w]
                        })?
                    }
                    "random" => random_beta(grid, k, seed),
                    "custom" => {
                        let path = self.csv.as_deref().ok_or_else(|| {
                            Error::config("beta custom form needs kernel.csv")
                        })?;
                        load_beta_csv(grid, k, Path::new(path))?
                    }
                    other => {
                        return Err(Error::config(format!(
                            "unknown beta form {other:?}; use radial, random, or custom"
                        )))
                    }
                };
                Ok(NonlocalKernel::Beta(beta))
            }
            KernelFamilyConfig::LambdaAlpha => {
                let alpha = match self.form.as_str() {
                    "peridynamic" => crate::kernels::peridynamic_alpha(grid)?,
                    "random" => random_alpha(grid, k, seed, true),
                    other => {
                        return Err(Error::config(format!(
                            "unknown lambda_alpha form {other:?}; use peridynamic or random"
                        )))
                    }
                };
                let kl = match self.lambda.clone().unwrap_or(LambdaConfig::Delta) {
                    LambdaConfig::Delta => LambdaAlphaKernel::delta(alpha)?,
                    LambdaConfig::Gaussian { width } => LambdaAlphaKernel::gaussian(alpha, width)?,
                };
                Ok(NonlocalKernel::LambdaAlpha(kl))
            }
            KernelFamilyConfig::General => {
                if self.form != "random" {
                    return Err(Error::config(format!(
                        "unknown general form {:?}; use random",
                        self.form
                    )));
                }
                if grid.len() > DENSE_KERNEL_NODE_CAP {
                    return Err(Error::config(format!(
                        "dense general kernels are capped at {DENSE_KERNEL_NODE_CAP} nodes, grid has {}",
                        grid.len()
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let kernel = GeneralKernel::from_fn(grid.clone(), k, move |_, _, _| {
                    [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]
                })?;
                Ok(NonlocalKernel::General(kernel))
            }
        }
    }
}

fn random_alpha(grid: &Arc<Grid>, k: usize, seed: u64, antisymmetric: bool) -> AlphaKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if antisymmetric {
        AlphaKernel::antisymmetric_from_fn(grid.clone(), k, move |_, _| {
            [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]
        })
        .expect("rank validated")
    } else {
        // deliberately symmetric: a constructed admissibility violation
        let mut field = TwoPointField::zeros_sparse(grid.clone(), Rank::Vector(k)).expect("rank validated");
        for i in 0..grid.len() {
            for &j in grid.neighbors(i) {
                if j < i {
                    continue;
                }
                let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                field.set(i, j, &v).expect("pattern pair");
                field.set(j, i, &v).expect("pattern pair");
            }
        }
        AlphaKernel::from_two_point_unchecked(field).expect("sparse vector field")
    }
}

fn random_beta(grid: &Arc<Grid>, k: usize, seed: u64) -> BetaKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BetaKernel::symmetric_from_fn(grid.clone(), k, move |_, _| {
        [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]
    })
    .expect("rank validated")
}

fn load_pair_rows(path: &Path, k: usize) -> Result<Vec<(usize, usize, [f64; 3])>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read kernel table {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 + k {
            return Err(Error::config(format!(
                "{}:{}: expected i,j and {k} components",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), lineno + 1)))
        };
        let i: usize = parts[0]
            .parse()
            .map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let j: usize = parts[1]
            .parse()
            .map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let mut v = [0.0; 3];
        for c in 0..k {
            v[c] = parse(parts[2 + c])?;
        }
        rows.push((i, j, v));
    }
    Ok(rows)
}

fn load_alpha_csv(grid: &Arc<Grid>, k: usize, path: &Path) -> Result<AlphaKernel> {
    let mut field = TwoPointField::zeros_sparse(grid.clone(), Rank::Vector(k))?;
    for (i, j, v) in load_pair_rows(path, k)? {
        field.set(i, j, &v[..k])?;
        let neg = [-v[0], -v[1], -v[2]];
        field.set(j, i, &neg[..k])?;
    }
    AlphaKernel::from_two_point_unchecked(field)
}

fn load_beta_csv(grid: &Arc<Grid>, k: usize, path: &Path) -> Result<BetaKernel> {
    let mut field = TwoPointField::zeros_sparse(grid.clone(), Rank::Vector(k))?;
    for (i, j, v) in load_pair_rows(path, k)? {
        field.set(i, j, &v[..k])?;
        field.set(j, i, &v[..k])?;
    }
    BetaKernel::from_two_point_unchecked(field)
}

/// A scalar per-node field: a constant, a seeded perturbation, or a table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarFieldConfig {
    Constant(f64),
    Rule(ScalarFieldRule),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "form")]
pub enum ScalarFieldRule {
    Uniform { value: f64 },
    /// `base + amplitude * U[-1, 1]` per node from the seed.
    Seeded { base: f64, amplitude: f64, seed: u64 },
    /// `i,value` rows covering every node.
    Csv { path: String },
}

impl ScalarFieldConfig {
    pub fn build(&self, grid: &Arc<Grid>) -> Result<OnePointField> {
        match self {
            ScalarFieldConfig::Constant(v) => {
                OnePointField::constant(grid.clone(), Rank::Scalar, &[*v])
            }
            ScalarFieldConfig::Rule(ScalarFieldRule::Uniform { value }) => {
                OnePointField::constant(grid.clone(), Rank::Scalar, &[*value])
            }
            ScalarFieldConfig::Rule(ScalarFieldRule::Seeded { base, amplitude, seed }) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                OnePointField::from_fn(grid.clone(), Rank::Scalar, |_, _, out| {
                    out[0] = base + amplitude * rng.gen_range(-1.0..=1.0);
                })
            }
            ScalarFieldConfig::Rule(ScalarFieldRule::Csv { path }) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config(format!("cannot read field table {path}: {e}")))?;
                let mut values = vec![None; grid.len()];
                for (lineno, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let mut parts = line.split(',').map(str::trim);
                    let i: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::config(format!("{path}:{}: bad node index", lineno + 1)))?;
                    let v: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::config(format!("{path}:{}: bad value", lineno + 1)))?;
                    if i >= grid.len() {
                        return Err(Error::config(format!("{path}:{}: node {i} out of range", lineno + 1)));
                    }
                    values[i] = Some(v);
                }
                if let Some(missing) = values.iter().position(|v| v.is_none()) {
                    return Err(Error::config(format!("field table {path} misses node {missing}")));
                }
                OnePointField::from_fn(grid.clone(), Rank::Scalar, |i, _, out| {
                    out[0] = values[i].unwrap();
                })
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub bulk: ScalarFieldConfig,
    pub shear: ScalarFieldConfig,
    pub density: ScalarFieldConfig,
    pub r: f64,
    #[serde(default)]
    pub delta: Option<f64>,
}

impl MaterialConfig {
    pub fn build(&self, grid: &Arc<Grid>) -> Result<PeridynamicMaterial> {
        let bulk = self.bulk.build(grid)?;
        let shear = self.shear.build(grid)?;
        let density = self.density.build(grid)?;
        PeridynamicMaterial::new(grid.clone(), &bulk, &shear, &density, self.r, self.delta)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub suites: Option<Vec<String>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_seed() -> u64 {
    42
}

fn default_tolerance() -> f64 {
    crate::calculus::IDENTITY_TOL
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { suites: None, seed: default_seed(), tolerance: default_tolerance() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub dt: DtConfig,
    #[serde(default = "default_safety")]
    pub safety: f64,
    pub steps: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub body_force: [f64; 3],
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub constraints: Vec<ConstraintConfig>,
}

fn default_safety() -> f64 {
    0.5
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DtConfig {
    Auto(String),
    Fixed(f64),
}

impl DtConfig {
    pub fn resolve(&self, op: &crate::peridyn::SparseOperator, density: &[f64], safety: f64) -> Result<f64> {
        match self {
            DtConfig::Fixed(dt) if *dt > 0.0 => Ok(*dt),
            DtConfig::Fixed(dt) => Err(Error::config(format!("simulate.dt must be positive, got {dt}"))),
            DtConfig::Auto(word) if word == "auto" => crate::dynamics::stable_dt(op, density, safety),
            DtConfig::Auto(word) => Err(Error::config(format!("simulate.dt must be a number or \"auto\", got {word:?}"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "type")]
pub enum InitialCondition {
    #[default]
    Zero,
    Gaussian {
        center: [f64; 3],
        amplitude: [f64; 3],
        width: f64,
    },
}

impl InitialCondition {
    pub fn build(&self, grid: &Arc<Grid>) -> Result<OnePointField> {
        match self {
            InitialCondition::Zero => OnePointField::zeros(grid.clone(), Rank::Vector(3)),
            InitialCondition::Gaussian { center, amplitude, width } => {
                if !(*width > 0.0) {
                    return Err(Error::config("initial.width must be positive"));
                }
                OnePointField::from_fn(grid.clone(), Rank::Vector(3), |_, x, out| {
                    let r2 = (0..3).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>();
                    let bump = (-r2 / (width * width)).exp();
                    for (o, a) in out.iter_mut().zip(amplitude) {
                        *o = a * bump;
                    }
                })
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub region: RegionConfig,
    pub motion: MotionConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "type")]
pub enum MotionConfig {
    Constant { value: [f64; 3] },
    Harmonic { amplitude: [f64; 3], frequency: f64 },
}

impl ConstraintConfig {
    pub fn build(&self, grid: &Arc<Grid>) -> Constraint {
        let nodes = (0..grid.len())
            .filter(|&i| {
                let p = grid.position(i);
                (0..grid.dim()).all(|a| p[a] >= self.region.min[a] && p[a] <= self.region.max[a])
            })
            .collect();
        let motion = match &self.motion {
            MotionConfig::Constant { value } => PrescribedMotion::Constant(*value),
            MotionConfig::Harmonic { amplitude, frequency } => {
                PrescribedMotion::Harmonic { amplitude: *amplitude, frequency: *frequency }
            }
        };
        Constraint { nodes, motion }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "grid": {"dim": 1, "bounds": [[0.0, 1.0]], "spacing": 0.25, "horizon": 0.3}
    }"#;

    #[test]
    fn minimal_config_parses_and_builds() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        let grid = cfg.grid.build().unwrap();
        assert_eq!(grid.len(), 4);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{
            "grid": {"dim": 1, "bounds": [[0.0, 1.0]], "spacing": 0.25, "horizon": 0.3, "volume": 2}
        }"#;
        assert!(RunConfig::from_json(bad).is_err());
        let bad_top = r#"{
            "grid": {"dim": 1, "bounds": [[0.0, 1.0]], "spacing": 0.25, "horizon": 0.3},
            "extra": {}
        }"#;
        assert!(RunConfig::from_json(bad_top).is_err());
    }

    #[test]
    fn malformed_json_rejected() {
        assert!(RunConfig::from_json("{not json").is_err());
    }

    #[test]
    fn padding_extends_bounds_by_whole_cells() {
        let cfg = RunConfig::from_json(
            r#"{"grid": {"dim": 1, "bounds": [[0.0, 1.0]], "spacing": 0.25, "horizon": 0.3, "padding": 0.3}}"#,
        )
        .unwrap();
        // 0.3 of padding rounds up to 2 cells of 0.25 per side: 8 total
        let grid = cfg.grid.build().unwrap();
        assert_eq!(grid.len(), 8);
    }

    #[test]
    fn kernel_and_material_sections_build() {
        let text = r#"{
            "grid": {"dim": 3, "bounds": [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], "spacing": 0.25, "horizon": 0.45},
            "kernel": {"type": "alpha", "form": "peridynamic"},
            "material": {"bulk": 1.0, "shear": {"form": "seeded", "base": 1.0, "amplitude": 0.2, "seed": 3}, "density": 1.0, "r": 2.0}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let grid = cfg.grid.build().unwrap();
        let kernel = cfg.kernel.as_ref().unwrap().build(&grid).unwrap();
        assert_eq!(kernel.family_label(), "alpha");
        let mat = cfg.material.as_ref().unwrap().build(&grid).unwrap();
        assert!(mat.weighted_volume() > 0.0);
    }

    #[test]
    fn custom_alpha_kernel_from_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("alpha.csv");
        // 1D grid: nodes at 0.125, 0.375, 0.625, 0.875 with neighbor pairs
        // (0,1), (1,2), (2,3); one orientation per pair, mirrored on load
        std::fs::write(&path, "0,1,4.0\n1,2,-2.0\n2,3,1.5\n").unwrap();
        let text = format!(
            r#"{{
            "grid": {{"dim": 1, "bounds": [[0.0, 1.0]], "spacing": 0.25, "horizon": 0.3}},
            "kernel": {{"type": "alpha", "form": "custom", "k": 1, "csv": "{}"}}
        }}"#,
            path.display()
        );
        let cfg = RunConfig::from_json(&text).unwrap();
        let grid = cfg.grid.build().unwrap();
        let kernel = cfg.kernel.as_ref().unwrap().build(&grid).unwrap();
        match kernel {
            NonlocalKernel::Alpha(a) => {
                assert_eq!(a.get(0, 1)[0], 4.0);
                assert_eq!(a.get(1, 0)[0], -4.0);
                assert!(a.is_antisymmetric(0.0));
            }
            other => panic!("expected alpha kernel, got {}", other.family_label()),
        }
    }

    #[test]
    fn dt_strings_other_than_auto_rejected() {
        let text = r#"{
            "grid": {"dim": 3, "bounds": [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], "spacing": 0.5, "horizon": 0.6},
            "material": {"bulk": 1.0, "shear": 1.0, "density": 1.0, "r": 2.0},
            "simulate": {"dt": "fast", "steps": 10}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let grid = cfg.grid.build().unwrap();
        let mat = cfg.material.as_ref().unwrap().build(&grid).unwrap();
        let op = mat.assemble_c().unwrap();
        let sim = cfg.simulate.as_ref().unwrap();
        assert!(sim.dt.resolve(&op, mat.densities(), sim.safety).is_err());
    }
}
