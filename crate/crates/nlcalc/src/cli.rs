//! Batch commands behind the command-line interface.
//!
//! Every command is a pure function of `(config, overrides)`: it builds the
//! inputs, runs the requested computation, writes CSV outputs with
//! 17-significant-digit floats, and returns the process exit code
//! (0 success, 1 verification failure, 2 usage error — usage errors
//! surface as `Error::Config` and are mapped by the binary).

use crate::calculus::{run_identity_suites, SuiteSelection};
use crate::config::RunConfig;
use crate::dynamics;
use crate::field::{OnePointField, Rank};
use crate::peridyn::OperatorPath;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Flag-level overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub suites: Option<Vec<String>>,
    pub quiet: bool,
}

fn output_dir(config: &RunConfig, overrides: &CliOverrides) -> PathBuf {
    overrides
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(|o| PathBuf::from(&o.dir)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::config(format!("cannot create output directory {}: {e}", dir.display())))
}

/// Runs the selected identity suites and writes `residuals.csv`. Exit 0 when
/// every row matches its predicted verdict.
pub fn cmd_verify(config: &RunConfig, overrides: &CliOverrides) -> Result<i32> {
    let grid = config.grid.build()?;
    let kernel_cfg = config
        .kernel
        .as_ref()
        .ok_or_else(|| Error::config("verify needs a kernel section"))?;
    let kernel = kernel_cfg.build(&grid)?;
    let verify = config.verify.clone().unwrap_or_default();
    let seed = overrides.seed.unwrap_or(verify.seed);
    let selection = match overrides.suites.clone().or_else(|| verify.suites.clone()) {
        Some(names) => SuiteSelection::Named(names),
        None => SuiteSelection::All,
    };
    let reports = run_identity_suites(&kernel, &selection, seed, verify.tolerance)?;

    let dir = output_dir(config, overrides);
    create_output_dir(&dir)?;
    let path = dir.join("residuals.csv");
    let mut file = std::fs::File::create(&path)?;
    writeln!(file, "identity,kernel,seed,max_residual,threshold,pass")?;
    for r in &reports {
        writeln!(
            file,
            "{},{},{},{:.16e},{:.16e},{}",
            r.identity,
            r.kernel,
            r.seed,
            r.max_abs_residual,
            r.threshold,
            r.pass_cell()
        )?;
    }

    let mut ok = true;
    for r in &reports {
        let verdict = if r.skipped {
            "skipped"
        } else if r.meets_expectation() {
            if r.pass {
                "pass"
            } else {
                "fails as predicted"
            }
        } else {
            ok = false;
            "UNEXPECTED"
        };
        if !overrides.quiet {
            println!(
                "{:<38} {:<12} residual {:>12.3e}  threshold {:>12.3e}  {}",
                r.identity, r.kernel, r.max_abs_residual, r.threshold, verdict
            );
        }
    }
    if !overrides.quiet {
        println!(
            "{} rows -> {}; wrote {}",
            reports.len(),
            if ok { "all match predictions" } else { "MISMATCHES FOUND" },
            path.display()
        );
    }
    Ok(if ok { 0 } else { 1 })
}

/// Compares the three forms of the peridynamic operator on a seeded
/// displacement; exit 0 when the worst pairwise relative discrepancy is at
/// most `1e-10`.
pub fn cmd_compare_l(config: &RunConfig, overrides: &CliOverrides) -> Result<i32> {
    let grid = config.grid.build()?;
    let material_cfg = config
        .material
        .as_ref()
        .ok_or_else(|| Error::config("compare-l needs a material section"))?;
    let material = material_cfg.build(&grid)?;
    let seed = overrides
        .seed
        .or(config.verify.as_ref().map(|v| v.seed))
        .unwrap_or(42);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = OnePointField::random(grid.clone(), Rank::Vector(3), &mut rng)?;

    let direct = material.apply_l_direct(&u)?;
    let kernel = material.assemble_c()?.apply(&u)?;
    let op1 = material.apply_l_operator(&u, OperatorPath::GradGrad)?.scale(-1.0);
    let op2 = material.apply_l_operator(&u, OperatorPath::DivGrad)?.scale(-1.0);

    let forms = [("direct", &direct), ("kernel", &kernel), ("grad_grad", &op1), ("div_grad", &op2)];
    let scale = forms.iter().map(|(_, f)| f.norm_inf()).fold(1e-300, f64::max);
    let mut worst = 0.0f64;
    for a in 0..forms.len() {
        for b in (a + 1)..forms.len() {
            let diff = forms[a]
                .1
                .values()
                .iter()
                .zip(forms[b].1.values())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            let rel = diff / scale;
            worst = worst.max(rel);
            if !overrides.quiet {
                println!("{:<10} vs {:<10} max relative discrepancy {:.3e}", forms[a].0, forms[b].0, rel);
            }
        }
    }
    let pass = worst <= 1e-10;
    println!(
        "three-way max relative discrepancy {:.3e} (seed {seed}) -> {}",
        worst,
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 1 })
}

/// Assembles the block kernel and writes `c_blocks.csv`
/// (`i,j,c11..c33`, diagonal rows included, row-major block entries).
pub fn cmd_assemble(config: &RunConfig, overrides: &CliOverrides) -> Result<i32> {
    let grid = config.grid.build()?;
    let material_cfg = config
        .material
        .as_ref()
        .ok_or_else(|| Error::config("assemble needs a material section"))?;
    let material = material_cfg.build(&grid)?;
    let op = material.assemble_c()?;

    let dir = output_dir(config, overrides);
    create_output_dir(&dir)?;
    let path = dir.join("c_blocks.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(file, "i,j,c11,c12,c13,c21,c22,c23,c31,c32,c33")?;
    let mut rows = 0usize;
    for i in 0..grid.len() {
        let write_block = |file: &mut dyn Write, j: usize, b: &[f64; 9]| -> Result<()> {
            write!(file, "{i},{j}")?;
            for v in b {
                write!(file, ",{v:.16e}")?;
            }
            writeln!(file)?;
            Ok(())
        };
        write_block(&mut file, i, op.diagonal_block(i))?;
        rows += 1;
        let (cols, blocks) = op.row(i);
        for (&j, b) in cols.iter().zip(blocks) {
            write_block(&mut file, j, b)?;
            rows += 1;
        }
    }
    file.flush()?;
    if !overrides.quiet {
        println!("assembled {} nodes, wrote {rows} block rows to {}", grid.len(), path.display());
    }
    Ok(0)
}

/// Runs the explicit dynamics and writes `trajectory.csv` and `energy.csv`.
pub fn cmd_simulate(config: &RunConfig, overrides: &CliOverrides) -> Result<i32> {
    let grid = config.grid.build()?;
    if grid.dim() != 3 {
        return Err(Error::config("simulate needs a 3D grid"));
    }
    let material_cfg = config
        .material
        .as_ref()
        .ok_or_else(|| Error::config("simulate needs a material section"))?;
    let sim_cfg = config
        .simulate
        .as_ref()
        .ok_or_else(|| Error::config("simulate needs a simulate section"))?;
    let material = material_cfg.build(&grid)?;
    let op = material.assemble_c()?;
    let dt = sim_cfg.dt.resolve(&op, material.densities(), sim_cfg.safety)?;

    let u0 = sim_cfg.initial.build(&grid)?;
    let v0 = OnePointField::zeros(grid.clone(), Rank::Vector(3))?;
    let b = OnePointField::constant(grid.clone(), Rank::Vector(3), &sim_cfg.body_force)?;
    let constraints: Vec<_> = sim_cfg.constraints.iter().map(|c| c.build(&grid)).collect();

    let state = dynamics::SimulationState::new(u0, &v0, &op, &b, material.densities(), dt)?;
    let trajectory = dynamics::simulate(
        state,
        &op,
        &b,
        material.densities(),
        &constraints,
        dt,
        sim_cfg.steps,
        sim_cfg.stride,
    )?;

    let dir = output_dir(config, overrides);
    create_output_dir(&dir)?;
    let traj_path = dir.join("trajectory.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&traj_path)?);
    trajectory.write_trajectory_csv(&mut file)?;
    file.flush()?;
    let energy_path = dir.join("energy.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&energy_path)?);
    trajectory.write_energy_csv(&mut file)?;
    file.flush()?;

    if !overrides.quiet {
        let last = trajectory.samples.last().expect("at least the initial sample");
        println!(
            "simulated {} steps at dt {:.6e}; final |u| {:.6e}, total energy {:.6e}",
            sim_cfg.steps,
            dt,
            last.displacement.norm_inf(),
            last.energy.total
        );
        println!("wrote {} and {}", traj_path.display(), energy_path.display());
    }
    Ok(0)
}
