//! Command-line front end: run solves from a config file, compare masks and
//! fields, render contour slices, and verify tubes with rollouts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use hjrt::config::{load_run_spec, RunSpec};
use hjrt::io::{read_field, read_mask, write_field, write_mask};
use hjrt::render::{render_slice, RenderInput};
use hjrt::sets::{jaccard_error, sublevel, LevelMask, MaskSource};
use hjrt::solver::{
    run_algorithm1, solve_classical, solve_improved, SolveConfig, SolveMode, SolveResult,
    SolverError,
};
use hjrt::{analytic_rt_linear2d, rasterize_analytic, verify_crt, ValueField};

#[derive(Parser)]
#[command(
    name = "hjrt",
    about = "Reachable tubes and cost-limited reachable tubes for two-player differential games"
)]
struct Cli {
    /// Worker threads for the solver and rollouts (0 = all cores).
    /// Changes wall time only, never results.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a config file and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Compare two masks, fields, or the built-in analytic oracle.
    ///
    /// Inputs: `*.hjrt` field (cut at --level), `*.csv` mask, or the keyword
    /// `analytic:linear2d-rt`.
    Compare {
        a: String,
        b: String,
        /// Sublevel threshold applied to field inputs.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Render contour slices of a field or mask to SVG.
    Render {
        input: PathBuf,
        /// Contour levels for field inputs, comma separated.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
        /// Fix an axis, e.g. `--fix 2=3.14` (repeatable).
        #[arg(long)]
        fix: Vec<String>,
        #[arg(long, default_value = "slice.svg")]
        out: PathBuf,
    },
    /// Roll trajectories out of a stored field and check reach-before-cost.
    Verify {
        field: PathBuf,
        /// Config file naming the scenario the field was solved for.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        level: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative cost overshoot tolerated as success.
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
        /// Rollout time step; defaults to half the solver's CFL step.
        #[arg(long)]
        dt: Option<f64>,
    },
}

/// Exit policy: 1 for usage and config problems, 2 for numerical failures.
enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Numerical(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::BadConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<hjrt::io::IoError> for CliError {
    fn from(e: hjrt::io::IoError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Ignore the error if a pool already exists; results do not depend
        // on the thread count.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let outcome = match cli.command {
        Command::Run { config, output_dir } => cmd_run(&config, &output_dir),
        Command::Compare { a, b, level } => cmd_compare(&a, &b, level),
        Command::Render { input, levels, fix, out } => cmd_render(&input, &levels, &fix, &out),
        Command::Verify { field, config, level, samples, seed, tolerance, dt } => {
            cmd_verify(&field, &config, level, samples, seed, tolerance, dt)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn cmd_run(config: &Path, output_dir: &Path) -> Result<(), CliError> {
    let spec = load_run_spec(config).map_err(|e| CliError::Usage(e.to_string()))?;
    let scn = spec.scenario.build();
    std::fs::create_dir_all(output_dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", output_dir.display())))?;

    let (result, masks) = match spec.mode {
        SolveMode::Improved => run_improved(&spec, &scn)?,
        SolveMode::Classical => run_classical(&spec, &scn)?,
    };

    let field_path = output_dir.join(&spec.field_name);
    write_field(&field_path, &result.final_slice)?;
    let counts = spec.grid.counts().iter().map(usize::to_string).collect::<Vec<_>>().join("x");
    println!(
        "field: {} ({counts}, t={}, horizon {})",
        field_path.display(),
        result.final_slice.time,
        result.final_slice.horizon
    );
    for snap in &result.snapshots {
        let path = output_dir.join(format!("{}.t{}.hjrt", stem(&spec.field_name), snap.time));
        write_field(&path, snap)?;
        println!("snapshot: {} (t={})", path.display(), snap.time);
    }
    if spec.write_masks {
        for mask in &masks {
            let path = output_dir.join(format!("mask_{}.csv", mask.level));
            write_mask(&path, mask)?;
            println!("level {}: {} nodes -> {}", mask.level, mask.count(), path.display());
        }
    }
    println!(
        "solve: {} steps, {:.3} s wall",
        result.steps_taken, result.wall_time
    );
    Ok(())
}

fn run_improved(spec: &RunSpec, scn: &hjrt::Scenario) -> Result<(SolveResult, Vec<LevelMask>), CliError> {
    if let Some(horizon) = spec.horizon_override {
        let cfg = SolveConfig::new(SolveMode::Improved, horizon)
            .with_cfl(spec.cfl)
            .with_snapshots(spec.snapshots.clone());
        let result = solve_improved(scn, &spec.grid, &cfg)?;
        let masks = spec
            .costs
            .iter()
            .map(|&j| sublevel(&result.final_slice, j, MaskSource::Improved))
            .collect();
        Ok((result, masks))
    } else {
        Ok(run_algorithm1(scn, &spec.grid, &spec.costs, spec.epsilon, spec.cfl)?)
    }
}

fn run_classical(spec: &RunSpec, scn: &hjrt::Scenario) -> Result<(SolveResult, Vec<LevelMask>), CliError> {
    // One backward solve to the longest horizon; the tube at horizon T is the
    // zero sublevel of the slice at time T_max - T.
    let t_max = spec
        .horizons
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(t_max > 0.0) {
        return Err(CliError::Usage("classical horizons must be positive".into()));
    }
    let mut snapshots: Vec<f64> = spec.horizons.iter().map(|t| t_max - t).collect();
    snapshots.extend_from_slice(&spec.snapshots);
    let cfg = SolveConfig::new(SolveMode::Classical, t_max)
        .with_cfl(spec.cfl)
        .with_snapshots(snapshots);
    let result = solve_classical(scn, &spec.grid, &cfg)?;
    let mut masks = Vec::new();
    for &t in &spec.horizons {
        let slice = slice_at(&result, t_max - t)
            .ok_or_else(|| CliError::Numerical(format!("missing snapshot for horizon {t}")))?;
        let mut mask = sublevel(slice, 0.0, MaskSource::Classical);
        mask.level = t;
        masks.push(mask);
    }
    Ok((result, masks))
}

fn slice_at(result: &SolveResult, time: f64) -> Option<&ValueField> {
    let eps = 1e-9 * result.final_slice.horizon.max(1.0);
    if time.abs() <= eps {
        return Some(&result.final_slice);
    }
    result.snapshots.iter().find(|s| (s.time - time).abs() <= eps)
}

enum CompareInput {
    Mask(LevelMask),
    Field(ValueField),
    Analytic,
}

fn load_compare_input(arg: &str) -> Result<CompareInput, CliError> {
    if arg == "analytic:linear2d-rt" {
        return Ok(CompareInput::Analytic);
    }
    if arg.starts_with("analytic:") {
        return Err(CliError::Usage(format!(
            "unknown analytic oracle `{arg}`; available: analytic:linear2d-rt"
        )));
    }
    let path = Path::new(arg);
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(CompareInput::Mask(read_mask(path)?)),
        _ => Ok(CompareInput::Field(read_field(path)?)),
    }
}

fn cmd_compare(a: &str, b: &str, level: Option<f64>) -> Result<(), CliError> {
    let ia = load_compare_input(a)?;
    let ib = load_compare_input(b)?;
    let to_mask = |input: &CompareInput, other_grid: Option<&Arc<hjrt::Grid>>| -> Result<LevelMask, CliError> {
        match input {
            CompareInput::Mask(m) => Ok(m.clone()),
            CompareInput::Field(f) => {
                let level = level.ok_or_else(|| {
                    CliError::Usage("--level is required when comparing a field".into())
                })?;
                Ok(sublevel(f, level, MaskSource::Improved))
            }
            CompareInput::Analytic => {
                let grid = other_grid.ok_or_else(|| {
                    CliError::Usage("cannot compare two analytic oracles".into())
                })?;
                Ok(rasterize_analytic(grid, analytic_rt_linear2d))
            }
        }
    };
    let grid_of = |input: &CompareInput| -> Option<Arc<hjrt::Grid>> {
        match input {
            CompareInput::Mask(m) => Some(m.grid().clone()),
            CompareInput::Field(f) => Some(f.grid().clone()),
            CompareInput::Analytic => None,
        }
    };
    let ga = grid_of(&ia);
    let gb = grid_of(&ib);
    let ma = to_mask(&ia, gb.as_ref())?;
    let mb = to_mask(&ib, ga.as_ref())?;
    let e = jaccard_error(&ma, &mb).map_err(|e| CliError::Usage(e.to_string()))?;
    let diff = ma
        .symmetric_difference(&mb)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    println!("e_vol: {e:.6}");
    println!("symmetric_difference: {} nodes", diff.len());
    let grid = ma.grid();
    if !diff.is_empty() {
        let dim = grid.dim();
        let mut lo = vec![usize::MAX; dim];
        let mut hi = vec![0usize; dim];
        let mut idx = vec![0usize; dim];
        for &flat in &diff {
            grid.unflatten(flat, &mut idx);
            for d in 0..dim {
                lo[d] = lo[d].min(idx[d]);
                hi[d] = hi[d].max(idx[d]);
            }
        }
        for d in 0..dim {
            println!("symdiff_bbox[{d}]: {}..{}", lo[d], hi[d]);
        }
    }
    Ok(())
}

fn cmd_render(input: &Path, levels: &[f64], fix: &[String], out: &Path) -> Result<(), CliError> {
    let mut fixed = Vec::new();
    for spec in fix {
        let (d, v) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--fix expects `dim=value`, got `{spec}`")))?;
        let d: usize = d
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad axis in `{spec}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad coordinate in `{spec}`")))?;
        fixed.push((d, v));
    }
    let svg = match input.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let mask = read_mask(input)?;
            render_slice(&RenderInput::Mask(&mask), &fixed, levels)
        }
        _ => {
            let field = read_field(input)?;
            render_slice(&RenderInput::Field(&field), &fixed, levels)
        }
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(out, svg).map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_verify(
    field_path: &Path,
    config: &Path,
    level: f64,
    samples: usize,
    seed: u64,
    tolerance: f64,
    dt: Option<f64>,
) -> Result<(), CliError> {
    let spec = load_run_spec(config).map_err(|e| CliError::Usage(e.to_string()))?;
    let scn = spec.scenario.build();
    let field = read_field(field_path)?;
    if **field.grid() != *spec.grid {
        return Err(CliError::Usage(
            "field grid does not match the config grid".into(),
        ));
    }
    let dt = match dt {
        Some(dt) => dt,
        None => 0.5 * hjrt::solver::cfl_time_step(&scn, field.grid(), hjrt::DEFAULT_CFL)?,
    };
    let report = verify_crt(&field, &scn, level, samples, seed, tolerance, dt, field.horizon);
    println!(
        "verify: level {}, samples {}, captured-within-cost {} ({:.3}), worst overshoot {:.4}",
        report.level,
        report.samples,
        report.captured_within_cost,
        report.success_fraction,
        report.worst_overshoot
    );
    Ok(())
}

fn stem(name: &str) -> &str {
    name.strip_suffix(".hjrt").unwrap_or(name)
}
