use clap::{Args, Parser, Subcommand};
use gibc_harness::config::ScenarioConfig;
use gibc_harness::report::{write_csv, Manifest};
use gibc_harness::study::{self, StudyError};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gibc", version, about = "Time-domain scattering with generalized impedance boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Field errors over a step ladder against a fine-step reference.
    TimeConvergence(Common),
    /// Field errors over a level ladder against a fine-mesh reference.
    SpaceConvergence(Common),
    /// Condition numbers and GMRES iterations along the contour.
    ConditionSweep(Common),
    /// Total field snapshots around a torus.
    TorusDemo(Common),
    /// One scattering run with field traces at the evaluation points.
    SingleRun(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set time.steps=128`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Recompute references even when a cached copy exists.
    #[arg(long)]
    no_cache: bool,
}

impl Common {
    fn load(&self, defaults: &[&str]) -> Result<ScenarioConfig, StudyError> {
        let mut overrides: Vec<String> = Vec::new();
        if self.config.is_none() {
            overrides.extend(defaults.iter().map(|d| d.to_string()));
        }
        if let Some(v) = &self.output_dir {
            overrides.push(format!("output_dir={:?}", v.display().to_string()));
        }
        if let Some(v) = self.level {
            overrides.push(format!("mesh.level={v}"));
        }
        if let Some(v) = self.steps {
            overrides.push(format!("time.steps={v}"));
        }
        if let Some(v) = self.stages {
            overrides.push(format!("time.stages={v}"));
        }
        if let Some(v) = self.delta {
            overrides.push(format!("impedance.delta={v:e}"));
        }
        overrides.extend(self.set.iter().cloned());
        Ok(match &self.config {
            Some(path) => ScenarioConfig::load(path, &overrides)?,
            None => ScenarioConfig::with_overrides("", &overrides)?,
        })
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(path) => {
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, StudyError> {
    let (name, common) = match &cli.command {
        Command::TimeConvergence(c) => ("time-convergence", c),
        Command::SpaceConvergence(c) => ("space-convergence", c),
        Command::ConditionSweep(c) => ("condition-sweep", c),
        Command::TorusDemo(c) => ("torus-demo", c),
        Command::SingleRun(c) => ("single-run", c),
    };
    // without a scenario file the demo runs on the default torus
    let defaults: &[&str] = match cli.command {
        Command::TorusDemo(_) => &["mesh.shape=torus", "mesh.level=0", "wave.offset=1.0"],
        _ => &[],
    };
    let config = common.load(defaults)?;
    let out = config.output_dir.clone();
    let cache_dir = out.join("reference-cache");
    let cache = (!common.no_cache).then_some(cache_dir.as_path());
    let mut manifest = Manifest::new(name);
    match cli.command {
        Command::TimeConvergence(_) => {
            let report = study::run_time_convergence(&config, cache)?;
            let path = out.join("time_convergence.csv");
            report.write(&path)?;
            print_report(&report);
            manifest.output("convergence", path);
            manifest.note("norm", &report.norm);
            manifest.note("reference", &report.reference);
            if let Some(slope) = report.fitted_slope() {
                manifest.note("fitted_order", slope);
            }
        }
        Command::SpaceConvergence(_) => {
            for (report, delta) in study::run_space_convergence(&config, cache)?.iter().zip(&config.study.deltas) {
                let path = out.join(format!("space_convergence_delta_{delta}.csv"));
                report.write(&path)?;
                print_report(report);
                manifest.output(&format!("convergence_delta_{delta}"), path);
                manifest.note(&format!("reference_delta_{delta}"), &report.reference);
                if let Some(slope) = report.fitted_slope() {
                    manifest.note(&format!("fitted_order_delta_{delta}"), slope);
                }
            }
        }
        Command::ConditionSweep(_) => {
            let sweep = study::run_condition_sweep(&config)?;
            let path = out.join("condition_sweep.csv");
            write_csv(&path, &sweep.rows)?;
            manifest.output("sweep", path);
            manifest.note("dofs", sweep.dofs);
            manifest.note("max_condition", sweep.max_condition());
            manifest.note("max_iterations", sweep.max_iterations());
            manifest.note("all_converged", sweep.all_converged());
            println!(
                "{} DOFs, max condition {:.3e}, max GMRES iterations {}",
                sweep.dofs,
                sweep.max_condition(),
                sweep.max_iterations()
            );
        }
        Command::TorusDemo(_) => {
            let demo = study::run_torus_demo(&config)?;
            let frames = out.join("torus_frames.csv");
            write_csv(&frames, &demo.samples)?;
            let norms = out.join("torus_density_norms.csv");
            write_norms(&norms, demo.run.tau, &demo.run.density_norms())?;
            manifest.output("frames", frames);
            manifest.output("density_norms", norms);
            manifest.note("dofs", demo.run.dofs);
            manifest.note("peak_scattered", demo.peak_scattered);
            manifest.note("early_scattered", demo.early_scattered);
            manifest.note("first_arrival", demo.first_arrival);
        }
        Command::SingleRun(_) => {
            let run = study::run_single(&config)?;
            let fields = out.join("fields.csv");
            run.fields.write(&fields)?;
            let norms = out.join("density_norms.csv");
            write_norms(&norms, run.tau, &run.density_norms())?;
            manifest.output("fields", fields);
            manifest.output("density_norms", norms);
            manifest.note("dofs", run.dofs);
            manifest.note("mesh_width", run.mesh_width);
            manifest.note("peak_field", run.fields.peak());
            manifest.note("imag_residue", run.densities.imag_residue);
        }
    }
    Ok(manifest.write(&out, &config.to_toml())?)
}

fn print_report(report: &gibc_harness::report::ConvergenceReport) {
    println!("{}", report.label);
    for r in &report.rows {
        let order = r.order.map(|o| format!("{o:.2}")).unwrap_or_else(|| "-".into());
        println!("  {:>6} {:>12.4e} {:>12.4e} {:>6}", r.refinement, r.size, r.error, order);
    }
}

fn write_norms(path: &std::path::Path, tau: f64, norms: &[f64]) -> Result<(), StudyError> {
    #[derive(Serialize)]
    struct Row {
        step: usize,
        t: f64,
        norm: f64,
    }
    let rows: Vec<Row> = norms.iter().enumerate().map(|(n, &norm)| Row { step: n, t: n as f64 * tau, norm }).collect();
    Ok(write_csv(path, &rows)?)
}
