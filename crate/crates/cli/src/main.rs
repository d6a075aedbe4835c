use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use shellfrac::adaptation::{build_metric, MetricOptions};
use shellfrac::driver::{
    export_vtk, load_config, read_checkpoint, records_to_csv, run_from, run_with, write_checkpoint,
    RunOptions, State, StepRecord,
};
use shellfrac::estimator::{localized_estimator, EstimatorInput, QuadratureRule};
use shellfrac::fem::FeSpace;
use shellfrac::mesh::check_stiffness_sign;
use shellfrac::mesh::io::read_mesh;

/// Phase-field fracture of thin shells with anisotropic mesh adaptation.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the quasi-static simulation described by a scenario file.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "output")]
        output_dir: PathBuf,
        /// Write VTK surfaces every n steps (0 disables them).
        #[arg(long, default_value_t = 0)]
        vtk_every: usize,
        /// Override the seed of the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        /// Stop after this many time steps.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Continue from a checkpoint directory written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Report positive off-diagonal stiffness entries of a mesh.
    CheckMesh { mesh: PathBuf, config: PathBuf },
    /// Evaluate the error estimator and metric on a checkpoint.
    Estimate {
        checkpoint: PathBuf,
        #[arg(long, default_value = "output")]
        output_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            vtk_every,
            seed,
            max_steps,
            resume,
        } => run(
            &config,
            &output_dir,
            vtk_every,
            seed,
            max_steps,
            resume.as_deref(),
        ),
        Command::CheckMesh { mesh, config } => check_mesh(&mesh, &config),
        Command::Estimate {
            checkpoint,
            output_dir,
        } => estimate(&checkpoint, &output_dir),
    }
}

fn run(
    config: &Path,
    out: &Path,
    vtk_every: usize,
    seed: Option<u64>,
    max_steps: Option<usize>,
    resume: Option<&Path>,
) -> Result<ExitCode> {
    let mut spec = load_config(config).with_context(|| format!("reading {}", config.display()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let chart = spec.surface()?;
    let csv_path = out.join("records.csv");
    let opts = RunOptions {
        max_steps,
        checkpoint_dir: Some(out.to_path_buf()),
    };
    let mut records = Vec::new();
    let on_step = |record: &StepRecord, state: &State| {
        records.push(record.clone());
        fs::write(&csv_path, records_to_csv(&records))?;
        if vtk_every > 0 && state.step % vtk_every == 0 {
            export_vtk(out, &format!("step_{:05}", state.step), state, &chart, 1e-2)?;
        }
        Ok(())
    };
    let summary = match resume {
        Some(dir) => {
            let cp = read_checkpoint(dir).with_context(|| format!("reading {}", dir.display()))?;
            if cp.spec != spec {
                bail!(
                    "checkpoint {} was written for a different scenario",
                    dir.display()
                );
            }
            let first = cp.state.step + 1;
            run_from(&spec, cp.state, first, &opts, on_step)?
        }
        None => run_with(&spec, &opts, on_step)?,
    };
    write_checkpoint(&out.join("checkpoint"), &summary.state, &spec)?;
    if let Some(last) = summary.records.last() {
        println!(
            "{} steps, final time {}, crack length {:.6}, {} triangles",
            summary.records.len(),
            last.time,
            last.crack_length,
            last.n_triangles
        );
    }
    println!("records written to {}", csv_path.display());
    Ok(ExitCode::SUCCESS)
}

fn check_mesh(mesh: &Path, config: &Path) -> Result<ExitCode> {
    let spec = load_config(config).with_context(|| format!("reading {}", config.display()))?;
    let mesh = read_mesh(mesh).with_context(|| format!("reading {}", mesh.display()))?;
    let report = check_stiffness_sign(&mesh, &spec.surface()?)?;
    println!(
        "{} triangles, {} edges, tolerance {:.3e}, max positive off-diagonal {:.3e}",
        mesh.n_triangles(),
        mesh.edges().len(),
        report.tolerance,
        report.max_positive_off_diagonal
    );
    for (l, m, k) in &report.violations {
        println!("violation {l} {m} {k:.6e}");
    }
    if report.passes() {
        println!("PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL: {} positive entries", report.violations.len());
        Ok(ExitCode::from(2))
    }
}

fn estimate(checkpoint: &Path, out: &Path) -> Result<ExitCode> {
    let cp =
        read_checkpoint(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let chart = cp.spec.surface()?;
    let params = cp.spec.params.model();
    let space = FeSpace::new(&cp.state.mesh, &chart)?;
    let input = EstimatorInput {
        u: &cp.state.u,
        v: &cp.state.v,
        v_bound: &cp.state.v,
    };
    let report = localized_estimator(&space, input, &params, QuadratureRule::Standard)?;
    let metric_opts = MetricOptions::new(cp.spec.params.h_min, cp.spec.params.h_max)?;
    let metric = build_metric(&report, &cp.state.mesh, cp.spec.params.tol, &metric_opts)?;
    fs::create_dir_all(out)?;
    report.write_csv(fs::File::create(out.join("estimator.csv"))?)?;
    metric.write(fs::File::create(out.join("metric.txt"))?)?;
    println!(
        "step {} t = {}: {} triangles, global estimator {:.6e}",
        cp.state.step,
        cp.state.time,
        report.len(),
        report.global_xi
    );
    Ok(ExitCode::SUCCESS)
}
