use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Matrix2, Vector2};

use lsto::config::{parse_config, RunConfig};
use lsto::driver::{extract_layout, run_adaptive, run_fixed, RunResult};
use lsto::error::Result;
use lsto::io::{read_vtk_file, write_outputs, write_vtk, VtkFields};
use lsto::metric::MetricTensorField;
use lsto::remesh::{adapt_mesh, AdaptParams};

#[derive(Parser)]
#[command(name = "lsto", about = "Level-set topology optimization with anisotropic mesh adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (`key = value` lines; `case` is required).
    config: PathBuf,
    /// Print per-iteration convergence data.
    #[arg(long)]
    trace: bool,
    /// Output directory for history.csv, mesh.vtk, layout.vtk, boundary.svg.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Full run: level-set evolution with mesh adaptation.
    Run(RunArgs),
    /// Fixed-mesh run: level-set evolution only.
    Baseline(RunArgs),
    /// Adapt a mesh to a constant metric, no optimization.
    AdaptOnly {
        /// Input mesh (legacy VTK, triangles + labelled boundary lines).
        mesh: PathBuf,
        /// `iso=h` or `aniso=h1,h2,angle_deg`.
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => optimize(&args, true),
        Command::Baseline(args) => optimize(&args, false),
        Command::AdaptOnly { mesh, metric, out } => adapt_only(&mesh, &metric, out).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| lsto::Error::Io {
        path: args.config.display().to_string(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    cfg.trace |= args.trace;
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn optimize(args: &RunArgs, adaptive: bool) -> Result<bool> {
    let cfg = load_config(args)?;
    let result: RunResult = if adaptive {
        run_adaptive(&cfg)?
    } else {
        run_fixed(&cfg)?
    };
    let layout = extract_layout(&result.mesh, &result.phi);
    println!(
        "{}: {} after {} iterations, compliance {:.6e}, volume fraction {:.4}, {} elements, layout area {:.6e}",
        cfg.case.name,
        if result.converged { "converged" } else { "stopped at kmax" },
        result.iterations,
        result.compliance,
        result.volume / cfg.case.v0,
        result.mesh.n_triangles(),
        layout.area
    );
    if let Some(out) = &cfg.out_dir {
        write_outputs(&result, &layout, cfg.case.v0, out)?;
    }
    Ok(result.converged)
}

fn parse_metric_spec(spec: &str) -> Result<Matrix2<f64>> {
    let bad = || lsto::Error::Parameter(format!("invalid metric spec '{spec}'"));
    let (kind, rest) = spec.split_once('=').ok_or_else(bad)?;
    let nums: Vec<f64> = rest
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    match (kind.trim(), nums.as_slice()) {
        ("iso", [h]) if *h > 0.0 => Ok(Matrix2::identity() / (h * h)),
        ("aniso", [h1, h2, deg]) if *h1 > 0.0 && *h2 > 0.0 => {
            let a = deg.to_radians();
            let r1 = Vector2::new(a.cos(), a.sin());
            let r2 = Vector2::new(-a.sin(), a.cos());
            Ok(r1 * r1.transpose() / (h1 * h1) + r2 * r2.transpose() / (h2 * h2))
        }
        _ => Err(bad()),
    }
}

fn adapt_only(mesh_path: &PathBuf, spec: &str, out: Option<PathBuf>) -> Result<()> {
    let mesh = read_vtk_file(mesh_path)?;
    let m = parse_metric_spec(spec)?;
    let metric = MetricTensorField {
        tensors: vec![m; mesh.n_vertices()],
    };
    let result = adapt_mesh(&mesh, &metric, &AdaptParams::default())?;
    println!(
        "adapted: {} -> {} elements, conformity {:.3}{}",
        mesh.n_triangles(),
        result.mesh.n_triangles(),
        result.conformity,
        if result.warning { " (below 90% target)" } else { "" }
    );
    let out = out.unwrap_or_else(|| PathBuf::from("adapted.vtk"));
    write_vtk(&out, &result.mesh, &VtkFields::default())
}
