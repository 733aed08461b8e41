use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use zsym::builders::{
    self, perturbed_flat, shift_coordinates, space_form, warped_product, WarpedSpec,
};
use zsym::exprlang;
use zsym::manifest::{load_manifest, manifest_json, CheckName, ManifestError};
use zsym::runner::{render_text, report_json, run, RunError, RunOverrides, RunReport};

#[derive(Parser)]
#[command(
    name = "zsym",
    version,
    about = "Curvature identity checks and structure classification for closed-form metrics"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the manifest's check suite (identities plus requested diagnostics)
    Check(RunArgs),
    /// Classify the metric's structure at sampled points
    Classify(RunArgs),
    /// Fit the recurrence `∇_k Z_jl = A_k Z_jl + B_j Z_kl + D_l Z_kj` at sampled points
    SolveWzs(RunArgs),
    /// Emit a ready-made metric manifest
    Build(BuildArgs),
    /// Re-render a stored JSON report
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Metric manifest (JSON)
    #[arg(long, value_name = "PATH")]
    metric: PathBuf,
    /// Sample-point count (overrides the manifest's run block)
    #[arg(long)]
    points: Option<usize>,
    /// Sampling seed (overrides the manifest's run block)
    #[arg(long)]
    seed: Option<u64>,
    /// Assertive-check tolerance (overrides the manifest's run block)
    #[arg(long)]
    tol: Option<f64>,
    /// Also write the JSON report to this path
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Print the JSON report instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BuildArgs {
    #[command(subcommand)]
    target: BuildCmd,
}

#[derive(Subcommand)]
enum BuildCmd {
    /// Identity metric on [-1,1]^dim
    Flat {
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Write the manifest here instead of stdout
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Constant-curvature metric with scalar curvature dim·(dim-1)·k
    SpaceForm {
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Sectional curvature
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        k: f64,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Warped product dx1² + e^{q(x1)}·(constant-curvature fiber)
    Warped {
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Warp exponent q as an expression in x1, e.g. "2*log(sin(x1))"
        #[arg(long, value_name = "EXPR")]
        warp: String,
        /// Sectional curvature of the (dim-1)-dimensional fiber
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        fiber_k: f64,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Identity metric plus seeded trigonometric ripples
    Perturbed {
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 0.05)]
        amplitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Stored JSON report
    path: PathBuf,
    /// Re-emit canonical JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        source: ManifestError,
    },
    #[error("{0}")]
    Build(#[from] builders::BuilderError),
    #[error("warp expression: {0}")]
    Warp(exprlang::ParseError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not a run report: {source}")]
    BadReport {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Run(#[from] RunError),
}

impl CliError {
    /// 2 for usage/manifest problems, 3 for numerical hard errors.
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Run(_) => ExitCode::from(3),
            _ => ExitCode::from(2),
        }
    }
}

fn use_color() -> bool {
    std::io::stdout().is_terminal()
        && std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty())
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_cmd(args: &RunArgs, checks: Option<&'static [CheckName]>) -> Result<ExitCode, CliError> {
    let started = Instant::now();
    let (manifest, bytes) = load_manifest(&args.metric).map_err(|source| CliError::Manifest {
        path: args.metric.clone(),
        source,
    })?;
    let report = run(
        &manifest,
        &bytes,
        RunOverrides {
            points: args.points,
            seed: args.seed,
            tolerance: args.tol,
            checks,
        },
    )?;
    let json = report_json(&report);
    if let Some(path) = &args.out {
        std::fs::write(path, &json).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    if args.json {
        print!("{json}");
    } else {
        print!(
            "{}",
            render_text(&report, Some(started.elapsed()), use_color())
        );
    }
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn build_cmd(target: &BuildCmd) -> Result<ExitCode, CliError> {
    let (spec, out) = match target {
        BuildCmd::Flat { dim, out } => (builders::flat(*dim)?, out),
        BuildCmd::SpaceForm { dim, k, out } => (space_form(*dim, *k)?, out),
        BuildCmd::Warped {
            dim,
            warp,
            fiber_k,
            out,
        } => {
            let q = exprlang::parse(warp).map_err(CliError::Warp)?;
            let fiber = shift_coordinates(&space_form(dim.saturating_sub(1), *fiber_k)?, 1);
            (warped_product(&WarpedSpec::new(q, fiber))?, out)
        }
        BuildCmd::Perturbed {
            dim,
            amplitude,
            seed,
            out,
        } => {
            let built = perturbed_flat(*dim, *amplitude, *seed)?;
            if built.effective_amplitude != built.requested_amplitude {
                eprintln!(
                    "note: amplitude {:e} broke positive definiteness; using {:e}",
                    built.requested_amplitude, built.effective_amplitude
                );
            }
            (built.spec, out)
        }
    };
    write_or_print(out.as_ref(), &manifest_json(&spec, &["all"]))?;
    Ok(ExitCode::SUCCESS)
}

fn report_cmd(args: &ReportArgs) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(&args.path).map_err(|source| CliError::Io {
        path: args.path.clone(),
        source,
    })?;
    let report: RunReport =
        serde_json::from_str(&text).map_err(|source| CliError::BadReport {
            path: args.path.clone(),
            source,
        })?;
    if args.json {
        print!("{}", report_json(&report));
    } else {
        print!("{}", render_text(&report, None, use_color()));
    }
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn dispatch(cli: &Cli) -> Result<ExitCode, CliError> {
    match &cli.cmd {
        Cmd::Check(args) => run_cmd(args, None),
        Cmd::Classify(args) => run_cmd(args, Some(&[CheckName::Classify])),
        Cmd::SolveWzs(args) => run_cmd(args, Some(&[CheckName::SolveWzs])),
        Cmd::Build(args) => build_cmd(&args.target),
        Cmd::Report(args) => report_cmd(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
