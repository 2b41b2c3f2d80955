//! `scatter`: run the scattering solvers on a JSON scene and write plot-ready
//! CSV tables plus a `report.json` describing the run.

mod commands;
mod output;
mod scene;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use scatter_core::many_body::SolveMethod;
use scatter_core::Error;

use crate::commands::Context;
use crate::output::{InputEcho, OutputDir, RunReport};
use crate::scene::SceneError;

const EXIT_VALIDATION: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_INFEASIBLE: i32 = 4;
const DEFAULT_OUT: &str = "scatter-out";

#[derive(Debug, Parser)]
#[command(name = "scatter", version, about = "Electromagnetic scattering by many small perfectly conducting particles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Boundary-integral solve for one body, compared with the small-body asymptotics.
    SingleBody(Args),
    /// Effective-field system for an ensemble placed by the density law.
    ManyBody(Args),
    /// Cube-partition reduction of the many-body system.
    Reduce(Args),
    /// Homogenized integral equation on a voxel grid.
    Continuum(Args),
    /// Density that realizes a target refraction coefficient.
    Design(Args),
    /// Single-body error in Q over a sequence of ka values.
    Convergence(Args),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, clap::Args)]
struct Args {
    /// Scene file (JSON).
    #[arg(long)]
    scene: PathBuf,
    /// Output directory; overrides the scene's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the scene setting, then to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Linear solver; overrides the scene's `solver.method`.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Accept a regime score above the threshold with a warning.
    #[arg(long)]
    override_regime: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SingleBody(_) => "single-body",
            Command::ManyBody(_) => "many-body",
            Command::Reduce(_) => "reduce",
            Command::Continuum(_) => "continuum",
            Command::Design(_) => "design",
            Command::Convergence(_) => "convergence",
        }
    }

    fn args(&self) -> &Args {
        match self {
            Command::SingleBody(a)
            | Command::ManyBody(a)
            | Command::Reduce(a)
            | Command::Continuum(a)
            | Command::Design(a)
            | Command::Convergence(a) => a,
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<SceneError>().is_some() {
        return EXIT_VALIDATION;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::InfeasibleTarget { .. }) => EXIT_INFEASIBLE,
        Some(Error::NoConvergence { .. } | Error::IllConditioned { .. }) => EXIT_NUMERICAL,
        Some(_) => EXIT_VALIDATION,
        None => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cmd = cli.command;
    let args = cmd.args().clone();
    let input = InputEcho {
        scene_path: args.scene.display().to_string(),
        scene_text: None,
        arguments: std::env::args().collect(),
    };
    let mut report = RunReport::new(cmd.name(), input, 0);
    let mut out_dir = args.out.clone();
    let code = match execute(&cmd, &args, &mut report, &mut out_dir) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            log::error!("{e:#}");
            report.status = "failed".into();
            report.error = Some(format!("{e:#}"));
            code
        }
    };
    report.exit_code = code;
    if code == 0 {
        report.status = "ok".into();
    }
    let dir = out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    match OutputDir::create(&dir).and_then(|o| o.write_report(&report)) {
        Ok(()) => log::info!("report written to {}", dir.join("report.json").display()),
        Err(e) => {
            log::error!("cannot write the run report: {e:#}");
            return ExitCode::from(EXIT_NUMERICAL as u8);
        }
    }
    ExitCode::from(code as u8)
}

/// Runs one subcommand. `out_dir` is set as soon as the scene names one, so the
/// report lands next to any outputs even when a later step fails.
fn execute(cmd: &Command, args: &Args, report: &mut RunReport, out_dir: &mut Option<PathBuf>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.scene)
        .map_err(|e| SceneError(format!("cannot read scene file {}: {e}", args.scene.display())))?;
    report.input.scene_text = Some(text.clone());
    let scene = scene::parse(&text)?;
    let base = args.scene.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = args
        .out
        .clone()
        .or_else(|| scene.output.as_ref().map(|p| base.join(p)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    *out_dir = Some(dir.clone());

    let threads = args
        .threads
        .or(scene.solver.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(SceneError("thread count must be at least 1".into()).into());
    }
    report.threads = threads;
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        report.warn(format!("thread pool already initialised: {e}"));
    }

    let resolved = scene.resolve()?;
    for w in &resolved.warnings {
        report.warn(w.clone());
    }
    let method = match args.method {
        Some(MethodArg::Direct) => SolveMethod::Direct,
        Some(MethodArg::Iterative) => SolveMethod::Iterative,
        None => scene.solver.method,
    };
    let out = OutputDir::create(&dir)?;
    let ctx = Context {
        scene: &scene,
        resolved: &resolved,
        base: &base,
        out: &out,
        method,
        override_regime: args.override_regime,
    };
    match cmd {
        Command::SingleBody(_) => commands::single_body(&ctx, report),
        Command::ManyBody(_) => commands::many_body(&ctx, report),
        Command::Reduce(_) => commands::reduce(&ctx, report),
        Command::Continuum(_) => commands::continuum(&ctx, report),
        Command::Design(_) => commands::design(&ctx, report),
        Command::Convergence(_) => commands::convergence(&ctx, report),
    }
}
