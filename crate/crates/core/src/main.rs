use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kapi_elm::cli_io::{error_exit_code, parse_config, run_and_write, RunConfig, RunKind};
use kapi_elm::KapiError;

/// Environment variable overriding the output directory.
const OUT_DIR_ENV: &str = "KAPI_OUT_DIR";

#[derive(Parser)]
#[command(name = "kapi", version, about = "Kernel-adaptive PI-ELM solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tune the kernel distribution for a forward problem.
    Forward(RunArgs),
    /// Estimate a PDE coefficient from noisy sensor data.
    Inverse(RunArgs),
    /// Time-block solve of the advection problem.
    Advection(RunArgs),
    /// Baseline solves over a stiffness schedule with gradient clustering.
    BaselineStudy(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; takes precedence over KAPI_OUT_DIR and the configuration.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

fn out_dir(args: &RunArgs, cfg: &RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("runs/{:?}-seed{}", cfg.kind, cfg.seed.unwrap_or(0)).to_lowercase()))
}

fn run(kind: RunKind, args: &RunArgs) -> Result<i32, KapiError> {
    let mut cfg = parse_config(&args.config)?;
    if cfg.kind != kind {
        return Err(KapiError::config("kind", format!("configuration is for {:?}, not {kind:?}", cfg.kind)));
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    let dir = out_dir(args, &cfg);
    let (bundle, code) = run_and_write(&cfg, &dir)?;
    if !args.quiet {
        let s = &bundle.summary;
        println!("output: {}", dir.display());
        if let Some(l) = s.loss {
            println!("loss: {l:.6e}");
        }
        println!("kernels: {}", s.n_kernels);
        if let Some(e) = &s.errors {
            println!("linf: {:.6e}  rel_l2: {:.6e}", e.linf, e.rel_l2);
        }
        if let Some(a) = s.a_est {
            println!("a_est: {a:.6}");
        }
        if let Some(nu) = s.nu_est {
            println!("nu_est: {nu:.6e}");
        }
        if let Some(nu) = s.nu_solvable {
            println!("nu_solvable: {nu:e}  clusters: {:?}", s.clusters);
        }
        if let Some(r) = s.stop_reason {
            println!("stop: {r:?} after {} evaluations", s.n_evaluations.unwrap_or(0));
        }
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Forward(a) => (RunKind::Forward, a),
        Command::Inverse(a) => (RunKind::Inverse, a),
        Command::Advection(a) => (RunKind::Advection, a),
        Command::BaselineStudy(a) => (RunKind::BaselineStudy, a),
    };
    let level = if args.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match run(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
