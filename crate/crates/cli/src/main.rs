use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swimmer_cli::output::Manifest;
use swimmer_cli::{checks, commands, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "swimmer",
    version,
    about = "Gait analysis and optimization for a compliant three-link swimmer"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Connection field and height function over the shape-space grid.
    HeightFunction,
    /// Forward simulation of the configured gait.
    Simulate,
    /// Optimal gait for the configured compliance, with a verification run.
    Optimize,
    /// Repeat `simulate` (and optionally `optimize`) over values of one numeric key.
    Sweep {
        /// Dotted key path, e.g. `compliance.g`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; angles may carry a `deg` suffix.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Also run the optimizer for every value.
        #[arg(long)]
        optimize: bool,
    },
    /// Run the release checks and print a report.
    Selfcheck {
        /// Run only these check ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
    /// Print the configuration in canonical form.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let Common {
        config,
        out,
        threads,
        quiet,
    } = cli.common;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let cfg = match &config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = out.unwrap_or_else(|| cfg.output.directory.clone());
    let manifest = match cli.command {
        Command::HeightFunction => commands::height_function(&cfg, &out)?,
        Command::Simulate => commands::simulate(&cfg, &out)?,
        Command::Optimize => commands::optimize(&cfg, &out)?,
        Command::Sweep {
            param,
            values,
            optimize,
        } => commands::sweep(&cfg, &out, &param, &values, optimize)?,
        Command::Selfcheck { only } => return selfcheck(&cfg, &only, quiet),
        Command::Config => {
            print!("{}", cfg.to_canonical());
            return Ok(());
        }
    };
    if !quiet {
        report(&manifest, &out);
    }
    Ok(())
}

fn report(m: &Manifest, out: &Path) {
    println!("{} -> {}", m.command, out.display());
    for f in &m.files {
        println!("  {:<28} {:>10} bytes  {}", f.name, f.bytes, &f.sha256[..16]);
    }
    for (k, v) in &m.summary {
        println!("  {k:<28} {v:.6e}");
    }
}

fn selfcheck(cfg: &RunConfig, only: &[usize], quiet: bool) -> Result<(), CliError> {
    let ids = if only.is_empty() { checks::ids() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|i| !checks::ids().contains(i)) {
        return Err(CliError::Config(format!("--only: no check C{bad}")));
    }
    let mut failed = 0;
    for id in &ids {
        let r = checks::run(*id, cfg.selfcheck.seed);
        if !r.passed {
            failed += 1;
        }
        if !quiet || !r.passed {
            println!("{}", r.line());
        }
    }
    if failed > 0 {
        return Err(CliError::Selfcheck(failed, ids.len()));
    }
    Ok(())
}
