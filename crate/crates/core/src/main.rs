use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use levylan::cli::{run, Command, Overrides, RunConfig};

/// Densities, scores, Malliavin weights and LAN diagnostics for locally
/// stable Lévy processes.
#[derive(Parser, Debug)]
#[command(name = "levylan", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    mc_size: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = RunConfig::load(&args.config).and_then(|mut cfg| {
        cfg.apply(&Overrides {
            seed: args.seed,
            output_dir: args.out,
            mc_size: args.mc_size,
        })?;
        run(args.command, &cfg)
    });
    match outcome {
        Ok(o) => {
            for (name, ok) in &o.verdicts {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            if o.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
