mod catalog;
mod config;
mod run;

use anyhow::Context;
use bergman_lab::acceptance;
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use std::path::PathBuf;
use std::process::ExitCode;

const DEFAULT_OUT: &str = "bergman-lab-out";

#[derive(Parser)]
#[command(name = "bergman-lab", version, about = "Bergman kernel and Toeplitz operator experiments on model geometries")]
struct Cli {
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Seed for the randomized property suite; never changes reported quantities.
    #[arg(long, global = true, default_value_t = acceptance::SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments of a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `out`.
        #[arg(long, env = "BERGMAN_LAB_OUT")]
        out: Option<PathBuf>,
        /// Validate and print the normalized config without computing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Print the geometry catalog.
    ListCatalog {
        #[arg(long)]
        json: bool,
    },
    /// Run the acceptance suite.
    Check {
        /// Also write `acceptance.json` here.
        #[arg(long, env = "BERGMAN_LAB_OUT")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("thread pool: {e}");
        return ExitCode::from(3);
    }
    let threads = rayon::current_num_threads();
    match cli.command {
        Command::ListCatalog { json } => {
            if json {
                println!("{}", catalog::json());
            } else {
                print!("{}", catalog::text());
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, out, dry_run } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("invalid config: {e:#}");
                    return ExitCode::from(2);
                }
            };
            if dry_run {
                return match cfg.validate().and_then(|_| cfg.emit()) {
                    Ok(text) => {
                        print!("{text}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("invalid config: {e:#}");
                        ExitCode::from(2)
                    }
                };
            }
            let out = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            match run::execute(&cfg, &out, threads, cli.seed) {
                Ok(s) => {
                    for b in &s.bands {
                        let tag = if b.passed { "PASS" } else { "FAIL" };
                        println!("[{tag}] {}.{} = {:.6e} (bound {:e})", b.experiment, b.name, b.value, b.bound);
                    }
                    println!("wrote {} and summary.json to {}", s.artifacts.join(", "), out.display());
                    if s.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(f) => {
                    eprintln!("{f}");
                    ExitCode::from(f.exit_code())
                }
            }
        }
        Command::Check { out } => {
            let results = acceptance::run_all_seeded(cli.seed);
            for r in &results {
                println!("{r}");
            }
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} criteria pass", results.len());
            if let Some(dir) = out {
                let written = std::fs::create_dir_all(&dir)
                    .and_then(|_| {
                        let json = serde_json::to_string_pretty(&results).map_err(std::io::Error::other)?;
                        std::fs::write(dir.join("acceptance.json"), json)
                    })
                    .with_context(|| format!("writing {}", dir.display()));
                if let Err(e) = written {
                    eprintln!("{e:#}");
                    return ExitCode::from(3);
                }
            }
            if passed == results.len() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
