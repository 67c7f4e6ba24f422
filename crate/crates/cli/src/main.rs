use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use effpot_cli::{run_file, status_of, LoadedConfig, RunOptions, Status};

#[derive(Parser)]
#[command(name = "effpot", about = "Effective-potential construction experiments")]
struct Args {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Run one configuration, or every `*.toml` in a directory
    Run {
        /// Configuration file or directory of configurations
        config: PathBuf,
        /// Output directory (one subdirectory per configuration for a directory run)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent runs for a directory of configurations
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the configuration's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a configuration without running it
    Validate { config: PathBuf },
    /// Print the tool version
    Version,
}

fn exit(status: Status) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn run_single(config: &Path, opts: &RunOptions) -> Status {
    match run_file(config, opts) {
        Ok((report, dir)) => {
            print!("{}", report.summary());
            println!("outputs written to {}", dir.display());
            status_of(&report)
        }
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            e.status()
        }
    }
}

/// Each configuration runs in its own process; the worst status wins.
fn run_directory(dir: &Path, out: Option<&Path>, jobs: usize, seed: Option<u64>) -> Status {
    let mut configs: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect(),
        Err(e) => {
            eprintln!("cannot read {}: {e}", dir.display());
            return Status::ConfigError;
        }
    };
    configs.sort();
    if configs.is_empty() {
        eprintln!("no *.toml configurations in {}", dir.display());
        return Status::ConfigError;
    }
    let exe = match std::env::current_exe() {
        Ok(exe) => exe,
        Err(e) => {
            eprintln!("cannot locate the effpot executable: {e}");
            return Status::NumericalFailure;
        }
    };
    let queue = Mutex::new(configs.into_iter());
    let worst = Mutex::new(0_i32);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            scope.spawn(|| loop {
                let Some(config) = queue.lock().unwrap().next() else {
                    break;
                };
                let mut cmd = Command::new(&exe);
                cmd.arg("run").arg(&config);
                if let Some(out) = out {
                    let stem = config.file_stem().unwrap_or_default();
                    cmd.arg("--out").arg(out.join(stem));
                }
                if let Some(seed) = seed {
                    cmd.arg("--seed").arg(seed.to_string());
                }
                let code = match cmd.output() {
                    Ok(o) => {
                        print!("{}", String::from_utf8_lossy(&o.stdout));
                        eprint!("{}", String::from_utf8_lossy(&o.stderr));
                        o.status.code().unwrap_or(Status::NumericalFailure.code())
                    }
                    Err(e) => {
                        eprintln!("{}: cannot start run: {e}", config.display());
                        Status::NumericalFailure.code()
                    }
                };
                println!("{}: exit {code}", config.display());
                let mut w = worst.lock().unwrap();
                *w = (*w).max(code);
            });
        }
    });
    match worst.into_inner().unwrap() {
        0 => Status::Passed,
        1 => Status::VerdictFailed,
        2 => Status::ConfigError,
        _ => Status::NumericalFailure,
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        Commands::Run {
            config,
            out,
            jobs,
            seed,
        } => {
            if config.is_dir() {
                exit(run_directory(&config, out.as_deref(), jobs, seed))
            } else {
                exit(run_single(&config, &RunOptions { out, seed }))
            }
        }
        Commands::Validate { config } => {
            let checked = LoadedConfig::read(&config).and_then(|c| c.plan().map(|_| c));
            match checked {
                Ok(c) => {
                    println!(
                        "{}: valid {} configuration (hash {})",
                        config.display(),
                        c.config.experiment.kind.name(),
                        c.config.hash()
                    );
                    exit(Status::Passed)
                }
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    exit(Status::ConfigError)
                }
            }
        }
        Commands::Version => {
            println!("effpot {}", effpot::VERSION);
            exit(Status::Passed)
        }
    }
}
