use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thomas_lab_cli::report::RunReport;
use thomas_lab_cli::{config, run, validate, CliError};

#[derive(Parser)]
#[command(name = "thomas-lab", version, about = "Thomas-line resolvent scans, band tables and cluster norms")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the task of a config and write CSV artifacts plus summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: $THOMAS_LAB_OUT, else ./thomas-lab-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config against the schema and report exponent diagnostics.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pretty-print a run summary (a summary.json or the directory holding it).
    Report {
        path: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("THOMAS_LAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("thomas-lab-out"))
}

fn base_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config: path, out, seed } => {
            let (mut cfg, raw) = config::load(&path)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out_dir(out);
            let report = run::run(&cfg, &raw, &base_of(&path), &out)?;
            for a in &report.assertions {
                let mark = if a.passed { "pass" } else { "FAIL" };
                println!("[{mark}] {}: {}", a.name, a.detail);
            }
            println!("wrote {} artifacts and summary.json to {}", report.artifacts.len(), out.display());
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Validate { config: path } => {
            let (cfg, _) = config::load(&path)?;
            let model = cfg.model.build(&base_of(&path))?;
            println!("{}: schema ok, task {}", path.display(), cfg.task.name());
            for d in validate::diagnostics(&model) {
                println!("{d}");
            }
            Ok(0)
        }
        Command::Report { path, out } => {
            let path = path.unwrap_or_else(|| out_dir(out));
            print!("{}", RunReport::read(&path)?.render());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
