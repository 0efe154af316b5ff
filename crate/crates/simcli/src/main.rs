use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Parser, Subcommand};
use uowsn_sim::runner::{self, RunOptions};
use uowsn_sim::{validate, ExperimentConfig};

const FIGURES: [&str; 9] = ["fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13", "fig14", "channel"];

#[derive(Parser)]
#[command(name = "uowsn", version, about = "Run seeded connectivity, localization and channel sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a sweep and write its CSV, resuming a partial file.
    Run {
        config: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output CSV path.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Directory for configs without an `output` key.
        #[arg(long, env = "UOWSN_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Overwrite an existing output instead of resuming it.
        #[arg(long)]
        fresh: bool,
    },
    /// Check a config and print it with defaults filled in.
    Validate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render figures from a directory of CSVs with the plotting tool.
    Figures {
        csv_dir: PathBuf,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
        /// Figure ids to render (default: all).
        #[arg(long = "figure")]
        figures: Vec<String>,
        /// Plotting command, split on whitespace.
        #[arg(long, env = "UOWSN_PLOTS", default_value = "uowsn-plots")]
        plots: String,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config, seed, output, output_dir, threads, fresh } => load(&config, seed, output).and_then(|c| {
            let path = c.output_path(output_dir.as_deref());
            let summary =
                runner::run(&c, &path, &RunOptions { threads, fresh }).map_err(|e| Failure::Runtime(e.to_string()))?;
            eprintln!("wrote {} rows to {} ({} resumed)", summary.rows, summary.output.display(), summary.resumed);
            Ok(())
        }),
        Cmd::Validate { config, seed, output } => load(&config, seed, output).map(|c| print!("{}", c.to_toml())),
        Cmd::Figures { csv_dir, out, figures, plots } => render(&csv_dir, &out, &figures, &plots),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path, seed: Option<u64>, output: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let mut config = validate(&text).map_err(|e| Failure::Validation(format!("{}:\n{e}", path.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if output.is_some() {
        config.output = output;
    }
    Ok(config)
}

fn render(csv_dir: &Path, out: &Path, figures: &[String], plots: &str) -> Result<(), Failure> {
    let mut words = plots.split_whitespace();
    let program = words.next().ok_or_else(|| Failure::Runtime("empty plotting command".into()))?;
    let prefix: Vec<&str> = words.collect();
    let ids: Vec<&str> =
        if figures.is_empty() { FIGURES.to_vec() } else { figures.iter().map(String::as_str).collect() };
    for id in ids {
        let status = Command::new(program)
            .args(&prefix)
            .args(["render", "--figure", id, "--csv"])
            .arg(csv_dir)
            .arg("--out")
            .arg(out)
            .status()
            .map_err(|e| Failure::Runtime(format!("cannot start plotting command `{program}`: {e}")))?;
        if !status.success() {
            return Err(Failure::Runtime(format!("`{program}` failed on {id} with {status}")));
        }
    }
    Ok(())
}
