use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qbypass::data::partition_clients;
use qbypass_cli::config::{ConfigError, ExperimentConfig};
use qbypass_cli::registry::Runner;
use qbypass_cli::{emit_table, git_hash, verify};

#[derive(Parser)]
#[command(name = "qbypass", version, about = "Residual hybrid quantum-classical experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a registry experiment (table1..table6, ablation).
    Run {
        experiment: String,
        #[arg(long)]
        dataset: Option<String>,
        /// Number of seeds; uses seeds 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        clients: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fast oracle checks.
    Verify,
    /// Print per-client class histograms for a config's partition.
    PartitionInspect { config: PathBuf },
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run { experiment, dataset, seeds, rounds, clients, out, config } => {
            let mut cfg = match &config {
                Some(p) => match ExperimentConfig::load(p) {
                    Ok(c) => c,
                    Err(e) => return config_error(e),
                },
                None => ExperimentConfig::for_experiment(&experiment),
            };
            if !cfg.experiment.is_empty() && cfg.experiment != experiment {
                return config_error(format!("config names experiment '{}' but '{experiment}' was requested", cfg.experiment));
            }
            cfg.experiment = experiment;
            if let Some(d) = dataset {
                cfg.datasets = vec![d];
            }
            if let Some(n) = seeds {
                cfg.seeds = (0..n).collect();
            }
            if let Some(r) = rounds {
                cfg.fed.rounds = r;
            }
            if let Some(k) = clients {
                cfg.fed.clients = k;
            }
            if let Some(o) = out {
                cfg.out_dir = Some(o);
            }
            if let Err(e) = cfg.validate() {
                return config_error(e);
            }
            let mut runner = Runner::new(&cfg);
            let mut table = match runner.run() {
                Ok(t) => t,
                Err(e @ qbypass::Error::Config(_)) => return config_error(e),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            table.provenance.git_hash = git_hash();
            let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
            if let Err(e) = emit_table(&table, &dir, &cfg.experiment) {
                eprintln!("error: writing results to {}: {e}", dir.display());
                return ExitCode::from(EXIT_RUNTIME);
            }
            print!("{}", table.to_markdown());
            ExitCode::SUCCESS
        }
        Cmd::Verify => {
            let results = verify::verify_suite();
            print!("{}", verify::render(&results));
            if results.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::from(EXIT_RUNTIME) }
        }
        Cmd::PartitionInspect { config } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            match inspect(&cfg) {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => config_error(e),
            }
        }
    }
}

fn inspect(cfg: &ExperimentConfig) -> Result<String, ConfigError> {
    let name = cfg.datasets.first().map_or("wine", String::as_str);
    let runner = Runner::new(cfg);
    let ds = runner.load(name).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let all: Vec<usize> = (0..ds.raw.len()).collect();
    let part = partition_clients(&all, ds.raw.labels(), cfg.fed.clients, cfg.fed.partition, seed)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let c = ds.raw.n_classes();
    let mut s = format!("dataset {name}, {} clients, {:?}, seed {seed}\n", part.n_clients(), cfg.fed.partition);
    let header: Vec<String> = (0..c).map(|k| format!("class{k}")).collect();
    s.push_str(&format!("client,{},total\n", header.join(",")));
    for (k, h) in part.histograms(ds.raw.labels(), c).iter().enumerate() {
        let cells: Vec<String> = h.iter().map(usize::to_string).collect();
        s.push_str(&format!("{k},{},{}\n", cells.join(","), h.iter().sum::<usize>()));
    }
    s.push_str(&format!("mean TV distance to global: {:.4}\n", part.mean_tv_distance(ds.raw.labels(), c)));
    Ok(s)
}
