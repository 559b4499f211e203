//! Command-line front end: run experiments from a config file, summarize
//! finished run directories, and inspect non-IID partitions.

use clap::{Parser, Subcommand};
use fedsel::data::load_preset;
use fedsel::experiment::{
    emit_outputs, parse_config_file, read_summary_csv, render_report, run_experiment_with,
    summary_rows,
};
use fedsel::fed::{partition_noniid, PartitionConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fedsel",
    version,
    about = "Deterministic federated-learning simulation with pluggable client selection"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment a config file describes and write its outputs.
    Run {
        /// Flat key = value config file.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's out_dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides the config's data_dir.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Summarize a finished run directory from its summary.csv.
    Report {
        /// Directory a `run` wrote.
        #[arg(long)]
        dir: PathBuf,
    },
    /// Split a dataset across clients and show the result.
    Partition {
        /// Dataset preset name.
        #[arg(long)]
        dataset: String,
        /// Dominant-class fraction in [0, 1].
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        clients: usize,
        #[arg(long)]
        seed: u64,
        /// Also print each client's full class histogram.
        #[arg(long)]
        inspect: bool,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> fedsel::Result<()> {
    match cli.cmd {
        Cmd::Run {
            config,
            out_dir,
            data_dir,
        } => {
            let mut cfg = parse_config_file(&config)?;
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            if let Some(dir) = data_dir {
                cfg.data_dir = dir;
            }
            let outcome = run_experiment_with(&cfg, |r| {
                eprintln!(
                    "{} seed {}: {} rounds, final accuracy {:.4}, target {}",
                    r.selector,
                    r.seed,
                    r.records.len(),
                    r.report.accuracy,
                    match r.rounds_to_target {
                        Some(n) => format!("reached at round {n}"),
                        None => "not reached".to_string(),
                    }
                );
            })?;
            emit_outputs(&outcome, &cfg.out_dir)?;
            print!("{}", render_report(&summary_rows(&outcome)));
            println!("outputs written to {}", cfg.out_dir.display());
            Ok(())
        }
        Cmd::Report { dir } => {
            let rows = read_summary_csv(&dir.join("summary.csv"))?;
            print!("{}", render_report(&rows));
            Ok(())
        }
        Cmd::Partition {
            dataset,
            sigma,
            clients,
            seed,
            inspect,
            data_dir,
        } => {
            let data = load_preset(&dataset, &data_dir)?;
            let shards = partition_noniid(
                &data.train,
                &PartitionConfig {
                    n_clients: clients,
                    sigma,
                    seed,
                },
            )?;
            println!(
                "{dataset}: {} train samples, {} classes, sigma {sigma}, seed {seed}",
                data.train.len(),
                data.train.num_classes
            );
            println!("{:<8} {:>8} {:>9} {:>14}", "client", "samples", "dominant", "dominant_frac");
            for shard in &shards {
                let hist = shard.class_histogram(data.train.num_classes);
                let frac = hist[shard.dominant_class] as f64 / shard.sample_count() as f64;
                println!(
                    "{:<8} {:>8} {:>9} {:>14.3}",
                    shard.client_id,
                    shard.sample_count(),
                    shard.dominant_class,
                    frac
                );
                if inspect {
                    let parts: Vec<String> = hist
                        .iter()
                        .enumerate()
                        .map(|(c, n)| format!("{c}:{n}"))
                        .collect();
                    println!("         {}", parts.join(" "));
                }
            }
            Ok(())
        }
    }
}
