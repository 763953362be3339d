use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gossipopt::dataio::{synth_classification, write_libsvm};
use gossipopt::experiment::{run_experiment, spectrum_report, ExperimentConfig};
use gossipopt::topology::TopologySpec;
use gossipopt::Error;

#[derive(Parser)]
#[command(name = "gossipopt", version, about = "Decentralized optimization over gossip networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver of an experiment config and write CSV traces.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the spectral quantities of a graph as JSON.
    Spectrum {
        /// Graph descriptor, e.g. '{"kind":"ring","n":10}'.
        #[arg(long)]
        graph: String,
    },
    /// Write a synthetic classification dataset in LIBSVM format.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Synth,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        _ => 1,
    }
}

fn execute(cli: Cli) -> gossipopt::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg)?;
            for s in &summary.solvers {
                println!(
                    "{:<9} iters {:>7}  grad_evals {:>7}  comm_rounds {:>8}  sq_dist {:.3e}",
                    s.algorithm.name(),
                    s.iterations,
                    s.grad_evals,
                    s.comm_rounds,
                    s.final_sq_dist
                );
            }
        }
        Command::Spectrum { graph } => {
            let spec: TopologySpec =
                serde_json::from_str(&graph).map_err(|e| Error::InvalidGraph(format!("descriptor: {e}")))?;
            let report = spectrum_report(&spec)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::GenData { kind: DataKind::Synth, n, d, seed, out } => {
            let ds = synth_classification(n, d, seed)?;
            let mut sink = BufWriter::new(fs::File::create(out)?);
            write_libsvm(&ds, &mut sink)?;
            sink.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
