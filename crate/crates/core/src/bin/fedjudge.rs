use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fedjudge::ledger::{Chain, Verdict};
use fedjudge::sim::experiment::{
    scaling_records, summarize_scaling, sweep_clients, write_json, write_outputs, CLIENT_SWEEP,
};
use fedjudge::sim::metrics::write_csv;
use fedjudge::sim::{run_experiment, sweep_malice, ExperimentConfig, ExperimentOutput};

/// Federated learning simulator with judge-model screening of updates.
#[derive(Parser)]
#[command(name = "fedjudge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment over every seed.
    Run(RunArgs),
    /// Sweep the malicious fraction, plus one unscreened run at the top fraction.
    SweepMalice(RunArgs),
    /// Time judge creation across client counts.
    SweepClients {
        #[command(flatten)]
        run: RunArgs,
        /// Client counts to time.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
    },
    /// Check links and signatures of an exported chain log.
    VerifyChain {
        path: PathBuf,
    },
    /// Print a chain log as one JSON record per block.
    Export {
        path: PathBuf,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    malicious_frac: Option<f64>,
    #[arg(long)]
    flip_frac: Option<f64>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u32>,
}

impl RunArgs {
    fn load(&self) -> fedjudge::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(n) = self.clients {
            cfg.n_clients = n;
        }
        if let Some(f) = self.malicious_frac {
            cfg.malicious_fraction = f;
        }
        if let Some(f) = self.flip_frac {
            cfg.flip_fraction = f;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("fedjudge: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<(), String> {
    let text = |e: fedjudge::Error| e.to_string();
    match command {
        Command::Run(args) => {
            let cfg = args.load().map_err(text)?;
            let out = run_experiment(&cfg).map_err(text)?;
            finish(&args.out, &[out])
        }
        Command::SweepMalice(args) => {
            let cfg = args.load().map_err(text)?;
            let outs = sweep_malice(&cfg).map_err(text)?;
            finish(&args.out, &outs)
        }
        Command::SweepClients { run, counts } => {
            let cfg = run.load().map_err(text)?;
            let counts = counts.unwrap_or_else(|| CLIENT_SWEEP.to_vec());
            let points = sweep_clients(&cfg, &counts).map_err(text)?;
            std::fs::create_dir_all(&run.out).map_err(|e| e.to_string())?;
            let file = std::fs::File::create(run.out.join("metrics.csv")).map_err(|e| e.to_string())?;
            write_csv(file, &scaling_records(&cfg, &points)).map_err(text)?;
            let summary = json!({ "experiments": [summarize_scaling(&cfg, &points)] });
            write_json(&run.out.join("summary.json"), &summary).map_err(text)?;
            println!("wrote {}", run.out.display());
            Ok(())
        }
        Command::VerifyChain { path } => {
            let chain = read_chain(&path)?;
            match chain.verify() {
                Verdict::Valid => {
                    println!("{}: valid, {} blocks", path.display(), chain.len());
                    Ok(())
                }
                Verdict::Invalid { index, cause } => {
                    Err(format!("{}: block {index} is invalid: {cause}", path.display()))
                }
            }
        }
        Command::Export { path, out } => {
            let dump = read_chain(&path)?.export_text();
            match out {
                Some(p) => std::fs::write(&p, dump).map_err(|e| format!("{}: {e}", p.display())),
                None => {
                    print!("{dump}");
                    Ok(())
                }
            }
        }
    }
}

fn read_chain(path: &Path) -> Result<Chain, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Chain::import_binary(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn finish(dir: &Path, outputs: &[ExperimentOutput]) -> Result<(), String> {
    write_outputs(dir, outputs).map_err(|e| e.to_string())?;
    println!("wrote {}", dir.display());
    match outputs.iter().find_map(|o| o.first_error().map(|e| format!("{}: {e}", o.config.name))) {
        Some(e) => Err(format!("run stopped early, {e}")),
        None => Ok(()),
    }
}
