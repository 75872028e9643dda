use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uesa::allocation::{enumerate_partitions_nondecreasing, order_by_pi_desc, pi_metric, SearchSpace, SpaceVariant};
use uesa::channel::ChannelMatrix;
use uesa::combiner::PhaseSet;
use uesa::harness::{run_sweep, run_validation, write_csv, ExperimentConfig, ValidateOptions};
use uesa::{Error, Result};

#[derive(Parser)]
#[command(name = "uesa", version, about = "Unequal sub-array hybrid combining simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (nr, n, snr) cell and print its CSV row.
    Simulate(RunArgs),
    /// Run the full nr x n x snr grid.
    Sweep(RunArgs),
    /// Print search-space sizes and the most spread-out allocation.
    Enumerate {
        #[arg(long, value_delimiter = ',', default_value = "32")]
        nr: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "4")]
        n: Vec<usize>,
    },
    /// Run the invariant suite.
    Validate {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        q_levels: usize,
        /// Plain-text channel fixture (`N_r K` header, then `re im` pairs).
        #[arg(long)]
        channel: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// key=value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    nr: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    q_levels: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    count_max: Option<usize>,
    #[arg(long)]
    fast_iters: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    heavy: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text =
                fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.merge_kv(&text)?;
        }
        if let Some(v) = &self.nr {
            cfg.nr = v.clone();
        }
        if let Some(v) = &self.n {
            cfg.n = v.clone();
        }
        if let Some(v) = self.k {
            cfg.k = Some(v);
        }
        if let Some(v) = &self.snr_db {
            cfg.snr_db = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.algorithm {
            cfg.algorithm = v.parse()?;
        }
        if let Some(v) = self.q_levels {
            cfg.q_levels = v;
        }
        if let Some(v) = self.paths {
            cfg.paths = v;
        }
        if let Some(v) = self.count_max {
            cfg.count_max = Some(v);
        }
        if let Some(v) = self.fast_iters {
            cfg.fast_iters = Some(v);
        }
        if let Some(v) = self.gamma {
            cfg.gamma = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        cfg.heavy |= self.heavy;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let records = run_sweep(cfg)?;
    let mut buf = Vec::new();
    write_csv(&mut buf, cfg, &records).map_err(|e| Error::Config(e.to_string()))?;
    match &cfg.out {
        Some(path) => fs::write(path, &buf).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => io::stdout().write_all(&buf).map_err(|e| Error::Config(e.to_string())),
    }
}

fn enumerate(nrs: &[usize], ns: &[usize]) -> Result<()> {
    for &nr in nrs {
        for &n in ns {
            let full = SearchSpace::new(nr, n, SpaceVariant::Full)?.size();
            let reduced = SearchSpace::new(nr, n, SpaceVariant::Nondecreasing)?.size();
            let head = order_by_pi_desc(enumerate_partitions_nondecreasing(nr, n)?)
                .into_iter()
                .next()
                .expect("reduced space is never empty");
            println!(
                "nr={nr} n={n} |S|={full} |S_r|={reduced} head={head} pi={}",
                pi_metric(&head)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => args.resolve().and_then(|cfg| {
            if cfg.cells().len() != 1 {
                return Err(Error::Config(
                    "simulate runs a single cell; give one value each for --nr, --n and --snr-db (or use sweep)".into(),
                ));
            }
            run(&cfg)
        }),
        Command::Sweep(args) => args.resolve().and_then(|cfg| run(&cfg)),
        Command::Enumerate { nr, n } => enumerate(&nr, &n),
        Command::Validate {
            instances,
            seed,
            q_levels,
            channel,
        } => (|| {
            let channel = match channel {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                    Some(ChannelMatrix::from_text(&text)?)
                }
                None => None,
            };
            let opts = ValidateOptions {
                instances,
                seed,
                phase_set: PhaseSet::new(q_levels)?,
                channel,
                ..Default::default()
            };
            let report = run_validation(&opts)?;
            print!("{report}");
            if report.all_passed() {
                Ok(())
            } else {
                Err(Error::InvalidInput("invariant suite reported failures".into()))
            }
        })(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
