use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig};
use crate::allocation::{esa, fast_uesa, uesa_es, uesa_res, uesa_res_et, SearchOutcome};
use crate::channel::{generate_channel, ChannelMatrix, ChannelParams};
use crate::combiner::{Allocation, PhaseSet};
use crate::error::{Error, Result};
use crate::metrics::{
    energy_efficiency, power_consumption, snr_db_to_linear, upper_bound_ub, upper_bound_ub1, Architecture, PowerModel,
};

/// One aggregated CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub nr: usize,
    pub n: usize,
    pub k: usize,
    pub snr_db: f64,
    pub algorithm: Algorithm,
    pub trial_count: usize,
    pub mean_rate: f64,
    pub mean_ub1: f64,
    pub mean_ub: f64,
    pub power_mw: f64,
    pub mean_ee: f64,
    pub mean_candidates_examined: f64,
    pub seed: u64,
}

pub const CSV_COLUMNS: &str =
    "nr,n,k,snr_db,algorithm,trial_count,mean_rate,mean_ub1,mean_ub,power_mw,mean_ee,mean_candidates_examined,seed";

/// Per-realization numbers behind a [`SweepRecord`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub allocation: Allocation,
    pub rate: f64,
    pub mu1: Vec<f64>,
    pub ub1: f64,
    pub ub: f64,
    pub energy_efficiency: f64,
    pub candidates_examined: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_4768_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Channel seed for trial `trial` of cell `cell`.
///
/// For a fixed base seed this is a bijection of `(cell, trial)` as long as
/// both fit in 32 bits, so no two trials of a sweep share a channel.
pub fn trial_seed(seed: u64, cell: usize, trial: usize) -> u64 {
    let packed = ((cell as u64) << 32) | (trial as u64 & 0xFFFF_FFFF);
    splitmix64(splitmix64(seed) ^ splitmix64(packed))
}

fn architecture(algorithm: Algorithm) -> Architecture {
    match algorithm {
        Algorithm::Esa => Architecture::Esa,
        _ => Architecture::Uesa,
    }
}

/// Runs the configured algorithm on one channel realization.
pub fn run_algorithm(
    config: &ExperimentConfig,
    h: &ChannelMatrix,
    n: usize,
    rho: f64,
    phase_set: &PhaseSet,
) -> Result<SearchOutcome> {
    match config.algorithm {
        Algorithm::Esa => esa(h, n, rho, phase_set),
        Algorithm::UesaEs => uesa_es(h, n, rho, phase_set),
        Algorithm::UesaRes => uesa_res(h, n, rho, phase_set),
        Algorithm::UesaResEt => {
            let c = config
                .count_max
                .ok_or_else(|| Error::Config("count_max missing".into()))?;
            uesa_res_et(h, n, rho, phase_set, c)
        }
        Algorithm::FastUesa => {
            let i = config
                .fast_iters
                .ok_or_else(|| Error::Config("fast_iters missing".into()))?;
            let g = config.gamma.ok_or_else(|| Error::Config("gamma missing".into()))?;
            fast_uesa(h, n, rho, phase_set, i, g)
        }
    }
}

/// All trials of one cell, in trial order. `cell` is the cell's position in
/// [`ExperimentConfig::cells`].
pub fn run_cell_trials(
    config: &ExperimentConfig,
    cell: usize,
    nr: usize,
    n: usize,
    snr_db: f64,
) -> Result<Vec<TrialOutcome>> {
    let k = config.users_for(n);
    let params = ChannelParams::new(nr, k).with_paths(config.paths);
    params.validate()?;
    let phase_set = PhaseSet::new(config.q_levels)?;
    let rho = snr_db_to_linear(snr_db);
    let power = power_consumption(nr, n, &PowerModel::default(), architecture(config.algorithm));

    (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, cell, t);
            let h = generate_channel(&params, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let out = run_algorithm(config, &h, n, rho, &phase_set)?;
            let mu1 = out.result.mu1.clone();
            Ok(TrialOutcome {
                seed,
                allocation: out.allocation,
                rate: out.rate,
                ub1: upper_bound_ub1(&mu1, rho),
                ub: upper_bound_ub(&mu1, rho),
                energy_efficiency: energy_efficiency(out.rate, power)?,
                candidates_examined: out.candidates_examined,
                mu1,
            })
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>, count: usize) -> f64 {
    xs.sum::<f64>() / count as f64
}

/// Runs every cell and averages in trial order, so results do not depend on
/// thread scheduling.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let mut records = Vec::new();
    for (cell, (nr, n, snr_db)) in config.cells().into_iter().enumerate() {
        let trials = run_cell_trials(config, cell, nr, n, snr_db)?;
        let count = trials.len();
        records.push(SweepRecord {
            nr,
            n,
            k: config.users_for(n),
            snr_db,
            algorithm: config.algorithm,
            trial_count: count,
            mean_rate: mean(trials.iter().map(|t| t.rate), count),
            mean_ub1: mean(trials.iter().map(|t| t.ub1), count),
            mean_ub: mean(trials.iter().map(|t| t.ub), count),
            power_mw: power_consumption(nr, n, &PowerModel::default(), architecture(config.algorithm)),
            mean_ee: mean(trials.iter().map(|t| t.energy_efficiency), count),
            mean_candidates_examined: mean(trials.iter().map(|t| t.candidates_examined as f64), count),
            seed: config.seed,
        });
    }
    Ok(records)
}

fn sci(x: f64) -> String {
    format!("{x:.8e}")
}

impl SweepRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.nr,
            self.n,
            self.k,
            sci(self.snr_db),
            self.algorithm,
            self.trial_count,
            sci(self.mean_rate),
            sci(self.mean_ub1),
            sci(self.mean_ub),
            sci(self.power_mw),
            sci(self.mean_ee),
            sci(self.mean_candidates_examined),
            self.seed
        )
    }
}

/// CSV with the resolved configuration as `#` comments above the header.
pub fn write_csv<W: Write>(out: &mut W, config: &ExperimentConfig, records: &[SweepRecord]) -> io::Result<()> {
    writeln!(out, "# uesa sweep v{}", env!("CARGO_PKG_VERSION"))?;
    for line in config.to_kv().lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{CSV_COLUMNS}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
