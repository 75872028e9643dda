//! Seeded invariant suite behind the `validate` subcommand.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocation::{binomial, enumerate_compositions, enumerate_partitions_nondecreasing};
use crate::channel::{generate_channel, order_rows_desc_norm, ChannelMatrix, ChannelParams};
use crate::combiner::{factorized_combining_with, Allocation, CombiningResult, PhaseSet, WeightQuantizer};
use crate::error::Result;
use crate::linalg::{dominant_eigenpair, log2_det_hpd, CMat};
use crate::metrics::{achievable_rate, naive_log2_det, upper_bound_ub, upper_bound_ub1};

/// Outcome of one invariant over all instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantLine {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    pub max_violation: f64,
}

impl fmt::Display for InvariantLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} instances={:<5} max_violation={:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.max_violation
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub lines: Vec<InvariantLine>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn line(&self, name: &str) -> Option<&InvariantLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

pub struct ValidateOptions<'a> {
    pub instances: usize,
    pub seed: u64,
    pub phase_set: PhaseSet,
    /// Replaces the grid quantizer; used to check that the suite catches a
    /// broken one.
    pub quantizer: Option<&'a dyn WeightQuantizer>,
    /// Fixed channel to use instead of random draws.
    pub channel: Option<ChannelMatrix>,
}

impl Default for ValidateOptions<'_> {
    fn default() -> Self {
        ValidateOptions {
            instances: 50,
            seed: 0x5eed,
            phase_set: PhaseSet::default(),
            quantizer: None,
            channel: None,
        }
    }
}

struct Tally {
    name: &'static str,
    instances: usize,
    worst: f64,
    failed: bool,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            instances: 0,
            worst: 0.0,
            failed: false,
        }
    }

    /// Records one instance; `violation` of zero or less means satisfied,
    /// and `ok` decides pass/fail independently (for strict inequalities).
    fn record(&mut self, violation: f64, ok: bool) {
        self.instances += 1;
        if violation.is_nan() || !ok {
            self.failed = true;
        }
        if violation.is_nan() {
            self.worst = f64::NAN;
        } else if !self.worst.is_nan() {
            self.worst = self.worst.max(violation.max(0.0));
        }
    }

    fn within(&mut self, violation: f64, tol: f64) {
        self.record(violation, violation <= tol);
    }

    fn finish(self) -> InvariantLine {
        InvariantLine {
            name: self.name,
            passed: !self.failed && self.instances > 0,
            instances: self.instances,
            max_violation: self.worst,
        }
    }
}

struct Instance {
    h: ChannelMatrix,
    alloc: Allocation,
    rho: f64,
    quantized: bool,
}

fn random_allocation<R: Rng>(rng: &mut R, nr: usize, n: usize) -> Allocation {
    // Stars and bars: choose n-1 distinct cut points in 1..nr.
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, nr - 1, n - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(n);
    let mut prev = 0;
    for c in cuts {
        parts.push(c - prev);
        prev = c;
    }
    parts.push(nr - prev);
    Allocation::new(parts).expect("cuts are distinct")
}

fn draw_instance(rng: &mut ChaCha8Rng, fixture: Option<&ChannelMatrix>, i: usize) -> Result<Instance> {
    let h = match fixture {
        Some(h) => h.clone(),
        None => {
            let nr = [8, 16, 32, 64][rng.random_range(0..4)];
            let k = [2, 4][rng.random_range(0..2)];
            let h = generate_channel(&ChannelParams::new(nr, k), rng)?;
            if rng.random_bool(0.5) {
                order_rows_desc_norm(&h)
            } else {
                h
            }
        }
    };
    let nr = h.num_rx_antennas();
    let n = rng.random_range(1..=nr.min(h.num_users()).max(1));
    let alloc = random_allocation(rng, nr, n);
    let snr_db: f64 = rng.random_range(-10.0..20.0);
    Ok(Instance {
        h,
        alloc,
        rho: 10f64.powf(snr_db / 10.0),
        quantized: i.is_multiple_of(2),
    })
}

fn combine(inst: &Instance, opts: &ValidateOptions<'_>) -> Result<CombiningResult> {
    let q: Option<&dyn WeightQuantizer> = if inst.quantized {
        Some(opts.quantizer.unwrap_or(&opts.phase_set))
    } else {
        None
    };
    factorized_combining_with(&inst.h, &inst.alloc, inst.rho, q)
}

fn block(h: &ChannelMatrix, start: usize, m: usize) -> CMat {
    h.entries().rows(start, m).into_owned()
}

/// Runs every invariant on `opts.instances` seeded instances.
pub fn run_validation(opts: &ValidateOptions<'_>) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lemma1 = Tally::new("lemma1_equivalence");
    let mut sandwich = Tally::new("sandwich_bounds");
    let mut subrate = Tally::new("subrate_eigen_bound");
    let mut eig = Tally::new("eigenpair_residual");
    let mut trace_mono = Tally::new("trace_monotone");
    let mut trace_step = Tally::new("trace_step_below_one");
    let mut feasible = Tally::new("quantized_feasibility");
    let mut gram = Tally::new("combiner_orthonormal");
    let mut qerr = Tally::new("quantization_phase_error");
    let mut logdet = Tally::new("logdet_vs_determinant");
    let mut ordering = Tally::new("row_ordering");

    for i in 0..opts.instances {
        let inst = draw_instance(&mut rng, opts.channel.as_ref(), i)?;
        let res = combine(&inst, opts)?;
        let rate = achievable_rate(&inst.h, &res.combiner, inst.rho)?;

        lemma1.within((res.total_rate - rate).abs(), 1e-9);

        let ub1 = upper_bound_ub1(&res.mu1, inst.rho);
        let ub = upper_bound_ub(&res.mu1, inst.rho);
        sandwich.within((rate - ub1).max(ub1 - ub), 1e-9);

        let worst_sub = res
            .sub_rates
            .iter()
            .zip(&res.mu1)
            .map(|(r, mu)| r - (1.0 + inst.rho * mu).log2())
            .fold(f64::NEG_INFINITY, f64::max);
        subrate.within(worst_sub, 1e-9);

        // Full T_n eigenpairs along the recursion, rebuilt from the combiner.
        let mut qinv = CMat::identity(inst.h.num_users(), inst.h.num_users());
        let mut worst_eig = 0.0f64;
        for ((start, &m), w) in inst
            .alloc
            .offsets()
            .into_iter()
            .zip(inst.alloc.parts())
            .zip(res.combiner.weights())
        {
            let hn = block(&inst.h, start, m);
            let t = &hn * &qinv * hn.adjoint();
            let (mu, u) = dominant_eigenpair(&t)?;
            let resid = (&t * &u - &u * Complex64::from(mu)).norm();
            worst_eig = worst_eig.max(resid / mu.max(1.0));
            let wv = CMat::from_column_slice(m, 1, w);
            let g = hn.adjoint() * wv;
            qinv = crate::linalg::rank_one_inverse_update(&qinv, &(&g * g.adjoint()), inst.rho)?;
        }
        eig.within(worst_eig, 1e-9);

        let rises = res
            .qinv_traces
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        trace_mono.within(rises, 1e-12);
        let max_drop = res.trace_drops.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        trace_step.record(max_drop - 1.0, max_drop < 1.0);

        gram.within(res.combiner.gram_deviation(), 1e-12);

        if inst.quantized {
            feasible.within(res.combiner.feasibility_violation(&opts.phase_set), 1e-12);
            let bound = PI / opts.phase_set.levels() as f64;
            let mut worst = 0.0f64;
            for (u, w) in res.unquantized.iter().zip(res.combiner.weights()) {
                for (a, b) in u.iter().zip(w) {
                    if a.norm() > 0.0 {
                        worst = worst.max((b * a.conj()).arg().abs() - bound);
                    }
                }
            }
            qerr.within(worst, 1e-12);
        }

        let k = inst.h.num_users().min(4);
        let hk = inst.h.entries().columns(0, k).into_owned();
        let a = CMat::identity(k, k) + hk.adjoint() * &hk * Complex64::from(inst.rho);
        logdet.within((log2_det_hpd(&a)? - naive_log2_det(&a)).abs(), 1e-9);

        let sorted = order_rows_desc_norm(&inst.h);
        let mut v = 0.0f64;
        for r in 1..sorted.num_rx_antennas() {
            v = v.max(sorted.row_norm(r) - sorted.row_norm(r - 1));
        }
        let perm = sorted.row_permutation().expect("ordering records a permutation");
        let base = inst.h.generation_order();
        for (out_row, &src) in perm.iter().enumerate() {
            for c in 0..inst.h.num_users() {
                if sorted.entries()[(out_row, c)] != base.entries()[(src, c)] {
                    v = f64::INFINITY;
                }
            }
        }
        ordering.within(v, 0.0);
    }

    let mut enumeration = Tally::new("enumeration_counts");
    for nr in 1..=20usize {
        for n in 1..=nr {
            let comps: Vec<Allocation> = enumerate_compositions(nr, n)?.collect();
            let parts: Vec<Allocation> = enumerate_partitions_nondecreasing(nr, n)?.collect();
            let filtered: Vec<Allocation> = comps.iter().filter(|a| a.is_nondecreasing()).cloned().collect();
            let bad = (comps.len() as u128 != binomial(nr as u64 - 1, n as u64 - 1)) || filtered != parts;
            enumeration.within(if bad { 1.0 } else { 0.0 }, 0.0);
        }
    }
    for (nr, n, s, sr) in [(32, 4, 4495, 249), (64, 4, 39711, 1906)] {
        let bad =
            enumerate_compositions(nr, n)?.count() != s || enumerate_partitions_nondecreasing(nr, n)?.count() != sr;
        enumeration.within(if bad { 1.0 } else { 0.0 }, 0.0);
    }

    Ok(ValidationReport {
        lines: vec![
            lemma1.finish(),
            sandwich.finish(),
            subrate.finish(),
            eig.finish(),
            trace_mono.finish(),
            trace_step.finish(),
            gram.finish(),
            feasible.finish(),
            qerr.finish(),
            logdet.finish(),
            ordering.finish(),
            enumeration.finish(),
        ],
    })
}
