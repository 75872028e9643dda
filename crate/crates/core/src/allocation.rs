//! Antenna-allocation search spaces and the four search strategies.
//!
//! An allocation `{m_1, ..., m_N}` assigns `m_n ≥ 1` antennas to sub-array
//! `n` with `Σ m_n = N_r`. The exhaustive space is every such composition.
//! The reduced space keeps only non-decreasing ones, and the early-terminated
//! search walks the reduced space ordered by the spread metric
//! `π(Ψ) = Π (|m_{n+1} - m_n| + 1)`, most spread-out first.
//!
//! Every strategy first sorts the channel rows by decreasing norm, then runs
//! factorized combining on each candidate it examines.

use std::cmp::Reverse;

use crate::channel::{order_rows_desc_norm, ChannelMatrix};
use crate::combiner::{assemble, check_inputs, combining_step, Allocation, CombiningResult, PhaseSet, Step};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::metrics::achievable_rate;

fn check_dims(nr: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sub-array".into()));
    }
    if n > nr {
        return Err(Error::EmptySearchSpace { nr, n });
    }
    Ok(())
}

/// `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Lexicographic stream of all compositions of `N_r` into `N` positive parts.
#[derive(Debug, Clone)]
pub struct Compositions {
    nr: usize,
    parts: Vec<usize>,
    done: bool,
}

impl Iterator for Compositions {
    type Item = Allocation;

    fn next(&mut self) -> Option<Allocation> {
        if self.done {
            return None;
        }
        let out = Allocation::new(self.parts.clone()).ok();
        let n = self.parts.len();
        // Rightmost position whose increment still leaves one antenna for
        // every later sub-array.
        let mut suffix = self.parts[n - 1];
        let mut advanced = false;
        for i in (0..n.saturating_sub(1)).rev() {
            if suffix > n - 1 - i {
                self.parts[i] += 1;
                for p in &mut self.parts[i + 1..n - 1] {
                    *p = 1;
                }
                let head: usize = self.parts[..n - 1].iter().sum();
                self.parts[n - 1] = self.nr - head;
                advanced = true;
                break;
            }
            suffix += self.parts[i];
        }
        if !advanced {
            self.done = true;
        }
        out
    }
}

/// All of `S`, in lexicographic order.
pub fn enumerate_compositions(nr: usize, n: usize) -> Result<Compositions> {
    check_dims(nr, n)?;
    let mut parts = vec![1; n];
    parts[n - 1] = nr - (n - 1);
    Ok(Compositions { nr, parts, done: false })
}

/// Lexicographic stream of non-decreasing compositions (integer partitions
/// of `N_r` into exactly `N` parts, smallest part first).
#[derive(Debug, Clone)]
pub struct Partitions {
    nr: usize,
    parts: Vec<usize>,
    done: bool,
}

impl Iterator for Partitions {
    type Item = Allocation;

    fn next(&mut self) -> Option<Allocation> {
        if self.done {
            return None;
        }
        let out = Allocation::new(self.parts.clone()).ok();
        let n = self.parts.len();
        let mut advanced = false;
        let mut head: usize = self.parts[..n.saturating_sub(1)].iter().sum();
        for i in (0..n.saturating_sub(1)).rev() {
            head -= self.parts[i];
            let v = self.parts[i] + 1;
            let fill = v * (n - 1 - i);
            if head + fill < self.nr && self.nr - head - fill >= v {
                for p in &mut self.parts[i..n - 1] {
                    *p = v;
                }
                self.parts[n - 1] = self.nr - head - fill;
                advanced = true;
                break;
            }
        }
        if !advanced {
            self.done = true;
        }
        out
    }
}

/// All of `S_r`, in lexicographic order.
pub fn enumerate_partitions_nondecreasing(nr: usize, n: usize) -> Result<Partitions> {
    check_dims(nr, n)?;
    let mut parts = vec![1; n];
    parts[n - 1] = nr - (n - 1);
    Ok(Partitions { nr, parts, done: false })
}

/// Spread of an allocation: `Π_{n<N} (|m_{n+1} - m_n| + 1)`.
pub fn pi_metric(alloc: &Allocation) -> u128 {
    alloc
        .parts()
        .windows(2)
        .map(|w| (w[0].abs_diff(w[1]) + 1) as u128)
        .product()
}

/// Stable sort by non-increasing [`pi_metric`].
pub fn order_by_pi_desc<I: IntoIterator<Item = Allocation>>(space: I) -> Vec<Allocation> {
    let mut v: Vec<(u128, Allocation)> = space.into_iter().map(|a| (pi_metric(&a), a)).collect();
    v.sort_by_key(|(pi, _)| Reverse(*pi));
    v.into_iter().map(|(_, a)| a).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceVariant {
    /// `S`: every composition.
    Full,
    /// `S_r`: non-decreasing compositions.
    Nondecreasing,
    /// `S_r` sorted by decreasing spread.
    PiOrdered,
}

/// A candidate set over which an allocation search runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSpace {
    pub nr: usize,
    pub n: usize,
    pub variant: SpaceVariant,
}

impl SearchSpace {
    pub fn new(nr: usize, n: usize, variant: SpaceVariant) -> Result<Self> {
        check_dims(nr, n)?;
        Ok(SearchSpace { nr, n, variant })
    }

    pub fn candidates(&self) -> Box<dyn Iterator<Item = Allocation>> {
        match self.variant {
            SpaceVariant::Full => Box::new(enumerate_compositions(self.nr, self.n).expect("validated")),
            SpaceVariant::Nondecreasing => {
                Box::new(enumerate_partitions_nondecreasing(self.nr, self.n).expect("validated"))
            }
            SpaceVariant::PiOrdered => Box::new(
                order_by_pi_desc(enumerate_partitions_nondecreasing(self.nr, self.n).expect("validated")).into_iter(),
            ),
        }
    }

    pub fn size(&self) -> usize {
        match self.variant {
            SpaceVariant::Full => binomial(self.nr as u64 - 1, self.n as u64 - 1) as usize,
            _ => enumerate_partitions_nondecreasing(self.nr, self.n)
                .expect("validated")
                .count(),
        }
    }

    pub fn contains(&self, alloc: &Allocation) -> bool {
        alloc.num_subarrays() == self.n
            && alloc.total() == self.nr
            && (self.variant == SpaceVariant::Full || alloc.is_nondecreasing())
    }
}

/// Result of one allocation search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub allocation: Allocation,
    pub result: CombiningResult,
    /// Determinant-form rate of the chosen combiner on [`Self::channel`].
    pub rate: f64,
    /// Number of candidates passed through factorized combining.
    pub candidates_examined: usize,
    /// The channel the combiner was designed for (row-ordered for UESA).
    pub channel: ChannelMatrix,
}

struct Evaluated {
    allocation: Allocation,
    result: CombiningResult,
    rate: f64,
}

/// Runs factorized combining on successive candidates, reusing the
/// recursion state of the leading sub-arrays a candidate shares with the
/// previous one. Results are identical to calling
/// [`factorized_combining`] on each candidate.
struct Evaluator<'a> {
    h: &'a ChannelMatrix,
    rho: f64,
    phase_set: &'a PhaseSet,
    parts: Vec<usize>,
    steps: Vec<Step>,
}

impl<'a> Evaluator<'a> {
    fn new(h: &'a ChannelMatrix, rho: f64, phase_set: &'a PhaseSet) -> Self {
        Evaluator {
            h,
            rho,
            phase_set,
            parts: Vec::new(),
            steps: Vec::new(),
        }
    }

    fn evaluate(&mut self, alloc: Allocation) -> Result<Evaluated> {
        check_inputs(self.h, &alloc, self.rho)?;
        let k = self.h.num_users();
        let shared = self.parts.iter().zip(alloc.parts()).take_while(|(a, b)| a == b).count();
        self.steps.truncate(shared);
        self.parts.clear();
        self.parts.extend_from_slice(alloc.parts());

        let hm = self.h.entries();
        let offsets = alloc.offsets();
        for (&start, &m) in offsets.iter().zip(alloc.parts()).skip(shared) {
            let qinv = self
                .steps
                .last()
                .map_or_else(|| CMat::identity(k, k), |s| s.qinv.clone());
            let step = combining_step(hm, start, m, qinv, self.rho, Some(self.phase_set))?;
            self.steps.push(step);
        }
        let result = assemble(&alloc, k, &self.steps)?;
        let rate = achievable_rate(self.h, &result.combiner, self.rho)?;
        Ok(Evaluated {
            allocation: alloc,
            result,
            rate,
        })
    }
}

#[cfg(test)]
fn evaluate(h: &ChannelMatrix, alloc: Allocation, rho: f64, phase_set: &PhaseSet) -> Result<Evaluated> {
    Evaluator::new(h, rho, phase_set).evaluate(alloc)
}

fn outcome(best: Evaluated, examined: usize, channel: ChannelMatrix) -> SearchOutcome {
    SearchOutcome {
        allocation: best.allocation,
        result: best.result,
        rate: best.rate,
        candidates_examined: examined,
        channel,
    }
}

/// Best-rate candidate of `space`; the first one wins ties.
fn search_all<I: Iterator<Item = Allocation>>(
    h: ChannelMatrix,
    space: I,
    rho: f64,
    phase_set: &PhaseSet,
) -> Result<SearchOutcome> {
    let mut eval = Evaluator::new(&h, rho, phase_set);
    let mut best: Option<Evaluated> = None;
    let mut examined = 0;
    for alloc in space {
        let cand = eval.evaluate(alloc)?;
        examined += 1;
        if best.as_ref().is_none_or(|b| cand.rate > b.rate) {
            best = Some(cand);
        }
    }
    let best = best.ok_or(Error::EmptySearchSpace {
        nr: h.num_rx_antennas(),
        n: 0,
    })?;
    Ok(outcome(best, examined, h))
}

/// Conventional equal sub-arrays on the channel as given (no row ordering).
pub fn esa(h: &ChannelMatrix, num_subarrays: usize, rho: f64, phase_set: &PhaseSet) -> Result<SearchOutcome> {
    let alloc = Allocation::equal(h.num_rx_antennas(), num_subarrays)?;
    let best = Evaluator::new(h, rho, phase_set).evaluate(alloc)?;
    Ok(outcome(best, 1, h.clone()))
}

/// Exhaustive search over every composition.
pub fn uesa_es(h: &ChannelMatrix, num_subarrays: usize, rho: f64, phase_set: &PhaseSet) -> Result<SearchOutcome> {
    let space = enumerate_compositions(h.num_rx_antennas(), num_subarrays)?;
    search_all(order_rows_desc_norm(h), space, rho, phase_set)
}

/// Exhaustive search restricted to non-decreasing allocations.
pub fn uesa_res(h: &ChannelMatrix, num_subarrays: usize, rho: f64, phase_set: &PhaseSet) -> Result<SearchOutcome> {
    let space = enumerate_partitions_nondecreasing(h.num_rx_antennas(), num_subarrays)?;
    search_all(order_rows_desc_norm(h), space, rho, phase_set)
}

/// Reduced search in decreasing-spread order that stops after `count_max`
/// consecutive candidates fail to beat the incumbent.
pub fn uesa_res_et(
    h: &ChannelMatrix,
    num_subarrays: usize,
    rho: f64,
    phase_set: &PhaseSet,
    count_max: usize,
) -> Result<SearchOutcome> {
    if count_max == 0 {
        return Err(Error::InvalidInput("count_max must be >= 1".into()));
    }
    let space = order_by_pi_desc(enumerate_partitions_nondecreasing(h.num_rx_antennas(), num_subarrays)?);
    let h = order_rows_desc_norm(h);

    let mut eval = Evaluator::new(&h, rho, phase_set);
    let mut best: Option<Evaluated> = None;
    let mut examined = 0;
    let mut count = 0;
    for alloc in space {
        if count >= count_max {
            break;
        }
        let cand = eval.evaluate(alloc)?;
        examined += 1;
        match &best {
            Some(b) if cand.rate <= b.rate => count += 1,
            _ => {
                best = Some(cand);
                count = 0;
            }
        }
    }
    let best = best.expect("reduced space is never empty");
    Ok(outcome(best, examined, h))
}

/// Greedy allocation refinement driven by the per-sub-array dominant
/// eigenvalues.
///
/// Starts from the most spread-out non-decreasing allocation. Each outer
/// iteration computes `Δ_n = μ_1(n) - mean(μ_1)` from the latest evaluated
/// candidate, then walks `n = 1..N`: sub-arrays with `Δ_n < gamma` gain an
/// antenna and the last sub-array absorbs the difference. Every intermediate
/// allocation that stays non-decreasing is evaluated and kept when it raises
/// `Σ μ_1(n)`. The walk stops for good once `m_N ≤ m_{N-1}`.
pub fn fast_uesa(
    h: &ChannelMatrix,
    num_subarrays: usize,
    rho: f64,
    phase_set: &PhaseSet,
    max_outer_iters: usize,
    gamma: f64,
) -> Result<SearchOutcome> {
    if max_outer_iters == 0 {
        return Err(Error::InvalidInput("Fast-UESA needs at least one iteration".into()));
    }
    if gamma.is_nan() {
        return Err(Error::InvalidInput("gamma must not be NaN".into()));
    }
    let nr = h.num_rx_antennas();
    let n = num_subarrays;
    let head = order_by_pi_desc(enumerate_partitions_nondecreasing(nr, n)?)
        .into_iter()
        .next()
        .expect("reduced space is never empty");
    let h = order_rows_desc_norm(h);

    let mut eval = Evaluator::new(&h, rho, phase_set);
    let first = eval.evaluate(head)?;
    let mut examined = 1;
    let mut tau = first.result.sum_mu1();
    let mut current_mu = first.result.mu1.clone();
    let mut psi = first.allocation.parts().to_vec();
    let mut best = first;

    if n < 2 {
        return Ok(outcome(best, examined, h));
    }

    'outer: for _ in 0..max_outer_iters {
        let mean = current_mu.iter().sum::<f64>() / n as f64;
        let delta: Vec<f64> = current_mu.iter().map(|mu| mu - mean).collect();
        for (idx, &d) in delta.iter().enumerate() {
            if d < gamma {
                psi[idx] += 1;
            }
            let head_sum: usize = psi[..n - 1].iter().sum();
            if head_sum >= nr || nr - head_sum <= psi[n - 2] {
                break 'outer;
            }
            psi[n - 1] = nr - head_sum;

            let alloc = Allocation::new(psi.clone())?;
            if !alloc.is_nondecreasing() {
                continue;
            }
            let cand = eval.evaluate(alloc)?;
            examined += 1;
            current_mu.clone_from(&cand.result.mu1);
            let score = cand.result.sum_mu1();
            if score > tau {
                tau = score;
                best = cand;
            }
        }
    }
    Ok(outcome(best, examined, h))
}
