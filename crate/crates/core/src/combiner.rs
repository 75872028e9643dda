//! Factorization-aided analog combining for (possibly unequal) sub-arrays.
//!
//! The total rate `log2 det(I_K + ρ H^H W W^H H)` of a block-diagonal
//! combiner `W` splits into one sub-rate per sub-array once the sub-arrays are
//! processed in order and each step folds the previous ones into
//!
//! ```text
//! Q_0 = I_K,   Q_n = Q_{n-1} + ρ G_n,   G_n = H_n^H w_n w_n^H H_n,
//! R_n = log2(1 + ρ w_n^H T_n w_n),     T_n = H_n Q_{n-1}^{-1} H_n^H.
//! ```
//!
//! Each `w_n` is the dominant eigenvector of `T_n`, optionally projected onto
//! the constant-modulus, finite-phase feasible set. `Q_n^{-1}` is carried
//! forward with a rank-one update instead of being re-inverted.
//!
//! `T_n` is `m_n x m_n` but has rank at most `K`. Writing `Q_{n-1}^{-1} = L L^H`,
//! its nonzero spectrum equals that of the `K x K` matrix `L^H H_n^H H_n L`, and
//! a dominant eigenvector `v` of the latter maps to `H_n L v`. The combiner
//! works on that reduced form so the cost per sub-array is `O(m_n K^2 + K^3)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Antennas per sub-array, `m_1, ..., m_N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Allocation(Vec<usize>);

impl Allocation {
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("allocation needs at least one sub-array".into()));
        }
        if let Some(i) = parts.iter().position(|&m| m == 0) {
            return Err(Error::InvalidInput(format!("sub-array {} has no antennas", i + 1)));
        }
        Ok(Allocation(parts))
    }

    /// `N` sub-arrays of `N_r / N` antennas each.
    pub fn equal(num_rx_antennas: usize, num_subarrays: usize) -> Result<Self> {
        if num_subarrays == 0 || !num_rx_antennas.is_multiple_of(num_subarrays) {
            return Err(Error::UnsupportedConfiguration(format!(
                "equal sub-arrays need N | N_r, got N_r = {num_rx_antennas}, N = {num_subarrays}"
            )));
        }
        Allocation::new(vec![num_rx_antennas / num_subarrays; num_subarrays])
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn num_subarrays(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }

    /// First antenna row of each sub-array.
    pub fn offsets(&self) -> Vec<usize> {
        self.0
            .iter()
            .scan(0, |acc, &m| {
                let start = *acc;
                *acc += m;
                Some(start)
            })
            .collect()
    }
}

impl std::fmt::Display for Allocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|m| m.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Uniform phase grid `{0, 2π/Q, ..., 2(Q-1)π/Q}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSet {
    levels: usize,
}

impl Default for PhaseSet {
    fn default() -> Self {
        PhaseSet { levels: 16 }
    }
}

impl PhaseSet {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 phase levels, got {levels}"
            )));
        }
        Ok(PhaseSet { levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.levels as f64
    }

    pub fn phase(&self, index: usize) -> f64 {
        self.step() * (index % self.levels) as f64
    }

    /// Grid index closest to the phase of `z`. Ties go to the smaller index and
    /// `z = 0` maps to index 0.
    pub fn nearest_index(&self, z: Complex64) -> usize {
        if z.re == 0.0 && z.im == 0.0 {
            return 0;
        }
        let mut a = z.im.atan2(z.re);
        if a < 0.0 {
            a += 2.0 * PI;
        }
        let x = a / self.step();
        let lo = (x.floor() as usize).min(self.levels - 1);
        let hi = (lo + 1) % self.levels;
        let d_lo = x - lo as f64;
        let d_hi = (lo + 1) as f64 - x;
        const TIE: f64 = 1e-12;
        if (d_lo - d_hi).abs() <= TIE {
            lo.min(hi)
        } else if d_hi < d_lo {
            hi
        } else {
            lo
        }
    }
}

/// Maps an unconstrained unit vector onto the combiner's feasible set.
pub trait WeightQuantizer {
    fn quantize(&self, u: &[Complex64]) -> Vec<Complex64>;
}

impl WeightQuantizer for PhaseSet {
    fn quantize(&self, u: &[Complex64]) -> Vec<Complex64> {
        quantize_phases(u, self)
    }
}

impl<F> WeightQuantizer for F
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    fn quantize(&self, u: &[Complex64]) -> Vec<Complex64> {
        self(u)
    }
}

/// Constant-modulus vector `(1/sqrt(m)) e^{jθ_i}` with each `θ_i` the grid
/// phase nearest to `arg(u_i)`.
pub fn quantize_phases(u: &[Complex64], phase_set: &PhaseSet) -> Vec<Complex64> {
    let amp = 1.0 / (u.len() as f64).sqrt();
    let mut grid: Vec<Option<Complex64>> = vec![None; phase_set.levels()];
    u.iter()
        .map(|&z| {
            let i = phase_set.nearest_index(z);
            *grid[i].get_or_insert_with(|| Complex64::from_polar(amp, phase_set.phase(i)))
        })
        .collect()
}

/// Block-diagonal `N_r x N` analog combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogCombiner {
    allocation: Allocation,
    weights: Vec<Vec<Complex64>>,
}

impl AnalogCombiner {
    pub fn new(allocation: Allocation, weights: Vec<Vec<Complex64>>) -> Result<Self> {
        if weights.len() != allocation.num_subarrays()
            || weights.iter().zip(allocation.parts()).any(|(w, &m)| w.len() != m)
        {
            return Err(Error::InvalidDimension(
                "combiner weights do not match the allocation".into(),
            ));
        }
        Ok(AnalogCombiner { allocation, weights })
    }

    pub fn from_phase_indices(allocation: Allocation, indices: &[Vec<usize>], phase_set: &PhaseSet) -> Result<Self> {
        let weights = indices
            .iter()
            .map(|idx| {
                let amp = 1.0 / (idx.len() as f64).sqrt();
                idx.iter()
                    .map(|&i| Complex64::from_polar(amp, phase_set.phase(i)))
                    .collect()
            })
            .collect();
        AnalogCombiner::new(allocation, weights)
    }

    pub fn allocation(&self) -> &Allocation {
        &self.allocation
    }

    pub fn weights(&self) -> &[Vec<Complex64>] {
        &self.weights
    }

    pub fn num_rx_antennas(&self) -> usize {
        self.allocation.total()
    }

    pub fn to_matrix(&self) -> CMat {
        let n = self.allocation.num_subarrays();
        let mut w = CMat::zeros(self.num_rx_antennas(), n);
        for (col, (start, block)) in self.allocation.offsets().into_iter().zip(&self.weights).enumerate() {
            for (i, &z) in block.iter().enumerate() {
                w[(start + i, col)] = z;
            }
        }
        w
    }

    /// `max |W^H W - I_N|` entry-wise.
    pub fn gram_deviation(&self) -> f64 {
        let w = self.to_matrix();
        let g = w.adjoint() * &w;
        let n = g.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// Largest violation of feasible-set membership: modulus error against
    /// `1/sqrt(m_n)` or angular distance from the phase grid.
    pub fn feasibility_violation(&self, phase_set: &PhaseSet) -> f64 {
        let mut worst = 0.0f64;
        for block in &self.weights {
            let amp = 1.0 / (block.len() as f64).sqrt();
            for &z in block {
                worst = worst.max((z.norm() - amp).abs());
                let idx = phase_set.nearest_index(z);
                let target = Complex64::from_polar(1.0, phase_set.phase(idx));
                let off = (z * target.conj()).arg().abs();
                worst = worst.max(off);
            }
        }
        worst
    }

    /// Grid indices of every entry, or `None` if the combiner is off the
    /// feasible set by more than `tol`.
    pub fn phase_indices(&self, phase_set: &PhaseSet, tol: f64) -> Option<Vec<Vec<usize>>> {
        if self.feasibility_violation(phase_set) > tol {
            return None;
        }
        Some(
            self.weights
                .iter()
                .map(|b| b.iter().map(|&z| phase_set.nearest_index(z)).collect())
                .collect(),
        )
    }

    /// Columns of `H^H W`, i.e. `H_n^H w_n` for each sub-array.
    pub fn effective_channel(&self, h: &ChannelMatrix) -> Result<Vec<Vec<Complex64>>> {
        if h.num_rx_antennas() != self.num_rx_antennas() {
            return Err(Error::InvalidDimension(format!(
                "combiner spans {} antennas but channel has {}",
                self.num_rx_antennas(),
                h.num_rx_antennas()
            )));
        }
        let hm = h.entries();
        Ok(self
            .allocation
            .offsets()
            .into_iter()
            .zip(&self.weights)
            .map(|(start, w)| project(hm, start, w))
            .collect())
    }
}

/// `H_n^H w` for the row block starting at `start`.
fn project(h: &CMat, start: usize, w: &[Complex64]) -> Vec<Complex64> {
    let k = h.ncols();
    let mut g = vec![Complex64::new(0.0, 0.0); k];
    for (col, gk) in g.iter_mut().enumerate() {
        for (i, wi) in w.iter().enumerate() {
            *gk += h[(start + i, col)].conj() * wi;
        }
    }
    g
}

/// Everything factorized combining produces for one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CombiningResult {
    pub combiner: AnalogCombiner,
    /// Largest eigenvalue of each `T_n`.
    pub mu1: Vec<f64>,
    pub sub_rates: Vec<f64>,
    pub total_rate: f64,
    /// Dominant eigenvectors before quantization.
    pub unquantized: Vec<Vec<Complex64>>,
    /// `tr(Q_0^{-1}), ..., tr(Q_N^{-1})`.
    pub qinv_traces: Vec<f64>,
    /// Per-step trace drops `tr(Q_{n-1}^{-1}) - tr(Q_n^{-1})`.
    pub trace_drops: Vec<f64>,
}

impl CombiningResult {
    pub fn sum_mu1(&self) -> f64 {
        self.mu1.iter().sum()
    }
}

/// Runs factorized combining on `h` with the sub-arrays laid out by `alloc`.
///
/// With `quantize` off the combining vectors are the unit-norm dominant
/// eigenvectors themselves.
pub fn factorized_combining(
    h: &ChannelMatrix,
    alloc: &Allocation,
    rho: f64,
    phase_set: &PhaseSet,
    quantize: bool,
) -> Result<CombiningResult> {
    if quantize {
        factorized_combining_with(h, alloc, rho, Some(phase_set))
    } else {
        factorized_combining_with(h, alloc, rho, None)
    }
}

/// [`factorized_combining`] with an arbitrary projection onto the feasible
/// set (`None` keeps the eigenvectors).
pub fn factorized_combining_with(
    h: &ChannelMatrix,
    alloc: &Allocation,
    rho: f64,
    quantizer: Option<&dyn WeightQuantizer>,
) -> Result<CombiningResult> {
    check_inputs(h, alloc, rho)?;
    let k = h.num_users();
    let hm = h.entries();
    let mut steps: Vec<Step> = Vec::with_capacity(alloc.num_subarrays());
    for (start, &m) in alloc.offsets().into_iter().zip(alloc.parts()) {
        let qinv = steps.last().map_or_else(|| CMat::identity(k, k), |s| s.qinv.clone());
        steps.push(combining_step(hm, start, m, qinv, rho, quantizer)?);
    }
    assemble(alloc, k, &steps)
}

/// Checks that `alloc` fits `h` and `rho` is a usable SNR.
pub(crate) fn check_inputs(h: &ChannelMatrix, alloc: &Allocation, rho: f64) -> Result<()> {
    let nr = h.num_rx_antennas();
    if alloc.total() != nr {
        return Err(Error::InvalidDimension(format!(
            "allocation {alloc} covers {} antennas but the channel has {nr}",
            alloc.total()
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("SNR must be positive, got {rho}")));
    }
    Ok(())
}

/// One sub-array's worth of the recursion.
#[derive(Debug, Clone)]
pub(crate) struct Step {
    mu: f64,
    u: Vec<Complex64>,
    w: Vec<Complex64>,
    sub_rate: f64,
    drop: f64,
    /// `Q^{-1}` after this sub-array.
    pub(crate) qinv: CMat,
}

/// Processes the `m` rows starting at `start`, given `Q^{-1}` from the
/// sub-arrays before it.
pub(crate) fn combining_step(
    hm: &CMat,
    start: usize,
    m: usize,
    mut qinv: CMat,
    rho: f64,
    quantizer: Option<&dyn WeightQuantizer>,
) -> Result<Step> {
    let (mu, u) = block_dominant_pair(hm, start, m, &qinv)?;
    let w = match quantizer {
        Some(q) => q.quantize(&u),
        None => u.clone(),
    };
    if w.len() != m {
        return Err(Error::InvalidDimension(format!(
            "quantizer returned {} weights for a sub-array of {m}",
            w.len()
        )));
    }
    let g = project(hm, start, &w);
    let sub_rate = (1.0 + rho * quad_form(&qinv, &g)).log2();
    let drop = linalg::rank_one_inverse_update_vec(&mut qinv, &g, rho)?;
    Ok(Step {
        mu,
        u,
        w,
        sub_rate,
        drop,
        qinv,
    })
}

pub(crate) fn assemble(alloc: &Allocation, k: usize, steps: &[Step]) -> Result<CombiningResult> {
    let mut qinv_traces = Vec::with_capacity(steps.len() + 1);
    qinv_traces.push(k as f64);
    qinv_traces.extend(steps.iter().map(|s| s.qinv.trace().re));
    let sub_rates: Vec<f64> = steps.iter().map(|s| s.sub_rate).collect();
    Ok(CombiningResult {
        combiner: AnalogCombiner::new(alloc.clone(), steps.iter().map(|s| s.w.clone()).collect())?,
        mu1: steps.iter().map(|s| s.mu).collect(),
        total_rate: sub_rates.iter().sum(),
        sub_rates,
        unquantized: steps.iter().map(|s| s.u.clone()).collect(),
        qinv_traces,
        trace_drops: steps.iter().map(|s| s.drop).collect(),
    })
}

/// `Re(g^H A g)`.
fn quad_form(a: &CMat, g: &[Complex64]) -> f64 {
    let k = g.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..k {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..k {
            row += a[(i, j)] * g[j];
        }
        acc += g[i].conj() * row;
    }
    acc.re
}

/// Dominant eigenpair of `T = H_b Q^{-1} H_b^H` for the row block `H_b`,
/// computed through its `K x K` companion.
fn block_dominant_pair(h: &CMat, start: usize, m: usize, qinv: &CMat) -> Result<(f64, Vec<Complex64>)> {
    let k = h.ncols();
    let mut gram = CMat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut s = Complex64::new(0.0, 0.0);
            for r in start..start + m {
                s += h[(r, i)].conj() * h[(r, j)];
            }
            gram[(i, j)] = s;
            gram[(j, i)] = s.conj();
        }
    }
    let l = linalg::cholesky_lower(&linalg::hermitian_part(qinv))?;
    let companion = linalg::hermitian_part(&(l.adjoint() * gram * &l));
    let (mu, v) = match linalg::dominant_pair_by_squaring(&companion) {
        Some((mu, v)) => (mu, CMat::from_column_slice(k, 1, &v)),
        None => {
            let (mu, v) = linalg::dominant_eigenpair(&companion)?;
            (mu, CMat::from_column_slice(k, 1, v.as_slice()))
        }
    };

    let lv = &l * v;
    let mut u = vec![Complex64::new(0.0, 0.0); m];
    for (i, ui) in u.iter_mut().enumerate() {
        for c in 0..k {
            *ui += h[(start + i, c)] * lv[c];
        }
    }
    let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if mu <= 0.0 || norm == 0.0 {
        // T_n = 0: every unit vector is dominant; take the first basis vector.
        let mut e = vec![Complex64::new(0.0, 0.0); m];
        e[0] = Complex64::new(1.0, 0.0);
        return Ok((mu.max(0.0), e));
    }
    for z in u.iter_mut() {
        *z /= norm;
    }
    linalg::phase_fix(&mut u);
    Ok((mu, u))
}
