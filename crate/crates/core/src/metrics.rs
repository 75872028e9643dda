//! Achievable rate, its eigenvalue upper bounds, and the power/energy model.

use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::combiner::AnalogCombiner;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// `10^(snr_db / 10)`.
pub fn snr_db_to_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// `log2 det(I_K + ρ H^H W W^H H)`.
pub fn achievable_rate(h: &ChannelMatrix, w: &AnalogCombiner, rho: f64) -> Result<f64> {
    let cols = w.effective_channel(h)?;
    let k = h.num_users();
    let mut a = CMat::identity(k, k);
    for g in &cols {
        for i in 0..k {
            for j in 0..k {
                a[(i, j)] += g[i] * g[j].conj() * rho;
            }
        }
    }
    linalg::log2_det_hpd(&a)
}

/// `Σ_n log2(1 + ρ μ_1(n))`.
pub fn upper_bound_ub1(mu1: &[f64], rho: f64) -> f64 {
    mu1.iter().map(|&mu| (1.0 + rho * mu).log2()).sum()
}

/// `N log2(1 + (ρ/N) Σ_n μ_1(n))`, the concave relaxation of [`upper_bound_ub1`].
pub fn upper_bound_ub(mu1: &[f64], rho: f64) -> f64 {
    if mu1.is_empty() {
        return 0.0;
    }
    let n = mu1.len() as f64;
    n * (1.0 + rho / n * mu1.iter().sum::<f64>()).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Fixed, equal sub-arrays.
    Esa,
    /// Switch network in front of the phase shifters.
    Uesa,
}

/// Per-component power draw expressed as multiples of a reference power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    /// Milliwatts.
    pub reference_mw: f64,
    pub lna: f64,
    pub adc: f64,
    pub rf: f64,
    pub phase_shifter: f64,
    pub switch: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            reference_mw: 20.0,
            lna: 1.0,
            adc: 10.0,
            rf: 2.0,
            phase_shifter: 1.5,
            // 4 mW per switch, so UESA costs exactly 4 mW per antenna more
            // than ESA; the nominal 0.25 multiplier would give 5 mW.
            switch: 0.2,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.reference_mw,
            self.lna,
            self.adc,
            self.rf,
            self.phase_shifter,
            self.switch,
        ];
        if all.iter().all(|&x| x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("power model entries must be positive".into()))
        }
    }
}

/// Total receiver power in milliwatts.
pub fn power_consumption(
    num_rx_antennas: usize,
    num_rf_chains: usize,
    model: &PowerModel,
    architecture: Architecture,
) -> f64 {
    let p = model.reference_mw;
    let nr = num_rx_antennas as f64;
    let n = num_rf_chains as f64;
    let base = nr * (model.lna + model.phase_shifter) * p + n * (model.rf + model.adc) * p;
    match architecture {
        Architecture::Esa => base,
        Architecture::Uesa => base + nr * model.switch * p,
    }
}

/// Bits/s/Hz per watt.
pub fn energy_efficiency(rate: f64, power_mw: f64) -> Result<f64> {
    if power_mw.is_nan() || power_mw <= 0.0 {
        return Err(Error::InvalidInput(format!("power must be positive, got {power_mw}")));
    }
    Ok(rate / (power_mw / 1000.0))
}

/// Rate, bounds, power and efficiency for one combiner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub total_rate: f64,
    pub ub1: f64,
    pub ub: f64,
    pub power_mw: f64,
    pub energy_efficiency: f64,
}

impl RateReport {
    pub fn new(total_rate: f64, mu1: &[f64], rho: f64, power_mw: f64) -> Result<Self> {
        Ok(RateReport {
            total_rate,
            ub1: upper_bound_ub1(mu1, rho),
            ub: upper_bound_ub(mu1, rho),
            power_mw,
            energy_efficiency: energy_efficiency(total_rate, power_mw)?,
        })
    }
}

/// Reference determinant used only to cross-check the log-det path.
#[doc(hidden)]
pub fn naive_log2_det(a: &CMat) -> f64 {
    let d: Complex64 = a.clone().lu().determinant();
    d.re.log2()
}
