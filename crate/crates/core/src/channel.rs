//! Geometric multipath channels for a uniform linear receive array.
//!
//! Each user's channel is a sum of `L_k` plane waves arriving at azimuth
//! angles drawn uniformly on `[0, 2π)`, weighted by i.i.d. unit-variance
//! complex Gaussian gains and scaled by `sqrt(N_r / L_k)` so that the
//! expected squared column norm equals `N_r`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Shape and geometry of a channel realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub num_rx_antennas: usize,
    pub num_users: usize,
    pub paths_per_user: usize,
    /// Antenna spacing in wavelengths.
    pub spacing_ratio: f64,
}

impl ChannelParams {
    /// Ten paths per user at half-wavelength spacing.
    pub fn new(num_rx_antennas: usize, num_users: usize) -> Self {
        ChannelParams {
            num_rx_antennas,
            num_users,
            paths_per_user: 10,
            spacing_ratio: 0.5,
        }
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths_per_user = paths;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_rx_antennas < self.num_users {
            return Err(Error::InvalidDimension(format!(
                "need N_r >= K >= 1, got N_r = {}, K = {}",
                self.num_rx_antennas, self.num_users
            )));
        }
        if self.paths_per_user == 0 {
            return Err(Error::InvalidDimension("paths per user must be >= 1".into()));
        }
        if !(self.spacing_ratio > 0.0 && self.spacing_ratio.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "antenna spacing ratio must be positive, got {}",
                self.spacing_ratio
            )));
        }
        Ok(())
    }
}

/// `N_r x K` channel between users (columns) and receive antennas (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: CMat,
    /// `row_permutation[i]` is the generation-order index of row `i`.
    row_permutation: Option<Vec<usize>>,
}

impl ChannelMatrix {
    pub fn new(entries: CMat) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "channel must be non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(ChannelMatrix {
            entries,
            row_permutation: None,
        })
    }

    pub fn num_rx_antennas(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn row_permutation(&self) -> Option<&[usize]> {
        self.row_permutation.as_deref()
    }

    pub fn row_norm(&self, row: usize) -> f64 {
        self.entries.row(row).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Undoes a recorded row ordering. Without one, returns a clone.
    pub fn generation_order(&self) -> ChannelMatrix {
        match &self.row_permutation {
            None => self.clone(),
            Some(perm) => {
                let mut out = CMat::zeros(self.entries.nrows(), self.entries.ncols());
                for (i, &src) in perm.iter().enumerate() {
                    out.set_row(src, &self.entries.row(i));
                }
                ChannelMatrix {
                    entries: out,
                    row_permutation: None,
                }
            }
        }
    }

    /// Plain-text form: a `N_r K` header, then one line per antenna holding
    /// `K` pairs of `re im`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.num_rx_antennas(), self.num_users());
        for i in 0..self.num_rx_antennas() {
            let row: Vec<String> = self
                .entries
                .row(i)
                .iter()
                .map(|z| format!("{} {}", z.re, z.im))
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing `N_r K` header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: hline,
                msg: format!("bad header: {e}"),
            })?;
        let [nr, k] = dims[..] else {
            return Err(Error::Parse {
                line: hline,
                msg: "header must be `N_r K`".into(),
            });
        };
        let mut entries = CMat::zeros(nr, k);
        for row in 0..nr {
            let (lno, line) = lines.next().ok_or(Error::Parse {
                line: hline + row + 1,
                msg: format!("expected {nr} rows, found {row}"),
            })?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: lno,
                    msg: format!("bad number: {e}"),
                })?;
            if vals.len() != 2 * k {
                return Err(Error::Parse {
                    line: lno,
                    msg: format!("expected {} numbers, found {}", 2 * k, vals.len()),
                });
            }
            for col in 0..k {
                entries[(row, col)] = Complex64::new(vals[2 * col], vals[2 * col + 1]);
            }
        }
        if let Some((lno, _)) = lines.next() {
            return Err(Error::Parse {
                line: lno,
                msg: "trailing data after the last row".into(),
            });
        }
        ChannelMatrix::new(entries)
    }
}

/// Normalized ULA response: entry `m` is `exp(j 2π d m sin φ) / sqrt(N_r)`.
pub fn array_response(phi: f64, num_rx_antennas: usize, spacing_ratio: f64) -> Result<Vec<Complex64>> {
    if num_rx_antennas == 0 {
        return Err(Error::InvalidDimension("array needs at least one antenna".into()));
    }
    let amp = 1.0 / (num_rx_antennas as f64).sqrt();
    let step = 2.0 * PI * spacing_ratio * phi.sin();
    Ok((0..num_rx_antennas)
        .map(|m| Complex64::from_polar(amp, step * m as f64))
        .collect())
}

/// Draws one channel realization. A pure function of `params` and the rng
/// state.
pub fn generate_channel<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<ChannelMatrix> {
    params.validate()?;
    let nr = params.num_rx_antennas;
    let paths = params.paths_per_user;
    let scale = (nr as f64 / paths as f64).sqrt();
    let mut h = CMat::zeros(nr, params.num_users);
    for k in 0..params.num_users {
        for _ in 0..paths {
            let gain = complex_gaussian(rng);
            let phi = rng.random_range(0.0..2.0 * PI);
            let a = array_response(phi, nr, params.spacing_ratio)?;
            for (m, am) in a.iter().enumerate() {
                h[(m, k)] += gain * am * scale;
            }
        }
    }
    ChannelMatrix::new(h)
}

/// `(x + jy) / sqrt(2)` with `x, y` standard normal.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    Complex64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

/// Sorts rows by non-increasing Euclidean norm (stable) and records the
/// permutation relative to generation order.
pub fn order_rows_desc_norm(h: &ChannelMatrix) -> ChannelMatrix {
    let nr = h.num_rx_antennas();
    let norms: Vec<f64> = (0..nr).map(|i| h.row_norm(i)).collect();
    let mut order: Vec<usize> = (0..nr).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let mut out = CMat::zeros(nr, h.num_users());
    for (dst, &src) in order.iter().enumerate() {
        out.set_row(dst, &h.entries.row(src));
    }
    let composed = match &h.row_permutation {
        Some(prev) => order.iter().map(|&i| prev[i]).collect(),
        None => order,
    };
    ChannelMatrix {
        entries: out,
        row_permutation: Some(composed),
    }
}
