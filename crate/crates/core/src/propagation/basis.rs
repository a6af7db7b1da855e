//! Frequency basis sets for PSD expansion.
//!
//! A power spectral density over the evaluated band is represented as
//! `psd(f) = Σ_b π_b · β_b(f)` with fixed basis functions `β_b` and
//! per-cell coefficients `π_b` (linear mW).  Signal bases are Gaussian or
//! raised-cosine bumps; the last basis is always a constant that carries
//! the noise floor.  On evaluation grids with at least two frequencies
//! every basis is scaled to integrate to 1 over the band (trapezoidal rule,
//! frequency in MHz, so coefficients are total powers in mW and maps come
//! out in dBm/MHz).  A single-frequency grid skips normalization and
//! evaluates the raw shapes, which equal 1 for a basis centered on that
//! frequency — the plain power-map convention.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default Gaussian basis standard deviation (Hz).
pub const GAUSSIAN_STD_HZ: f64 = 5e6;
/// Default raised-cosine bandwidth (Hz).
pub const RC_BANDWIDTH_HZ: f64 = 10e6;
/// Default raised-cosine roll-off.
pub const RC_ROLLOFF: f64 = 0.4;

/// Shape of one basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    Gaussian { center_hz: f64, std_hz: f64 },
    RaisedCosine { center_hz: f64, bandwidth_hz: f64, rolloff: f64 },
    ConstantNoise,
}

impl BasisKind {
    fn validate(&self) -> Result<()> {
        match *self {
            BasisKind::Gaussian { std_hz, .. } if !(std_hz > 0.0) => Err(Error::InvalidConfig(
                format!("gaussian basis std must be positive, got {std_hz}"),
            )),
            BasisKind::RaisedCosine { bandwidth_hz, rolloff, .. }
                if !(bandwidth_hz > 0.0) || !(rolloff > 0.0 && rolloff <= 1.0) =>
            {
                Err(Error::InvalidConfig(format!(
                    "raised-cosine basis needs bandwidth > 0 and roll-off in (0, 1], got {bandwidth_hz}, {rolloff}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn raw(&self, f_hz: f64) -> f64 {
        match *self {
            BasisKind::Gaussian { center_hz, std_hz } => {
                let t = (f_hz - center_hz) / std_hz;
                (-(t * t) / 2.0).exp()
            }
            BasisKind::RaisedCosine { center_hz, bandwidth_hz, rolloff } => {
                let off = (f_hz - center_hz).abs();
                let flat = (1.0 - rolloff) * bandwidth_hz / 2.0;
                let edge = (1.0 + rolloff) * bandwidth_hz / 2.0;
                if off <= flat {
                    1.0
                } else if off <= edge {
                    0.5 * (1.0
                        + (std::f64::consts::PI / (rolloff * bandwidth_hz) * (off - flat)).cos())
                } else {
                    0.0
                }
            }
            BasisKind::ConstantNoise => 1.0,
        }
    }
}

/// A validated bank of basis functions evaluated on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    kinds: Vec<BasisKind>,
    frequencies: Vec<f64>,
    /// `B × N_f`, normalized.
    values: Array2<f64>,
    /// Per-basis factor applied to the raw shape during normalization.
    scales: Vec<f64>,
}

impl BasisSet {
    /// Builds and normalizes a basis set.  Exactly one [`BasisKind::ConstantNoise`]
    /// is required and it must come last.
    pub fn new(kinds: Vec<BasisKind>, frequencies: Vec<f64>) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::InvalidConfig("basis set needs at least one basis".into()));
        }
        let noise_positions: Vec<usize> = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, BasisKind::ConstantNoise))
            .map(|(b, _)| b)
            .collect();
        if noise_positions != [kinds.len() - 1] {
            return Err(Error::InvalidConfig(
                "basis set must contain exactly one constant noise basis, in last position".into(),
            ));
        }
        for k in &kinds {
            k.validate()?;
        }
        if frequencies.is_empty() {
            return Err(Error::InvalidConfig("basis set needs at least one frequency".into()));
        }
        if frequencies.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidConfig("non-finite basis frequency".into()));
        }
        if frequencies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("frequencies must be strictly increasing".into()));
        }

        let n_f = frequencies.len();
        let mut values = Array2::zeros((kinds.len(), n_f));
        let mut scales = vec![1.0; kinds.len()];
        for (b, kind) in kinds.iter().enumerate() {
            for (c, &f) in frequencies.iter().enumerate() {
                values[[b, c]] = kind.raw(f);
            }
            if n_f >= 2 {
                let integral = trapezoid_mhz(&frequencies, values.row(b).as_slice().unwrap());
                if integral <= 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "basis {b} has negligible support on the evaluation grid"
                    )));
                }
                scales[b] = 1.0 / integral;
                for c in 0..n_f {
                    values[[b, c]] *= scales[b];
                }
            }
        }
        Ok(BasisSet { kinds, frequencies, values, scales })
    }

    /// Single-frequency power-map basis: one signal basis centered on the
    /// carrier plus the noise basis, both evaluating to 1.
    pub fn power_map(freq_hz: f64) -> Result<Self> {
        BasisSet::new(
            vec![
                BasisKind::Gaussian { center_hz: freq_hz, std_hz: GAUSSIAN_STD_HZ },
                BasisKind::ConstantNoise,
            ],
            vec![freq_hz],
        )
    }

    /// Gaussian signal bases at the given centers plus the noise basis.
    pub fn gaussian_bank(centers_hz: &[f64], std_hz: f64, frequencies: Vec<f64>) -> Result<Self> {
        let mut kinds: Vec<BasisKind> = centers_hz
            .iter()
            .map(|&c| BasisKind::Gaussian { center_hz: c, std_hz })
            .collect();
        kinds.push(BasisKind::ConstantNoise);
        BasisSet::new(kinds, frequencies)
    }

    /// Raised-cosine signal bases at the given centers plus the noise basis.
    pub fn raised_cosine_bank(
        centers_hz: &[f64],
        bandwidth_hz: f64,
        rolloff: f64,
        frequencies: Vec<f64>,
    ) -> Result<Self> {
        let mut kinds: Vec<BasisKind> = centers_hz
            .iter()
            .map(|&c| BasisKind::RaisedCosine { center_hz: c, bandwidth_hz, rolloff })
            .collect();
        kinds.push(BasisKind::ConstantNoise);
        BasisSet::new(kinds, frequencies)
    }

    pub fn kinds(&self) -> &[BasisKind] {
        &self.kinds
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn n_bases(&self) -> usize {
        self.kinds.len()
    }

    /// Signal bases, excluding the trailing noise basis.
    pub fn n_signal(&self) -> usize {
        self.kinds.len() - 1
    }

    pub fn n_f(&self) -> usize {
        self.frequencies.len()
    }

    /// Normalized basis values, `B × N_f`.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Noise-basis coefficient that produces a flat PSD of `linear_psd`
    /// (mW/MHz) across the band.
    pub fn noise_coefficient(&self, linear_psd: f64) -> f64 {
        linear_psd / self.scales[self.n_bases() - 1]
    }
}

/// Trapezoidal integral with frequency measured in MHz.
fn trapezoid_mhz(freqs: &[f64], vals: &[f64]) -> f64 {
    freqs
        .windows(2)
        .zip(vals.windows(2))
        .map(|(f, v)| (f[1] - f[0]) / 1e6 * (v[0] + v[1]) / 2.0)
        .sum()
}
