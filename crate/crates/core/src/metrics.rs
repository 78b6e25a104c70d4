//! BER, RMS EVM, signalled SINR and the EVM-to-SINR predictor.
//!
//! The log-linear law tying the two together is
//! `EVM% = A / sqrt(SINR_linear)`, inverted by the predictor as
//! `SINR_P(dB) = 20 log10(A / EVM%)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{linear_to_db, ComplexGrid, Constellation};

/// Bit error ratio of hard decisions on `received` against `reference_bits`.
pub fn ber(received: &ComplexGrid, reference_bits: &[u8], constellation: &Constellation) -> Result<f64> {
    let bps = constellation.bits_per_symbol();
    if reference_bits.len() != received.len() * bps {
        return Err(Error::invalid(format!(
            "{} reference bits for {} symbols of {bps} bits",
            reference_bits.len(),
            received.len()
        )));
    }
    if reference_bits.is_empty() {
        return Ok(0.0);
    }
    let mut errors = 0u64;
    for (r, bits) in received.as_slice().iter().zip(reference_bits.chunks_exact(bps)) {
        let label = constellation.nearest(*r);
        let sent = bits.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        errors += (label ^ sent).count_ones() as u64;
    }
    Ok(errors as f64 / reference_bits.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvmMode {
    /// Reference is the transmitted symbol.
    DataAided,
    /// Reference is the nearest constellation point.
    DecisionDirected,
}

impl std::fmt::Display for EvmMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvmMode::DataAided => "data-aided",
            EvmMode::DecisionDirected => "decision-directed",
        })
    }
}

impl std::str::FromStr for EvmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data-aided" => Ok(EvmMode::DataAided),
            "decision-directed" => Ok(EvmMode::DecisionDirected),
            _ => Err(Error::Parse(format!(
                "unknown EVM mode `{s}` (expected data-aided or decision-directed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EvmReference<'a> {
    DataAided(&'a ComplexGrid),
    DecisionDirected,
}

impl EvmReference<'_> {
    pub fn mode(&self) -> EvmMode {
        match self {
            EvmReference::DataAided(_) => EvmMode::DataAided,
            EvmReference::DecisionDirected => EvmMode::DecisionDirected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvmEstimate {
    pub rms_percent: f64,
    pub mode: EvmMode,
    pub n_carriers: usize,
    pub n_frames: usize,
}

/// Accumulated error energy and sample count. Sums from disjoint sample sets
/// combine by addition, which lets callers pool carriers into sub-bands.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvmSums {
    pub error_energy: f64,
    pub samples: usize,
}

impl EvmSums {
    pub fn add(&mut self, received: Complex64, reference: Complex64) {
        self.error_energy += (received - reference).norm_sqr();
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &EvmSums) {
        self.error_energy += other.error_energy;
        self.samples += other.samples;
    }

    /// RMS error relative to the unit mean power of the constellation.
    pub fn rms_percent(&self) -> Result<f64> {
        if self.samples == 0 {
            return Err(Error::DegenerateInput("EVM over zero samples".into()));
        }
        Ok(100.0 * (self.error_energy / self.samples as f64).sqrt())
    }
}

/// `100 * sqrt(mean |r - ref|^2)` over every carrier and frame, relative to
/// the unit constellation power. The nearest point never has a larger error
/// than the true symbol, so decision-directed EVM never exceeds data-aided.
pub fn rms_evm(received: &ComplexGrid, reference: EvmReference<'_>, constellation: &Constellation) -> Result<EvmEstimate> {
    let mut sums = EvmSums::default();
    match reference {
        EvmReference::DataAided(tx) => {
            if !tx.same_shape(received) {
                return Err(Error::invalid("reference grid shape differs from received grid"));
            }
            for (r, t) in received.as_slice().iter().zip(tx.as_slice()) {
                sums.add(*r, *t);
            }
        }
        EvmReference::DecisionDirected => {
            for r in received.as_slice() {
                sums.add(*r, constellation.point_for_label(constellation.nearest(*r)));
            }
        }
    }
    Ok(EvmEstimate {
        rms_percent: sums.rms_percent()?,
        mode: reference.mode(),
        n_carriers: received.carriers(),
        n_frames: received.frames(),
    })
}

/// Unbiased variance of `xs` about their mean.
pub fn sample_variance(xs: &[Complex64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<Complex64>() / n as f64;
    xs.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64
}

/// Carrier-averaged per-carrier variance across frames.
pub fn mean_carrier_variance(grid: &ComplexGrid) -> f64 {
    if grid.carriers() == 0 {
        return 0.0;
    }
    (0..grid.carriers())
        .map(|c| sample_variance(grid.carrier(c)))
        .sum::<f64>()
        / grid.carriers() as f64
}

/// Signalled SINR in dB: the carrier-averaged variance of the wanted
/// component over the sum of the same quantity per interferer plus
/// `noise_var`.
pub fn sinr_signalled(wanted: &ComplexGrid, interferers: &[&ComplexGrid], noise_var: f64) -> Result<f64> {
    if wanted.frames() < 2 {
        return Err(Error::invalid("signalled SINR needs at least two frames"));
    }
    if interferers.iter().any(|g| g.carriers() != wanted.carriers() || g.frames() < 2) {
        return Err(Error::invalid("interferer grid shape differs from wanted grid"));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::invalid("noise variance must be non-negative"));
    }
    let numerator = mean_carrier_variance(wanted);
    let denominator = interferers.iter().map(|g| mean_carrier_variance(g)).sum::<f64>() + noise_var;
    signalled_ratio_db(numerator, denominator)
}

/// `10 log10(wanted / impairment)` with the degenerate-denominator check.
pub fn signalled_ratio_db(wanted_var: f64, impairment_var: f64) -> Result<f64> {
    if !(impairment_var > 0.0) {
        return Err(Error::DegenerateInput(
            "no interference and zero noise variance".into(),
        ));
    }
    Ok(linear_to_db(wanted_var / impairment_var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientModel {
    pub a_value: f64,
    pub qam_order: usize,
    pub n_interferers: usize,
}

/// Reference gradients for 1, 2 and 3 interferers, by QAM order.
const REFERENCE_A: [(usize, [f64; 3]); 7] = [
    (8, [65.0, 77.0, 77.0]),
    (16, [73.0, 78.0, 78.0]),
    (32, [88.0, 90.0, 92.0]),
    (64, [107.0, 107.0, 107.0]),
    (128, [115.0, 115.0, 115.0]),
    (256, [129.0, 129.0, 129.0]),
    (512, [140.0, 140.0, 140.0]),
];

impl GradientModel {
    pub fn new(a_value: f64, qam_order: usize, n_interferers: usize) -> Result<Self> {
        if !(a_value > 0.0 && a_value.is_finite()) {
            return Err(Error::invalid(format!("gradient must be positive, got {a_value}")));
        }
        Ok(Self {
            a_value,
            qam_order,
            n_interferers,
        })
    }

    /// Tabulated gradient for `qam_order` with 1 to 3 interferers.
    pub fn reference(qam_order: usize, n_interferers: usize) -> Option<Self> {
        if !(1..=3).contains(&n_interferers) {
            return None;
        }
        REFERENCE_A
            .iter()
            .find(|(m, _)| *m == qam_order)
            .map(|(_, a)| Self {
                a_value: a[n_interferers - 1],
                qam_order,
                n_interferers,
            })
    }

    /// EVM% the law assigns to a linear SINR.
    pub fn evm_percent(&self, sinr_linear: f64) -> f64 {
        self.a_value / sinr_linear.sqrt()
    }
}

/// `20 log10(A / EVM%)`.
pub fn sinr_predict(evm: &EvmEstimate, model: &GradientModel) -> Result<f64> {
    predict_from_percent(evm.rms_percent, model.a_value)
}

pub fn predict_from_percent(evm_percent: f64, a_value: f64) -> Result<f64> {
    if evm_percent == 0.0 {
        return Err(Error::UnboundedPrediction);
    }
    if !(evm_percent > 0.0) {
        return Err(Error::invalid(format!("EVM must be positive, got {evm_percent}")));
    }
    Ok(20.0 * (a_value / evm_percent).log10())
}

/// One signalled/predicted comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinrRecord {
    pub user: usize,
    pub time_block: usize,
    pub sub_band_index: usize,
    pub center_freq_hz: f64,
    pub sinr_signalled_db: f64,
    pub sinr_predicted_db: f64,
    pub prediction_error_db: f64,
}

impl SinrRecord {
    pub fn new(
        user: usize,
        time_block: usize,
        sub_band_index: usize,
        center_freq_hz: f64,
        sinr_signalled_db: f64,
        sinr_predicted_db: f64,
    ) -> Self {
        Self {
            user,
            time_block,
            sub_band_index,
            center_freq_hz,
            sinr_signalled_db,
            sinr_predicted_db,
            prediction_error_db: sinr_predicted_db - sinr_signalled_db,
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
