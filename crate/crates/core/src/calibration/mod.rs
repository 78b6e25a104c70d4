//! Experiment drivers.
//!
//! Every driver takes a master seed and derives one RNG substream per
//! independent work unit (seed, trial, grid point, block, user), so results
//! do not depend on how rayon schedules the units.

mod bandwidth;
mod fit;
mod iteration;
mod mmimo;
mod repeatability;

pub use bandwidth::{bandwidth_sweep, BandwidthParams, BandwidthSweep};
pub use fit::{fit_a_from_curve, fit_gradient, FitOutcome, FitParams, FitResult};
pub use iteration::{iteration_study, IterationParams};
pub use mmimo::{mmimo_run, simulate_carrier_stats, sub_band_records, CarrierStats, MmimoParams, Scenario};
pub use repeatability::{signalling_repeatability, RepeatabilityBlock, RepeatabilityParams, RepeatabilityResult};

use serde::Serialize;

use crate::metrics::mean_std;

/// Prediction error statistics at one value of a swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mean_error_db: f64,
    pub std_error_db: f64,
    pub max_abs_error_db: f64,
    /// Fraction of records with |error| <= 0.5 dB.
    pub within_half_db: f64,
    /// Fraction of records with |error| <= 2 dB.
    pub within_two_db: f64,
    pub n_records: usize,
}

impl SweepPoint {
    pub fn from_errors(value: f64, errors: &[f64]) -> Self {
        let (mean, std) = mean_std(errors);
        let n = errors.len();
        let frac = |tol: f64| errors.iter().filter(|e| e.abs() <= tol).count() as f64 / n.max(1) as f64;
        Self {
            value,
            mean_error_db: mean,
            std_error_db: std,
            max_abs_error_db: errors.iter().fold(0.0, |m, e| f64::max(m, e.abs())),
            within_half_db: frac(0.5),
            within_two_db: frac(2.0),
            n_records: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Name of the swept parameter, e.g. `frames` or `sub_band_hz`.
    pub parameter: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn point(&self, value: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.value == value)
    }
}

/// `start, start + step, ...` up to and including `stop`.
pub fn db_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as i64;
    (0..=n.max(-1)).map(|k| start + k as f64 * step).collect()
}

/// Error-rate grid used throughout: -5 to 20 dB in 1 dB steps.
pub fn default_sinr_grid() -> Vec<f64> {
    db_grid(-5.0, 20.0, 1.0)
}
