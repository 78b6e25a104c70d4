//! Prediction error spread against sub-band width at a fixed carrier
//! spacing.

use rayon::prelude::*;
use serde::Serialize;

use super::mmimo::{simulate_carrier_stats, sub_band_records, MmimoParams};
use super::{SweepPoint, SweepResult};
use crate::error::{Error, Result};
use crate::metrics::GradientModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthParams {
    pub sub_band_list_hz: Vec<f64>,
    /// Independent channel realizations.
    pub trials: usize,
    /// Link settings. `sub_band_hz` and `carriers_per_sub_band` only fix the
    /// carrier spacing.
    pub link: MmimoParams,
}

impl Default for BandwidthParams {
    fn default() -> Self {
        Self {
            sub_band_list_hz: vec![1e6, 2e6, 5e6, 10e6, 20e6, 40e6],
            trials: 200,
            link: MmimoParams {
                blocks: 2,
                ..MmimoParams::for_scenario(super::Scenario::Moving)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthSweep {
    pub result: SweepResult,
    /// Carriers per sub-band at each width.
    pub carriers: Vec<usize>,
}

impl BandwidthParams {
    pub fn carriers_for(&self, width_hz: f64) -> Result<usize> {
        let spacing = self.link.carrier_spacing_hz();
        let n = width_hz / spacing;
        let r = n.round();
        if r < 1.0 || (n - r).abs() > 1e-6 * r {
            return Err(Error::invalid(format!(
                "sub-band {width_hz} Hz is not a whole number of {spacing} Hz carriers"
            )));
        }
        Ok(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sub_band_list_hz.is_empty() || self.trials == 0 {
            return Err(Error::invalid("need at least one sub-band width and one trial"));
        }
        self.link.validate()?;
        let total = self.link.n_carriers()?;
        for &w in &self.sub_band_list_hz {
            let n = self.carriers_for(w)?;
            if total % n != 0 {
                return Err(Error::invalid(format!(
                    "sub-band {w} Hz does not divide the {} Hz band",
                    self.link.band_hz
                )));
            }
        }
        Ok(())
    }
}

/// Errors of every record over all trials, blocks and users at each width.
/// Each trial is simulated once over the whole band and then pooled at every
/// width, so the widths share their random inputs.
pub fn bandwidth_sweep(params: &BandwidthParams, model: &GradientModel, master_seed: u64) -> Result<BandwidthSweep> {
    params.validate()?;
    let carriers: Vec<usize> = params
        .sub_band_list_hz
        .iter()
        .map(|&w| params.carriers_for(w))
        .collect::<Result<_>>()?;
    let per_trial = (0..params.trials as u64)
        .into_par_iter()
        .map(|t| {
            let stats = simulate_carrier_stats(&params.link, master_seed, t)?;
            carriers
                .iter()
                .map(|&n| {
                    Ok(sub_band_records(&params.link, &stats, n, model)?
                        .into_iter()
                        .map(|r| r.prediction_error_db)
                        .collect::<Vec<f64>>())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let points = params
        .sub_band_list_hz
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let errors: Vec<f64> = per_trial.iter().flat_map(|t| t[i].iter().copied()).collect();
            SweepPoint::from_errors(w, &errors)
        })
        .collect();
    Ok(BandwidthSweep {
        result: SweepResult {
            parameter: "sub_band_hz".into(),
            points,
        },
        carriers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_must_divide_the_band() {
        let mut p = BandwidthParams {
            sub_band_list_hz: vec![7e6],
            ..BandwidthParams::default()
        };
        assert!(p.validate().is_err());
        p.sub_band_list_hz = vec![1.01e6];
        assert!(p.validate().is_err());
        assert_eq!(BandwidthParams::default().carriers_for(2e6).unwrap(), 120);
    }

    #[test]
    fn small_sweep_counts_records() {
        let mut p = BandwidthParams {
            trials: 2,
            ..BandwidthParams::default()
        };
        p.link.band_hz = 4e6;
        p.sub_band_list_hz = vec![1e6, 2e6, 4e6];
        let m = GradientModel::new(100.0, 64, 2).unwrap();
        let s = bandwidth_sweep(&p, &m, 4).unwrap();
        assert_eq!(s.carriers, vec![60, 120, 240]);
        // trials x blocks x users x sub-bands
        let n: Vec<usize> = s.result.points.iter().map(|p| p.n_records).collect();
        assert_eq!(n, vec![2 * 2 * 3 * 4, 2 * 2 * 3 * 2, 2 * 2 * 3]);
    }
}
