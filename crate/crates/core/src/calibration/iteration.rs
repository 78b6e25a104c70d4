//! Prediction error against the number of frames each estimate averages.

use rayon::prelude::*;
use serde::Serialize;

use super::fit::validate_grid;
use super::{default_sinr_grid, SweepPoint, SweepResult};
use crate::error::{Error, Result};
use crate::metrics::{rms_evm, sinr_predict, sinr_signalled, EvmMode, EvmReference, GradientModel};
use crate::rng::{role, substream};
use crate::waveform::{mix, random_grid, Constellation, MixSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationParams {
    pub frames_list: Vec<usize>,
    pub sinr_grid_db: Vec<f64>,
    pub carriers: usize,
    pub trials: usize,
    pub n_interferers: usize,
    pub snr_db: f64,
    pub evm_mode: EvmMode,
}

impl Default for IterationParams {
    fn default() -> Self {
        Self {
            frames_list: vec![2, 5, 10, 20, 50, 100, 200],
            sinr_grid_db: default_sinr_grid(),
            carriers: 1200,
            trials: 20,
            n_interferers: 1,
            snr_db: 30.0,
            evm_mode: EvmMode::DataAided,
        }
    }
}

impl IterationParams {
    pub fn validate(&self) -> Result<()> {
        if self.frames_list.is_empty() {
            return Err(Error::invalid("frames list is empty"));
        }
        if self.frames_list.iter().any(|&f| f < 2) {
            return Err(Error::invalid("every frame count must be at least 2"));
        }
        validate_grid(&self.sinr_grid_db)?;
        if self.carriers == 0 || self.trials == 0 {
            return Err(Error::invalid("carriers and trials must be positive"));
        }
        if self.n_interferers > MixSpec::MAX_INTERFERERS {
            return Err(Error::invalid("too many interferers"));
        }
        Ok(())
    }
}

/// Per frame count: `SINR_P - SINR_S` over every trial and grid point, on
/// the flat channel with the given model.
pub fn iteration_study(params: &IterationParams, model: &GradientModel, master_seed: u64) -> Result<SweepResult> {
    params.validate()?;
    let constellation = Constellation::new(model.qam_order)?;
    let grid = &params.sinr_grid_db;
    let units: Vec<(usize, usize, usize)> = (0..params.frames_list.len())
        .flat_map(|f| (0..params.trials).flat_map(move |t| (0..grid.len()).map(move |k| (f, t, k))))
        .collect();
    let errors = units
        .par_iter()
        .map(|&(f, t, k)| {
            let frames = params.frames_list[f];
            let path = |r: u64| [r, frames as u64, t as u64, k as u64];
            let wanted = random_grid(&mut substream(master_seed, &path(role::WANTED)), &constellation, params.carriers, frames);
            let interferers: Vec<_> = (0..params.n_interferers as u64)
                .map(|j| {
                    let mut p = path(role::INTERFERER).to_vec();
                    p.push(j);
                    random_grid(&mut substream(master_seed, &p), &constellation, params.carriers, frames)
                })
                .collect();
            let spec = MixSpec {
                sinr_target_db: grid[k],
                snr_db: if params.n_interferers == 0 { grid[k] } else { params.snr_db },
                n_interferers: params.n_interferers,
            };
            let out = mix(&wanted, &interferers, &spec, &mut substream(master_seed, &path(role::NOISE)))?;
            let reference = match params.evm_mode {
                EvmMode::DataAided => EvmReference::DataAided(wanted.symbols()),
                EvmMode::DecisionDirected => EvmReference::DecisionDirected,
            };
            let predicted = sinr_predict(&rms_evm(&out.received, reference, &constellation)?, model)?;
            let interference: Vec<_> = out.interference.iter().collect();
            let signalled = sinr_signalled(wanted.symbols(), &interference, out.noise_var)?;
            Ok(predicted - signalled)
        })
        .collect::<Result<Vec<f64>>>()?;

    let per_frames = params.trials * grid.len();
    let points = params
        .frames_list
        .iter()
        .zip(errors.chunks(per_frames))
        .map(|(&frames, e)| SweepPoint::from_errors(frames as f64, e))
        .collect();
    Ok(SweepResult {
        parameter: "frames".into(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn more_frames_tighten_the_error() {
        let p = IterationParams {
            frames_list: vec![2, 20],
            carriers: 120,
            trials: 10,
            ..IterationParams::default()
        };
        let m = GradientModel::new(100.0, 64, 1).unwrap();
        let r = iteration_study(&p, &m, 3).unwrap();
        assert_eq!(r.values(), vec![2.0, 20.0]);
        assert!(r.points[0].std_error_db > r.points[1].std_error_db);
        assert_eq!(r.points[0].n_records, 10 * 26);
    }

    #[test]
    fn rejects_single_frame() {
        let p = IterationParams {
            frames_list: vec![1],
            ..IterationParams::default()
        };
        let m = GradientModel::new(100.0, 64, 1).unwrap();
        assert!(iteration_study(&p, &m, 0).is_err());
        let empty = IterationParams {
            frames_list: vec![],
            ..IterationParams::default()
        };
        assert!(iteration_study(&empty, &m, 0).is_err());
    }
}
