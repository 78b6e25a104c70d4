//! Block-to-block spread of the signalled SINR through one fixed channel.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{tdl_response, DelayProfile};
use crate::error::{Error, Result};
use crate::metrics::{mean_carrier_variance, mean_std, signalled_ratio_db};
use crate::rng::{role, substream};
use crate::waveform::{random_grid, ComplexGrid, Constellation, MixSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatabilityParams {
    pub blocks: usize,
    pub frames: usize,
    pub carriers: usize,
    pub carrier_spacing_hz: f64,
    pub qam_order: usize,
    pub n_interferers: usize,
    /// Nominal SINR of the fixed channel.
    pub sinr_db: f64,
    pub snr_db: f64,
    /// Send the same payload in every block.
    pub fixed_payload: bool,
}

impl Default for RepeatabilityParams {
    fn default() -> Self {
        Self {
            blocks: 500,
            frames: 20,
            carriers: 120,
            carrier_spacing_hz: 2e6 / 120.0,
            qam_order: 64,
            n_interferers: 2,
            sinr_db: 0.0,
            snr_db: 30.0,
            fixed_payload: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepeatabilityBlock {
    pub block: usize,
    pub wanted_mean_var: f64,
    pub interference_mean_var: f64,
    pub sinr_s_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatabilityResult {
    pub blocks: Vec<RepeatabilityBlock>,
    pub mean_wanted_var: f64,
    /// Two standard deviations of the wanted mean variance, % of its mean.
    pub relative_spread_percent: f64,
    pub mean_sinr_s_db: f64,
    /// Two standard deviations of the signalled SINR, dB.
    pub sinr_spread_db: f64,
}

fn unit_power(g: &ComplexGrid) -> ComplexGrid {
    let p = g.mean_power();
    g.scaled(1.0 / p.sqrt())
}

pub fn signalling_repeatability(params: &RepeatabilityParams, master_seed: u64) -> Result<RepeatabilityResult> {
    if params.blocks < 2 {
        return Err(Error::invalid("repeatability needs at least two blocks"));
    }
    if params.frames < 2 || params.carriers == 0 {
        return Err(Error::invalid("need at least two frames and one carrier"));
    }
    let constellation = Constellation::new(params.qam_order)?;
    let spec = MixSpec {
        sinr_target_db: params.sinr_db,
        snr_db: params.snr_db,
        n_interferers: params.n_interferers,
    };
    let scale = spec.interferer_scale()?;
    let noise_var = spec.noise_var();

    // fixed per-carrier gains for the wanted and each interfering link,
    // normalized to unit average power
    let profile = DelayProfile::default();
    let band = params.carriers as f64 * params.carrier_spacing_hz;
    let mut ch = substream(master_seed, &[role::CHANNEL]);
    let links: Vec<Vec<crate::Complex64>> = (0..=params.n_interferers)
        .map(|_| {
            let h = tdl_response(&profile, band, params.carrier_spacing_hz, 1, 1, &mut ch)?;
            let g = ComplexGrid::from_vec(params.carriers, 1, h.gains().to_vec())?;
            Ok(unit_power(&g).into_vec())
        })
        .collect::<Result<_>>()?;

    let blocks = (0..params.blocks)
        .into_par_iter()
        .map(|b| {
            let payload_block = if params.fixed_payload { 0 } else { b as u64 };
            let component = |j: usize| -> Result<ComplexGrid> {
                let x = random_grid(
                    &mut substream(master_seed, &[role::PAYLOAD, payload_block, j as u64]),
                    &constellation,
                    params.carriers,
                    params.frames,
                );
                let g = x.symbols().apply_carrier_gains(&links[j])?;
                Ok(if j == 0 { g } else { g.scaled(scale) })
            };
            let wanted = mean_carrier_variance(&component(0)?);
            let mut interference = 0.0;
            for j in 1..=params.n_interferers {
                interference += mean_carrier_variance(&component(j)?);
            }
            Ok(RepeatabilityBlock {
                block: b,
                wanted_mean_var: wanted,
                interference_mean_var: interference,
                sinr_s_db: signalled_ratio_db(wanted, interference + noise_var)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let wanted: Vec<f64> = blocks.iter().map(|b| b.wanted_mean_var).collect();
    let sinr: Vec<f64> = blocks.iter().map(|b| b.sinr_s_db).collect();
    let (mw, sw) = mean_std(&wanted);
    let (ms, ss) = mean_std(&sinr);
    Ok(RepeatabilityResult {
        blocks,
        mean_wanted_var: mw,
        relative_spread_percent: 200.0 * sw / mw,
        mean_sinr_s_db: ms,
        sinr_spread_db: 2.0 * ss,
    })
}
