//! Multi-user downlink with per-carrier zero forcing, CSI aging and
//! sub-band SINR prediction.
//!
//! Each user receives `sum_v g_uv x_v + n` per carrier and frame, where `g`
//! is the effective channel of the precoder in force. The signalled SINR of
//! a sub-band pools the per-carrier variances of the unequalized wanted and
//! leakage components; the EVM is measured on the equalized samples
//! `r / g_uu`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{carrier_count, DelayProfile, MobilityProfile, TapChannel};
use crate::error::{Error, Result};
use crate::metrics::{predict_from_percent, sample_variance, signalled_ratio_db, EvmMode, EvmSums, GradientModel, SinrRecord};
use crate::precoding::{effective_channel, zero_forcing_block, EffectiveChannel};
use crate::rng::{complex_normal, role, substream};
use crate::waveform::{db_to_linear, random_grid, Constellation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Static, mutually correlated users.
    Stationary,
    /// Well separated users, the last of which moves.
    Moving,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Stationary => "stationary",
            Scenario::Moving => "moving",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmimoParams {
    pub scenario: Scenario,
    pub n_tx: usize,
    pub n_users: usize,
    pub band_hz: f64,
    pub sub_band_hz: f64,
    pub carriers_per_sub_band: usize,
    pub frames: usize,
    pub blocks: usize,
    /// Per-user noise level against unit transmit power per stream.
    pub snr_db: f64,
    pub qam_order: usize,
    pub evm_mode: EvmMode,
    pub doppler_hz: f64,
    pub block_period_s: f64,
    /// Blocks between CSI refreshes; 1 means always fresh.
    pub csi_interval: usize,
    /// Weight of the component common to all users, in [0, 1).
    pub user_correlation: f64,
    /// How many users, counted from the last, move.
    pub moving_users: usize,
    pub delay_taps: usize,
    pub tap_spacing_s: f64,
    pub rms_delay_s: f64,
    /// Replace the delay profile by a single tap.
    pub flat_channel: bool,
    pub center_frequency_hz: f64,
}

impl MmimoParams {
    pub fn for_scenario(scenario: Scenario) -> Self {
        let (doppler_hz, user_correlation, moving_users) = match scenario {
            Scenario::Stationary => (0.0, 0.9, 0),
            Scenario::Moving => (8.89, 0.0, 1),
        };
        Self {
            scenario,
            n_tx: 32,
            n_users: 3,
            band_hz: 120e6,
            sub_band_hz: 2e6,
            carriers_per_sub_band: 120,
            frames: 20,
            blocks: 100,
            snr_db: 0.0,
            qam_order: 64,
            evm_mode: EvmMode::DataAided,
            doppler_hz,
            block_period_s: 0.036_56,
            csi_interval: 2,
            user_correlation,
            moving_users,
            delay_taps: DelayProfile::DEFAULT_TAPS,
            tap_spacing_s: DelayProfile::DEFAULT_TAP_SPACING_S,
            rms_delay_s: DelayProfile::DEFAULT_RMS_DELAY_S,
            flat_channel: false,
            center_frequency_hz: 2.4e9,
        }
    }

    pub fn carrier_spacing_hz(&self) -> f64 {
        self.sub_band_hz / self.carriers_per_sub_band as f64
    }

    pub fn n_carriers(&self) -> Result<usize> {
        carrier_count(self.band_hz, self.carrier_spacing_hz())
    }

    pub fn noise_var(&self) -> f64 {
        db_to_linear(-self.snr_db)
    }

    pub fn mobility(&self) -> MobilityProfile {
        MobilityProfile {
            doppler_hz: self.doppler_hz,
            block_period_s: self.block_period_s,
        }
    }

    pub fn delay_profile(&self) -> Result<DelayProfile> {
        if self.flat_channel {
            Ok(DelayProfile::single_tap())
        } else {
            DelayProfile::exponential(self.delay_taps, self.tap_spacing_s, self.rms_delay_s)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid("need at least one user"));
        }
        if self.n_users > self.n_tx {
            return Err(Error::invalid(format!(
                "{} users exceed {} transmit antennas",
                self.n_users, self.n_tx
            )));
        }
        if self.carriers_per_sub_band == 0 || !(self.sub_band_hz > 0.0) {
            return Err(Error::invalid("sub-band must hold at least one carrier"));
        }
        let n = self.n_carriers()?;
        if n % self.carriers_per_sub_band != 0 {
            return Err(Error::invalid(format!(
                "band {} Hz is not a whole number of {} Hz sub-bands",
                self.band_hz, self.sub_band_hz
            )));
        }
        if self.frames < 2 {
            return Err(Error::invalid("frames must be at least 2"));
        }
        if self.blocks == 0 || self.csi_interval == 0 {
            return Err(Error::invalid("blocks and csi_interval must be positive"));
        }
        if !(0.0..1.0).contains(&self.user_correlation) {
            return Err(Error::invalid("user_correlation must lie in [0, 1)"));
        }
        if self.moving_users > self.n_users {
            return Err(Error::invalid("moving_users exceeds n_users"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("snr_db must be finite"));
        }
        Constellation::new(self.qam_order)?;
        self.mobility().validate()?;
        self.delay_profile()?;
        Ok(())
    }
}

/// Per-carrier sufficient statistics for one (block, user).
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierStats {
    pub time_block: usize,
    pub user: usize,
    /// Variance across frames of the unequalized wanted component.
    pub wanted_var: Vec<f64>,
    /// Summed variance of the leakage components.
    pub interference_var: Vec<f64>,
    pub evm: Vec<EvmSums>,
}

/// Runs the link for every block and returns statistics ordered by block
/// then user. `trial` selects an independent channel realization.
pub fn simulate_carrier_stats(params: &MmimoParams, master_seed: u64, trial: u64) -> Result<Vec<CarrierStats>> {
    params.validate()?;
    let n_carriers = params.n_carriers()?;
    let spacing = params.carrier_spacing_hz();
    let constellation = Constellation::new(params.qam_order)?;
    let states = tap_states(params, master_seed, trial)?;

    let groups: Vec<usize> = (0..params.blocks).step_by(params.csi_interval).collect();
    let per_group = groups
        .par_iter()
        .map(|&g0| {
            let h_csi = states[g0].response(n_carriers, spacing, params.block_period_s)?;
            let w = zero_forcing_block(&h_csi, 0)?;
            let end = (g0 + params.csi_interval).min(params.blocks);
            let mut out = Vec::with_capacity((end - g0) * params.n_users);
            for t in g0..end {
                let eff = if t == g0 {
                    effective_channel(&h_csi, &w, 0)?
                } else {
                    let h = states[t].response(n_carriers, spacing, params.block_period_s)?;
                    effective_channel(&h, &w, 0)?
                };
                out.extend(block_stats(params, &eff, &constellation, master_seed, trial, t));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_group.into_iter().flatten().collect())
}

/// Tap-domain channel at every block.
fn tap_states(params: &MmimoParams, master_seed: u64, trial: u64) -> Result<Vec<TapChannel>> {
    let profile = params.delay_profile()?;
    let mut rng = substream(master_seed, &[role::CHANNEL, trial]);
    let mut state = TapChannel::draw(&profile, params.n_tx, params.n_users, &mut rng)?;
    if params.user_correlation > 0.0 {
        let common = TapChannel::draw(&profile, params.n_tx, 1, &mut rng)?;
        let (a, b) = ((1.0 - params.user_correlation).sqrt(), params.user_correlation.sqrt());
        for u in 0..params.n_users {
            state.blend_rx(u, a, &common, 0, b);
        }
    }
    let moving: Vec<bool> = (0..params.n_users)
        .map(|u| u + params.moving_users >= params.n_users)
        .collect();
    let rho = params.mobility().rho();
    let mut evo = substream(master_seed, &[role::EVOLUTION, trial]);
    let mut states = Vec::with_capacity(params.blocks);
    states.push(state.clone());
    for _ in 1..params.blocks {
        if params.doppler_hz > 0.0 && params.moving_users > 0 {
            state.evolve_step(rho, &moving, &mut evo);
        }
        states.push(state.clone());
    }
    Ok(states)
}

fn block_stats(
    params: &MmimoParams,
    eff: &EffectiveChannel,
    constellation: &Constellation,
    master_seed: u64,
    trial: u64,
    t: usize,
) -> Vec<CarrierStats> {
    let k = params.n_users;
    let n_carriers = eff.n_carriers();
    let frames = params.frames;
    let payloads: Vec<_> = (0..k as u64)
        .map(|v| {
            random_grid(
                &mut substream(master_seed, &[role::PAYLOAD, trial, t as u64, v]),
                constellation,
                n_carriers,
                frames,
            )
        })
        .collect();
    let noise_var = params.noise_var();
    (0..k)
        .map(|u| {
            let mut noise = substream(master_seed, &[role::NOISE, trial, t as u64, u as u64]);
            let mut wanted_var = Vec::with_capacity(n_carriers);
            let mut interference_var = Vec::with_capacity(n_carriers);
            let mut evm = Vec::with_capacity(n_carriers);
            for c in 0..n_carriers {
                let g: Vec<_> = (0..k).map(|v| eff.gain(c, u, v)).collect();
                let x: Vec<&[_]> = payloads.iter().map(|p| p.symbols().carrier(c)).collect();
                let var: Vec<f64> = x.iter().map(|xs| sample_variance(xs)).collect();
                wanted_var.push(g[u].norm_sqr() * var[u]);
                interference_var.push((0..k).filter(|&v| v != u).map(|v| g[v].norm_sqr() * var[v]).sum());
                let mut sums = EvmSums::default();
                for f in 0..frames {
                    let r = (0..k).map(|v| g[v] * x[v][f]).sum::<crate::Complex64>() + complex_normal(&mut noise, noise_var);
                    let y = r / g[u];
                    let reference = match params.evm_mode {
                        EvmMode::DataAided => x[u][f],
                        EvmMode::DecisionDirected => constellation.point_for_label(constellation.nearest(y)),
                    };
                    sums.add(y, reference);
                }
                evm.push(sums);
            }
            CarrierStats {
                time_block: t,
                user: u,
                wanted_var,
                interference_var,
                evm,
            }
        })
        .collect()
}

/// Pools carriers into sub-bands of `carriers_per_sub_band` and emits one
/// record per (block, user, sub-band).
pub fn sub_band_records(
    params: &MmimoParams,
    stats: &[CarrierStats],
    carriers_per_sub_band: usize,
    model: &GradientModel,
) -> Result<Vec<SinrRecord>> {
    let noise_var = params.noise_var();
    let spacing = params.carrier_spacing_hz();
    let band_start = params.center_frequency_hz - params.band_hz / 2.0;
    let mut records = Vec::new();
    for s in stats {
        let n = s.wanted_var.len();
        if carriers_per_sub_band == 0 || n % carriers_per_sub_band != 0 {
            return Err(Error::invalid(format!(
                "{n} carriers do not split into sub-bands of {carriers_per_sub_band}"
            )));
        }
        for b in 0..n / carriers_per_sub_band {
            let range = b * carriers_per_sub_band..(b + 1) * carriers_per_sub_band;
            let m = carriers_per_sub_band as f64;
            let wanted = s.wanted_var[range.clone()].iter().sum::<f64>() / m;
            let interference = s.interference_var[range.clone()].iter().sum::<f64>() / m;
            let signalled = signalled_ratio_db(wanted, interference + noise_var)?;
            let mut sums = EvmSums::default();
            for e in &s.evm[range] {
                sums.merge(e);
            }
            let predicted = predict_from_percent(sums.rms_percent()?, model.a_value)?;
            let center = band_start + (b as f64 + 0.5) * carriers_per_sub_band as f64 * spacing;
            records.push(SinrRecord::new(s.user, s.time_block, b, center, signalled, predicted));
        }
    }
    Ok(records)
}

/// Records for every (block, user, sub-band) of one channel realization.
pub fn mmimo_run(params: &MmimoParams, model: &GradientModel, master_seed: u64) -> Result<Vec<SinrRecord>> {
    let stats = simulate_carrier_stats(params, master_seed, 0)?;
    sub_band_records(params, &stats, params.carriers_per_sub_band, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> MmimoParams {
        MmimoParams {
            band_hz: 4e6,
            blocks: 4,
            ..MmimoParams::for_scenario(scenario)
        }
    }

    fn model() -> GradientModel {
        GradientModel::new(100.0, 64, 2).unwrap()
    }

    #[test]
    fn fresh_csi_is_noise_limited() {
        let p = MmimoParams {
            user_correlation: 0.0,
            csi_interval: 1,
            ..small(Scenario::Stationary)
        };
        let stats = simulate_carrier_stats(&p, 1, 0).unwrap();
        assert_eq!(stats.len(), 4 * 3);
        for s in &stats {
            let wanted: f64 = s.wanted_var.iter().sum();
            let leak: f64 = s.interference_var.iter().sum();
            assert!(leak <= 1e-10 * wanted);
        }
        let recs = sub_band_records(&p, &stats, 120, &model()).unwrap();
        assert_eq!(recs.len(), 4 * 3 * 2);
        for r in &recs {
            assert_eq!(r.prediction_error_db, r.sinr_predicted_db - r.sinr_signalled_db);
            assert!(r.prediction_error_db.abs() < 1.0, "{r:?}");
        }
    }

    #[test]
    fn stale_csi_degrades_only_the_moving_user() {
        let p = small(Scenario::Moving);
        let recs = mmimo_run(&p, &model(), 2).unwrap();
        let mean = |user: usize, block: usize| {
            let v: Vec<f64> = recs
                .iter()
                .filter(|r| r.user == user && r.time_block == block)
                .map(|r| r.sinr_signalled_db)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        // block 1 uses block-0 CSI
        assert!(mean(2, 1) < mean(2, 0) - 3.0);
        assert!((mean(0, 1) - mean(0, 0)).abs() < 1.0);
    }

    #[test]
    fn frequencies_are_sub_band_centres() {
        let p = small(Scenario::Stationary);
        let recs = mmimo_run(&p, &model(), 3).unwrap();
        let f0: Vec<f64> = recs.iter().filter(|r| r.time_block == 0 && r.user == 0).map(|r| r.center_freq_hz).collect();
        assert!((f0[0] - (2.4e9 - 1e6)).abs() < 1e-3);
        assert!((f0[1] - (2.4e9 + 1e6)).abs() < 1e-3);
    }

    #[test]
    fn geometry_is_validated() {
        let mut p = small(Scenario::Moving);
        p.n_users = 40;
        assert!(mmimo_run(&p, &model(), 0).is_err());
        let mut p = small(Scenario::Moving);
        p.band_hz = 5e6;
        assert!(mmimo_run(&p, &model(), 0).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let p = small(Scenario::Moving);
        assert_eq!(mmimo_run(&p, &model(), 9).unwrap(), mmimo_run(&p, &model(), 9).unwrap());
    }
}
