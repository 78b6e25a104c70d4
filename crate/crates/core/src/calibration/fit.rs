//! Gradient fit of the log-linear EVM law on the flat channel.

use rayon::prelude::*;
use serde::Serialize;

use super::default_sinr_grid;
use crate::error::{Error, Result};
use crate::metrics::{ber, rms_evm, sinr_signalled, EvmMode, EvmReference, GradientModel};
use crate::rng::{role, substream};
use crate::waveform::{mix, random_grid, Constellation, MixSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitParams {
    pub qam_order: usize,
    pub n_interferers: usize,
    pub sinr_grid_db: Vec<f64>,
    pub frames: usize,
    pub carriers: usize,
    pub seeds: usize,
    /// Noise level when interferers are present. Without interferers the
    /// noise alone sets each grid point.
    pub snr_db: f64,
    pub evm_mode: EvmMode,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            qam_order: 64,
            n_interferers: 1,
            sinr_grid_db: default_sinr_grid(),
            frames: 20,
            carriers: 1200,
            seeds: 4,
            snr_db: 30.0,
            evm_mode: EvmMode::DataAided,
        }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        Constellation::new(self.qam_order)?;
        if self.n_interferers > MixSpec::MAX_INTERFERERS {
            return Err(Error::invalid(format!(
                "at most {} interferers supported",
                MixSpec::MAX_INTERFERERS
            )));
        }
        validate_grid(&self.sinr_grid_db)?;
        if self.frames < 2 {
            return Err(Error::invalid("fit needs at least two frames"));
        }
        if self.carriers == 0 || self.seeds == 0 {
            return Err(Error::invalid("carriers and seeds must be positive"));
        }
        if self.n_interferers > 0 {
            let top = self.sinr_grid_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if top > self.snr_db {
                return Err(Error::InfeasibleSpec(format!(
                    "grid reaches {top} dB but the SNR is {} dB",
                    self.snr_db
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn spec_at(&self, sinr_db: f64) -> MixSpec {
        MixSpec {
            sinr_target_db: sinr_db,
            snr_db: if self.n_interferers == 0 { sinr_db } else { self.snr_db },
            n_interferers: self.n_interferers,
        }
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("SINR grid needs at least two points"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("SINR grid must be finite"));
    }
    if grid.iter().all(|&x| x == grid[0]) {
        return Err(Error::invalid("SINR grid is a single point"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: GradientModel,
    /// RMS of `SINR_P - target` over the grid under the fitted model, dB.
    pub residual_rms_db: f64,
    pub sinr_grid_db: Vec<f64>,
    pub evm_curve_percent: Vec<f64>,
    pub ber_curve: Vec<f64>,
    /// Seed-averaged signalled SINR at each grid point.
    pub signalled_sinr_db: Vec<f64>,
    /// Standard error of the fitted A across seeds.
    pub a_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum FitOutcome {
    /// Orders whose EVM does not follow the law (QPSK stays near constant).
    NotModelable { qam_order: usize, reason: String },
    Fitted(FitResult),
}

impl FitOutcome {
    pub fn fitted(&self) -> Option<&FitResult> {
        match self {
            FitOutcome::Fitted(r) => Some(r),
            FitOutcome::NotModelable { .. } => None,
        }
    }
}

/// Intercept-only least squares of `log10(EVM) = log10(A) - log10(SINR)/2`.
/// Returns `(A, residual_rms_db)`.
pub fn fit_a_from_curve(sinr_grid_db: &[f64], evm_percent: &[f64]) -> Result<(f64, f64)> {
    validate_grid(sinr_grid_db)?;
    if evm_percent.len() != sinr_grid_db.len() {
        return Err(Error::invalid("EVM curve and grid differ in length"));
    }
    if evm_percent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::DegenerateInput("EVM curve must be positive".into()));
    }
    let n = sinr_grid_db.len() as f64;
    let log_a = sinr_grid_db
        .iter()
        .zip(evm_percent)
        .map(|(db, e)| e.log10() + db / 20.0)
        .sum::<f64>()
        / n;
    let residual = (sinr_grid_db
        .iter()
        .zip(evm_percent)
        .map(|(db, e)| (20.0 * (log_a - e.log10()) - db).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((10f64.powf(log_a), residual))
}

struct PointSample {
    evm_percent: f64,
    ber: f64,
    signalled_db: f64,
}

pub fn fit_gradient(params: &FitParams, master_seed: u64) -> Result<FitOutcome> {
    if params.qam_order == 4 {
        // validate the rest so bad input still errors
        FitParams { qam_order: 16, ..params.clone() }.validate()?;
        return Ok(FitOutcome::NotModelable {
            qam_order: 4,
            reason: "QPSK EVM is nearly constant in SINR".into(),
        });
    }
    params.validate()?;
    let constellation = Constellation::new(params.qam_order)?;
    let grid = &params.sinr_grid_db;
    let units: Vec<(usize, usize)> = (0..params.seeds)
        .flat_map(|s| (0..grid.len()).map(move |k| (s, k)))
        .collect();
    let samples = units
        .par_iter()
        .map(|&(s, k)| flat_point(params, &constellation, master_seed, s as u64, k as u64, grid[k]))
        .collect::<Result<Vec<_>>>()?;

    let n_grid = grid.len();
    let seeds = params.seeds as f64;
    let mut evm = vec![0.0; n_grid];
    let mut ber_curve = vec![0.0; n_grid];
    let mut signalled = vec![0.0; n_grid];
    for (&(_, k), p) in units.iter().zip(&samples) {
        evm[k] += p.evm_percent / seeds;
        ber_curve[k] += p.ber / seeds;
        signalled[k] += p.signalled_db / seeds;
    }
    let (a_value, residual_rms_db) = fit_a_from_curve(grid, &evm)?;

    let per_seed_a: Vec<f64> = samples
        .chunks(n_grid)
        .map(|c| {
            let curve: Vec<f64> = c.iter().map(|p| p.evm_percent).collect();
            fit_a_from_curve(grid, &curve).map(|(a, _)| a)
        })
        .collect::<Result<_>>()?;
    let a_std_error = if per_seed_a.len() > 1 {
        let (_, sd) = crate::metrics::mean_std(&per_seed_a);
        sd * (per_seed_a.len() as f64 / (per_seed_a.len() - 1) as f64).sqrt() / seeds.sqrt()
    } else {
        f64::NAN
    };

    Ok(FitOutcome::Fitted(FitResult {
        model: GradientModel::new(a_value, params.qam_order, params.n_interferers)?,
        residual_rms_db,
        sinr_grid_db: grid.clone(),
        evm_curve_percent: evm,
        ber_curve,
        signalled_sinr_db: signalled,
        a_std_error,
    }))
}

/// One seed at one grid point. The noise substream ignores the QAM order so
/// different orders see the same noise.
fn flat_point(
    params: &FitParams,
    constellation: &Constellation,
    master_seed: u64,
    seed: u64,
    point: u64,
    sinr_db: f64,
) -> Result<PointSample> {
    let order = params.qam_order as u64;
    let wanted = random_grid(
        &mut substream(master_seed, &[role::WANTED, order, seed, point]),
        constellation,
        params.carriers,
        params.frames,
    );
    let interferers: Vec<_> = (0..params.n_interferers as u64)
        .map(|j| {
            random_grid(
                &mut substream(master_seed, &[role::INTERFERER, order, seed, point, j]),
                constellation,
                params.carriers,
                params.frames,
            )
        })
        .collect();
    let spec = params.spec_at(sinr_db);
    let out = mix(
        &wanted,
        &interferers,
        &spec,
        &mut substream(master_seed, &[role::NOISE, seed, point]),
    )?;
    let reference = match params.evm_mode {
        EvmMode::DataAided => EvmReference::DataAided(wanted.symbols()),
        EvmMode::DecisionDirected => EvmReference::DecisionDirected,
    };
    let evm = rms_evm(&out.received, reference, constellation)?;
    let interference: Vec<_> = out.interference.iter().collect();
    Ok(PointSample {
        evm_percent: evm.rms_percent,
        ber: ber(&out.received, wanted.bits(), constellation)?,
        signalled_db: sinr_signalled(wanted.symbols(), &interference, out.noise_var)?,
    })
}
