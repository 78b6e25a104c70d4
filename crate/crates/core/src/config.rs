//! Run configuration: TOML file, command-line overrides and validation.
//!
//! Every key is optional; missing keys take the defaults below. Overrides
//! are merged over the file before validation, so an override always wins.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    db_grid, BandwidthParams, FitParams, IterationParams, MmimoParams, RepeatabilityParams, Scenario,
};
use crate::channel::DelayProfile;
use crate::error::{Error, Result};
use crate::metrics::EvmMode;
use crate::waveform::{MixSpec, SUPPORTED_ORDERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    #[default]
    FitA,
    QamCompare,
    IterationStudy,
    Mmimo,
    Repeatability,
    BandwidthSweep,
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::FitA => "fit-a",
            Study::QamCompare => "qam-compare",
            Study::IterationStudy => "iteration-study",
            Study::Mmimo => "mmimo",
            Study::Repeatability => "repeatability",
            Study::BandwidthSweep => "bandwidth-sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioSelect {
    #[default]
    Both,
    Stationary,
    Moving,
}

impl ScenarioSelect {
    pub fn scenarios(&self) -> Vec<Scenario> {
        match self {
            ScenarioSelect::Both => vec![Scenario::Stationary, Scenario::Moving],
            ScenarioSelect::Stationary => vec![Scenario::Stationary],
            ScenarioSelect::Moving => vec![Scenario::Moving],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub study: Study,
    pub seed: u64,
    /// Worker threads, 0 for one per core. Not echoed: output does not
    /// depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,

    // flat-channel gradient fits
    pub qam_order: usize,
    pub qam_orders: Vec<usize>,
    pub n_interferers: usize,
    pub interferer_counts: Vec<usize>,
    pub carriers: usize,
    pub frames: usize,
    pub sinr_min_db: f64,
    pub sinr_max_db: f64,
    pub sinr_step_db: f64,
    pub fit_snr_db: f64,
    pub seeds: usize,
    pub evm_mode: EvmMode,
    /// Fixed gradient for the prediction studies instead of a fresh fit.
    pub model_a: Option<f64>,

    // iteration study
    pub frames_list: Vec<usize>,
    pub trials: usize,

    // multi-user link
    pub scenario: ScenarioSelect,
    pub n_tx: usize,
    pub n_users: usize,
    pub band_hz: f64,
    pub sub_band_hz: f64,
    pub carriers_per_sub_band: usize,
    pub blocks: usize,
    pub snr_db: f64,
    pub doppler_hz: f64,
    pub block_period_s: f64,
    pub csi_interval: usize,
    pub user_correlation: f64,
    pub moving_users: usize,
    pub delay_taps: usize,
    pub tap_spacing_s: f64,
    pub rms_delay_s: f64,
    pub center_frequency_hz: f64,

    // signalling repeatability
    pub repeat_blocks: usize,
    pub repeat_frames: usize,
    pub repeat_carriers: usize,
    pub repeat_sinr_db: f64,

    // bandwidth sweep
    pub sub_band_list_hz: Vec<f64>,
    pub sweep_trials: usize,
    pub sweep_blocks: usize,
    pub sweep_scenario: Scenario,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitParams::default();
        let iter = IterationParams::default();
        let stationary = MmimoParams::for_scenario(Scenario::Stationary);
        let moving = MmimoParams::for_scenario(Scenario::Moving);
        let rep = RepeatabilityParams::default();
        let bw = BandwidthParams::default();
        Self {
            study: Study::FitA,
            seed: 1,
            threads: 0,
            qam_order: fit.qam_order,
            qam_orders: SUPPORTED_ORDERS[1..].to_vec(),
            n_interferers: fit.n_interferers,
            interferer_counts: vec![1, 2, 3],
            carriers: fit.carriers,
            frames: fit.frames,
            sinr_min_db: -5.0,
            sinr_max_db: 20.0,
            sinr_step_db: 1.0,
            fit_snr_db: fit.snr_db,
            seeds: fit.seeds,
            evm_mode: fit.evm_mode,
            model_a: None,
            frames_list: iter.frames_list,
            trials: iter.trials,
            scenario: ScenarioSelect::Both,
            n_tx: moving.n_tx,
            n_users: moving.n_users,
            band_hz: moving.band_hz,
            sub_band_hz: moving.sub_band_hz,
            carriers_per_sub_band: moving.carriers_per_sub_band,
            blocks: moving.blocks,
            snr_db: moving.snr_db,
            doppler_hz: moving.doppler_hz,
            block_period_s: moving.block_period_s,
            csi_interval: moving.csi_interval,
            user_correlation: stationary.user_correlation,
            moving_users: moving.moving_users,
            delay_taps: DelayProfile::DEFAULT_TAPS,
            tap_spacing_s: DelayProfile::DEFAULT_TAP_SPACING_S,
            rms_delay_s: DelayProfile::DEFAULT_RMS_DELAY_S,
            center_frequency_hz: moving.center_frequency_hz,
            repeat_blocks: rep.blocks,
            repeat_frames: rep.frames,
            repeat_carriers: rep.carriers,
            repeat_sinr_db: rep.sinr_db,
            sub_band_list_hz: bw.sub_band_list_hz,
            sweep_trials: bw.trials,
            sweep_blocks: bw.link.blocks,
            sweep_scenario: bw.link.scenario,
        }
    }
}

/// Parses `text` as a TOML table of config keys.
pub fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Parse(format!("config is not valid TOML: {}", e.message())))
}

/// Parses one `key=value` override. Values that are not valid TOML are
/// taken as strings, so `evm_mode=data-aided` needs no quotes.
pub fn parse_override(kv: &str) -> Result<(String, toml::Value)> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{kv}` is not key=value")))?;
    let key = key.trim().to_string();
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

/// Builds a config from an optional file plus overrides applied in order.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => parse_table(&std::fs::read_to_string(p)?)?,
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    from_table(table)
}

/// Deserializes a merged table, naming the offending key on failure.
pub fn from_table(table: toml::Table) -> Result<RunConfig> {
    let known = known_keys();
    for key in table.keys() {
        if !known.iter().any(|k| k == key) {
            return Err(Error::config(key, "unknown key"));
        }
    }
    match RunConfig::deserialize(toml::Value::Table(table.clone())) {
        Ok(cfg) => {
            cfg.validate()?;
            Ok(cfg)
        }
        Err(whole) => {
            for (k, v) in &table {
                let mut single = toml::Table::new();
                single.insert(k.clone(), v.clone());
                if let Err(e) = RunConfig::deserialize(toml::Value::Table(single)) {
                    return Err(Error::config(k, e.message().trim().to_string()));
                }
            }
            Err(Error::Parse(whole.message().to_string()))
        }
    }
}

fn known_keys() -> Vec<String> {
    let mut echoed = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
    echoed.insert("threads".into(), toml::Value::Integer(0));
    echoed.insert("model_a".into(), toml::Value::Integer(0));
    echoed.keys().cloned().collect()
}

fn check(ok: bool, key: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl RunConfig {
    /// Checks every key against the preconditions of the module that
    /// consumes it.
    pub fn validate(&self) -> Result<()> {
        let order_ok = |m: &usize| SUPPORTED_ORDERS.contains(m);
        let orders = format!("must be one of {SUPPORTED_ORDERS:?}");
        check(order_ok(&self.qam_order), "qam_order", &orders)?;
        check(!self.qam_orders.is_empty() && self.qam_orders.iter().all(order_ok), "qam_orders", &orders)?;
        let max_i = MixSpec::MAX_INTERFERERS;
        check(self.n_interferers <= max_i, "n_interferers", format!("must be at most {max_i}"))?;
        check(
            !self.interferer_counts.is_empty() && self.interferer_counts.iter().all(|&n| n <= max_i),
            "interferer_counts",
            format!("entries must be at most {max_i}"),
        )?;
        check(self.carriers > 0, "carriers", "must be positive")?;
        check(self.frames >= 2, "frames", "must be at least 2")?;
        check(self.sinr_min_db.is_finite(), "sinr_min_db", "must be finite")?;
        check(self.sinr_max_db > self.sinr_min_db, "sinr_max_db", "must exceed sinr_min_db")?;
        check(positive(self.sinr_step_db), "sinr_step_db", "must be positive")?;
        check(self.sinr_grid_db().len() >= 2, "sinr_step_db", "grid needs at least two points")?;
        check(self.fit_snr_db >= self.sinr_max_db, "fit_snr_db", "must be at least sinr_max_db")?;
        check(self.seeds > 0, "seeds", "must be positive")?;
        if let Some(a) = self.model_a {
            check(positive(a), "model_a", "must be positive")?;
        }
        check(
            !self.frames_list.is_empty() && self.frames_list.iter().all(|&f| f >= 2),
            "frames_list",
            "entries must be at least 2",
        )?;
        check(self.trials > 0, "trials", "must be positive")?;
        check(self.n_users > 0, "n_users", "must be positive")?;
        check(self.n_tx >= self.n_users, "n_tx", "must be at least n_users")?;
        check(positive(self.band_hz), "band_hz", "must be positive")?;
        check(positive(self.sub_band_hz), "sub_band_hz", "must be positive")?;
        check(self.carriers_per_sub_band > 0, "carriers_per_sub_band", "must be positive")?;
        let n_sub = self.band_hz / self.sub_band_hz;
        check(
            (n_sub - n_sub.round()).abs() < 1e-9 * n_sub && n_sub >= 1.0,
            "sub_band_hz",
            "must divide band_hz",
        )?;
        check(self.blocks > 0, "blocks", "must be positive")?;
        check(self.snr_db.is_finite(), "snr_db", "must be finite")?;
        check(self.doppler_hz >= 0.0 && self.doppler_hz.is_finite(), "doppler_hz", "must be finite and >= 0")?;
        check(positive(self.block_period_s), "block_period_s", "must be positive")?;
        check(
            1.0 / self.block_period_s > 2.0 * self.doppler_hz,
            "doppler_hz",
            "block rate must exceed twice the Doppler",
        )?;
        check(self.csi_interval > 0, "csi_interval", "must be positive")?;
        check((0.0..1.0).contains(&self.user_correlation), "user_correlation", "must lie in [0, 1)")?;
        check(self.moving_users <= self.n_users, "moving_users", "must not exceed n_users")?;
        check(self.delay_taps > 0, "delay_taps", "must be positive")?;
        check(positive(self.tap_spacing_s), "tap_spacing_s", "must be positive")?;
        check(positive(self.rms_delay_s), "rms_delay_s", "must be positive")?;
        DelayProfile::exponential(self.delay_taps, self.tap_spacing_s, self.rms_delay_s)
            .map_err(|e| Error::config("rms_delay_s", e.to_string()))?;
        check(self.center_frequency_hz.is_finite(), "center_frequency_hz", "must be finite")?;
        check(self.repeat_blocks >= 2, "repeat_blocks", "must be at least 2")?;
        check(self.repeat_frames >= 2, "repeat_frames", "must be at least 2")?;
        check(self.repeat_carriers > 0, "repeat_carriers", "must be positive")?;
        check(self.repeat_sinr_db.is_finite(), "repeat_sinr_db", "must be finite")?;
        check(
            !self.sub_band_list_hz.is_empty() && self.sub_band_list_hz.iter().all(|&w| positive(w)),
            "sub_band_list_hz",
            "entries must be positive",
        )?;
        check(self.sweep_trials > 0, "sweep_trials", "must be positive")?;
        check(self.sweep_blocks > 0, "sweep_blocks", "must be positive")?;

        // remaining cross-parameter preconditions of the study that runs
        fn key_for(key: &'static str) -> impl Fn(Error) -> Error {
            move |e| Error::config(key, e.to_string())
        }
        match self.study {
            Study::Mmimo => {
                for s in self.scenario.scenarios() {
                    self.mmimo_params(s).validate().map_err(key_for("scenario"))?;
                }
            }
            Study::BandwidthSweep => {
                self.bandwidth_params(false).validate().map_err(key_for("sub_band_list_hz"))?
            }
            Study::IterationStudy => self.iteration_params().validate().map_err(key_for("frames_list"))?,
            Study::FitA | Study::QamCompare | Study::Repeatability => {}
        }
        Ok(())
    }

    pub fn sinr_grid_db(&self) -> Vec<f64> {
        db_grid(self.sinr_min_db, self.sinr_max_db, self.sinr_step_db)
    }

    pub fn fit_params(&self, qam_order: usize, n_interferers: usize) -> FitParams {
        FitParams {
            qam_order,
            n_interferers,
            sinr_grid_db: self.sinr_grid_db(),
            frames: self.frames,
            carriers: self.carriers,
            seeds: self.seeds,
            snr_db: self.fit_snr_db,
            evm_mode: self.evm_mode,
        }
    }

    pub fn iteration_params(&self) -> IterationParams {
        IterationParams {
            frames_list: self.frames_list.clone(),
            sinr_grid_db: self.sinr_grid_db(),
            carriers: self.carriers,
            trials: self.trials,
            n_interferers: self.n_interferers,
            snr_db: self.fit_snr_db,
            evm_mode: self.evm_mode,
        }
    }

    /// Link parameters. The scenario fixes Doppler, user correlation and
    /// which users move; the configured values apply to the scenario that
    /// uses them.
    pub fn mmimo_params(&self, scenario: Scenario) -> MmimoParams {
        let base = MmimoParams::for_scenario(scenario);
        let (doppler_hz, user_correlation, moving_users) = match scenario {
            Scenario::Stationary => (0.0, self.user_correlation, 0),
            Scenario::Moving => (self.doppler_hz, base.user_correlation, self.moving_users),
        };
        MmimoParams {
            scenario,
            n_tx: self.n_tx,
            n_users: self.n_users,
            band_hz: self.band_hz,
            sub_band_hz: self.sub_band_hz,
            carriers_per_sub_band: self.carriers_per_sub_band,
            frames: self.frames,
            blocks: self.blocks,
            snr_db: self.snr_db,
            qam_order: self.qam_order,
            evm_mode: self.evm_mode,
            doppler_hz,
            block_period_s: self.block_period_s,
            csi_interval: self.csi_interval,
            user_correlation,
            moving_users,
            delay_taps: self.delay_taps,
            tap_spacing_s: self.tap_spacing_s,
            rms_delay_s: self.rms_delay_s,
            flat_channel: false,
            center_frequency_hz: self.center_frequency_hz,
        }
    }

    pub fn repeatability_params(&self) -> RepeatabilityParams {
        RepeatabilityParams {
            blocks: self.repeat_blocks,
            frames: self.repeat_frames,
            carriers: self.repeat_carriers,
            carrier_spacing_hz: self.sub_band_hz / self.carriers_per_sub_band as f64,
            qam_order: self.qam_order,
            n_interferers: self.n_users.saturating_sub(1).min(MixSpec::MAX_INTERFERERS),
            sinr_db: self.repeat_sinr_db,
            snr_db: self.fit_snr_db,
            fixed_payload: false,
        }
    }

    pub fn bandwidth_params(&self, flat_channel: bool) -> BandwidthParams {
        BandwidthParams {
            sub_band_list_hz: self.sub_band_list_hz.clone(),
            trials: self.sweep_trials,
            link: MmimoParams {
                blocks: self.sweep_blocks,
                flat_channel,
                ..self.mmimo_params(self.sweep_scenario)
            },
        }
    }

    /// Resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
