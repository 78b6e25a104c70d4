//! Study orchestration and output files.
//!
//! Every study produces CSV tables, `summary.json` and `resolved-config.toml`.
//! All content is built in memory and only written once the study has
//! finished, so a failed run leaves no partial files.
//!
//! `summary.json` holds:
//!
//! ```text
//! study     study name
//! seed      master seed
//! config    resolved configuration
//! headline  study-specific statistics
//! verdicts  [{ name, pass, value, threshold }]
//! files     names of the files written alongside
//! ```

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::calibration::{
    bandwidth_sweep, fit_gradient, iteration_study, mmimo_run, signalling_repeatability, BandwidthSweep, FitOutcome,
    Scenario, SweepResult,
};
use crate::config::{RunConfig, Study};
use crate::error::{Error, Result};
use crate::metrics::{GradientModel, SinrRecord};
use crate::waveform::MixSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: String,
}

impl Verdict {
    fn new(name: &str, pass: bool, value: f64, threshold: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            value,
            threshold: threshold.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, Vec<u8>)>,
    pub headline: Value,
    pub verdicts: Vec<Verdict>,
}

impl StudyOutput {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(self) -> Result<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Runs the configured study on the current rayon pool.
pub fn run_study(cfg: &RunConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let mut out = match cfg.study {
        Study::FitA => fit_a(cfg)?,
        Study::QamCompare => qam_compare(cfg)?,
        Study::IterationStudy => iteration(cfg)?,
        Study::Mmimo => mmimo(cfg)?,
        Study::Repeatability => repeatability(cfg)?,
        Study::BandwidthSweep => bandwidth(cfg)?,
    };
    let config: Value = serde_json::to_value(cfg).map_err(|e| Error::Parse(e.to_string()))?;
    let mut names: Vec<String> = out.files.iter().map(|(n, _)| n.clone()).collect();
    names.push("resolved-config.toml".into());
    let summary = json!({
        "study": cfg.study.name(),
        "seed": cfg.seed,
        "config": config,
        "headline": out.headline,
        "verdicts": out.verdicts,
        "files": names,
    });
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    out.files.push(("resolved-config.toml".into(), cfg.to_toml().into_bytes()));
    out.files.push(("summary.json".into(), text.into_bytes()));
    Ok(out)
}

/// Gradient for the prediction studies: the configured value or a fresh
/// flat-channel fit.
fn prediction_model(cfg: &RunConfig, n_interferers: usize) -> Result<GradientModel> {
    if let Some(a) = cfg.model_a {
        return GradientModel::new(a, cfg.qam_order, n_interferers);
    }
    match fit_gradient(&cfg.fit_params(cfg.qam_order, n_interferers), cfg.seed)? {
        FitOutcome::Fitted(r) => Ok(r.model),
        FitOutcome::NotModelable { reason, .. } => Err(Error::config("qam_order", reason)),
    }
}

fn within_band(a: f64, reference: f64, rel: f64) -> bool {
    (a - reference).abs() <= rel * reference
}

fn fit_a(cfg: &RunConfig) -> Result<StudyOutput> {
    let outcome = fit_gradient(&cfg.fit_params(cfg.qam_order, cfg.n_interferers), cfg.seed)?;
    let mut table = Table::new(&["sinr_db", "evm_percent", "model_evm_percent", "ber", "signalled_sinr_db"])?;
    let mut verdicts = Vec::new();
    let headline = match &outcome {
        FitOutcome::NotModelable { qam_order, reason } => {
            verdicts.push(Verdict::new("not_modelable_marker", true, *qam_order as f64, "order 4"));
            json!({ "outcome": "not-modelable", "qam_order": qam_order, "reason": reason })
        }
        FitOutcome::Fitted(r) => {
            for k in 0..r.sinr_grid_db.len() {
                let s = 10f64.powf(r.sinr_grid_db[k] / 10.0);
                table.row(&[
                    num(r.sinr_grid_db[k]),
                    num(r.evm_curve_percent[k]),
                    num(r.model.evm_percent(s)),
                    num(r.ber_curve[k]),
                    num(r.signalled_sinr_db[k]),
                ])?;
            }
            if let Some(reference) = GradientModel::reference(cfg.qam_order, cfg.n_interferers) {
                verdicts.push(Verdict::new(
                    "gradient_within_15_percent",
                    within_band(r.model.a_value, reference.a_value, 0.15),
                    r.model.a_value,
                    format!("{} +- 15%", reference.a_value),
                ));
            }
            json!({
                "outcome": "fitted",
                "a_value": r.model.a_value,
                "a_std_error": r.a_std_error,
                "residual_rms_db": r.residual_rms_db,
                "qam_order": r.model.qam_order,
                "n_interferers": r.model.n_interferers,
            })
        }
    };
    Ok(StudyOutput {
        files: vec![("fig3.csv".into(), table.finish()?)],
        headline,
        verdicts,
    })
}

fn qam_compare(cfg: &RunConfig) -> Result<StudyOutput> {
    let mut table = Table::new(&[
        "qam_order",
        "n_interferers",
        "status",
        "a_value",
        "a_std_error",
        "residual_rms_db",
        "reference_a",
    ])?;
    // (order, interferers, A)
    let mut fitted = Vec::new();
    for &order in &cfg.qam_orders {
        for &n in &cfg.interferer_counts {
            let outcome = fit_gradient(&cfg.fit_params(order, n), cfg.seed)?;
            let reference = GradientModel::reference(order, n).map(|m| num(m.a_value)).unwrap_or_default();
            match outcome {
                FitOutcome::NotModelable { .. } => {
                    table.row(&[order.to_string(), n.to_string(), "not-modelable".into(), String::new(), String::new(), String::new(), reference])?;
                }
                FitOutcome::Fitted(r) => {
                    table.row(&[
                        order.to_string(),
                        n.to_string(),
                        "fitted".into(),
                        num(r.model.a_value),
                        num(r.a_std_error),
                        num(r.residual_rms_db),
                        reference,
                    ])?;
                    fitted.push((order, n, r.model.a_value));
                }
            }
        }
    }
    let mut verdicts = Vec::new();
    let first_count = cfg.interferer_counts[0];
    let mut by_order: Vec<(usize, f64)> = fitted.iter().filter(|f| f.1 == first_count).map(|f| (f.0, f.2)).collect();
    by_order.sort_by_key(|f| f.0);
    if by_order.len() >= 2 {
        let worst = by_order.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::INFINITY, f64::min);
        verdicts.push(Verdict::new("monotone_in_order", worst >= 0.0, worst, "smallest step >= 0"));
    }
    let mut worst_spread: f64 = 0.0;
    for &order in cfg.qam_orders.iter().filter(|&&m| m >= 64) {
        let a: Vec<f64> = fitted.iter().filter(|f| f.0 == order).map(|f| f.2).collect();
        if a.len() >= 2 {
            let (lo, hi) = a.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
            worst_spread = worst_spread.max((hi - lo) / lo);
        }
    }
    verdicts.push(Verdict::new("interferer_invariance", worst_spread < 0.05, worst_spread, "< 0.05 relative"));
    for (order, n, a) in &fitted {
        if (*order == 64 || *order == 256) && *n == 1 {
            let reference = GradientModel::reference(*order, 1).expect("tabulated").a_value;
            verdicts.push(Verdict::new(
                &format!("gradient_{order}_within_15_percent"),
                within_band(*a, reference, 0.15),
                *a,
                format!("{reference} +- 15%"),
            ));
        }
    }
    let headline = json!({
        "fits": fitted
            .iter()
            .map(|(o, n, a)| json!({ "qam_order": o, "n_interferers": n, "a_value": a }))
            .collect::<Vec<_>>(),
    });
    Ok(StudyOutput {
        files: vec![("table-i.csv".into(), table.finish()?)],
        headline,
        verdicts,
    })
}

fn sweep_table(sweep: &SweepResult) -> Result<Vec<u8>> {
    let mut table = Table::new(&[
        &sweep.parameter,
        "mean_error_db",
        "std_error_db",
        "max_abs_error_db",
        "within_half_db",
        "n_records",
    ])?;
    for p in &sweep.points {
        table.row(&[
            num(p.value),
            num(p.mean_error_db),
            num(p.std_error_db),
            num(p.max_abs_error_db),
            num(p.within_half_db),
            p.n_records.to_string(),
        ])?;
    }
    table.finish()
}

fn iteration(cfg: &RunConfig) -> Result<StudyOutput> {
    let model = prediction_model(cfg, cfg.n_interferers)?;
    let sweep = iteration_study(&cfg.iteration_params(), &model, cfg.seed)?;
    let mut verdicts = Vec::new();
    let long: Vec<_> = sweep.points.iter().filter(|p| p.value >= 10.0).collect();
    if !long.is_empty() {
        let worst = long.iter().map(|p| p.within_half_db).fold(1.0, f64::min);
        verdicts.push(Verdict::new("within_half_db_at_10_frames_or_more", worst >= 0.95, worst, ">= 0.95"));
        if let Some(two) = sweep.point(2.0) {
            verdicts.push(Verdict::new(
                "two_frames_rate_lower",
                two.within_half_db < worst,
                two.within_half_db,
                format!("< {worst}"),
            ));
        }
    }
    let headline = json!({ "a_value": model.a_value, "sweep": sweep });
    Ok(StudyOutput {
        files: vec![("fig5.csv".into(), sweep_table(&sweep)?)],
        headline,
        verdicts,
    })
}

fn records_table(records: &[SinrRecord]) -> Result<Vec<u8>> {
    let mut table = Table::new(&[
        "user",
        "time_block",
        "sub_band_index",
        "center_freq_hz",
        "sinr_s_db",
        "sinr_p_db",
        "error_db",
    ])?;
    for r in records {
        table.row(&[
            r.user.to_string(),
            r.time_block.to_string(),
            r.sub_band_index.to_string(),
            num(r.center_freq_hz),
            num(r.sinr_signalled_db),
            num(r.sinr_predicted_db),
            num(r.prediction_error_db),
        ])?;
    }
    table.finish()
}

fn link_interferers(cfg: &RunConfig) -> usize {
    cfg.n_users.saturating_sub(1).clamp(1, MixSpec::MAX_INTERFERERS)
}

fn mmimo(cfg: &RunConfig) -> Result<StudyOutput> {
    let model = prediction_model(cfg, link_interferers(cfg))?;
    let mut files = Vec::new();
    let mut verdicts = Vec::new();
    let mut stats = serde_json::Map::new();
    for scenario in cfg.scenario.scenarios() {
        let records = mmimo_run(&cfg.mmimo_params(scenario), &model, cfg.seed)?;
        let errors: Vec<f64> = records.iter().map(|r| r.prediction_error_db).collect();
        let point = crate::calibration::SweepPoint::from_errors(cfg.sub_band_hz, &errors);
        let peak = records.iter().map(|r| r.sinr_signalled_db).fold(f64::NEG_INFINITY, f64::max);
        let low = records.iter().map(|r| r.sinr_signalled_db).fold(f64::INFINITY, f64::min);
        let name = match scenario {
            Scenario::Stationary => {
                verdicts.push(Verdict::new("stationary_peak_below_10_db", peak < 10.0, peak, "< 10 dB"));
                "fig8-mesh.csv"
            }
            Scenario::Moving => {
                verdicts.push(Verdict::new(
                    "moving_within_2_db",
                    point.within_two_db >= 0.95,
                    point.within_two_db,
                    ">= 0.95",
                ));
                "fig9-mesh.csv"
            }
        };
        stats.insert(
            scenario.name().into(),
            json!({
                "records": point.n_records,
                "mean_error_db": point.mean_error_db,
                "std_error_db": point.std_error_db,
                "within_two_db": point.within_two_db,
                "sinr_s_min_db": low,
                "sinr_s_max_db": peak,
            }),
        );
        files.push((name.to_string(), records_table(&records)?));
    }
    let headline = json!({ "a_value": model.a_value, "scenarios": stats });
    Ok(StudyOutput { files, headline, verdicts })
}

fn repeatability(cfg: &RunConfig) -> Result<StudyOutput> {
    let r = signalling_repeatability(&cfg.repeatability_params(), cfg.seed)?;
    let mut table = Table::new(&["block", "wanted_mean_var", "interference_mean_var", "sinr_s_db"])?;
    for b in &r.blocks {
        table.row(&[b.block.to_string(), num(b.wanted_mean_var), num(b.interference_mean_var), num(b.sinr_s_db)])?;
    }
    let verdicts = vec![
        Verdict::new(
            "relative_spread_1_to_4_percent",
            (1.0..=4.0).contains(&r.relative_spread_percent),
            r.relative_spread_percent,
            "[1, 4] %",
        ),
        Verdict::new(
            "sinr_spread_0p1_to_0p4_db",
            (0.1..=0.4).contains(&r.sinr_spread_db),
            r.sinr_spread_db,
            "[0.1, 0.4] dB",
        ),
    ];
    let headline = json!({
        "relative_spread_percent": r.relative_spread_percent,
        "sinr_spread_db": r.sinr_spread_db,
        "mean_sinr_s_db": r.mean_sinr_s_db,
        "mean_wanted_var": r.mean_wanted_var,
    });
    Ok(StudyOutput {
        files: vec![("repeatability.csv".into(), table.finish()?)],
        headline,
        verdicts,
    })
}

fn bandwidth_table(sweep: &BandwidthSweep) -> Result<Vec<u8>> {
    let mut table = Table::new(&["sub_band_hz", "carriers", "mean_error_db", "std_error_db", "n_records"])?;
    for (p, n) in sweep.result.points.iter().zip(&sweep.carriers) {
        table.row(&[num(p.value), n.to_string(), num(p.mean_error_db), num(p.std_error_db), p.n_records.to_string()])?;
    }
    table.finish()
}

/// Verdicts on the std-vs-width shape of a frequency-selective sweep and
/// its flat control.
pub fn bandwidth_verdicts(selective: &SweepResult, flat: &SweepResult) -> Vec<Verdict> {
    let std_at = |s: &SweepResult, w: f64| s.point(w).map(|p| p.std_error_db);
    let mut v = Vec::new();
    if let (Some(one), Some(two)) = (std_at(selective, 1e6), std_at(selective, 2e6)) {
        v.push(Verdict::new("std_1mhz_above_2mhz", one > two, one - two, "> 0 dB"));
        let wide: Vec<f64> = selective.points.iter().filter(|p| p.value >= 20e6).map(|p| p.std_error_db).collect();
        if !wide.is_empty() {
            let lowest = wide.iter().cloned().fold(f64::INFINITY, f64::min);
            v.push(Verdict::new("std_20mhz_plus_above_2mhz", lowest > two, lowest - two, "> 0 dB"));
        }
    }
    let worst = flat.points.windows(2).map(|w| w[1].std_error_db - w[0].std_error_db).fold(f64::NEG_INFINITY, f64::max);
    v.push(Verdict::new("flat_control_non_increasing", worst <= 0.0, worst, "largest step <= 0 dB"));
    v
}

fn bandwidth(cfg: &RunConfig) -> Result<StudyOutput> {
    let model = prediction_model(cfg, link_interferers(cfg))?;
    let selective = bandwidth_sweep(&cfg.bandwidth_params(false), &model, cfg.seed)?;
    let flat = bandwidth_sweep(&cfg.bandwidth_params(true), &model, cfg.seed)?;
    let verdicts = bandwidth_verdicts(&selective.result, &flat.result);
    let headline = json!({
        "a_value": model.a_value,
        "scenario": cfg.sweep_scenario.name(),
        "selective": selective.result,
        "flat": flat.result,
    });
    Ok(StudyOutput {
        files: vec![
            ("fig10.csv".into(), bandwidth_table(&selective)?),
            ("fig10-flat.csv".into(), bandwidth_table(&flat)?),
        ],
        headline,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(study: Study) -> RunConfig {
        RunConfig {
            study,
            carriers: 60,
            seeds: 1,
            frames_list: vec![2, 10],
            trials: 2,
            band_hz: 4e6,
            blocks: 2,
            repeat_blocks: 10,
            sub_band_list_hz: vec![1e6, 2e6, 4e6],
            sweep_trials: 1,
            model_a: Some(100.0),
            ..RunConfig::default()
        }
    }

    #[test]
    fn every_study_writes_headers_and_summary() {
        let expect = [
            (Study::FitA, "fig3.csv", "sinr_db,evm_percent"),
            (Study::QamCompare, "table-i.csv", "qam_order,n_interferers"),
            (Study::IterationStudy, "fig5.csv", "frames,mean_error_db"),
            (Study::Mmimo, "fig9-mesh.csv", "user,time_block,sub_band_index,center_freq_hz,sinr_s_db,sinr_p_db,error_db"),
            (Study::Repeatability, "repeatability.csv", "block,"),
            (Study::BandwidthSweep, "fig10.csv", "sub_band_hz,carriers,mean_error_db,std_error_db,n_records"),
        ];
        for (study, file, header) in expect {
            let mut cfg = quick(study);
            if study == Study::QamCompare {
                cfg.qam_orders = vec![4, 64];
                cfg.interferer_counts = vec![1];
            }
            let out = run_study(&cfg).unwrap();
            let text = String::from_utf8(out.file(file).unwrap().to_vec()).unwrap();
            assert!(text.starts_with(header), "{file}: {text}");
            let summary: Value = serde_json::from_slice(out.file("summary.json").unwrap()).unwrap();
            assert_eq!(summary["study"], study.name());
            assert!(out.file("resolved-config.toml").is_some());
        }
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 2.4e9 + 0.125] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn qpsk_fit_reports_marker() {
        let mut cfg = quick(Study::FitA);
        cfg.qam_order = 4;
        let out = run_study(&cfg).unwrap();
        let summary: Value = serde_json::from_slice(out.file("summary.json").unwrap()).unwrap();
        assert_eq!(summary["headline"]["outcome"], "not-modelable");
    }
}
