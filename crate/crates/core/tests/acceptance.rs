//! Acceptance suite. Prints one line per criterion and exits nonzero when a
//! hard criterion fails. Soft criteria print SOFT-FAIL without failing.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use evm_sinr::calibration::{
    bandwidth_sweep, fit_gradient, iteration_study, mmimo_run, signalling_repeatability, BandwidthParams, FitOutcome,
    FitParams, IterationParams, MmimoParams, RepeatabilityParams, Scenario, SweepPoint,
};
use evm_sinr::channel::{evolve, flat_rayleigh, tdl_response, DelayProfile, MobilityProfile};
use evm_sinr::config::{RunConfig, Study};
use evm_sinr::metrics::{predict_from_percent, rms_evm, EvmReference, GradientModel};
use evm_sinr::precoding::{effective_channel, zero_forcing_block};
use evm_sinr::rng::{complex_normal, substream};
use evm_sinr::study::{bandwidth_verdicts, run_study};
use evm_sinr::waveform::{random_grid, ComplexGrid, Constellation};
use rand::Rng;

const SEED: u64 = 20_240_601;

#[derive(PartialEq)]
enum Outcome {
    Pass,
    Fail,
    SoftFail,
}

struct Line {
    id: u32,
    name: &'static str,
    outcome: Outcome,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

fn criterion(
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    f: impl FnOnce() -> (Outcome, String),
) -> Line {
    let start = Instant::now();
    let (mut outcome, mut detail) = f();
    let elapsed = start.elapsed();
    if let Some(l) = limit {
        if elapsed > l && outcome != Outcome::Fail {
            outcome = Outcome::Fail;
            detail.push_str(&format!("; runtime over {:.0} s", l.as_secs_f64()));
        }
    }
    let line = Line {
        id,
        name,
        outcome,
        detail,
        elapsed,
        limit,
    };
    let tag = match line.outcome {
        Outcome::Pass => "PASS",
        Outcome::Fail => "FAIL",
        Outcome::SoftFail => "SOFT-FAIL",
    };
    let limit = line
        .limit
        .map(|l| format!(" / {:.0} s", l.as_secs_f64()))
        .unwrap_or_default();
    println!(
        "[{tag}] {:>2} {}: {} ({:.1} s{limit})",
        line.id,
        line.name,
        line.detail,
        line.elapsed.as_secs_f64()
    );
    line
}

fn verdict(pass: bool) -> Outcome {
    if pass {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn awgn_identity() -> (Outcome, String) {
    let c = Constellation::new(64).unwrap();
    let mut worst: f64 = 0.0;
    for (k, snr_db) in [0.0, 5.0, 10.0, 15.0, 20.0].into_iter().enumerate() {
        let mut rng = substream(SEED, &[1, k as u64]);
        let x = random_grid(&mut rng, &c, 1200, 20);
        let var = 10f64.powf(-snr_db / 10.0);
        let noisy: Vec<_> = x.symbols().as_slice().iter().map(|&s| s + complex_normal(&mut rng, var)).collect();
        let rx = ComplexGrid::from_vec(1200, 20, noisy).unwrap();
        let evm = rms_evm(&rx, EvmReference::DataAided(x.symbols()), &c).unwrap().rms_percent;
        let expect = 100.0 * var.sqrt();
        worst = worst.max((evm - expect).abs() / expect);
    }
    (verdict(worst <= 0.02), format!("worst relative deviation {:.4} (limit 0.02)", worst))
}

fn law_round_trip() -> (Outcome, String) {
    let mut rng = substream(SEED, &[2]);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = rng.random_range(10.0..200.0);
        let sinr_db: f64 = rng.random_range(-10.0..30.0);
        let m = GradientModel::new(a, 64, 1).unwrap();
        let evm = m.evm_percent(10f64.powf(sinr_db / 10.0));
        let back = predict_from_percent(evm, a).unwrap();
        worst = worst.max((back - sinr_db).abs());
    }
    (verdict(worst <= 1e-12), format!("worst |dB error| {worst:.2e} over 1000 pairs (limit 1e-12)"))
}

fn table_one() -> (Outcome, String) {
    let orders = [8, 16, 32, 64, 128, 256, 512];
    let mut a = vec![[0.0f64; 3]; orders.len()];
    for (i, &m) in orders.iter().enumerate() {
        for n in 1..=3 {
            let p = FitParams {
                qam_order: m,
                n_interferers: n,
                ..FitParams::default()
            };
            a[i][n - 1] = match fit_gradient(&p, SEED).unwrap() {
                FitOutcome::Fitted(r) => r.model.a_value,
                FitOutcome::NotModelable { .. } => f64::NAN,
            };
        }
    }
    let one: Vec<f64> = a.iter().map(|r| r[0]).collect();
    let monotone = one.windows(2).all(|w| w[1] >= w[0]);
    let mut invariance: f64 = 0.0;
    for (i, &m) in orders.iter().enumerate() {
        if m >= 64 {
            let lo = a[i].iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = a[i].iter().cloned().fold(0.0, f64::max);
            invariance = invariance.max((hi - lo) / lo);
        }
    }
    let in_band = |a: f64, r: f64| (a - r).abs() <= 0.15 * r;
    let a64 = one[3];
    let a256 = one[5];
    let soft_ok = in_band(a64, 107.0) && in_band(a256, 129.0);
    let hard_ok = monotone && invariance < 0.05;
    let listing: Vec<String> = orders.iter().zip(&one).map(|(m, a)| format!("{m}:{a:.3}")).collect();
    let detail = format!(
        "A(1 interferer) [{}]; monotone {}; interferer spread {:.4} (limit 0.05); soft: A64 {:.2} in 107+-15% {}, A256 {:.2} in 129+-15% {}",
        listing.join(" "),
        monotone,
        invariance,
        a64,
        in_band(a64, 107.0),
        a256,
        in_band(a256, 129.0),
    );
    let outcome = if !hard_ok {
        Outcome::Fail
    } else if !soft_ok {
        Outcome::SoftFail
    } else {
        Outcome::Pass
    };
    (outcome, detail)
}

fn fitted_model(order: usize, n_interferers: usize) -> GradientModel {
    let p = FitParams {
        qam_order: order,
        n_interferers,
        ..FitParams::default()
    };
    match fit_gradient(&p, SEED).unwrap() {
        FitOutcome::Fitted(r) => r.model,
        FitOutcome::NotModelable { reason, .. } => panic!("{reason}"),
    }
}

fn iteration() -> (Outcome, String) {
    let model = fitted_model(64, 1);
    let sweep = iteration_study(&IterationParams::default(), &model, SEED).unwrap();
    let long: Vec<&SweepPoint> = sweep.points.iter().filter(|p| p.value >= 10.0).collect();
    let worst_long = long.iter().map(|p| p.within_half_db).fold(1.0, f64::min);
    let two = sweep.point(2.0).expect("2 frames in the study").within_half_db;
    let rates: Vec<String> = sweep
        .points
        .iter()
        .map(|p| format!("{}:{:.4}/{:.4}dB", p.value, p.within_half_db, p.std_error_db))
        .collect();
    (
        verdict(worst_long >= 0.95 && two < worst_long),
        format!(
            "within 0.5 dB / std per frame count [{}]; >=10 frames min {:.4} (limit 0.95); 2 frames {:.4} strictly lower: {}",
            rates.join(" "),
            worst_long,
            two,
            two < worst_long
        ),
    )
}

fn zf_exactness() -> (Outcome, String) {
    let profile = DelayProfile::default();
    let spacing = 2e6 / 120.0;
    let mut worst_db = f64::NEG_INFINITY;
    for t in 0..500u64 {
        let h = tdl_response(&profile, 8.0 * spacing, spacing, 32, 3, &mut substream(SEED, &[5, t])).unwrap();
        let w = zero_forcing_block(&h, 0).unwrap();
        let e = effective_channel(&h, &w, 0).unwrap();
        for c in 0..e.n_carriers() {
            for u in 0..3 {
                worst_db = worst_db.max(e.leakage_ratio_db(c, u));
            }
        }
    }
    // leakage against CSI lag, paired across lags within each trial
    let m = MobilityProfile::default();
    let lags = 5;
    let trials = 200;
    let mut per_trial = vec![vec![0.0; lags + 1]; trials];
    for (t, row) in per_trial.iter_mut().enumerate() {
        let h0 = flat_rayleigh(32, 3, &mut substream(SEED, &[6, t as u64, 0])).unwrap();
        let h = evolve(&h0, &m, lags + 1, &mut substream(SEED, &[6, t as u64, 1])).unwrap();
        let w = zero_forcing_block(&h, 0).unwrap();
        for (k, l) in row.iter_mut().enumerate() {
            let e = effective_channel(&h, &w, k).unwrap();
            *l = (0..3).map(|u| e.leakage_power(0, u)).sum::<f64>() / 3.0;
        }
    }
    let n = trials as f64;
    let mean: Vec<f64> = (0..=lags).map(|k| per_trial.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let mut monotone = true;
    for k in 0..lags {
        let d: Vec<f64> = per_trial.iter().map(|r| r[k + 1] - r[k]).collect();
        let md = d.iter().sum::<f64>() / n;
        let se = (d.iter().map(|x| (x - md).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        if md < -3.0 * se {
            monotone = false;
        }
    }
    let listing: Vec<String> = mean.iter().map(|x| format!("{x:.4}")).collect();
    (
        verdict(worst_db <= -100.0 && monotone && mean[1] > mean[0]),
        format!(
            "worst leakage {:.1} dB over 500 channels x 8 carriers (limit -100); mean leakage by lag [{}] non-decreasing within 3 SE: {}",
            worst_db,
            listing.join(" "),
            monotone
        ),
    )
}

fn end_to_end() -> (Outcome, String) {
    let model = fitted_model(64, 2);
    let mut parts = Vec::new();
    let mut ok = true;
    for s in [Scenario::Moving, Scenario::Stationary] {
        let records = mmimo_run(&MmimoParams::for_scenario(s), &model, SEED).unwrap();
        let errors: Vec<f64> = records.iter().map(|r| r.prediction_error_db).collect();
        let p = SweepPoint::from_errors(2e6, &errors);
        ok &= p.within_two_db >= 0.95;
        parts.push(format!("{}: {:.4} of {} records within 2 dB", s.name(), p.within_two_db, p.n_records));
    }
    (verdict(ok), format!("A {:.2}; {} (limit 0.95)", model.a_value, parts.join("; ")))
}

fn repeatability() -> (Outcome, String) {
    let r = signalling_repeatability(&RepeatabilityParams::default(), SEED).unwrap();
    let ok = (1.0..=4.0).contains(&r.relative_spread_percent) && (0.1..=0.4).contains(&r.sinr_spread_db);
    (
        verdict(ok),
        format!(
            "variance spread {:.3}% (range 1..4), SINR_S spread {:.4} dB (range 0.1..0.4) over {} blocks",
            r.relative_spread_percent,
            r.sinr_spread_db,
            r.blocks.len()
        ),
    )
}

fn bandwidth_shape() -> (Outcome, String) {
    let model = fitted_model(64, 2);
    let selective = bandwidth_sweep(&BandwidthParams::default(), &model, SEED).unwrap();
    let mut flat_params = BandwidthParams::default();
    flat_params.link.flat_channel = true;
    let flat = bandwidth_sweep(&flat_params, &model, SEED).unwrap();
    let verdicts = bandwidth_verdicts(&selective.result, &flat.result);
    let std_list = |s: &evm_sinr::calibration::SweepResult| {
        s.points
            .iter()
            .map(|p| format!("{}M:{:.3}", p.value / 1e6, p.std_error_db))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let checks: Vec<String> = verdicts.iter().map(|v| format!("{} {}", v.name, v.pass)).collect();
    (
        verdict(verdicts.iter().all(|v| v.pass)),
        format!(
            "std dB selective [{}]; flat [{}]; {}",
            std_list(&selective.result),
            std_list(&flat.result),
            checks.join(", ")
        ),
    )
}

fn small_config(study: Study) -> RunConfig {
    RunConfig {
        study,
        seed: SEED,
        carriers: 120,
        seeds: 2,
        qam_orders: vec![4, 16, 64],
        interferer_counts: vec![1, 2],
        frames_list: vec![2, 10],
        trials: 3,
        band_hz: 8e6,
        blocks: 4,
        repeat_blocks: 20,
        sub_band_list_hz: vec![1e6, 2e6, 4e6, 8e6],
        sweep_trials: 3,
        ..RunConfig::default()
    }
}

fn determinism() -> (Outcome, String) {
    let studies = [
        Study::FitA,
        Study::QamCompare,
        Study::IterationStudy,
        Study::Mmimo,
        Study::Repeatability,
        Study::BandwidthSweep,
    ];
    let run = |threads: usize, study: Study| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_study(&small_config(study)).unwrap()).files
    };
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for study in studies {
        let a = run(1, study);
        let b = run(4, study);
        let c = run(4, study);
        compared += a.len();
        if a != b || b != c {
            mismatched.push(study.name());
        }
    }
    (
        verdict(mismatched.is_empty()),
        format!(
            "{compared} files per run over 6 studies, threads 1 vs 4 vs 4 again; mismatches: {:?}",
            mismatched
        ),
    )
}

fn qpsk_guard() -> (Outcome, String) {
    let p = FitParams {
        qam_order: 4,
        ..FitParams::default()
    };
    match fit_gradient(&p, SEED).unwrap() {
        FitOutcome::NotModelable { qam_order, .. } => (Outcome::Pass, format!("order {qam_order} -> not-modelable")),
        FitOutcome::Fitted(r) => (Outcome::Fail, format!("returned numeric A {}", r.model.a_value)),
    }
}

fn main() -> ExitCode {
    let lines = vec![
        criterion(1, "AWGN EVM identity", secs(10), awgn_identity),
        criterion(2, "EVM-SINR law round trip", None, law_round_trip),
        criterion(3, "gradient table", secs(300), table_one),
        criterion(4, "iteration study", secs(120), iteration),
        criterion(5, "zero-forcing exactness", secs(60), zf_exactness),
        criterion(6, "end-to-end prediction error", secs(300), end_to_end),
        criterion(7, "signalling repeatability", secs(120), repeatability),
        criterion(8, "bandwidth sweep shape", secs(600), bandwidth_shape),
        criterion(9, "determinism", None, determinism),
        criterion(10, "4-QAM guard", None, qpsk_guard),
    ];
    let failed: Vec<u32> = lines.iter().filter(|l| l.outcome == Outcome::Fail).map(|l| l.id).collect();
    let soft: Vec<u32> = lines.iter().filter(|l| l.outcome == Outcome::SoftFail).map(|l| l.id).collect();
    println!(
        "acceptance: {} pass, {} soft-fail {:?}, {} fail {:?}",
        lines.len() - failed.len() - soft.len(),
        soft.len(),
        soft,
        failed.len(),
        failed
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
