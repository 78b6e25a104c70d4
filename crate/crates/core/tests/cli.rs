use std::path::Path;
use std::process::{Command, Output};

fn evm_sinr(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evm-sinr"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("EVM_SINR_OUT")
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn fit_a_writes_curve_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = evm_sinr(&["fit-a", "--carriers", "120", "--seed", "3", "--set", "seeds=1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "sinr_db,evm_percent,model_evm_percent,ber,signalled_sinr_db");
    assert_eq!(lines.count(), 26);
    let s = summary(dir.path());
    assert_eq!(s["study"], "fit-a");
    assert_eq!(s["seed"], 3);
    assert_eq!(s["config"]["carriers"], 120);
    assert!(s["headline"]["a_value"].as_f64().unwrap() > 50.0);
    assert!(s["verdicts"].as_array().unwrap().iter().all(|v| v["pass"].is_boolean()));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\nrepeat_blocks = 30\nrepeat_carriers = 60\n").unwrap();
    let out = dir.path().join("out");
    let o = evm_sinr(
        &["repeatability", "--config", cfg.to_str().unwrap(), "--set", "repeat_blocks=12"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["seed"], 11);
    assert_eq!(s["config"]["repeat_blocks"], 12);
    let rows = std::fs::read_to_string(out.join("repeatability.csv")).unwrap().lines().count();
    assert_eq!(rows, 13);
    let echo = std::fs::read_to_string(out.join("resolved-config.toml")).unwrap();
    assert!(echo.contains("repeat_blocks = 12"));
    assert!(echo.contains("repeat_carriers = 60"));
}

#[test]
fn invalid_config_names_key_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = evm_sinr(&["fit-a", "--qam-order", "7"], &out);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("qam_order"), "{err}");
    assert!(!out.exists());

    let o = evm_sinr(&["mmimo", "--set", "sub_band_hz=7e6"], &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sub_band_hz"));

    let o = evm_sinr(&["mmimo", "--set", "frames=lots"], &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("`frames`"));
}

#[test]
fn same_seed_same_bytes_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = |t: &'static str| {
        vec![
            "mmimo", "--threads", t, "--seed", "5", "--blocks", "3", "--set", "band_hz=4e6", "--set", "model_a=100.0",
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(evm_sinr(&args("1"), &a).status.success());
    assert!(evm_sinr(&args("3"), &b).status.success());
    for f in ["fig8-mesh.csv", "fig9-mesh.csv", "summary.json", "resolved-config.toml"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let mesh = std::fs::read_to_string(a.join("fig9-mesh.csv")).unwrap();
    assert_eq!(
        mesh.lines().next().unwrap(),
        "user,time_block,sub_band_index,center_freq_hz,sinr_s_db,sinr_p_db,error_db"
    );
    // 3 users x 3 blocks x 2 sub-bands
    assert_eq!(mesh.lines().count(), 1 + 18);
}

#[test]
fn qpsk_is_reported_not_modelable() {
    let dir = tempfile::tempdir().unwrap();
    let o = evm_sinr(&["fit-a", "--qam-order", "4"], dir.path());
    assert!(o.status.success());
    assert_eq!(summary(dir.path())["headline"]["outcome"], "not-modelable");
}
