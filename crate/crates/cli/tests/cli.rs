use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn starris(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starris"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        format!("[array]\nantennas = 16\n\n[surface]\nn_h = 4\nn_v = 4\n\n[pgam]\nn_restarts = 3\n{extra}"),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn de_writes_versioned_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = starris(&["de", "--out", "d"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("d/de.csv")).unwrap();
    assert!(csv.starts_with("# "));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("schema_version,"));
    assert!(data_rows(&csv).iter().all(|r| r[0] == "1"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("d/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"]["name"], "de");
    assert_eq!(manifest["reduced_budget"], false);
    assert_eq!(manifest["outputs"][0]["path"], "de.csv");
}

#[test]
fn pgam_writes_one_trace_per_restart_and_a_winner() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = starris(&["pgam", "--config", &cfg, "--out", "p"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for r in 0..3 {
        let csv = fs::read_to_string(tmp.path().join(format!("p/trace_restart_{r}.csv"))).unwrap();
        let values: Vec<f64> = data_rows(&csv).iter().map(|r| r[3].parse().unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
    }
    assert!(tmp.path().join("p/winner.pbm").exists());
}

#[test]
fn mode_switching_winner_is_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = starris(&["pgam", "--config", &cfg, "--protocol", "ms", "--out", "p"], tmp.path());
    assert_eq!(code(&o), 0);
    let pbm = fs::read_to_string(tmp.path().join("p/winner.pbm")).unwrap();
    for line in pbm.lines().skip(1) {
        let beta: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(beta == 0.0 || beta == 1.0, "{line}");
    }
}

#[test]
fn de_accepts_an_optimized_surface() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    assert_eq!(code(&starris(&["pgam", "--config", &cfg, "--out", "p"], tmp.path())), 0);
    let o = starris(&["de", "--config", &cfg, "--pbm", "p/winner.pbm", "--out", "d"], tmp.path());
    assert_eq!(code(&o), 0);
    let plain = starris(&["de", "--config", &cfg, "--out", "e"], tmp.path());
    assert_eq!(code(&plain), 0);
    let min = |dir: &str| {
        let csv = fs::read_to_string(tmp.path().join(dir).join("de.csv")).unwrap();
        data_rows(&csv).iter().map(|r| r[3].parse::<f64>().unwrap()).fold(f64::INFINITY, f64::min)
    };
    assert!(min("d") > min("e"));
}

#[test]
fn sweep_has_one_row_per_value_and_flags_reduced_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = starris(
        &["sweep", "--config", &cfg, "--var", "N", "--values", "4,9,16", "--realizations", "50", "--out", "s"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap());
    assert_eq!(rows.len(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["reduced_budget"], true);
    assert_eq!(manifest["realizations"], 50);
}

#[test]
fn kappa_sweep_lowers_the_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = starris(
        &["sweep", "--config", &cfg, "--var", "kappa_bs", "--values", "0,0.05,0.1,0.15", "--realizations", "20", "--out", "s"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    let rows = data_rows(&fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap());
    let rate: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(rate.windows(2).all(|w| w[1] < w[0]), "{rate:?}");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    for out in ["a", "b"] {
        let o = starris(&["compare", "--config", &cfg, "--seed", "9", "--out", out], tmp.path());
        assert_eq!(code(&o), 0);
    }
    for f in ["compare.csv", "es.pbm", "ms.pbm", "conventional.pbm"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn replay_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    assert_eq!(code(&starris(&["de", "--config", &cfg, "--out", "a"], tmp.path())), 0);
    assert_eq!(code(&starris(&["replay", "a/manifest.json", "--out", "b"], tmp.path())), 0);
    let path = tmp.path().join("a/manifest.json");
    let text = fs::read_to_string(&path).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
    m["outputs"][0]["sha256"] = "00".into();
    fs::write(&path, m.to_string()).unwrap();
    assert_eq!(code(&starris(&["replay", "a", "--out", "c"], tmp.path())), 4);
}

#[test]
fn validate_passes_default_bound_and_fails_absurd_one() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = small_config(tmp.path(), "[run]\nvalidate_sizes = [16, 32]\n");
    let o = starris(&["validate", "--config", &ok, "--realizations", "200", "--out", "v"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = data_rows(&fs::read_to_string(tmp.path().join("v/validate.csv")).unwrap());
    assert_eq!(rows.len(), 2);

    let strict = small_config(tmp.path(), "[run]\nvalidate_sizes = [16, 32]\ngap_bound = 0.0001\n");
    let o = starris(&["validate", "--config", &strict, "--realizations", "200", "--out", "w"], tmp.path());
    assert_eq!(code(&o), 4);
    assert!(tmp.path().join("w/manifest.json").exists());
}

#[test]
fn exit_codes_for_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&starris(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&starris(&["sweep", "--var", "N"], tmp.path())), 1);
    assert_eq!(code(&starris(&["sweep", "--var", "X", "--values", "1,2"], tmp.path())), 1);
    assert_eq!(code(&starris(&["sweep", "--var", "N", "--values", "4,2"], tmp.path())), 1);
    assert_eq!(code(&starris(&["de", "--protocol", "tdma"], tmp.path())), 1);
    assert_eq!(code(&starris(&["--help"], tmp.path())), 0);

    fs::write(tmp.path().join("bad.toml"), "[array]\nantenas = 16\n").unwrap();
    let o = starris(&["de", "--config", "bad.toml"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("antenas"));
    fs::write(tmp.path().join("neg.toml"), "[power]\np_max_dbm = 20\n[propagation]\nbandwidth_hz = -1\n").unwrap();
    assert_eq!(code(&starris(&["de", "--config", "neg.toml"], tmp.path())), 2);
    assert_eq!(code(&starris(&["de", "--config", "missing.toml"], tmp.path())), 2);
}
