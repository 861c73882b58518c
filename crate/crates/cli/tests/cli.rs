use std::path::Path;
use std::process::{Command, Output};

fn mcrelay(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcrelay"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

/// Small run sizes; `extra` keys replace the defaults below.
fn small_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("config.toml");
    let mut text = String::new();
    for line in ["link.n_symbols = 3000", "calibration.samples = 4000", "relay.n_training = 20000"] {
        let key = line.split(' ').next().unwrap();
        if !extra.contains(key) {
            text.push_str(line);
            text.push('\n');
        }
    }
    std::fs::write(&p, text + extra).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn calibrate_thresholds_has_one_row_per_distance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = mcrelay(&out, &["--config", &cfg, "calibrate-thresholds"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("thresholds.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "distance,concentration,tau1,tau2,tau3");
    assert_eq!(rows.len(), 7);
    for (d, row) in rows[1..].iter().enumerate() {
        let f: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[0], (d + 1) as f64);
        assert!(f[2] < f[3] && f[3] < f[4]);
    }
}

#[test]
fn simulate_link_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "link.snr_db = 10.0\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(mcrelay(&a, &["--config", &cfg, "simulate-link"]).status.success());
    assert!(mcrelay(&b, &["--config", &cfg, "--workers", "3", "simulate-link"]).status.success());
    for f in ["link.csv", "link_thresholds.csv", "manifest.toml"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_round_trip_reproduces_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = mcrelay(&first, &["--config", &cfg, "--seed", "31", "sweep-concentration", "--snr-min", "0", "--snr-max", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = first.join("manifest.toml");
    let o = mcrelay(&second, &["--config", manifest.to_str().unwrap(), "sweep-concentration"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["concentration_noiseless.csv", "concentration_snr.csv", "manifest.toml"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
    let m = std::fs::read_to_string(manifest).unwrap();
    assert!(m.contains("seed = 31"));
    assert!(m.contains("snr_max = 10.0"));
}

#[test]
fn relay_sweep_reports_scheme1_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = mcrelay(&out, &["--config", &cfg, "--symbols", "20000", "relay-sweep", "--scheme", "1", "--locations", "2,3,4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: toml::Table = std::fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(m["manifest"]["results"]["optimum_location"].as_float(), Some(3.0));
    let csv = std::fs::read_to_string(out.join("relay_scheme1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 6);
}

#[test]
fn plot_renders_emitted_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    assert!(mcrelay(&out, &["--config", &cfg, "sweep-concentration"]).status.success());
    let input = out.join("concentration_snr.csv");
    let o = mcrelay(&out, &["plot", "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(out.join("concentration_snr.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let o = mcrelay(&out, &["plot", "--input", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = small_config(dir.path(), "channel.dimension = 2\n");
    let o = mcrelay(&out, &["--config", &bad, "simulate-link"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("channel.dimension"));

    let o = mcrelay(&out, &["simulate-link", "--distance", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("link.distance"));

    let starved = small_config(dir.path(), "relay.n_training = 1\n");
    let o = mcrelay(&out, &["--config", &starved, "relay-sweep", "--scheme", "2", "--locations", "3"]);
    assert_eq!(o.status.code(), Some(3));

    assert!(!out.exists(), "failed runs must not leave output behind");
}
