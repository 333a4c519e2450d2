mod common;

use std::path::Path;

use aquasonde_core::calibration::CalibrationRecord;
use aquasonde_core::export::parse_csv;
use common::*;
use sha2::{Digest, Sha256};

fn sha(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    format!("{:x}", Sha256::digest(bytes))
}

#[test]
fn simulate_missing_scenario_names_path() {
    let out = run(&["simulate", "--scenario", "/nope/missing.scenario", "--out", "/tmp/x.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("/nope/missing.scenario"));
}

#[test]
fn simulate_rejects_invalid_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scenario");
    std::fs::write(&bad, "name = x\n[stations]\nA 74 31 15.5 20 10\n").unwrap();
    let out = run(&["simulate", "--scenario", bad.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("true_ph"));
}

#[test]
fn simulate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = canal_scenario();
    let mut hashes = Vec::new();
    for (name, seed) in [("a", "42"), ("b", "42"), ("c", "43")] {
        let p = dir.path().join(name);
        let out = run(&["simulate", "--scenario", sc.to_str().unwrap(), "--seed", seed, "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{:?}", text(&out));
        // Six stations of 195 one-hertz frames.
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 6 * 195 * 11);
        hashes.push(sha(&p));
    }
    assert_eq!(hashes[0], hashes[1]);
    assert_ne!(hashes[0], hashes[2]);
}

#[test]
fn simulate_serves_over_tcp() {
    use std::io::Read;
    let mut sim = simulate_tcp(&canal_scenario(), &["--time-scale", "1000", "--seed", "42"]);
    let mut conn = std::net::TcpStream::connect(&sim.addr).unwrap();
    let mut got = Vec::new();
    conn.read_to_end(&mut got).unwrap();
    assert!(sim.child.wait().unwrap().success());

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.bin");
    let sc = canal_scenario();
    run(&["simulate", "--scenario", sc.to_str().unwrap(), "--seed", "42", "--out", p.to_str().unwrap()]);
    assert_eq!(got, std::fs::read(p).unwrap());
}

#[test]
fn calibrate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("probe.cal");
    let o = out_path.to_str().unwrap();
    let ok = run(&["calibrate", "--buffer", "7:0", "--buffer", "4:177.48", "--temp", "25", "--out", o]);
    assert!(ok.status.success(), "{:?}", text(&ok));
    let rec = CalibrationRecord::parse(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!((rec.calibration.slope_mv_per_ph + 59.16).abs() < 0.01);
    assert!(rec.calibration.offset_mv.abs() < 1e-9);
    assert_eq!(rec.calibration.ref_temp_c, 25.0);

    let same = run(&["calibrate", "--buffer", "7:0", "--buffer", "7:0", "--temp", "25", "--out", o]);
    assert_eq!(same.status.code(), Some(2));
    assert!(text(&same).1.contains("DegenerateCalibration"));

    // |slope| = 10 mV/pH
    let weak = run(&["calibrate", "--buffer", "7:0", "--buffer", "4:30", "--temp", "25", "--out", o]);
    assert_eq!(weak.status.code(), Some(2));
    assert!(text(&weak).1.contains("ElectrodeFault"));

    let one = run(&["calibrate", "--buffer", "7:0", "--temp", "25", "--out", o]);
    assert_eq!(one.status.code(), Some(2));
    let junk = run(&["calibrate", "--buffer", "seven", "--buffer", "4:1", "--temp", "25", "--out", o]);
    assert_eq!(junk.status.code(), Some(2));
}

#[test]
fn capture_offline_keeps_csv_and_hints_retry() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("canal.bin");
    let sc = canal_scenario();
    // A duplicated frame and a corrupted byte should not disturb the capture.
    let sim = run(&[
        "simulate", "--scenario", sc.to_str().unwrap(), "--out", stream.to_str().unwrap(),
        "--fault", "dup:300", "--fault", "corrupt:5000",
    ]);
    assert!(sim.status.success());
    // Nothing listens on this port.
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let cfg = capture_config(
        dir.path(),
        &format!("file:{}", stream.display()),
        Some(&format!("http://{dead}")),
        "",
    );
    let out = run(&["capture", "--config", cfg.to_str().unwrap()]);
    let (stdout, stderr) = text(&out);
    assert_eq!(out.status.code(), Some(0), "{stdout}\n{stderr}");
    assert!(stderr.contains("warning"));
    assert!(stderr.contains("aquasonde upload --csv"));
    let rows = parse_csv(&std::fs::read_to_string(dir.path().join("capture.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(stdout.contains("repeated 1"));
}

#[test]
fn capture_reports_insufficient_data_per_station() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("canal.bin");
    let sc = canal_scenario();
    run(&["simulate", "--scenario", sc.to_str().unwrap(), "--out", stream.to_str().unwrap()]);
    let cfg = capture_config(dir.path(), &format!("file:{}", stream.display()), None, "avg_count = 50\n");
    let out = run(&["capture", "--config", cfg.to_str().unwrap()]);
    let (stdout, stderr) = text(&out);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stderr.matches("InsufficientData").count(), 6, "{stderr}");
    assert!(stdout.contains("0 readings written"));
}

#[test]
fn capture_config_errors_are_usage_errors() {
    let out = run(&["capture", "--config", "/nope/capture.conf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("/nope/capture.conf"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = capture_config(dir.path(), "file:x.bin", None, "avg_count = 0\n");
    let out = run(&["capture", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = capture_config(dir.path(), "file:missing.bin", None, "");
    let out = run(&["capture", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("missing.bin"));
}

#[test]
fn capture_without_device_is_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let cfg = capture_config(dir.path(), &format!("tcp://{dead}"), None, "");
    let started = std::time::Instant::now();
    let out = run(&["capture", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(started.elapsed().as_secs() < 30);
}

fn one_row_csv(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("one.csv");
    std::fs::write(
        &p,
        "date,time,longitude,latitude,ph,temperature\n2017-06-15,09:03:09,74.290500,31.469800,7.10,28.00\n",
    )
    .unwrap();
    p
}

#[test]
fn report_single_station() {
    let dir = tempfile::tempdir().unwrap();
    let csv = one_row_csv(dir.path());
    let out_path = dir.path().join("rep.txt");
    let out = run(&["report", "--from", csv.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{:?}", text(&out));
    let table = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(1).unwrap().contains("7.10"));
    let svg = std::fs::read_to_string(dir.path().join("rep.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="point ph""#).count(), 1);
    assert_eq!(svg.matches(r#"class="point temp""#).count(), 1);
    assert!(svg.contains(r#"data-ph="6.5""#) && svg.contains(r#"data-ph="8.4""#));
}

#[test]
fn report_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "date,time,longitude,latitude,ph,temperature\n").unwrap();
    let o = dir.path().join("r.txt");
    let out = run(&["report", "--from", empty.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("EmptyInput"));
    let out = run(&["report", "--from", "/nope/data.csv", "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("/nope/data.csv"));
}

#[test]
fn upload_respects_token_and_dedups() {
    let dir = tempfile::tempdir().unwrap();
    let srv = serve(&dir.path().join("log/r.log"), Some("hunter2"));
    let csv = one_row_csv(dir.path());
    let c = csv.to_str().unwrap();
    let url = srv.url();

    let denied = run(&["upload", "--csv", c, "--service", &url]);
    assert_eq!(denied.status.code(), Some(1));
    assert!(text(&denied).1.contains("AQUASONDE_TOKEN"));

    let ok = aquasonde(&["upload", "--csv", c, "--service", &url])
        .env("AQUASONDE_TOKEN", "hunter2")
        .output()
        .unwrap();
    assert!(text(&ok).0.contains("accepted 1, duplicates 0"));
    let again = aquasonde(&["upload", "--csv", c, "--service", &url])
        .env("AQUASONDE_TOKEN", "hunter2")
        .output()
        .unwrap();
    assert!(text(&again).0.contains("accepted 0, duplicates 1"));

    // Reads need no token.
    let exported = dir.path().join("export.csv");
    let ex = run(&["export", "--service", &url, "--out", exported.to_str().unwrap()]);
    assert!(ex.status.success());
    assert_eq!(std::fs::read_to_string(&exported).unwrap(), std::fs::read_to_string(&csv).unwrap());
}

#[test]
fn bad_service_url_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = one_row_csv(dir.path());
    let out = run(&["upload", "--csv", csv.to_str().unwrap(), "--service", "localhost:1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(run(&["report", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}
