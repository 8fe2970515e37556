use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chanshape::signal::Waveform;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chanshape"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL_OCI: &str = r#"{
  "kind": "single-frequency-oci",
  "seed": 11,
  "realizations": 3,
  "room": { "units": 60 },
  "optimizer": { "max_measurements": 400, "target_value": 0.02, "stall_limit": 400 },
  "audio": { "signal": "beeps" }
}"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn optimize_is_deterministic_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write_scenario(tmp.path(), "oci.json", SMALL_OCI);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");

    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&a), "--workers", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["scenario.json", "summary.json", "convergence.csv", "MANIFEST.sha256", "run.log", "records/r0002.json", "traces/r0002.csv", "traces/r0002.json"] {
        assert!(a.join(f).is_file(), "{f} missing");
    }
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&b), "--workers", "1"]);
    assert_eq!(code(&o), 0);
    let manifest = fs::read_to_string(a.join("MANIFEST.sha256")).unwrap();
    assert_eq!(manifest, fs::read_to_string(b.join("MANIFEST.sha256")).unwrap());
    assert!(!manifest.contains("run.log"));

    // Second run verifies and leaves everything alone.
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&a)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("verified"));
    assert_eq!(manifest, fs::read_to_string(a.join("MANIFEST.sha256")).unwrap());

    // Interrupted run: one record and the manifest gone.
    fs::remove_file(b.join("records/r0001.json")).unwrap();
    fs::remove_file(b.join("MANIFEST.sha256")).unwrap();
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&b)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 computed, 2 reused"));
    assert_eq!(manifest, fs::read_to_string(b.join("MANIFEST.sha256")).unwrap());

    // Tampering is caught; --force rebuilds.
    let rec = a.join("records/r0000.json");
    let text = fs::read_to_string(&rec).unwrap();
    fs::write(&rec, text.replacen("\"realization\": 0", "\"realization\":0", 1)).unwrap();
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&a)]);
    assert_eq!(code(&o), 3);
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&a), "--force"]);
    assert_eq!(code(&o), 0);
    assert_eq!(manifest, fs::read_to_string(a.join("MANIFEST.sha256")).unwrap());

    // A different seed into the same directory needs --force.
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&a), "--seed", "12"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn validation_errors_exit_2_and_list_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_scenario(
        tmp.path(),
        "bad.json",
        r#"{"kind":"masked-4x2","realizations":0,"room":{"receivers":2,"sources":2},
            "optimizer":{"max_flips_per_step":0,"rng_seed":4}}"#,
    );
    let o = run(&["optimize", "--scenario", s(&bad), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["seed is required", "realizations", "4x2", "rng_seed", "max_flips_per_step"] {
        assert!(err.contains(needle), "{needle} not in {err}");
    }
    assert!(!tmp.path().join("x").exists());

    let o = run(&["optimize", "--scenario", s(&tmp.path().join("nope.json"))]);
    assert_eq!(code(&o), 2);
    let o = run(&["optimize"]);
    assert_eq!(code(&o), 2);
    let o = run(&["frobnicate"]);
    assert_eq!(code(&o), 2);

    let scn = write_scenario(tmp.path(), "oci.json", SMALL_OCI);
    let o = run(&["scan", "--scenario", s(&scn), "--out", s(&tmp.path().join("y")), "--f-hi", "9000"]);
    assert_eq!(code(&o), 2);
    let o = run(&["sweep", "--scenario", s(&scn), "--param", "volume", "--values", "1,2"]);
    assert_eq!(code(&o), 2);
    let o = run(&["stats", "--scenario", s(&scn)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn acoustics_and_stats_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ac = write_scenario(tmp.path(), "ac.json", r#"{"kind":"acoustics-report","seed":0,"frequencies":[1100,1850]}"#);
    let out = tmp.path().join("ac");
    let o = run(&["acoustics", "--scenario", s(&ac), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("modal_density.csv")).unwrap();
    assert!(csv.starts_with("x,y,series\n1100,"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("acoustics.json")).unwrap()).unwrap();
    let fs_hz = report["schroeder_frequency_hz"].as_f64().unwrap();
    assert!((fs_hz - 217.0).abs() < 1.0);

    let st = write_scenario(tmp.path(), "st.json", r#"{"kind":"rmt-baseline","seed":9,"samples":2000}"#);
    let out = tmp.path().join("st");
    let o = run(&["stats", "--scenario", s(&st), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    for f in ["report.json", "reff_histogram.csv", "w1_histogram.csv", "densities.csv"] {
        assert!(out.join(f).is_file());
    }
    let hist = fs::read_to_string(out.join("w1_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 51);
    let o = run(&["stats", "--scenario", s(&st), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
}

#[test]
fn scan_and_audio_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write_scenario(tmp.path(), "oci.json", SMALL_OCI);
    let out = tmp.path().join("run");
    let o = run(&["scan", "--scenario", s(&scn), "--out", s(&out), "--f-lo", "1280", "--f-hi", "1320", "--step", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("scan.csv")).unwrap();
    assert!(csv.starts_with("frequency,pre_reff_mean,"));
    assert_eq!(csv.lines().count(), 12);
    assert!(fs::read_to_string(out.join("MANIFEST.sha256")).unwrap().contains("scan.csv"));

    let o = run(&["audio", "--scenario", s(&scn), "--out", s(&out), "--realization", "1", "--dump-banks"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.join("audio/r0001");
    let w = Waveform::read_wav(dir.join("receiver0_post.wav")).unwrap();
    assert_eq!(w.sample_rate(), 16000.0);
    assert!(w.peak() > 0.5 && w.peak() <= 0.9 + 1e-3);
    let spec = hound::WavReader::open(dir.join("source0.wav")).unwrap().spec();
    assert_eq!((spec.channels, spec.bits_per_sample), (1, 16));
    let mut f = fs::File::open(dir.join("banks.bin")).unwrap();
    let dump = chanshape::room::BankDump::read(&mut f).unwrap();
    assert_eq!((dump.receivers, dump.sources, dump.units), (2, 2, 60));

    let o = run(&["audio", "--scenario", s(&scn), "--out", s(&out), "--realization", "7"]);
    assert_eq!(code(&o), 2);
    // Verification still passes with the extra files.
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
}

#[test]
fn sweep_without_coupling_leaves_channel_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write_scenario(tmp.path(), "oci.json", SMALL_OCI);
    let out = tmp.path().join("sw");
    let o = run(&["sweep", "--scenario", s(&scn), "--out", s(&out), "--param", "coupling_ratio", "--values", "0,1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 2);
    // pre_w1_mean and post_w1_mean agree at zero coupling.
    assert_eq!(rows[0][1], "0");
    assert_eq!(rows[0][7], rows[0][9]);
    assert_ne!(rows[1][7], rows[1][9]);
    assert!(out.join("coupling_ratio-0/summary.json").is_file());
}

#[test]
fn failed_realization_keeps_partial_records() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write_scenario(tmp.path(), "oci.json", SMALL_OCI);
    let out = tmp.path().join("run");
    // A directory where record 1 should go makes that write fail.
    fs::create_dir_all(out.join("records/r0001.json")).unwrap();
    fs::write(out.join("scenario.json"), "").unwrap();
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&out), "--force"]);
    assert_eq!(code(&o), 0, "--force clears the owned directories");

    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&out), "--force"]);
    assert_eq!(code(&o), 0);
    fs::remove_file(out.join("MANIFEST.sha256")).unwrap();
    fs::remove_file(out.join("records/r0001.json")).unwrap();
    fs::create_dir_all(out.join("records/r0001.json")).unwrap();
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1 of 3 realizations failed"));
    assert!(out.join("records/r0000.json").is_file() && out.join("records/r0002.json").is_file());
    assert!(!out.join("MANIFEST.sha256").exists());
    assert!(fs::read_to_string(out.join("run.log")).unwrap().contains("r0001 failed"));

    fs::remove_dir(out.join("records/r0001.json")).unwrap();
    let o = run(&["optimize", "--scenario", s(&scn), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 computed, 2 reused"));
}
