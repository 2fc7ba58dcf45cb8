use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dualtype");

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const COUNTS: &str = "state,count\n00',4100\n01',420\n10',380\n11',5100\n";

fn subcommands(dir: &Path) -> Vec<Vec<String>> {
    let counts = dir.join("counts.csv");
    fs::write(&counts, COUNTS).unwrap();
    let seq = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sequences/detect_f.json");
    [
        vec!["plan"],
        vec!["rabi"],
        vec!["spectrum"],
        vec!["gate", "design"],
        vec!["gate", "simulate"],
        vec!["readout", "correct", "--counts", counts.to_str().unwrap()],
        vec!["readout", "fidelity"],
        vec!["protocol", "detect", "--sequence", seq.to_str().unwrap(), "--initial", "F0p,F1p"],
        vec!["chain"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn every_subcommand_is_byte_deterministic() {
    let inputs = tempfile::tempdir().unwrap();
    for args in subcommands(inputs.path()) {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        for d in [&a, &b] {
            let o = run(&[&args[..], &["--seed", "7"]].concat(), d.path());
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let (fa, fb) = (dir_bytes(a.path()), dir_bytes(b.path()));
        assert!(fa.len() >= 2, "{args:?} wrote {fa:?}");
        assert_eq!(fa, fb, "{args:?}");
    }
}

#[test]
fn manifest_checksums_match_files() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(&["gate", "design"], d.path()).status.success());
    let m = json(&d.path().join("gate-design.manifest.json"));
    assert_eq!(m["command"], "gate design");
    assert_eq!(m["seed"], 20240101);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 4);
    for f in files {
        let bytes = fs::read(d.path().join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn seed_changes_stochastic_outputs_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&["readout", "fidelity", "--seed", "1"], a.path());
    run(&["readout", "fidelity", "--seed", "2"], b.path());
    assert_ne!(fs::read(a.path().join("bell_data.json")).unwrap(), fs::read(b.path().join("bell_data.json")).unwrap());
    run(&["chain", "--seed", "1"], a.path());
    run(&["chain", "--seed", "2"], b.path());
    assert_eq!(fs::read(a.path().join("chain.json")).unwrap(), fs::read(b.path().join("chain.json")).unwrap());
}

#[test]
fn plan_examples() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["plan"], d.path());
    assert!(o.status.success());
    let report = json(&d.path().join("plans.json"));
    let plans = report["plans"].as_array().unwrap();
    let carrier = |label: &str| {
        plans
            .iter()
            .find(|p| p["selection"] == "carrier" && p["species"]["label"] == label)
            .unwrap()["awg_frequency"]
            .as_f64()
            .unwrap()
    };
    assert_eq!(carrier("S"), 242e6);
    assert_eq!(carrier("F"), 230e6);
    assert_eq!(plans.len(), 10);
    assert_eq!(report["covers_s"], true);
    assert_eq!(report["covers_f"], true);

    let o = run(&["plan", "--species", "S", "--detuning", "2271000"], d.path());
    assert!(o.status.success());
    let p = &json(&d.path().join("plans.json"))["plans"][0];
    assert!((p["awg_frequency"].as_f64().unwrap() - 244.271e6).abs() < 1e-6);
}

#[test]
fn out_of_band_plan_exits_2_and_writes_nothing() {
    let d = tempfile::tempdir().unwrap();
    let target = d.path().join("out");
    let o = run(&["plan", "--species", "S", "--detuning", "5e7"], &target);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("AOM band"), "{err}");
    assert!(!target.exists());
}

#[test]
fn config_errors_exit_1_with_field_path() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/published.json")).unwrap();
    fs::write(&cfg, text.replace("\"segment_count\": 40", "\"segment_count\": -40")).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "gate", "design"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gate.segment_count"));

    fs::write(&cfg, text.replace("\"segment_count\": 40", "\"segment_count\": 41")).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "gate", "design"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gate:"));

    let o = run(&["chain", "--charges", "1,0"], d.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["no-such-command"], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bundled_config_file_matches_defaults() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/published.json");
    run(&["chain"], a.path());
    run(&["--config", cfg.to_str().unwrap(), "chain"], b.path());
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
}

#[test]
fn gate_design_prints_timing() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["gate", "design"], d.path());
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("tau = 9.8039 us"), "{s}");
    assert!(s.contains("T = 470.157 us"), "{s}");
    assert!(s.contains("472.157 us"), "{s}");
    assert!(s.contains("com 2.094395 rad, rocking 2.094395 rad"), "{s}");
    let seq = json(&d.path().join("sequence.json"));
    let segs = seq.as_array().unwrap();
    assert_eq!(segs.len(), 79);
    for key in ["target", "duration_s", "phase_rad", "rabi_rate_rad_s", "is_gap"] {
        assert!(segs[0].get(key).is_some(), "{key}");
    }
    let traj = fs::read_to_string(d.path().join("trajectory_com.csv")).unwrap();
    assert!(traj.starts_with("time_s,re_alpha,im_alpha\n"));
}

#[test]
fn chain_reports_doubly_charged_pair() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["chain", "--charges", "1,2"], d.path());
    assert!(o.status.success());
    let r = json(&d.path().join("chain.json"));
    let z1 = r["positions_z0_units"][0].as_f64().unwrap();
    assert!((z1 + 1.526).abs() < 5e-4);
    assert_eq!(r["paper_theory"], -1.53);
    assert_eq!(r["paper_measured"], -1.61);
}

#[test]
fn readout_fidelity_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["readout", "fidelity"], d.path());
    assert!(o.status.success());
    let r = json(&d.path().join("fidelity.json"));
    let f = r["F"].as_f64().unwrap();
    let se = r["stderr"]["F"].as_f64().unwrap();
    assert!((f - 0.6975).abs() < 4.0 * se + 1e-3, "{f} +/- {se}");
    assert!(se > 0.0 && se < 0.05);
    let parity = fs::read_to_string(d.path().join("readout_parity.csv")).unwrap();
    assert!(parity.starts_with("analysis_phase_rad,parity\n"));

    // the synthesized dataset round-trips through --data
    let data = d.path().join("bell_data.json");
    let e = tempfile::tempdir().unwrap();
    let o = run(&["readout", "fidelity", "--data", data.to_str().unwrap()], e.path());
    assert!(o.status.success());
    assert_eq!(json(&e.path().join("fidelity.json"))["F"], r["F"]);
}

#[test]
fn readout_correct_accepts_synthesized_matrix() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(&["protocol", "detect"], d.path()).status.success());
    let counts = d.path().join("counts.csv");
    fs::write(&counts, COUNTS).unwrap();
    let m = d.path().join("confusion_synthesized.csv");
    let o = run(
        &["readout", "correct", "--counts", counts.to_str().unwrap(), "--matrix", m.to_str().unwrap()],
        d.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("correction.json"));
    let p: f64 = r["p"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((p - 1.0).abs() < 1e-9);
}

#[test]
fn spectrum_thermometry_recovers_inputs() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(&["spectrum"], d.path()).status.success());
    let t = json(&d.path().join("thermometry.json"));
    for m in t.as_array().unwrap() {
        assert!(m["relative_error"].as_f64().unwrap() < 0.02);
    }
    let csv = fs::read_to_string(d.path().join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("detuning_hz,flip_probability\n"));
}

#[test]
fn help_lists_every_subcommand() {
    let o = Command::new(BIN).arg("--help").output().unwrap();
    assert!(o.status.success());
    let s = stdout(&o);
    for c in ["plan", "rabi", "spectrum", "gate", "readout", "protocol", "chain", "--config", "--seed", "--out"] {
        assert!(s.contains(c), "{c}");
    }
}
