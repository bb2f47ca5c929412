//! The binary against the library: each verb must emit exactly what the
//! owning library call returns.

use std::path::PathBuf;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use vidscale::cost::{analyze, compare_reports, write_csv, CostReport};
use vidscale::kernels::{fixture, gradcheck, temporal_shift, Network, ShiftConfig, Tensor5D};
use vidscale::model_ir::{build_preset, micro_tsm_default, Fraction, Shape5D};
use vidscale::sim::{observed_scalability, read_timings, sweep, write_sweep_csv, ClusterProfile, SimModel, TrainConfig};

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn vidscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidscale")).args(args).output().unwrap()
}

fn stdout_of(args: &[&str]) -> String {
    let out = vidscale(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json_of(args: &[&str]) -> Value {
    serde_json::from_str(&stdout_of(args)).unwrap()
}

#[test]
fn analyze_csv_is_the_library_csv() {
    let out = stdout_of(&["analyze", "--arch", "tsm8f", "--format", "csv"]);
    let mut want = Vec::new();
    write_csv(&[analyze(&build_preset("tsm8f").unwrap()).unwrap()], &mut want).unwrap();
    assert_eq!(out, String::from_utf8(want).unwrap());
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    let flops: f64 = row[1].parse().unwrap();
    assert!((flops - 33e9).abs() < 0.05 * 33e9);
}

#[test]
fn analyze_json_is_the_library_report() {
    let report: CostReport = serde_json::from_value(json_of(&["analyze", "--arch", "i3d_3x1x1", "--format", "json"])).unwrap();
    assert_eq!(report, analyze(&build_preset("i3d_3x1x1").unwrap()).unwrap());
}

#[test]
fn analyze_accepts_arch_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("arch.json");
    std::fs::write(&path, build_preset("tsm8f").unwrap().to_json()).unwrap();
    let a = stdout_of(&["analyze", "--arch", path.to_str().unwrap(), "--format", "csv"]);
    let b = stdout_of(&["analyze", "--arch", "tsm8f", "--format", "csv"]);
    assert_eq!(a, b);
}

#[test]
fn shapes_report_the_temporal_column() {
    let out = stdout_of(&["shapes", "--arch", "i3d_3x3x3", "--format", "csv"]);
    let t: Vec<usize> = out.lines().skip(1).take(6).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(t, vec![16, 8, 8, 4, 2, 1]);
}

#[test]
fn compare_reingests_analyze_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for name in ["i3d_3x3x3", "i3d_3x1x1", "tsm8f"] {
        let p = dir.path().join(format!("{name}.json"));
        let out = vidscale(&["analyze", "--arch", name, "--format", "json", "--output", p.to_str().unwrap()]);
        assert!(out.status.success());
        assert!(out.stdout.is_empty());
        paths.push(p.to_str().unwrap().to_string());
    }
    let from_files = json_of(&["compare", "--reports", &paths.join(","), "--format", "json"]);
    let direct = json_of(&["compare", "--archs", "i3d_3x3x3,i3d_3x1x1,tsm8f", "--format", "json"]);
    assert_eq!(from_files, direct);
    let reports: Vec<CostReport> = ["i3d_3x3x3", "i3d_3x1x1", "tsm8f"]
        .iter()
        .map(|n| analyze(&build_preset(n).unwrap()).unwrap())
        .collect();
    assert_eq!(direct, serde_json::to_value(compare_reports(&reports)).unwrap());
}

#[test]
fn compare_formats_agree() {
    let args = ["compare", "--archs", "i3d_3x3x3,i3d_3x1x1,tsm8f", "--measured"];
    let measured = fixture_path("measured.csv");
    let m = measured.to_str().unwrap();
    let json = json_of(&[&args[..], &[m, "--format", "json"]].concat());
    let csv_text = stdout_of(&[&args[..], &[m, "--format", "csv"]].concat());
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    for (rec, row) in rdr.records().zip(json["rows"].as_array().unwrap()) {
        let rec = rec.unwrap();
        let get = |col: &str| rec[header.iter().position(|h| h == col).unwrap()].parse::<f64>().unwrap();
        assert_eq!(get("flops"), row["flops"].as_f64().unwrap());
        assert_eq!(get("compute_io"), row["compute_io"].as_f64().unwrap());
        assert_eq!(get("compute_io_x"), row["multipliers"]["compute_io"].as_f64().unwrap());
        assert_eq!(get("throughput_vps"), row["measured"]["throughput_vps"].as_f64().unwrap());
    }
}

#[test]
fn compare_with_empty_measurements_has_analytic_columns_only() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("m.csv");
    std::fs::write(&empty, "arch,accuracy,throughput_vps\n").unwrap();
    let out = stdout_of(&["compare", "--archs", "tsm8f,i3d_3x1x1", "--measured", empty.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.lines().next().unwrap(), "arch,flops,params,input_elems,compute_io,flops_x,params_x,input_x,compute_io_x");
}

#[test]
fn scalability_matches_library() {
    let path = fixture_path("timings.csv");
    let out = json_of(&["scalability", "--timings", path.to_str().unwrap(), "--format", "json"]);
    let want = observed_scalability(&read_timings(std::fs::File::open(&path).unwrap()).unwrap()).unwrap();
    assert_eq!(out, serde_json::to_value(&want).unwrap());
    let at_256 = want.iter().find(|s| s.nodes == 256).unwrap().scalability;
    assert!((at_256 - 0.823).abs() < 0.005);
}

#[test]
fn simulate_csv_is_the_library_sweep() {
    let profile_path = fixture_path("summit.json");
    let out = stdout_of(&[
        "simulate", "--arch", "tsm8f", "--profile", profile_path.to_str().unwrap(), "--nodes", "1,8,64,256", "--format", "csv",
    ]);
    let profile = ClusterProfile::load(&profile_path).unwrap();
    let cost = analyze(&build_preset("tsm8f").unwrap()).unwrap();
    let result = sweep(&cost, &profile, &[1, 8, 64, 256], &TrainConfig::for_profile(&profile, 8), &SimModel::default()).unwrap();
    let mut want = Vec::new();
    write_sweep_csv(&result, &mut want).unwrap();
    assert_eq!(out, String::from_utf8(want).unwrap());
}

#[test]
fn gradcheck_is_seeded_and_matches_library() {
    let a = json_of(&["gradcheck", "--arch", "micro-tsm", "--seed", "42", "--eps", "1e-5", "--format", "json"]);
    let b = json_of(&["gradcheck", "--format", "json"]);
    assert_eq!(a, b);
    let arch = micro_tsm_default(Fraction::new(1, 8).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let net = Network::new(&arch, &mut rng).unwrap();
    let x = Tensor5D::random(arch.input_shape(), &mut rng);
    let want = gradcheck(&net, &x, 1e-5).unwrap();
    assert_eq!(a["report"], serde_json::to_value(&want).unwrap());
    assert!(want.max_rel_error < 1e-5);
}

#[test]
fn gradcheck_reads_input_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.bin");
    let x = Tensor5D::random(Shape5D::new(1, 4, 8, 5, 5).unwrap(), &mut ChaCha8Rng::seed_from_u64(5));
    fixture::save_tensor(&x, &path).unwrap();
    let out = json_of(&["gradcheck", "--input", path.to_str().unwrap(), "--shift-fraction", "0", "--format", "json"]);
    assert!(out["report"]["max_rel_error"].as_f64().unwrap() < 1e-5);
    // A fixture of the wrong shape is a validation failure.
    let bad = dir.path().join("bad.bin");
    fixture::save_tensor(&Tensor5D::zeros(Shape5D::new(1, 2, 8, 5, 5).unwrap()), &bad).unwrap();
    assert_eq!(vidscale(&["gradcheck", "--input", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn shift_demo_round_trips_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.bin");
    let saved = dir.path().join("out.bin");
    let x = Tensor5D::random(Shape5D::new(1, 4, 8, 2, 2).unwrap(), &mut ChaCha8Rng::seed_from_u64(1));
    fixture::save_tensor(&x, &input).unwrap();
    let out = vidscale(&["shift-demo", "--input", input.to_str().unwrap(), "--save", saved.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let y = fixture::load_tensor(&saved).unwrap();
    assert_eq!(y, temporal_shift(&x, &ShiftConfig::default()).unwrap());
}

#[test]
fn shift_demo_moves_the_ramp() {
    let out = json_of(&["shift-demo", "--t", "3", "--c", "8", "--fraction", "1/8", "--format", "json"]);
    let y: Vec<f64> = serde_json::from_value(out["output"].clone()).unwrap();
    // Layout [t][c] with h = w = 1; channel 0 reads t-1, channel 1 reads t+1.
    assert_eq!(&y[0..3], &[0.0, 201.0, 102.0]);
    assert_eq!(&y[8..11], &[100.0, 301.0, 202.0]);
    assert_eq!(&y[16..19], &[200.0, 0.0, 302.0]);
    assert_eq!(vidscale(&["shift-demo", "--t", "3", "--c", "4"]).status.code(), Some(1));
}

#[test]
fn lr_curve_peak() {
    let out = json_of(&["lr-curve", "--gpus", "1536", "--per-gpu-batch", "8", "--epochs", "100", "--format", "json"]);
    assert!((out["peak_lr"].as_f64().unwrap() - 1.92).abs() < 1e-12);
    assert_eq!(out["points"].as_array().unwrap().len(), 101);
}

#[test]
fn output_is_reproducible() {
    let args = ["compare", "--archs", "tsm8f,i3d_3x3x3", "--format", "csv"];
    assert_eq!(stdout_of(&args), stdout_of(&args));
}

#[test]
fn exit_codes() {
    let status = |args: &[&str]| vidscale(args).status.code().unwrap();
    assert_eq!(status(&["--help"]), 0);
    assert_eq!(status(&["frobnicate"]), 1);
    assert_eq!(status(&["analyze"]), 1);
    assert_eq!(status(&["analyze", "--arch", "tsm8f", "--bogus", "1"]), 1);
    assert_eq!(status(&["analyze", "--arch", "resnet9000"]), 1);
    assert_eq!(status(&["analyze", "--arch", "tsm8f", "--format", "xml"]), 1);
    assert_eq!(status(&["simulate", "--arch", "tsm8f", "--profile", "/nonexistent.json", "--nodes", "1"]), 1);
    assert_eq!(status(&["lr-curve", "--gpus", "6", "--per-gpu-batch", "8", "--epochs", "3"]), 1);
    let out = vidscale(&["frobnicate"]);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    // Unwritable destination is an internal failure, not a user error.
    assert_eq!(status(&["analyze", "--arch", "tsm8f", "--output", "/nonexistent/dir/out.txt"]), 2);
}
