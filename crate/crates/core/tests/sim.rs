//! Step-time model, observed scalability, calibration and LR schedule.

use std::path::PathBuf;

use proptest::prelude::*;

use vidscale::cost::{analyze, CostReport};
use vidscale::model_ir::build_preset;
use vidscale::sim::{
    calibrate, comm_time, compute_time, io_threshold_bandwidth, lr_at, observed_scalability, peak_lr, read_timings,
    step_time, sweep, training_time, Bottleneck, CalibrationTarget, ClusterProfile, CommMode, SimModel, Timing,
    TrainConfig, Utilization,
};

const NODES: [usize; 7] = [1, 8, 16, 32, 64, 128, 256];

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn summit() -> ClusterProfile {
    ClusterProfile::load(&fixture("summit.json")).unwrap()
}

fn report(name: &str) -> CostReport {
    analyze(&build_preset(name).unwrap()).unwrap()
}

fn timings() -> Vec<Timing> {
    read_timings(std::fs::File::open(fixture("timings.csv")).unwrap()).unwrap()
}

fn uniform(u: f64, archs: &[&str]) -> Utilization {
    Utilization::PerModel(archs.iter().map(|a| (a.to_string(), u)).collect())
}

#[test]
fn observed_scalability_from_table() {
    let s = observed_scalability(&timings()).unwrap();
    let at = |p: usize| s.iter().find(|r| r.nodes == p).unwrap().scalability;
    // 179700 / (8 · 25620) and 179700 / (256 · 853).
    assert!((at(8) - 179700.0 / 204960.0).abs() < 1e-15);
    assert!((at(8) - 0.877).abs() < 0.005);
    assert!((at(256) - 0.823).abs() < 0.005);
    assert_eq!(at(1), 1.0);
    assert_eq!(observed_scalability(&[Timing { nodes: 1, wall_seconds: 10.0 }, Timing { nodes: 2, wall_seconds: 5.0 }]).unwrap()[1].scalability, 1.0);
}

#[test]
fn training_time_examples() {
    let cfg = TrainConfig::new(8, 6);
    let hours = training_time(133.6, &cfg) / 3600.0;
    assert!((hours - 49.9).abs() < 0.05);
    assert_eq!(training_time(267.2, &cfg), training_time(133.6, &cfg) / 2.0);
    let minutes: f64 = 179_700.0 / (256.0 * 0.823) / 60.0;
    assert!((minutes - 14.2).abs() < 0.05);
}

#[test]
fn transfer_term_tracks_model_size() {
    let p = summit();
    let transfer = |name: &str| comm_time(report(name).total_params, &p, CommMode::Simple) - p.net_latency;
    let ratio = transfer("i3d_3x3x3") / transfer("tsm8f");
    assert!((ratio - 1.9).abs() < 0.05, "{ratio}");
}

#[test]
fn simple_comm_is_affine_in_params() {
    let p = summit();
    let probe = [1_000_000u64, 24_301_072, 46_992_016];
    let t: Vec<f64> = probe.iter().map(|&n| comm_time(n, &p, CommMode::Simple)).collect();
    let slope = |i: usize, j: usize| (t[j] - t[i]) / ((probe[j] - probe[i]) as f64 * p.bytes_per_param);
    let want = 1.0 / p.net_bandwidth;
    assert!((slope(0, 1) - want).abs() <= 1e-12 * want);
    assert!((slope(1, 2) - want).abs() <= 1e-12 * want);
    let intercept = t[0] - probe[0] as f64 * p.bytes_per_param * want;
    assert!((intercept - p.net_latency).abs() <= 1e-12);
}

#[test]
fn tsm_hides_io_and_pointwise_i3d_does_not() {
    let p = summit();
    let m = SimModel::default();
    assert_eq!(step_time(&report("tsm8f"), &p, 8, &m).unwrap().bottleneck, Bottleneck::Compute);
    assert_eq!(step_time(&report("i3d_3x1x1"), &p, 8, &m).unwrap().bottleneck, Bottleneck::Io);
}

#[test]
fn double_efficiency_halves_compute() {
    let mut tsm = report("tsm8f");
    let i3d = report("i3d_3x1x1");
    tsm.total_flops = i3d.total_flops;
    let p = summit();
    let m = SimModel::default();
    let ratio = compute_time(&tsm, &p, 8, &m).unwrap() / compute_time(&i3d, &p, 8, &m).unwrap();
    assert!((ratio - 0.5).abs() < 1e-15);
}

#[test]
fn bottleneck_flips_at_threshold() {
    for name in ["tsm8f", "i3d_3x3x3", "i3d_3x1x1"] {
        let cost = report(name);
        let p = summit();
        let m = SimModel::default();
        let bw = io_threshold_bandwidth(&cost, &p, 8, &m).unwrap();
        let at = |b: f64| step_time(&cost, &ClusterProfile { disk_bandwidth_per_node: b, ..p.clone() }, 8, &m).unwrap();
        assert_eq!(at(bw * (1.0 - 1e-9)).bottleneck, Bottleneck::Io);
        assert_eq!(at(bw * (1.0 + 1e-9)).bottleneck, Bottleneck::Compute);
    }
}

#[test]
fn threshold_orders_presets_by_compute_io() {
    let names = ["i3d_3x3x3", "i3d_3x1x1", "tsm8f"];
    let m = SimModel::default();
    for profile in [summit(), ClusterProfile { utilization: uniform(0.3, &names), ..summit() }] {
        let mut rows: Vec<(f64, f64)> = names
            .iter()
            .map(|n| {
                let c = report(n);
                (c.compute_io, io_threshold_bandwidth(&c, &profile, 8, &m).unwrap())
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Higher Compute/IO needs less disk bandwidth.
        assert!(rows.windows(2).all(|w| w[1].1 < w[0].1), "{rows:?}");
    }
}

#[test]
fn fixture_is_the_calibration_output() {
    let p = summit();
    let cost = report("tsm8f");
    let target = CalibrationTarget {
        single_node_vps: 100.0 * 240_000.0 / 179_700.0,
        nodes: 8,
        scalability: 179_700.0 / (8.0 * 25_620.0),
        per_gpu_batch: 8,
    };
    let template = ClusterProfile { utilization: Utilization::Anchored(0.5), net_bandwidth: 1.0, ..p.clone() };
    let fitted = calibrate(&cost, &template, &target, &SimModel::default()).unwrap();
    let (Utilization::Anchored(a), Utilization::Anchored(b)) = (&fitted.utilization, &p.utilization) else {
        panic!("anchored utilization expected");
    };
    assert!((a - b).abs() <= 1e-12 * b);
    assert!((fitted.net_bandwidth - p.net_bandwidth).abs() <= 1e-9 * p.net_bandwidth);
    // The fit reproduces both of its targets.
    let r = sweep(&cost, &fitted, &[1, 8], &TrainConfig::new(8, 6), &SimModel::default()).unwrap();
    assert!((r.single_node_vps - target.single_node_vps).abs() < 1e-9);
    assert!((r.rows[1].scalability - target.scalability).abs() < 1e-12);
}

#[test]
fn calibration_rejects_impossible_targets() {
    let cost = report("tsm8f");
    let p = summit();
    let m = SimModel::default();
    let t = |scalability, nodes| CalibrationTarget { single_node_vps: 133.6, nodes, scalability, per_gpu_batch: 8 };
    assert!(calibrate(&cost, &p, &t(1.2, 8), &m).is_err());
    assert!(calibrate(&cost, &p, &t(0.9, 1), &m).is_err());
    // Latency alone eats the budget.
    let slow = ClusterProfile { net_latency: 1.0, ..p.clone() };
    assert!(calibrate(&cost, &slow, &t(0.9, 8), &m).is_err());
    assert!(calibrate(&cost, &p, &t(0.9, 8), &SimModel::with_comm(CommMode::Simple)).is_err());
}

#[test]
fn summit_reproduces_full_scale_time() {
    let cost = report("tsm8f");
    let r = sweep(&cost, &summit(), &NODES, &TrainConfig::new(8, 6), &SimModel::default()).unwrap();
    let t256 = r.rows.last().unwrap().train_time_s;
    assert!((t256 - 853.0).abs() <= 0.10 * 853.0, "{t256}");
    assert!(r.rows.windows(2).all(|w| w[1].scalability <= w[0].scalability));
}

#[test]
fn lr_schedule_examples() {
    let cfg = TrainConfig::new(8, 1536);
    let peak = peak_lr(&cfg);
    assert!((peak - 1.92).abs() < 1e-12);
    assert!((lr_at(2.5, &cfg).unwrap() - peak / 2.0).abs() < 1e-12);
    assert!(lr_at(100.0, &cfg).unwrap() < 1e-6 * peak);
}

fn arb_profile() -> impl Strategy<Value = ClusterProfile> {
    (1usize..9, 1e12f64..2e13, 0.01f64..1.0, 1e7f64..1e10, 1e-7f64..1e-3, 1e8f64..1e11).prop_map(
        |(g, peak, u, disk, lat, bw)| ClusterProfile {
            nodes: 1,
            gpus_per_node: g,
            peak_flops_per_gpu: peak,
            utilization: uniform(u, &["tsm8f", "i3d_3x3x3", "i3d_3x1x1"]),
            disk_bandwidth_per_node: disk,
            net_latency: lat,
            net_bandwidth: bw,
            bytes_per_param: 4.0,
        },
    )
}

fn arb_nodes() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(2usize..2048, 1..8).prop_map(|s| std::iter::once(1).chain(s).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalability_is_a_non_increasing_fraction(
        profile in arb_profile(),
        nodes in arb_nodes(),
        n in 1usize..32,
        arch in prop::sample::select(vec!["tsm8f", "i3d_3x3x3", "i3d_3x1x1"]),
        ring in any::<bool>(),
    ) {
        let comm = if ring { CommMode::Ring } else { CommMode::Simple };
        let r = sweep(&report(arch), &profile, &nodes, &TrainConfig::new(n, 1), &SimModel::with_comm(comm)).unwrap();
        prop_assert_eq!(r.rows[0].scalability, 1.0);
        for w in r.rows.windows(2) {
            prop_assert!(w[1].scalability <= w[0].scalability);
        }
        for row in &r.rows {
            prop_assert!(row.scalability > 0.0 && row.scalability <= 1.0);
            prop_assert!(row.step.t_step >= row.step.t_compute.max(row.step.t_io));
        }
    }

    #[test]
    fn fewer_params_scale_at_least_as_well(
        profile in arb_profile(),
        nodes in arb_nodes(),
        small in 1_000_000u64..50_000_000,
        extra in 1u64..50_000_000,
    ) {
        let base = report("tsm8f");
        let light = CostReport { total_params: small, ..base.clone() };
        let heavy = CostReport { total_params: small + extra, ..base };
        let cfg = TrainConfig::new(8, 1);
        let m = SimModel::default();
        let a = sweep(&light, &profile, &nodes, &cfg, &m).unwrap();
        let b = sweep(&heavy, &profile, &nodes, &cfg, &m).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!(x.scalability >= y.scalability);
        }
    }

    #[test]
    fn training_time_times_throughput_is_the_workload(thr in 1e-3f64..1e6, epochs in 1.0f64..200.0, clips in 1u64..10_000_000) {
        let cfg = TrainConfig { epochs, dataset_clips: clips, warmup_epochs: 0.0, ..TrainConfig::new(1, 1) };
        let work = epochs * clips as f64;
        prop_assert!((training_time(thr, &cfg) * thr - work).abs() <= 1e-14 * work);
    }

    #[test]
    fn lr_is_continuous_at_the_warmup_junction(k in 1usize..4096, n in 1usize..64, warmup in 0.5f64..20.0) {
        let cfg = TrainConfig { warmup_epochs: warmup, ..TrainConfig::new(n, k) };
        let peak = peak_lr(&cfg);
        let before = lr_at(warmup * (1.0 - 1e-12), &cfg).unwrap();
        let after = lr_at(warmup, &cfg).unwrap();
        prop_assert!((after - peak).abs() <= 1e-12 * peak);
        prop_assert!((before - after).abs() <= 1e-9 * peak);
    }

    #[test]
    fn lr_never_exceeds_peak(epoch in 0.0f64..=100.0, k in 1usize..2048) {
        let cfg = TrainConfig::new(8, k);
        let lr = lr_at(epoch, &cfg).unwrap();
        prop_assert!(lr >= 0.0 && lr <= peak_lr(&cfg) * (1.0 + 1e-15));
    }

    #[test]
    fn simple_comm_slope_and_intercept(params in 1u64..1_000_000_000, lat in 1e-7f64..1e-2, bw in 1e6f64..1e12) {
        let p = ClusterProfile { net_latency: lat, net_bandwidth: bw, ..summit() };
        let t = comm_time(params, &p, CommMode::Simple);
        let want = lat + params as f64 * 4.0 / bw;
        prop_assert!((t - want).abs() <= 1e-12 * want);
    }
}
