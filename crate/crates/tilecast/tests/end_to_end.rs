//! Cross-module integration checks: generator statistics against ground
//! truth, the containment chain from scores to tile sets, conservation under
//! capacity traces, the Pareto relation between the adaptive and generic
//! policies, and CLI failure modes.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{efficiency_scene, stationary_scene};
use tilecast::conformal::{score, CalibrationStore};
use tilecast::sim::{run_session, PolicyKind, SessionMetrics, SimConfig};
use tilecast::sphere::{
    angular_error, expand_viewport, viewport_tiles, Direction, TileGrid, Viewport,
};
use tilecast::traces::synth::{
    generate_network_trace, generate_synthetic, SceneObject, SyntheticSceneSpec,
};
use tilecast::traces::{label_regime, Regime};

/// Empirical transition frequencies over ~10,000 saccades stay within ±0.02
/// of the scene's ground-truth matrix, entry by entry.
#[test]
fn generator_transitions_match_ground_truth() {
    let spec = SyntheticSceneSpec {
        objects: vec![
            SceneObject {
                class_id: 0,
                center: Direction::new(-60.0, 0.0).unwrap(),
                dwell_mean_s: 0.05,
                jitter_deg: Some(0.0),
            },
            SceneObject {
                class_id: 1,
                center: Direction::new(0.0, 0.0).unwrap(),
                dwell_mean_s: 0.05,
                jitter_deg: Some(0.0),
            },
            SceneObject {
                class_id: 2,
                center: Direction::new(60.0, 0.0).unwrap(),
                dwell_mean_s: 0.05,
                jitter_deg: Some(0.0),
            },
        ],
        transitions: vec![
            vec![0.0, 0.7, 0.3],
            vec![0.4, 0.0, 0.6],
            vec![0.5, 0.5, 0.0],
        ],
        saccade_speed_dps: 300.0,
        fixation_jitter_deg: 0.0,
        seed: 2,
    };
    // ~0.05s dwell + ~0.3s saccade per hop: 4200s yields >10,000 saccades.
    let (trace, _) = generate_synthetic(&spec, 4200.0, 100.0).unwrap();

    // Consecutive fixation segments define the observed transitions.
    let mut segments: Vec<u8> = Vec::new();
    for s in &trace.samples {
        if let Some(c) = s.fixated_class {
            if segments.last() != Some(&c) {
                segments.push(c);
            }
        }
    }
    let mut counts = [[0usize; 3]; 3];
    for pair in segments.windows(2) {
        counts[pair[0] as usize][pair[1] as usize] += 1;
    }
    let n_saccades: usize = counts.iter().flatten().sum();
    assert!(n_saccades >= 10_000, "only {n_saccades} saccades generated");
    for (i, row) in counts.iter().enumerate() {
        let row_total: usize = row.iter().sum();
        for (j, &count) in row.iter().enumerate() {
            let observed = count as f64 / row_total as f64;
            let expected = spec.transitions[i][j];
            assert!(
                (observed - expected).abs() <= 0.02,
                "transition {i}->{j}: observed {observed:.4}, expected {expected}"
            );
        }
    }
}

/// With saccade speed at twice the storm threshold, at least 99% of samples
/// strictly inside saccade segments (past the labeling window) are Storm.
#[test]
fn generator_saccades_label_storm() {
    let spec = SyntheticSceneSpec {
        objects: vec![
            SceneObject {
                class_id: 0,
                center: Direction::new(-60.0, 0.0).unwrap(),
                dwell_mean_s: 1.0,
                jitter_deg: None,
            },
            SceneObject {
                class_id: 1,
                center: Direction::new(60.0, 0.0).unwrap(),
                dwell_mean_s: 1.0,
                jitter_deg: None,
            },
        ],
        transitions: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        saccade_speed_dps: 200.0, // 2× the 100°/s threshold
        fixation_jitter_deg: 0.5,
        seed: 3,
    };
    let (trace, _) = generate_synthetic(&spec, 300.0, 100.0).unwrap();
    let labels = label_regime(&trace, 100.0, 100.0).unwrap();

    let window_steps = 10; // 100 ms at 100 Hz
    let mut inside = 0usize;
    let mut storm = 0usize;
    let mut run_start: Option<usize> = None;
    for i in 0..=trace.samples.len() {
        let in_saccade = i < trace.samples.len() && trace.samples[i].fixated_class.is_none();
        match (in_saccade, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(st)) => {
                for &label in labels.iter().take(i).skip(st + window_steps) {
                    inside += 1;
                    if label == Regime::Storm {
                        storm += 1;
                    }
                }
                run_start = None;
            }
            _ => {}
        }
    }
    assert!(inside > 1000, "too few saccade samples: {inside}");
    let rate = storm as f64 / inside as f64;
    assert!(
        rate >= 0.99,
        "only {rate:.4} of interior saccade samples labeled Storm"
    );
}

/// The containment chain: score ≤ Q ⇔ error ≤ margin, and whenever the
/// error is within the margin, the true viewport tiles sit inside the
/// margin-expanded predicted viewport — end to end on random draws.
#[test]
fn containment_chain_end_to_end() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = CalibrationStore::new(500);
    for _ in 0..500 {
        let s = score(
            Direction::new(rng.random_range(0.0..40.0), 0.0).unwrap(),
            Direction::new(0.0, 0.0).unwrap(),
            1.0,
        )
        .unwrap();
        store.observe(Regime::Calm, s);
    }

    for _ in 0..500 {
        let grid = TileGrid::new(rng.random_range(2..12), rng.random_range(2..12)).unwrap();
        let sigma = rng.random_range(0.5..8.0);
        let alpha = rng.random_range(0.05..0.5);
        let q = store.quantile(Regime::Calm, alpha).unwrap();
        let margin = tilecast::conformal::margin(q, sigma);

        let truth = Direction::new(
            rng.random_range(-180.0..180.0),
            rng.random_range(-80.0..80.0),
        )
        .unwrap();
        // Draw errors on both sides of the margin, away from the boundary.
        let err = margin * rng.random_range(0.0..2.0f64);
        if (err - margin).abs() < 1e-6 {
            continue;
        }
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        // Chebyshev-norm displacement of magnitude err.
        let (dy, dp) = if angle.cos().abs() > angle.sin().abs() {
            (
                err * angle.cos().signum(),
                err * angle.sin() / angle.cos().abs(),
            )
        } else {
            (
                err * angle.cos() / angle.sin().abs(),
                err * angle.sin().signum(),
            )
        };
        let pred =
            Direction::new(truth.yaw() + dy, (truth.pitch() + dp).clamp(-90.0, 90.0)).unwrap();
        let e = angular_error(truth, pred);

        let s = score(truth, pred, sigma).unwrap();
        assert_eq!(s.value() <= q, e <= margin, "score/margin equivalence");

        if e <= margin {
            let fov = Viewport::new(truth, 100.0, 70.0).unwrap();
            let true_tiles = viewport_tiles(fov, grid);
            let expanded = expand_viewport(fov.recenter(pred), margin).unwrap();
            assert!(
                true_tiles.is_subset(&viewport_tiles(expanded, grid)),
                "containment failed at error {e} margin {margin}"
            );
        }
    }
}

/// Against a 5–20 Mbps trace family the reported bandwidth never exceeds
/// the trace ceiling (conservation bound on the metric).
#[test]
fn bandwidth_bounded_by_trace_family() {
    let (head, metas) = generate_synthetic(&stationary_scene(9), 90.0, 100.0).unwrap();
    for seed in [1u64, 2, 3] {
        let net = generate_network_trace(5.0, 20.0, 2.0, 90.0, seed).unwrap();
        for policy in [
            PolicyKind::Ours,
            PolicyKind::KinematicFixed,
            PolicyKind::GenericConformal,
        ] {
            let cfg = SimConfig {
                policy,
                window_samples: 64,
                ..SimConfig::default()
            };
            let m = run_session(&cfg, &head, &net, &metas, None).unwrap();
            assert!(
                m.bandwidth_mbps >= 0.0 && m.bandwidth_mbps <= 20.0,
                "{policy:?}: bandwidth {} outside [0, 20]",
                m.bandwidth_mbps
            );
            assert!(m.transferred_mbit <= net.integral_mbit(0.0, 90_000.0) + 1e-6);
        }
    }
}

/// Pareto relation: near the generic-conformal operating point closest in
/// bandwidth, the adaptive policy achieves at least the same coverage
/// minus 0.005 (it sits above the generic frontier).
#[test]
fn pareto_relation_vs_generic() {
    let seeds: Vec<u64> = (1..=10).collect();
    let base = SimConfig {
        fov_width_deg: 80.0,
        fov_height_deg: 40.0,
        window_samples: 64,
        calibration_capacity: 50,
        ..SimConfig::default()
    };
    let run_arm = |cfg: &SimConfig| -> Vec<SessionMetrics> {
        seeds
            .iter()
            .map(|&seed| {
                let (head, metas) =
                    generate_synthetic(&efficiency_scene(seed), 300.0, 100.0).unwrap();
                let net = generate_network_trace(15.0, 20.0, 2.0, 300.0, seed).unwrap();
                let mut cfg = cfg.clone();
                cfg.seed = seed;
                run_session(&cfg, &head, &net, &metas, None).unwrap()
            })
            .collect()
    };
    let mean = |runs: &[SessionMetrics], f: fn(&SessionMetrics) -> f64| {
        runs.iter().map(f).sum::<f64>() / runs.len() as f64
    };

    let ours = run_arm(&SimConfig {
        policy: PolicyKind::Ours,
        alpha_target: 0.05,
        ..base.clone()
    });
    let ours_bw = mean(&ours, |m| m.bandwidth_mbps);
    let ours_cov = mean(&ours, |m| m.coverage_rate);

    // Sweep generic to its bandwidth-closest operating point.
    let mut best: Option<(f64, f64)> = None; // (|Δbw|, coverage)
    for alpha in [0.03, 0.04, 0.05, 0.06, 0.08, 0.1] {
        let generic = run_arm(&SimConfig {
            policy: PolicyKind::GenericConformal,
            alpha_target: alpha,
            ..base.clone()
        });
        let gap = (mean(&generic, |m| m.bandwidth_mbps) - ours_bw).abs();
        let cov = mean(&generic, |m| m.coverage_rate);
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, cov));
        }
    }
    let (_, generic_cov) = best.unwrap();
    assert!(
        ours_cov >= generic_cov - 0.005,
        "ours coverage {ours_cov:.4} below generic {generic_cov:.4} - 0.005 at matched bandwidth"
    );
}

/// The summarize path over real runs: paired deltas with CIs come out of
/// the report machinery for a small grid.
#[test]
fn report_shapes_from_real_runs() {
    let seeds = [1u64, 2, 3];
    let mut runs = Vec::new();
    for &seed in &seeds {
        let (head, metas) = generate_synthetic(&stationary_scene(seed), 60.0, 100.0).unwrap();
        let net = generate_network_trace(5.0, 20.0, 2.0, 60.0, seed).unwrap();
        for (arm, policy) in [
            ("ours", PolicyKind::Ours),
            ("kin", PolicyKind::KinematicFixed),
        ] {
            let cfg = SimConfig {
                policy,
                window_samples: 64,
                seed,
                ..SimConfig::default()
            };
            let mut m = run_session(&cfg, &head, &net, &metas, None).unwrap();
            m.arm = arm.to_string();
            runs.push(m);
        }
    }
    let report = tilecast::sim::summary::summarize(&runs, "kin", 200, 11).unwrap();
    assert_eq!(report.arms.len(), 2);
    assert_eq!(report.comparisons.len(), 6); // one non-baseline arm × six metrics
    for c in &report.comparisons {
        assert_eq!(c.n_pairs, 3);
        assert!(c.ci_lo <= c.mean_delta && c.mean_delta <= c.ci_hi);
    }
    assert!(!report.note.is_empty());
}

/// CLI validation failures exit with status 2.
#[test]
fn cli_validation_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_tilecast");
    let dir = tempfile::tempdir().unwrap();

    // Missing scene file.
    let out = std::process::Command::new(bin)
        .current_dir(dir.path())
        .args(["generate", "--scene", "nope.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Degenerate scene (no objects).
    std::fs::write(
        dir.path().join("empty.json"),
        r#"{"objects": [], "transitions": [], "saccade_speed_dps": 200.0, "fixation_jitter_deg": 0.0, "seed": 1}"#,
    )
    .unwrap();
    let out = std::process::Command::new(bin)
        .current_dir(dir.path())
        .args(["generate", "--scene", "empty.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Sidecar with a corrupt magic byte.
    std::fs::write(dir.path().join("bad.bin"), vec![0u8; 304]).unwrap();
    let out = std::process::Command::new(bin)
        .current_dir(dir.path())
        .args(["meta", "decode", "--input", "bad.bin"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Experiment spec referencing a missing trace file.
    std::fs::write(
        dir.path().join("exp.json"),
        r#"{"arms": [{"name": "a", "policy": "ours"}], "baseline": "a",
            "traces": [{"head": "h.csv", "net": "n.csv", "metas": "m.bin"}]}"#,
    )
    .unwrap();
    let out = std::process::Command::new(bin)
        .current_dir(dir.path())
        .args(["run", "--spec", "exp.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

/// File-mode experiments: generate artifacts with the CLI, reference them
/// from a trace-file spec, run, and summarize from the written metrics.
#[test]
fn cli_file_mode_round_trip() {
    let bin = env!("CARGO_BIN_EXE_tilecast");
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    std::fs::write(
        root.join("scene.json"),
        serde_json::to_string(&stationary_scene(4)).unwrap(),
    )
    .unwrap();
    let status = std::process::Command::new(bin)
        .current_dir(root)
        .args([
            "generate",
            "--scene",
            "scene.json",
            "--duration",
            "45",
            "--rate",
            "100",
            "--out",
            "gen",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let net = generate_network_trace(5.0, 20.0, 2.0, 45.0, 4).unwrap();
    std::fs::write(root.join("net.csv"), net.to_csv()).unwrap();
    // Two sessions from the same trace pair under different names.
    std::fs::copy(root.join("gen/head_trace.csv"), root.join("head_b.csv")).unwrap();

    let spec = serde_json::json!({
        "config": {"window_samples": 64},
        "arms": [
            {"name": "ours", "policy": "ours"},
            {"name": "saliency", "policy": "saliency_topk", "top_k_tiles": 24}
        ],
        "baseline": "ours",
        "traces": [
            {"head": "gen/head_trace.csv", "net": "net.csv", "metas": "gen/metas.bin",
             "saliency": "gen/saliency.csv"},
            {"head": "head_b.csv", "net": "net.csv", "metas": "gen/metas.bin",
             "saliency": "gen/saliency.csv"}
        ]
    });
    std::fs::write(root.join("exp.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    let out = std::process::Command::new(bin)
        .current_dir(root)
        .args(["run", "--spec", "exp.json", "--out", "results"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("results/report.json").exists());

    // summarize recomputes an identical report from the stored metrics.
    let status = std::process::Command::new(bin)
        .current_dir(root)
        .args([
            "summarize",
            "--runs",
            "results",
            "--baseline",
            "ours",
            "--out",
            "report2.json",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let a = std::fs::read(root.join("results/report.json")).unwrap();
    let b = std::fs::read(root.join("report2.json")).unwrap();
    assert_eq!(a, b);
}
