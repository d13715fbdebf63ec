//! A small paired experiment grid: the adaptive policy against its
//! no-lookahead ablation and a fixed-margin baseline, with bootstrap
//! confidence intervals on the paired deltas.
//!
//! ```bash
//! cargo run --example paired_experiment
//! ```

use tilecast::sim::summary::summarize;
use tilecast::sim::{run_session, PolicyKind, SimConfig};
use tilecast::sphere::Direction;
use tilecast::traces::synth::{
    generate_network_trace, generate_synthetic, SceneObject, SyntheticSceneSpec,
};

fn scene(seed: u64) -> SyntheticSceneSpec {
    let at = |class_id, yaw, jitter| SceneObject {
        class_id,
        center: Direction::new(yaw, 0.0).unwrap(),
        dwell_mean_s: 25.0,
        jitter_deg: Some(jitter),
    };
    SyntheticSceneSpec {
        objects: vec![
            at(0, -135.0, 0.5),
            at(1, -45.0, 2.0),
            at(2, 0.0, 0.5),
            at(3, 45.0, 2.0),
            at(4, 135.0, 0.5),
        ],
        transitions: vec![
            vec![0.0, 0.6, 0.4, 0.0, 0.0],
            vec![0.0, 0.0, 0.6, 0.4, 0.0],
            vec![0.0, 0.0, 0.0, 0.6, 0.4],
            vec![0.4, 0.0, 0.0, 0.0, 0.6],
            vec![0.6, 0.4, 0.0, 0.0, 0.0],
        ],
        saccade_speed_dps: 140.0,
        fixation_jitter_deg: 1.0,
        seed,
    }
}

fn main() {
    let arms = [
        ("ours", PolicyKind::Ours),
        ("no_lookahead", PolicyKind::OursNoLookahead),
        ("kinematic", PolicyKind::KinematicFixed),
    ];
    let seeds: Vec<u64> = (1..=8).collect();

    let mut runs = Vec::new();
    for &seed in &seeds {
        let (head, metas) = generate_synthetic(&scene(seed), 180.0, 100.0).unwrap();
        let net = generate_network_trace(12.0, 20.0, 2.0, 180.0, seed).unwrap();
        for (name, policy) in arms {
            let cfg = SimConfig {
                policy,
                fov_width_deg: 80.0,
                fov_height_deg: 40.0,
                window_samples: 64,
                seed,
                ..SimConfig::default()
            };
            let mut m = run_session(&cfg, &head, &net, &metas, None).unwrap();
            m.arm = name.to_string();
            runs.push(m);
        }
    }

    let report = summarize(&runs, "kinematic", 1000, 7).unwrap();
    println!("note: {}\n", report.note);
    for arm in &report.arms {
        let get = |k: &str| arm.metrics.iter().find(|m| m.metric == k).unwrap().mean;
        println!(
            "{:<13} stall {:6.2}s  storm-stall {:5.2}s  saccade-hit {:.3}  bw {:5.2} Mbps",
            arm.arm,
            get("stall_s"),
            get("storm_stall_s"),
            get("saccade_hit_rate"),
            get("bandwidth_mbps")
        );
    }
    println!(
        "\npaired deltas vs kinematic (95% bootstrap CIs, {} pairs):",
        seeds.len()
    );
    for c in &report.comparisons {
        if c.metric == "storm_stall_s" || c.metric == "saccade_hit_rate" {
            println!(
                "  {:<13} {:<16} Δ {:+.3} [{:+.3}, {:+.3}]",
                c.arm, c.metric, c.mean_delta, c.ci_lo, c.ci_hi
            );
        }
    }
}
