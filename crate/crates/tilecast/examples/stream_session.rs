//! One full trace-driven streaming session: synthetic scene in, stall and
//! hit-rate metrics out, with a peek at the per-chunk control log.
//!
//! ```bash
//! cargo run --example stream_session
//! ```

use tilecast::sim::{run_session, PolicyKind, SimConfig};
use tilecast::sphere::Direction;
use tilecast::traces::synth::{
    generate_network_trace, generate_synthetic, SceneObject, SyntheticSceneSpec,
};

fn main() {
    let scene = SyntheticSceneSpec {
        objects: vec![
            SceneObject {
                class_id: 0,
                center: Direction::new(-135.0, 0.0).unwrap(),
                dwell_mean_s: 20.0,
                jitter_deg: Some(0.5),
            },
            SceneObject {
                class_id: 1,
                center: Direction::new(-45.0, 0.0).unwrap(),
                dwell_mean_s: 20.0,
                jitter_deg: Some(2.0),
            },
            SceneObject {
                class_id: 2,
                center: Direction::new(45.0, 0.0).unwrap(),
                dwell_mean_s: 20.0,
                jitter_deg: Some(0.5),
            },
        ],
        transitions: vec![
            vec![0.0, 0.7, 0.3],
            vec![0.3, 0.0, 0.7],
            vec![0.7, 0.3, 0.0],
        ],
        saccade_speed_dps: 140.0,
        fixation_jitter_deg: 1.0,
        seed: 12,
    };
    let (head, metas) = generate_synthetic(&scene, 180.0, 100.0).unwrap();
    let net = generate_network_trace(12.0, 20.0, 2.0, 180.0, 12).unwrap();

    let cfg = SimConfig {
        policy: PolicyKind::Ours,
        fov_width_deg: 80.0,
        fov_height_deg: 40.0,
        window_samples: 64,
        ..SimConfig::default()
    };
    let m = run_session(&cfg, &head, &net, &metas, None).unwrap();

    println!(
        "{} chunks ({} scored after warmup)",
        m.chunks, m.scored_chunks
    );
    println!(
        "stall {:.2}s total ({} events); storm stall {:.2}s of {:.2}s storm time",
        m.stall_s, m.stall_events, m.storm_stall_s, m.storm_time_s
    );
    println!(
        "saccade hit-rate {:.3}, calm hit-rate {:.3}, chunk coverage {:.3}",
        m.saccade_hit_rate, m.calm_hit_rate, m.coverage_rate
    );
    println!(
        "bandwidth {:.2} Mbps over the scored window (margin coverage {:.3})",
        m.bandwidth_mbps,
        m.margin_coverage_rate.unwrap()
    );

    println!("\nper-chunk log excerpt:");
    println!("{}", tilecast::sim::CHUNK_LOG_HEADER);
    for row in &m.rows[40..48] {
        println!("{}", row.to_csv_line());
    }
}
