//! Synthetic scene generation: a two-object scene, its head trace, regime
//! labels, and the sidecars that describe it.
//!
//! ```bash
//! cargo run --example generate_scene
//! ```

use tilecast::semantics::tiles_of_class;
use tilecast::sphere::Direction;
use tilecast::traces::synth::{generate_synthetic, SceneObject, SyntheticSceneSpec};
use tilecast::traces::{label_regime, Regime};

fn main() {
    let spec = SyntheticSceneSpec {
        objects: vec![
            SceneObject {
                class_id: 0, // a stable target, e.g. a face
                center: Direction::new(-45.0, 0.0).unwrap(),
                dwell_mean_s: 4.0,
                jitter_deg: Some(0.5),
            },
            SceneObject {
                class_id: 1, // an unstable one, e.g. a crowd
                center: Direction::new(60.0, 10.0).unwrap(),
                dwell_mean_s: 2.0,
                jitter_deg: Some(2.5),
            },
        ],
        transitions: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        saccade_speed_dps: 180.0,
        fixation_jitter_deg: 1.0,
        seed: 42,
    };

    let (trace, metas) = generate_synthetic(&spec, 60.0, 100.0).unwrap();
    println!(
        "generated {} samples over {}s at {} Hz, plus {} chunk sidecars",
        trace.samples.len(),
        trace.duration_ms() / 1000.0,
        trace.rate_hz,
        metas.len()
    );

    let labels = label_regime(&trace, 100.0, 100.0).unwrap();
    let storms = labels.iter().filter(|&&r| r == Regime::Storm).count();
    let fixated = trace
        .samples
        .iter()
        .filter(|s| s.fixated_class.is_some())
        .count();
    println!(
        "{storms} storm-labeled samples; {fixated} fixation samples, {} in flight",
        trace.samples.len() - fixated
    );

    for class in [0u8, 1] {
        let tiles = tiles_of_class(&metas[0], class);
        println!(
            "class {class} occupies tiles {:?}",
            tiles.iter().map(|t| t.0).collect::<Vec<_>>()
        );
    }
    println!("sidecar association edges: {:?}", metas[0].edges);

    println!("\nfirst head-trace lines:\n{}", &trace.to_csv()[..120]);
}
