//! Shared test oracles and scene builders.
//!
//! The oracles here deliberately avoid the library's computation paths: tile
//! coverage is decided by dense point sampling with an interval-scan
//! point-to-cell map, and quantiles by sorting a copy and indexing.

// Each integration-test target compiles its own copy; not every target uses
// every helper.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tilecast::sphere::{Direction, TileGrid, TileId, TileSet, Viewport};
use tilecast::traces::synth::{SceneObject, SyntheticSceneSpec};

/// Dense-sampling coverage oracle: a midpoint lattice of directions strictly
/// inside the viewport at ≤ 0.25° spacing, each mapped to its tile by a
/// linear interval scan, unioned. Tile membership factors per axis, so the
/// 2D lattice union is the cross product of the per-axis sample images.
pub fn dense_viewport_oracle(vp: Viewport, grid: TileGrid) -> TileSet {
    let spacing = 0.125;

    let p_lo = (vp.center.pitch() - vp.height() / 2.0).max(-90.0);
    let p_hi = (vp.center.pitch() + vp.height() / 2.0).min(90.0);
    let p_span = p_hi - p_lo;
    let n_pitch = (p_span / spacing).ceil().max(1.0) as usize;
    let mut rows = Vec::new();
    for j in 0..n_pitch {
        let pitch = p_lo + (j as f64 + 0.5) * p_span / n_pitch as f64;
        let row = row_of_scan(pitch, grid);
        if !rows.contains(&row) {
            rows.push(row);
        }
    }

    let y_start = vp.center.yaw() - vp.width() / 2.0;
    let n_yaw = (vp.width() / spacing).ceil().max(1.0) as usize;
    let mut cols = Vec::new();
    for i in 0..n_yaw {
        let yaw = y_start + (i as f64 + 0.5) * vp.width() / n_yaw as f64;
        let col = col_of_scan(yaw, grid);
        if !cols.contains(&col) {
            cols.push(col);
        }
    }

    let mut set = grid.empty_set();
    for &r in &rows {
        for &c in &cols {
            set.insert(TileId(r * grid.cols() + c));
        }
    }
    set
}

fn row_of_scan(pitch: f64, grid: TileGrid) -> u32 {
    for r in 0..grid.rows() {
        let lo = -90.0 + r as f64 * 180.0 / grid.rows() as f64;
        let hi = -90.0 + (r + 1) as f64 * 180.0 / grid.rows() as f64;
        let top = r == grid.rows() - 1;
        if pitch >= lo && (pitch < hi || (top && pitch <= 90.0)) {
            return r;
        }
    }
    panic!("pitch {pitch} outside every band");
}

fn col_of_scan(yaw: f64, grid: TileGrid) -> u32 {
    let mut y = yaw;
    while y < -180.0 {
        y += 360.0;
    }
    while y >= 180.0 {
        y -= 360.0;
    }
    for c in 0..grid.cols() {
        let lo = -180.0 + c as f64 * 360.0 / grid.cols() as f64;
        let hi = -180.0 + (c + 1) as f64 * 360.0 / grid.cols() as f64;
        if y >= lo && y < hi {
            return c;
        }
    }
    panic!("yaw {y} outside every band");
}

/// Random viewport/grid pairs with all edges on the 0.25° lattice and grid
/// boundaries on it too, so every positive-measure overlap is at least 0.25°
/// wide and the ≤0.25° sampling oracle resolves it exactly.
pub fn aligned_random_case(rng: &mut ChaCha8Rng) -> (Viewport, TileGrid) {
    const ROWS: [u32; 12] = [1, 2, 3, 4, 5, 6, 8, 9, 10, 12, 15, 16];
    const COLS: [u32; 14] = [1, 2, 3, 4, 5, 6, 8, 9, 10, 12, 15, 16, 18, 20];
    let grid = TileGrid::new(
        ROWS[rng.random_range(0..ROWS.len())],
        COLS[rng.random_range(0..COLS.len())],
    )
    .unwrap();
    let yaw = rng.random_range(-720..720) as f64 * 0.25;
    let pitch = rng.random_range(-360..=360) as f64 * 0.25;
    let width = rng.random_range(1..=720) as f64 * 0.5;
    let height = rng.random_range(1..=360) as f64 * 0.5;
    let vp = Viewport::new(Direction::new(yaw, pitch).unwrap(), width, height).unwrap();
    (vp, grid)
}

fn object(class_id: u8, yaw: f64, pitch: f64, dwell_mean_s: f64, jitter_deg: f64) -> SceneObject {
    SceneObject {
        class_id,
        center: Direction::new(yaw, pitch).unwrap(),
        dwell_mean_s,
        jitter_deg: Some(jitter_deg),
    }
}

/// A ring of transitions over five objects sitting on tile corners of the
/// 8×8 grid, with two association candidates per object.
fn five_object_scene(dwell_s: f64, jitters: [f64; 5], seed: u64) -> SyntheticSceneSpec {
    SyntheticSceneSpec {
        objects: vec![
            object(0, -135.0, 0.0, dwell_s, jitters[0]),
            object(1, -45.0, 0.0, dwell_s, jitters[1]),
            object(2, 0.0, 0.0, dwell_s, jitters[2]),
            object(3, 45.0, 0.0, dwell_s, jitters[3]),
            object(4, 135.0, 0.0, dwell_s, jitters[4]),
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

/// Association-rich scene for the ablation suite: sparse saccades against
/// long fixations, mixed-stability objects.
pub fn ablation_scene(seed: u64) -> SyntheticSceneSpec {
    five_object_scene(25.0, [0.5, 2.0, 0.5, 2.0, 0.5], seed)
}

/// Calm-dominated scene for the efficiency suite: strongly heterogeneous
/// per-object stability, very rare saccades.
pub fn efficiency_scene(seed: u64) -> SyntheticSceneSpec {
    five_object_scene(40.0, [0.5, 4.0, 0.5, 4.0, 0.5], seed)
}

/// Single stationary object: a single-regime (all-Calm) session.
pub fn stationary_scene(seed: u64) -> SyntheticSceneSpec {
    SyntheticSceneSpec {
        objects: vec![object(0, 20.0, -10.0, 10.0, 1.0)],
        transitions: vec![vec![0.0]],
        saccade_speed_dps: 200.0,
        fixation_jitter_deg: 1.0,
        seed,
    }
}

/// Percentile-bootstrap 95% CI of the mean, matching the report machinery's
/// convention but reimplemented here as the checking side.
pub fn bootstrap_ci_95(deltas: &[f64], seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = deltas.len();
    let mut means: Vec<f64> = (0..1000)
        .map(|_| (0..n).map(|_| deltas[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (means[25], means[974])
}
