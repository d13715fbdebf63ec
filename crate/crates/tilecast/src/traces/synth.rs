//! Synthetic gaze generator with known semantic ground truth.
//!
//! A scene is a set of labeled objects on the sphere plus a transition matrix
//! over them. The generated trace alternates fixations (mean-reverting jitter
//! around the object center, exponentially distributed dwell) with saccades
//! (constant Chebyshev angular speed along the shortest wrapped path to the
//! next object, drawn from the transition row of the current one). Fixation
//! samples carry the object's class id; saccade samples carry none.
//!
//! The generator also emits one sidecar per chunk whose tile map marks each
//! object's class in every tile within 10° of its center, and whose edges are
//! the strongest ground-truth transitions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::semantics::{strongest_edges, ClassId, SemanticChunkMeta};
use crate::sphere::{viewport_tiles, Direction, TileGrid, Viewport};
use crate::traces::{GazeSample, HeadTrace, NetworkTrace, TraceError};

/// Angular radius of the tile-map footprint around an object center.
const OBJECT_FOOTPRINT_DEG: f64 = 10.0;
/// Mean-reversion time constant of the fixation jitter, milliseconds.
const JITTER_TAU_MS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneObject {
    pub class_id: ClassId,
    pub center: Direction,
    pub dwell_mean_s: f64,
    /// Fixation jitter for this object, overriding the scene-wide value;
    /// stable and unstable targets coexist in one scene.
    #[serde(default)]
    pub jitter_deg: Option<f64>,
}

/// Scene description consumed by [`generate_synthetic`]. `transitions[i][j]`
/// is the ground-truth probability of an attention shift from object i to
/// object j; each row either sums to 1 over its out-edges or is all zero
/// (an absorbing object the gaze never leaves).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSceneSpec {
    pub objects: Vec<SceneObject>,
    pub transitions: Vec<Vec<f64>>,
    pub saccade_speed_dps: f64,
    pub fixation_jitter_deg: f64,
    pub seed: u64,
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: String| TraceError::BadScene(msg);
        let n = self.objects.len();
        if n == 0 {
            return Err(bad("scene has no objects".into()));
        }
        for o in &self.objects {
            if o.class_id as usize >= crate::semantics::MAX_CLASSES {
                return Err(bad(format!("class id {} above 31", o.class_id)));
            }
            if !(o.dwell_mean_s > 0.0) {
                return Err(bad(format!("dwell mean {} must be > 0", o.dwell_mean_s)));
            }
            if o.jitter_deg.is_some_and(|j| j < 0.0) {
                return Err(bad(format!(
                    "object jitter {:?} must be >= 0",
                    o.jitter_deg
                )));
            }
        }
        if self.transitions.len() != n {
            return Err(bad(format!(
                "transition matrix has {} rows, expected {n}",
                self.transitions.len()
            )));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != n {
                return Err(bad(format!(
                    "transition row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row[i] != 0.0 {
                return Err(bad(format!("transition row {i} has a self-loop")));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(bad(format!(
                    "transition row {i} has probabilities outside [0, 1]"
                )));
            }
            if sum != 0.0 && (sum - 1.0).abs() > 1e-9 {
                return Err(bad(format!(
                    "transition row {i} sums to {sum}, expected 1 or 0"
                )));
            }
        }
        if !(self.saccade_speed_dps > 0.0) {
            return Err(bad(format!(
                "saccade speed {} must be > 0",
                self.saccade_speed_dps
            )));
        }
        if self.fixation_jitter_deg < 0.0 {
            return Err(bad(format!(
                "jitter {} must be >= 0",
                self.fixation_jitter_deg
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TraceError> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| TraceError::BadScene(format!("invalid scene json: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

enum Phase {
    Fixate {
        object: usize,
        until_ms: f64,
    },
    Saccade {
        target: usize,
        // Per-axis rates in degrees per ms, on the unwrapped yaw line.
        from_yaw: f64,
        from_pitch: f64,
        yaw_rate: f64,
        pitch_rate: f64,
        start_ms: f64,
        arrive_ms: f64,
    },
}

/// Generate a head trace of `duration_s` seconds at `rate_hz` plus one
/// sidecar per second of the scene's static tile map. Deterministic given
/// the scene seed.
pub fn generate_synthetic(
    spec: &SyntheticSceneSpec,
    duration_s: f64,
    rate_hz: f64,
) -> Result<(HeadTrace, Vec<SemanticChunkMeta>), TraceError> {
    spec.validate()?;
    if !(duration_s > 0.0) || !(rate_hz > 0.0) {
        return Err(TraceError::BadScene(format!(
            "duration {duration_s}s at {rate_hz}Hz is degenerate"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dt_ms = 1000.0 / rate_hz;
    let n_samples = (duration_s * rate_hz).floor() as usize;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let rho = (-dt_ms / JITTER_TAU_MS).exp();
    let diffuse_scale = (1.0 - rho * rho).sqrt();

    let mut samples = Vec::with_capacity(n_samples);
    let mut offset = (0.0f64, 0.0f64);
    let mut phase = Phase::Fixate {
        object: 0,
        until_ms: draw_dwell(&mut rng, spec.objects[0].dwell_mean_s),
    };

    for i in 0..n_samples {
        let t_ms = i as f64 * dt_ms;
        // Resolve phase transitions due before this sample.
        loop {
            match phase {
                Phase::Fixate { object, until_ms } if t_ms >= until_ms => {
                    match draw_transition(&mut rng, &spec.transitions[object]) {
                        Some(target) => {
                            let from = spec.objects[object].center;
                            let pos = jittered(from, offset);
                            let to = spec.objects[target].center;
                            let dy =
                                crate::sphere::wrap_yaw(to.yaw() - pos.yaw()).expect("finite yaws");
                            let dp = to.pitch() - pos.pitch();
                            let dist = dy.abs().max(dp.abs());
                            let travel_ms = dist / spec.saccade_speed_dps * 1000.0;
                            phase = Phase::Saccade {
                                target,
                                from_yaw: pos.yaw(),
                                from_pitch: pos.pitch(),
                                yaw_rate: if travel_ms > 0.0 { dy / travel_ms } else { 0.0 },
                                pitch_rate: if travel_ms > 0.0 { dp / travel_ms } else { 0.0 },
                                start_ms: until_ms,
                                arrive_ms: until_ms + travel_ms,
                            };
                        }
                        None => {
                            // Absorbing object: keep fixating.
                            phase = Phase::Fixate {
                                object,
                                until_ms: until_ms
                                    + draw_dwell(&mut rng, spec.objects[object].dwell_mean_s),
                            };
                        }
                    }
                }
                Phase::Saccade {
                    target, arrive_ms, ..
                } if t_ms >= arrive_ms => {
                    offset = (0.0, 0.0);
                    phase = Phase::Fixate {
                        object: target,
                        until_ms: arrive_ms
                            + draw_dwell(&mut rng, spec.objects[target].dwell_mean_s),
                    };
                }
                _ => break,
            }
        }

        let sample = match phase {
            Phase::Fixate { object, .. } => {
                let jitter = spec.objects[object]
                    .jitter_deg
                    .unwrap_or(spec.fixation_jitter_deg);
                let z: f64 = normal.sample(&mut rng);
                let w: f64 = normal.sample(&mut rng);
                offset.0 = rho * offset.0 + jitter * diffuse_scale * z;
                offset.1 = rho * offset.1 + jitter * diffuse_scale * w;
                GazeSample {
                    t_ms,
                    dir: jittered(spec.objects[object].center, offset),
                    fixated_class: Some(spec.objects[object].class_id),
                }
            }
            Phase::Saccade {
                from_yaw,
                from_pitch,
                yaw_rate,
                pitch_rate,
                start_ms,
                ..
            } => {
                let dt = t_ms - start_ms;
                GazeSample {
                    t_ms,
                    dir: Direction::new(from_yaw + yaw_rate * dt, from_pitch + pitch_rate * dt)
                        .expect("finite saccade position"),
                    fixated_class: None,
                }
            }
        };
        samples.push(sample);
    }

    let trace = HeadTrace {
        session: format!("synthetic-{}", spec.seed),
        rate_hz,
        samples,
    };
    let metas = scene_metas(spec, duration_s.ceil() as usize)?;
    Ok((trace, metas))
}

fn jittered(center: Direction, offset: (f64, f64)) -> Direction {
    Direction::new(center.yaw() + offset.0, center.pitch() + offset.1)
        .expect("finite jittered direction")
}

fn draw_dwell(rng: &mut ChaCha8Rng, mean_s: f64) -> f64 {
    Exp::new(1.0 / mean_s)
        .expect("positive dwell rate")
        .sample(rng)
        * 1000.0
}

fn draw_transition(rng: &mut ChaCha8Rng, row: &[f64]) -> Option<usize> {
    let total: f64 = row.iter().sum();
    if total == 0.0 {
        return None;
    }
    let u: f64 = rng.random_range(0.0..total);
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(j);
        }
    }
    Some(row.len() - 1)
}

/// Sidecars for a static scene: each object's class marked in all tiles
/// within 10° of its center, plus the strongest ground-truth transition
/// edges. One meta per chunk, identical maps across chunks.
pub fn scene_metas(
    spec: &SyntheticSceneSpec,
    n_chunks: usize,
) -> Result<Vec<SemanticChunkMeta>, TraceError> {
    let grid = TileGrid::new(8, 8).expect("8x8 grid");
    let mut tile_map = vec![0u32; grid.tile_count()];
    for o in &spec.objects {
        let vp = Viewport::new(
            o.center,
            2.0 * OBJECT_FOOTPRINT_DEG,
            2.0 * OBJECT_FOOTPRINT_DEG,
        )
        .expect("footprint viewport");
        for tile in viewport_tiles(vp, grid).iter() {
            tile_map[tile.index()] |= 1 << o.class_id;
        }
    }

    let mut probs: BTreeMap<(ClassId, ClassId), f64> = BTreeMap::new();
    for (i, row) in spec.transitions.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                let key = (spec.objects[i].class_id, spec.objects[j].class_id);
                let e = probs.entry(key).or_insert(0.0);
                *e = e.max(p);
            }
        }
    }
    let present: Vec<ClassId> = spec.objects.iter().map(|o| o.class_id).collect();
    let edges = strongest_edges(&probs, &present);

    (0..n_chunks)
        .map(|c| {
            SemanticChunkMeta::new(c as u32, grid, tile_map.clone(), edges.clone())
                .map_err(|e| TraceError::BadScene(e.to_string()))
        })
        .collect()
}

/// Piecewise-constant synthetic link trace: a fresh uniform draw from
/// [min, max] Mbps every `step_s` seconds. Deterministic given the seed.
pub fn generate_network_trace(
    min_mbps: f64,
    max_mbps: f64,
    step_s: f64,
    duration_s: f64,
    seed: u64,
) -> Result<NetworkTrace, TraceError> {
    if !(min_mbps > 0.0) || max_mbps < min_mbps || !(step_s > 0.0) {
        return Err(TraceError::BadScene(format!(
            "bad network spec: [{min_mbps}, {max_mbps}] Mbps every {step_s}s"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (duration_s / step_s).ceil().max(1.0) as usize;
    let points = (0..steps)
        .map(|i| {
            let cap = if max_mbps > min_mbps {
                rng.random_range(min_mbps..max_mbps)
            } else {
                min_mbps
            };
            (i as f64 * step_s * 1000.0, cap)
        })
        .collect();
    NetworkTrace::new(points)
}
