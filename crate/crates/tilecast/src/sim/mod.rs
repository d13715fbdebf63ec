//! Discrete-time trace-driven streaming loop: per-chunk forecasting,
//! calibrated set construction, FIFO downloads under a bandwidth trace,
//! playback coverage accounting, and metric aggregation — for the main
//! policy, its ablations, and the baselines.
//!
//! One session is strictly sequential (the control loop is stateful);
//! independent sessions share nothing and are run in parallel by the
//! experiment grid in [`summary`]. Everything is deterministic given the
//! configuration and input traces: reruns produce bit-identical metrics.

mod download;
pub mod summary;

use thiserror::Error;

use crate::conformal::{aci_update, AciState, CalibrationStore, ConformalError, MIN_CLASS_SAMPLES};
use crate::policy::{
    build_set, coverage_check, current_fixation_class, BudgetModel, PredictionSet,
};
use crate::predictor::{ForecastRequest, Forecaster, LinearTrend};
use crate::semantics::{classes_at, AssociationGraph, ClassId, SemanticChunkMeta, MAX_CLASSES};
use crate::sphere::{
    angular_error, tile_of, viewport_tiles, Direction, GeometryError, TileGrid, TileId, TileSet,
    Viewport,
};
use crate::traces::{label_regime, HeadTrace, NetworkTrace, Regime, TraceError};
use download::DownloadEngine;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("head trace covers {got} chunks, need at least {want}")]
    TraceTooShort { got: usize, want: usize },
    #[error("{got} chunk sidecars provided, session needs {want}")]
    MetasTooShort { got: usize, want: usize },
    #[error("sidecar grid {meta_rows}x{meta_cols} does not match simulation grid {rows}x{cols}")]
    GridMismatch {
        meta_rows: u32,
        meta_cols: u32,
        rows: u32,
        cols: u32,
    },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("policy saliency_topk requires a saliency file")]
    SaliencyMissing,
    #[error("saliency file has no rows for chunk {0}")]
    SaliencyChunk(usize),
    #[error("saliency line {line}: {msg}")]
    SaliencyParse { line: usize, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("arm {arm} run {pair} has no counterpart in arm {other}")]
    Unpaired {
        arm: String,
        pair: String,
        other: String,
    },
    #[error("arm {arm} has {got} runs, need at least 2")]
    NotEnoughRuns { arm: String, got: usize },
    #[error("baseline arm `{0}` not present in runs")]
    UnknownBaseline(String),
}

/// Set-construction policy under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Regime-partitioned calibration, per-class difficulty, online risk
    /// adaptation, and associative lookahead.
    Ours,
    /// Ours without the associative set.
    OursNoLookahead,
    /// Ours with a uniform difficulty scale (σ̂ ≡ 1).
    OursGenericDifficulty,
    /// Single calibration bin, σ̂ ≡ 1, fixed α, no lookahead.
    GenericConformal,
    /// Point forecast plus a constant safety margin.
    KinematicFixed,
    /// Top-K tiles from an ingested per-tile saliency file; no forecast.
    SaliencyTopk,
}

impl PolicyKind {
    fn uses_conformal(self) -> bool {
        !matches!(self, PolicyKind::KinematicFixed | PolicyKind::SaliencyTopk)
    }

    fn uses_aci(self) -> bool {
        matches!(
            self,
            PolicyKind::Ours | PolicyKind::OursNoLookahead | PolicyKind::OursGenericDifficulty
        )
    }

    fn uses_lookahead(self) -> bool {
        matches!(self, PolicyKind::Ours | PolicyKind::OursGenericDifficulty)
    }

    fn uses_class_difficulty(self) -> bool {
        matches!(self, PolicyKind::Ours | PolicyKind::OursNoLookahead)
    }

    fn mondrian(self) -> bool {
        self.uses_aci()
    }
}

fn default_grid_dim() -> u32 {
    8
}
fn default_fov() -> f64 {
    90.0
}
fn default_chunk_s() -> f64 {
    1.0
}
fn default_horizon_ms() -> f64 {
    1000.0
}
fn default_window_samples() -> usize {
    8
}
fn default_regime_window_ms() -> f64 {
    100.0
}
fn default_theta_storm() -> f64 {
    100.0
}
fn default_alpha_target() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.005
}
fn default_alpha_min() -> f64 {
    0.005
}
fn default_alpha_max() -> f64 {
    0.5
}
fn default_sigma_min() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    0.3
}
fn default_lambda() -> f64 {
    0.5
}
fn default_capacity() -> usize {
    crate::conformal::DEFAULT_BIN_CAPACITY
}
fn default_warmup() -> usize {
    30
}
fn default_tile_cost() -> f64 {
    15.0 / 64.0 // a 15 Mbps stream split uniformly over the 8×8 grid
}
fn default_fixed_margin() -> f64 {
    10.0
}
fn default_top_k() -> usize {
    16
}
fn default_policy() -> PolicyKind {
    PolicyKind::Ours
}

/// Full configuration of one streaming session.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_grid_dim")]
    pub grid_rows: u32,
    #[serde(default = "default_grid_dim")]
    pub grid_cols: u32,
    #[serde(default = "default_fov")]
    pub fov_width_deg: f64,
    #[serde(default = "default_fov")]
    pub fov_height_deg: f64,
    #[serde(default = "default_chunk_s")]
    pub chunk_s: f64,
    #[serde(default = "default_horizon_ms")]
    pub horizon_ms: f64,
    #[serde(default = "default_window_samples")]
    pub window_samples: usize,
    #[serde(default = "default_regime_window_ms")]
    pub regime_window_ms: f64,
    #[serde(default = "default_theta_storm")]
    pub theta_storm_dps: f64,
    #[serde(default = "default_alpha_target")]
    pub alpha_target: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default = "default_sigma_min")]
    pub sigma_min_deg: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Similarity/co-occurrence mixing weight, echoed into reports for graph
    /// builds done alongside an experiment.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_capacity")]
    pub calibration_capacity: usize,
    /// Leading chunks that only calibrate and are excluded from metrics.
    #[serde(default = "default_warmup")]
    pub warmup_chunks: usize,
    #[serde(default = "default_tile_cost")]
    pub tile_cost_mbit: f64,
    #[serde(default = "default_fixed_margin")]
    pub fixed_margin_deg: f64,
    #[serde(default = "default_top_k")]
    pub top_k_tiles: usize,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl SimConfig {
    pub fn grid(&self) -> Result<TileGrid, GeometryError> {
        TileGrid::new(self.grid_rows, self.grid_cols)
    }

    pub fn chunk_ms(&self) -> f64 {
        self.chunk_s * 1000.0
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::BadConfig(msg));
        if !(self.chunk_s > 0.0) {
            return bad(format!("chunk_s {} must be > 0", self.chunk_s));
        }
        if !(self.horizon_ms >= 0.0) || !self.horizon_ms.is_finite() {
            return bad(format!("horizon_ms {} must be finite and >= 0", self.horizon_ms));
        }
        if self.window_samples == 0 {
            return bad("window_samples must be >= 1".into());
        }
        if !(self.tile_cost_mbit > 0.0) {
            return bad(format!("tile_cost_mbit {} must be > 0", self.tile_cost_mbit));
        }
        if !(self.tau >= 0.0) || self.tau.is_nan() {
            return bad(format!("tau {} must be >= 0", self.tau));
        }
        if self.top_k_tiles == 0 {
            return bad("top_k_tiles must be >= 1".into());
        }
        Ok(())
    }
}

/// One line of the per-chunk log. `None` fields are written as `nan` in the
/// CSV (policies without a conformal margin have no α or Q).
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRow {
    pub chunk: u32,
    pub regime: Regime,
    pub alpha: Option<f64>,
    pub q: Option<f64>,
    pub margin_deg: Option<f64>,
    pub n_foveal: usize,
    pub n_assoc: usize,
    pub covered: bool,
    pub stall_ms: f64,
    pub mbits: f64,
}

pub const CHUNK_LOG_HEADER: &str =
    "chunk,regime,alpha,Q,margin_deg,n_foveal,n_assoc,covered,stall_ms,mbits";

fn opt_num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "nan".to_string(),
    }
}

impl ChunkRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.chunk,
            self.regime,
            opt_num(self.alpha),
            opt_num(self.q),
            opt_num(self.margin_deg),
            self.n_foveal,
            self.n_assoc,
            self.covered as u8,
            self.stall_ms,
            self.mbits
        )
    }
}

/// Aggregated outcome of one session. Hit rates with an empty denominator
/// report 1.0 (vacuous coverage); stalls with no playback report 0.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SessionMetrics {
    pub arm: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub trace_id: String,
    pub chunks: usize,
    pub scored_chunks: usize,
    pub scored_duration_s: f64,
    pub stall_s: f64,
    pub stall_events: u32,
    pub storm_stall_s: f64,
    pub calm_stall_s: f64,
    pub storm_time_s: f64,
    pub calm_time_s: f64,
    /// Fraction of Storm-labeled playback instants with full tile coverage.
    pub saccade_hit_rate: f64,
    pub calm_hit_rate: f64,
    /// Fraction of scored chunks whose true viewport tiles were all requested.
    pub coverage_rate: f64,
    /// Fraction of scored chunks with prediction error within the margin;
    /// absent for policies without a margin.
    pub margin_coverage_rate: Option<f64>,
    /// Mean over scored chunks with a finite margin.
    pub mean_margin_deg: Option<f64>,
    /// Megabits actually transferred during the scored window, divided by
    /// its duration.
    pub bandwidth_mbps: f64,
    pub transferred_mbit: f64,
    pub requested_mbit: f64,
    pub dropped_tiles: usize,
    pub final_alpha: Option<f64>,
    #[serde(skip)]
    pub rows: Vec<ChunkRow>,
}

impl SessionMetrics {
    pub fn chunk_log_csv(&self) -> String {
        let mut out = String::from(CHUNK_LOG_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        out
    }
}

/// Per-tile saliency scores by chunk, for the saliency baseline. CSV format:
/// `chunk,tile_id,score`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    per_chunk: Vec<Vec<(TileId, f64)>>,
}

impl SaliencyMap {
    pub fn parse_csv(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(SimError::SaliencyParse {
            line: 1,
            msg: "empty file".into(),
        })?;
        if header.trim_end() != "chunk,tile_id,score" {
            return Err(SimError::SaliencyParse {
                line: 1,
                msg: format!("expected header `chunk,tile_id,score`, got `{header}`"),
            });
        }
        let mut per_chunk: Vec<Vec<(TileId, f64)>> = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let raw = raw.trim_end();
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').collect();
            if fields.len() != 3 {
                return Err(SimError::SaliencyParse {
                    line,
                    msg: format!("expected 3 columns, got {}", fields.len()),
                });
            }
            let chunk: usize = fields[0].parse().map_err(|e| SimError::SaliencyParse {
                line,
                msg: format!("chunk: {e}"),
            })?;
            let tile: u32 = fields[1].parse().map_err(|e| SimError::SaliencyParse {
                line,
                msg: format!("tile_id: {e}"),
            })?;
            let score: f64 = fields[2].parse().map_err(|e| SimError::SaliencyParse {
                line,
                msg: format!("score: {e}"),
            })?;
            if per_chunk.len() <= chunk {
                per_chunk.resize(chunk + 1, Vec::new());
            }
            per_chunk[chunk].push((TileId(tile), score));
        }
        Ok(Self { per_chunk })
    }

    /// The K tiles with the highest score for a chunk (ties broken by
    /// ascending tile id).
    pub fn top_k(&self, chunk: usize, k: usize, grid: TileGrid) -> Result<TileSet, SimError> {
        let rows = self
            .per_chunk
            .get(chunk)
            .filter(|r| !r.is_empty())
            .ok_or(SimError::SaliencyChunk(chunk))?;
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut set = grid.empty_set();
        for &(tile, _) in sorted.iter().take(k) {
            set.insert(tile);
        }
        Ok(set)
    }
}

/// Class-conditional running mean absolute error, the online equivalent of
/// the batch difficulty fit.
#[derive(Debug, Clone, Default)]
struct DifficultyStats {
    sums: [f64; MAX_CLASSES],
    counts: [usize; MAX_CLASSES],
    total_sum: f64,
    total_count: usize,
}

impl DifficultyStats {
    fn record(&mut self, class: Option<ClassId>, abs_err: f64) {
        if let Some(c) = class {
            self.sums[c as usize] += abs_err;
            self.counts[c as usize] += 1;
        }
        self.total_sum += abs_err;
        self.total_count += 1;
    }

    fn sigma(&self, class: Option<ClassId>, floor: f64) -> f64 {
        let global = if self.total_count > 0 {
            self.total_sum / self.total_count as f64
        } else {
            floor
        };
        let raw = match class {
            Some(c) if self.counts[c as usize] >= MIN_CLASS_SAMPLES => {
                self.sums[c as usize] / self.counts[c as usize] as f64
            }
            _ => global,
        };
        raw.max(floor)
    }
}

struct ChunkDecision {
    predicted: Direction,
    sigma: Option<f64>,
    sigma_class: Option<ClassId>,
    regime: Regime,
    alpha: Option<f64>,
    q: Option<f64>,
    set: PredictionSet,
    requested_mbit: f64,
}

/// Run one streaming session. Chunk c starts playing at `c·chunk_s`; its
/// tile set is decided `horizon_ms` earlier (clamped to the trace start) from
/// the samples available then, downloads drain FIFO at trace capacity, and
/// every playback sample with an undownloaded visible tile accrues stall
/// time. Prediction errors observed at each chunk boundary feed the
/// calibration store, the difficulty table, and the risk controller.
pub fn run_session(
    cfg: &SimConfig,
    head: &HeadTrace,
    net: &NetworkTrace,
    metas: &[SemanticChunkMeta],
    saliency: Option<&SaliencyMap>,
) -> Result<SessionMetrics, SimError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let chunk_ms = cfg.chunk_ms();
    let n_chunks = (head.duration_ms() / chunk_ms).floor() as usize;
    if n_chunks <= cfg.warmup_chunks {
        return Err(SimError::TraceTooShort {
            got: n_chunks,
            want: cfg.warmup_chunks + 1,
        });
    }
    if metas.len() < n_chunks {
        return Err(SimError::MetasTooShort {
            got: metas.len(),
            want: n_chunks,
        });
    }
    for meta in &metas[..n_chunks] {
        if meta.grid != grid {
            return Err(SimError::GridMismatch {
                meta_rows: meta.grid.rows(),
                meta_cols: meta.grid.cols(),
                rows: grid.rows(),
                cols: grid.cols(),
            });
        }
    }
    if cfg.policy == PolicyKind::SaliencyTopk && saliency.is_none() {
        return Err(SimError::SaliencyMissing);
    }

    let labels = label_regime(head, cfg.regime_window_ms, cfg.theta_storm_dps)?;
    let fov = Viewport::new(
        Direction::new(0.0, 0.0).expect("origin"),
        cfg.fov_width_deg,
        cfg.fov_height_deg,
    )?;
    let forecaster = LinearTrend;

    let mut store = CalibrationStore::new(cfg.calibration_capacity);
    let mut difficulty = DifficultyStats::default();
    let mut aci = AciState::new(cfg.alpha_target, cfg.gamma, cfg.alpha_min, cfg.alpha_max)?;
    let mut engine = DownloadEngine::new(net, n_chunks, grid.tile_count());
    let mut decisions: Vec<ChunkDecision> = Vec::with_capacity(n_chunks);
    let mut covered_tiles: Vec<bool> = vec![false; n_chunks];
    let mut covered_margin: Vec<Option<bool>> = vec![None; n_chunks];
    let mut next_to_score = 0usize;

    for c in 0..n_chunks {
        let t_play = c as f64 * chunk_ms;
        let t_decide = (t_play - cfg.horizon_ms).max(0.0);

        // Reveal the truth of every chunk whose playback has started by now.
        while next_to_score < c && (next_to_score as f64) * chunk_ms <= t_decide {
            score_chunk(
                next_to_score,
                cfg,
                head,
                grid,
                fov,
                &decisions[next_to_score],
                &mut store,
                &mut difficulty,
                &mut aci,
                &mut covered_tiles,
                &mut covered_margin,
            );
            next_to_score += 1;
        }

        let idx = head.index_at(t_decide).unwrap_or(0);
        let window_start = (idx + 1).saturating_sub(cfg.window_samples);
        let window = &head.samples[window_start..=idx];
        let regime = labels[idx];
        let gaze = head.samples[idx].dir;
        let meta_now = &metas[((t_decide / chunk_ms) as usize).min(n_chunks - 1)];
        let meta_target = &metas[c];

        let predicted = if window.len() >= 2 {
            let horizon = t_play - head.samples[idx].t_ms;
            forecaster
                .forecast(&ForecastRequest {
                    window,
                    horizon_ms: horizon,
                })
                .expect("validated window")
                .predicted
        } else {
            gaze // insufficient history: fall back to the last sample
        };

        // Per-policy margin.
        let (sigma, sigma_class, alpha, q, margin_deg) = match cfg.policy {
            PolicyKind::Ours | PolicyKind::OursNoLookahead | PolicyKind::OursGenericDifficulty => {
                let class = lowest_class(meta_now, gaze, grid);
                let sigma = if cfg.policy.uses_class_difficulty() {
                    difficulty.sigma(class, cfg.sigma_min_deg)
                } else {
                    1.0
                };
                let alpha = aci.alpha;
                let q = store.quantile(regime, alpha)?;
                (
                    Some(sigma),
                    class,
                    Some(alpha),
                    Some(q),
                    Some(crate::conformal::margin(q, sigma)),
                )
            }
            PolicyKind::GenericConformal => {
                let q = store.quantile(Regime::Calm, cfg.alpha_target)?;
                (Some(1.0), None, Some(cfg.alpha_target), Some(q), Some(q))
            }
            PolicyKind::KinematicFixed => (None, None, None, None, Some(cfg.fixed_margin_deg)),
            PolicyKind::SaliencyTopk => (None, None, None, None, None),
        };

        let budget = BudgetModel {
            tile_cost_mbit: cfg.tile_cost_mbit,
            capacity_mbps: net.capacity_at(t_decide),
            chunk_s: cfg.chunk_s,
        };
        let set = match cfg.policy {
            PolicyKind::SaliencyTopk => {
                let tiles = saliency
                    .expect("checked above")
                    .top_k(c, cfg.top_k_tiles, grid)?;
                PredictionSet::foveal_only(tiles, 0.0, None)
            }
            policy => {
                let vp = fov.recenter(predicted);
                let m = margin_deg.expect("non-saliency policies carry a margin");
                if policy.uses_lookahead() {
                    let graph = AssociationGraph::from_edges(MAX_CLASSES, &meta_target.edges);
                    let gaze_tile = tile_of(gaze, grid);
                    let class = current_fixation_class(meta_now, &graph, gaze_tile);
                    build_set(
                        vp,
                        m,
                        grid,
                        meta_target,
                        &graph,
                        class,
                        cfg.tau,
                        &budget,
                        alpha,
                    )
                } else {
                    let expanded = crate::sphere::expand_viewport(vp, m)?;
                    PredictionSet::foveal_only(viewport_tiles(expanded, grid), m, alpha)
                }
            }
        };

        let requested_mbit = set.total.len() as f64 * cfg.tile_cost_mbit;
        engine.enqueue(
            c,
            &set.total,
            t_decide,
            t_play + chunk_ms,
            cfg.tile_cost_mbit,
        );
        decisions.push(ChunkDecision {
            predicted,
            sigma,
            sigma_class,
            regime,
            alpha,
            q,
            set,
            requested_mbit,
        });
    }

    // Score the tail.
    while next_to_score < n_chunks {
        score_chunk(
            next_to_score,
            cfg,
            head,
            grid,
            fov,
            &decisions[next_to_score],
            &mut store,
            &mut difficulty,
            &mut aci,
            &mut covered_tiles,
            &mut covered_margin,
        );
        next_to_score += 1;
    }

    // Playback pass.
    let period_ms = head.period_ms();
    let warmup_end_ms = cfg.warmup_chunks as f64 * chunk_ms;
    let session_end_ms = n_chunks as f64 * chunk_ms;
    let mut stall_ms_per_chunk = vec![0.0f64; n_chunks];
    let mut stall_ms = 0.0;
    let mut stall_events = 0u32;
    let mut in_stall = false;
    let mut storm_samples = 0usize;
    let mut storm_hits = 0usize;
    let mut storm_stall_ms = 0.0;
    let mut calm_samples = 0usize;
    let mut calm_hits = 0usize;
    let mut calm_stall_ms = 0.0;

    for (i, s) in head.samples.iter().enumerate() {
        if s.t_ms >= session_end_ms {
            break;
        }
        let c = ((s.t_ms / chunk_ms) as usize).min(n_chunks - 1);
        let visible = viewport_tiles(fov.recenter(s.dir), grid);
        let stalled = visible
            .iter()
            .any(|tile| !engine.completed_by(c, tile, s.t_ms));
        if s.t_ms < warmup_end_ms {
            in_stall = stalled;
            continue;
        }
        if stalled {
            stall_ms += period_ms;
            stall_ms_per_chunk[c] += period_ms;
            if !in_stall {
                stall_events += 1;
            }
        }
        in_stall = stalled;
        match labels[i] {
            Regime::Storm => {
                storm_samples += 1;
                if stalled {
                    storm_stall_ms += period_ms;
                } else {
                    storm_hits += 1;
                }
            }
            Regime::Calm => {
                calm_samples += 1;
                if stalled {
                    calm_stall_ms += period_ms;
                } else {
                    calm_hits += 1;
                }
            }
        }
    }

    engine.assert_conservation();

    let scored_chunks = n_chunks - cfg.warmup_chunks;
    let scored: Vec<usize> = (cfg.warmup_chunks..n_chunks).collect();
    let coverage_rate =
        scored.iter().filter(|&&c| covered_tiles[c]).count() as f64 / scored_chunks as f64;
    let margin_outcomes: Vec<bool> = scored.iter().filter_map(|&c| covered_margin[c]).collect();
    let margin_coverage_rate = if margin_outcomes.is_empty() {
        None
    } else {
        Some(margin_outcomes.iter().filter(|&&b| b).count() as f64 / margin_outcomes.len() as f64)
    };
    let finite_margins: Vec<f64> = scored
        .iter()
        .filter_map(|&c| {
            decisions[c]
                .set
                .margin_used
                .is_finite()
                .then_some(decisions[c].set.margin_used)
        })
        .collect();
    let mean_margin_deg = if cfg.policy == PolicyKind::SaliencyTopk || finite_margins.is_empty() {
        None
    } else {
        Some(finite_margins.iter().sum::<f64>() / finite_margins.len() as f64)
    };
    let scored_duration_s = scored_chunks as f64 * cfg.chunk_s;
    let transferred_mbit = engine.transferred_mbit_in(warmup_end_ms, session_end_ms);
    let requested_mbit: f64 = scored.iter().map(|&c| decisions[c].requested_mbit).sum();

    let rows: Vec<ChunkRow> = (0..n_chunks)
        .map(|c| {
            let d = &decisions[c];
            ChunkRow {
                chunk: c as u32,
                regime: d.regime,
                alpha: d.alpha,
                q: d.q,
                margin_deg: if cfg.policy == PolicyKind::SaliencyTopk {
                    None
                } else {
                    Some(d.set.margin_used)
                },
                n_foveal: d.set.foveal.len(),
                n_assoc: d.set.associative.len(),
                covered: covered_tiles[c],
                stall_ms: stall_ms_per_chunk[c],
                mbits: d.requested_mbit,
            }
        })
        .collect();

    Ok(SessionMetrics {
        arm: String::new(),
        policy: cfg.policy,
        seed: cfg.seed,
        trace_id: head.session.clone(),
        chunks: n_chunks,
        scored_chunks,
        scored_duration_s,
        stall_s: stall_ms / 1000.0,
        stall_events,
        storm_stall_s: storm_stall_ms / 1000.0,
        calm_stall_s: calm_stall_ms / 1000.0,
        storm_time_s: storm_samples as f64 * period_ms / 1000.0,
        calm_time_s: calm_samples as f64 * period_ms / 1000.0,
        saccade_hit_rate: rate_or_one(storm_hits, storm_samples),
        calm_hit_rate: rate_or_one(calm_hits, calm_samples),
        coverage_rate,
        margin_coverage_rate,
        mean_margin_deg,
        bandwidth_mbps: transferred_mbit / scored_duration_s,
        transferred_mbit,
        requested_mbit,
        dropped_tiles: engine.dropped_tiles(),
        final_alpha: decisions.last().and_then(|d| d.alpha),
        rows,
    })
}

fn rate_or_one(hits: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Lowest class id present in the gaze tile, in codec (bit) order.
fn lowest_class(meta: &SemanticChunkMeta, gaze: Direction, grid: TileGrid) -> Option<ClassId> {
    classes_at(meta, tile_of(gaze, grid)).into_iter().next()
}

#[allow(clippy::too_many_arguments)]
fn score_chunk(
    c: usize,
    cfg: &SimConfig,
    head: &HeadTrace,
    grid: TileGrid,
    fov: Viewport,
    decision: &ChunkDecision,
    store: &mut CalibrationStore,
    difficulty: &mut DifficultyStats,
    aci: &mut AciState,
    covered_tiles: &mut [bool],
    covered_margin: &mut [Option<bool>],
) {
    let t_play = c as f64 * cfg.chunk_ms();
    let idx = head.index_at(t_play).unwrap_or(0);
    let truth = head.samples[idx].dir;
    let err = angular_error(truth, decision.predicted);

    let true_tiles = viewport_tiles(fov.recenter(truth), grid);
    covered_tiles[c] = coverage_check(&decision.set, &true_tiles);
    if cfg.policy != PolicyKind::SaliencyTopk {
        // An infinite margin trivially covers.
        covered_margin[c] = Some(err <= decision.set.margin_used);
    }

    if cfg.policy.uses_conformal() {
        let sigma = decision.sigma.expect("conformal policies carry sigma");
        if let Ok(s) = crate::conformal::score(truth, decision.predicted, sigma) {
            let bin = if cfg.policy.mondrian() {
                decision.regime
            } else {
                Regime::Calm
            };
            store.observe(bin, s);
        }
        difficulty.record(decision.sigma_class, err);
        if cfg.policy.uses_aci() && c >= cfg.warmup_chunks {
            *aci = aci_update(*aci, covered_tiles[c]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::Direction;
    use crate::traces::synth::{generate_synthetic, SceneObject, SyntheticSceneSpec};

    fn stationary_scene(seed: u64) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            objects: vec![SceneObject {
                class_id: 2,
                center: Direction::new(20.0, -10.0).unwrap(),
                dwell_mean_s: 1.0,
                jitter_deg: None,
            }],
            transitions: vec![vec![0.0]],
            saccade_speed_dps: 200.0,
            fixation_jitter_deg: 1.0,
            seed,
        }
    }

    fn base_cfg(policy: PolicyKind) -> SimConfig {
        SimConfig {
            policy,
            ..SimConfig::default()
        }
    }

    #[test]
    fn saturation_policy_has_full_coverage_and_no_stalls() {
        let (head, metas) = generate_synthetic(&stationary_scene(5), 60.0, 100.0).unwrap();
        let net = NetworkTrace::constant(1e9);
        let mut cfg = base_cfg(PolicyKind::KinematicFixed);
        cfg.fixed_margin_deg = f64::INFINITY;
        let m = run_session(&cfg, &head, &net, &metas, None).unwrap();
        assert_eq!(m.stall_s, 0.0);
        assert_eq!(m.coverage_rate, 1.0);
        assert_eq!(m.calm_hit_rate, 1.0);
        assert_eq!(m.margin_coverage_rate, Some(1.0));
    }

    #[test]
    fn starved_link_stalls_every_scored_sample() {
        let (head, metas) = generate_synthetic(&stationary_scene(6), 40.0, 100.0).unwrap();
        let net = NetworkTrace::constant(1e-6);
        let cfg = base_cfg(PolicyKind::KinematicFixed);
        let m = run_session(&cfg, &head, &net, &metas, None).unwrap();
        // Nothing downloads in time: every scored instant stalls, even
        // though the requested sets may well contain the true tiles.
        assert!((m.stall_s - m.scored_duration_s).abs() < 1e-6);
        assert_eq!(m.saccade_hit_rate, 1.0); // vacuous: no storm samples
        assert_eq!(m.calm_hit_rate, 0.0);
    }

    #[test]
    fn stationary_conformal_coverage_tracks_alpha() {
        let (head, metas) = generate_synthetic(&stationary_scene(7), 300.0, 100.0).unwrap();
        let net = NetworkTrace::constant(100.0);
        let mut cfg = base_cfg(PolicyKind::Ours);
        cfg.gamma = 0.0; // isolate split conformal
        let m = run_session(&cfg, &head, &net, &metas, None).unwrap();
        let cov = m.margin_coverage_rate.unwrap();
        assert!(
            cov >= 1.0 - cfg.alpha_target - 0.02,
            "margin coverage {cov}"
        );
        assert!(
            m.calm_hit_rate >= 1.0 - cfg.alpha_target - 0.02,
            "hit rate {}",
            m.calm_hit_rate
        );
    }

    #[test]
    fn determinism_bit_identical_metrics() {
        let (head, metas) = generate_synthetic(&stationary_scene(8), 60.0, 100.0).unwrap();
        let net = crate::traces::synth::generate_network_trace(5.0, 20.0, 2.0, 60.0, 3).unwrap();
        let cfg = base_cfg(PolicyKind::Ours);
        let a = run_session(&cfg, &head, &net, &metas, None).unwrap();
        let b = run_session(&cfg, &head, &net, &metas, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saliency_policy_requires_file_and_respects_k() {
        let (head, metas) = generate_synthetic(&stationary_scene(9), 40.0, 100.0).unwrap();
        let net = NetworkTrace::constant(100.0);
        let mut cfg = base_cfg(PolicyKind::SaliencyTopk);
        assert!(matches!(
            run_session(&cfg, &head, &net, &metas, None),
            Err(SimError::SaliencyMissing)
        ));

        // Full-sphere saliency: K = 64 covers everything.
        let mut csv = String::from("chunk,tile_id,score\n");
        for c in 0..40 {
            for t in 0..64 {
                csv.push_str(&format!("{c},{t},{}\n", 64 - t));
            }
        }
        let sal = SaliencyMap::parse_csv(&csv).unwrap();
        cfg.top_k_tiles = 64;
        let m = run_session(&cfg, &head, &net, &metas, Some(&sal)).unwrap();
        assert_eq!(m.coverage_rate, 1.0);
        assert_eq!(m.margin_coverage_rate, None);
        cfg.top_k_tiles = 4;
        let m4 = run_session(&cfg, &head, &net, &metas, Some(&sal)).unwrap();
        assert!(m4.requested_mbit < m.requested_mbit);
    }

    #[test]
    fn generic_conformal_matches_single_regime_ours_quantile() {
        // On an all-calm session with σ̂ ≡ 1, generic (single-bin) and
        // Mondrian calibration see identical scores, so Q and margins agree.
        let (head, metas) = generate_synthetic(&stationary_scene(10), 80.0, 100.0).unwrap();
        let net = NetworkTrace::constant(100.0);
        let mut ours = base_cfg(PolicyKind::OursGenericDifficulty);
        ours.gamma = 0.0;
        let generic = base_cfg(PolicyKind::GenericConformal);
        let a = run_session(&ours, &head, &net, &metas, None).unwrap();
        let b = run_session(&generic, &head, &net, &metas, None).unwrap();
        let qa: Vec<Option<f64>> = a.rows.iter().map(|r| r.q).collect();
        let qb: Vec<Option<f64>> = b.rows.iter().map(|r| r.q).collect();
        assert_eq!(qa, qb);
    }

    #[test]
    fn kinematic_zero_margin_on_stationary_trace_covers() {
        let mut spec = stationary_scene(11);
        spec.fixation_jitter_deg = 0.0;
        let (head, metas) = generate_synthetic(&spec, 40.0, 100.0).unwrap();
        let net = NetworkTrace::constant(100.0);
        let mut cfg = base_cfg(PolicyKind::KinematicFixed);
        cfg.fixed_margin_deg = 0.0;
        let m = run_session(&cfg, &head, &net, &metas, None).unwrap();
        assert_eq!(m.coverage_rate, 1.0);
    }

    #[test]
    fn two_chunk_horizon_runs_and_stays_deterministic() {
        let (head, metas) = generate_synthetic(&stationary_scene(13), 80.0, 100.0).unwrap();
        let net = NetworkTrace::constant(50.0);
        let mut cfg = base_cfg(PolicyKind::Ours);
        cfg.horizon_ms = 2000.0;
        cfg.window_samples = 64;
        let a = run_session(&cfg, &head, &net, &metas, None).unwrap();
        let b = run_session(&cfg, &head, &net, &metas, None).unwrap();
        assert_eq!(a, b);
        assert!(a.margin_coverage_rate.unwrap() > 0.9);
    }

    #[test]
    fn bad_config_rejected() {
        let (head, metas) = generate_synthetic(&stationary_scene(14), 40.0, 100.0).unwrap();
        let net = NetworkTrace::constant(10.0);
        let mut cfg = base_cfg(PolicyKind::Ours);
        cfg.tile_cost_mbit = 0.0;
        assert!(matches!(
            run_session(&cfg, &head, &net, &metas, None),
            Err(SimError::BadConfig(_))
        ));
    }

    #[test]
    fn session_validations() {
        let (head, metas) = generate_synthetic(&stationary_scene(12), 40.0, 100.0).unwrap();
        let net = NetworkTrace::constant(10.0);
        let cfg = base_cfg(PolicyKind::Ours);
        assert!(matches!(
            run_session(&cfg, &head, &net, &metas[..10], None),
            Err(SimError::MetasTooShort { .. })
        ));
        let mut small = cfg.clone();
        small.grid_rows = 4;
        assert!(matches!(
            run_session(&small, &head, &net, &metas, None),
            Err(SimError::GridMismatch { .. })
        ));
        let (short_head, short_metas) =
            generate_synthetic(&stationary_scene(12), 10.0, 100.0).unwrap();
        assert!(matches!(
            run_session(&cfg, &short_head, &net, &short_metas, None),
            Err(SimError::TraceTooShort { .. })
        ));
    }
}
