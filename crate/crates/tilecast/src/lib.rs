#![forbid(unsafe_code)]
// Comparisons written as `!(x > 0.0)` are deliberate: they reject NaN along
// with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Viewport-adaptive 360° tile streaming toolkit.
//!
//! `tilecast` predicts where a viewer will look next, wraps that point
//! forecast in a statistically calibrated tile set, augments it with
//! association-driven lookahead toward likely saccade destinations, and
//! replays the whole control loop against head-motion and bandwidth traces
//! in a discrete-time streaming simulator.
//!
//! The pipeline, module by module:
//!
//! - [`sphere`] — yaw/pitch arithmetic, the equirectangular tile grid,
//!   viewport→tile coverage and margin expansion.
//! - [`traces`] — head/network trace I/O, Calm/Storm regime labeling, and a
//!   synthetic scene generator with known semantic ground truth.
//! - [`predictor`] — pluggable point forecaster (windowed linear trend by
//!   default).
//! - [`conformal`] — normalized nonconformity scores, per-regime sliding
//!   calibration, margin quantiles, difficulty tables, and online risk
//!   adaptation.
//! - [`semantics`] — class vocabularies, association graphs, and the
//!   304-byte per-chunk sidecar codec.
//! - [`policy`] — foveal ∪ associative prediction-set construction under a
//!   residual-bandwidth budget.
//! - [`sim`] — the trace-driven streaming loop, baseline policies, metrics,
//!   and paired bootstrap reports.
//!
//! Each major capability has a runnable demo under `examples/`; the
//! `tilecast` binary exposes the same machinery as batch subcommands
//! (`generate`, `graph`, `meta`, `run`, `summarize`).

pub mod cli;
pub mod conformal;
pub mod policy;
pub mod predictor;
pub mod semantics;
pub mod sim;
pub mod sphere;
pub mod traces;
