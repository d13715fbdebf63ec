//! Head-trace and network-trace data model and I/O, plus regime labeling.
//!
//! Head traces are plain CSV (`t_ms,yaw_deg,pitch_deg[,class_id]`), network
//! traces are piecewise-constant breakpoint CSV (`t_ms,mbps`). Both are UTF-8
//! with LF line ends. The regime labeler partitions samples into `Calm` and
//! `Storm` by trailing-window head speed.

pub mod synth;

use std::fmt;

use thiserror::Error;

use crate::sphere::{angular_error, Direction};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty trace")]
    Empty,
    #[error("trace needs at least 2 samples")]
    TooShort,
    #[error("line 1: expected header `{expected}`, got `{got}`")]
    BadHeader { expected: &'static str, got: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamps must be strictly increasing")]
    NonMonotonicTime { line: usize },
    #[error("line {line}: capacity must be > 0, got {got}")]
    BadCapacity { line: usize, got: f64 },
    #[error("irregular sampling: interval {dt} ms at line {line} deviates more than 1% from mean {mean} ms")]
    IrregularSampling { line: usize, dt: f64, mean: f64 },
    #[error("regime window must span at least 2 sample periods (window {window} ms, period {period} ms)")]
    WindowTooShort { window: f64, period: f64 },
    #[error("scene spec: {0}")]
    BadScene(String),
}

/// One head-pose observation. `fixated_class` is ground truth carried only by
/// synthetic traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t_ms: f64,
    pub dir: Direction,
    pub fixated_class: Option<u8>,
}

/// A uniformly sampled head-pose trace. Sample spacing must be uniform within
/// 1% jitter or parsing rejects the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub session: String,
    pub rate_hz: f64,
    pub samples: Vec<GazeSample>,
}

impl HeadTrace {
    /// Nominal sample period, milliseconds.
    pub fn period_ms(&self) -> f64 {
        1000.0 / self.rate_hz
    }

    /// Trace duration from first sample to one period past the last.
    pub fn duration_ms(&self) -> f64 {
        match self.samples.last() {
            Some(s) => s.t_ms + self.period_ms(),
            None => 0.0,
        }
    }

    /// Index of the last sample with `t_ms <= t`, if any.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        match self
            .samples
            .binary_search_by(|s| s.t_ms.partial_cmp(&t).unwrap())
        {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    pub fn to_csv(&self) -> String {
        let with_class = self.samples.iter().any(|s| s.fixated_class.is_some());
        let mut out = String::from(if with_class {
            "t_ms,yaw_deg,pitch_deg,class_id\n"
        } else {
            "t_ms,yaw_deg,pitch_deg\n"
        });
        for s in &self.samples {
            out.push_str(&format!("{},{},{}", s.t_ms, s.dir.yaw(), s.dir.pitch()));
            if with_class {
                match s.fixated_class {
                    Some(c) => out.push_str(&format!(",{c}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parse a head-trace CSV. Angles are wrapped/clamped on ingest; parse errors
/// name the offending 1-based file line.
pub fn parse_head_trace(text: &str) -> Result<HeadTrace, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(TraceError::Empty)?;
    let header = header.trim_end();
    let with_class = match header {
        "t_ms,yaw_deg,pitch_deg" => false,
        "t_ms,yaw_deg,pitch_deg,class_id" => true,
        _ => {
            return Err(TraceError::BadHeader {
                expected: "t_ms,yaw_deg,pitch_deg[,class_id]",
                got: header.to_string(),
            })
        }
    };

    let mut samples: Vec<GazeSample> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        let want = if with_class { 4 } else { 3 };
        if fields.len() != want {
            return Err(TraceError::Parse {
                line,
                msg: format!("expected {want} columns, got {}", fields.len()),
            });
        }
        let t_ms = parse_f64(fields[0], line, "t_ms")?;
        let yaw = parse_f64(fields[1], line, "yaw_deg")?;
        let pitch = parse_f64(fields[2], line, "pitch_deg")?;
        let dir = Direction::new(yaw, pitch).map_err(|e| TraceError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let fixated_class = if with_class && !fields[3].is_empty() {
            Some(fields[3].parse::<u8>().map_err(|e| TraceError::Parse {
                line,
                msg: format!("class_id: {e}"),
            })?)
        } else {
            None
        };
        if let Some(prev) = samples.last() {
            if t_ms <= prev.t_ms {
                return Err(TraceError::NonMonotonicTime { line });
            }
        }
        samples.push(GazeSample {
            t_ms,
            dir,
            fixated_class,
        });
    }

    if samples.len() < 2 {
        return Err(TraceError::TooShort);
    }
    let mean_dt = (samples.last().unwrap().t_ms - samples[0].t_ms) / (samples.len() - 1) as f64;
    for (i, pair) in samples.windows(2).enumerate() {
        let dt = pair[1].t_ms - pair[0].t_ms;
        if (dt - mean_dt).abs() > 0.01 * mean_dt {
            return Err(TraceError::IrregularSampling {
                line: i + 3,
                dt,
                mean: mean_dt,
            });
        }
    }

    Ok(HeadTrace {
        session: String::new(),
        rate_hz: 1000.0 / mean_dt,
        samples,
    })
}

fn parse_f64(field: &str, line: usize, name: &str) -> Result<f64, TraceError> {
    let v: f64 = field.trim().parse().map_err(|e| TraceError::Parse {
        line,
        msg: format!("{name}: {e}"),
    })?;
    if !v.is_finite() {
        return Err(TraceError::Parse {
            line,
            msg: format!("{name}: non-finite value {v}"),
        });
    }
    Ok(v)
}

/// Piecewise-constant link capacity: the capacity at time `t` is the value of
/// the latest breakpoint at or before `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTrace {
    points: Vec<(f64, f64)>,
}

impl NetworkTrace {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, TraceError> {
        if points.is_empty() {
            return Err(TraceError::Empty);
        }
        for (i, &(t, c)) in points.iter().enumerate() {
            if !(c > 0.0) || !c.is_finite() {
                return Err(TraceError::BadCapacity {
                    line: i + 2,
                    got: c,
                });
            }
            if i > 0 && t <= points[i - 1].0 {
                return Err(TraceError::NonMonotonicTime { line: i + 2 });
            }
        }
        Ok(Self { points })
    }

    pub fn constant(mbps: f64) -> Self {
        Self::new(vec![(0.0, mbps)]).expect("constant capacity must be > 0")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Capacity in Mbps at time `t` (ms). Times before the first breakpoint
    /// see the first value.
    pub fn capacity_at(&self, t_ms: f64) -> f64 {
        match self
            .points
            .binary_search_by(|p| p.0.partial_cmp(&t_ms).unwrap())
        {
            Ok(i) => self.points[i].1,
            Err(0) => self.points[0].1,
            Err(i) => self.points[i - 1].1,
        }
    }

    /// Megabits deliverable over [t0, t1] (ms).
    pub fn integral_mbit(&self, t0_ms: f64, t1_ms: f64) -> f64 {
        if t1_ms <= t0_ms {
            return 0.0;
        }
        let mut total = 0.0;
        let mut t = t0_ms;
        while t < t1_ms {
            let cap = self.capacity_at(t);
            let next_bp = self
                .points
                .iter()
                .map(|p| p.0)
                .find(|&bp| bp > t)
                .unwrap_or(f64::INFINITY);
            let seg_end = next_bp.min(t1_ms);
            total += cap * (seg_end - t) / 1000.0;
            t = seg_end;
        }
        total
    }

    /// Time at which `mbits` finish transferring when the link is dedicated
    /// from `start_ms` onward.
    pub fn finish_time(&self, start_ms: f64, mbits: f64) -> f64 {
        let mut t = start_ms;
        let mut left = mbits;
        loop {
            let cap = self.capacity_at(t);
            let next_bp = self
                .points
                .iter()
                .map(|p| p.0)
                .find(|&bp| bp > t)
                .unwrap_or(f64::INFINITY);
            let seg_mbit = if next_bp.is_finite() {
                cap * (next_bp - t) / 1000.0
            } else {
                f64::INFINITY
            };
            if left <= seg_mbit {
                return t + left / cap * 1000.0;
            }
            left -= seg_mbit;
            t = next_bp;
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_ms,mbps\n");
        for &(t, c) in &self.points {
            out.push_str(&format!("{t},{c}\n"));
        }
        out
    }
}

/// Parse a network-trace CSV with header `t_ms,mbps`.
pub fn parse_network_trace(text: &str) -> Result<NetworkTrace, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(TraceError::Empty)?;
    if header.trim_end() != "t_ms,mbps" {
        return Err(TraceError::BadHeader {
            expected: "t_ms,mbps",
            got: header.to_string(),
        });
    }
    let mut points = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 2 {
            return Err(TraceError::Parse {
                line,
                msg: format!("expected 2 columns, got {}", fields.len()),
            });
        }
        let t = parse_f64(fields[0], line, "t_ms")?;
        let c = parse_f64(fields[1], line, "mbps")?;
        if c <= 0.0 {
            return Err(TraceError::BadCapacity { line, got: c });
        }
        if let Some(&(pt, _)) = points.last() {
            if t <= pt {
                return Err(TraceError::NonMonotonicTime { line });
            }
        }
        points.push((t, c));
    }
    NetworkTrace::new(points)
}

/// Head-motion regime: `Storm` when trailing-window speed exceeds the
/// threshold, `Calm` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Calm,
    Storm,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Calm => write!(f, "calm"),
            Regime::Storm => write!(f, "storm"),
        }
    }
}

/// Label each sample Calm/Storm from the Chebyshev speed over a trailing
/// window. Speed at sample i is the angular error to the latest sample at
/// least `window_ms` older, divided by the actual elapsed time. Samples
/// without a full trailing window are Calm. Storm requires strictly
/// exceeding `theta_storm_dps`.
pub fn label_regime(
    trace: &HeadTrace,
    window_ms: f64,
    theta_storm_dps: f64,
) -> Result<Vec<Regime>, TraceError> {
    let period = trace.period_ms();
    if window_ms < 2.0 * period {
        return Err(TraceError::WindowTooShort {
            window: window_ms,
            period,
        });
    }
    let samples = &trace.samples;
    let mut labels = vec![Regime::Calm; samples.len()];
    let mut j = 0usize;
    for i in 0..samples.len() {
        let cutoff = samples[i].t_ms - window_ms;
        // Latest sample with t <= cutoff; j only moves forward.
        while j + 1 < samples.len() && samples[j + 1].t_ms <= cutoff {
            j += 1;
        }
        if samples[j].t_ms > cutoff {
            continue; // first window: Calm
        }
        let dt_ms = samples[i].t_ms - samples[j].t_ms;
        let speed = angular_error(samples[i].dir, samples[j].dir) * 1000.0 / dt_ms;
        if speed > theta_storm_dps {
            labels[i] = Regime::Storm;
        }
    }
    Ok(labels)
}
