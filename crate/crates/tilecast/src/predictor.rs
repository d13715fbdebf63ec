//! Low-latency point forecast of the viewport center from a sliding
//! coordinate window.
//!
//! The shipped forecaster fits an ordinary-least-squares line independently
//! to the unwrap-corrected yaw series and to the pitch series, then evaluates
//! it at the horizon. The [`Forecaster`] trait keeps the interface pluggable:
//! calibrated margins downstream are valid for any black-box point forecaster,
//! so a learned model can be dropped in without touching the rest of the
//! pipeline. Pitch is clamped after prediction, never reflected over a pole.

use thiserror::Error;

use crate::sphere::Direction;
use crate::traces::GazeSample;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("forecast window needs at least 2 samples, got {0}")]
    InsufficientHistory(usize),
    #[error("forecast window timestamps must be strictly increasing")]
    NonMonotonicWindow,
    #[error("horizon must be finite and >= 0, got {0}")]
    BadHorizon(f64),
}

/// A sliding window of recent gaze samples plus the lookahead horizon.
#[derive(Debug, Clone, Copy)]
pub struct ForecastRequest<'a> {
    pub window: &'a [GazeSample],
    pub horizon_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub predicted: Direction,
    pub forecaster: String,
}

pub trait Forecaster {
    fn id(&self) -> &str;
    fn forecast(&self, req: &ForecastRequest<'_>) -> Result<ForecastResult, PredictError>;
}

/// Rewrite a wrapped yaw series as a continuous one: each consecutive delta
/// is shifted by a multiple of 360 so its magnitude is at most 180. The first
/// value is kept as-is.
pub fn unwrap_yaw_series(yaws: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(yaws.len());
    let mut prev_out = match yaws.first() {
        Some(&y) => y,
        None => return out,
    };
    out.push(prev_out);
    let mut prev_in = prev_out;
    for &y in &yaws[1..] {
        let mut delta = y - prev_in;
        while delta > 180.0 {
            delta -= 360.0;
        }
        while delta < -180.0 {
            delta += 360.0;
        }
        prev_out += delta;
        out.push(prev_out);
        prev_in = y;
    }
    out
}

/// Windowed linear-trend forecaster: per-axis OLS evaluated `horizon_ms`
/// past the window's last timestamp.
#[derive(Debug, Default, Clone)]
pub struct LinearTrend;

impl LinearTrend {
    pub const ID: &'static str = "linear_trend";
}

impl Forecaster for LinearTrend {
    fn id(&self) -> &str {
        Self::ID
    }

    fn forecast(&self, req: &ForecastRequest<'_>) -> Result<ForecastResult, PredictError> {
        let w = req.window;
        if w.len() < 2 {
            return Err(PredictError::InsufficientHistory(w.len()));
        }
        if w.windows(2).any(|p| p[1].t_ms <= p[0].t_ms) {
            return Err(PredictError::NonMonotonicWindow);
        }
        if !req.horizon_ms.is_finite() || req.horizon_ms < 0.0 {
            return Err(PredictError::BadHorizon(req.horizon_ms));
        }

        let t_ref = w.last().unwrap().t_ms;
        let xs: Vec<f64> = w.iter().map(|s| s.t_ms - t_ref).collect();
        let yaws = unwrap_yaw_series(&w.iter().map(|s| s.dir.yaw()).collect::<Vec<_>>());
        let pitches: Vec<f64> = w.iter().map(|s| s.dir.pitch()).collect();

        let yaw = ols_at(&xs, &yaws, req.horizon_ms);
        let pitch = ols_at(&xs, &pitches, req.horizon_ms);
        Ok(ForecastResult {
            predicted: Direction::new(yaw, pitch.clamp(-90.0, 90.0))
                .expect("finite OLS prediction"),
            forecaster: Self::ID.to_string(),
        })
    }
}

/// Convenience entry point using the default forecaster.
pub fn predict_point(req: &ForecastRequest<'_>) -> Result<ForecastResult, PredictError> {
    LinearTrend.forecast(req)
}

fn ols_at(xs: &[f64], ys: &[f64], x_eval: f64) -> f64 {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return y_mean;
    }
    let slope = sxy / sxx;
    y_mean + slope * (x_eval - x_mean)
}
