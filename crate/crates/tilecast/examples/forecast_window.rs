//! Point forecasting with the windowed linear-trend forecaster, including a
//! yaw series crossing the antimeridian.
//!
//! ```bash
//! cargo run --example forecast_window
//! ```

use tilecast::predictor::{predict_point, unwrap_yaw_series, ForecastRequest};
use tilecast::sphere::Direction;
use tilecast::traces::GazeSample;

fn window(rate_hz: f64, f: impl Fn(f64) -> (f64, f64)) -> Vec<GazeSample> {
    (0..8)
        .map(|i| {
            let t_ms = i as f64 * 1000.0 / rate_hz;
            let (yaw, pitch) = f(t_ms);
            GazeSample {
                t_ms,
                dir: Direction::new(yaw, pitch).unwrap(),
                fixated_class: None,
            }
        })
        .collect()
}

fn main() {
    // Steady drift: +40°/s in yaw, −5°/s in pitch.
    let w = window(100.0, |t| (10.0 + 40.0 * t / 1000.0, -5.0 * t / 1000.0));
    for k in [250.0, 1000.0, 2000.0] {
        let r = predict_point(&ForecastRequest {
            window: &w,
            horizon_ms: k,
        })
        .unwrap();
        println!("horizon {k:>6} ms -> {}", r.predicted);
    }

    // Crossing −180: the unwrap step keeps the fitted line continuous.
    let crossing = window(100.0, |t| (-176.0 - 80.0 * t / 1000.0, 0.0));
    let yaws: Vec<f64> = crossing.iter().map(|s| s.dir.yaw()).collect();
    println!("\nwrapped yaw series:   {yaws:.1?}");
    println!("unwrapped for fitting: {:.1?}", unwrap_yaw_series(&yaws));
    let r = predict_point(&ForecastRequest {
        window: &crossing,
        horizon_ms: 500.0,
    })
    .unwrap();
    println!("forecast 500 ms out: {} (no 360° jump)", r.predicted);

    // The forecaster refuses windows it cannot fit.
    let too_short = &crossing[..1];
    println!(
        "\none-sample window: {:?}",
        predict_point(&ForecastRequest {
            window: too_short,
            horizon_ms: 500.0
        })
        .unwrap_err()
    );
}
