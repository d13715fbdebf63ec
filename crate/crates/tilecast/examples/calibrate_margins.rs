//! Regime-partitioned calibration: how calm and storm errors produce
//! separate quantiles, and how per-class difficulty turns one quantile into
//! class-appropriate margins.
//!
//! ```bash
//! cargo run --example calibrate_margins
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tilecast::conformal::{difficulty, fit_difficulty, margin, score, CalibrationStore};
use tilecast::sphere::Direction;
use tilecast::traces::Regime;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let origin = Direction::new(0.0, 0.0).unwrap();
    let mut store = CalibrationStore::new(2000);

    // Calm errors ~ a few degrees, storm errors an order of magnitude worse.
    let mut table_samples = Vec::new();
    for _ in 0..1500 {
        let calm_err: f64 = rng.random_range(0.0..4.0);
        let storm_err: f64 = rng.random_range(0.0..40.0);
        // Class 3 is a stable target, class 7 an unstable one.
        table_samples.push((Some(3u8), calm_err * 0.5));
        table_samples.push((Some(7u8), calm_err * 2.0));
        let sigma = 1.0;
        store.observe(
            Regime::Calm,
            score(Direction::new(calm_err, 0.0).unwrap(), origin, sigma).unwrap(),
        );
        store.observe(
            Regime::Storm,
            score(Direction::new(storm_err, 0.0).unwrap(), origin, sigma).unwrap(),
        );
    }

    for alpha in [0.2, 0.1, 0.05] {
        let q_calm = store.quantile(Regime::Calm, alpha).unwrap();
        let q_storm = store.quantile(Regime::Storm, alpha).unwrap();
        println!("alpha {alpha:>5}: Q_calm {q_calm:6.2}  Q_storm {q_storm:6.2}");
    }
    println!("storm data never tightens calm margins, and vice versa\n");

    let table = fit_difficulty(&table_samples, 1.0).unwrap();
    let q = store.quantile(Regime::Calm, 0.05).unwrap();
    for class in [Some(3u8), Some(7u8), None] {
        let sigma = difficulty(&table, class);
        println!(
            "class {:?}: sigma {:5.2}° -> margin {:5.2}° at alpha 0.05",
            class,
            sigma,
            margin(q, sigma)
        );
    }

    // An empty bin is fail-safe: the quantile is infinite and the margin
    // saturates to the full sphere.
    let empty = CalibrationStore::new(100);
    println!(
        "\nempty calibration: Q = {}, margin = {}",
        empty.quantile(Regime::Storm, 0.05).unwrap(),
        margin(empty.quantile(Regime::Storm, 0.05).unwrap(), 2.0)
    );
}
