//! Persisting calibration state: snapshot the per-regime score windows and
//! the difficulty table to JSON, restore them, and keep identical quantiles
//! — the mechanism behind reproducible experiment restarts.
//!
//! ```bash
//! cargo run --example calibration_snapshot
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tilecast::conformal::{fit_difficulty, score, CalibrationSnapshot, CalibrationStore};
use tilecast::sphere::Direction;
use tilecast::traces::Regime;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let origin = Direction::new(0.0, 0.0).unwrap();
    let mut store = CalibrationStore::new(500);
    let mut samples = Vec::new();
    for _ in 0..400 {
        let calm: f64 = rng.random_range(0.0..3.0);
        let storm: f64 = rng.random_range(0.0..30.0);
        store.observe(
            Regime::Calm,
            score(Direction::new(calm, 0.0).unwrap(), origin, 1.0).unwrap(),
        );
        store.observe(
            Regime::Storm,
            score(Direction::new(storm, 0.0).unwrap(), origin, 1.0).unwrap(),
        );
        samples.push((Some((calm as u8) % 4), calm));
    }
    let table = fit_difficulty(&samples, 0.5).unwrap();

    let snapshot = store.snapshot(&table);
    let json = serde_json::to_string(&snapshot).unwrap();
    println!("snapshot is {} bytes of JSON", json.len());

    let restored: CalibrationSnapshot = serde_json::from_str(&json).unwrap();
    let (store2, table2) = restored.restore().unwrap();
    assert_eq!(store2, store);
    assert_eq!(table2, table);

    for regime in [Regime::Calm, Regime::Storm] {
        println!(
            "{regime}: Q(0.05) {:.3} == restored {:.3}",
            store.quantile(regime, 0.05).unwrap(),
            store2.quantile(regime, 0.05).unwrap()
        );
    }
    println!("restored state is indistinguishable from the original");
}
