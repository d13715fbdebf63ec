//! Sphere and tile-grid basics: wrapping, tile lookup, viewport coverage,
//! and why margin expansion preserves coverage.
//!
//! ```bash
//! cargo run --example tile_geometry
//! ```

use tilecast::sphere::{
    angular_error, expand_viewport, tile_of, viewport_tiles, wrap_yaw, Direction, TileGrid,
    Viewport,
};

fn main() {
    for raw in [0.0, 190.0, -540.0, 725.0] {
        println!("wrap_yaw({raw:>7}) = {}", wrap_yaw(raw).unwrap());
    }

    let grid = TileGrid::new(8, 8).unwrap();
    let gaze = Direction::new(12.0, -20.0).unwrap();
    println!("\ngaze {gaze} lives in tile {}", tile_of(gaze, grid));

    let vp = Viewport::new(gaze, 90.0, 90.0).unwrap();
    let visible = viewport_tiles(vp, grid);
    println!(
        "a 90x90 viewport there covers {} of {} tiles: {:?}",
        visible.len(),
        grid.tile_count(),
        visible.iter().map(|t| t.0).collect::<Vec<_>>()
    );

    // The error metric is per-axis Chebyshev, so a margin of m degrees
    // guarantees containment whenever the prediction is within m of the
    // truth — the property calibrated margins lean on.
    let predicted = Direction::new(20.0, -14.0).unwrap();
    let err = angular_error(gaze, predicted);
    let margin = err + 1.0;
    let expanded = expand_viewport(vp.recenter(predicted), margin).unwrap();
    let requested = viewport_tiles(expanded, grid);
    println!(
        "\nprediction off by {err}°; expanding by {margin}° grows the request to {} tiles",
        requested.len()
    );
    println!(
        "true tiles inside the expanded request: {}",
        visible.is_subset(&requested)
    );

    // Wraparound: a viewport straddling the antimeridian picks up both
    // edge columns.
    let wrapped = Viewport::new(Direction::new(-178.0, 0.0).unwrap(), 90.0, 60.0).unwrap();
    println!(
        "\nviewport at yaw −178 covers columns on both sides of ±180: {:?}",
        viewport_tiles(wrapped, grid)
            .iter()
            .map(|t| t.0 % 8)
            .collect::<std::collections::BTreeSet<_>>()
    );
}
