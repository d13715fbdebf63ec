//! Prediction-set construction: the margin-expanded foveal set united with
//! budget-limited associative lookahead, and the coverage check that feeds
//! risk adaptation.
//!
//! ```bash
//! cargo run --example prediction_set
//! ```

use tilecast::policy::{build_set, coverage_check, BudgetModel};
use tilecast::semantics::{AssocEdge, AssociationGraph, SemanticChunkMeta};
use tilecast::sphere::{tile_of, viewport_tiles, Direction, TileGrid, Viewport};

fn main() {
    let grid = TileGrid::new(8, 8).unwrap();

    // A guitarist at the origin; the microphone 135° east in two tiles.
    let mut tile_map = vec![0u32; 64];
    tile_map[tile_of(Direction::new(0.0, 0.0).unwrap(), grid).index()] |= 1;
    let mic_tiles = [
        tile_of(Direction::new(135.0, 0.0).unwrap(), grid),
        tile_of(Direction::new(135.0, 25.0).unwrap(), grid),
    ];
    for t in mic_tiles {
        tile_map[t.index()] |= 1 << 1;
    }
    let meta = SemanticChunkMeta::new(
        0,
        grid,
        tile_map,
        vec![
            AssocEdge {
                src: 0,
                dst: 1,
                p: 0.8,
            },
            AssocEdge {
                src: 0,
                dst: 2,
                p: 0.2,
            },
        ],
    )
    .unwrap();
    let graph = AssociationGraph::from_edges(32, &meta.edges);

    let predicted = Direction::new(2.0, -1.0).unwrap();
    let fov = Viewport::new(predicted, 90.0, 90.0).unwrap();
    let budget = BudgetModel {
        tile_cost_mbit: 15.0 / 64.0,
        capacity_mbps: 12.0,
        chunk_s: 1.0,
    };

    let set = build_set(
        fov,
        6.0,
        grid,
        &meta,
        &graph,
        Some(0),
        0.3,
        &budget,
        Some(0.05),
    );
    println!(
        "foveal {} tiles + associative {} tiles = {} total (margin {}°)",
        set.foveal.len(),
        set.associative.len(),
        set.total.len(),
        set.margin_used
    );
    println!("lookahead classes admitted: {:?}", set.lookahead_classes);
    println!(
        "cost {:.2} of {:.2} Mbit budget",
        set.total.len() as f64 * budget.tile_cost_mbit,
        budget.chunk_budget_mbit()
    );

    // The viewer stays put: covered by the foveal part alone.
    let stayed = viewport_tiles(
        Viewport::new(Direction::new(1.0, 0.5).unwrap(), 90.0, 90.0).unwrap(),
        grid,
    );
    println!(
        "\nviewer stayed:   covered = {}",
        coverage_check(&set, &stayed)
    );

    // The viewer saccades to the microphone: the distal tiles were already
    // requested, so the landing is covered too.
    let mut landed = grid.empty_set();
    for t in mic_tiles {
        landed.insert(t);
    }
    println!(
        "saccade landing: covered = {}",
        coverage_check(&set, &landed)
    );

    // With a starved budget the lookahead is dropped, and the same landing
    // would have stalled.
    let tight = BudgetModel {
        capacity_mbps: 3.0,
        ..budget
    };
    let starved = build_set(
        fov,
        6.0,
        grid,
        &meta,
        &graph,
        Some(0),
        0.3,
        &tight,
        Some(0.05),
    );
    println!(
        "\nat 3 Mbps the residual admits {} associative tiles; landing covered = {}",
        starved.associative.len(),
        coverage_check(&starved, &landed)
    );
}
