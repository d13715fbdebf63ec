//! Prediction-set construction: the margin-expanded foveal set united with
//! an associative lookahead set funded from residual bandwidth.
//!
//! The foveal set always gets funded first; associative candidates are the
//! tiles of classes whose transition probability from the current fixation
//! exceeds τ, admitted greedily in descending edge probability while the
//! cumulative cost stays inside the residual budget. Bandwidth saved by a
//! tighter margin therefore flows directly into deeper lookahead.

use crate::semantics::{
    classes_at, lookup, tiles_of_class, AssociationGraph, ClassId, SemanticChunkMeta,
};
use crate::sphere::{expand_viewport, viewport_tiles, TileGrid, TileSet, Viewport};

/// Uniform per-tile transfer cost and the capacity estimate the admission
/// budget is computed from.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BudgetModel {
    pub tile_cost_mbit: f64,
    pub capacity_mbps: f64,
    pub chunk_s: f64,
}

impl BudgetModel {
    /// Megabits available for one chunk interval.
    pub fn chunk_budget_mbit(&self) -> f64 {
        self.capacity_mbps * self.chunk_s
    }
}

/// The tiles requested for one chunk, with provenance: `total` is always
/// `foveal ∪ associative`, and the two parts never overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub foveal: TileSet,
    pub associative: TileSet,
    pub total: TileSet,
    pub margin_used: f64,
    pub alpha_used: Option<f64>,
    /// Classes that contributed at least one admitted lookahead tile, in
    /// admission (descending-probability) order.
    pub lookahead_classes: Vec<ClassId>,
}

impl PredictionSet {
    /// A set with no lookahead component.
    pub fn foveal_only(foveal: TileSet, margin_used: f64, alpha_used: Option<f64>) -> Self {
        let total = foveal.clone();
        let associative = TileSet::new(foveal.capacity());
        Self {
            foveal,
            associative,
            total,
            margin_used,
            alpha_used,
            lookahead_classes: Vec::new(),
        }
    }
}

/// The class identity used to condition lookahead: the lowest class id
/// present in the gaze tile that has a nonempty association row.
pub fn current_fixation_class(
    meta: &SemanticChunkMeta,
    graph: &AssociationGraph,
    gaze_tile: crate::sphere::TileId,
) -> Option<ClassId> {
    classes_at(meta, gaze_tile)
        .into_iter()
        .find(|&c| !graph.row(c).is_empty())
}

/// Build the union set for one chunk: the margin-expanded foveal set plus
/// associative tiles admitted under the residual budget. An infinite margin
/// saturates the foveal set to the full sphere (and leaves no residual).
#[allow(clippy::too_many_arguments)]
pub fn build_set(
    vp: Viewport,
    margin_deg: f64,
    grid: TileGrid,
    meta: &SemanticChunkMeta,
    graph: &AssociationGraph,
    current_class: Option<ClassId>,
    tau: f64,
    budget: &BudgetModel,
    alpha_used: Option<f64>,
) -> PredictionSet {
    let expanded = expand_viewport(vp, margin_deg).expect("margin from calibration is >= 0");
    let foveal = viewport_tiles(expanded, grid);
    debug_assert_eq!(
        meta.grid, grid,
        "chunk meta grid must match the simulation grid"
    );

    let mut associative = TileSet::new(grid.tile_count());
    let mut lookahead_classes = Vec::new();
    if let Some(class) = current_class {
        let residual =
            (budget.chunk_budget_mbit() - foveal.len() as f64 * budget.tile_cost_mbit).max(0.0);
        let mut spent = 0.0;
        'classes: for (dst, _p) in lookup(graph, class, tau) {
            let mut contributed = false;
            for tile in tiles_of_class(meta, dst).difference(&foveal).iter() {
                if associative.contains(tile) {
                    continue;
                }
                if spent + budget.tile_cost_mbit > residual {
                    break 'classes;
                }
                associative.insert(tile);
                spent += budget.tile_cost_mbit;
                contributed = true;
            }
            if contributed {
                lookahead_classes.push(dst);
            }
        }
    }

    let total = foveal.union(&associative);
    PredictionSet {
        foveal,
        associative,
        total,
        margin_used: margin_deg,
        alpha_used,
        lookahead_classes,
    }
}

/// True iff every tile of the actual viewport is inside the requested set.
pub fn coverage_check(set: &PredictionSet, true_vp_tiles: &TileSet) -> bool {
    true_vp_tiles.is_subset(&set.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{AssocEdge, SemanticChunkMeta};
    use crate::sphere::{tile_of, Direction, TileId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> TileGrid {
        TileGrid::new(8, 8).unwrap()
    }

    fn dir(yaw: f64, pitch: f64) -> Direction {
        Direction::new(yaw, pitch).unwrap()
    }

    /// Guitar at (0,0) with class 0; mic 135° east with class 1 in two tiles.
    fn concert_meta() -> SemanticChunkMeta {
        let g = grid();
        let mut map = vec![0u32; 64];
        let guitar_tile = tile_of(dir(0.0, 0.0), g);
        map[guitar_tile.index()] |= 1;
        let mic_a = tile_of(dir(135.0, 0.0), g);
        let mic_b = tile_of(dir(135.0, 25.0), g);
        map[mic_a.index()] |= 1 << 1;
        map[mic_b.index()] |= 1 << 1;
        SemanticChunkMeta::new(
            0,
            g,
            map,
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
        .unwrap()
    }

    fn budget(capacity: f64) -> BudgetModel {
        BudgetModel {
            tile_cost_mbit: 0.25,
            capacity_mbps: capacity,
            chunk_s: 1.0,
        }
    }

    fn vp_at(center: Direction) -> Viewport {
        Viewport::new(center, 90.0, 90.0).unwrap()
    }

    #[test]
    fn tau_one_disables_lookahead() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        let set = build_set(
            vp_at(dir(0.0, 0.0)),
            5.0,
            grid(),
            &meta,
            &graph,
            Some(0),
            1.0,
            &budget(20.0),
            Some(0.05),
        );
        assert!(set.associative.is_empty());
        assert_eq!(set.total, set.foveal);
        assert!(set.lookahead_classes.is_empty());
    }

    #[test]
    fn infinite_margin_saturates() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        let set = build_set(
            vp_at(dir(0.0, 0.0)),
            f64::INFINITY,
            grid(),
            &meta,
            &graph,
            Some(0),
            0.3,
            &budget(20.0),
            None,
        );
        assert_eq!(set.foveal.len(), 64);
        assert!(set.associative.is_empty());
        assert_eq!(set.total.len(), 64);
    }

    #[test]
    fn lookahead_admits_distal_mic_tiles() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        let set = build_set(
            vp_at(dir(0.0, 0.0)),
            5.0,
            grid(),
            &meta,
            &graph,
            Some(0),
            0.5,
            &budget(20.0),
            Some(0.05),
        );
        // Two mic tiles are distal and the residual covers them.
        assert_eq!(set.associative.len(), 2);
        assert_eq!(set.lookahead_classes, vec![1]);
        for tile in crate::semantics::tiles_of_class(&meta, 1).iter() {
            assert!(set.total.contains(tile));
        }
        assert_eq!(set.total.len(), set.foveal.len() + 2);
    }

    #[test]
    fn budget_starves_lookahead() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        // Capacity exactly covers the foveal set and no more.
        let foveal = viewport_tiles(
            crate::sphere::expand_viewport(vp_at(dir(0.0, 0.0)), 5.0).unwrap(),
            grid(),
        );
        let tight = budget(foveal.len() as f64 * 0.25);
        let set = build_set(
            vp_at(dir(0.0, 0.0)),
            5.0,
            grid(),
            &meta,
            &graph,
            Some(0),
            0.5,
            &tight,
            Some(0.05),
        );
        assert!(set.associative.is_empty());
    }

    #[test]
    fn coverage_check_rules() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        let set = build_set(
            vp_at(dir(0.0, 0.0)),
            5.0,
            grid(),
            &meta,
            &graph,
            Some(0),
            0.5,
            &budget(20.0),
            Some(0.05),
        );

        let inside = viewport_tiles(vp_at(dir(0.0, 0.0)), grid());
        assert!(coverage_check(&set, &inside));

        let mut missing = inside.clone();
        missing.insert(TileId(63));
        if !set.total.contains(TileId(63)) {
            assert!(!coverage_check(&set, &missing));
        }

        // A saccade landing entirely on the prefetched mic tiles is covered.
        let mut mic_only = TileSet::new(64);
        for t in crate::semantics::tiles_of_class(&meta, 1).iter() {
            mic_only.insert(t);
        }
        assert!(coverage_check(&set, &mic_only));
    }

    #[test]
    fn monotone_in_tau() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..100 {
            let t1: f64 = rng.random_range(0.0..1.0);
            let t2 = (t1 + rng.random_range(0.0..1.0)).min(1.0);
            let a = build_set(
                vp_at(dir(0.0, 0.0)),
                5.0,
                grid(),
                &meta,
                &graph,
                Some(0),
                t1,
                &budget(20.0),
                None,
            );
            let b = build_set(
                vp_at(dir(0.0, 0.0)),
                5.0,
                grid(),
                &meta,
                &graph,
                Some(0),
                t2,
                &budget(20.0),
                None,
            );
            assert!(b.associative.is_subset(&a.associative));
        }
    }

    #[test]
    fn monotone_in_margin_and_reallocation() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        for _ in 0..100 {
            let m1: f64 = rng.random_range(0.0..40.0);
            let m2 = m1 + rng.random_range(0.0..40.0);
            let cap = rng.random_range(4.0..16.0);
            let a = build_set(
                vp_at(dir(0.0, 0.0)),
                m1,
                grid(),
                &meta,
                &graph,
                Some(0),
                0.1,
                &budget(cap),
                None,
            );
            let b = build_set(
                vp_at(dir(0.0, 0.0)),
                m2,
                grid(),
                &meta,
                &graph,
                Some(0),
                0.1,
                &budget(cap),
                None,
            );
            // Larger margin: foveal superset.
            assert!(a.foveal.is_subset(&b.foveal));
            // Held capacity: the smaller margin never shrinks the lookahead.
            assert!(b.associative.is_subset(&a.associative));
        }
    }

    #[test]
    fn budget_feasibility() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        for _ in 0..200 {
            let cap = rng.random_range(1.0..20.0);
            let b = budget(cap);
            let set = build_set(
                vp_at(dir(
                    rng.random_range(-180.0..180.0),
                    rng.random_range(-60.0..60.0),
                )),
                rng.random_range(0.0..30.0),
                grid(),
                &meta,
                &graph,
                Some(0),
                0.1,
                &b,
                None,
            );
            let foveal_cost = set.foveal.len() as f64 * b.tile_cost_mbit;
            let total_cost = set.total.len() as f64 * b.tile_cost_mbit;
            if foveal_cost <= b.chunk_budget_mbit() {
                assert!(total_cost <= b.chunk_budget_mbit() + 1e-9);
            }
            assert_eq!(set.total, set.foveal.union(&set.associative));
            assert!(set.foveal.is_subset(&set.total));
            assert!(set.associative.intersection(&set.foveal).is_empty());
        }
    }

    #[test]
    fn fixation_class_prefers_lowest_with_edges() {
        let meta = concert_meta();
        let graph = AssociationGraph::from_edges(32, &meta.edges);
        let gaze = tile_of(dir(0.0, 0.0), grid());
        assert_eq!(current_fixation_class(&meta, &graph, gaze), Some(0));
        // A tile with only class 1 (mic): class 1 has no outgoing edges.
        let mic_tile = tile_of(dir(135.0, 0.0), grid());
        assert_eq!(current_fixation_class(&meta, &graph, mic_tile), None);
    }
}
