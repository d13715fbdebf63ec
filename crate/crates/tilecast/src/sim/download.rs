//! FIFO tile-download engine driven by a piecewise-constant capacity trace.
//!
//! Requests enqueue at their chunk's decision time and drain serially at
//! trace capacity. A request whose chunk playback window has already ended
//! by the time the link would reach it is dropped — late tiles are useless,
//! and the drop keeps a congested queue from snowballing across the session.
//! A tile that starts in time runs to completion even if it finishes late;
//! those bits are spent like a real head-of-line blocking transfer.

use crate::sphere::{TileId, TileSet};
use crate::traces::NetworkTrace;

#[derive(Debug, Clone, Copy)]
struct TransferSpan {
    start_ms: f64,
    end_ms: f64,
}

#[derive(Debug)]
pub(crate) struct DownloadEngine<'a> {
    net: &'a NetworkTrace,
    clock_ms: f64,
    /// Completion time per (chunk, tile); +∞ means never downloaded.
    completions: Vec<Vec<f64>>,
    spans: Vec<TransferSpan>,
    started_mbit: f64,
    dropped_tiles: usize,
}

impl<'a> DownloadEngine<'a> {
    pub fn new(net: &'a NetworkTrace, n_chunks: usize, tiles_per_chunk: usize) -> Self {
        Self {
            net,
            clock_ms: 0.0,
            completions: vec![vec![f64::INFINITY; tiles_per_chunk]; n_chunks],
            spans: Vec::new(),
            started_mbit: 0.0,
            dropped_tiles: 0,
        }
    }

    /// Enqueue one chunk's tile set at its decision time. Tiles transfer in
    /// ascending tile-id order.
    pub fn enqueue(
        &mut self,
        chunk: usize,
        tiles: &TileSet,
        arrival_ms: f64,
        playback_end_ms: f64,
        tile_cost_mbit: f64,
    ) {
        for tile in tiles.iter() {
            let start = self.clock_ms.max(arrival_ms);
            if start >= playback_end_ms {
                self.dropped_tiles += 1;
                continue;
            }
            let end = self.net.finish_time(start, tile_cost_mbit);
            self.completions[chunk][tile.index()] = end;
            self.spans.push(TransferSpan {
                start_ms: start,
                end_ms: end,
            });
            self.started_mbit += tile_cost_mbit;
            self.clock_ms = end;
        }
    }

    pub fn completed_by(&self, chunk: usize, tile: TileId, t_ms: f64) -> bool {
        self.completions[chunk][tile.index()] <= t_ms
    }

    /// Megabits actually transferred inside the window, summed over the
    /// per-tile link-exclusive spans.
    pub fn transferred_mbit_in(&self, w0_ms: f64, w1_ms: f64) -> f64 {
        self.spans
            .iter()
            .map(|s| {
                self.net
                    .integral_mbit(s.start_ms.max(w0_ms), s.end_ms.min(w1_ms))
            })
            .sum()
    }

    pub fn dropped_tiles(&self) -> usize {
        self.dropped_tiles
    }

    /// Conservation: everything started fits under the capacity integral of
    /// the busy window, and per-span transfers equal per-tile costs.
    pub fn assert_conservation(&self) {
        if self.spans.is_empty() {
            return;
        }
        let first = self
            .spans
            .iter()
            .map(|s| s.start_ms)
            .fold(f64::INFINITY, f64::min);
        let last = self.spans.iter().map(|s| s.end_ms).fold(0.0, f64::max);
        let ceiling = self.net.integral_mbit(first, last);
        assert!(
            self.started_mbit <= ceiling + 1e-6,
            "downloaded {} Mbit exceeds capacity integral {} Mbit",
            self.started_mbit,
            ceiling
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::TileGrid;

    fn set_of(ids: &[u32], n: usize) -> TileSet {
        let mut s = TileSet::new(n);
        for &i in ids {
            s.insert(TileId(i));
        }
        s
    }

    #[test]
    fn fifo_serial_drain() {
        let net = NetworkTrace::constant(8.0); // 8 Mbps
        let grid = TileGrid::new(8, 8).unwrap();
        let mut eng = DownloadEngine::new(&net, 2, grid.tile_count());
        // Two 4-Mbit tiles from t=0: finish at 500 ms and 1000 ms.
        eng.enqueue(0, &set_of(&[0, 1], 64), 0.0, 2000.0, 4.0);
        assert!(eng.completed_by(0, TileId(0), 500.0));
        assert!(!eng.completed_by(0, TileId(1), 999.0));
        assert!(eng.completed_by(0, TileId(1), 1000.0));
        // Next chunk queues behind.
        eng.enqueue(1, &set_of(&[5], 64), 800.0, 3000.0, 4.0);
        assert!(eng.completed_by(1, TileId(5), 1500.0));
        eng.assert_conservation();
    }

    #[test]
    fn stale_requests_dropped() {
        let net = NetworkTrace::constant(1.0);
        let mut eng = DownloadEngine::new(&net, 2, 64);
        // 10 Mbit at 1 Mbps: the first tile occupies the link for 10 s.
        eng.enqueue(0, &set_of(&[0], 64), 0.0, 1000.0, 10.0);
        // Chunk 1 plays in [1000, 2000): the link is busy until 10000.
        eng.enqueue(1, &set_of(&[1], 64), 500.0, 2000.0, 10.0);
        assert_eq!(eng.dropped_tiles(), 1);
        assert!(!eng.completed_by(1, TileId(1), 1e12));
        eng.assert_conservation();
    }

    #[test]
    fn transferred_window_accounting() {
        let net = NetworkTrace::constant(10.0);
        let mut eng = DownloadEngine::new(&net, 1, 64);
        eng.enqueue(0, &set_of(&[0, 1], 64), 0.0, 10_000.0, 5.0);
        // Both tiles take 500 ms each.
        assert!((eng.transferred_mbit_in(0.0, 1000.0) - 10.0).abs() < 1e-9);
        assert!((eng.transferred_mbit_in(0.0, 500.0) - 5.0).abs() < 1e-9);
        assert!((eng.transferred_mbit_in(250.0, 750.0) - 5.0).abs() < 1e-9);
        assert_eq!(eng.transferred_mbit_in(2000.0, 3000.0), 0.0);
    }
}
