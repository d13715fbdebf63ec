//! The fixed 304-byte chunk sidecar: encoding, decoding, and the bitrate
//! budget arithmetic.
//!
//! ```bash
//! cargo run --example sidecar_codec
//! ```

use tilecast::semantics::{
    classes_at, decode_meta, encode_meta, AssocEdge, SemanticChunkMeta, META_BYTES,
};
use tilecast::sphere::{TileGrid, TileId};

fn main() {
    let grid = TileGrid::new(8, 8).unwrap();
    let mut tile_map = vec![0u32; 64];
    tile_map[27] = 0b01; // class 0 in tile 27
    tile_map[28] = 0b11; // classes 0 and 1 in tile 28
    tile_map[44] = 0b100; // class 2 in tile 44
    let meta = SemanticChunkMeta::new(
        17,
        grid,
        tile_map,
        vec![
            AssocEdge {
                src: 0,
                dst: 1,
                p: 0.82,
            },
            AssocEdge {
                src: 0,
                dst: 2,
                p: 0.35,
            },
            AssocEdge {
                src: 2,
                dst: 0,
                p: 0.5,
            },
        ],
    )
    .unwrap();

    let bytes = encode_meta(&meta).unwrap();
    println!(
        "encoded chunk {} into {} bytes",
        meta.chunk_index,
        bytes.len()
    );
    println!(
        "header: magic 0x{:02x}, version {}, chunk index {}",
        bytes[0],
        bytes[1],
        u16::from_le_bytes([bytes[2], bytes[3]])
    );

    let back = decode_meta(&bytes).unwrap();
    println!(
        "tile 28 decodes to classes {:?}",
        classes_at(&back, TileId(28))
    );
    println!("edges survive within 1/65535 quantization:");
    for (a, b) in meta.edges.iter().zip(&back.edges) {
        println!("  {}->{}: {:.6} -> {:.6}", a.src, a.dst, a.p, b.p);
    }

    // The budget arithmetic behind the fixed layout.
    let kbps = META_BYTES as f64 * 8.0 / 1000.0;
    println!("\nat one chunk per second: {META_BYTES} B/chunk = {kbps} Kbps");
    println!(
        "against a 15 Mbps stream that is {:.3}% overhead",
        META_BYTES as f64 * 8.0 / 15.0e6 * 100.0
    );

    // Corruption is rejected loudly.
    let mut corrupt = bytes;
    corrupt[0] = 0x00;
    println!("\ncorrupt magic: {:?}", decode_meta(&corrupt).unwrap_err());
    println!("truncated:     {:?}", decode_meta(&[0u8; 100]).unwrap_err());
}
