//! Server-side precomputation artifacts and their client-side views: semantic
//! tile maps, the class-association graph, and the fixed 304-byte per-chunk
//! sidecar codec.
//!
//! A chunk's sidecar carries a 32-bit class bitmask per tile of an 8×8 grid
//! plus up to 11 association edges. At one chunk per second that is 2.432
//! Kbps of overhead — about 0.016% of a 15 Mbps stream.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::sphere::{TileGrid, TileId, TileSet};

/// Class identifiers are dense small integers; the 32-bit tile masks cap the
/// vocabulary at 32 classes per video.
pub type ClassId = u8;

pub const MAX_CLASSES: usize = 32;
/// Encoded sidecar size in bytes: 4 header + 64×4 tile map + 11×4 edges.
pub const META_BYTES: usize = 304;
pub const MAX_EDGES: usize = 11;
const MAGIC: u8 = 0xA7;
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("vocabulary holds at most {MAX_CLASSES} classes, got {0}")]
    VocabularyTooLarge(usize),
    #[error("duplicate class name `{0}`")]
    DuplicateClass(String),
    #[error("lambda must be in [0, 1], got {0}")]
    BadLambda(f64),
    #[error("top_k must be >= 1")]
    BadTopK,
    #[error("matrix is {got}x{got}, expected {want}x{want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("similarity matrix must be symmetric with unit diagonal and values in [-1, 1]: {0}")]
    BadSimilarity(String),
    #[error("co-occurrence counts must be finite and >= 0: {0}")]
    BadCooccurrence(String),
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("tile map has {got} masks, grid expects {want}")]
    TileMapSize { got: usize, want: usize },
    #[error("edge {src}->{dst}: {msg}")]
    BadEdge {
        src: ClassId,
        dst: ClassId,
        msg: String,
    },
    #[error("at most {MAX_EDGES} association edges per chunk, got {0}")]
    TooManyEdges(usize),
    #[error("sidecar codec requires an 8x8 grid, got {rows}x{cols}")]
    CodecGrid { rows: u32, cols: u32 },
    #[error("sidecar must be exactly {META_BYTES} bytes, got {0}")]
    CodecLength(usize),
    #[error("bad sidecar magic byte 0x{0:02x}")]
    CodecMagic(u8),
    #[error("unsupported sidecar version {0}")]
    CodecVersion(u8),
    #[error("invalid graph json: {0}")]
    BadGraphJson(String),
}

/// Ordered class names for one video; a class's id is its position.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

impl ClassVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self, SemanticsError> {
        if names.len() > MAX_CLASSES {
            return Err(SemanticsError::VocabularyTooLarge(names.len()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(SemanticsError::DuplicateClass(n.clone()));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.names.get(id as usize).map(|s| s.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| i as ClassId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Square class×class matrix keyed by a shared vocabulary, parsed from CSV
/// with a class-name header row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMatrix {
    pub vocab: ClassVocabulary,
    values: Vec<f64>,
}

impl ClassMatrix {
    pub fn new(vocab: ClassVocabulary, values: Vec<f64>) -> Result<Self, SemanticsError> {
        let n = vocab.len();
        if values.len() != n * n {
            return Err(SemanticsError::DimensionMismatch {
                got: values.len(),
                want: n * n,
            });
        }
        Ok(Self { vocab, values })
    }

    pub fn get(&self, i: ClassId, j: ClassId) -> f64 {
        self.values[i as usize * self.vocab.len() + j as usize]
    }

    pub fn parse_csv(text: &str) -> Result<Self, SemanticsError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(SemanticsError::Csv {
            line: 1,
            msg: "empty file".into(),
        })?;
        let names: Vec<String> = header
            .trim_end()
            .split(',')
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        let vocab = ClassVocabulary::new(names)?;
        let n = vocab.len();
        let mut values = vec![0.0; n * n];
        let mut seen = 0usize;
        for (idx, raw) in lines {
            let line = idx + 1;
            let raw = raw.trim_end();
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').collect();
            if fields.len() != n + 1 {
                return Err(SemanticsError::Csv {
                    line,
                    msg: format!("expected {} columns, got {}", n + 1, fields.len()),
                });
            }
            let row = vocab
                .id_of(fields[0].trim())
                .ok_or_else(|| SemanticsError::Csv {
                    line,
                    msg: format!("unknown class `{}`", fields[0]),
                })? as usize;
            for (j, f) in fields[1..].iter().enumerate() {
                values[row * n + j] = f.trim().parse().map_err(|e| SemanticsError::Csv {
                    line,
                    msg: format!("column {}: {e}", j + 2),
                })?;
            }
            seen += 1;
        }
        if seen != n {
            return Err(SemanticsError::Csv {
                line: seen + 1,
                msg: format!("expected {n} data rows, got {seen}"),
            });
        }
        Self::new(vocab, values)
    }

    pub fn to_csv(&self) -> String {
        let n = self.vocab.len();
        let mut out = String::new();
        out.push_str("class");
        for name in self.vocab.names() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..n {
            out.push_str(self.vocab.name(i as ClassId).unwrap());
            for j in 0..n {
                out.push_str(&format!(",{}", self.values[i * n + j]));
            }
            out.push('\n');
        }
        out
    }
}

/// Ingested pairwise class similarities in [−1, 1], symmetric with unit
/// diagonal. Computed upstream; this artifact only consumes them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityFile(pub ClassMatrix);

impl SimilarityFile {
    pub fn new(m: ClassMatrix) -> Result<Self, SemanticsError> {
        let n = m.vocab.len();
        for i in 0..n {
            for j in 0..n {
                let v = m.values[i * n + j];
                if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                    return Err(SemanticsError::BadSimilarity(format!(
                        "value {v} at ({i},{j})"
                    )));
                }
                if (v - m.values[j * n + i]).abs() > 1e-9 {
                    return Err(SemanticsError::BadSimilarity(format!(
                        "asymmetry at ({i},{j})"
                    )));
                }
            }
            if (m.values[i * n + i] - 1.0).abs() > 1e-9 {
                return Err(SemanticsError::BadSimilarity(format!("diagonal at {i}")));
            }
        }
        Ok(Self(m))
    }

    pub fn parse_csv(text: &str) -> Result<Self, SemanticsError> {
        Self::new(ClassMatrix::parse_csv(text)?)
    }
}

/// Raw same-viewport co-occurrence counts between classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceCounts(pub ClassMatrix);

impl CooccurrenceCounts {
    pub fn new(m: ClassMatrix) -> Result<Self, SemanticsError> {
        for &v in &m.values {
            if !v.is_finite() || v < 0.0 {
                return Err(SemanticsError::BadCooccurrence(format!("count {v}")));
            }
        }
        Ok(Self(m))
    }

    pub fn parse_csv(text: &str) -> Result<Self, SemanticsError> {
        Self::new(ClassMatrix::parse_csv(text)?)
    }
}

/// Sparse row-stochastic conditional matrix P(dst | src) over class ids, with
/// a per-row top-k cap. Rows built by [`build_graph`] sum to 1; rows loaded
/// from sidecar edges keep their raw conditional probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    n: usize,
    rows: Vec<Vec<(ClassId, f64)>>,
}

impl AssociationGraph {
    pub fn class_count(&self) -> usize {
        self.n
    }

    /// Row view without thresholding; entries are (dst, probability) in
    /// descending probability, ties broken by ascending class id.
    pub fn row(&self, class: ClassId) -> &[(ClassId, f64)] {
        self.rows
            .get(class as usize)
            .map(|r| r.as_slice())
            .unwrap_or(&[])
    }

    /// Lookup view over raw sidecar edges: probabilities are kept as-is (no
    /// renormalization) so thresholding against τ sees true conditionals.
    pub fn from_edges(n: usize, edges: &[AssocEdge]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for e in edges {
            if (e.src as usize) < n && (e.dst as usize) < n {
                rows[e.src as usize].push((e.dst, e.p));
            }
        }
        for row in &mut rows {
            sort_row(row);
        }
        Self { n, rows }
    }

    pub fn to_json(&self, vocab: &ClassVocabulary) -> serde_json::Value {
        let mut rows = serde_json::Map::new();
        for (i, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let entries: Vec<serde_json::Value> = row
                .iter()
                .map(|&(dst, p)| serde_json::json!([dst, p]))
                .collect();
            rows.insert(i.to_string(), serde_json::Value::Array(entries));
        }
        serde_json::json!({ "vocabulary": vocab.names(), "rows": rows })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<(Self, ClassVocabulary), SemanticsError> {
        let bad = |msg: &str| SemanticsError::BadGraphJson(msg.to_string());
        let names = value
            .get("vocabulary")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("missing vocabulary array"))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(String::from)
                    .ok_or_else(|| bad("vocabulary entries must be strings"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let vocab = ClassVocabulary::new(names)?;
        let n = vocab.len();
        let mut rows = vec![Vec::new(); n];
        let row_map = value
            .get("rows")
            .and_then(|v| v.as_object())
            .ok_or_else(|| bad("missing rows object"))?;
        for (k, entries) in row_map {
            let src: usize = k.parse().map_err(|_| bad("row keys must be class ids"))?;
            if src >= n {
                return Err(bad(&format!("row class {src} outside vocabulary")));
            }
            let entries = entries
                .as_array()
                .ok_or_else(|| bad("rows must be arrays"))?;
            for e in entries {
                let pair = e
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| bad("row entries must be [dst, p] pairs"))?;
                let dst = pair[0]
                    .as_u64()
                    .ok_or_else(|| bad("dst must be an integer"))?
                    as usize;
                let p = pair[1].as_f64().ok_or_else(|| bad("p must be a number"))?;
                if dst >= n {
                    return Err(bad(&format!("dst class {dst} outside vocabulary")));
                }
                rows[src].push((dst as ClassId, p));
            }
        }
        for row in &mut rows {
            sort_row(row);
        }
        Ok((Self { n, rows }, vocab))
    }
}

fn sort_row(row: &mut [(ClassId, f64)]) {
    row.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
}

/// Build the association graph from hybrid evidence: a λ-weighted mix of
/// clipped semantic similarity and row-normalized co-occurrence, keeping the
/// top-k outgoing edges per class and renormalizing each surviving row to a
/// probability distribution. Rows with no positive evidence stay empty.
pub fn build_graph(
    cooccur: &CooccurrenceCounts,
    sim: &SimilarityFile,
    lambda: f64,
    top_k: usize,
) -> Result<AssociationGraph, SemanticsError> {
    if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
        return Err(SemanticsError::BadLambda(lambda));
    }
    if top_k == 0 {
        return Err(SemanticsError::BadTopK);
    }
    let n = sim.0.vocab.len();
    if cooccur.0.vocab.len() != n {
        return Err(SemanticsError::DimensionMismatch {
            got: cooccur.0.vocab.len(),
            want: n,
        });
    }

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let i = i as ClassId;
        let row_total: f64 = (0..n)
            .filter(|&j| j != i as usize)
            .map(|j| cooccur.0.get(i, j as ClassId))
            .sum();
        let mut row: Vec<(ClassId, f64)> = Vec::new();
        for j in 0..n {
            if j == i as usize {
                continue;
            }
            let j = j as ClassId;
            let co = if row_total > 0.0 {
                cooccur.0.get(i, j) / row_total
            } else {
                0.0
            };
            let w = lambda * sim.0.get(i, j).max(0.0) + (1.0 - lambda) * co;
            if w > 0.0 {
                row.push((j, w));
            }
        }
        sort_row(&mut row);
        row.truncate(top_k);
        let sum: f64 = row.iter().map(|&(_, w)| w).sum();
        if sum > 0.0 {
            for e in &mut row {
                e.1 /= sum;
            }
        }
        rows.push(row);
    }
    Ok(AssociationGraph { n, rows })
}

/// Outgoing edges from `current_class` with probability strictly above `τ`,
/// in descending probability (ties by ascending class id). Unknown classes
/// yield an empty list; row access is O(1).
pub fn lookup(graph: &AssociationGraph, current_class: ClassId, tau: f64) -> Vec<(ClassId, f64)> {
    graph
        .row(current_class)
        .iter()
        .copied()
        .filter(|&(_, p)| p > tau)
        .collect()
}

/// One directed association edge in a chunk sidecar.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AssocEdge {
    pub src: ClassId,
    pub dst: ClassId,
    pub p: f64,
}

/// Per-chunk semantic sidecar: a class bitmask per tile plus the strongest
/// association edges among classes present in the chunk.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SemanticChunkMeta {
    pub chunk_index: u32,
    pub grid: TileGrid,
    /// One 32-bit class mask per tile, row-major tile-id order.
    pub tile_map: Vec<u32>,
    /// Sorted by descending probability, ties by (src, dst).
    pub edges: Vec<AssocEdge>,
}

impl SemanticChunkMeta {
    pub fn new(
        chunk_index: u32,
        grid: TileGrid,
        tile_map: Vec<u32>,
        mut edges: Vec<AssocEdge>,
    ) -> Result<Self, SemanticsError> {
        if tile_map.len() != grid.tile_count() {
            return Err(SemanticsError::TileMapSize {
                got: tile_map.len(),
                want: grid.tile_count(),
            });
        }
        if edges.len() > MAX_EDGES {
            return Err(SemanticsError::TooManyEdges(edges.len()));
        }
        for e in &edges {
            if e.src == e.dst {
                return Err(SemanticsError::BadEdge {
                    src: e.src,
                    dst: e.dst,
                    msg: "self-loop".into(),
                });
            }
            if e.src as usize >= MAX_CLASSES || e.dst as usize >= MAX_CLASSES {
                return Err(SemanticsError::BadEdge {
                    src: e.src,
                    dst: e.dst,
                    msg: "class id above 31".into(),
                });
            }
            if !(e.p > 0.0 && e.p <= 1.0) {
                return Err(SemanticsError::BadEdge {
                    src: e.src,
                    dst: e.dst,
                    msg: format!("probability {} outside (0, 1]", e.p),
                });
            }
        }
        edges.sort_by(|a, b| {
            b.p.partial_cmp(&a.p)
                .unwrap()
                .then(a.src.cmp(&b.src))
                .then(a.dst.cmp(&b.dst))
        });
        Ok(Self {
            chunk_index,
            grid,
            tile_map,
            edges,
        })
    }
}

/// All tiles whose mask has the class bit set.
pub fn tiles_of_class(meta: &SemanticChunkMeta, class: ClassId) -> TileSet {
    let mut set = meta.grid.empty_set();
    if class as usize >= MAX_CLASSES {
        return set;
    }
    for (i, &mask) in meta.tile_map.iter().enumerate() {
        if mask >> class & 1 == 1 {
            set.insert(TileId(i as u32));
        }
    }
    set
}

/// Class ids present in one tile, ascending.
pub fn classes_at(meta: &SemanticChunkMeta, tile: TileId) -> Vec<ClassId> {
    let mask = meta.tile_map.get(tile.index()).copied().unwrap_or(0);
    (0..MAX_CLASSES as u8)
        .filter(|&c| mask >> c & 1 == 1)
        .collect()
}

/// Encode a sidecar into its fixed 304-byte wire form:
/// 4-byte header (magic 0xA7, version 1, chunk index low 16 bits LE), then
/// 64 little-endian u32 tile masks, then 11 edge slots of
/// (src u8, dst u8, probability u16 fixed-point /65535); unused slots zeroed.
pub fn encode_meta(meta: &SemanticChunkMeta) -> Result<[u8; META_BYTES], SemanticsError> {
    if meta.grid.rows() != 8 || meta.grid.cols() != 8 {
        return Err(SemanticsError::CodecGrid {
            rows: meta.grid.rows(),
            cols: meta.grid.cols(),
        });
    }
    if meta.edges.len() > MAX_EDGES {
        return Err(SemanticsError::TooManyEdges(meta.edges.len()));
    }
    let mut buf = [0u8; META_BYTES];
    buf[0] = MAGIC;
    buf[1] = VERSION;
    let idx = (meta.chunk_index & 0xFFFF) as u16;
    buf[2..4].copy_from_slice(&idx.to_le_bytes());
    for (i, &mask) in meta.tile_map.iter().enumerate() {
        buf[4 + 4 * i..8 + 4 * i].copy_from_slice(&mask.to_le_bytes());
    }
    for (i, e) in meta.edges.iter().enumerate() {
        let off = 260 + 4 * i;
        let q = (e.p * 65535.0).round() as u16;
        buf[off] = e.src;
        buf[off + 1] = e.dst;
        buf[off + 2..off + 4].copy_from_slice(&q.to_le_bytes());
    }
    Ok(buf)
}

/// Decode a 304-byte sidecar. Edge slots with a zero quantized probability
/// are treated as unused (probabilities below 1/131070 vanish in the u16
/// quantization, within codec tolerance).
pub fn decode_meta(bytes: &[u8]) -> Result<SemanticChunkMeta, SemanticsError> {
    if bytes.len() != META_BYTES {
        return Err(SemanticsError::CodecLength(bytes.len()));
    }
    if bytes[0] != MAGIC {
        return Err(SemanticsError::CodecMagic(bytes[0]));
    }
    if bytes[1] != VERSION {
        return Err(SemanticsError::CodecVersion(bytes[1]));
    }
    let chunk_index = u16::from_le_bytes([bytes[2], bytes[3]]) as u32;
    let mut tile_map = Vec::with_capacity(64);
    for i in 0..64 {
        let off = 4 + 4 * i;
        tile_map.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
    }
    let mut edges = Vec::new();
    for i in 0..MAX_EDGES {
        let off = 260 + 4 * i;
        let (src, dst) = (bytes[off], bytes[off + 1]);
        let q = u16::from_le_bytes([bytes[off + 2], bytes[off + 3]]);
        if q == 0 {
            continue;
        }
        edges.push(AssocEdge {
            src,
            dst,
            p: q as f64 / 65535.0,
        });
    }
    let grid = TileGrid::new(8, 8).expect("8x8 grid");
    SemanticChunkMeta::new(chunk_index, grid, tile_map, edges)
}

/// Concatenated sidecar records for a whole session, in chunk order.
pub fn encode_meta_sequence(metas: &[SemanticChunkMeta]) -> Result<Vec<u8>, SemanticsError> {
    let mut out = Vec::with_capacity(metas.len() * META_BYTES);
    for m in metas {
        out.extend_from_slice(&encode_meta(m)?);
    }
    Ok(out)
}

pub fn decode_meta_sequence(bytes: &[u8]) -> Result<Vec<SemanticChunkMeta>, SemanticsError> {
    if !bytes.len().is_multiple_of(META_BYTES) {
        return Err(SemanticsError::CodecLength(bytes.len()));
    }
    bytes.chunks_exact(META_BYTES).map(decode_meta).collect()
}

/// Top `MAX_EDGES` edges of a conditional matrix restricted to the classes
/// present in a chunk, for sidecar emission.
pub fn strongest_edges(
    probabilities: &BTreeMap<(ClassId, ClassId), f64>,
    present: &[ClassId],
) -> Vec<AssocEdge> {
    let mut edges: Vec<AssocEdge> = probabilities
        .iter()
        .filter(|((s, d), &p)| s != d && p > 0.0 && present.contains(s) && present.contains(d))
        .map(|(&(src, dst), &p)| AssocEdge {
            src,
            dst,
            p: p.min(1.0),
        })
        .collect();
    edges.sort_by(|a, b| {
        b.p.partial_cmp(&a.p)
            .unwrap()
            .then(a.src.cmp(&b.src))
            .then(a.dst.cmp(&b.dst))
    });
    edges.truncate(MAX_EDGES);
    edges
}
