//! Angular arithmetic on the yaw/pitch sphere and the equirectangular tile grid.
//!
//! Directions live on a yaw ∈ [−180, 180), pitch ∈ [−90, +90] rectangle; the
//! grid partitions that rectangle into `rows × cols` half-open cells (the top
//! pitch band is closed at +90). Tile coverage of a viewport is defined by
//! positive-measure overlap: a cell whose boundary merely touches the viewport
//! edge is not covered.
//!
//! The error metric is per-axis Chebyshev, not great-circle: if the predicted
//! center is within `m` degrees (Chebyshev) of the true center, the viewport
//! expanded by `m` per axis contains the true viewport exactly, so calibrated
//! margins transfer to tile coverage without slack. Yaw error is not
//! cos(pitch)-compensated; near-pole yaw inflation widens sets conservatively.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("non-finite angle: {0}")]
    NonFinite(f64),
    #[error("margin must be >= 0, got {0}")]
    NegativeMargin(f64),
    #[error("viewport width must be in (0, 360], got {0}")]
    BadWidth(f64),
    #[error("viewport height must be in (0, 180], got {0}")]
    BadHeight(f64),
    #[error("grid must have rows >= 1 and cols >= 1, got {rows}x{cols}")]
    BadGrid { rows: u32, cols: u32 },
}

/// Wrap an angle into [−180, 180), congruent to the input mod 360.
pub fn wrap_yaw(raw: f64) -> Result<f64, GeometryError> {
    if !raw.is_finite() {
        return Err(GeometryError::NonFinite(raw));
    }
    Ok(wrap_yaw_unchecked(raw))
}

/// Infallible wrap for values already known to be finite.
pub(crate) fn wrap_yaw_unchecked(raw: f64) -> f64 {
    let mut y = raw - 360.0 * ((raw + 180.0) / 360.0).floor();
    // Guard the rare rounding escape at huge magnitudes.
    while y < -180.0 {
        y += 360.0;
    }
    while y >= 180.0 {
        y -= 360.0;
    }
    y
}

/// A gaze or viewport-center direction. Yaw is stored wrapped into
/// [−180, 180), pitch clamped into [−90, +90].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    yaw: f64,
    pitch: f64,
}

impl Direction {
    pub fn new(yaw: f64, pitch: f64) -> Result<Self, GeometryError> {
        if !pitch.is_finite() {
            return Err(GeometryError::NonFinite(pitch));
        }
        Ok(Self {
            yaw: wrap_yaw(yaw)?,
            pitch: pitch.clamp(-90.0, 90.0),
        })
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.yaw, self.pitch)
    }
}

impl serde::Serialize for Direction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Direction", 2)?;
        st.serialize_field("yaw_deg", &self.yaw)?;
        st.serialize_field("pitch_deg", &self.pitch)?;
        st.end()
    }
}

impl<'de> serde::Deserialize<'de> for Direction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        struct Raw {
            yaw_deg: f64,
            pitch_deg: f64,
        }
        let raw = Raw::deserialize(d)?;
        Direction::new(raw.yaw_deg, raw.pitch_deg).map_err(serde::de::Error::custom)
    }
}

/// Chebyshev angular error between two directions: the larger of the wrapped
/// yaw difference and the pitch difference, in degrees. Symmetric, zero iff
/// the directions are equal.
pub fn angular_error(a: Direction, b: Direction) -> f64 {
    let dy = wrap_yaw_unchecked(a.yaw - b.yaw).abs();
    let dp = (a.pitch - b.pitch).abs();
    dy.max(dp)
}

/// An angular window on the sphere: a yaw×pitch rectangle that may wrap
/// across the ±180 antimeridian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub center: Direction,
    width: f64,
    height: f64,
}

impl Viewport {
    pub fn new(center: Direction, width: f64, height: f64) -> Result<Self, GeometryError> {
        if !(width > 0.0 && width <= 360.0) {
            return Err(GeometryError::BadWidth(width));
        }
        if !(height > 0.0 && height <= 180.0) {
            return Err(GeometryError::BadHeight(height));
        }
        Ok(Self {
            center,
            width,
            height,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// The same window re-centered on another direction.
    pub fn recenter(&self, center: Direction) -> Viewport {
        Viewport { center, ..*self }
    }
}

/// Grow a viewport by `margin` degrees of half-extent on every side,
/// saturating at the full sphere. An infinite margin yields 360×180.
///
/// The yaw extent grows in place (the yaw axis is circular, so capping the
/// width at 360 is exact). The pitch extent is expanded as an interval and
/// clipped at the poles, re-centering when one side saturates: capping the
/// height around an off-equator center would drop sphere area the margin is
/// supposed to cover, breaking the containment guarantee.
pub fn expand_viewport(vp: Viewport, margin: f64) -> Result<Viewport, GeometryError> {
    if margin.is_nan() || margin < 0.0 {
        return Err(GeometryError::NegativeMargin(margin));
    }
    let half_h = vp.height / 2.0 + margin;
    let p_lo = (vp.center.pitch() - half_h).max(-90.0);
    let p_hi = (vp.center.pitch() + half_h).min(90.0);
    Ok(Viewport {
        center: Direction::new(vp.center.yaw(), (p_lo + p_hi) / 2.0)
            .expect("clipped pitch interval is finite"),
        width: (vp.width + 2.0 * margin).min(360.0),
        height: p_hi - p_lo,
    })
}

/// Index of a cell in the ERP grid: `row * cols + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TileId(pub u32);

impl TileId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The equirectangular partition: `rows` pitch bands × `cols` yaw bands.
/// Cells are half-open in both axes except the top pitch band, which is
/// closed at +90 so every direction maps to exactly one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TileGrid {
    rows: u32,
    cols: u32,
}

impl TileGrid {
    pub fn new(rows: u32, cols: u32) -> Result<Self, GeometryError> {
        if rows == 0 || cols == 0 {
            return Err(GeometryError::BadGrid { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn tile_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn tile_id(&self, row: u32, col: u32) -> TileId {
        debug_assert!(row < self.rows && col < self.cols);
        TileId(row * self.cols + col)
    }

    /// Pitch extent of a row band, degrees.
    pub fn row_height(&self) -> f64 {
        180.0 / self.rows as f64
    }

    /// Yaw extent of a column band, degrees.
    pub fn col_width(&self) -> f64 {
        360.0 / self.cols as f64
    }

    pub fn empty_set(&self) -> TileSet {
        TileSet::new(self.tile_count())
    }

    pub fn full_set(&self) -> TileSet {
        let mut s = self.empty_set();
        for i in 0..self.tile_count() {
            s.insert(TileId(i as u32));
        }
        s
    }
}

/// The tile whose half-open cell contains the direction. Pitch +90 maps to
/// the top band.
pub fn tile_of(dir: Direction, grid: TileGrid) -> TileId {
    let row = (((dir.pitch() + 90.0) * grid.rows as f64 / 180.0).floor() as i64)
        .clamp(0, grid.rows as i64 - 1) as u32;
    let col = (((dir.yaw() + 180.0) * grid.cols as f64 / 360.0).floor() as i64)
        .clamp(0, grid.cols as i64 - 1) as u32;
    grid.tile_id(row, col)
}

/// Bitset over the tile ids of one grid. Set arithmetic is exact; both
/// operands of a binary operation must come from the same grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSet {
    n: usize,
    words: Vec<u64>,
}

impl TileSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn capacity(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, id: TileId) {
        let i = id.index();
        assert!(
            i < self.n,
            "tile id {i} out of range for {}-tile set",
            self.n
        );
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    pub fn contains(&self, id: TileId) -> bool {
        let i = id.index();
        i < self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union(&self, other: &TileSet) -> TileSet {
        assert_eq!(self.n, other.n, "tile sets from different grids");
        TileSet {
            n: self.n,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    pub fn intersection(&self, other: &TileSet) -> TileSet {
        assert_eq!(self.n, other.n, "tile sets from different grids");
        TileSet {
            n: self.n,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    pub fn difference(&self, other: &TileSet) -> TileSet {
        assert_eq!(self.n, other.n, "tile sets from different grids");
        TileSet {
            n: self.n,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & !b)
                .collect(),
        }
    }

    pub fn is_subset(&self, other: &TileSet) -> bool {
        assert_eq!(self.n, other.n, "tile sets from different grids");
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = TileId> + '_ {
        (0..self.n)
            .filter(|&i| self.contains(TileId(i as u32)))
            .map(|i| TileId(i as u32))
    }
}

impl FromIterator<TileId> for TileSet {
    /// Collect into a set sized to the largest id; mostly for tests.
    fn from_iter<I: IntoIterator<Item = TileId>>(iter: I) -> Self {
        let ids: Vec<TileId> = iter.into_iter().collect();
        let n = ids.iter().map(|t| t.index() + 1).max().unwrap_or(0);
        let mut s = TileSet::new(n);
        for id in ids {
            s.insert(id);
        }
        s
    }
}

/// All tiles whose cell has positive-measure overlap with the viewport
/// rectangle, with yaw wraparound handled. Boundary contact with zero
/// measure does not include a tile.
pub fn viewport_tiles(vp: Viewport, grid: TileGrid) -> TileSet {
    let mut rows = Vec::new();
    let p_lo = (vp.center.pitch() - vp.height / 2.0).max(-90.0);
    let p_hi = (vp.center.pitch() + vp.height / 2.0).min(90.0);
    let dp = grid.row_height();
    for r in 0..grid.rows {
        let cell_lo = -90.0 + r as f64 * dp;
        let cell_hi = -90.0 + (r + 1) as f64 * dp;
        if p_hi.min(cell_hi) - p_lo.max(cell_lo) > 0.0 {
            rows.push(r);
        }
    }

    let mut cols = Vec::new();
    if vp.width >= 360.0 {
        cols.extend(0..grid.cols);
    } else {
        // The yaw arc [start, start+width] split at the antimeridian into at
        // most two linear pieces inside [−180, 180].
        let start = wrap_yaw_unchecked(vp.center.yaw() - vp.width / 2.0);
        let end = start + vp.width;
        let pieces: [(f64, f64); 2] = if end > 180.0 {
            [(start, 180.0), (-180.0, end - 360.0)]
        } else {
            [(start, end), (0.0, -1.0)] // second piece empty
        };
        let dy = grid.col_width();
        for c in 0..grid.cols {
            let cell_lo = -180.0 + c as f64 * dy;
            let cell_hi = -180.0 + (c + 1) as f64 * dy;
            let hit = pieces
                .iter()
                .any(|&(lo, hi)| hi.min(cell_hi) - lo.max(cell_lo) > 0.0);
            if hit {
                cols.push(c);
            }
        }
    }

    let mut set = grid.empty_set();
    for &r in &rows {
        for &c in &cols {
            set.insert(grid.tile_id(r, c));
        }
    }
    set
}
