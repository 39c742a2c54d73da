//! Hex coordinates, board geometry and rectangular areas.
//!
//! Boards use pointy-top hexes in "odd-r" offset layout: odd rows are
//! shifted half a hex to the east. Row 0 is the northern edge, so moving
//! north decreases the row index. Cartesian centers use unit spacing
//! between horizontally adjacent hexes; `y` grows with the row index.
//!
//! Neighbor directions are always enumerated in the order
//! E, NE, NW, W, SW, SE (indices 0..6).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("sector of a hex relative to itself is undefined ({0})")]
    SameHex(HexCoord),
    #[error("rect {width}x{height} does not fit in a {cols}x{rows} region")]
    RectTooLarge {
        width: i32,
        height: i32,
        cols: i32,
        rows: i32,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HexCoord {
    pub col: i32,
    pub row: i32,
}

impl HexCoord {
    pub const fn new(col: i32, row: i32) -> Self {
        Self { col, row }
    }

    pub fn offset(self, dc: i32, dr: i32) -> Self {
        Self::new(self.col + dc, self.row + dr)
    }
}

impl std::fmt::Display for HexCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoardDims {
    pub n_rows: i32,
    pub n_cols: i32,
}

impl BoardDims {
    pub const fn new(n_rows: i32, n_cols: i32) -> Self {
        Self { n_rows, n_cols }
    }

    pub const fn square(len: i32) -> Self {
        Self::new(len, len)
    }

    pub fn contains(&self, c: HexCoord) -> bool {
        c.col >= 0 && c.row >= 0 && c.col < self.n_cols && c.row < self.n_rows
    }

    pub fn hex_count(&self) -> usize {
        (self.n_rows.max(0) * self.n_cols.max(0)) as usize
    }

    /// Row-major index of an on-board hex.
    pub fn index_of(&self, c: HexCoord) -> usize {
        debug_assert!(self.contains(c));
        (c.row * self.n_cols + c.col) as usize
    }

    /// All hexes in row-major order.
    pub fn hexes(&self) -> impl Iterator<Item = HexCoord> + '_ {
        let cols = self.n_cols;
        (0..self.n_rows).flat_map(move |r| (0..cols).map(move |c| HexCoord::new(c, r)))
    }

    pub fn as_rect(&self) -> AreaRect {
        AreaRect::new(0, 0, self.n_cols, self.n_rows)
    }
}

/// The six neighbor directions in their fixed enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    E,
    NE,
    NW,
    W,
    SW,
    SE,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::E,
        Direction::NE,
        Direction::NW,
        Direction::W,
        Direction::SW,
        Direction::SE,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }
}

/// Neighbor of `c` in direction `d`, whether or not it is on a board.
pub fn step(c: HexCoord, d: Direction) -> HexCoord {
    let odd = c.row & 1 == 1;
    let (dc, dr) = match (d, odd) {
        (Direction::E, _) => (1, 0),
        (Direction::W, _) => (-1, 0),
        (Direction::NE, false) => (0, -1),
        (Direction::NW, false) => (-1, -1),
        (Direction::SW, false) => (-1, 1),
        (Direction::SE, false) => (0, 1),
        (Direction::NE, true) => (1, -1),
        (Direction::NW, true) => (0, -1),
        (Direction::SW, true) => (0, 1),
        (Direction::SE, true) => (1, 1),
    };
    c.offset(dc, dr)
}

/// Neighbor slots in direction order; off-board slots are `None`.
pub fn neighbors_by_direction(c: HexCoord, dims: BoardDims) -> [Option<HexCoord>; 6] {
    Direction::ALL.map(|d| {
        let n = step(c, d);
        dims.contains(n).then_some(n)
    })
}

/// On-board neighbors in direction order.
pub fn neighbors(c: HexCoord, dims: BoardDims) -> Vec<HexCoord> {
    neighbors_by_direction(c, dims).into_iter().flatten().collect()
}

pub fn are_adjacent(a: HexCoord, b: HexCoord) -> bool {
    Direction::ALL.iter().any(|&d| step(a, d) == b)
}

fn row_pitch<T: Real>() -> T {
    T::from_real(3.0).sqrt() / T::from_count(2)
}

fn half<T: Real>() -> T {
    T::one() / T::from_count(2)
}

/// Hex-center position with unit horizontal spacing.
pub fn to_cartesian<T: Real>(c: HexCoord) -> (T, T) {
    let shift = if c.row & 1 == 1 { half::<T>() } else { T::zero() };
    let x = T::from_real(c.col as f64) + shift;
    let y = T::from_real(c.row as f64) * row_pitch::<T>();
    (x, y)
}

/// Cartesian displacement from `a` to `b`, computed from integer index
/// deltas so that it is exactly invariant under translations that keep
/// row parity.
pub fn cartesian_delta<T: Real>(a: HexCoord, b: HexCoord) -> (T, T) {
    let parity = (b.row & 1) - (a.row & 1);
    let dx = T::from_real((b.col - a.col) as f64) + T::from_real(parity as f64) * half::<T>();
    let dy = T::from_real((b.row - a.row) as f64) * row_pitch::<T>();
    (dx, dy)
}

pub fn euclid_dist<T: Real>(a: HexCoord, b: HexCoord) -> T {
    let (dx, dy) = cartesian_delta::<T>(a, b);
    dx.hypot(dy)
}

/// Distance from a hex center to an arbitrary Cartesian point.
pub fn dist_to_point<T: Real>(a: HexCoord, p: (T, T)) -> T {
    let (x, y) = to_cartesian::<T>(a);
    (x - p.0).hypot(y - p.1)
}

/// Hex whose center is nearest a Cartesian point (not clamped to a board).
pub fn nearest_hex<T: Real>(p: (T, T)) -> HexCoord {
    let guess_row = (p.1 / row_pitch::<T>()).round().to_i32().unwrap_or(0);
    let mut best = HexCoord::new(0, guess_row);
    let mut best_d = T::infinity();
    for r in guess_row - 1..=guess_row + 1 {
        let shift = if r & 1 == 1 { half::<T>() } else { T::zero() };
        let c0 = (p.0 - shift).round().to_i32().unwrap_or(0);
        for c in c0 - 1..=c0 + 1 {
            let h = HexCoord::new(c, r);
            let d = dist_to_point(h, p);
            if d < best_d {
                best_d = d;
                best = h;
            }
        }
    }
    best
}

/// Angular sector of `target` around `center`.
///
/// Angles are measured counter-clockwise from due east with north
/// (decreasing row) at 90 degrees. Sector `k` covers the half-open range
/// `[k * 360/n, (k+1) * 360/n)`.
pub fn sector_index<T: Real>(
    center: HexCoord,
    target: HexCoord,
    n_sectors: usize,
) -> Result<usize, GeometryError> {
    if center == target {
        return Err(GeometryError::SameHex(center));
    }
    let (dx, dy) = cartesian_delta::<T>(center, target);
    let north = -dy;
    let mut deg = north.atan2(dx).to_degrees();
    if deg < T::zero() {
        deg = deg + T::from_count(360);
    }
    let width = T::from_count(360) / T::from_count(n_sectors);
    // atan2 of exact boundary directions can land a few ulps short.
    let eps = T::from_real(1e-9);
    let k = ((deg / width) + eps).floor().to_usize().unwrap_or(0);
    Ok(k % n_sectors)
}

/// Axis-aligned rectangle of hex indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AreaRect {
    pub min_col: i32,
    pub min_row: i32,
    pub width: i32,
    pub height: i32,
}

impl AreaRect {
    pub const fn new(min_col: i32, min_row: i32, width: i32, height: i32) -> Self {
        Self {
            min_col,
            min_row,
            width,
            height,
        }
    }

    /// A `width` x `height` rect whose center cell is `center`
    /// (`min = center - size/2`).
    pub fn centered(center: HexCoord, width: i32, height: i32) -> Self {
        Self::new(center.col - width / 2, center.row - height / 2, width, height)
    }

    pub fn max_col(&self) -> i32 {
        self.min_col + self.width - 1
    }

    pub fn max_row(&self) -> i32 {
        self.min_row + self.height - 1
    }

    pub fn contains(&self, c: HexCoord) -> bool {
        c.col >= self.min_col
            && c.col <= self.max_col()
            && c.row >= self.min_row
            && c.row <= self.max_row()
    }

    pub fn contains_rect(&self, other: &AreaRect) -> bool {
        other.min_col >= self.min_col
            && other.min_row >= self.min_row
            && other.max_col() <= self.max_col()
            && other.max_row() <= self.max_row()
    }

    pub fn hexes(&self) -> impl Iterator<Item = HexCoord> + '_ {
        let (c0, w) = (self.min_col, self.width);
        (self.min_row..=self.max_row()).flat_map(move |r| (c0..c0 + w).map(move |c| HexCoord::new(c, r)))
    }

    /// Hex of this rect nearest `c` by Euclidean center distance
    /// (first in row-major order on ties).
    pub fn nearest_hex_to(&self, c: HexCoord) -> HexCoord {
        let mut best = HexCoord::new(self.min_col, self.min_row);
        let mut best_d = f64::INFINITY;
        for h in self.hexes() {
            let d: f64 = euclid_dist(c, h);
            if d < best_d {
                best_d = d;
                best = h;
            }
        }
        best
    }

    pub fn dims(&self) -> BoardDims {
        BoardDims::new(self.height, self.width)
    }
}

fn clamp_axis(min: i32, len: i32, lo: i32, span: i32) -> i32 {
    if min < lo {
        lo
    } else if min + len > lo + span {
        lo + span - len
    } else {
        min
    }
}

/// Translate `r` minimally so it lies inside `bounds`.
pub fn clamp_rect_into(r: AreaRect, bounds: AreaRect) -> Result<AreaRect, GeometryError> {
    if r.width > bounds.width || r.height > bounds.height || r.width < 1 || r.height < 1 {
        return Err(GeometryError::RectTooLarge {
            width: r.width,
            height: r.height,
            cols: bounds.width,
            rows: bounds.height,
        });
    }
    Ok(AreaRect::new(
        clamp_axis(r.min_col, r.width, bounds.min_col, bounds.width),
        clamp_axis(r.min_row, r.height, bounds.min_row, bounds.height),
        r.width,
        r.height,
    ))
}

pub fn clamp_rect(r: AreaRect, dims: BoardDims) -> Result<AreaRect, GeometryError> {
    clamp_rect_into(r, dims.as_rect())
}
