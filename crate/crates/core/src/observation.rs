//! Observation tensors and the abstractions built on top of them.
//!
//! Tensors are channel-major. The operator-level global observation has
//! 18 channels; manager and commander observations drop the legal-move
//! channel and repurpose the first two.

use num_traits::ToPrimitive;
use thiserror::Error;

use crate::engine::{ActionKind, Faction, GameState, Unit, UnitId, UnitKind};
use crate::hexgrid::{euclid_dist, sector_index, AreaRect, BoardDims, HexCoord};
use crate::scalar::{Real, Scalar};

pub const GLOBAL_CHANNELS: usize = 18;
pub const ECHELON_CHANNELS: usize = 17;
pub const LOCAL_SIZE: usize = 7;
pub const INNER_SIZE: usize = 5;
pub const PERIMETER_SECTORS: usize = 24;

/// Global channel indices.
pub mod ch {
    pub const MOVER: usize = 0;
    pub const FRIENDLY_MOVABLE: usize = 1;
    pub const LEGAL: usize = 2;
    pub const BLUE_HEALTH: usize = 3;
    pub const RED_HEALTH: usize = 4;
    pub const KIND0: usize = 5;
    pub const TERRAIN0: usize = 9;
    pub const CITY_BLUE: usize = 14;
    pub const CITY_RED: usize = 15;
    pub const PHASE: usize = 16;
    pub const SCORE: usize = 17;
}

/// Manager/commander channel indices.
pub mod ech {
    pub const OWN_UNITS: usize = 0;
    pub const OTHER_AREAS: usize = 1;
    pub const BLUE_HEALTH: usize = 2;
    pub const RED_HEALTH: usize = 3;
    pub const KIND0: usize = 4;
    pub const TERRAIN0: usize = 8;
    pub const CITY_BLUE: usize = 13;
    pub const CITY_RED: usize = 14;
    pub const PHASE: usize = 15;
    pub const SCORE: usize = 16;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ObsError {
    #[error("tensor buffer too short: {0} bytes")]
    Truncated(usize),
    #[error("tensor dimension {0} exceeds 16 bits")]
    TooLarge(usize),
}

/// Dense channel-major tensor. Channels flagged constant are uniform
/// fills that abstractions copy instead of aggregating.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    constant: u64,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        assert!(channels <= 64);
        Self {
            channels,
            rows,
            cols,
            data: vec![T::zero(); channels * rows * cols],
            constant: 0,
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.rows + r) * self.cols + col
    }

    pub fn get(&self, c: usize, r: usize, col: usize) -> T {
        self.data[self.idx(c, r, col)]
    }

    pub fn set(&mut self, c: usize, r: usize, col: usize, v: T) {
        let i = self.idx(c, r, col);
        self.data[i] = v;
    }

    pub fn add(&mut self, c: usize, r: usize, col: usize, v: T) {
        let i = self.idx(c, r, col);
        self.data[i] = self.data[i] + v;
    }

    pub fn at(&self, c: usize, h: HexCoord) -> T {
        self.get(c, h.row as usize, h.col as usize)
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.rows * self.cols;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_sum(&self, c: usize) -> T {
        self.channel(c).iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn is_constant(&self, c: usize) -> bool {
        self.constant & (1 << c) != 0
    }

    /// Fill channel `c` with `v` and mark it constant.
    pub fn fill_constant(&mut self, c: usize, v: T) {
        let n = self.rows * self.cols;
        self.data[c * n..(c + 1) * n].iter_mut().for_each(|x| *x = v);
        self.constant |= 1 << c;
    }

    fn constant_value(&self, c: usize) -> T {
        self.channel(c).first().copied().unwrap_or_else(T::zero)
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp_to(T::zero(), T::one());
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.rows, self.cols)
    }

    /// Sub-tensor over `rect` (in this tensor's row/col index space).
    /// Cells of `rect` outside the tensor read as zero.
    pub fn crop(&self, rect: AreaRect) -> Self {
        let mut out = Self::zeros(self.channels, rect.height as usize, rect.width as usize);
        for c in 0..self.channels {
            if self.is_constant(c) {
                out.fill_constant(c, self.constant_value(c));
                continue;
            }
            for r in 0..rect.height {
                for k in 0..rect.width {
                    let (sr, sc) = (rect.min_row + r, rect.min_col + k);
                    if sr >= 0 && sc >= 0 && (sr as usize) < self.rows && (sc as usize) < self.cols {
                        out.set(c, r as usize, k as usize, self.get(c, sr as usize, sc as usize));
                    }
                }
            }
        }
        out
    }
}

impl<T: Scalar + ToPrimitive> Tensor<T> {
    /// 8-byte header (channels, rows, cols as u16 LE plus 2 reserved bytes)
    /// followed by f32 LE values.
    pub fn to_bytes(&self) -> Result<Vec<u8>, ObsError> {
        let mut out = Vec::with_capacity(8 + 4 * self.data.len());
        for d in [self.channels, self.rows, self.cols] {
            let v = u16::try_from(d).map_err(|_| ObsError::TooLarge(d))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&[0, 0]);
        for v in &self.data {
            out.extend_from_slice(&v.to_f32().unwrap_or(0.0).to_le_bytes());
        }
        Ok(out)
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|v| v.to_f32().unwrap_or(0.0)).collect()
    }
}

impl Tensor<f32> {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ObsError> {
        if bytes.len() < 8 {
            return Err(ObsError::Truncated(bytes.len()));
        }
        let dim = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]) as usize;
        let (c, r, k) = (dim(0), dim(2), dim(4));
        let n = c * r * k;
        if bytes.len() < 8 + 4 * n {
            return Err(ObsError::Truncated(bytes.len()));
        }
        let data = bytes[8..8 + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self {
            channels: c,
            rows: r,
            cols: k,
            data,
            constant: 0,
        })
    }
}

fn ratio<T: Scalar>(num: f64, den: f64) -> T {
    if den == 0.0 {
        T::zero()
    } else {
        T::from_real(num) / T::from_real(den)
    }
}

/// Score channel fill: total score over the maximum combat points,
/// clamped to [-1, 1] and mapped to [0, 1].
pub fn normalized_score<T: Scalar>(s: &GameState) -> T {
    let n = s.initial_unit_count(Faction::Blue) + s.initial_unit_count(Faction::Red);
    let one = T::one();
    let x: T = ratio::<T>(s.game_score(), 100.0 * n as f64).clamp_to(-one, one);
    (x + one) / T::from_count(2)
}

pub fn phase_fraction<T: Scalar>(s: &GameState) -> T {
    ratio(s.phase as f64, s.num_phases as f64)
}

fn health<T: Scalar>(u: &Unit) -> T {
    T::from_real(u.strength) / T::from_count(100)
}

/// Channels shared by the global and echelon layouts, written at
/// `base_health` (blue health) onwards.
fn write_common<T: Scalar>(t: &mut Tensor<T>, s: &GameState, base_health: usize) {
    for u in s.units() {
        let (r, c) = (u.pos.row as usize, u.pos.col as usize);
        let hc = base_health + u.faction.index();
        t.add(hc, r, c, health(u));
        t.set(base_health + 2 + u.kind.index(), r, c, T::one());
    }
    let terrain0 = base_health + 2 + UnitKind::COUNT;
    for h in s.dims.hexes() {
        t.set(terrain0 + s.terrain_at(h).index(), h.row as usize, h.col as usize, T::one());
    }
    let city0 = terrain0 + crate::engine::Terrain::COUNT;
    for (h, owner) in s.cities() {
        if let Some(f) = owner {
            t.set(city0 + f.index(), h.row as usize, h.col as usize, T::one());
        }
    }
    t.fill_constant(city0 + 2, phase_fraction(s));
    t.fill_constant(city0 + 3, normalized_score(s));
}

/// The 18-channel operator observation for `mover`.
pub fn build_global<T: Scalar>(s: &GameState, mover: UnitId) -> Tensor<T> {
    let (rows, cols) = (s.dims.n_rows as usize, s.dims.n_cols as usize);
    let mut t = Tensor::zeros(GLOBAL_CHANNELS, rows, cols);
    let Some(m) = s.unit(mover) else {
        write_common(&mut t, s, ch::BLUE_HEALTH);
        return t;
    };
    t.set(ch::MOVER, m.pos.row as usize, m.pos.col as usize, T::one());
    for u in s.faction_units(m.faction).filter(|u| u.can_move) {
        t.set(ch::FRIENDLY_MOVABLE, u.pos.row as usize, u.pos.col as usize, T::one());
    }
    if let Ok(actions) = s.legal_actions(mover) {
        for a in actions {
            let h = match a.kind {
                ActionKind::Pass => m.pos,
                ActionKind::MoveTo { to } => to,
                ActionKind::Attack { target } => match s.unit(target) {
                    Some(u) => u.pos,
                    None => continue,
                },
            };
            t.set(ch::LEGAL, h.row as usize, h.col as usize, T::one());
        }
    }
    write_common(&mut t, s, ch::BLUE_HEALTH);
    t
}

/// Piecewise-linear distance decay parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams {
    pub n_d: f64,
    pub m_d: f64,
    pub f_d: f64,
    pub w_min: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            n_d: 3.0,
            m_d: 7.0,
            f_d: 100.0,
            w_min: 0.01,
        }
    }
}

/// Weight 1 up to `n_d`, linear to 0.1 at `m_d`, linear to `w_min` at
/// `f_d`, then flat.
pub fn decay_weight<T: Real>(d: T, p: &DecayParams) -> T {
    let (n, m, f, w) = (
        T::from_real(p.n_d),
        T::from_real(p.m_d),
        T::from_real(p.f_d),
        T::from_real(p.w_min),
    );
    let tenth = T::from_real(0.1);
    let one = T::one();
    if d <= n {
        one
    } else if d <= m {
        one - (one - tenth) * (d - n) / (m - n)
    } else if d < f {
        tenth - (tenth - w) * (d - m) / (f - m)
    } else {
        w
    }
}

/// Boundary cell `(row, col)` of the 7x7 grid for sector `k`. Sector 0 is
/// the middle of the right edge; sectors advance counter-clockwise.
pub fn perimeter_cell_of_sector(k: usize) -> (usize, usize) {
    const CELLS: [(usize, usize); PERIMETER_SECTORS] = [
        (3, 6),
        (2, 6),
        (1, 6),
        (0, 6),
        (0, 5),
        (0, 4),
        (0, 3),
        (0, 2),
        (0, 1),
        (0, 0),
        (1, 0),
        (2, 0),
        (3, 0),
        (4, 0),
        (5, 0),
        (6, 0),
        (6, 1),
        (6, 2),
        (6, 3),
        (6, 4),
        (6, 5),
        (6, 6),
        (5, 6),
        (4, 6),
    ];
    CELLS[k % PERIMETER_SECTORS]
}

/// 7x7 localized view around `center`: the 5x5 index window copied
/// as-is, the 24 perimeter cells holding decay-weighted sector sums of
/// everything outside it.
pub fn localized_decay<T: Real>(global: &Tensor<T>, center: HexCoord, p: &DecayParams) -> Tensor<T> {
    let mut out = Tensor::zeros(global.channels, LOCAL_SIZE, LOCAL_SIZE);
    let half = (INNER_SIZE / 2) as i32;
    let dims = BoardDims::new(global.rows as i32, global.cols as i32);

    for c in 0..global.channels {
        if global.is_constant(c) {
            out.fill_constant(c, global.constant_value(c));
        }
    }
    for dr in -half..=half {
        for dc in -half..=half {
            let h = HexCoord::new(center.col + dc, center.row + dr);
            if !dims.contains(h) {
                continue;
            }
            let (r, k) = ((dr + half + 1) as usize, (dc + half + 1) as usize);
            for c in (0..global.channels).filter(|&c| !global.is_constant(c)) {
                out.set(c, r, k, global.at(c, h));
            }
        }
    }
    for h in dims.hexes() {
        if (h.col - center.col).abs() <= half && (h.row - center.row).abs() <= half {
            continue;
        }
        let sector = sector_index::<T>(center, h, PERIMETER_SECTORS).expect("outside window");
        let (r, k) = perimeter_cell_of_sector(sector);
        let w = decay_weight(euclid_dist::<T>(center, h), p);
        for c in (0..global.channels).filter(|&c| !global.is_constant(c)) {
            let v = global.at(c, h);
            if v != T::zero() {
                out.add(c, r, k, v * w);
            }
        }
    }
    for c in (0..global.channels).filter(|&c| !global.is_constant(c)) {
        for k in 0..PERIMETER_SECTORS {
            let (r, col) = perimeter_cell_of_sector(k);
            let v = out.get(c, r, col).clamp_to(T::zero(), T::one());
            out.set(c, r, col, v);
        }
    }
    out
}

fn overlap(lo_a: usize, hi_a: usize, lo_b: usize, hi_b: usize) -> usize {
    hi_a.min(hi_b).saturating_sub(lo_a.max(lo_b))
}

/// Reduce to `(rows, cols)` by splitting each input cell among the output
/// cells it overlaps, in proportion to overlap area. Mass-preserving; no
/// clamping.
pub fn coarse_proportional<T: Scalar>(t: &Tensor<T>, out: (usize, usize)) -> Tensor<T> {
    let (orow, ocol) = out;
    let mut o = Tensor::zeros(t.channels, orow, ocol);
    // Input cell i spans [i*o, (i+1)*o) and output cell k spans
    // [k*n, (k+1)*n) on a common integer axis.
    let shares = |n: usize, on: usize| -> Vec<Vec<(usize, usize)>> {
        (0..n)
            .map(|i| {
                (0..on)
                    .filter_map(|k| {
                        let w = overlap(i * on, (i + 1) * on, k * n, (k + 1) * n);
                        (w > 0).then_some((k, w))
                    })
                    .collect()
            })
            .collect()
    };
    let row_shares = shares(t.rows, orow);
    let col_shares = shares(t.cols, ocol);
    let denom = T::from_count(orow * ocol);
    for c in 0..t.channels {
        if t.is_constant(c) {
            o.fill_constant(c, t.constant_value(c));
            continue;
        }
        for r in 0..t.rows {
            for k in 0..t.cols {
                let v = t.get(c, r, k);
                if v == T::zero() {
                    continue;
                }
                for &(orr, wr) in &row_shares[r] {
                    for &(okk, wc) in &col_shares[k] {
                        o.add(c, orr, okk, v * T::from_count(wr * wc) / denom);
                    }
                }
            }
        }
    }
    o
}

/// Output index whose center is nearest input cell `i`'s center, lower
/// index on ties.
fn nearest_bin(i: usize, n: usize, on: usize) -> usize {
    // Centers on a common axis: input (2i+1)*on, output (2k+1)*n.
    let x = ((2 * i + 1) * on) as i64;
    (0..on)
        .min_by_key(|&k| (x - ((2 * k + 1) * n) as i64).abs())
        .unwrap_or(0)
}

/// Reduce to `(rows, cols)` by assigning each input cell's whole value to
/// the output cell with the nearest center. Mass-preserving; no clamping.
pub fn coarse_nearest<T: Scalar>(t: &Tensor<T>, out: (usize, usize)) -> Tensor<T> {
    let (orow, ocol) = out;
    let mut o = Tensor::zeros(t.channels, orow, ocol);
    let rbin: Vec<usize> = (0..t.rows).map(|i| nearest_bin(i, t.rows, orow)).collect();
    let cbin: Vec<usize> = (0..t.cols).map(|i| nearest_bin(i, t.cols, ocol)).collect();
    for c in 0..t.channels {
        if t.is_constant(c) {
            o.fill_constant(c, t.constant_value(c));
            continue;
        }
        for r in 0..t.rows {
            for k in 0..t.cols {
                let v = t.get(c, r, k);
                if v != T::zero() {
                    o.add(c, rbin[r], cbin[k], v);
                }
            }
        }
    }
    o
}

/// Options for manager and commander observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchelonObsConfig {
    pub out: (usize, usize),
    pub clamp: bool,
}

impl Default for EchelonObsConfig {
    fn default() -> Self {
        Self {
            out: (5, 5),
            clamp: true,
        }
    }
}

/// 17-channel full-board tensor before cropping and reduction.
pub fn build_echelon_raw<T: Scalar>(
    s: &GameState,
    own: impl Fn(&Unit) -> bool,
    other_areas: &[AreaRect],
) -> Tensor<T> {
    let (rows, cols) = (s.dims.n_rows as usize, s.dims.n_cols as usize);
    let mut t = Tensor::zeros(ECHELON_CHANNELS, rows, cols);
    for u in s.units().iter().filter(|u| own(u)) {
        t.set(ech::OWN_UNITS, u.pos.row as usize, u.pos.col as usize, T::one());
    }
    for a in other_areas {
        for h in a.hexes().filter(|h| s.dims.contains(*h)) {
            t.set(ech::OTHER_AREAS, h.row as usize, h.col as usize, T::one());
        }
    }
    write_common(&mut t, s, ech::BLUE_HEALTH);
    t
}

fn finish<T: Scalar>(t: Tensor<T>, cfg: &EchelonObsConfig) -> Tensor<T> {
    let mut o = coarse_nearest(&t, cfg.out);
    if cfg.clamp {
        o.clamp_unit();
    }
    o
}

/// Manager observation over its operating area. `other_areas` are the
/// objective areas of the faction's other managers.
pub fn build_manager_obs<T: Scalar>(
    s: &GameState,
    faction: Faction,
    manager: u32,
    operating_area: AreaRect,
    other_areas: &[AreaRect],
    cfg: &EchelonObsConfig,
) -> Tensor<T> {
    let raw = build_echelon_raw(
        s,
        |u| u.faction == faction && u.manager == Some(manager),
        other_areas,
    );
    finish(raw.crop(operating_area), cfg)
}

/// Commander observation over the whole board. `other_areas` are the
/// operating areas of the faction's other commanders.
pub fn build_commander_obs<T: Scalar>(
    s: &GameState,
    faction: Faction,
    commander: u32,
    other_areas: &[AreaRect],
    cfg: &EchelonObsConfig,
) -> Tensor<T> {
    let raw = build_echelon_raw(
        s,
        |u| u.faction == faction && u.commander == Some(commander),
        other_areas,
    );
    finish(raw, cfg)
}

/// Read-only view of a state restricted to an area. Fire-target and
/// occupancy queries still see the whole board.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    pub state: &'a GameState,
    pub area: Option<AreaRect>,
}

pub fn cull_to_area(s: &GameState, area: AreaRect) -> StateView<'_> {
    StateView {
        state: s,
        area: Some(area),
    }
}

impl<'a> StateView<'a> {
    pub fn full(state: &'a GameState) -> Self {
        Self { state, area: None }
    }

    pub fn visible(&self, h: HexCoord) -> bool {
        self.state.dims.contains(h) && self.area.is_none_or(|a| a.contains(h))
    }

    pub fn units(&self) -> impl Iterator<Item = &'a Unit> + '_ {
        self.state.units().iter().filter(|u| self.visible(u.pos))
    }

    pub fn enemies_of(&self, f: Faction) -> impl Iterator<Item = &'a Unit> + '_ {
        self.units().filter(move |u| u.faction != f)
    }

    pub fn friends_of(&self, f: Faction) -> impl Iterator<Item = &'a Unit> + '_ {
        self.units().filter(move |u| u.faction == f)
    }

    /// Visible cities and their owners.
    pub fn cities(&self) -> impl Iterator<Item = (HexCoord, Option<Faction>)> + '_ {
        self.state
            .cities()
            .iter()
            .filter(|(h, _)| self.visible(**h))
            .map(|(h, o)| (*h, *o))
    }

    /// Enemies adjacent to `unit`, whether or not they are in the area.
    pub fn adjacent_enemies(&self, unit: &Unit) -> Vec<&'a Unit> {
        crate::hexgrid::neighbors(unit.pos, self.state.dims)
            .into_iter()
            .filter_map(|h| self.state.unit_at(h))
            .filter(|u| u.faction != unit.faction)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::tests::board;
    use crate::engine::{EngineConfig, Unit};
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn dp() -> DecayParams {
        DecayParams::default()
    }

    #[test]
    fn decay_table() {
        let cases: [(f64, f64); 7] = [
            (0.0, 1.0),
            (3.0, 1.0),
            (5.0, 0.55),
            (7.0, 0.1),
            (53.5, 0.055),
            (100.0, 0.01),
            (250.0, 0.01),
        ];
        for (d, w) in cases {
            assert!((decay_weight(d, &dp()) - w).abs() < 1e-12, "d={d}");
        }
        let d10: f64 = decay_weight(10.0, &dp());
        assert!((d10 - (0.1 - 0.09 * 3.0 / 93.0)).abs() < 1e-15);
        assert!((decay_weight(5.0f32, &dp()) - 0.55).abs() < 1e-6);
    }

    #[test]
    fn decay_monotone_and_bounded() {
        let p = dp();
        let mut prev = 1.0;
        for i in 0..3000 {
            let w: f64 = decay_weight(i as f64 * 0.05, &p);
            assert!(w <= prev + 1e-15 && (0.01..=1.0).contains(&w));
            prev = w;
        }
        for k in [3.0, 7.0, 100.0] {
            let a: f64 = decay_weight(k - 1e-9, &p);
            let b: f64 = decay_weight(k + 1e-9, &p);
            assert!((a - b).abs() < 1e-8, "jump at {k}");
        }
    }

    #[test]
    fn global_basic_channels() {
        let s = board(
            5,
            &[],
            vec![Unit::new(0, Faction::Blue, HexCoord::new(2, 2)), Unit::new(1, Faction::Red, HexCoord::new(4, 4))],
            20,
        );
        let t: Tensor<f64> = build_global(&s, 0);
        assert_eq!(t.shape(), (18, 5, 5));
        assert_eq!(t.get(ch::MOVER, 2, 2), 1.0);
        assert_eq!(t.channel_sum(ch::MOVER), 1.0);
        assert_eq!(t.get(ch::BLUE_HEALTH, 2, 2), 1.0);
        assert_eq!(t.channel_sum(ch::BLUE_HEALTH), 1.0);
        assert_eq!(t.channel_sum(ch::PHASE), 0.0);
        assert!(t.is_constant(ch::PHASE) && t.is_constant(ch::SCORE));
        // six moves plus pass
        assert_eq!(t.channel_sum(ch::LEGAL), 7.0);
        assert_eq!(t.channel_sum(ch::TERRAIN0), 25.0);
        assert_eq!(t.get(ch::SCORE, 0, 0), 0.5);
    }

    #[test]
    fn health_scaling() {
        let u = Unit::new(0, Faction::Blue, HexCoord::new(1, 1)).with_strength(80.0);
        let s = board(3, &[], vec![u, Unit::new(1, Faction::Red, HexCoord::new(0, 0))], 12);
        let t: Tensor<f64> = build_global(&s, 0);
        assert!((t.get(ch::BLUE_HEALTH, 1, 1) - 0.8).abs() < 1e-15);
        let q: Tensor<Rational64> = build_global(&s, 0);
        assert_eq!(q.get(ch::BLUE_HEALTH, 1, 1), Rational64::new(4, 5));
        assert_eq!(q.get(ch::RED_HEALTH, 0, 0), Rational64::from_integer(1));
    }

    #[test]
    fn perimeter_mapping() {
        assert_eq!(perimeter_cell_of_sector(0), (3, 6));
        assert_eq!(perimeter_cell_of_sector(6), (0, 3));
        assert_eq!(perimeter_cell_of_sector(12), (3, 0));
        assert_eq!(perimeter_cell_of_sector(18), (6, 3));
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..24 {
            let (a, b) = (perimeter_cell_of_sector(k), perimeter_cell_of_sector(k + 1));
            assert!(a.0 == 0 || a.0 == 6 || a.1 == 0 || a.1 == 6);
            assert_eq!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1), 1, "{k}");
            seen.insert(a);
        }
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn small_board_zero_pads() {
        let s = board(3, &[], vec![Unit::new(0, Faction::Blue, HexCoord::new(1, 1))], 12);
        let g: Tensor<f64> = build_global(&s, 0);
        let l = localized_decay(&g, HexCoord::new(1, 1), &dp());
        assert_eq!(l.shape(), (18, 7, 7));
        for c in 0..18 {
            for k in 0..24 {
                let (r, col) = perimeter_cell_of_sector(k);
                if !l.is_constant(c) {
                    assert_eq!(l.get(c, r, col), 0.0);
                }
            }
        }
        assert_eq!(l.channel_sum(ch::TERRAIN0), 9.0);
        assert_eq!(l.get(ch::TERRAIN0, 1, 1), 0.0);
        assert_eq!(l.get(ch::TERRAIN0, 2, 2), 1.0);
    }

    #[test]
    fn single_far_unit_lands_in_east_sector() {
        let s = board(
            21,
            &[],
            vec![
                Unit::new(0, Faction::Blue, HexCoord::new(5, 10)),
                Unit::new(1, Faction::Red, HexCoord::new(15, 10)),
            ],
            84,
        );
        let g: Tensor<f64> = build_global(&s, 0);
        let l = localized_decay(&g, HexCoord::new(5, 10), &dp());
        let expected = 0.1 - 0.09 * 3.0 / 93.0;
        assert!((l.get(ch::RED_HEALTH, 3, 6) - expected).abs() < 1e-12);
        assert!((l.channel_sum(ch::RED_HEALTH) - expected).abs() < 1e-12);
    }

    #[test]
    fn far_sector_sum_adds() {
        let mut g: Tensor<f64> = Tensor::zeros(18, 1, 260);
        g.set(ch::RED_HEALTH, 0, 120, 1.0);
        g.set(ch::RED_HEALTH, 0, 130, 1.0);
        let l = localized_decay(&g, HexCoord::new(0, 0), &dp());
        assert!((l.get(ch::RED_HEALTH, 3, 6) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn perimeter_clamps() {
        let mut g: Tensor<f64> = Tensor::zeros(18, 1, 12);
        for c in 3..12 {
            g.set(ch::RED_HEALTH, 0, c, 1.0);
        }
        let l = localized_decay(&g, HexCoord::new(0, 0), &dp());
        assert_eq!(l.get(ch::RED_HEALTH, 3, 6), 1.0);
    }

    #[test]
    fn proportional_identity_and_uniform() {
        let mut t: Tensor<Rational64> = Tensor::zeros(2, 7, 7);
        t.set(0, 3, 4, Rational64::new(1, 3));
        assert_eq!(coarse_proportional(&t, (7, 7)), t);

        let v = Rational64::new(1, 2);
        let mut u: Tensor<Rational64> = Tensor::zeros(1, 20, 20);
        u.data.iter_mut().for_each(|x| *x = v);
        let o = coarse_proportional(&u, (7, 7));
        for x in &o.data {
            assert_eq!(*x, v * Rational64::new(400, 49));
        }
    }

    #[test]
    fn proportional_full_containment() {
        let mut t: Tensor<f64> = Tensor::zeros(1, 10, 10);
        t.set(0, 0, 0, 1.0);
        let o = coarse_proportional(&t, (5, 5));
        assert_eq!(o.get(0, 0, 0), 1.0);
        assert_eq!(o.channel_sum(0), 1.0);
    }

    #[test]
    fn nearest_single_unit() {
        let mut t: Tensor<f64> = Tensor::zeros(1, 10, 10);
        t.set(0, 7, 2, 1.0);
        let o = coarse_nearest(&t, (5, 5));
        assert_eq!(o.data.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(o.get(0, 3, 1), 1.0);
        let empty: Tensor<f64> = Tensor::zeros(1, 10, 10);
        assert!(coarse_nearest(&empty, (5, 5)).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nearest_bins_balanced() {
        // 20 -> 7: every output gets 2 or 3 input cells.
        let mut counts = [0; 7];
        for i in 0..20 {
            counts[nearest_bin(i, 20, 7)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 2 || c == 3), "{counts:?}");
        assert_eq!(nearest_bin(0, 10, 5), 0);
        assert_eq!(nearest_bin(9, 10, 5), 4);
    }

    #[test]
    fn constant_channels_are_copied() {
        let mut t: Tensor<f64> = Tensor::zeros(2, 10, 10);
        t.fill_constant(1, 0.25);
        for o in [coarse_nearest(&t, (5, 5)), coarse_proportional(&t, (5, 5))] {
            assert!(o.channel(1).iter().all(|v| *v == 0.25));
        }
    }

    fn hrl_units() -> Vec<Unit> {
        vec![
            Unit::new(0, Faction::Blue, HexCoord::new(1, 1)).with_group(0, 0),
            Unit::new(1, Faction::Blue, HexCoord::new(2, 1)).with_group(0, 0),
            Unit::new(2, Faction::Blue, HexCoord::new(1, 2)).with_group(0, 0),
            Unit::new(3, Faction::Blue, HexCoord::new(15, 15)).with_group(1, 0),
            Unit::new(4, Faction::Red, HexCoord::new(10, 3)),
            Unit::new(5, Faction::Red, HexCoord::new(11, 3)),
        ]
    }

    #[test]
    fn manager_obs_layout() {
        let s = board(20, &[], hrl_units(), 80);
        let area = AreaRect::new(0, 0, 10, 10);
        let cfg = EchelonObsConfig::default();
        let o: Tensor<f64> = build_manager_obs(&s, Faction::Blue, 0, area, &[], &cfg);
        assert_eq!(o.shape(), (17, 5, 5));
        assert_eq!(o.channel_sum(ech::OTHER_AREAS), 0.0);
        // three own units, clamped per cell
        assert!(o.channel_sum(ech::OWN_UNITS) >= 1.0);
        assert!(o.data.iter().all(|v| (0.0..=1.0).contains(v)));
        // red at col 10 is just outside
        assert_eq!(o.channel_sum(ech::RED_HEALTH), 0.0);
        assert_eq!(o.channel_sum(ech::BLUE_HEALTH).min(3.0), o.channel_sum(ech::BLUE_HEALTH));

        let other = AreaRect::new(5, 5, 5, 5);
        let o2: Tensor<f64> = build_manager_obs(&s, Faction::Blue, 0, area, &[other], &cfg);
        let marked: Vec<(usize, usize)> = (0..5)
            .flat_map(|r| (0..5).map(move |c| (r, c)))
            .filter(|&(r, c)| o2.get(ech::OTHER_AREAS, r, c) > 0.0)
            .collect();
        assert!(!marked.is_empty());
        assert!(marked.iter().all(|&(r, c)| r >= 2 && c >= 2));
        assert!(marked.iter().all(|&(r, c)| o2.get(ech::OTHER_AREAS, r, c) == 1.0));
    }

    #[test]
    fn commander_obs_phase_and_mass() {
        let mut units = Vec::new();
        for i in 0..27u32 {
            let pos = HexCoord::new((i % 9) as i32 * 2, (i / 9) as i32);
            units.push(Unit::new(i, Faction::Blue, pos).with_group(i / 3, 0));
        }
        units.push(Unit::new(27, Faction::Red, HexCoord::new(0, 19)));
        let mut s = board(20, &[], units, 80);
        s.phase = 40;
        let raw: Tensor<f64> = build_echelon_raw(&s, |u| u.commander == Some(0), &[]);
        let reduced = coarse_nearest(&raw, (5, 5));
        assert_eq!(reduced.channel_sum(ech::OWN_UNITS), 27.0);
        assert_eq!(reduced.channel_sum(ech::BLUE_HEALTH), 27.0);
        let o: Tensor<f64> = build_commander_obs(&s, Faction::Blue, 0, &[], &EchelonObsConfig::default());
        assert!(o.channel(ech::PHASE).iter().all(|v| *v == 0.5));
        assert_eq!(o.channel_sum(ech::OTHER_AREAS), 0.0);
    }

    #[test]
    fn culled_view() {
        let s = board(
            10,
            &[],
            vec![
                Unit::new(0, Faction::Blue, HexCoord::new(4, 4)),
                Unit::new(1, Faction::Red, HexCoord::new(5, 4)),
                Unit::new(2, Faction::Red, HexCoord::new(8, 4)),
            ],
            40,
        );
        let area = AreaRect::new(0, 0, 5, 5);
        let v = cull_to_area(&s, area);
        let visible: Vec<UnitId> = v.units().map(|u| u.id).collect();
        assert_eq!(visible, vec![0]);
        let adj: Vec<UnitId> = v.adjacent_enemies(s.unit(0).unwrap()).iter().map(|u| u.id).collect();
        assert_eq!(adj, vec![1]);
        let full = cull_to_area(&s, s.dims.as_rect());
        assert_eq!(full.units().count(), 3);
        assert_eq!(StateView::full(&s).units().count(), 3);
    }

    #[test]
    fn bytes_roundtrip() {
        let s = board(4, &[HexCoord::new(1, 1)], vec![Unit::new(0, Faction::Blue, HexCoord::new(2, 3))], 16);
        let t: Tensor<f64> = build_global(&s, 0);
        let b = t.to_bytes().unwrap();
        assert_eq!(b.len(), 8 + 4 * 18 * 16);
        assert_eq!(&b[..8], &[18, 0, 4, 0, 4, 0, 0, 0]);
        let back = Tensor::<f32>::from_bytes(&b).unwrap();
        assert_eq!(back.data, t.to_f32_vec());
        assert!(Tensor::<f32>::from_bytes(&b[..20]).is_err());
    }

    fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tensor::zeros(3, rows, cols);
        for v in &mut t.data {
            if rng.random_bool(0.3) {
                *v = rng.random_range(0..=10) as f64 / 10.0;
            }
        }
        t
    }

    proptest! {
        #[test]
        fn nearest_conserves_exactly(rows in 5usize..21, cols in 5usize..21, seed in any::<u64>()) {
            let t = random_tensor(rows, cols, seed);
            let q: Tensor<Rational64> = Tensor {
                channels: t.channels, rows, cols, constant: 0,
                data: t.data.iter().map(|v| Rational64::new((v * 10.0).round() as i64, 10)).collect(),
            };
            let o = coarse_nearest(&q, (5, 5));
            for c in 0..3 {
                prop_assert_eq!(o.channel_sum(c), q.channel_sum(c));
            }
            let p = coarse_proportional(&q, (5, 5));
            for c in 0..3 {
                prop_assert_eq!(p.channel_sum(c), q.channel_sum(c));
            }
        }

        #[test]
        fn proportional_float_close(rows in 7usize..21, seed in any::<u64>()) {
            let t = random_tensor(rows, rows, seed);
            let o = coarse_proportional(&t, (7, 7));
            for c in 0..3 {
                let (a, b) = (o.channel_sum(c), t.channel_sum(c));
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }

        #[test]
        fn inner_window_is_crop(len in 3i32..13, seed in any::<u64>(), cc in 0i32..12, cr in 0i32..12) {
            let t = random_tensor(len as usize, len as usize, seed);
            let center = HexCoord::new(cc % len, cr % len);
            let l = localized_decay(&t, center, &dp());
            let crop = t.crop(AreaRect::new(center.col - 2, center.row - 2, 5, 5));
            for c in 0..3 {
                for r in 0..5 {
                    for k in 0..5 {
                        prop_assert_eq!(l.get(c, r + 1, k + 1), crop.get(c, r, k));
                    }
                }
                for s in 0..24 {
                    let (r, k) = perimeter_cell_of_sector(s);
                    prop_assert!((0.0..=1.0).contains(&l.get(c, r, k)));
                }
            }
        }

        #[test]
        fn abstractions_leave_input_untouched(seed in any::<u64>()) {
            let t = random_tensor(10, 10, seed);
            let copy = t.clone();
            let _ = localized_decay(&t, HexCoord::new(4, 4), &dp());
            let _ = coarse_nearest(&t, (5, 5));
            let _ = coarse_proportional(&t, (5, 5));
            prop_assert_eq!(t, copy);
        }
    }

    #[test]
    fn state_obs_in_unit_range() {
        use crate::scenario::{generate, ScenarioParams};
        for seed in 0..30 {
            let spec = generate(&ScenarioParams::standard(6), seed).unwrap();
            let s = spec.to_state(EngineConfig::default(), seed).unwrap();
            let mover = s.current_unit().unwrap();
            let g: Tensor<f64> = build_global(&s, mover);
            assert!(g.data.iter().all(|v| (0.0..=1.0).contains(v)));
            let l = localized_decay(&g, s.unit(mover).unwrap().pos, &dp());
            assert!(l.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
