//! Seeded scenario generation and scenario streams.
//!
//! Factions start on opposite halves of a square board split either
//! north/south or east/west. Cities go on the weaker faction's half, or on
//! the middle axis when the sides are even. Hierarchical scenarios place
//! each manager's three operators in a Gaussian cluster.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineConfig, EngineError, Faction, GameState, Unit, UnitId, UnitKind, INITIAL_STRENGTH};
use crate::hexgrid::{euclid_dist, nearest_hex, to_cartesian, BoardDims, HexCoord};

pub const SCENARIO_SCHEMA: u32 = 1;
pub const MANAGERS_PER_COMMANDER: u32 = 3;
pub const OPERATORS_PER_MANAGER: u32 = 3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot place {requested} units on a side with {available} free hexes")]
    InsufficientSpace { requested: usize, available: usize },
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    pub id: UnitId,
    pub faction: Faction,
    #[serde(default)]
    pub kind: UnitKind,
    pub strength: f64,
    pub pos: HexCoord,
    #[serde(default)]
    pub manager: Option<u32>,
    #[serde(default)]
    pub commander: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub dims: BoardDims,
    pub units: Vec<UnitSpec>,
    #[serde(rename = "cities")]
    pub urban_hexes: Vec<HexCoord>,
    #[serde(rename = "phases")]
    pub num_phases: u32,
    #[serde(rename = "seed")]
    pub seed_used: u64,
}

fn default_schema() -> u32 {
    SCENARIO_SCHEMA
}

impl ScenarioSpec {
    pub fn count(&self, f: Faction) -> usize {
        self.units.iter().filter(|u| u.faction == f).count()
    }

    /// Build a fresh game. `rng_seed` seeds the engine's generator.
    pub fn to_state(&self, config: EngineConfig, rng_seed: u64) -> Result<GameState, EngineError> {
        let units = self
            .units
            .iter()
            .map(|u| Unit {
                id: u.id,
                faction: u.faction,
                kind: u.kind,
                strength: u.strength,
                pos: u.pos,
                can_move: false,
                manager: u.manager,
                commander: u.commander,
            })
            .collect();
        GameState::new(self.dims, &self.urban_hexes, units, self.num_phases, config, rng_seed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UnitCountMode {
    /// Per-faction count uniform in `[ceil(L/2), L]`.
    HalfToFull,
    Fixed { blue: u32, red: u32 },
    /// Per-faction count uniform in `[min, max]`.
    Range { min: u32, max: u32 },
    /// Per-faction commander count uniform in `[min, max]`, each with
    /// three managers of three operators.
    HierarchyCounts { min_commanders: u32, max_commanders: u32 },
    /// Per-faction manager count uniform in `[min, max]` under a single
    /// commander.
    ManagerCounts { min_managers: u32, max_managers: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CityPlacement {
    ForceRatio,
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub board_length: i32,
    pub min_cities: u32,
    pub max_cities: u32,
    pub unit_count_mode: UnitCountMode,
    pub city_placement: CityPlacement,
    /// Gaussian cluster placement for hierarchical modes.
    pub hierarchy_grouping: bool,
    pub max_phases_override: Option<u32>,
    /// Std-dev of operator offsets around a manager's cluster center.
    pub cluster_sigma: f64,
    pub min_cluster_spacing: f64,
}

impl ScenarioParams {
    /// Square board with one city and the board-length unit sizing.
    pub fn standard(board_length: i32) -> Self {
        Self {
            board_length,
            min_cities: 1,
            max_cities: 1,
            unit_count_mode: UnitCountMode::HalfToFull,
            city_placement: CityPlacement::ForceRatio,
            hierarchy_grouping: false,
            max_phases_override: None,
            cluster_sigma: 1.5,
            min_cluster_spacing: 4.0,
        }
    }

    /// 5x5 board, two to four units a side, ten phases.
    pub fn multimodel() -> Self {
        Self {
            unit_count_mode: UnitCountMode::Range { min: 2, max: 4 },
            max_phases_override: Some(10),
            ..Self::standard(5)
        }
    }

    /// 10x10 board, two or three managers a side, one or two cities, 40 phases.
    pub fn manager() -> Self {
        Self {
            max_cities: 2,
            unit_count_mode: UnitCountMode::ManagerCounts {
                min_managers: 2,
                max_managers: 3,
            },
            hierarchy_grouping: true,
            ..Self::standard(10)
        }
    }

    /// 20x20 board, one to three commanders a side, one or two cities, 80 phases.
    pub fn hrl() -> Self {
        Self {
            max_cities: 2,
            unit_count_mode: UnitCountMode::HierarchyCounts {
                min_commanders: 1,
                max_commanders: 3,
            },
            hierarchy_grouping: true,
            ..Self::standard(20)
        }
    }

    pub fn num_phases(&self) -> u32 {
        self.max_phases_override
            .unwrap_or(4 * self.board_length.max(0) as u32)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidParams(m.to_string()));
        if self.board_length < 1 {
            return bad("board_length must be >= 1");
        }
        if self.min_cities > self.max_cities {
            return bad("min_cities > max_cities");
        }
        match self.unit_count_mode {
            UnitCountMode::HalfToFull if self.board_length < 3 => bad("half-to-full sizing needs L >= 3"),
            UnitCountMode::Range { min, max } if min > max => bad("unit range min > max"),
            UnitCountMode::HierarchyCounts { min_commanders, max_commanders }
                if min_commanders > max_commanders || max_commanders > 3 || min_commanders < 1 =>
            {
                bad("commander count must lie in 1..=3")
            }
            UnitCountMode::ManagerCounts { min_managers, max_managers }
                if min_managers > max_managers || min_managers < 1 =>
            {
                bad("manager range invalid")
            }
            _ if self.cluster_sigma < 0.0 || !self.cluster_sigma.is_finite() => bad("cluster_sigma must be >= 0"),
            _ => Ok(()),
        }
    }
}

/// Per-faction count bounds `[ceil(L/2), L]`.
pub fn unit_count_bounds(board_length: i32) -> (u32, u32) {
    let l = board_length.max(0) as u32;
    (l.div_ceil(2), l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    North,
    South,
    West,
    East,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::South, Side::West, Side::East];

    pub fn opposite(self) -> Side {
        match self {
            Side::North => Side::South,
            Side::South => Side::North,
            Side::West => Side::East,
            Side::East => Side::West,
        }
    }

    pub fn hexes(self, len: i32) -> Vec<HexCoord> {
        let half = len / 2;
        let dims = BoardDims::square(len);
        dims.hexes()
            .filter(|h| match self {
                Side::North => h.row < half,
                Side::South => h.row >= len - half,
                Side::West => h.col < half,
                Side::East => h.col >= len - half,
            })
            .collect()
    }

    /// Hexes on the axis separating this side from its opposite.
    pub fn middle_axis(self, len: i32) -> Vec<HexCoord> {
        let mids: Vec<i32> = if len % 2 == 1 {
            vec![len / 2]
        } else {
            vec![len / 2 - 1, len / 2]
        };
        BoardDims::square(len)
            .hexes()
            .filter(|h| match self {
                Side::North | Side::South => mids.contains(&h.row),
                Side::West | Side::East => mids.contains(&h.col),
            })
            .collect()
    }
}

struct Placement {
    pos: HexCoord,
    manager: Option<u32>,
    commander: Option<u32>,
}

/// Generate one scenario from `seed`.
pub fn generate(params: &ScenarioParams, seed: u64) -> Result<ScenarioSpec, ScenarioError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = params.board_length;
    let dims = BoardDims::square(len);

    let blue_side = Side::ALL[rng.random_range(0..4)];
    let red_side = blue_side.opposite();

    let mut occupied = std::collections::BTreeSet::new();
    let blue = place_faction(params, Faction::Blue, blue_side, &mut occupied, &mut rng)?;
    let red = place_faction(params, Faction::Red, red_side, &mut occupied, &mut rng)?;

    let n_cities = rng.random_range(params.min_cities..=params.max_cities) as usize;
    let urban_hexes = place_cities_by_force_ratio(
        params.city_placement,
        len,
        (blue_side, blue.len()),
        (red_side, red.len()),
        n_cities,
        &occupied,
        &mut rng,
    );

    let mut units = Vec::with_capacity(blue.len() + red.len());
    for (faction, group) in [(Faction::Blue, blue), (Faction::Red, red)] {
        for p in group {
            units.push(UnitSpec {
                id: units.len() as UnitId,
                faction,
                kind: UnitKind::Infantry,
                strength: INITIAL_STRENGTH,
                pos: p.pos,
                manager: p.manager,
                commander: p.commander,
            });
        }
    }
    debug_assert!(units.iter().all(|u| dims.contains(u.pos)));

    Ok(ScenarioSpec {
        schema: SCENARIO_SCHEMA,
        dims,
        units,
        urban_hexes,
        num_phases: params.num_phases(),
        seed_used: seed,
    })
}

fn place_faction(
    params: &ScenarioParams,
    faction: Faction,
    side: Side,
    occupied: &mut std::collections::BTreeSet<HexCoord>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Placement>, ScenarioError> {
    let len = params.board_length;
    let (count, groups) = match params.unit_count_mode {
        UnitCountMode::HalfToFull => {
            let (lo, hi) = unit_count_bounds(len);
            (rng.random_range(lo..=hi), None)
        }
        UnitCountMode::Fixed { blue, red } => {
            (if faction == Faction::Blue { blue } else { red }, None)
        }
        UnitCountMode::Range { min, max } => (rng.random_range(min..=max), None),
        UnitCountMode::HierarchyCounts {
            min_commanders,
            max_commanders,
        } => {
            let c = rng.random_range(min_commanders..=max_commanders);
            (c * MANAGERS_PER_COMMANDER * OPERATORS_PER_MANAGER, Some((c, MANAGERS_PER_COMMANDER)))
        }
        UnitCountMode::ManagerCounts {
            min_managers,
            max_managers,
        } => {
            let m = rng.random_range(min_managers..=max_managers);
            (m * OPERATORS_PER_MANAGER, Some((1, m)))
        }
    };
    let count = count as usize;
    let side_hexes: Vec<HexCoord> = side.hexes(len).into_iter().filter(|h| !occupied.contains(h)).collect();
    if count > side_hexes.len() {
        return Err(ScenarioError::InsufficientSpace {
            requested: count,
            available: side_hexes.len(),
        });
    }
    let placed = match groups {
        None => {
            let mut pool = side_hexes;
            pool.shuffle(rng);
            pool.truncate(count);
            pool.into_iter()
                .map(|pos| Placement {
                    pos,
                    manager: None,
                    commander: None,
                })
                .collect()
        }
        Some((commanders, managers_each)) => {
            place_hierarchical_groups(params, &side_hexes, commanders, managers_each, rng)?
        }
    };
    for p in &placed {
        occupied.insert(p.pos);
    }
    Ok(placed)
}

/// Place `commanders * managers_each` clusters of three operators inside
/// `side_hexes`. Labels are faction-local: managers `0..`, commanders `0..`.
fn place_hierarchical_groups(
    params: &ScenarioParams,
    side_hexes: &[HexCoord],
    commanders: u32,
    managers_each: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Placement>, ScenarioError> {
    let n_managers = (commanders * managers_each) as usize;
    let needed = n_managers * OPERATORS_PER_MANAGER as usize;
    if needed > side_hexes.len() {
        return Err(ScenarioError::InsufficientSpace {
            requested: needed,
            available: side_hexes.len(),
        });
    }
    let mut centers: Vec<HexCoord> = Vec::with_capacity(n_managers);
    for _ in 0..n_managers {
        let mut best = side_hexes[rng.random_range(0..side_hexes.len())];
        let mut best_gap = gap_to(&centers, best);
        for _ in 0..64 {
            if best_gap >= params.min_cluster_spacing {
                break;
            }
            let c = side_hexes[rng.random_range(0..side_hexes.len())];
            let g = gap_to(&centers, c);
            if g > best_gap {
                best = c;
                best_gap = g;
            }
        }
        centers.push(best);
    }

    let noise = Normal::new(0.0, params.cluster_sigma)
        .map_err(|e| ScenarioError::InvalidParams(e.to_string()))?;
    let spread = params.hierarchy_grouping;
    let mut taken = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(needed);
    for (m, &center) in centers.iter().enumerate() {
        for _ in 0..OPERATORS_PER_MANAGER {
            let target = if spread {
                let (x, y) = to_cartesian::<f64>(center);
                nearest_hex((x + noise.sample(rng), y + noise.sample(rng)))
            } else {
                side_hexes[rng.random_range(0..side_hexes.len())]
            };
            let pos = nearest_free(side_hexes, &taken, target);
            taken.insert(pos);
            out.push(Placement {
                pos,
                manager: Some(m as u32),
                commander: Some(m as u32 / managers_each),
            });
        }
    }
    Ok(out)
}

fn gap_to(centers: &[HexCoord], c: HexCoord) -> f64 {
    centers
        .iter()
        .map(|&o| euclid_dist::<f64>(o, c))
        .fold(f64::INFINITY, f64::min)
}

/// Spiral search: the free side hex nearest `target` (row-major on ties).
fn nearest_free(
    side_hexes: &[HexCoord],
    taken: &std::collections::BTreeSet<HexCoord>,
    target: HexCoord,
) -> HexCoord {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for &h in side_hexes {
        if taken.contains(&h) {
            continue;
        }
        let d: f64 = euclid_dist(target, h);
        if d < best_d {
            best_d = d;
            best = Some(h);
        }
    }
    best.expect("capacity checked before placement")
}

/// City hexes: on the weaker faction's half, or on the middle axis when
/// the unit counts match. Falls back to any free hex when the preferred
/// region has no room.
pub fn place_cities_by_force_ratio(
    placement: CityPlacement,
    board_length: i32,
    blue: (Side, usize),
    red: (Side, usize),
    n_cities: usize,
    occupied: &std::collections::BTreeSet<HexCoord>,
    rng: &mut ChaCha8Rng,
) -> Vec<HexCoord> {
    let dims = BoardDims::square(board_length);
    let mut cities = Vec::with_capacity(n_cities);
    for _ in 0..n_cities {
        let free = |h: &HexCoord| !occupied.contains(h) && !cities.contains(h);
        let preferred: Vec<HexCoord> = match placement {
            CityPlacement::UniformRandom => Vec::new(),
            CityPlacement::ForceRatio => {
                let region = if blue.1 < red.1 {
                    blue.0.hexes(board_length)
                } else if red.1 < blue.1 {
                    red.0.hexes(board_length)
                } else {
                    blue.0.middle_axis(board_length)
                };
                region.into_iter().filter(free).collect()
            }
        };
        let pool = if preferred.is_empty() {
            dims.hexes().filter(free).collect::<Vec<_>>()
        } else {
            preferred
        };
        if pool.is_empty() {
            break;
        }
        cities.push(pool[rng.random_range(0..pool.len())]);
    }
    cities
}

/// Deterministic child seed for draw `index` of a stream.
pub fn child_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scenario sequence with `scenarioCycle` semantics: `cycle = 0` draws a
/// fresh scenario every game; `cycle = k` repeats the first `k` draws.
#[derive(Debug, Clone)]
pub struct ScenarioStream {
    pub seed: u64,
    pub cycle: u32,
    pub params: ScenarioParams,
    cached: Vec<ScenarioSpec>,
}

impl ScenarioStream {
    pub fn new(seed: u64, cycle: u32, params: ScenarioParams) -> Result<Self, ScenarioError> {
        let cached = (0..cycle as u64)
            .map(|i| generate(&params, child_seed(seed, i)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            seed,
            cycle,
            params,
            cached,
        })
    }

    pub fn draw(&self, index: u64) -> Result<ScenarioSpec, ScenarioError> {
        if self.cycle == 0 {
            generate(&self.params, child_seed(self.seed, index))
        } else {
            Ok(self.cached[(index % self.cycle as u64) as usize].clone())
        }
    }

    pub fn cached(&self) -> &[ScenarioSpec] {
        &self.cached
    }
}
