//! Commander / manager / operator orchestration.
//!
//! Commanders assign 10x10 operating areas on a fixed phase cadence.
//! Managers assign 5x5 objective areas whenever all of their effective
//! operators are inside their current objective area (or they have none).
//! Operators outside their objective area move toward it; inside it they
//! run their behavior model over the culled view.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{choose_attack, move_toward, OperatorModel};
use crate::engine::{Action, Faction, GameRng, GameState, Unit, UnitId};
use crate::hexgrid::{clamp_rect_into, dist_to_point, to_cartesian, AreaRect, HexCoord};
use crate::multimodel::{argmax_first, Echelon, ScorePredictor, Usage};
use crate::observation::{build_commander_obs, build_manager_obs, cull_to_area, EchelonObsConfig, StateView};
use crate::play::{Controller, PlayError};

pub const GRID: usize = 3;
pub const N_CHOICES: usize = GRID * GRID;
pub const CENTER_CHOICE: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum HierarchyError {
    #[error("area of {out_dim}x{out_dim} does not fit in {width}x{height}")]
    AreaTooLarge { out_dim: i32, width: i32, height: i32 },
    #[error("area choice {0} outside 0..9")]
    BadChoice(usize),
    #[error("inconsistent hierarchy labels: {0}")]
    Labels(String),
}

/// Boundaries of `n` split into three near-equal parts, larger parts first.
fn split3(n: i32) -> [(i32, i32); 3] {
    let base = n / 3;
    let extra = n % 3;
    let mut out = [(0, 0); 3];
    let mut start = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let len = base + i32::from((i as i32) < extra);
        *o = (start, len);
        start += len;
    }
    out
}

/// The nine cells of the 3x3 overlay, row-major.
pub fn grid_cells(area: AreaRect) -> [AreaRect; N_CHOICES] {
    let rows = split3(area.height);
    let cols = split3(area.width);
    let mut out = [AreaRect::new(0, 0, 0, 0); N_CHOICES];
    for (r, &(r0, rh)) in rows.iter().enumerate() {
        for (c, &(c0, cw)) in cols.iter().enumerate() {
            out[r * GRID + c] = AreaRect::new(area.min_col + c0, area.min_row + r0, cw, rh);
        }
    }
    out
}

/// Floor midpoint of a cell.
pub fn cell_center(cell: AreaRect) -> HexCoord {
    HexCoord::new(cell.min_col + (cell.width - 1).max(0) / 2, cell.min_row + (cell.height - 1).max(0) / 2)
}

/// Cell of `area` containing `h`, after snapping `h` into the area.
pub fn cell_of(area: AreaRect, h: HexCoord) -> usize {
    let h = HexCoord::new(
        h.col.clamp(area.min_col, area.max_col()),
        h.row.clamp(area.min_row, area.max_row()),
    );
    grid_cells(area)
        .iter()
        .position(|c| c.contains(h))
        .unwrap_or(CENTER_CHOICE)
}

/// `out_dim` square centered on the chosen cell, clamped into `obs_space`.
pub fn make_area(obs_space: AreaRect, choice: usize, out_dim: i32) -> Result<AreaRect, HierarchyError> {
    if choice >= N_CHOICES {
        return Err(HierarchyError::BadChoice(choice));
    }
    if out_dim > obs_space.width || out_dim > obs_space.height || out_dim < 1 {
        return Err(HierarchyError::AreaTooLarge {
            out_dim,
            width: obs_space.width,
            height: obs_space.height,
        });
    }
    let center = cell_center(grid_cells(obs_space)[choice]);
    clamp_rect_into(AreaRect::centered(center, out_dim, out_dim), obs_space).map_err(|_| {
        HierarchyError::AreaTooLarge {
            out_dim,
            width: obs_space.width,
            height: obs_space.height,
        }
    })
}

/// Largest square area of at most `dim` that fits in `parent`.
pub fn fitted_dim(parent: AreaRect, dim: i32) -> i32 {
    dim.min(parent.width).min(parent.height)
}

/// True at the first decision and every `cadence` phases after it.
pub fn commander_due(phase: u32, last: Option<u32>, cadence: u32) -> bool {
    last.is_none_or(|p| phase >= p + cadence)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerNode {
    pub id: u32,
    pub commander: Option<u32>,
    pub operators: Vec<UnitId>,
    pub operating: Option<AreaRect>,
    pub objective: Option<AreaRect>,
    pub choice: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommanderNode {
    pub id: u32,
    pub managers: Vec<u32>,
    pub operating: Option<AreaRect>,
    pub choice: Option<usize>,
    pub last_phase: Option<u32>,
}

/// One faction's echelon tree built from unit labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub faction: Faction,
    pub commanders: Vec<CommanderNode>,
    pub managers: Vec<ManagerNode>,
}

impl Forest {
    pub fn build(s: &GameState, faction: Faction) -> Result<Self, HierarchyError> {
        Self::from_units(s.units().iter().chain(s.removed_units()), faction)
    }

    pub fn from_units<'a>(units: impl Iterator<Item = &'a Unit>, faction: Faction) -> Result<Self, HierarchyError> {
        let mut managers: Vec<ManagerNode> = Vec::new();
        let mut units: Vec<&Unit> = units.filter(|u| u.faction == faction).collect();
        units.sort_by_key(|u| u.id);
        for u in units {
            let Some(m) = u.manager else {
                return Err(HierarchyError::Labels(format!("unit {} has no manager", u.id)));
            };
            match managers.iter_mut().find(|n| n.id == m) {
                Some(n) => {
                    if n.commander != u.commander {
                        return Err(HierarchyError::Labels(format!("manager {m} spans commanders")));
                    }
                    n.operators.push(u.id);
                }
                None => managers.push(ManagerNode {
                    id: m,
                    commander: u.commander,
                    operators: vec![u.id],
                    operating: None,
                    objective: None,
                    choice: None,
                }),
            }
        }
        managers.sort_by_key(|m| m.id);
        let mut commanders: Vec<CommanderNode> = Vec::new();
        for m in &managers {
            if m.operators.len() > 3 {
                return Err(HierarchyError::Labels(format!("manager {} has {} operators", m.id, m.operators.len())));
            }
            if let Some(c) = m.commander {
                match commanders.iter_mut().find(|n| n.id == c) {
                    Some(n) => n.managers.push(m.id),
                    None => commanders.push(CommanderNode {
                        id: c,
                        managers: vec![m.id],
                        operating: None,
                        choice: None,
                        last_phase: None,
                    }),
                }
            }
        }
        commanders.sort_by_key(|c| c.id);
        if let Some(c) = commanders.iter().find(|c| c.managers.len() > 3) {
            return Err(HierarchyError::Labels(format!("commander {} has {} managers", c.id, c.managers.len())));
        }
        Ok(Self {
            faction,
            commanders,
            managers,
        })
    }

    pub fn manager(&self, id: u32) -> Option<&ManagerNode> {
        self.managers.iter().find(|m| m.id == id)
    }

    fn manager_mut(&mut self, id: u32) -> Option<&mut ManagerNode> {
        self.managers.iter_mut().find(|m| m.id == id)
    }

    pub fn commander(&self, id: u32) -> Option<&CommanderNode> {
        self.commanders.iter().find(|c| c.id == id)
    }

    fn commander_mut(&mut self, id: u32) -> Option<&mut CommanderNode> {
        self.commanders.iter_mut().find(|c| c.id == id)
    }

    pub fn manager_of(&self, unit: UnitId) -> Option<&ManagerNode> {
        self.managers.iter().find(|m| m.operators.contains(&unit))
    }

    /// Units of manager `id` still on the roster.
    pub fn effective_units<'a>(&self, s: &'a GameState, id: u32) -> Vec<&'a Unit> {
        self.manager(id)
            .map(|m| m.operators.iter().filter_map(|&u| s.unit(u)).collect())
            .unwrap_or_default()
    }

    pub fn commander_units<'a>(&self, s: &'a GameState, id: u32) -> Vec<&'a Unit> {
        self.commander(id)
            .map(|c| c.managers.iter().flat_map(|&m| self.effective_units(s, m)).collect())
            .unwrap_or_default()
    }
}

/// No area yet, or every effective operator inside it. Managers with no
/// effective operators are dormant and never fire.
pub fn manager_needs_decision(s: &GameState, forest: &Forest, id: u32) -> bool {
    let units = forest.effective_units(s, id);
    if units.is_empty() {
        return false;
    }
    match forest.manager(id).and_then(|m| m.objective) {
        None => true,
        Some(a) => units.iter().all(|u| a.contains(u.pos)),
    }
}

pub fn centroid(units: &[&Unit]) -> Option<(f64, f64)> {
    if units.is_empty() {
        return None;
    }
    let (mut x, mut y) = (0.0, 0.0);
    for u in units {
        let (a, b) = to_cartesian::<f64>(u.pos);
        x += a;
        y += b;
    }
    let n = units.len() as f64;
    Some((x / n, y / n))
}

fn nearest_to_point(p: (f64, f64), it: impl Iterator<Item = HexCoord>) -> Option<HexCoord> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for h in it {
        let d = dist_to_point(h, p);
        if d < best_d {
            best_d = d;
            best = Some(h);
        }
    }
    best
}

/// Region hex nearest a Cartesian point.
pub fn region_hex_near(region: AreaRect, p: (f64, f64)) -> HexCoord {
    nearest_to_point(p, region.hexes()).unwrap_or(HexCoord::new(region.min_col, region.min_row))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaVariant {
    Balanced,
    PrioritizedCity,
    SeizeRedCity,
    Killer,
    Hold,
}

impl AreaVariant {
    pub const ALL: [AreaVariant; 5] = [
        AreaVariant::Balanced,
        AreaVariant::PrioritizedCity,
        AreaVariant::SeizeRedCity,
        AreaVariant::Killer,
        AreaVariant::Hold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AreaVariant::Balanced => "balanced",
            AreaVariant::PrioritizedCity => "prioritized_city",
            AreaVariant::SeizeRedCity => "seize_red_city",
            AreaVariant::Killer => "killer",
            AreaVariant::Hold => "hold",
        }
    }
}

impl fmt::Display for AreaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AreaVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "balanced" => AreaVariant::Balanced,
            "prioritized_city" | "city" => AreaVariant::PrioritizedCity,
            "seize_red_city" => AreaVariant::SeizeRedCity,
            "killer" | "kill" => AreaVariant::Killer,
            "hold" => AreaVariant::Hold,
            other => return Err(format!("unknown area model `{other}`")),
        })
    }
}

/// Scripted area selection over `region` for a group of `units`.
/// `current` is the group's previous choice, if any.
pub fn scripted_area_choice(
    variant: AreaVariant,
    s: &GameState,
    faction: Faction,
    region: AreaRect,
    units: &[&Unit],
    current: Option<usize>,
) -> usize {
    let Some(origin) = centroid(units) else {
        return CENTER_CHOICE;
    };
    let view = cull_to_area(s, region);
    let cities: Vec<(HexCoord, Option<Faction>)> = view.cities().collect();
    let city_owned_by = |o: Option<Faction>| {
        nearest_to_point(origin, cities.iter().filter(move |(_, w)| *w == o).map(|(h, _)| *h))
    };
    let enemy = || nearest_to_point(origin, view.enemies_of(faction).map(|u| u.pos));
    let holding = || current.filter(|_| units.iter().any(|u| s.is_urban(u.pos)));
    let cell = |h: HexCoord| cell_of(region, h);

    let pick = match variant {
        AreaVariant::Balanced => holding().or_else(|| {
            city_owned_by(None)
                .or_else(|| city_owned_by(Some(faction.opponent())))
                .or_else(enemy)
                .or_else(|| city_owned_by(Some(faction)))
                .map(cell)
        }),
        AreaVariant::PrioritizedCity => holding().or_else(|| {
            city_owned_by(None)
                .or_else(|| city_owned_by(Some(faction.opponent())))
                .or_else(|| city_owned_by(Some(faction)))
                .map(cell)
        }),
        AreaVariant::SeizeRedCity => city_owned_by(Some(faction.opponent())).map(cell),
        AreaVariant::Killer => enemy().map(cell),
        AreaVariant::Hold => Some(cell(region_hex_near(region, origin))),
    };
    pick.unwrap_or(CENTER_CHOICE)
}

/// Area-level multi-model registry.
#[derive(Debug, Clone)]
pub struct AreaMultiModel {
    pub entries: Vec<(AreaVariant, ScorePredictor)>,
    pub usage: Usage,
}

impl AreaMultiModel {
    pub fn new(entries: Vec<(AreaVariant, ScorePredictor)>) -> Self {
        assert!(!entries.is_empty(), "registry must be nonempty");
        let usage = Usage::new(entries.iter().map(|(v, _)| v.name().to_string()).collect());
        Self { entries, usage }
    }
}

#[derive(Debug, Clone)]
pub enum EchelonPolicy {
    Scripted(AreaVariant),
    Multi(AreaMultiModel),
}

impl EchelonPolicy {
    pub fn usage(&self) -> Option<&Usage> {
        match self {
            EchelonPolicy::Multi(m) => Some(&m.usage),
            EchelonPolicy::Scripted(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub operating_dim: i32,
    pub objective_dim: i32,
    pub commander_cadence: u32,
    /// Without commanders every manager's operating area is the board.
    pub use_commanders: bool,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            operating_dim: 10,
            objective_dim: 5,
            commander_cadence: 40,
            use_commanders: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// First decision, or the previous area was invalidated by the parent.
    NoArea,
    /// All effective operators reached the objective area.
    Arrived,
    /// Group centroid outside the operating area; nearest cell taken.
    AutoNearest,
    /// Commander cadence.
    Cadence,
}

/// One area assignment, as written to replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub phase: u32,
    pub faction: Faction,
    pub level: Echelon,
    pub id: u32,
    pub choice: usize,
    pub area: AreaRect,
    pub trigger: Trigger,
}

/// A decision the controller leaves to an external caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub level: Echelon,
    pub id: u32,
}

#[derive(Debug, Clone)]
pub struct HierarchyController {
    pub faction: Faction,
    pub cfg: HierarchyConfig,
    pub commander_policy: EchelonPolicy,
    pub manager_policy: EchelonPolicy,
    pub operator_model: OperatorModel,
    /// Node whose decisions are supplied from outside.
    pub external: Option<DecisionRequest>,
    pub obs_cfg: EchelonObsConfig,
    forest: Option<Forest>,
    pending: Vec<Assignment>,
}

impl HierarchyController {
    pub fn new(faction: Faction, cfg: HierarchyConfig) -> Self {
        Self {
            faction,
            cfg,
            commander_policy: EchelonPolicy::Scripted(AreaVariant::Balanced),
            manager_policy: EchelonPolicy::Scripted(AreaVariant::Balanced),
            operator_model: OperatorModel::PassAgg,
            external: None,
            obs_cfg: EchelonObsConfig::default(),
            forest: None,
            pending: Vec::new(),
        }
    }

    pub fn with_policies(mut self, commander: EchelonPolicy, manager: EchelonPolicy, operator: OperatorModel) -> Self {
        self.commander_policy = commander;
        self.manager_policy = manager;
        self.operator_model = operator;
        self
    }

    pub fn forest(&self) -> Option<&Forest> {
        self.forest.as_ref()
    }

    pub fn ensure_forest(&mut self, s: &GameState) -> Result<&Forest, HierarchyError> {
        if self.forest.is_none() {
            self.forest = Some(Forest::build(s, self.faction)?);
        }
        Ok(self.forest.as_ref().expect("just built"))
    }

    pub fn take_assignments(&mut self) -> Vec<Assignment> {
        std::mem::take(&mut self.pending)
    }

    fn forest_ref(&self) -> &Forest {
        self.forest.as_ref().expect("forest built before use")
    }

    fn operating_of(&self, s: &GameState, manager: u32) -> AreaRect {
        self.forest_ref()
            .manager(manager)
            .and_then(|m| m.operating)
            .filter(|_| self.cfg.use_commanders)
            .unwrap_or_else(|| s.dims.as_rect())
    }

    /// Commander decision for `unit`'s commander if it is due. Returns a
    /// request when that decision is external.
    pub fn step_commander(&mut self, s: &GameState, unit: UnitId) -> Result<Option<DecisionRequest>, PlayError> {
        self.ensure_forest(s)?;
        if !self.cfg.use_commanders {
            return Ok(None);
        }
        let Some(cid) = self.forest_ref().manager_of(unit).and_then(|m| m.commander) else {
            return Ok(None);
        };
        let c = self.forest_ref().commander(cid).expect("labelled commander");
        if !commander_due(s.phase, c.last_phase, self.cfg.commander_cadence)
            || self.forest_ref().commander_units(s, cid).is_empty()
        {
            return Ok(None);
        }
        let req = DecisionRequest {
            level: Echelon::Commander,
            id: cid,
        };
        if self.external == Some(req) {
            return Ok(Some(req));
        }
        let choice = self.choose(s, req)?;
        self.apply_decision(s, req, choice, Trigger::Cadence)?;
        Ok(None)
    }

    /// Manager whose decision is due before `unit` acts.
    pub fn manager_due(&self, s: &GameState, unit: UnitId) -> Option<u32> {
        let f = self.forest.as_ref()?;
        let m = f.manager_of(unit)?;
        manager_needs_decision(s, f, m.id).then_some(m.id)
    }

    /// Manager decision for `unit`'s manager if it is due.
    pub fn step_manager(&mut self, s: &GameState, unit: UnitId) -> Result<Option<DecisionRequest>, PlayError> {
        self.ensure_forest(s)?;
        let Some(mid) = self.manager_due(s, unit) else {
            return Ok(None);
        };
        let trigger = if self.forest_ref().manager(mid).and_then(|m| m.objective).is_some() {
            Trigger::Arrived
        } else {
            Trigger::NoArea
        };
        let op = self.operating_of(s, mid);
        let units = self.forest_ref().effective_units(s, mid);
        let c = centroid(&units).expect("effective units");
        let inside = op.contains(crate::hexgrid::nearest_hex(c));
        if !inside {
            let choice = cell_of(op, region_hex_near(op, c));
            let req = DecisionRequest {
                level: Echelon::Manager,
                id: mid,
            };
            self.apply_decision(s, req, choice, Trigger::AutoNearest)?;
            return Ok(None);
        }
        let req = DecisionRequest {
            level: Echelon::Manager,
            id: mid,
        };
        if self.external == Some(req) {
            return Ok(Some(req));
        }
        let choice = self.choose(s, req)?;
        self.apply_decision(s, req, choice, trigger)?;
        Ok(None)
    }

    /// Run every due decision before `unit` acts, stopping at an external one.
    pub fn prepare(&mut self, s: &GameState, unit: UnitId) -> Result<Option<DecisionRequest>, PlayError> {
        if let Some(r) = self.step_commander(s, unit)? {
            return Ok(Some(r));
        }
        self.step_manager(s, unit)
    }

    /// The trigger a pending external request would be recorded with.
    pub fn external_trigger(&self, req: DecisionRequest) -> Trigger {
        match req.level {
            Echelon::Commander => Trigger::Cadence,
            _ => {
                if self.forest_ref().manager(req.id).and_then(|m| m.objective).is_some() {
                    Trigger::Arrived
                } else {
                    Trigger::NoArea
                }
            }
        }
    }

    /// Assign the area for `choice` at the requested node.
    pub fn apply_decision(
        &mut self,
        s: &GameState,
        req: DecisionRequest,
        choice: usize,
        trigger: Trigger,
    ) -> Result<AreaRect, PlayError> {
        self.ensure_forest(s)?;
        let board = s.dims.as_rect();
        let area = match req.level {
            Echelon::Commander => {
                let area = make_area(board, choice, fitted_dim(board, self.cfg.operating_dim))?;
                let f = self.forest.as_mut().expect("forest");
                let managers = match f.commander_mut(req.id) {
                    Some(c) => {
                        c.operating = Some(area);
                        c.choice = Some(choice);
                        c.last_phase = Some(s.phase);
                        c.managers.clone()
                    }
                    None => return Err(HierarchyError::Labels(format!("no commander {}", req.id)).into()),
                };
                for mid in managers {
                    if let Some(m) = f.manager_mut(mid) {
                        m.operating = Some(area);
                        if m.objective.is_some_and(|o| !area.contains_rect(&o)) {
                            m.objective = None;
                            m.choice = None;
                        }
                    }
                }
                area
            }
            _ => {
                let op = self.operating_of(s, req.id);
                let area = make_area(op, choice, fitted_dim(op, self.cfg.objective_dim))?;
                let f = self.forest.as_mut().expect("forest");
                match f.manager_mut(req.id) {
                    Some(m) => {
                        m.objective = Some(area);
                        m.choice = Some(choice);
                    }
                    None => return Err(HierarchyError::Labels(format!("no manager {}", req.id)).into()),
                }
                area
            }
        };
        self.pending.push(Assignment {
            phase: s.phase,
            faction: self.faction,
            level: req.level,
            id: req.id,
            choice,
            area,
            trigger,
        });
        Ok(area)
    }

    /// Areas currently held by the other nodes at the same level.
    pub fn other_areas(&self, s: &GameState, req: DecisionRequest) -> Vec<AreaRect> {
        let f = self.forest_ref();
        match req.level {
            Echelon::Commander => f
                .commanders
                .iter()
                .filter(|c| c.id != req.id && !f.commander_units(s, c.id).is_empty())
                .filter_map(|c| c.operating)
                .collect(),
            _ => f
                .managers
                .iter()
                .filter(|m| m.id != req.id && !f.effective_units(s, m.id).is_empty())
                .filter_map(|m| m.objective)
                .collect(),
        }
    }

    /// Echelon observation for a decision node.
    pub fn observe(&self, s: &GameState, req: DecisionRequest) -> crate::observation::Tensor<f64> {
        let others = self.other_areas(s, req);
        match req.level {
            Echelon::Commander => build_commander_obs(s, self.faction, req.id, &others, &self.obs_cfg),
            _ => build_manager_obs(s, self.faction, req.id, self.operating_of(s, req.id), &others, &self.obs_cfg),
        }
    }

    fn scripted(&self, v: AreaVariant, s: &GameState, req: DecisionRequest) -> usize {
        let f = self.forest_ref();
        match req.level {
            Echelon::Commander => {
                let units = f.commander_units(s, req.id);
                let current = f.commander(req.id).and_then(|c| c.choice);
                scripted_area_choice(v, s, self.faction, s.dims.as_rect(), &units, current)
            }
            _ => {
                let units = f.effective_units(s, req.id);
                let current = f.manager(req.id).and_then(|m| m.choice);
                scripted_area_choice(v, s, self.faction, self.operating_of(s, req.id), &units, current)
            }
        }
    }

    fn choose(&mut self, s: &GameState, req: DecisionRequest) -> Result<usize, PlayError> {
        let policy = match req.level {
            Echelon::Commander => &self.commander_policy,
            _ => &self.manager_policy,
        };
        let reg = match policy {
            EchelonPolicy::Scripted(v) => return Ok(self.scripted(*v, s, req)),
            EchelonPolicy::Multi(m) => m,
        };
        let mut preds = Vec::with_capacity(reg.entries.len());
        for (v, p) in &reg.entries {
            let own = || {
                let mut c = self.clone();
                let pinned = EchelonPolicy::Scripted(*v);
                match req.level {
                    Echelon::Commander => c.commander_policy = pinned,
                    _ => c.manager_policy = pinned,
                }
                c.external = None;
                c.pending.clear();
                Controller::Hierarchy(Box::new(c))
            };
            preds.push(p.predict(s, self.faction, own, || self.observe(s, req))?);
        }
        let i = argmax_first(&preds).unwrap_or(0);
        let v = reg.entries[i].0;
        let policy = match req.level {
            Echelon::Commander => &mut self.commander_policy,
            _ => &mut self.manager_policy,
        };
        if let EchelonPolicy::Multi(m) = policy {
            m.usage.counts[i] += 1;
        }
        Ok(self.scripted(v, s, req))
    }

    /// Move module outside the objective area, fight module inside it.
    pub fn operator_action(&self, s: &GameState, unit: UnitId, rng: &mut GameRng) -> Action {
        let Some(u) = s.unit(unit) else {
            return Action::pass(unit);
        };
        let area = self
            .forest
            .as_ref()
            .and_then(|f| f.manager_of(unit))
            .and_then(|m| m.objective);
        match area {
            None => self.operator_model.decide(&StateView::full(s), unit, rng),
            Some(a) if a.contains(u.pos) => self.operator_model.decide(&cull_to_area(s, a), unit, rng),
            Some(a) => {
                let full = StateView::full(s);
                choose_attack(&full, u, rng).unwrap_or_else(|| move_toward(&full, u, a.nearest_hex_to(u.pos)))
            }
        }
    }

    pub fn act(&mut self, s: &GameState, unit: UnitId, rng: &mut GameRng) -> Result<Action, PlayError> {
        if let Some(req) = self.prepare(s, unit)? {
            return Err(PlayError::ExternalDecision(req));
        }
        Ok(self.operator_action(s, unit, rng))
    }

    pub fn usage(&self) -> Vec<(Echelon, Usage)> {
        let mut out = Vec::new();
        if let Some(u) = self.commander_policy.usage() {
            out.push((Echelon::Commander, u.clone()));
        }
        if let Some(u) = self.manager_policy.usage() {
            out.push((Echelon::Manager, u.clone()));
        }
        out
    }
}
