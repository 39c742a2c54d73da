//! Game rules: units, legal actions, movement, combat, city control,
//! phase progression and scoring.
//!
//! A phase is one full turn for one faction. Blue moves in even phases,
//! red in odd ones. Within a phase units act once each in ascending id
//! order. City points (`24 / n_cities` per owned city) are credited to
//! whichever faction owns the city when any phase ends.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hexgrid::{are_adjacent, neighbors_by_direction, BoardDims, HexCoord};

pub type UnitId = u32;
pub type GameRng = ChaCha8Rng;

/// Units whose strength falls below this are removed.
pub const REMOVAL_THRESHOLD: f64 = 50.0;
pub const INITIAL_STRENGTH: f64 = 100.0;
/// City points shared among all cities each phase.
pub const CITY_POINTS_PER_PHASE: f64 = 24.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("unknown unit {0}")]
    UnknownUnit(UnitId),
    #[error("unit {0} is not on move")]
    NotOnMove(UnitId),
    #[error("illegal action {0:?}")]
    IllegalAction(Action),
    #[error("game is over")]
    GameOver,
    #[error("invalid attack: {0}")]
    InvalidAttack(String),
    #[error("invalid game setup: {0}")]
    InvalidSetup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Faction {
    Blue,
    Red,
}

impl Faction {
    pub fn opponent(self) -> Faction {
        match self {
            Faction::Blue => Faction::Red,
            Faction::Red => Faction::Blue,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Faction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Faction::Blue => "blue",
            Faction::Red => "red",
        })
    }
}

impl std::str::FromStr for Faction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "blue" => Ok(Faction::Blue),
            "red" => Ok(Faction::Red),
            other => Err(format!("unknown faction '{other}'")),
        }
    }
}

/// Unit type. Only infantry movement/combat is modelled; the other tags
/// exist so observations have their one-hot channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    #[default]
    Infantry,
    Mechanized,
    Armor,
    Artillery,
}

impl UnitKind {
    pub const COUNT: usize = 4;
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terrain {
    #[default]
    Clear,
    Urban,
    Rough,
    Marsh,
    Water,
}

impl Terrain {
    pub const COUNT: usize = 5;
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: UnitId,
    pub faction: Faction,
    pub kind: UnitKind,
    pub strength: f64,
    pub pos: HexCoord,
    pub can_move: bool,
    pub manager: Option<u32>,
    pub commander: Option<u32>,
}

impl Unit {
    pub fn new(id: UnitId, faction: Faction, pos: HexCoord) -> Self {
        Self {
            id,
            faction,
            kind: UnitKind::Infantry,
            strength: INITIAL_STRENGTH,
            pos,
            can_move: true,
            manager: None,
            commander: None,
        }
    }

    pub fn with_strength(mut self, strength: f64) -> Self {
        self.strength = strength;
        self
    }

    pub fn with_group(mut self, manager: u32, commander: u32) -> Self {
        self.manager = Some(manager);
        self.commander = Some(commander);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub blue_city: f64,
    pub blue_combat: f64,
    pub red_city: f64,
    pub red_combat: f64,
}

impl ScoreBreakdown {
    /// Blue-perspective total.
    pub fn total(&self) -> f64 {
        self.blue_city + self.blue_combat - (self.red_city + self.red_combat)
    }

    fn add_city(&mut self, f: Faction, pts: f64) {
        match f {
            Faction::Blue => self.blue_city += pts,
            Faction::Red => self.red_city += pts,
        }
    }

    fn add_combat(&mut self, f: Faction, pts: f64) {
        match f {
            Faction::Blue => self.blue_combat += pts,
            Faction::Red => self.red_combat += pts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionKind {
    Pass,
    MoveTo { to: HexCoord },
    Attack { target: UnitId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub unit: UnitId,
    #[serde(flatten)]
    pub kind: ActionKind,
}

impl Action {
    pub fn pass(unit: UnitId) -> Self {
        Self {
            unit,
            kind: ActionKind::Pass,
        }
    }

    pub fn move_to(unit: UnitId, to: HexCoord) -> Self {
        Self {
            unit,
            kind: ActionKind::MoveTo { to },
        }
    }

    pub fn attack(unit: UnitId, target: UnitId) -> Self {
        Self {
            unit,
            kind: ActionKind::Attack { target },
        }
    }

    pub fn is_attack(&self) -> bool {
        matches!(self.kind, ActionKind::Attack { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Moved {
        unit: UnitId,
        from: HexCoord,
        to: HexCoord,
    },
    Damaged {
        attacker: UnitId,
        target: UnitId,
        amount: f64,
    },
    Removed {
        unit: UnitId,
        by: UnitId,
        awarded: f64,
    },
    CityCaptured {
        hex: HexCoord,
        unit: UnitId,
        owner: Faction,
    },
    PhaseEnded {
        phase: u32,
        blue_points: f64,
        red_points: f64,
    },
    GameEnded {
        score: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Strength removed by one attack.
    pub damage: f64,
    /// End the game as soon as either roster is empty.
    pub early_termination: bool,
    /// Replace uniform random choices with lowest-id choices.
    pub deterministic: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            damage: 10.0,
            early_termination: true,
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameState {
    pub dims: BoardDims,
    terrain: Vec<Terrain>,
    /// Active roster, sorted by id.
    units: Vec<Unit>,
    removed: Vec<Unit>,
    city_owner: BTreeMap<HexCoord, Option<Faction>>,
    /// Unit that last captured each city.
    city_captor: BTreeMap<HexCoord, UnitId>,
    pub phase: u32,
    pub num_phases: u32,
    pub on_move: Faction,
    pub score: ScoreBreakdown,
    pub rng: GameRng,
    pub config: EngineConfig,
    initial_strength: [f64; 2],
    initial_units: [usize; 2],
}

impl GameState {
    pub fn new(
        dims: BoardDims,
        urban: &[HexCoord],
        mut units: Vec<Unit>,
        num_phases: u32,
        config: EngineConfig,
        seed: u64,
    ) -> Result<Self, EngineError> {
        if dims.n_rows < 1 || dims.n_cols < 1 {
            return Err(EngineError::InvalidSetup(format!("bad board {dims:?}")));
        }
        units.sort_by_key(|u| u.id);
        for w in units.windows(2) {
            if w[0].id == w[1].id {
                return Err(EngineError::InvalidSetup(format!("duplicate unit id {}", w[0].id)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for u in &units {
            if !dims.contains(u.pos) {
                return Err(EngineError::InvalidSetup(format!("unit {} off board at {}", u.id, u.pos)));
            }
            if !seen.insert(u.pos) {
                return Err(EngineError::InvalidSetup(format!("two units at {}", u.pos)));
            }
            if u.strength < REMOVAL_THRESHOLD {
                return Err(EngineError::InvalidSetup(format!("unit {} starts below {REMOVAL_THRESHOLD}", u.id)));
            }
        }
        let mut terrain = vec![Terrain::Clear; dims.hex_count()];
        let mut city_owner = BTreeMap::new();
        for &c in urban {
            if !dims.contains(c) {
                return Err(EngineError::InvalidSetup(format!("city off board at {c}")));
            }
            terrain[dims.index_of(c)] = Terrain::Urban;
            city_owner.insert(c, None);
        }
        let mut initial_strength = [0.0; 2];
        let mut initial_units = [0; 2];
        for u in &mut units {
            u.can_move = u.faction == Faction::Blue;
            initial_strength[u.faction.index()] += u.strength;
            initial_units[u.faction.index()] += 1;
        }
        let mut s = Self {
            dims,
            terrain,
            units,
            removed: Vec::new(),
            city_owner,
            city_captor: BTreeMap::new(),
            phase: 0,
            num_phases,
            on_move: Faction::Blue,
            score: ScoreBreakdown::default(),
            rng: GameRng::seed_from_u64(seed),
            config,
            initial_strength,
            initial_units,
        };
        let mut sink = Vec::new();
        s.settle(&mut sink);
        Ok(s)
    }

    pub fn terrain_at(&self, c: HexCoord) -> Terrain {
        self.terrain[self.dims.index_of(c)]
    }

    pub fn is_urban(&self, c: HexCoord) -> bool {
        self.dims.contains(c) && self.terrain_at(c) == Terrain::Urban
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn removed_units(&self) -> &[Unit] {
        &self.removed
    }

    pub fn faction_units(&self, f: Faction) -> impl Iterator<Item = &Unit> + '_ {
        self.units.iter().filter(move |u| u.faction == f)
    }

    pub fn unit(&self, id: UnitId) -> Option<&Unit> {
        self.units
            .binary_search_by_key(&id, |u| u.id)
            .ok()
            .map(|i| &self.units[i])
    }

    pub fn unit_at(&self, c: HexCoord) -> Option<&Unit> {
        self.units.iter().find(|u| u.pos == c)
    }

    pub fn cities(&self) -> &BTreeMap<HexCoord, Option<Faction>> {
        &self.city_owner
    }

    pub fn city_captor(&self, c: HexCoord) -> Option<UnitId> {
        self.city_captor.get(&c).copied()
    }

    pub fn n_cities(&self) -> usize {
        self.city_owner.len()
    }

    pub fn initial_strength(&self, f: Faction) -> f64 {
        self.initial_strength[f.index()]
    }

    pub fn initial_unit_count(&self, f: Faction) -> usize {
        self.initial_units[f.index()]
    }

    pub fn game_score(&self) -> f64 {
        self.score.total()
    }

    /// Sum of remaining strength over the faction's active units.
    pub fn combat_power(&self, f: Faction) -> f64 {
        self.faction_units(f).map(|u| u.strength).sum()
    }

    pub fn is_terminal(&self) -> bool {
        if self.phase >= self.num_phases {
            return true;
        }
        self.config.early_termination
            && (self.faction_units(Faction::Blue).next().is_none()
                || self.faction_units(Faction::Red).next().is_none())
    }

    /// The unit whose turn it is: lowest-id unmoved unit of the faction on move.
    pub fn current_unit(&self) -> Option<UnitId> {
        if self.is_terminal() {
            return None;
        }
        self.units
            .iter()
            .find(|u| u.faction == self.on_move && u.can_move)
            .map(|u| u.id)
    }

    pub fn legal_actions(&self, id: UnitId) -> Result<Vec<Action>, EngineError> {
        if self.is_terminal() {
            return Err(EngineError::GameOver);
        }
        let u = self.unit(id).ok_or(EngineError::UnknownUnit(id))?;
        if u.faction != self.on_move || !u.can_move {
            return Err(EngineError::NotOnMove(id));
        }
        let mut out = Vec::with_capacity(7);
        for n in neighbors_by_direction(u.pos, self.dims).into_iter().flatten() {
            match self.unit_at(n) {
                None => out.push(Action::move_to(id, n)),
                Some(o) if o.faction != u.faction => out.push(Action::attack(id, o.id)),
                Some(_) => {}
            }
        }
        out.push(Action::pass(id));
        Ok(out)
    }

    pub fn is_legal(&self, a: &Action) -> bool {
        self.legal_actions(a.unit)
            .map(|l| l.contains(a))
            .unwrap_or(false)
    }

    /// Apply the current unit's action. Illegal actions leave the state
    /// untouched.
    pub fn apply_action(&mut self, a: Action) -> Result<Vec<Event>, EngineError> {
        let current = self.current_unit().ok_or(EngineError::GameOver)?;
        if a.unit != current {
            return Err(EngineError::NotOnMove(a.unit));
        }
        if !self.is_legal(&a) {
            return Err(EngineError::IllegalAction(a));
        }
        let mut events = Vec::new();
        match a.kind {
            ActionKind::Pass => {}
            ActionKind::MoveTo { to } => self.move_unit(a.unit, to, &mut events),
            ActionKind::Attack { target } => {
                events.extend(self.resolve_attack(a.unit, target)?);
            }
        }
        if let Some(u) = self.unit_mut(a.unit) {
            u.can_move = false;
        }
        self.settle(&mut events);
        if self.is_terminal() {
            events.push(Event::GameEnded {
                score: self.game_score(),
            });
        }
        Ok(events)
    }

    /// Non-mutating variant of [`GameState::apply_action`].
    pub fn applied(&self, a: Action) -> Result<(GameState, Vec<Event>), EngineError> {
        let mut next = self.clone();
        let ev = next.apply_action(a)?;
        Ok((next, ev))
    }

    /// Damage `defender`; remove it if it drops below the threshold. The
    /// attacker's faction is credited with damage dealt plus, on removal,
    /// the defender's remaining strength.
    pub fn resolve_attack(
        &mut self,
        attacker: UnitId,
        defender: UnitId,
    ) -> Result<Vec<Event>, EngineError> {
        let a = self.unit(attacker).ok_or(EngineError::UnknownUnit(attacker))?.clone();
        let d = self.unit(defender).ok_or(EngineError::UnknownUnit(defender))?.clone();
        if a.faction == d.faction {
            return Err(EngineError::InvalidAttack(format!("{attacker} and {defender} are friendly")));
        }
        if !are_adjacent(a.pos, d.pos) {
            return Err(EngineError::InvalidAttack(format!("{attacker} not adjacent to {defender}")));
        }
        let dealt = self.config.damage.min(d.strength);
        let remaining = d.strength - dealt;
        let mut events = vec![Event::Damaged {
            attacker,
            target: defender,
            amount: dealt,
        }];
        self.score.add_combat(a.faction, dealt);
        if remaining < REMOVAL_THRESHOLD {
            self.score.add_combat(a.faction, remaining);
            let idx = self.units.iter().position(|u| u.id == defender).expect("defender present");
            let mut gone = self.units.remove(idx);
            gone.strength = remaining;
            self.removed.push(gone);
            events.push(Event::Removed {
                unit: defender,
                by: attacker,
                awarded: remaining,
            });
        } else if let Some(u) = self.unit_mut(defender) {
            u.strength = remaining;
        }
        Ok(events)
    }

    fn unit_mut(&mut self, id: UnitId) -> Option<&mut Unit> {
        self.units
            .binary_search_by_key(&id, |u| u.id)
            .ok()
            .map(|i| &mut self.units[i])
    }

    fn move_unit(&mut self, id: UnitId, to: HexCoord, events: &mut Vec<Event>) {
        let (from, faction) = {
            let u = self.unit_mut(id).expect("validated");
            let from = u.pos;
            u.pos = to;
            (from, u.faction)
        };
        events.push(Event::Moved { unit: id, from, to });
        if let Some(owner) = self.city_owner.get_mut(&to) {
            self.city_captor.insert(to, id);
            if *owner != Some(faction) {
                *owner = Some(faction);
                events.push(Event::CityCaptured {
                    hex: to,
                    unit: id,
                    owner: faction,
                });
            }
        }
    }

    /// End phases while the faction on move has nobody left to act.
    fn settle(&mut self, events: &mut Vec<Event>) {
        while !self.is_terminal()
            && !self.units.iter().any(|u| u.faction == self.on_move && u.can_move)
        {
            self.end_phase(events);
        }
    }

    fn end_phase(&mut self, events: &mut Vec<Event>) {
        let pts = if self.city_owner.is_empty() {
            0.0
        } else {
            CITY_POINTS_PER_PHASE / self.city_owner.len() as f64
        };
        let (mut blue, mut red) = (0.0, 0.0);
        for owner in self.city_owner.values().flatten() {
            match owner {
                Faction::Blue => blue += pts,
                Faction::Red => red += pts,
            }
        }
        self.score.add_city(Faction::Blue, blue);
        self.score.add_city(Faction::Red, red);
        events.push(Event::PhaseEnded {
            phase: self.phase,
            blue_points: blue,
            red_points: red,
        });
        self.phase += 1;
        self.on_move = self.on_move.opponent();
        let next = self.on_move;
        for u in &mut self.units {
            u.can_move = u.faction == next;
        }
    }
}
