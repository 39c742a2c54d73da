//! Scripted operator behavior models.
//!
//! Every model attacks first when an enemy is adjacent. Movement picks the
//! minimum-score hex among the current hex and its free neighbors, taking
//! the first minimum in candidate order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Action, Faction, GameRng, Unit, UnitId};
use crate::hexgrid::{euclid_dist, neighbors_by_direction, HexCoord};
use crate::observation::StateView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Posture {
    Offensive,
    Defensive,
}

/// Offensive iff own visible combat power is at least the opponent's.
pub fn posture(view: &StateView, faction: Faction) -> Posture {
    let (mut own, mut other) = (0.0, 0.0);
    for u in view.units() {
        if u.faction == faction {
            own += u.strength;
        } else {
            other += u.strength;
        }
    }
    if own >= other {
        Posture::Offensive
    } else {
        Posture::Defensive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurtPlusWeights {
    pub enemy: f64,
    pub city: f64,
    pub friendly: f64,
    pub surround: f64,
}

impl Default for BurtPlusWeights {
    fn default() -> Self {
        Self {
            enemy: 1.0,
            city: 1.0,
            friendly: 0.5,
            surround: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorModel {
    PassAgg,
    Pass,
    Agg,
    BurtPlus(BurtPlusWeights),
    City,
    Killer,
    Shootback,
    Random,
}

impl OperatorModel {
    pub const NAMES: [&'static str; 8] = [
        "pass_agg",
        "pass",
        "agg",
        "burt_plus",
        "city",
        "killer",
        "shootback",
        "random",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OperatorModel::PassAgg => "pass_agg",
            OperatorModel::Pass => "pass",
            OperatorModel::Agg => "agg",
            OperatorModel::BurtPlus(_) => "burt_plus",
            OperatorModel::City => "city",
            OperatorModel::Killer => "killer",
            OperatorModel::Shootback => "shootback",
            OperatorModel::Random => "random",
        }
    }

    pub fn decide(&self, view: &StateView, unit: UnitId, rng: &mut GameRng) -> Action {
        let Some(u) = view.state.unit(unit) else {
            return Action::pass(unit);
        };
        match self {
            OperatorModel::PassAgg => passagg_decide(view, u, rng, None),
            OperatorModel::Pass => passagg_decide(view, u, rng, Some(Posture::Defensive)),
            OperatorModel::Agg => passagg_decide(view, u, rng, Some(Posture::Offensive)),
            OperatorModel::BurtPlus(w) => burtplus_decide(view, u, w),
            OperatorModel::City => city_decide(view, u, rng),
            OperatorModel::Killer => killer_decide(view, u, rng),
            OperatorModel::Shootback => shootback_decide(view, u, rng),
            OperatorModel::Random => random_decide(view, u, rng),
        }
    }
}

impl fmt::Display for OperatorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "pass_agg" => OperatorModel::PassAgg,
            "pass" => OperatorModel::Pass,
            "agg" => OperatorModel::Agg,
            "burt_plus" => OperatorModel::BurtPlus(BurtPlusWeights::default()),
            "city" => OperatorModel::City,
            "killer" => OperatorModel::Killer,
            "shootback" => OperatorModel::Shootback,
            "random" => OperatorModel::Random,
            other => return Err(format!("unknown operator model `{other}`")),
        })
    }
}

/// Uniformly chosen adjacent enemy, lowest id in deterministic mode.
pub fn choose_attack(view: &StateView, u: &Unit, rng: &mut GameRng) -> Option<Action> {
    let targets = view.adjacent_enemies(u);
    if targets.is_empty() {
        return None;
    }
    let t = if view.state.config.deterministic {
        targets.iter().map(|t| t.id).min()?
    } else {
        targets[rng.random_range(0..targets.len())].id
    };
    Some(Action::attack(u.id, t))
}

/// Current hex followed by unoccupied neighbors in direction order.
pub fn candidate_hexes(view: &StateView, u: &Unit) -> Vec<HexCoord> {
    let mut out = vec![u.pos];
    for n in neighbors_by_direction(u.pos, view.state.dims).into_iter().flatten() {
        if view.state.unit_at(n).is_none() {
            out.push(n);
        }
    }
    out
}

/// Action toward the first candidate minimizing `score`.
pub fn move_by_score(view: &StateView, u: &Unit, mut score: impl FnMut(HexCoord) -> f64) -> Action {
    let mut best = u.pos;
    let mut best_s = f64::INFINITY;
    for h in candidate_hexes(view, u) {
        let s = score(h);
        if s < best_s {
            best_s = s;
            best = h;
        }
    }
    if best == u.pos {
        Action::pass(u.id)
    } else {
        Action::move_to(u.id, best)
    }
}

/// Step toward `target` by Euclidean distance.
pub fn move_toward(view: &StateView, u: &Unit, target: HexCoord) -> Action {
    move_by_score(view, u, |h| euclid_dist(h, target))
}

fn nearest_dist<'a>(h: HexCoord, it: impl Iterator<Item = HexCoord> + 'a) -> Option<f64> {
    it.map(|o| euclid_dist::<f64>(h, o)).reduce(f64::min)
}

/// Nearest of `it` to `from`, first on ties.
pub fn nearest_of(from: HexCoord, it: impl Iterator<Item = HexCoord>) -> Option<HexCoord> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for h in it {
        let d: f64 = euclid_dist(from, h);
        if d < best_d {
            best_d = d;
            best = Some(h);
        }
    }
    best
}

pub fn passagg_decide(view: &StateView, u: &Unit, rng: &mut GameRng, pinned: Option<Posture>) -> Action {
    if let Some(a) = choose_attack(view, u, rng) {
        return a;
    }
    let p = pinned.unwrap_or_else(|| posture(view, u.faction));
    let enemies: Vec<HexCoord> = view.enemies_of(u.faction).map(|e| e.pos).collect();
    let cities: Vec<HexCoord> = view.cities().map(|(h, _)| h).collect();
    move_by_score(view, u, |h| {
        let mut s = nearest_dist(h, cities.iter().copied()).unwrap_or(0.0);
        if p == Posture::Offensive {
            s += nearest_dist(h, enemies.iter().copied()).unwrap_or(0.0);
        }
        s
    })
}

pub fn burtplus_decide(view: &StateView, u: &Unit, w: &BurtPlusWeights) -> Action {
    let weakest = view
        .adjacent_enemies(u)
        .into_iter()
        .min_by(|a, b| a.strength.total_cmp(&b.strength).then(a.id.cmp(&b.id)));
    if let Some(t) = weakest {
        return Action::attack(u.id, t.id);
    }
    let offensive = posture(view, u.faction) == Posture::Offensive;
    let enemies: Vec<HexCoord> = view.enemies_of(u.faction).map(|e| e.pos).collect();
    let friends: Vec<HexCoord> = view
        .friends_of(u.faction)
        .filter(|f| f.id != u.id)
        .map(|f| f.pos)
        .collect();
    let cities: Vec<HexCoord> = view.cities().map(|(h, _)| h).collect();
    let dims = view.state.dims;
    move_by_score(view, u, |h| {
        let mut s = w.city * nearest_dist(h, cities.iter().copied()).unwrap_or(0.0)
            + w.friendly * nearest_dist(h, friends.iter().copied()).unwrap_or(0.0);
        if offensive {
            s += w.enemy * nearest_dist(h, enemies.iter().copied()).unwrap_or(0.0);
        }
        let flank = neighbors_by_direction(h, dims)
            .into_iter()
            .flatten()
            .filter(|n| {
                view.state
                    .unit_at(*n)
                    .is_some_and(|o| o.faction != u.faction)
            })
            .count();
        s + w.surround * flank as f64
    })
}

pub fn city_decide(view: &StateView, u: &Unit, rng: &mut GameRng) -> Action {
    if let Some(a) = choose_attack(view, u, rng) {
        return a;
    }
    if view.state.is_urban(u.pos) {
        return Action::pass(u.id);
    }
    match nearest_of(u.pos, view.cities().map(|(h, _)| h)) {
        Some(c) => move_toward(view, u, c),
        None => Action::pass(u.id),
    }
}

pub fn killer_decide(view: &StateView, u: &Unit, rng: &mut GameRng) -> Action {
    if let Some(a) = choose_attack(view, u, rng) {
        return a;
    }
    let enemies: Vec<HexCoord> = view.enemies_of(u.faction).map(|e| e.pos).collect();
    if enemies.is_empty() {
        return Action::pass(u.id);
    }
    move_by_score(view, u, |h| nearest_dist(h, enemies.iter().copied()).unwrap_or(0.0))
}

pub fn shootback_decide(view: &StateView, u: &Unit, rng: &mut GameRng) -> Action {
    choose_attack(view, u, rng).unwrap_or_else(|| Action::pass(u.id))
}

pub fn random_decide(view: &StateView, u: &Unit, rng: &mut GameRng) -> Action {
    let Ok(legal) = view.state.legal_actions(u.id) else {
        return Action::pass(u.id);
    };
    if view.state.config.deterministic {
        legal[0]
    } else {
        legal[rng.random_range(0..legal.len())]
    }
}
