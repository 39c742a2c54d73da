//! Reset/step environment facade for one exposed echelon.
//!
//! Blue is the trained faction. At the operator echelon every blue unit
//! decision is exposed. At the manager or commander echelon one node of a
//! scripted blue hierarchy is exposed and everything else runs internally.
//!
//! Actions: operator `0` is Pass and `1..=6` step in direction order
//! E, NE, NW, W, SW, SE (attacking if an enemy stands there); manager and
//! commander actions `0..=8` index the 3x3 grid row-major.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::OperatorModel;
use crate::engine::{Action, EngineConfig, EngineError, Event, Faction, GameState, UnitId};
use crate::hexgrid::{step, AreaRect, Direction};
use crate::hierarchy::{AreaVariant, DecisionRequest, EchelonPolicy, HierarchyConfig, HierarchyController, Trigger};
use crate::multimodel::{
    reward_boron, reward_manager, reward_variant, Echelon, IntervalAccounting, RewardError, RewardSpec,
    VariantWeights,
};
use crate::observation::{build_global, localized_decay, DecayParams, Tensor};
use crate::play::{Controller, PlayError, PolicySpec, StepRecord};
use crate::replay::{Replay, ReplayHeader};
use crate::scenario::{ScenarioError, ScenarioParams, ScenarioStream};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Play(#[from] PlayError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("action {action} outside 0..{n}")]
    OutOfRange { action: usize, n: usize },
    #[error("illegal action {0}")]
    Illegal(usize),
    #[error("step called before reset")]
    NotReset,
    #[error("episode is over; call reset")]
    EpisodeDone,
    #[error("env config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardKind {
    /// Raw score delta over the interval.
    Raw,
    /// Force-preservation scaled reward for the echelon.
    Engineered,
    /// A named variant preset.
    Variant { preset: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub echelon: Echelon,
    pub scenario: ScenarioParams,
    pub seed: u64,
    pub cycle: u32,
    pub adversary: PolicySpec,
    pub reward: RewardKind,
    pub reward_spec: RewardSpec,
    /// Operator model under a hierarchy.
    pub operator_model: String,
    pub manager_policy: String,
    pub commander_policy: String,
    pub hierarchy: HierarchyConfig,
    pub engine: EngineConfig,
    /// Reject illegal actions instead of substituting Pass.
    pub strict: bool,
}

impl EnvConfig {
    pub fn new(echelon: Echelon, scenario: ScenarioParams) -> Self {
        Self {
            echelon,
            scenario,
            seed: 0,
            cycle: 0,
            adversary: PolicySpec::operator("pass_agg"),
            reward: RewardKind::Engineered,
            reward_spec: RewardSpec::default(),
            operator_model: "pass_agg".into(),
            manager_policy: "balanced".into(),
            commander_policy: "balanced".into(),
            hierarchy: HierarchyConfig::default(),
            engine: EngineConfig::default(),
            strict: false,
        }
    }

    pub fn operator() -> Self {
        Self::new(Echelon::Operator, ScenarioParams::standard(5))
    }

    pub fn manager() -> Self {
        Self {
            hierarchy: HierarchyConfig {
                use_commanders: false,
                ..HierarchyConfig::default()
            },
            ..Self::new(Echelon::Manager, ScenarioParams::manager())
        }
    }

    pub fn commander() -> Self {
        Self::new(Echelon::Commander, ScenarioParams::hrl())
    }

    pub fn deterministic(mut self, on: bool) -> Self {
        self.engine.deterministic = on;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Blue score change since the previous step (the first step counts from 0).
    pub raw_delta: f64,
    pub phase: u32,
    /// Exposed decisions taken this episode, including this one.
    pub decisions: u64,
    /// Unit actions applied during the interval.
    pub unit_actions: u64,
    pub illegal: bool,
    pub trigger: Option<Trigger>,
    pub duplicate: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Tensor<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    Unit(UnitId),
    Node(DecisionRequest),
    None,
}

#[derive(Debug, Clone)]
struct Episode {
    state: GameState,
    blue: Option<HierarchyController>,
    red: Controller,
    factions: BTreeMap<UnitId, Faction>,
    pending: Pending,
    /// The exposed node's operators act without re-checking decisions.
    resume_operator: bool,
    obs: Tensor<f64>,
    decisions: u64,
    score_mark: f64,
    node_strength0: f64,
    acc: IntervalAccounting,
    unit_actions: u64,
    replay: Replay,
}

/// Environment over a scenario stream.
#[derive(Debug, Clone)]
pub struct HexEnv {
    pub cfg: EnvConfig,
    stream: ScenarioStream,
    episodes: u64,
    ep: Option<Episode>,
    variant: Option<VariantWeights>,
}

impl HexEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.operator_model.parse::<OperatorModel>().map_err(EnvError::Config)?;
        cfg.manager_policy.parse::<AreaVariant>().map_err(EnvError::Config)?;
        cfg.commander_policy.parse::<AreaVariant>().map_err(EnvError::Config)?;
        cfg.adversary.build(Faction::Red, std::path::Path::new(""))?;
        let variant = match &cfg.reward {
            RewardKind::Variant { preset } => Some(
                VariantWeights::preset(preset).ok_or_else(|| EnvError::Config(format!("unknown preset {preset}")))?,
            ),
            _ => None,
        };
        let stream = ScenarioStream::new(cfg.seed, cfg.cycle, cfg.scenario)?;
        Ok(Self {
            cfg,
            stream,
            episodes: 0,
            ep: None,
            variant,
        })
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        self.cfg.echelon.obs_shape()
    }

    pub fn n_actions(&self) -> usize {
        self.cfg.echelon.n_actions()
    }

    pub fn state(&self) -> Option<&GameState> {
        self.ep.as_ref().map(|e| &e.state)
    }

    pub fn replay(&self) -> Option<&Replay> {
        self.ep.as_ref().map(|e| &e.replay)
    }

    pub fn is_done(&self) -> bool {
        self.ep.as_ref().is_none_or(|e| e.pending == Pending::None)
    }

    /// Start the next scenario and run to the first exposed decision.
    pub fn reset(&mut self) -> Result<Tensor<f64>, EnvError> {
        let index = self.episodes;
        self.episodes += 1;
        let spec = self.stream.draw(index)?;
        let seed = spec.seed_used;
        let state = spec.to_state(self.cfg.engine, seed)?;
        let red = self.cfg.adversary.build(Faction::Red, std::path::Path::new(""))?;
        let factions = spec.units.iter().map(|u| (u.id, u.faction)).collect();
        let blue = match self.cfg.echelon {
            Echelon::Operator => None,
            level => {
                let mut h = HierarchyController::new(Faction::Blue, self.cfg.hierarchy).with_policies(
                    EchelonPolicy::Scripted(self.cfg.commander_policy.parse().map_err(EnvError::Config)?),
                    EchelonPolicy::Scripted(self.cfg.manager_policy.parse().map_err(EnvError::Config)?),
                    self.cfg.operator_model.parse().map_err(EnvError::Config)?,
                );
                let f = h.ensure_forest(&state).map_err(PlayError::from)?;
                let id = match level {
                    Echelon::Commander if self.cfg.hierarchy.use_commanders => f.commanders.first().map(|c| c.id),
                    Echelon::Commander => {
                        return Err(EnvError::Config("commander echelon needs use_commanders".into()))
                    }
                    _ => f.managers.first().map(|m| m.id),
                };
                let id = id.ok_or_else(|| EnvError::Config("no blue node to expose".into()))?;
                h.external = Some(DecisionRequest { level, id });
                Some(h)
            }
        };
        let header = ReplayHeader::new(spec, self.cfg.engine, seed, &self.blue_name(), &red.name());
        let mut ep = Episode {
            obs: Tensor::zeros(0, 0, 0),
            state,
            blue,
            red,
            factions,
            pending: Pending::None,
            resume_operator: false,
            decisions: 0,
            score_mark: 0.0,
            node_strength0: 0.0,
            acc: IntervalAccounting::default(),
            unit_actions: 0,
            replay: Replay::new(header),
        };
        ep.node_strength0 = ep.node_strength();
        let [c, r, w] = self.cfg.echelon.obs_shape();
        ep.obs = Tensor::zeros(c, r, w);
        ep.advance()?;
        ep.acc = IntervalAccounting::default();
        ep.unit_actions = 0;
        if ep.pending != Pending::None {
            ep.obs = ep.observe();
        }
        let obs = ep.obs.clone();
        self.ep = Some(ep);
        Ok(obs)
    }

    fn blue_name(&self) -> String {
        match self.cfg.echelon {
            Echelon::Operator => "external".into(),
            _ => format!("hierarchy[{}]+external", self.cfg.operator_model),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let n = self.n_actions();
        if action >= n {
            return Err(EnvError::OutOfRange { action, n });
        }
        let strict = self.cfg.strict;
        let ep = self.ep.as_mut().ok_or(EnvError::NotReset)?;
        let mut info = StepInfo::default();
        match ep.pending {
            Pending::None => return Err(EnvError::EpisodeDone),
            Pending::Unit(id) => {
                let a = match ep.operator_action(id, action) {
                    Some(a) => a,
                    None if strict => return Err(EnvError::Illegal(action)),
                    None => {
                        info.illegal = true;
                        Action::pass(id)
                    }
                };
                ep.apply(a, Vec::new())?;
            }
            Pending::Node(req) => {
                let h = ep.blue.as_mut().expect("hierarchy present");
                let trigger = h.external_trigger(req);
                let area = h.apply_decision(&ep.state, req, action, trigger)?;
                info.trigger = Some(trigger);
                info.duplicate = ep.is_duplicate(req, area);
                if req.level == Echelon::Commander {
                    let h = ep.blue.as_mut().expect("hierarchy present");
                    let unit = ep.state.current_unit().expect("pending implies a unit on move");
                    h.step_manager(&ep.state, unit)?;
                }
                ep.resume_operator = true;
            }
        }
        ep.decisions += 1;
        ep.advance()?;
        let done = ep.pending == Pending::None;
        if done {
            let s = &ep.state;
            ep.acc.eliminated_enemy = s.faction_units(Faction::Red).next().is_none();
            ep.acc.holds_all_cities = s.n_cities() > 0 && s.cities().values().all(|o| *o == Some(Faction::Blue));
        } else {
            ep.obs = ep.observe();
        }
        let now = ep.state.game_score();
        info.raw_delta = now - ep.score_mark;
        ep.score_mark = now;
        info.phase = ep.state.phase;
        info.decisions = ep.decisions;
        info.unit_actions = ep.unit_actions;

        let spec = &self.cfg.reward_spec;
        let (s_c, s_o) = match self.cfg.echelon {
            Echelon::Operator => (ep.state.combat_power(Faction::Blue), ep.state.initial_strength(Faction::Blue)),
            _ => (ep.node_strength(), ep.node_strength0),
        };
        let reward = match (&self.cfg.reward, self.cfg.echelon) {
            (RewardKind::Raw, _) => info.raw_delta,
            (RewardKind::Engineered, Echelon::Operator) => reward_boron(info.raw_delta, s_c, s_o, done, spec)?,
            (RewardKind::Engineered, _) => reward_manager(info.raw_delta, info.duplicate, s_c, s_o, done, spec)?,
            (RewardKind::Variant { .. }, _) => {
                if !(s_o > 0.0) {
                    return Err(RewardError::NonPositiveStrength.into());
                }
                reward_variant(&ep.acc, self.variant.as_ref().expect("validated"), s_c / s_o, done)
            }
        };
        ep.acc = IntervalAccounting::default();
        ep.unit_actions = 0;
        Ok(StepResult {
            obs: ep.obs.clone(),
            reward,
            done,
            info,
        })
    }
}

impl Episode {
    fn node(&self) -> Option<DecisionRequest> {
        self.blue.as_ref().and_then(|h| h.external)
    }

    fn node_strength(&self) -> f64 {
        let (Some(h), Some(req)) = (&self.blue, self.node()) else {
            return 0.0;
        };
        let Some(f) = h.forest() else {
            return 0.0;
        };
        let units = match req.level {
            Echelon::Commander => f.commander_units(&self.state, req.id),
            _ => f.effective_units(&self.state, req.id),
        };
        units.iter().map(|u| u.strength).sum()
    }

    fn is_duplicate(&self, req: DecisionRequest, area: AreaRect) -> bool {
        let h = self.blue.as_ref().expect("hierarchy present");
        h.other_areas(&self.state, req).contains(&area)
    }

    fn observe(&self) -> Tensor<f64> {
        match self.pending {
            Pending::Unit(id) => {
                let pos = self.state.unit(id).expect("pending unit is active").pos;
                localized_decay(&build_global::<f64>(&self.state, id), pos, &DecayParams::default())
            }
            Pending::Node(req) => self.blue.as_ref().expect("hierarchy present").observe(&self.state, req),
            Pending::None => self.obs.clone(),
        }
    }

    fn operator_action(&self, id: UnitId, action: usize) -> Option<Action> {
        if action == 0 {
            return Some(Action::pass(id));
        }
        let u = self.state.unit(id)?;
        let to = step(u.pos, Direction::from_index(action - 1)?);
        let a = match self.state.unit_at(to) {
            Some(t) if t.faction != u.faction => Action::attack(id, t.id),
            Some(_) => return None,
            None => Action::move_to(id, to),
        };
        self.state.is_legal(&a).then_some(a)
    }

    fn apply(&mut self, a: Action, assignments: Vec<crate::hierarchy::Assignment>) -> Result<(), EnvError> {
        let phase = self.state.phase;
        let faction = self.state.on_move;
        let events = self.state.apply_action(a)?;
        for e in &events {
            self.account(e);
        }
        self.unit_actions += 1;
        self.replay.push(&StepRecord {
            phase,
            faction,
            action: a,
            assignments,
            events,
            score: self.state.score,
        });
        if self.state.is_terminal() {
            self.replay.finish(&self.state);
        }
        Ok(())
    }

    fn account(&mut self, e: &Event) {
        let blue = |id: &UnitId| self.factions.get(id) == Some(&Faction::Blue);
        let acc = &mut self.acc;
        match e {
            Event::Damaged {
                attacker,
                target,
                amount,
            } => {
                if blue(attacker) {
                    acc.kill_points += amount;
                }
                if blue(target) {
                    acc.losses += amount;
                }
            }
            Event::Removed { unit, by, awarded } => {
                if blue(by) {
                    acc.kill_points += awarded;
                }
                if blue(unit) {
                    acc.losses += awarded;
                }
            }
            Event::CityCaptured { owner, .. } if *owner == Faction::Blue => acc.captures += 1.0,
            Event::PhaseEnded { blue_points, .. } => acc.city_points += blue_points,
            _ => {}
        }
    }

    /// Play internal decisions until an exposed one is due or the game ends.
    fn advance(&mut self) -> Result<(), EnvError> {
        loop {
            let Some(id) = self.state.current_unit() else {
                self.pending = Pending::None;
                return Ok(());
            };
            if self.state.on_move == Faction::Red {
                let mut rng = self.state.rng.clone();
                let a = self.red.act(&self.state, id, &mut rng)?;
                self.state.rng = rng;
                let assignments = self.red.take_assignments();
                self.apply(a, assignments)?;
                continue;
            }
            let Some(h) = self.blue.as_mut() else {
                self.pending = Pending::Unit(id);
                return Ok(());
            };
            if !std::mem::take(&mut self.resume_operator) {
                if let Some(req) = h.prepare(&self.state, id)? {
                    self.pending = Pending::Node(req);
                    return Ok(());
                }
            }
            let mut rng = self.state.rng.clone();
            let a = h.operator_action(&self.state, id, &mut rng);
            self.state.rng = rng;
            let assignments = h.take_assignments();
            self.apply(a, assignments)?;
        }
    }
}
