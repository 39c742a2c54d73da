//! Faction controllers, the game loop, and policy configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::OperatorModel;
use crate::engine::{Action, EngineError, Event, Faction, GameRng, GameState, ScoreBreakdown, UnitId};
use crate::hierarchy::{
    AreaMultiModel, AreaVariant, Assignment, DecisionRequest, EchelonPolicy, HierarchyConfig, HierarchyController,
    HierarchyError,
};
use crate::multimodel::{Echelon, LinearPredictor, OperatorMultiModel, RolloutOracle, ScorePredictor, Usage};
use crate::observation::StateView;

#[derive(Debug, Error)]
pub enum PlayError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("predictor: {0}")]
    Predictor(String),
    #[error("decision for {0:?} must be supplied externally")]
    ExternalDecision(DecisionRequest),
    #[error("policy config: {0}")]
    Config(String),
}

/// Decides actions for one faction.
#[derive(Debug, Clone)]
pub enum Controller {
    Operator(OperatorModel),
    MultiOperator(OperatorMultiModel),
    Hierarchy(Box<HierarchyController>),
}

impl Controller {
    pub fn act(&mut self, s: &GameState, unit: UnitId, rng: &mut GameRng) -> Result<Action, PlayError> {
        match self {
            Controller::Operator(m) => Ok(m.decide(&StateView::full(s), unit, rng)),
            Controller::MultiOperator(mm) => mm.decide(s, unit, rng),
            Controller::Hierarchy(h) => h.act(s, unit, rng),
        }
    }

    pub fn take_assignments(&mut self) -> Vec<Assignment> {
        match self {
            Controller::Hierarchy(h) => h.take_assignments(),
            _ => Vec::new(),
        }
    }

    pub fn usage(&self) -> Vec<(Echelon, Usage)> {
        match self {
            Controller::Operator(_) => Vec::new(),
            Controller::MultiOperator(mm) => vec![(Echelon::Operator, mm.usage.clone())],
            Controller::Hierarchy(h) => h.usage(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Controller::Operator(m) => m.name().to_string(),
            Controller::MultiOperator(mm) => {
                let names: Vec<&str> = mm.entries.iter().map(|(m, _)| m.name()).collect();
                format!("multimodel[{}]", names.join(","))
            }
            Controller::Hierarchy(h) => format!("hierarchy[{}]", h.operator_model.name()),
        }
    }
}

/// One applied action, as seen by loggers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: u32,
    pub faction: Faction,
    pub action: Action,
    pub assignments: Vec<Assignment>,
    pub events: Vec<Event>,
    pub score: ScoreBreakdown,
}

/// Let the controller on move pick and apply one action.
pub fn play_step(s: &mut GameState, ctrls: &mut [Controller; 2]) -> Result<Option<StepRecord>, PlayError> {
    let Some(id) = s.current_unit() else {
        return Ok(None);
    };
    let faction = s.on_move;
    let mut rng = s.rng.clone();
    let action = ctrls[faction.index()].act(s, id, &mut rng)?;
    s.rng = rng;
    let phase = s.phase;
    let events = s.apply_action(action)?;
    Ok(Some(StepRecord {
        phase,
        faction,
        action,
        assignments: ctrls[faction.index()].take_assignments(),
        events,
        score: s.score,
    }))
}

/// Play until terminal or until `stop` holds.
pub fn play_until(
    s: &mut GameState,
    ctrls: &mut [Controller; 2],
    stop: impl Fn(&GameState) -> bool,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<(), PlayError> {
    while !stop(s) {
        match play_step(s, ctrls)? {
            Some(rec) => on_step(&rec),
            None => break,
        }
    }
    Ok(())
}

pub fn play_game(
    s: &mut GameState,
    ctrls: &mut [Controller; 2],
    on_step: impl FnMut(&StepRecord),
) -> Result<(), PlayError> {
    play_until(s, ctrls, |_| false, on_step)
}

/// Final score of playing out a copy of `s`, optionally capped at
/// `horizon` further phases.
pub fn rollout(s: &GameState, mut ctrls: [Controller; 2], horizon: Option<u32>) -> Result<f64, PlayError> {
    let mut g = s.clone();
    let end = horizon.map(|h| s.phase.saturating_add(h));
    play_until(&mut g, &mut ctrls, |g| end.is_some_and(|e| g.phase >= e), |_| {})?;
    Ok(g.game_score())
}

fn default_model() -> String {
    "pass_agg".to_string()
}

/// Serializable description of a faction's controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Operator {
        model: String,
    },
    Multimodel {
        models: Vec<EntrySpec>,
    },
    Hierarchy {
        #[serde(default = "default_model")]
        operator: String,
        #[serde(default)]
        manager: AreaPolicySpec,
        #[serde(default)]
        commander: AreaPolicySpec,
        #[serde(default)]
        config: HierarchyConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AreaPolicySpec {
    Scripted(String),
    Multi { models: Vec<EntrySpec> },
}

impl Default for AreaPolicySpec {
    fn default() -> Self {
        AreaPolicySpec::Scripted("balanced".to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrySpec {
    pub model: String,
    pub predictor: PredictorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PredictorSpec {
    Constant {
        value: f64,
    },
    Linear {
        path: PathBuf,
    },
    Rollout {
        #[serde(default)]
        adversary: Option<Box<PolicySpec>>,
        #[serde(default)]
        horizon: Option<u32>,
    },
}

impl PolicySpec {
    pub fn operator(model: &str) -> Self {
        PolicySpec::Operator {
            model: model.to_string(),
        }
    }

    /// A model name, or a path to a JSON policy file.
    pub fn parse_arg(arg: &str) -> Result<(Self, PathBuf), PlayError> {
        let path = Path::new(arg);
        if arg.ends_with(".json") || path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| PlayError::Config(format!("{arg}: {e}")))?;
            let spec = serde_json::from_str(&text).map_err(|e| PlayError::Config(format!("{arg}: {e}")))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((spec, base))
        } else {
            arg.parse::<OperatorModel>().map_err(PlayError::Config)?;
            Ok((Self::operator(arg), PathBuf::new()))
        }
    }

    pub fn build(&self, faction: Faction, base: &Path) -> Result<Controller, PlayError> {
        Ok(match self {
            PolicySpec::Operator { model } => Controller::Operator(parse_model(model)?),
            PolicySpec::Multimodel { models } => {
                let entries = models
                    .iter()
                    .map(|e| Ok((parse_model(&e.model)?, e.predictor.build(faction, base)?)))
                    .collect::<Result<Vec<_>, PlayError>>()?;
                if entries.is_empty() {
                    return Err(PlayError::Config("empty registry".into()));
                }
                Controller::MultiOperator(OperatorMultiModel::new(entries))
            }
            PolicySpec::Hierarchy {
                operator,
                manager,
                commander,
                config,
            } => {
                let hc = HierarchyController::new(faction, *config).with_policies(
                    commander.build(faction, base)?,
                    manager.build(faction, base)?,
                    parse_model(operator)?,
                );
                Controller::Hierarchy(Box::new(hc))
            }
        })
    }
}

impl AreaPolicySpec {
    fn build(&self, faction: Faction, base: &Path) -> Result<EchelonPolicy, PlayError> {
        Ok(match self {
            AreaPolicySpec::Scripted(v) => EchelonPolicy::Scripted(v.parse::<AreaVariant>().map_err(PlayError::Config)?),
            AreaPolicySpec::Multi { models } => {
                let entries = models
                    .iter()
                    .map(|e| {
                        let v = e.model.parse::<AreaVariant>().map_err(PlayError::Config)?;
                        Ok((v, e.predictor.build(faction, base)?))
                    })
                    .collect::<Result<Vec<_>, PlayError>>()?;
                if entries.is_empty() {
                    return Err(PlayError::Config("empty registry".into()));
                }
                EchelonPolicy::Multi(AreaMultiModel::new(entries))
            }
        })
    }
}

impl PredictorSpec {
    fn build(&self, faction: Faction, base: &Path) -> Result<ScorePredictor, PlayError> {
        Ok(match self {
            PredictorSpec::Constant { value } => ScorePredictor::Constant(*value),
            PredictorSpec::Linear { path } => {
                let p = if path.is_absolute() { path.clone() } else { base.join(path) };
                ScorePredictor::Linear(
                    LinearPredictor::load(&p).map_err(|e| PlayError::Config(format!("{}: {e}", p.display())))?,
                )
            }
            PredictorSpec::Rollout { adversary, horizon } => {
                let adv = match adversary {
                    Some(a) => a.build(faction.opponent(), base)?,
                    None => Controller::Operator(OperatorModel::PassAgg),
                };
                ScorePredictor::Rollout(RolloutOracle {
                    adversary: Box::new(adv),
                    horizon: *horizon,
                })
            }
        })
    }
}

fn parse_model(name: &str) -> Result<OperatorModel, PlayError> {
    name.parse().map_err(PlayError::Config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineConfig, Unit};
    use crate::hexgrid::{BoardDims, HexCoord};
    use crate::scenario::{generate, ScenarioParams, UnitCountMode};

    #[test]
    fn rollout_at_terminal_is_score() {
        let mut s = GameState::new(
            BoardDims::square(3),
            &[HexCoord::new(0, 0)],
            vec![Unit::new(0, Faction::Blue, HexCoord::new(0, 0)), Unit::new(1, Faction::Red, HexCoord::new(2, 2))],
            2,
            EngineConfig::default(),
            0,
        )
        .unwrap();
        let mut c = [Controller::Operator(OperatorModel::Pass), Controller::Operator(OperatorModel::Pass)];
        play_game(&mut s, &mut c, |_| {}).unwrap();
        assert!(s.is_terminal());
        let r = rollout(&s, c.clone(), None).unwrap();
        assert_eq!(r, s.game_score());
    }

    #[test]
    fn horizon_caps_rollout() {
        let spec = generate(&ScenarioParams::standard(5), 3).unwrap();
        let s = spec.to_state(EngineConfig::default(), 3).unwrap();
        let c = [Controller::Operator(OperatorModel::Pass), Controller::Operator(OperatorModel::Pass)];
        let mut g = s.clone();
        let mut cc = c.clone();
        play_until(&mut g, &mut cc, |g| g.phase >= 2, |_| {}).unwrap();
        assert_eq!(rollout(&s, c, Some(2)).unwrap(), g.game_score());
    }

    #[test]
    fn hierarchy_game_reproducible() {
        let p = ScenarioParams {
            unit_count_mode: UnitCountMode::HierarchyCounts {
                min_commanders: 1,
                max_commanders: 2,
            },
            ..ScenarioParams::hrl()
        };
        let spec = generate(&p, 21).unwrap();
        let cfg = EngineConfig {
            deterministic: true,
            ..EngineConfig::default()
        };
        let run = || {
            let mut s = spec.to_state(cfg, 21).unwrap();
            let hrl = PolicySpec::Hierarchy {
                operator: "pass_agg".into(),
                manager: AreaPolicySpec::default(),
                commander: AreaPolicySpec::default(),
                config: HierarchyConfig::default(),
            };
            let mut c = [
                hrl.build(Faction::Blue, Path::new("")).unwrap(),
                hrl.build(Faction::Red, Path::new("")).unwrap(),
            ];
            let mut log = Vec::new();
            play_game(&mut s, &mut c, |r| log.push(serde_json::to_string(r).unwrap())).unwrap();
            (s.game_score(), log)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(la, lb);
        assert!(la.iter().any(|l| l.contains("\"level\":\"manager\"")));
    }

    #[test]
    fn policy_spec_json() {
        let text = r#"{"kind":"multimodel","models":[
            {"model":"city","predictor":{"type":"constant","value":1}},
            {"model":"pass","predictor":{"type":"rollout","adversary":{"kind":"operator","model":"shootback"}}}]}"#;
        let spec: PolicySpec = serde_json::from_str(text).unwrap();
        let c = spec.build(Faction::Blue, Path::new("")).unwrap();
        assert_eq!(c.name(), "multimodel[city,pass]");
        let h: PolicySpec = serde_json::from_str(r#"{"kind":"hierarchy","manager":"prioritized_city"}"#).unwrap();
        assert!(matches!(h.build(Faction::Red, Path::new("")).unwrap(), Controller::Hierarchy(_)));
        assert!(PolicySpec::parse_arg("nonsense").is_err());
        assert_eq!(PolicySpec::parse_arg("killer").unwrap().0, PolicySpec::operator("killer"));
    }
}
