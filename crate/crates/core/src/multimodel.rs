//! Score predictors, argmax model selection and engineered rewards.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::OperatorModel;
use crate::engine::{Action, Faction, GameRng, GameState, UnitId};
use crate::observation::{build_global, localized_decay, DecayParams, StateView, Tensor};
use crate::play::{rollout, Controller, PlayError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Echelon {
    Operator,
    Manager,
    Commander,
}

impl Echelon {
    pub fn obs_shape(self) -> [usize; 3] {
        match self {
            Echelon::Operator => [18, 7, 7],
            Echelon::Manager | Echelon::Commander => [17, 5, 5],
        }
    }

    pub fn n_actions(self) -> usize {
        match self {
            Echelon::Operator => 7,
            Echelon::Manager | Echelon::Commander => 9,
        }
    }
}

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("weight length {weights} does not match observation size {obs} for shape {shape:?}")]
    LengthMismatch {
        weights: usize,
        obs: usize,
        shape: [usize; 3],
    },
    #[error("observation shape {got:?} does not match predictor shape {want:?}")]
    ShapeMismatch { got: [usize; 3], want: [usize; 3] },
    #[error("predictor file: {0}")]
    Io(#[from] std::io::Error),
    #[error("predictor json: {0}")]
    Json(#[from] serde_json::Error),
}

/// `bias + weights . obs` over a flattened observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub echelon: Echelon,
    pub obs_shape: [usize; 3],
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl LinearPredictor {
    pub fn new(echelon: Echelon, bias: f64, weights: Vec<f64>) -> Result<Self, PredictorError> {
        let p = Self {
            echelon,
            obs_shape: echelon.obs_shape(),
            bias,
            weights,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), PredictorError> {
        let want = self.echelon.obs_shape();
        if self.obs_shape != want {
            return Err(PredictorError::ShapeMismatch {
                got: self.obs_shape,
                want,
            });
        }
        let obs: usize = want.iter().product();
        if self.weights.len() != obs {
            return Err(PredictorError::LengthMismatch {
                weights: self.weights.len(),
                obs,
                shape: want,
            });
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictorError> {
        let p: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictorError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn predict(&self, obs: &Tensor<f64>) -> Result<f64, PredictorError> {
        let got = [obs.channels, obs.rows, obs.cols];
        if got != self.obs_shape {
            return Err(PredictorError::ShapeMismatch {
                got,
                want: self.obs_shape,
            });
        }
        Ok(self.bias + self.weights.iter().zip(&obs.data).map(|(w, x)| w * x).sum::<f64>())
    }
}

/// Plays the rest of the game with the paired behavior model against
/// `adversary` on a copy of the state.
#[derive(Debug, Clone)]
pub struct RolloutOracle {
    pub adversary: Box<Controller>,
    /// Stop after this many further phases; `None` plays to the end.
    pub horizon: Option<u32>,
}

#[derive(Debug, Clone)]
pub enum ScorePredictor {
    Constant(f64),
    Linear(LinearPredictor),
    Rollout(RolloutOracle),
}

impl ScorePredictor {
    pub fn rollout(adversary: Controller) -> Self {
        ScorePredictor::Rollout(RolloutOracle {
            adversary: Box::new(adversary),
            horizon: None,
        })
    }

    /// Predicted final score from `faction`'s perspective. `own` is the
    /// controller the faction would use for the remainder; `obs` builds
    /// the echelon observation for learned predictors.
    pub fn predict(
        &self,
        s: &GameState,
        faction: Faction,
        own: impl FnOnce() -> Controller,
        obs: impl FnOnce() -> Tensor<f64>,
    ) -> Result<f64, PlayError> {
        match self {
            ScorePredictor::Constant(v) => Ok(*v),
            ScorePredictor::Linear(p) => p.predict(&obs()).map_err(|e| PlayError::Predictor(e.to_string())),
            ScorePredictor::Rollout(o) => {
                let mine = own();
                let theirs = (*o.adversary).clone();
                let ctrls = match faction {
                    Faction::Blue => [mine, theirs],
                    Faction::Red => [theirs, mine],
                };
                let score = rollout(s, ctrls, o.horizon)?;
                Ok(match faction {
                    Faction::Blue => score,
                    Faction::Red => -score,
                })
            }
        }
    }
}

/// Index of the largest prediction, lowest index on ties.
pub fn argmax_first<T: Scalar>(preds: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &p) in preds.iter().enumerate() {
        match best {
            Some((_, b)) if !(p > b) => {}
            _ => best = Some((i, p)),
        }
    }
    best.map(|(i, _)| i)
}

/// Per-model selection counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub names: Vec<String>,
    pub counts: Vec<u64>,
}

impl Usage {
    pub fn new(names: Vec<String>) -> Self {
        let counts = vec![0; names.len()];
        Self { names, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Usage) {
        if self.names.is_empty() {
            *self = other.clone();
            return;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn percentages(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        self.counts.iter().map(|&c| 100.0 * c as f64 / t).collect()
    }
}

/// Operator-echelon multi-model: at every action-selection step the model
/// with the highest predicted score acts.
#[derive(Debug, Clone)]
pub struct OperatorMultiModel {
    pub entries: Vec<(OperatorModel, ScorePredictor)>,
    pub decay: DecayParams,
    pub usage: Usage,
}

impl OperatorMultiModel {
    pub fn new(entries: Vec<(OperatorModel, ScorePredictor)>) -> Self {
        assert!(!entries.is_empty(), "registry must be nonempty");
        let usage = Usage::new(entries.iter().map(|(m, _)| m.name().to_string()).collect());
        Self {
            entries,
            decay: DecayParams::default(),
            usage,
        }
    }

    pub fn predictions(&self, s: &GameState, unit: UnitId) -> Result<Vec<f64>, PlayError> {
        let faction = s.unit(unit).map(|u| u.faction).unwrap_or(s.on_move);
        let pos = s.unit(unit).map(|u| u.pos).unwrap_or_default();
        self.entries
            .iter()
            .map(|(m, p)| {
                p.predict(
                    s,
                    faction,
                    || Controller::Operator(*m),
                    || localized_decay(&build_global::<f64>(s, unit), pos, &self.decay),
                )
            })
            .collect()
    }

    pub fn select(&mut self, s: &GameState, unit: UnitId) -> Result<usize, PlayError> {
        let preds = self.predictions(s, unit)?;
        let i = argmax_first(&preds).unwrap_or(0);
        self.usage.counts[i] += 1;
        Ok(i)
    }

    pub fn decide(&mut self, s: &GameState, unit: UnitId, rng: &mut GameRng) -> Result<Action, PlayError> {
        let i = self.select(s, unit)?;
        Ok(self.entries[i].0.decide(&StateView::full(s), unit, rng))
    }
}

/// Terminal bonus and duplicate-objective penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub terminal_bonus: f64,
    pub duplicate_penalty: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            terminal_bonus: 25.0,
            duplicate_penalty: 25.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("original strength must be positive")]
    NonPositiveStrength,
}

/// `max(R_raw, 0) * S_c / S_o + B_t * I_t`.
pub fn reward_boron<T: Scalar>(
    r_raw: T,
    s_c: T,
    s_o: T,
    terminal: bool,
    spec: &RewardSpec,
) -> Result<T, RewardError> {
    if !(s_o > T::zero()) {
        return Err(RewardError::NonPositiveStrength);
    }
    let bonus = if terminal { T::from_real(spec.terminal_bonus) } else { T::zero() };
    Ok(r_raw.max_of(T::zero()) * s_c / s_o + bonus)
}

/// `max(R_m - P_g * dup, 0) * S_mc / S_mo + B_t * I_t`.
pub fn reward_manager<T: Scalar>(
    r_m: T,
    duplicate: bool,
    s_mc: T,
    s_mo: T,
    terminal: bool,
    spec: &RewardSpec,
) -> Result<T, RewardError> {
    if !(s_mo > T::zero()) {
        return Err(RewardError::NonPositiveStrength);
    }
    let penalty = if duplicate { T::from_real(spec.duplicate_penalty) } else { T::zero() };
    let bonus = if terminal { T::from_real(spec.terminal_bonus) } else { T::zero() };
    Ok((r_m - penalty).max_of(T::zero()) * s_mc / s_mo + bonus)
}

/// Quantities accumulated over one decision interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalAccounting {
    /// Damage dealt plus strength awarded for removals.
    pub kill_points: f64,
    pub captures: f64,
    pub city_points: f64,
    /// Own strength lost.
    pub losses: f64,
    pub eliminated_enemy: bool,
    pub holds_all_cities: bool,
}

/// Component weights for the named reward variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantWeights {
    pub kill: f64,
    pub capture: f64,
    pub city: f64,
    pub loss: f64,
    pub elimination_bonus: f64,
    pub occupation_bonus: f64,
    pub terminal_bonus: f64,
}

impl VariantWeights {
    pub const PRESETS: [&'static str; 7] = [
        "boron",
        "defeat_and_capture",
        "occupy_city",
        "seize_red_city",
        "defensive",
        "kill",
        "kamikaze",
    ];

    pub fn preset(name: &str) -> Option<Self> {
        let z = Self::default();
        Some(match name {
            "boron" => Self {
                kill: 1.0,
                city: 1.0,
                terminal_bonus: 25.0,
                ..z
            },
            "defeat_and_capture" => Self {
                kill: 1.0,
                capture: 50.0,
                city: 1.0,
                elimination_bonus: 100.0,
                occupation_bonus: 100.0,
                ..z
            },
            "occupy_city" => Self {
                city: 2.0,
                capture: 25.0,
                occupation_bonus: 100.0,
                ..z
            },
            "seize_red_city" => Self {
                capture: 100.0,
                city: 1.0,
                occupation_bonus: 200.0,
                ..z
            },
            "defensive" => Self {
                city: 1.0,
                loss: 2.0,
                terminal_bonus: 25.0,
                ..z
            },
            "kill" => Self {
                kill: 2.0,
                elimination_bonus: 100.0,
                ..z
            },
            "kamikaze" => Self {
                kill: 3.0,
                elimination_bonus: 200.0,
                ..z
            },
            _ => return None,
        })
    }
}

/// `max(components, 0) * ratio + I_t * (B_t + ratio * (terminal component bonuses))`.
pub fn reward_variant(acc: &IntervalAccounting, w: &VariantWeights, ratio: f64, terminal: bool) -> f64 {
    let body = w.kill * acc.kill_points + w.capture * acc.captures + w.city * acc.city_points
        - w.loss * acc.losses;
    let mut r = body.max(0.0) * ratio;
    if terminal {
        let mut extra = 0.0;
        if acc.eliminated_enemy {
            extra += w.elimination_bonus;
        }
        if acc.holds_all_cities {
            extra += w.occupation_bonus;
        }
        r += w.terminal_bonus + ratio * extra;
    }
    r
}
