#![allow(dead_code)]

use hexstrat_core::agents::OperatorModel;
use hexstrat_core::play::{play_step, Controller};
use hexstrat_core::scenario::{generate, ScenarioParams};
use hexstrat_core::{EngineConfig, GameState};

pub fn engine(deterministic: bool) -> EngineConfig {
    EngineConfig {
        deterministic,
        ..EngineConfig::default()
    }
}

pub fn model(i: usize) -> OperatorModel {
    OperatorModel::NAMES[i % OperatorModel::NAMES.len()].parse().unwrap()
}

/// A standard scenario advanced `steps` unit actions by random play.
pub fn random_state(seed: u64, len: i32, steps: usize) -> GameState {
    let spec = generate(&ScenarioParams::standard(len), seed).unwrap();
    let mut s = spec.to_state(engine(false), seed).unwrap();
    let mut c = [Controller::Operator(OperatorModel::Random), Controller::Operator(OperatorModel::Random)];
    for _ in 0..steps {
        if play_step(&mut s, &mut c).unwrap().is_none() {
            break;
        }
    }
    s
}
