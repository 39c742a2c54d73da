//! Deterministic hex-grid combat simulation with hierarchical agents.
pub mod agents;
pub mod engine;
pub mod env;
pub mod hexgrid;
pub mod hierarchy;
pub mod multimodel;
pub mod observation;
pub mod play;
pub mod replay;
pub mod scalar;
pub mod scenario;

pub use engine::{Action, ActionKind, EngineConfig, Event, Faction, GameState, Unit, UnitId};
pub use hexgrid::{AreaRect, BoardDims, Direction, HexCoord};
pub use play::{Controller, PlayError, PolicySpec};
pub use scenario::{ScenarioParams, ScenarioSpec, ScenarioStream};

/// Observation tensor at working precision.
pub type ObsTensor = observation::Tensor<f64>;
/// Observation tensor with exact rational entries.
pub type ExactTensor = observation::Tensor<num_rational::Rational64>;
