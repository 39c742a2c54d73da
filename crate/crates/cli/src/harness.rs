//! Single matches and batch evaluation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use hexstrat_core::multimodel::{Echelon, Usage};
use hexstrat_core::play::{play_game, StepRecord};
use hexstrat_core::replay::{Replay, ReplayHeader};
use hexstrat_core::scenario::{child_seed, ScenarioError, ScenarioStream};
use hexstrat_core::{EngineConfig, Faction, PlayError, PolicySpec, ScenarioParams, ScenarioSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_SCHEMA: u32 = 1;
pub const SUMMARY_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Play(#[from] PlayError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] hexstrat_core::engine::EngineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("game {game} failed: {msg}{}", partial.as_ref().map(|p| format!("; partial results in {}", p.display())).unwrap_or_default())]
    Worker {
        game: u64,
        msg: String,
        partial: Option<PathBuf>,
    },
    #[error("need at least one game")]
    NoGames,
    #[error("baseline has zero variance")]
    ZeroVariance,
    #[error("baseline needs at least two scores")]
    ShortBaseline,
    #[error("{0}")]
    Config(String),
}

/// A resolved policy plus the directory its relative paths hang off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArg {
    pub spec: PolicySpec,
    #[serde(default)]
    pub base: PathBuf,
    pub label: String,
}

impl PolicyArg {
    pub fn parse(arg: &str) -> Result<Self, HarnessError> {
        let (spec, base) = PolicySpec::parse_arg(arg)?;
        Ok(Self {
            spec,
            base,
            label: arg.to_string(),
        })
    }

    pub fn model(name: &str) -> Self {
        Self {
            spec: PolicySpec::operator(name),
            base: PathBuf::new(),
            label: name.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    pub score: f64,
    pub phases_played: u32,
    pub blue_losses: usize,
    pub red_losses: usize,
    pub replay: Replay,
    pub usage: Vec<(Echelon, Usage)>,
}

/// Play one full game between two policy stacks.
pub fn run_match(
    blue: &PolicyArg,
    red: &PolicyArg,
    scenario: &ScenarioSpec,
    engine: EngineConfig,
    engine_seed: u64,
) -> Result<MatchResult, HarnessError> {
    run_match_with(blue, red, scenario, engine, engine_seed, |_| {})
}

pub fn run_match_with(
    blue: &PolicyArg,
    red: &PolicyArg,
    scenario: &ScenarioSpec,
    engine: EngineConfig,
    engine_seed: u64,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<MatchResult, HarnessError> {
    let mut ctrls = [
        blue.spec.build(Faction::Blue, &blue.base)?,
        red.spec.build(Faction::Red, &red.base)?,
    ];
    let mut s = scenario.to_state(engine, engine_seed)?;
    let header = ReplayHeader::new(scenario.clone(), engine, engine_seed, &ctrls[0].name(), &ctrls[1].name());
    let mut replay = Replay::new(header);
    play_game(&mut s, &mut ctrls, |r| {
        replay.push(r);
        on_step(r);
    })?;
    replay.finish(&s);
    let losses = |f: Faction| s.initial_unit_count(f) - s.faction_units(f).count();
    Ok(MatchResult {
        score: s.game_score(),
        phases_played: s.phase.min(s.num_phases),
        blue_losses: losses(Faction::Blue),
        red_losses: losses(Faction::Red),
        replay,
        usage: ctrls[0].usage(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub games: u64,
    pub scenario_seed: u64,
    pub scenario_cycle: u32,
    pub scenario: ScenarioParams,
    pub blue: PolicyArg,
    pub red: PolicyArg,
    pub engine: EngineConfig,
    /// Defaults to `HEXSTRAT_WORKERS`, then the rayon default.
    pub workers: Option<usize>,
    #[serde(skip)]
    pub replay_dir: Option<PathBuf>,
}

impl EvalConfig {
    pub fn new(blue: PolicyArg, red: PolicyArg, scenario: ScenarioParams, games: u64) -> Self {
        Self {
            games,
            scenario_seed: 0,
            scenario_cycle: 0,
            scenario,
            blue,
            red,
            engine: EngineConfig::default(),
            workers: None,
            replay_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub index: u64,
    pub seed: u64,
    pub scenario_seed: u64,
    pub score: f64,
    pub phases_played: u32,
    pub blue_losses: usize,
    pub red_losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub echelon: Echelon,
    pub models: Vec<String>,
    pub counts: Vec<u64>,
    pub percent: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub n: usize,
    pub mean: f64,
    pub sem: f64,
    /// SEM is undefined for one game and reported as 0.
    pub sem_degenerate: bool,
    pub usage: Vec<UsageReport>,
    pub config: EvalConfig,
    pub wall_time_secs: f64,
    #[serde(skip)]
    pub games: Vec<GameRow>,
}

impl EvalReport {
    pub fn scores(&self) -> Vec<f64> {
        self.games.iter().map(|g| g.score).collect()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn sem(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Standardize scores against a baseline's mean and sample stddev.
pub fn normalize_to_baseline(scores: &[f64], baseline: &[f64]) -> Result<Vec<f64>, HarnessError> {
    if baseline.len() < 2 {
        return Err(HarnessError::ShortBaseline);
    }
    let m = mean(baseline);
    let sd = sample_std(baseline);
    if sd == 0.0 {
        return Err(HarnessError::ZeroVariance);
    }
    Ok(scores.iter().map(|x| (x - m) / sd).collect())
}

fn worker_count(cfg: &EvalConfig) -> Option<usize> {
    cfg.workers.or_else(|| {
        std::env::var("HEXSTRAT_WORKERS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&n: &usize| n > 0)
    })
}

/// Engine seed for game `index`; independent of the scenario stream.
pub fn engine_seed(scenario_seed: u64, index: u64) -> u64 {
    child_seed(scenario_seed ^ 0x5EED_E11E_0000_0000, index)
}

/// Play `cfg.games` games in parallel and aggregate in index order.
pub fn run_eval(cfg: &EvalConfig, csv_out: Option<&Path>) -> Result<EvalReport, HarnessError> {
    if cfg.games == 0 {
        return Err(HarnessError::NoGames);
    }
    let start = Instant::now();
    let stream = ScenarioStream::new(cfg.scenario_seed, cfg.scenario_cycle, cfg.scenario)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(cfg) {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(dir) = &cfg.replay_dir {
        std::fs::create_dir_all(dir)?;
    }

    let results: Vec<Result<(GameRow, Vec<(Echelon, Usage)>), HarnessError>> = pool.install(|| {
        (0..cfg.games)
            .into_par_iter()
            .map(|i| {
                let spec = stream.draw(i)?;
                let seed = engine_seed(cfg.scenario_seed, i);
                let m = run_match(&cfg.blue, &cfg.red, &spec, cfg.engine, seed)?;
                if let Some(dir) = &cfg.replay_dir {
                    m.replay
                        .save(dir.join(format!("game-{i:06}.jsonl")))
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                }
                let row = GameRow {
                    index: i,
                    seed,
                    scenario_seed: spec.seed_used,
                    score: m.score,
                    phases_played: m.phases_played,
                    blue_losses: m.blue_losses,
                    red_losses: m.red_losses,
                };
                Ok((row, m.usage))
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut usage: Vec<(Echelon, Usage)> = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((row, u)) => {
                rows.push(row);
                for (e, u) in u {
                    match usage.iter_mut().find(|(x, _)| *x == e) {
                        Some((_, acc)) => acc.merge(&u),
                        None => usage.push((e, u)),
                    }
                }
            }
            Err(e) => {
                let partial = match csv_out {
                    Some(p) => {
                        let pp = p.with_extension("partial.csv");
                        write_csv(&pp, &rows)?;
                        Some(pp)
                    }
                    None => None,
                };
                return Err(HarnessError::Worker {
                    game: i as u64,
                    msg: e.to_string(),
                    partial,
                });
            }
        }
    }
    if let Some(p) = csv_out {
        write_csv(p, &rows)?;
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let report = EvalReport {
        schema: SUMMARY_SCHEMA,
        n: rows.len(),
        mean: mean(&scores),
        sem: sem(&scores),
        sem_degenerate: rows.len() < 2,
        usage: usage
            .into_iter()
            .map(|(echelon, u)| UsageReport {
                echelon,
                percent: u.percentages(),
                models: u.names,
                counts: u.counts,
            })
            .collect(),
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        games: rows,
    };
    if let Some(p) = csv_out {
        let summary = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(p.with_extension("summary.json"), summary + "\n")?;
    }
    Ok(report)
}

const CSV_HEADER: [&str; 8] = [
    "schema",
    "index",
    "seed",
    "scenario_seed",
    "score",
    "phases_played",
    "blue_losses",
    "red_losses",
];

pub fn write_csv(path: &Path, rows: &[GameRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            CSV_SCHEMA.to_string(),
            r.index.to_string(),
            r.seed.to_string(),
            r.scenario_seed.to_string(),
            r.score.to_string(),
            r.phases_played.to_string(),
            r.blue_losses.to_string(),
            r.red_losses.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<GameRow>, HarnessError> {
    #[derive(Deserialize)]
    struct Row {
        #[allow(dead_code)]
        schema: u32,
        index: u64,
        seed: u64,
        scenario_seed: u64,
        score: f64,
        phases_played: u32,
        blue_losses: usize,
        red_losses: usize,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let x: Row = row?;
        out.push(GameRow {
            index: x.index,
            seed: x.seed,
            scenario_seed: x.scenario_seed,
            score: x.score,
            phases_played: x.phases_played,
            blue_losses: x.blue_losses,
            red_losses: x.red_losses,
        });
    }
    Ok(out)
}
