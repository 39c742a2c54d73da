//! Append-only JSONL game logs.
//!
//! Line 1 is a header carrying the scenario, engine config, engine seed and
//! a SHA-256 digest over those three. Each following line is one applied
//! action. A closing `end` line records the final score. Every line is a
//! JSON object tagged by `"type"`:
//!
//! - `header`: `schema`, `scenario`, `engine`, `engine_seed`, `blue`, `red`, `digest`
//! - `step`: `step`, `phase`, `faction`, `action`, `assignments`, `events`, `score`
//! - `end`: `steps`, `phases_played`, `final_score`, `score`

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{Action, EngineConfig, EngineError, Event, Faction, GameState, ScoreBreakdown};
use crate::hierarchy::Assignment;
use crate::play::StepRecord;
use crate::scenario::ScenarioSpec;

pub const REPLAY_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("header digest {found} does not match contents ({expected})")]
    DigestMismatch { expected: String, found: String },
    #[error("replay truncated; last valid line is {last_valid}")]
    Truncated { last_valid: usize },
    #[error("step {step}: {source}")]
    Rejected { step: u64, source: EngineError },
    #[error("step {step}: re-execution diverged from the log")]
    Diverged { step: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub schema: u32,
    pub scenario: ScenarioSpec,
    pub engine: EngineConfig,
    pub engine_seed: u64,
    pub blue: String,
    pub red: String,
    pub digest: String,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    scenario: &'a ScenarioSpec,
    engine: &'a EngineConfig,
    engine_seed: u64,
}

fn digest_of(scenario: &ScenarioSpec, engine: &EngineConfig, engine_seed: u64) -> String {
    let bytes = serde_json::to_vec(&DigestInput {
        scenario,
        engine,
        engine_seed,
    })
    .expect("digest input serializes");
    hex::encode(Sha256::digest(bytes))
}

impl ReplayHeader {
    pub fn new(scenario: ScenarioSpec, engine: EngineConfig, engine_seed: u64, blue: &str, red: &str) -> Self {
        let digest = digest_of(&scenario, &engine, engine_seed);
        Self {
            schema: REPLAY_SCHEMA,
            scenario,
            engine,
            engine_seed,
            blue: blue.to_string(),
            red: red.to_string(),
            digest,
        }
    }

    pub fn expected_digest(&self) -> String {
        digest_of(&self.scenario, &self.engine, self.engine_seed)
    }

    pub fn initial_state(&self) -> Result<GameState, EngineError> {
        self.scenario.to_state(self.engine, self.engine_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub step: u64,
    pub phase: u32,
    pub faction: Faction,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<Assignment>,
    pub events: Vec<Event>,
    pub score: ScoreBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEnd {
    pub steps: u64,
    pub phases_played: u32,
    pub final_score: f64,
    pub score: ScoreBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReplayLine {
    Header(ReplayHeader),
    Step(ReplayStep),
    End(ReplayEnd),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub header: ReplayHeader,
    pub steps: Vec<ReplayStep>,
    pub end: Option<ReplayEnd>,
}

impl Replay {
    pub fn new(header: ReplayHeader) -> Self {
        Self {
            header,
            steps: Vec::new(),
            end: None,
        }
    }

    pub fn push(&mut self, rec: &StepRecord) -> &ReplayStep {
        let step = ReplayStep {
            step: self.steps.len() as u64,
            phase: rec.phase,
            faction: rec.faction,
            action: rec.action,
            assignments: rec.assignments.clone(),
            events: rec.events.clone(),
            score: rec.score,
        };
        self.steps.push(step);
        self.steps.last().expect("just pushed")
    }

    pub fn finish(&mut self, s: &GameState) {
        self.end = Some(ReplayEnd {
            steps: self.steps.len() as u64,
            phases_played: s.phase.min(s.num_phases),
            final_score: s.game_score(),
            score: s.score,
        });
    }

    pub fn lines(&self) -> impl Iterator<Item = ReplayLine> + '_ {
        std::iter::once(ReplayLine::Header(self.header.clone()))
            .chain(self.steps.iter().cloned().map(ReplayLine::Step))
            .chain(self.end.clone().map(ReplayLine::End))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for line in self.lines() {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ReplayError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))?;
        Ok(())
    }

    /// Parse a complete log. A missing `end` line is reported as truncation.
    pub fn read(r: impl BufRead) -> Result<Self, ReplayError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut end = None;
        let mut last_valid = 0;
        for (i, line) in r.lines().enumerate() {
            let n = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |msg: String| ReplayError::Corrupt { line: n, msg };
            let parsed: ReplayLine = serde_json::from_str(&line).map_err(|e| {
                if e.is_eof() {
                    ReplayError::Truncated { last_valid }
                } else {
                    corrupt(e.to_string())
                }
            })?;
            match (parsed, header.is_some(), end.is_some()) {
                (_, _, true) => return Err(corrupt("content after end line".into())),
                (ReplayLine::Header(h), false, _) => {
                    if h.schema != REPLAY_SCHEMA {
                        return Err(corrupt(format!("unsupported schema {}", h.schema)));
                    }
                    let expected = h.expected_digest();
                    if expected != h.digest {
                        return Err(ReplayError::DigestMismatch {
                            expected,
                            found: h.digest,
                        });
                    }
                    header = Some(h);
                }
                (ReplayLine::Header(_), true, _) => return Err(corrupt("second header".into())),
                (_, false, _) => return Err(corrupt("first line must be the header".into())),
                (ReplayLine::Step(s), true, _) => {
                    if s.step != steps.len() as u64 {
                        return Err(corrupt(format!("expected step {}, found {}", steps.len(), s.step)));
                    }
                    steps.push(s);
                }
                (ReplayLine::End(e), true, _) => {
                    if e.steps != steps.len() as u64 {
                        return Err(corrupt(format!("end counts {} steps, log has {}", e.steps, steps.len())));
                    }
                    end = Some(e);
                }
            }
            last_valid = n;
        }
        let Some(header) = header else {
            return Err(ReplayError::Truncated { last_valid });
        };
        if end.is_none() {
            return Err(ReplayError::Truncated { last_valid });
        }
        Ok(Self { header, steps, end })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReplayError> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    /// Apply every logged action to a fresh engine, checking events and
    /// scores line by line. Returns the final state.
    pub fn reexecute(&self) -> Result<GameState, ReplayError> {
        let mut s = self
            .header
            .initial_state()
            .map_err(|source| ReplayError::Rejected { step: 0, source })?;
        for st in &self.steps {
            if s.phase != st.phase || s.on_move != st.faction {
                return Err(ReplayError::Diverged { step: st.step });
            }
            let events = s
                .apply_action(st.action)
                .map_err(|source| ReplayError::Rejected { step: st.step, source })?;
            if events != st.events || s.score != st.score {
                return Err(ReplayError::Diverged { step: st.step });
            }
        }
        if let Some(end) = &self.end {
            if s.game_score().to_bits() != end.final_score.to_bits() {
                return Err(ReplayError::Diverged { step: self.steps.len() as u64 });
            }
        }
        Ok(s)
    }
}

/// Streams a log to disk as the game runs.
pub struct ReplayWriter<W: Write> {
    out: W,
    steps: u64,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut out: W, header: &ReplayHeader) -> std::io::Result<Self> {
        write_line(&mut out, &ReplayLine::Header(header.clone()))?;
        Ok(Self { out, steps: 0 })
    }

    pub fn append(&mut self, rec: &StepRecord) -> std::io::Result<()> {
        let line = ReplayLine::Step(ReplayStep {
            step: self.steps,
            phase: rec.phase,
            faction: rec.faction,
            action: rec.action,
            assignments: rec.assignments.clone(),
            events: rec.events.clone(),
            score: rec.score,
        });
        self.steps += 1;
        write_line(&mut self.out, &line)
    }

    pub fn finish(mut self, s: &GameState) -> std::io::Result<W> {
        let end = ReplayLine::End(ReplayEnd {
            steps: self.steps,
            phases_played: s.phase.min(s.num_phases),
            final_score: s.game_score(),
            score: s.score,
        });
        write_line(&mut self.out, &end)?;
        Ok(self.out)
    }
}

fn write_line<W: Write>(w: &mut W, line: &ReplayLine) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, line)?;
    w.write_all(b"\n")?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::OperatorModel;
    use crate::play::{play_game, Controller};
    use crate::scenario::{generate, ScenarioParams};

    fn recorded(seed: u64) -> Replay {
        let spec = generate(&ScenarioParams::standard(6), seed).unwrap();
        let cfg = EngineConfig {
            deterministic: true,
            ..EngineConfig::default()
        };
        let mut s = spec.to_state(cfg, seed).unwrap();
        let mut c = [
            Controller::Operator(OperatorModel::PassAgg),
            Controller::Operator(OperatorModel::Shootback),
        ];
        let mut rep = Replay::new(ReplayHeader::new(spec, cfg, seed, "pass_agg", "shootback"));
        play_game(&mut s, &mut c, |r| {
            rep.push(r);
        })
        .unwrap();
        rep.finish(&s);
        rep
    }

    #[test]
    fn round_trip() {
        let rep = recorded(4);
        let text = rep.to_jsonl();
        assert!(text.starts_with("{\"type\":\"header\""));
        let back = Replay::read(text.as_bytes()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn streaming_writer_matches() {
        let rep = recorded(5);
        let mut w = ReplayWriter::new(Vec::new(), &rep.header).unwrap();
        for st in &rep.steps {
            w.append(&StepRecord {
                phase: st.phase,
                faction: st.faction,
                action: st.action,
                assignments: st.assignments.clone(),
                events: st.events.clone(),
                score: st.score,
            })
            .unwrap();
        }
        let mut s = rep.header.initial_state().unwrap();
        for st in &rep.steps {
            s.apply_action(st.action).unwrap();
        }
        let out = w.finish(&s).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), rep.to_jsonl());
    }

    #[test]
    fn reexecution_reproduces_score() {
        for seed in 0..10 {
            let rep = recorded(seed);
            let s = rep.reexecute().unwrap();
            assert_eq!(s.game_score(), rep.end.as_ref().unwrap().final_score);
        }
    }

    #[test]
    fn truncated_names_last_valid_line() {
        let text = recorded(6).to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        let cut = lines[..4].join("\n");
        match Replay::read(cut.as_bytes()) {
            Err(ReplayError::Truncated { last_valid }) => assert_eq!(last_valid, 4),
            other => panic!("{other:?}"),
        }
        let partial = format!("{}\n{}", lines[..3].join("\n"), &lines[3][..lines[3].len() / 2]);
        match Replay::read(partial.as_bytes()) {
            Err(ReplayError::Truncated { last_valid }) => assert_eq!(last_valid, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrupt_line_reported() {
        let text = recorded(7).to_jsonl();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[2] = "{\"type\":\"step\",\"oops\":1}".into();
        match Replay::read(lines.join("\n").as_bytes()) {
            Err(ReplayError::Corrupt { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn digest_mismatch_detected() {
        let rep = recorded(8);
        let mut h = rep.header.clone();
        h.engine_seed += 1;
        let mut bad = rep.clone();
        bad.header = h;
        assert!(matches!(
            Replay::read(bad.to_jsonl().as_bytes()),
            Err(ReplayError::DigestMismatch { .. })
        ));
    }

    #[test]
    fn tampered_action_diverges() {
        let mut rep = recorded(9);
        let i = rep.steps.iter().position(|s| s.action.is_attack()).unwrap_or(0);
        rep.steps[i].action = Action::pass(rep.steps[i].action.unit);
        assert!(rep.reexecute().is_err());
    }
}
