//! HTTP and WebSocket game server.
//!
//! Each live game is owned by one actor thread; handlers talk to it over a
//! channel and applied steps fan out to WebSocket subscribers.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hexstrat_core::engine::ScoreBreakdown;
use hexstrat_core::hierarchy::Assignment;
use hexstrat_core::multimodel::Echelon;
use hexstrat_core::replay::{Replay, ReplayHeader};
use hexstrat_core::scenario::{generate, ScenarioParams};
use hexstrat_core::{
    Action, BoardDims, Controller, EngineConfig, Faction, GameState, HexCoord, PolicySpec, ScenarioSpec, Unit, UnitId,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot};

use crate::harness::PolicyArg;

pub const RENDER_SCHEMA: u32 = 1;

/// Hex layout shared with clients.
pub const LAYOUT: &str = "pointy-top odd-r: row 0 is north, odd rows shift half a hex east; \
neighbor order E,NE,NW,W,SW,SE";

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub red: PolicyArg,
    pub human: Faction,
    pub board: i32,
    pub deterministic: bool,
    pub replay_dir: PathBuf,
}

impl ServeConfig {
    pub fn new(red: PolicyArg, replay_dir: PathBuf) -> Self {
        Self {
            red,
            human: Faction::Blue,
            board: 5,
            deterministic: false,
            replay_dir,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CityView {
    pub hex: HexCoord,
    pub owner: Option<Faction>,
}

/// Everything a client needs to draw the current position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderModel {
    pub schema: u32,
    pub id: u64,
    pub layout: String,
    pub dims: BoardDims,
    pub phase: u32,
    pub num_phases: u32,
    pub on_move: Faction,
    pub human: Faction,
    pub units: Vec<Unit>,
    pub cities: Vec<CityView>,
    pub areas: Vec<Assignment>,
    pub score: ScoreBreakdown,
    pub total: f64,
    pub terminal: bool,
    pub current_unit: Option<UnitId>,
    pub legal_actions: Vec<Action>,
    pub steps: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rejection {
    pub error: String,
    pub legal: Vec<Action>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct CreateGame {
    pub seed: Option<u64>,
    pub board: Option<i32>,
    /// A model name, a policy file path, or an inline policy object.
    pub red: Option<serde_json::Value>,
    pub human: Option<Faction>,
    pub deterministic: Option<bool>,
    pub scenario: Option<ScenarioSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: u64,
    pub state: RenderModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub id: String,
    pub bytes: u64,
}

enum Cmd {
    State(oneshot::Sender<RenderModel>),
    Act(Action, oneshot::Sender<Result<RenderModel, Rejection>>),
}

#[derive(Clone)]
struct GameHandle {
    tx: mpsc::Sender<Cmd>,
    events: broadcast::Sender<String>,
}

#[derive(Clone)]
pub struct AppState {
    cfg: Arc<ServeConfig>,
    games: Arc<Mutex<HashMap<u64, GameHandle>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(cfg: ServeConfig) -> Self {
        Self {
            cfg: Arc::new(cfg),
            games: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    fn handle(&self, id: u64) -> Option<GameHandle> {
        self.games.lock().expect("game table").get(&id).cloned()
    }
}

struct Session {
    id: u64,
    state: GameState,
    ai: Controller,
    human: Faction,
    replay: Replay,
    areas: BTreeMap<(Faction, Echelon, u32), Assignment>,
    events: broadcast::Sender<String>,
    replay_dir: PathBuf,
    saved: bool,
    error: Option<String>,
}

impl Session {
    fn record(&mut self, phase: u32, faction: Faction, action: Action, events: Vec<hexstrat_core::Event>) {
        let assignments = self.ai.take_assignments();
        for a in &assignments {
            self.areas.insert((a.faction, a.level, a.id), a.clone());
        }
        let rec = hexstrat_core::play::StepRecord {
            phase,
            faction,
            action,
            assignments,
            events,
            score: self.state.score,
        };
        let step = self.replay.push(&rec);
        let _ = self.events.send(serde_json::to_string(step).expect("step serializes"));
    }

    fn advance_ai(&mut self) {
        while let Some(u) = self.state.current_unit() {
            if self.state.on_move == self.human || self.error.is_some() {
                break;
            }
            let mut rng = self.state.rng.clone();
            let action = match self.ai.act(&self.state, u, &mut rng) {
                Ok(a) => a,
                Err(e) => {
                    self.error = Some(e.to_string());
                    break;
                }
            };
            self.state.rng = rng;
            let (phase, faction) = (self.state.phase, self.state.on_move);
            match self.state.apply_action(action) {
                Ok(ev) => self.record(phase, faction, action, ev),
                Err(e) => {
                    self.error = Some(e.to_string());
                    break;
                }
            }
        }
        self.save_if_done();
    }

    fn save_if_done(&mut self) {
        if self.saved || !self.state.is_terminal() {
            return;
        }
        self.replay.finish(&self.state);
        self.saved = true;
        let path = self.replay_dir.join(format!("game-{}.jsonl", self.id));
        if let Err(e) = std::fs::create_dir_all(&self.replay_dir).and_then(|_| {
            self.replay
                .save(&path)
                .map_err(|e| std::io::Error::other(e.to_string()))
        }) {
            self.error = Some(format!("saving replay: {e}"));
        }
    }

    fn legal(&self) -> Vec<Action> {
        match self.state.current_unit() {
            Some(u) if self.state.on_move == self.human => self.state.legal_actions(u).unwrap_or_default(),
            _ => Vec::new(),
        }
    }

    fn render(&self) -> RenderModel {
        let s = &self.state;
        RenderModel {
            schema: RENDER_SCHEMA,
            id: self.id,
            layout: LAYOUT.to_string(),
            dims: s.dims,
            phase: s.phase,
            num_phases: s.num_phases,
            on_move: s.on_move,
            human: self.human,
            units: s.units().to_vec(),
            cities: s.cities().iter().map(|(&hex, &owner)| CityView { hex, owner }).collect(),
            areas: self.areas.values().cloned().collect(),
            score: s.score,
            total: s.game_score(),
            terminal: s.is_terminal(),
            current_unit: s.current_unit(),
            legal_actions: self.legal(),
            steps: self.replay.steps.len() as u64,
            error: self.error.clone(),
        }
    }

    fn submit(&mut self, a: Action) -> Result<RenderModel, Rejection> {
        let legal = self.legal();
        if !legal.contains(&a) {
            let error = if self.state.is_terminal() {
                "game is over".to_string()
            } else if self.state.on_move != self.human {
                "not the human's turn".to_string()
            } else {
                "action is not legal".to_string()
            };
            return Err(Rejection { error, legal });
        }
        let (phase, faction) = (self.state.phase, self.state.on_move);
        let ev = self.state.apply_action(a).map_err(|e| Rejection {
            error: e.to_string(),
            legal: legal.clone(),
        })?;
        self.record(phase, faction, a, ev);
        self.advance_ai();
        Ok(self.render())
    }

    fn run(mut self, mut rx: mpsc::Receiver<Cmd>) {
        self.advance_ai();
        while let Some(cmd) = rx.blocking_recv() {
            match cmd {
                Cmd::State(reply) => {
                    let _ = reply.send(self.render());
                }
                Cmd::Act(a, reply) => {
                    let _ = reply.send(self.submit(a));
                }
            }
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/games", post(create_game))
        .route("/games/{id}/state", get(game_state))
        .route("/games/{id}/actions", post(submit_action))
        .route("/games/{id}/events", get(game_events))
        .route("/replays", get(list_replays))
        .route("/replays/{id}", get(fetch_replay))
        .with_state(state)
}

fn error(code: StatusCode, msg: impl Into<String>) -> Response {
    (code, Json(serde_json::json!({ "error": msg.into() }))).into_response()
}

fn not_found(id: u64) -> Response {
    error(StatusCode::NOT_FOUND, format!("no game {id}"))
}

fn resolve_red(v: &Option<serde_json::Value>, default: &PolicyArg) -> Result<PolicyArg, String> {
    match v {
        None => Ok(default.clone()),
        Some(serde_json::Value::String(s)) => PolicyArg::parse(s).map_err(|e| e.to_string()),
        Some(obj) => {
            let spec: PolicySpec = serde_json::from_value(obj.clone()).map_err(|e| e.to_string())?;
            Ok(PolicyArg {
                spec,
                base: PathBuf::new(),
                label: "inline".into(),
            })
        }
    }
}

async fn create_game(State(app): State<AppState>, body: Option<Json<CreateGame>>) -> Response {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let cfg = &app.cfg;
    let seed = req.seed.unwrap_or(0);
    let human = req.human.unwrap_or(cfg.human);
    let red = match resolve_red(&req.red, &cfg.red) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let spec = match req.scenario {
        Some(s) => s,
        None => match generate(&ScenarioParams::standard(req.board.unwrap_or(cfg.board)), seed) {
            Ok(s) => s,
            Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
        },
    };
    let engine = EngineConfig {
        deterministic: req.deterministic.unwrap_or(cfg.deterministic),
        ..EngineConfig::default()
    };
    let state = match spec.to_state(engine, seed) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let ai = match red.spec.build(human.opponent(), &red.base) {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    let (human_name, ai_name) = ("human".to_string(), ai.name());
    let (blue, redn) = match human {
        Faction::Blue => (human_name, ai_name),
        Faction::Red => (ai_name, human_name),
    };
    let (events, _) = broadcast::channel(1024);
    let session = Session {
        id,
        state,
        ai,
        human,
        replay: Replay::new(ReplayHeader::new(spec, engine, seed, &blue, &redn)),
        areas: BTreeMap::new(),
        events: events.clone(),
        replay_dir: cfg.replay_dir.clone(),
        saved: false,
        error: None,
    };
    let (tx, rx) = mpsc::channel(64);
    tokio::task::spawn_blocking(move || session.run(rx));
    app.games
        .lock()
        .expect("game table")
        .insert(id, GameHandle { tx: tx.clone(), events });
    match query_state(&tx).await {
        Some(state) => (StatusCode::CREATED, Json(Created { id, state })).into_response(),
        None => error(StatusCode::INTERNAL_SERVER_ERROR, "game actor stopped"),
    }
}

async fn query_state(tx: &mpsc::Sender<Cmd>) -> Option<RenderModel> {
    let (reply, rx) = oneshot::channel();
    tx.send(Cmd::State(reply)).await.ok()?;
    rx.await.ok()
}

async fn game_state(State(app): State<AppState>, Path(id): Path<u64>) -> Response {
    let Some(h) = app.handle(id) else {
        return not_found(id);
    };
    match query_state(&h.tx).await {
        Some(s) => Json(s).into_response(),
        None => error(StatusCode::INTERNAL_SERVER_ERROR, "game actor stopped"),
    }
}

async fn submit_action(State(app): State<AppState>, Path(id): Path<u64>, Json(a): Json<Action>) -> Response {
    let Some(h) = app.handle(id) else {
        return not_found(id);
    };
    let (reply, rx) = oneshot::channel();
    if h.tx.send(Cmd::Act(a, reply)).await.is_err() {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "game actor stopped");
    }
    match rx.await {
        Ok(Ok(s)) => Json(s).into_response(),
        Ok(Err(rej)) => (StatusCode::UNPROCESSABLE_ENTITY, Json(rej)).into_response(),
        Err(_) => error(StatusCode::INTERNAL_SERVER_ERROR, "game actor stopped"),
    }
}

async fn game_events(State(app): State<AppState>, Path(id): Path<u64>, ws: WebSocketUpgrade) -> Response {
    let Some(h) = app.handle(id) else {
        return not_found(id);
    };
    let rx = h.events.subscribe();
    ws.on_upgrade(move |socket| forward_events(socket, rx))
}

async fn forward_events(mut socket: WebSocket, mut rx: broadcast::Receiver<String>) {
    loop {
        match rx.recv().await {
            Ok(msg) => {
                if socket.send(Message::Text(msg.into())).await.is_err() {
                    return;
                }
            }
            Err(broadcast::error::RecvError::Lagged(_)) => continue,
            Err(broadcast::error::RecvError::Closed) => return,
        }
    }
}

fn valid_replay_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn list_replays(State(app): State<AppState>) -> Response {
    let mut out = Vec::new();
    if let Ok(dir) = std::fs::read_dir(&app.cfg.replay_dir) {
        for entry in dir.flatten() {
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                    let bytes = entry.metadata().map(|m| m.len()).unwrap_or(0);
                    out.push(ReplayEntry {
                        id: stem.to_string(),
                        bytes,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out).into_response()
}

async fn fetch_replay(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    if !valid_replay_id(&id) {
        return error(StatusCode::NOT_FOUND, format!("no replay {id}"));
    }
    match std::fs::read_to_string(app.cfg.replay_dir.join(format!("{id}.jsonl"))) {
        Ok(text) => ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("no replay {id}")),
    }
}

/// Bind and serve until the task is dropped.
pub async fn serve(cfg: ServeConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(cfg))).await
}

/// Bind on `addr` and serve in the background; returns the bound address.
pub async fn spawn(cfg: ServeConfig, addr: SocketAddr) -> std::io::Result<SocketAddr> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        let _ = axum::serve(listener, router(AppState::new(cfg))).await;
    });
    Ok(local)
}
