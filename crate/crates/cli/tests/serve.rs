use std::net::SocketAddr;

use futures::StreamExt;
use hexstrat::harness::PolicyArg;
use hexstrat::serve::{spawn, ReplayEntry, ServeConfig};
use hexstrat_core::engine::UnitKind;
use hexstrat_core::replay::{Replay, ReplayStep};
use hexstrat_core::scenario::{ScenarioSpec, UnitSpec};
use hexstrat_core::{Action, BoardDims, Faction, HexCoord};
use serde_json::{json, Value};

async fn start(red: &str) -> (SocketAddr, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ServeConfig::new(PolicyArg::model(red), dir.path().to_path_buf());
    cfg.deterministic = true;
    let addr = spawn(cfg, "127.0.0.1:0".parse().unwrap()).await.unwrap();
    (addr, dir)
}

fn standoff(phases: u32) -> ScenarioSpec {
    let unit = |id, faction, col, row| UnitSpec {
        id,
        faction,
        kind: UnitKind::default(),
        strength: 100.0,
        pos: HexCoord::new(col, row),
        manager: None,
        commander: None,
    };
    ScenarioSpec {
        schema: 1,
        dims: BoardDims::square(6),
        units: vec![unit(0, Faction::Blue, 0, 0), unit(1, Faction::Red, 5, 5)],
        urban_hexes: vec![],
        num_phases: phases,
        seed_used: 0,
    }
}

async fn create(c: &reqwest::Client, addr: SocketAddr, body: Value) -> Value {
    let r = c.post(format!("http://{addr}/games")).json(&body).send().await.unwrap();
    assert_eq!(r.status(), 201);
    r.json().await.unwrap()
}

async fn act(c: &reqwest::Client, addr: SocketAddr, id: u64, a: Action) -> reqwest::Response {
    c.post(format!("http://{addr}/games/{id}/actions")).json(&a).send().await.unwrap()
}

#[tokio::test]
async fn same_seed_same_game() {
    let (addr, _dir) = start("pass_agg").await;
    let c = reqwest::Client::new();
    let mut a = create(&c, addr, json!({"seed": 42, "board": 6})).await;
    let mut b = create(&c, addr, json!({"seed": 42, "board": 6})).await;
    assert_ne!(a["id"], b["id"]);
    for v in [&mut a, &mut b] {
        v["id"] = Value::Null;
        v["state"]["id"] = Value::Null;
    }
    assert_eq!(a, b);
    assert_eq!(a["state"]["schema"], 1);
    assert!(!a["state"]["legal_actions"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn illegal_action_is_rejected() {
    let (addr, _dir) = start("pass").await;
    let c = reqwest::Client::new();
    let created = create(&c, addr, json!({"seed": 3})).await;
    let id = created["id"].as_u64().unwrap();
    let before: Value = c.get(format!("http://{addr}/games/{id}/state")).send().await.unwrap().json().await.unwrap();
    let bogus = Action::move_to(9999, HexCoord::new(-5, -5));
    let r = act(&c, addr, id, bogus).await;
    assert_eq!(r.status(), 422);
    let rej: Value = r.json().await.unwrap();
    assert_eq!(rej["legal"], before["legal_actions"]);
    assert!(rej["error"].is_string());
    let after: Value = c.get(format!("http://{addr}/games/{id}/state")).send().await.unwrap().json().await.unwrap();
    assert_eq!(before, after);
}

#[tokio::test]
async fn unknown_game_is_404() {
    let (addr, _dir) = start("pass").await;
    let c = reqwest::Client::new();
    let r = c.get(format!("http://{addr}/games/777/state")).send().await.unwrap();
    assert_eq!(r.status(), 404);
    assert_eq!(act(&c, addr, 777, Action::pass(0)).await.status(), 404);
    assert_eq!(c.get(format!("http://{addr}/replays/nope")).send().await.unwrap().status(), 404);
    assert_eq!(c.get(format!("http://{addr}/replays/..%2Fx")).send().await.unwrap().status(), 404);
}

#[tokio::test]
async fn passive_game_streams_and_saves_replay() {
    let (addr, _dir) = start("shootback").await;
    let c = reqwest::Client::new();
    let created = create(&c, addr, json!({"scenario": standoff(6)})).await;
    let id = created["id"].as_u64().unwrap();

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/games/{id}/events")).await.unwrap();

    let mut state = created["state"].clone();
    let mut human_moves = 0;
    while !state["terminal"].as_bool().unwrap() {
        let unit = state["current_unit"].as_u64().unwrap() as u32;
        let r = act(&c, addr, id, Action::pass(unit)).await;
        assert_eq!(r.status(), 200);
        state = r.json().await.unwrap();
        human_moves += 1;
    }
    assert_eq!(human_moves, 3);
    assert_eq!(state["total"], 0.0);
    assert_eq!(state["phase"], 6);

    let mut streamed = Vec::new();
    while streamed.len() < 6 {
        let msg = tokio::time::timeout(std::time::Duration::from_secs(10), ws.next())
            .await
            .expect("event within timeout")
            .unwrap()
            .unwrap();
        let step: ReplayStep = serde_json::from_str(msg.to_text().unwrap()).unwrap();
        streamed.push(step);
    }
    assert_eq!(streamed.iter().map(|s| s.step).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
    assert!(streamed.iter().all(|s| s.action == Action::pass(s.action.unit)));

    let list: Vec<ReplayEntry> = c.get(format!("http://{addr}/replays")).send().await.unwrap().json().await.unwrap();
    let name = format!("game-{id}");
    assert!(list.iter().any(|e| e.id == name));
    let r = c.get(format!("http://{addr}/replays/{name}")).send().await.unwrap();
    assert_eq!(r.headers()["content-type"], "application/x-ndjson");
    let replay = Replay::read(r.text().await.unwrap().as_bytes()).unwrap();
    assert_eq!(replay.steps, streamed);
    let end = replay.reexecute().unwrap();
    assert_eq!(end.game_score(), 0.0);
    assert_eq!(replay.end.unwrap().final_score, 0.0);

    let late = act(&c, addr, id, Action::pass(0)).await;
    assert_eq!(late.status(), 422);
}
