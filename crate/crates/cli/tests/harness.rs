use hexstrat::harness::{
    normalize_to_baseline, read_csv, run_eval, run_match, sample_std, EvalConfig, HarnessError, PolicyArg,
};
use hexstrat_core::replay::Replay;
use hexstrat_core::scenario::{generate, ScenarioParams, ScenarioSpec, UnitSpec};
use hexstrat_core::engine::UnitKind;
use hexstrat_core::{BoardDims, EngineConfig, Faction, HexCoord};

fn det() -> EngineConfig {
    EngineConfig {
        deterministic: true,
        ..EngineConfig::default()
    }
}

fn unit(id: u32, faction: Faction, col: i32, row: i32) -> UnitSpec {
    UnitSpec {
        id,
        faction,
        kind: UnitKind::default(),
        strength: 100.0,
        pos: HexCoord::new(col, row),
        manager: None,
        commander: None,
    }
}

fn custom(units: Vec<UnitSpec>, cities: Vec<HexCoord>, phases: u32) -> ScenarioSpec {
    ScenarioSpec {
        schema: 1,
        dims: BoardDims::square(6),
        units,
        urban_hexes: cities,
        num_phases: phases,
        seed_used: 0,
    }
}

#[test]
fn pass_agg_mirror_is_reproducible() {
    let spec = generate(&ScenarioParams::standard(6), 11).unwrap();
    let p = PolicyArg::model("pass_agg");
    let first = run_match(&p, &p, &spec, det(), 11).unwrap();
    for _ in 0..5 {
        let again = run_match(&p, &p, &spec, det(), 11).unwrap();
        assert_eq!(again.score.to_bits(), first.score.to_bits());
        assert_eq!(again.replay, first.replay);
    }
}

#[test]
fn shootback_standoff_scores_zero() {
    let spec = custom(vec![unit(0, Faction::Blue, 0, 0), unit(1, Faction::Red, 5, 5)], vec![], 12);
    let p = PolicyArg::model("shootback");
    let m = run_match(&p, &p, &spec, det(), 0).unwrap();
    assert_eq!(m.score, 0.0);
    assert_eq!(m.phases_played, 12);
}

#[test]
fn lone_city_holder_accrues_points() {
    let spec = custom(vec![unit(0, Faction::Blue, 1, 2)], vec![HexCoord::new(2, 2)], 5);
    let engine = EngineConfig {
        early_termination: false,
        ..det()
    };
    let m = run_match(&PolicyArg::model("city"), &PolicyArg::model("pass"), &spec, engine, 0).unwrap();
    assert!(m.score >= 4.0 * 24.0, "{}", m.score);
    assert_eq!(m.score % 24.0, 0.0);
    let back = Replay::read(m.replay.to_jsonl().as_bytes()).unwrap();
    assert_eq!(back.reexecute().unwrap().game_score(), m.score);
}

#[test]
fn cycle_two_repeats_games() {
    let mut cfg = EvalConfig::new(
        PolicyArg::model("pass_agg"),
        PolicyArg::model("shootback"),
        ScenarioParams::standard(5),
        4,
    );
    cfg.scenario_cycle = 2;
    cfg.engine = det();
    let r = run_eval(&cfg, None).unwrap();
    let s = r.scores();
    assert_eq!(s[0], s[2]);
    assert_eq!(s[1], s[3]);
    assert_eq!(r.games[0].scenario_seed, r.games[2].scenario_seed);
}

#[test]
fn single_game_sem_is_flagged_zero() {
    let cfg = EvalConfig::new(PolicyArg::model("agg"), PolicyArg::model("pass"), ScenarioParams::standard(5), 1);
    let r = run_eval(&cfg, None).unwrap();
    assert_eq!(r.mean, r.games[0].score);
    assert_eq!(r.sem, 0.0);
    assert!(r.sem_degenerate);
}

#[test]
fn csv_and_summary_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results.csv");
    let mut cfg = EvalConfig::new(PolicyArg::model("killer"), PolicyArg::model("city"), ScenarioParams::standard(6), 37);
    cfg.replay_dir = Some(dir.path().join("replays"));
    let r = run_eval(&cfg, Some(&out)).unwrap();
    let rows = read_csv(&out).unwrap();
    assert_eq!(rows.len(), 37);
    assert_eq!(rows, r.games);
    let csv_mean = rows.iter().map(|r| r.score).sum::<f64>() / rows.len() as f64;
    assert!((csv_mean - r.mean).abs() < 1e-9);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["n"], 37);
    let header = std::fs::read_to_string(&out).unwrap();
    assert!(header.starts_with("schema,index,seed,scenario_seed,score,phases_played,blue_losses,red_losses"));
    let replay = Replay::load(dir.path().join("replays/game-000003.jsonl")).unwrap();
    assert_eq!(replay.end.unwrap().final_score, rows[3].score);
}

#[test]
fn multimodel_usage_sums_to_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mm.json");
    std::fs::write(
        &path,
        r#"{"kind":"multimodel","models":[
            {"model":"pass","predictor":{"type":"rollout"}},
            {"model":"agg","predictor":{"type":"rollout"}},
            {"model":"city","predictor":{"type":"rollout"}}]}"#,
    )
    .unwrap();
    let mut cfg = EvalConfig::new(
        PolicyArg::parse(path.to_str().unwrap()).unwrap(),
        PolicyArg::model("pass_agg"),
        ScenarioParams::standard(4),
        6,
    );
    cfg.engine = det();
    let r = run_eval(&cfg, None).unwrap();
    assert_eq!(r.usage.len(), 1);
    let total: f64 = r.usage[0].percent.iter().sum();
    assert!((total - 100.0).abs() < 1e-9);
    assert_eq!(r.usage[0].models, ["pass", "agg", "city"]);
}

#[test]
fn failing_worker_reports_partial_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"kind":"multimodel","models":[{"model":"pass","predictor":{"type":"linear","path":"missing.json"}}]}"#,
    )
    .unwrap();
    let cfg = EvalConfig::new(
        PolicyArg::parse(path.to_str().unwrap()).unwrap(),
        PolicyArg::model("pass"),
        ScenarioParams::standard(4),
        3,
    );
    let out = dir.path().join("r.csv");
    match run_eval(&cfg, Some(&out)) {
        Err(HarnessError::Worker { game, partial: Some(p), .. }) => {
            assert_eq!(game, 0);
            assert!(p.exists());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn baseline_normalization() {
    let s2 = 2f64.sqrt();
    let base = [-s2, s2];
    assert!((sample_std(&base) - 2.0).abs() < 1e-12);
    let z = normalize_to_baseline(&[0.0, 4.0], &base).unwrap();
    assert_eq!(z[0], 0.0);
    assert!((z[1] - 2.0).abs() < 1e-12);
    let baseline = [3.0, -1.0, 7.5, 2.0, 0.25];
    let own = normalize_to_baseline(&baseline, &baseline).unwrap();
    assert!(own.iter().sum::<f64>().abs() < 1e-12);
    assert!((sample_std(&own) - 1.0).abs() < 1e-12);
    assert!(matches!(normalize_to_baseline(&[1.0], &[2.0, 2.0]), Err(HarnessError::ZeroVariance)));
}

#[test]
fn zero_games_rejected() {
    let cfg = EvalConfig::new(PolicyArg::model("pass"), PolicyArg::model("pass"), ScenarioParams::standard(4), 0);
    assert!(matches!(run_eval(&cfg, None), Err(HarnessError::NoGames)));
}
