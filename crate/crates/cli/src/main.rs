use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hexstrat::harness::{run_eval, EvalConfig, PolicyArg};
use hexstrat::serve::{serve, ServeConfig};
use hexstrat_core::replay::Replay;
use hexstrat_core::{EngineConfig, ScenarioParams};

#[derive(Parser)]
#[command(name = "hexstrat", version, about = "Hex-grid combat simulation harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Standard,
    Multimodel,
    Manager,
    Hrl,
}

#[derive(Subcommand)]
enum Cmd {
    /// Play many games and report mean, SEM and per-game rows.
    Eval {
        /// Model name, multimodel.json or hrl.json.
        #[arg(long)]
        blue: String,
        #[arg(long)]
        red: String,
        #[arg(long, default_value_t = 100)]
        games: u64,
        #[arg(long, default_value_t = 0)]
        scenario_cycle: u32,
        #[arg(long, default_value_t = 0)]
        scenario_seed: u64,
        /// Board length for the standard preset.
        #[arg(long, default_value_t = 5)]
        board: i32,
        #[arg(long, value_enum, default_value = "standard")]
        preset: Preset,
        #[arg(long)]
        deterministic: bool,
        /// Let games run to the phase limit even after a side is wiped out.
        #[arg(long)]
        no_early_termination: bool,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long)]
        replay_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Human-vs-AI play.
    Play {
        /// Address to serve on, e.g. :8080 or 127.0.0.1:8080.
        #[arg(long)]
        serve: String,
        #[arg(long, default_value = "pass_agg")]
        red: String,
        #[arg(long, default_value_t = 5)]
        board: i32,
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value = "replays")]
        replay_dir: PathBuf,
    },
    /// Validate a replay log and re-execute it.
    Replay { file: PathBuf },
}

fn parse_addr(s: &str) -> Result<SocketAddr, String> {
    let full = if s.starts_with(':') { format!("0.0.0.0{s}") } else { s.to_string() };
    full.parse().map_err(|e| format!("bad address {s}: {e}"))
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Eval {
            blue,
            red,
            games,
            scenario_cycle,
            scenario_seed,
            board,
            preset,
            deterministic,
            no_early_termination,
            out,
            replay_dir,
            workers,
        } => {
            let scenario = match preset {
                Preset::Standard => ScenarioParams::standard(board),
                Preset::Multimodel => ScenarioParams::multimodel(),
                Preset::Manager => ScenarioParams::manager(),
                Preset::Hrl => ScenarioParams::hrl(),
            };
            let blue = PolicyArg::parse(&blue).map_err(|e| e.to_string())?;
            let red = PolicyArg::parse(&red).map_err(|e| e.to_string())?;
            let mut cfg = EvalConfig::new(blue, red, scenario, games);
            cfg.scenario_seed = scenario_seed;
            cfg.scenario_cycle = scenario_cycle;
            cfg.engine = EngineConfig {
                deterministic,
                early_termination: !no_early_termination,
                ..EngineConfig::default()
            };
            cfg.workers = workers;
            cfg.replay_dir = replay_dir;
            let report = run_eval(&cfg, Some(&out)).map_err(|e| e.to_string())?;
            println!("games {}  mean {:.4}  sem {:.4}{}", report.n, report.mean, report.sem,
                if report.sem_degenerate { " (single game)" } else { "" });
            for u in &report.usage {
                let parts: Vec<String> =
                    u.models.iter().zip(&u.percent).map(|(m, p)| format!("{m} {p:.1}%")).collect();
                println!("{:?} selection: {}", u.echelon, parts.join(", "));
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::Play {
            serve: addr,
            red,
            board,
            deterministic,
            replay_dir,
        } => {
            let addr = parse_addr(&addr)?;
            let mut cfg = ServeConfig::new(PolicyArg::parse(&red).map_err(|e| e.to_string())?, replay_dir);
            cfg.board = board;
            cfg.deterministic = deterministic;
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            println!("serving on {addr}");
            rt.block_on(serve(cfg, addr)).map_err(|e| e.to_string())
        }
        Cmd::Replay { file } => {
            let rep = Replay::load(&file).map_err(|e| e.to_string())?;
            let s = rep.reexecute().map_err(|e| e.to_string())?;
            let end = rep.end.as_ref().expect("loaded replays have an end line");
            println!("{}: {} vs {}", file.display(), rep.header.blue, rep.header.red);
            println!("steps {}  phases {}  final score {}", end.steps, end.phases_played, end.final_score);
            println!("re-executed score {} ({})", s.game_score(),
                if s.game_score() == end.final_score { "match" } else { "MISMATCH" });
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
