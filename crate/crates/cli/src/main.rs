mod config;
mod serve;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use symbiot_core::fmcw::{write_archive, ScanTrace};
use symbiot_core::mission::{mcp_ledger, MissionOutcome};
use symbiot_core::scenario::{
    aid_from_log, outcome_from_log, replay, timeline, EventLog, LoadedScenario, RunOptions, Runner, TICK_MS,
};
use symbiot_core::twin::{TwinHub, TwinMessage};

use config::{FileConfig, ServiceConfig};
use serve::Shared;

/// Exit code for bad arguments, configuration or input files.
const EXIT_USAGE: u8 = 2;
/// Exit code when a replayed log fails a check.
const EXIT_REPLAY_FAILED: u8 = 1;

#[derive(Parser)]
#[command(name = "symbiot", version, about = "Inspection robot simulator and twin service")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario; the exit code reflects the mission outcome.
    Run(RunArgs),
    /// Re-check a recorded event log.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Render a report from a recorded event log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum)]
        kind: ReportKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Timeline,
    Mcp,
    Aid,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, env = "SYMBIOT_SEED")]
    seed: Option<u64>,
    /// Real-time factor; 0 runs as fast as possible.
    #[arg(long, env = "SYMBIOT_SPEED")]
    speed: Option<f64>,
    /// Never start the service, even if a listen address is configured.
    #[arg(long)]
    headless: bool,
    /// WebSocket and HTTP listen address.
    #[arg(long, env = "SYMBIOT_LISTEN")]
    serve: Option<String>,
    /// Plain TCP listen address.
    #[arg(long, env = "SYMBIOT_TCP_LISTEN")]
    tcp: Option<String>,
    #[arg(long, env = "SYMBIOT_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Per-session buffer, in messages.
    #[arg(long, env = "SYMBIOT_BUFFER_SIZE")]
    buffer_size: Option<usize>,
    #[arg(long, env = "SYMBIOT_CONFIG")]
    config: Option<PathBuf>,
    /// Event log output; scan traces go to `traces/` beside it.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Seconds to keep serving after the mission ends; waits for Ctrl-C if unset.
    #[arg(long)]
    linger: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => run(args),
        Cmd::Replay { log } => replay_cmd(&log),
        Cmd::Report { log, kind } => report_cmd(&log, kind),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(args: RunArgs) -> anyhow::Result<u8> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let service = config::resolve(file, args.serve, args.tcp, args.token, args.buffer_size)?;
    let speed = args.speed.unwrap_or(0.0);
    anyhow::ensure!(speed.is_finite() && speed >= 0.0, "speed must be a non-negative number");
    let scenario = LoadedScenario::load(&args.scenario)?;
    let opts = RunOptions {
        seed: args.seed,
        speed,
        hub: service.hub.clone(),
    };
    let runner = Runner::new(scenario, &opts)?;
    let serving = !args.headless && (service.listen.is_some() || service.tcp_listen.is_some());
    let (log, traces, outcome) = if serving {
        serve_run(runner, service, args.linger)?
    } else {
        headless_run(runner, &opts)
    };
    let outcome = outcome.context("run ended without an outcome")?;
    let log = EventLog::from_messages(log);
    if let Some(path) = &args.log {
        write_outputs(path, &log, &traces)?;
    }
    let summary = serde_json::json!({
        "outcome": outcome,
        "messages": log.messages.len(),
        "digest": log.digest(),
    });
    println!("{summary}");
    Ok(outcome.exit_code() as u8)
}

type RunOutput = (Vec<TwinMessage>, Vec<(String, ScanTrace)>, Option<MissionOutcome>);

fn collect(runner: &Runner, log: Vec<TwinMessage>) -> RunOutput {
    let traces = runner.traces().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    (log, traces, runner.outcome().cloned())
}

fn headless_run(mut runner: Runner, opts: &RunOptions) -> RunOutput {
    let mut hub = TwinHub::new(opts.hub.clone());
    runner.start(&mut hub);
    while runner.step(&mut hub) {
        if runner.speed() > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(TICK_MS as f64 / 1000.0 / runner.speed()));
        }
    }
    collect(&runner, hub.into_log())
}

fn serve_run(runner: Runner, service: ServiceConfig, linger: Option<u64>) -> anyhow::Result<RunOutput> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let shared = Shared::new(TwinHub::new(service.hub.clone()));
        if let Some(addr) = service.listen {
            let local = serve::bind_ws(shared.clone(), addr).await?;
            eprintln!("ws listening on {local}");
        }
        if let Some(addr) = service.tcp_listen {
            let local = serve::bind_tcp(shared.clone(), addr).await?;
            eprintln!("tcp listening on {local}");
        }
        let runner = serve::drive(shared.clone(), runner).await;
        let out = collect(&runner, shared.lock().log().to_vec());
        eprintln!("mission finished");
        match linger {
            Some(secs) => tokio::time::sleep(Duration::from_secs(secs)).await,
            None => tokio::signal::ctrl_c().await?,
        }
        Ok(out)
    })
}

fn write_outputs(path: &Path, log: &EventLog, traces: &[(String, ScanTrace)]) -> anyhow::Result<()> {
    log.write(path).with_context(|| format!("writing {}", path.display()))?;
    if traces.is_empty() {
        return Ok(());
    }
    let dir = path.parent().unwrap_or(Path::new(".")).join("traces");
    std::fs::create_dir_all(&dir)?;
    for (segment, trace) in traces {
        std::fs::write(dir.join(format!("{segment}.ndjson")), write_archive(trace))?;
    }
    Ok(())
}

fn read_log(path: &Path) -> anyhow::Result<EventLog> {
    EventLog::read(path).with_context(|| format!("reading {}", path.display()))
}

fn replay_cmd(path: &Path) -> anyhow::Result<u8> {
    let log = read_log(path)?;
    let report = replay(&log);
    for c in &report.checks {
        println!("{:<4} {:<20} {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(o) = outcome_from_log(&log.messages) {
        println!("outcome exit {}", o.exit_code());
    }
    Ok(if report.passed() { 0 } else { EXIT_REPLAY_FAILED })
}

fn report_cmd(path: &Path, kind: ReportKind) -> anyhow::Result<u8> {
    let log = read_log(path)?;
    match kind {
        ReportKind::Timeline => print!("{}", timeline(&log.messages).render()),
        ReportKind::Mcp => {
            for row in mcp_ledger(&log.messages) {
                let rel = format!("{:?}", row.relationship);
                println!("{:>6}  {rel:<12}  {:<32}  {}", row.seq, row.event, row.rationale);
            }
        }
        ReportKind::Aid => {
            let report = aid_from_log(&log.messages)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(0)
}
