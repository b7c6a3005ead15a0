// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use loopbench_core::canonical::canonical;
use loopbench_core::config::RealizationConfig;
use loopbench_core::realization::{realize, GrammarTranslator};
use loopbench_core::scenario::{run, RunError, RunOptions, ScenarioDoc};
use loopbench_core::Intent;
use loopbench_gateway::api::{router, AppState};
use loopbench_gateway::writer::{self, Command, Reply};
use serde_json::json;
use tracing::{info, warn};

#[derive(Parser)]
#[command(name = "loopbench", version, about = "Intent-based networking closed loop over a simulated domain")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario headless and write its event log and KPI CSV.
    Run {
        /// Built-in scenario name (s1, s2, s-canary) or path to a scenario document.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        ticks: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Realize each intent in a file (one per line) without activating anything.
    Validate {
        intent_file: PathBuf,
        /// Correction attempts per intent.
        #[arg(long, default_value_t = RealizationConfig::default().max_attempts)]
        max_attempts: u32,
    },
    /// Serve the HTTP API over a live loop.
    Serve {
        #[arg(long, env = "LOOPBENCH_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "LOOPBENCH_DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Scenario loaded when the data directory holds none.
        #[arg(long, default_value = "s1")]
        scenario: String,
        /// Milliseconds between automatic ticks; 0 steps only on POST /tick.
        #[arg(long, env = "LOOPBENCH_TICK_MS", default_value_t = 0)]
        tick_ms: u64,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run { scenario, ticks, seed, out } => run_cmd(&scenario, ticks, seed, out),
        Cmd::Validate { intent_file, max_attempts } => validate_cmd(&intent_file, max_attempts),
        Cmd::Serve { port, data_dir, scenario, tick_ms, bind } => {
            match serve_cmd(SocketAddr::new(bind, port), data_dir, &scenario, tick_ms) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("loopbench: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}

fn run_cmd(scenario: &str, ticks: Option<u64>, seed: Option<u64>, out: PathBuf) -> ExitCode {
    let doc = match ScenarioDoc::load(scenario) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("loopbench: invalid scenario {scenario}: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&doc, &RunOptions { ticks, seed, out_dir: Some(out.clone()) }) {
        Ok(engine) => {
            info!(scenario = %doc.scenario_id, tick = engine.tick(), events = engine.log().head(), out = %out.display(), "run complete");
            ExitCode::SUCCESS
        }
        Err(RunError::Scenario(e)) => {
            eprintln!("loopbench: invalid scenario {scenario}: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("loopbench: {e}");
            ExitCode::FAILURE
        }
    }
}

fn validate_cmd(path: &PathBuf, max_attempts: u32) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("loopbench: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let cfg = RealizationConfig { max_attempts, ..RealizationConfig::default() };
    let mut failed = 0usize;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let intent = Intent::new(format!("line-{}", n + 1), line.to_string(), 0);
        let row = match realize(&intent, &mut GrammarTranslator, &cfg) {
            Ok(r) => json!({ "line": n + 1, "ok": true, "policy": r.policy }),
            Err(f) => {
                failed += 1;
                json!({ "line": n + 1, "ok": false, "attempts": f.attempts })
            }
        };
        println!("{}", canonical(&row));
    }
    if failed > 0 {
        eprintln!("loopbench: {failed} intent(s) failed to realize");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn serve_cmd(addr: SocketAddr, data_dir: Option<PathBuf>, scenario: &str, tick_ms: u64) -> anyhow::Result<()> {
    let doc = ScenarioDoc::load(scenario).with_context(|| format!("scenario {scenario}"))?;
    let handle = writer::spawn(doc, data_dir).context("opening the control loop")?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        if tick_ms > 0 {
            let h = handle.clone();
            tokio::spawn(async move {
                let mut every = tokio::time::interval(Duration::from_millis(tick_ms));
                every.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
                loop {
                    every.tick().await;
                    match h.run(Command::Tick).await {
                        Some(Reply::Tick(Ok(_))) => {}
                        Some(Reply::Tick(Err(e))) => {
                            warn!(error = %e, "tick failed; auto-tick stopped");
                            break;
                        }
                        _ => break,
                    }
                }
            });
        }
        let app = router(AppState { handle, auto_tick: tick_ms > 0 });
        let listener = tokio::net::TcpListener::bind(addr).await?;
        info!(addr = %listener.local_addr()?, "listening");
        // Event streams never end on their own, so draining is bounded.
        let (stopping, stopped) = tokio::sync::oneshot::channel::<()>();
        let server = axum::serve(listener, app).with_graceful_shutdown(async move {
            shutdown().await;
            let _ = stopping.send(());
        });
        tokio::select! {
            r = server => r?,
            _ = async {
                let _ = stopped.await;
                tokio::time::sleep(Duration::from_secs(3)).await;
            } => {}
        }
        Ok(())
    })
}

async fn shutdown() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
    info!("shutting down");
}
