// SPDX-License-Identifier: Apache-2.0

//! The single writer. One OS thread owns the engine, the event log and the
//! command journal; everything else talks to it over a queue.
//!
//! Commands are journaled before they run. Because the engine is
//! deterministic in (scenario, seed, command sequence), a restart rebuilds
//! its full state by replaying the journal against the surviving event log,
//! which is checked record by record along the way.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::thread;

use loopbench_core::conflict::Decision;
use loopbench_core::engine::{CommandError, DecisionOutcome, Engine, EngineError, SubmitOutcome};
use loopbench_core::events::{read_log, truncate_log, EventLog, EventRecord};
use loopbench_core::scenario::{write_snapshot, ScenarioDoc, EVENTS_FILE, KPI_FILE, STORE_FILE};
use loopbench_core::IntentStore;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot, watch};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const JOURNAL_FILE: &str = "commands.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd")]
pub enum Command {
    Submit { text: String },
    Resolve { escalation_id: String, decision: Decision },
    DecidePlan { plan_id: String, approve: bool },
    Tick,
}

#[derive(Debug)]
pub enum Reply {
    Submit(Result<SubmitOutcome, CommandError>),
    Decision(Result<DecisionOutcome, CommandError>),
    Tick(Result<u64, EngineError>),
    Loaded(Result<String, String>),
}

enum Request {
    Run(Command, oneshot::Sender<Reply>),
    Load(Box<ScenarioDoc>, oneshot::Sender<Reply>),
}

/// What readers see: an immutable snapshot replaced after every command.
#[derive(Debug, Clone, Default)]
pub struct View {
    pub scenario_id: String,
    pub tick: u64,
    pub store: IntentStore,
}

#[derive(Debug, Clone)]
pub enum Live {
    Record(EventRecord),
    /// A new scenario replaced the log; streams must end.
    Reset,
}

pub struct Shared {
    pub view: watch::Receiver<Arc<View>>,
    pub records: RwLock<Vec<EventRecord>>,
    pub live: broadcast::Sender<Live>,
}

impl Shared {
    pub fn head(&self) -> u64 {
        self.records.read().expect("records lock").last().map_or(0, |r| r.seq)
    }

    pub fn since(&self, from: u64) -> Vec<EventRecord> {
        let records = self.records.read().expect("records lock");
        let start = records.partition_point(|r| r.seq <= from);
        records[start..].to_vec()
    }
}

#[derive(Clone)]
pub struct Handle {
    tx: mpsc::Sender<Request>,
    pub shared: Arc<Shared>,
}

impl Handle {
    pub async fn run(&self, cmd: Command) -> Option<Reply> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(Request::Run(cmd, tx)).await.ok()?;
        rx.await.ok()
    }

    pub async fn load(&self, doc: ScenarioDoc) -> Option<Reply> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(Request::Load(Box::new(doc), tx)).await.ok()?;
        rx.await.ok()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OpenError {
    #[error("{0}")]
    Scenario(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Log(#[from] loopbench_core::events::LogError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("journal line {0}: {1}")]
    Journal(usize, serde_json::Error),
    #[error("event log holds {0} records the journal does not account for")]
    Unexplained(usize),
}

struct Loop {
    doc: ScenarioDoc,
    engine: Engine,
    dir: Option<PathBuf>,
    journal: Option<File>,
}

fn read_journal(path: &Path) -> Result<Vec<Command>, OpenError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    let mut good_len = 0u64;
    let mut reader = BufReader::new(file);
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 || !buf.ends_with('\n') {
            break;
        }
        out.push(serde_json::from_str(buf.trim_end()).map_err(|e| OpenError::Journal(out.len() + 1, e))?);
        good_len += n as u64;
    }
    // Drop a torn final line so later appends start on a fresh line.
    OpenOptions::new().write(true).open(path)?.set_len(good_len)?;
    Ok(out)
}

impl Loop {
    fn fresh(doc: ScenarioDoc, dir: Option<PathBuf>) -> Result<Self, OpenError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
            for f in [EVENTS_FILE, KPI_FILE, STORE_FILE, JOURNAL_FILE] {
                match fs::remove_file(d.join(f)) {
                    Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
                    _ => {}
                }
            }
            fs::write(d.join(SCENARIO_FILE), doc.to_canonical())?;
        }
        Self::open(doc, dir)
    }

    /// Opens `dir`, resuming whatever run it holds. A scenario persisted
    /// there takes precedence over `doc`.
    fn open(doc: ScenarioDoc, dir: Option<PathBuf>) -> Result<Self, OpenError> {
        let Some(d) = dir else {
            let engine = doc.engine(doc.seed, EventLog::in_memory()).map_err(|e| OpenError::Scenario(e.to_string()))?;
            return Ok(Loop { doc, engine, dir: None, journal: None });
        };
        fs::create_dir_all(&d)?;
        let doc = match fs::read_to_string(d.join(SCENARIO_FILE)) {
            Ok(text) => ScenarioDoc::parse(&text).map_err(|e| OpenError::Scenario(format!("{SCENARIO_FILE}: {e}")))?,
            Err(_) => {
                fs::write(d.join(SCENARIO_FILE), doc.to_canonical())?;
                doc
            }
        };
        let events = d.join(EVENTS_FILE);
        let (records, torn) = read_log(&events)?;
        if torn {
            truncate_log(&events, &records)?;
        }
        let journal_path = d.join(JOURNAL_FILE);
        let commands = read_journal(&journal_path)?;
        let mut engine =
            doc.engine(doc.seed, EventLog::open(&events, records)?).map_err(|e| OpenError::Scenario(e.to_string()))?;
        engine.export_kpis(Box::new(BufWriter::new(File::create(d.join(KPI_FILE))?)))?;
        let journal = OpenOptions::new().create(true).append(true).open(&journal_path)?;
        let mut lp = Loop { doc, engine, dir: Some(d), journal: Some(journal) };
        for cmd in commands {
            match lp.execute(&cmd) {
                Reply::Tick(Err(e))
                | Reply::Submit(Err(CommandError::Engine(e)))
                | Reply::Decision(Err(CommandError::Engine(e))) => return Err(e.into()),
                _ => {}
            }
        }
        if lp.engine.replaying() {
            let left = lp.engine.log().records().len() - lp.engine.store().head as usize;
            return Err(OpenError::Unexplained(left));
        }
        lp.engine.flush()?;
        Ok(lp)
    }

    fn journal(&mut self, cmd: &Command) -> std::io::Result<()> {
        if let Some(j) = &mut self.journal {
            let mut line = serde_json::to_string(cmd).expect("commands serialize");
            line.push('\n');
            j.write_all(line.as_bytes())?;
            j.flush()?;
        }
        Ok(())
    }

    fn execute(&mut self, cmd: &Command) -> Reply {
        let engine = &mut self.engine;
        match cmd {
            Command::Submit { text } => Reply::Submit(engine.submit_intent(text)),
            Command::Resolve { escalation_id, decision } => {
                Reply::Decision(engine.resolve_escalation(escalation_id, decision.clone()))
            }
            Command::DecidePlan { plan_id, approve } => Reply::Decision(engine.decide_plan(plan_id, *approve)),
            Command::Tick => {
                let due = self.doc.submit_due(engine);
                Reply::Tick(due.and_then(|()| engine.step()).map(|()| engine.tick()))
            }
        }
    }

    fn view(&self) -> View {
        View { scenario_id: self.doc.scenario_id.clone(), tick: self.engine.tick(), store: self.engine.store().clone() }
    }

    fn finish(&mut self) {
        let _ = self.engine.flush();
        if let Some(d) = &self.dir {
            let _ = write_snapshot(&d.join(STORE_FILE), self.engine.store());
        }
    }
}

/// Starts the writer thread. With a data directory, an existing run there is
/// recovered first.
pub fn spawn(doc: ScenarioDoc, data_dir: Option<PathBuf>) -> Result<Handle, OpenError> {
    let mut lp = Loop::open(doc, data_dir)?;
    let (view_tx, view_rx) = watch::channel(Arc::new(lp.view()));
    let (live, _) = broadcast::channel(4096);
    let shared = Arc::new(Shared {
        view: view_rx,
        records: RwLock::new(lp.engine.log().records().to_vec()),
        live: live.clone(),
    });
    let (tx, mut rx) = mpsc::channel::<Request>(256);
    let sh = shared.clone();
    thread::Builder::new().name("loop-writer".into()).spawn(move || {
        while let Some(req) = rx.blocking_recv() {
            let before = sh.head();
            let reply = match req {
                Request::Run(cmd, reply) => {
                    let out = match lp.journal(&cmd) {
                        Ok(()) => lp.execute(&cmd),
                        Err(e) => Reply::Tick(Err(EngineError::Log(e.into()))),
                    };
                    Some((out, reply))
                }
                Request::Load(doc, reply) => {
                    let dir = lp.dir.clone();
                    let out = match Loop::fresh(*doc, dir) {
                        Ok(next) => {
                            lp.finish();
                            lp = next;
                            sh.records.write().expect("records lock").clear();
                            let _ = live.send(Live::Reset);
                            Reply::Loaded(Ok(lp.doc.scenario_id.clone()))
                        }
                        Err(e) => Reply::Loaded(Err(e.to_string())),
                    };
                    Some((out, reply))
                }
            };
            let fresh: Vec<EventRecord> = lp.engine.log().since(before.min(lp.engine.log().head())).to_vec();
            if !fresh.is_empty() {
                sh.records.write().expect("records lock").extend(fresh.iter().cloned());
                for r in fresh {
                    let _ = live.send(Live::Record(r));
                }
            }
            let _ = lp.engine.flush();
            let _ = view_tx.send(Arc::new(lp.view()));
            if let Some((out, reply)) = reply {
                let _ = reply.send(out);
            }
        }
        lp.finish();
    })?;
    Ok(Handle { tx, shared })
}
