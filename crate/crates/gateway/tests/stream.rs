// SPDX-License-Identifier: Apache-2.0

//! Event stream over a real socket.

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use loopbench_core::events::EventRecord;
use loopbench_core::scenario::s1;
use loopbench_gateway::api::{router, AppState};
use loopbench_gateway::writer;

#[derive(Debug, Clone, PartialEq)]
struct Frame {
    id: u64,
    event: String,
    data: String,
}

fn serve(rt: &tokio::runtime::Runtime) -> SocketAddr {
    let mut doc = s1();
    doc.faults.clear();
    let handle = writer::spawn(doc, None).unwrap();
    let app = router(AppState { handle, auto_tick: false });
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        addr
    })
}

fn post(addr: SocketAddr, path: &str, body: &str) {
    let url = format!("http://{addr}{path}");
    let _ = ureq::post(&url).header("content-type", "application/json").send(body);
}

/// Reads frames on a background thread up to and including the first one
/// `stop` accepts.
fn subscribe(
    url: String,
    last_event_id: Option<u64>,
    stop: impl Fn(&Frame) -> bool + Send + 'static,
) -> mpsc::Receiver<Vec<Frame>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut req = ureq::get(&url);
        if let Some(id) = last_event_id {
            req = req.header("Last-Event-ID", &id.to_string());
        }
        let resp = req.call().unwrap();
        let mut reader = BufReader::new(resp.into_body().into_reader());
        let mut frames = Vec::new();
        let mut cur = Frame { id: 0, event: String::new(), data: String::new() };
        let mut line = String::new();
        while reader.read_line(&mut line).unwrap_or(0) > 0 {
            let l = line.trim_end_matches(['\r', '\n']);
            if let Some(v) = l.strip_prefix("id: ").or_else(|| l.strip_prefix("id:")) {
                cur.id = v.trim().parse().unwrap();
            } else if let Some(v) = l.strip_prefix("event: ").or_else(|| l.strip_prefix("event:")) {
                cur.event = v.trim().to_string();
            } else if let Some(v) = l.strip_prefix("data: ").or_else(|| l.strip_prefix("data:")) {
                cur.data = v.to_string();
            } else if l.is_empty() && !cur.data.is_empty() {
                let done = stop(&cur);
                frames.push(std::mem::replace(&mut cur, Frame { id: 0, event: String::new(), data: String::new() }));
                if done {
                    break;
                }
            }
            line.clear();
        }
        let _ = tx.send(frames);
    });
    rx
}

fn wait(rx: mpsc::Receiver<Vec<Frame>>) -> Vec<Frame> {
    rx.recv_timeout(Duration::from_secs(20)).expect("stream delivered in time")
}

fn assert_contiguous(frames: &[Frame], first: u64) {
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f.id, first + i as u64, "gap at frame {i}");
        let rec: EventRecord = serde_json::from_str(&f.data).unwrap();
        assert_eq!(rec.seq, f.id);
        assert_eq!(rec.event.kind(), f.event);
    }
}

#[test]
fn replay_then_resume_by_header() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let addr = serve(&rt);
    for _ in 0..150 {
        post(addr, "/tick", "");
    }
    let full = wait(subscribe(format!("http://{addr}/events?from=0"), None, |f| f.id >= 8));
    assert_contiguous(&full, 1);
    assert_eq!(full[0].event, "IntentSubmitted");

    let from_query = wait(subscribe(format!("http://{addr}/events?from=5"), None, |f| f.id >= 8));
    assert_eq!(from_query[..], full[5..8]);

    // The header wins over the query.
    let resumed = wait(subscribe(format!("http://{addr}/events?from=0"), Some(3), |f| f.id >= 8));
    assert_eq!(resumed[..], full[3..8]);
}

#[test]
fn concurrent_subscribers_see_identical_gap_free_streams() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let addr = serve(&rt);
    post(addr, "/tick", "");
    let last_live = |f: &Frame| f.event == "IntentSubmitted" && f.data.contains("\"int-5\"");
    let a = subscribe(format!("http://{addr}/events?from=2"), None, last_live);
    let b = subscribe(format!("http://{addr}/events?from=2"), None, last_live);
    thread::sleep(Duration::from_millis(200));
    for i in 0..3 {
        post(addr, "/intents", &format!(r#"{{"text": "guarantee latency below {} ms for service checkout"}}"#, 30 + i));
    }
    let (fa, fb) = (wait(a), wait(b));
    assert_eq!(fa, fb);
    assert_contiguous(&fa, 3);
    let live: Vec<&str> = ["int-3", "int-4", "int-5"]
        .into_iter()
        .filter(|id| fa.iter().any(|f| f.event == "IntentSubmitted" && f.data.contains(&format!("\"{id}\""))))
        .collect();
    assert_eq!(live, ["int-3", "int-4", "int-5"]);
}
