//! Line-oriented JSON monitor for a running simulation.
//!
//! Every request is one JSON object per line with a `kind` field and gets
//! exactly one `ack` or `error` line back:
//!
//! ```text
//! {"kind":"get_param","key":"kp_db"}
//! {"kind":"set_param","key":"ch1.f_i_hz","value":2000.0}
//! {"kind":"subscribe_testpoint","testpoint":"counter","from_gate":0,"channel":0}
//! ```
//!
//! After the ack of a counter subscription the server streams one
//! `counter_log` line per closed gate, starting at `from_gate` (default 0),
//! so a client that reconnects can resume where it left off. There is no
//! authentication; bind to loopback unless the network is trusted.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use anyhow::{Context, Result};
use dpllsim_core::engine::Engine;
use dpllsim_core::instruments::CounterRecord;
use dpllsim_core::SimConfig;
use log::{debug, info};
use serde::Deserialize;
use serde_json::json;

/// Samples simulated between two visits to the command queue.
const BLOCK: u64 = 1000;

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Request {
    GetParam {
        key: String,
    },
    SetParam {
        key: String,
        value: f64,
    },
    SubscribeTestpoint {
        testpoint: String,
        #[serde(default)]
        from_gate: u64,
        channel: Option<usize>,
    },
}

enum Command {
    Get(String, Sender<Result<f64, String>>),
    Set(String, f64, Sender<Result<f64, String>>),
}

#[derive(Default)]
struct Log {
    records: Vec<(usize, CounterRecord)>,
    finished: bool,
}

#[derive(Default)]
struct Shared {
    log: Mutex<Log>,
    grew: Condvar,
}

fn counter_line(channel: usize, r: &CounterRecord) -> String {
    json!({
        "kind": "counter_log",
        "channel": channel,
        "gate_index": r.gate_index,
        "gate_time_s": r.gate_time,
        "mean_freq_hz": r.mean_freq,
    })
    .to_string()
}

fn error_line(message: impl std::fmt::Display) -> String {
    json!({ "kind": "error", "message": message.to_string() }).to_string()
}

fn simulate(mut engine: Engine, duration: Option<u64>, shared: Arc<Shared>, commands: Receiver<Command>) {
    let apply = |engine: &mut Engine, cmd: Command| match cmd {
        Command::Get(key, reply) => {
            let v = if key == "sample_index" {
                Ok(engine.sample_index() as f64)
            } else {
                engine.get_param(&key).map_err(|e| e.to_string())
            };
            let _ = reply.send(v);
        }
        Command::Set(key, value, reply) => {
            let v = engine.set_param(&key, value).map(|()| value).map_err(|e| e.to_string());
            let _ = reply.send(v);
        }
    };
    loop {
        let done = duration.is_some_and(|d| engine.sample_index() >= d);
        if done {
            shared.log.lock().unwrap().finished = true;
            shared.grew.notify_all();
            // keep answering parameter requests on the finished run
            match commands.recv() {
                Ok(cmd) => apply(&mut engine, cmd),
                Err(_) => return,
            }
            continue;
        }
        while let Ok(cmd) = commands.try_recv() {
            apply(&mut engine, cmd);
        }
        let n = duration.map_or(BLOCK, |d| BLOCK.min(d - engine.sample_index()));
        engine.run_for(n);
        let fresh = engine.take_counter_records();
        if !fresh.is_empty() {
            shared.log.lock().unwrap().records.extend(fresh);
            shared.grew.notify_all();
        }
    }
}

fn stream_counter(
    writer: Arc<Mutex<TcpStream>>,
    shared: Arc<Shared>,
    closed: Arc<AtomicBool>,
    channel: Option<usize>,
    from_gate: u64,
) {
    let mut cursor = 0;
    loop {
        let batch: Vec<String> = {
            let mut log = shared.log.lock().unwrap();
            while cursor == log.records.len() {
                if closed.load(Ordering::Relaxed) || log.finished {
                    return;
                }
                log = shared.grew.wait_timeout(log, Duration::from_millis(200)).unwrap().0;
            }
            let out = log.records[cursor..]
                .iter()
                .filter(|(k, r)| channel.is_none_or(|c| c == *k) && r.gate_index >= from_gate)
                .map(|(k, r)| counter_line(*k, r))
                .collect();
            cursor = log.records.len();
            out
        };
        let mut w = writer.lock().unwrap();
        for line in batch {
            if writeln!(w, "{line}").is_err() {
                return;
            }
        }
        if w.flush().is_err() {
            return;
        }
    }
}

fn handle_client(stream: TcpStream, shared: Arc<Shared>, commands: Sender<Command>) -> Result<()> {
    let peer = stream.peer_addr()?;
    debug!("client {peer} connected");
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    let closed = Arc::new(AtomicBool::new(false));
    let send = |line: String| -> std::io::Result<()> {
        let mut w = writer.lock().unwrap();
        writeln!(w, "{line}")?;
        w.flush()
    };
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                send(error_line(format!("malformed message: {e}")))?;
                continue;
            }
        };
        let (reply_tx, reply_rx) = mpsc::channel();
        match request {
            Request::GetParam { key } => {
                commands.send(Command::Get(key.clone(), reply_tx))?;
                send(match reply_rx.recv()? {
                    Ok(v) => json!({"kind": "ack", "request": "get_param", "key": key, "value": v}).to_string(),
                    Err(e) => error_line(e),
                })?;
            }
            Request::SetParam { key, value } => {
                commands.send(Command::Set(key.clone(), value, reply_tx))?;
                send(match reply_rx.recv()? {
                    Ok(v) => json!({"kind": "ack", "request": "set_param", "key": key, "value": v}).to_string(),
                    Err(e) => error_line(e),
                })?;
            }
            Request::SubscribeTestpoint {
                testpoint,
                from_gate,
                channel,
            } => {
                if testpoint != "counter" {
                    send(error_line(format!("test point `{testpoint}` cannot be streamed; use `counter`")))?;
                    continue;
                }
                // the ack goes out before the streamer starts
                send(
                    json!({"kind": "ack", "request": "subscribe_testpoint", "testpoint": "counter", "from_gate": from_gate})
                        .to_string(),
                )?;
                let (writer, shared, closed) = (writer.clone(), shared.clone(), closed.clone());
                thread::spawn(move || stream_counter(writer, shared, closed, channel, from_gate));
            }
        }
    }
    closed.store(true, Ordering::Relaxed);
    debug!("client {peer} disconnected");
    Ok(())
}

/// Binds, prints the bound address on stdout, then serves until killed.
pub fn serve(cfg: SimConfig, addr: SocketAddr, duration: Option<u64>) -> Result<()> {
    let engine = Engine::new(cfg)?;
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    println!("listening on {local}");
    std::io::stdout().flush()?;
    info!("monitor on {local}");
    let shared = Arc::new(Shared::default());
    let (tx, rx) = mpsc::channel();
    {
        let shared = shared.clone();
        thread::spawn(move || simulate(engine, duration, shared, rx));
    }
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                debug!("accept failed: {e}");
                continue;
            }
        };
        let (shared, tx) = (shared.clone(), tx.clone());
        thread::spawn(move || {
            if let Err(e) = handle_client(stream, shared, tx) {
                debug!("client ended: {e}");
            }
        });
    }
    Ok(())
}
