//! Line-delimited JSON oracle protocol over TCP.
//!
//! Each request is one line `{"op": "scores" | "label", "input": [..]}`.
//! Replies are `{"ok": true, "scores": [..]}`, `{"ok": true, "label": n}` or
//! `{"ok": false, "error": "<code>: <message>"}`, where `<code>` is one of
//! `access_violation`, `protocol` or `model`. Floats are written as the exact
//! `f64` widening of each `f32`, so values round-trip bit-exactly.

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::oracle::{AccessLevel, LocalOracle, Oracle, OracleStats, QueryCounters, QueryKind};
use crate::tensor::Tensor;

const ACCESS_VIOLATION: &str = "access_violation";
const PROTOCOL: &str = "protocol";
const MODEL: &str = "model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Scores { input: Vec<f64> },
    Label { input: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn scores(v: &Tensor) -> Self {
        Self {
            ok: true,
            scores: Some(widen(v.data())),
            label: None,
            error: None,
        }
    }

    fn label(label: usize) -> Self {
        Self {
            ok: true,
            scores: None,
            label: Some(label),
            error: None,
        }
    }

    fn error(code: &str, message: impl std::fmt::Display) -> Self {
        Self {
            ok: false,
            scores: None,
            label: None,
            error: Some(format!("{code}: {message}")),
        }
    }
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| f64::from(*x)).collect()
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|x| *x as f32).collect()
}

/// Answers one request line against `oracle`. Never fails: errors become
/// `ok: false` responses.
pub fn handle_line(oracle: &dyn Oracle, input_shape: &[usize], line: &str) -> Response {
    let request: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return Response::error(PROTOCOL, e),
    };
    let (kind, data) = match &request {
        Request::Scores { input } => (QueryKind::Scores, input),
        Request::Label { input } => (QueryKind::Label, input),
    };
    if !oracle.access_level().permits(kind) {
        return Response::error(
            ACCESS_VIOLATION,
            format!("{kind} queries are not permitted on a {} oracle", oracle.access_level()),
        );
    }
    let x = match Tensor::new(input_shape.to_vec(), narrow(data)) {
        Ok(t) => t,
        Err(e) => return Response::error(PROTOCOL, e),
    };
    let result = match kind {
        QueryKind::Scores => oracle.query_scores(&x).map(|p| Response::scores(&p)),
        _ => oracle.query_label(&x).map(Response::label),
    };
    result.unwrap_or_else(|e| Response::error(MODEL, e))
}

/// A running oracle server. Dropping it without calling [`shutdown`](Self::shutdown)
/// leaves the listener thread running until the process exits.
pub struct OracleServer {
    addr: SocketAddr,
    oracle: Arc<LocalOracle>,
    stop: Arc<AtomicBool>,
    connections: Arc<Mutex<Vec<TcpStream>>>,
    accept: Option<JoinHandle<()>>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

/// Binds `endpoint` and serves `net` at `level` on background threads,
/// one per connection.
pub fn serve_oracle(net: Arc<Network>, level: AccessLevel, endpoint: &str) -> Result<OracleServer> {
    let listener = TcpListener::bind(endpoint)?;
    let addr = listener.local_addr()?;
    let input_shape = net.input_shape().to_vec();
    let oracle = Arc::new(LocalOracle::new(net, level));
    let stop = Arc::new(AtomicBool::new(false));
    let connections = Arc::new(Mutex::new(Vec::new()));
    let workers = Arc::new(Mutex::new(Vec::new()));

    let accept = {
        let oracle = Arc::clone(&oracle);
        let stop = Arc::clone(&stop);
        let connections = Arc::clone(&connections);
        let workers = Arc::clone(&workers);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let _ = stream.set_nodelay(true);
                if let Ok(clone) = stream.try_clone() {
                    connections.lock().unwrap().push(clone);
                }
                let oracle = Arc::clone(&oracle);
                let shape = input_shape.clone();
                let handle = std::thread::spawn(move || serve_connection(stream, oracle.as_ref(), &shape));
                workers.lock().unwrap().push(handle);
            }
        })
    };

    Ok(OracleServer {
        addr,
        oracle,
        stop,
        connections,
        accept: Some(accept),
        workers,
    })
}

fn serve_connection(stream: TcpStream, oracle: &dyn Oracle, input_shape: &[usize]) {
    let Ok(mut writer) = stream.try_clone() else { return };
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(oracle, input_shape, &line);
        let mut out = serde_json::to_string(&response).expect("response serializes");
        out.push('\n');
        if writer.write_all(out.as_bytes()).is_err() {
            break;
        }
    }
}

impl OracleServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn access_level(&self) -> AccessLevel {
        self.oracle.access_level()
    }

    pub fn stats(&self) -> OracleStats {
        self.oracle.stats()
    }

    /// Stops accepting, closes open connections and returns the final counts.
    pub fn shutdown(mut self) -> OracleStats {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept call.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        for c in self.connections.lock().unwrap().drain(..) {
            let _ = c.shutdown(Shutdown::Both);
        }
        for h in self.workers.lock().unwrap().drain(..) {
            let _ = h.join();
        }
        self.oracle.stats()
    }
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

/// Client side of the protocol. Satisfies the same contract as a local oracle
/// for score and label queries; gradients are never served remotely.
pub struct RemoteOracle {
    level: AccessLevel,
    conn: Mutex<Connection>,
    counters: QueryCounters,
}

pub fn connect_oracle(endpoint: impl ToSocketAddrs, level: AccessLevel) -> Result<RemoteOracle> {
    if level == AccessLevel::WhiteBox {
        return Err(Error::InvalidConfig(
            "white-box access needs the model locally; remote oracles serve scores or labels".into(),
        ));
    }
    let stream = TcpStream::connect(endpoint)?;
    stream.set_nodelay(true)?;
    let writer = stream.try_clone()?;
    Ok(RemoteOracle {
        level,
        conn: Mutex::new(Connection {
            reader: BufReader::new(stream),
            writer,
        }),
        counters: QueryCounters::default(),
    })
}

impl RemoteOracle {
    /// Sends one raw line and returns the decoded reply.
    pub fn round_trip(&self, line: &str) -> Result<Response> {
        let mut conn = self.conn.lock().unwrap();
        conn.writer.write_all(line.as_bytes())?;
        conn.writer.write_all(b"\n")?;
        conn.writer.flush()?;
        let mut reply = String::new();
        if conn.reader.read_line(&mut reply)? == 0 {
            return Err(Error::Remote("connection closed by server".into()));
        }
        serde_json::from_str(&reply).map_err(|e| Error::Protocol(format!("bad response: {e}")))
    }

    fn request(&self, kind: QueryKind, request: &Request) -> Result<Response> {
        if !self.level.permits(kind) {
            return Err(Error::AccessViolation {
                level: self.level,
                kind,
            });
        }
        let line = serde_json::to_string(request)?;
        let response = self.round_trip(&line)?;
        if response.ok {
            return Ok(response);
        }
        let message = response.error.unwrap_or_default();
        match message.split_once(": ") {
            Some((ACCESS_VIOLATION, _)) => Err(Error::AccessViolation {
                level: AccessLevel::LabelOnly,
                kind,
            }),
            Some((PROTOCOL, rest)) => Err(Error::Protocol(rest.to_string())),
            _ => Err(Error::Remote(message)),
        }
    }
}

impl Oracle for RemoteOracle {
    fn access_level(&self) -> AccessLevel {
        self.level
    }

    fn query_scores(&self, input: &Tensor) -> Result<Tensor> {
        let response = self.request(
            QueryKind::Scores,
            &Request::Scores {
                input: widen(input.data()),
            },
        )?;
        let scores = response
            .scores
            .ok_or_else(|| Error::Protocol("scores missing from response".into()))?;
        let t = Tensor::vector(narrow(&scores))?;
        self.counters.bump(QueryKind::Scores);
        Ok(t)
    }

    fn query_label(&self, input: &Tensor) -> Result<usize> {
        let response = self.request(
            QueryKind::Label,
            &Request::Label {
                input: widen(input.data()),
            },
        )?;
        let label = response
            .label
            .ok_or_else(|| Error::Protocol("label missing from response".into()))?;
        self.counters.bump(QueryKind::Label);
        Ok(label)
    }

    fn query_input_gradient(&self, _input: &Tensor, _label: usize) -> Result<Tensor> {
        Err(Error::AccessViolation {
            level: self.level,
            kind: QueryKind::Gradient,
        })
    }

    fn stats(&self) -> OracleStats {
        self.counters.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkSpec;

    #[test]
    fn malformed_line_yields_protocol_error() {
        let net = Arc::new(Network::init(NetworkSpec::mlp(2, &[3], 2), 1).unwrap());
        let oracle = LocalOracle::new(net, AccessLevel::Scores);
        let r = handle_line(&oracle, &[2], "{not json");
        assert!(!r.ok);
        assert!(r.error.unwrap().starts_with("protocol: "));
        let r = handle_line(&oracle, &[2], r#"{"op":"scores","input":[1.0]}"#);
        assert!(r.error.unwrap().starts_with("protocol: "));
        let r = handle_line(&oracle, &[2], r#"{"op":"label","input":[0.1,0.2]}"#);
        assert!(r.ok && r.label.is_some());
    }

    #[test]
    fn f32_values_round_trip_through_json() {
        let values = [0.1f32, 1.0 / 3.0, f32::from_bits(5), f32::MAX, -2.5e-8, 0.999_999_94];
        let json = serde_json::to_string(&widen(&values)).unwrap();
        let back: Vec<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(narrow(&back), values);
    }
}
