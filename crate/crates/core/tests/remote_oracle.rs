use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;

use imia_core::nn::{LayerParams, Network, NetworkSpec};
use imia_core::oracle::{AccessLevel, LocalOracle, Oracle};
use imia_core::remote::{connect_oracle, serve_oracle, Response};
use imia_core::{Error, Tensor};

fn small_net() -> Arc<Network> {
    Arc::new(
        Network::from_params(
            NetworkSpec::mlp(2, &[], 3),
            vec![LayerParams {
                weight: vec![1.0, -0.5, 0.25, 2.0, -1.5, 0.75],
                bias: vec![0.1, -0.2, 0.3],
            }],
        )
        .unwrap(),
    )
}

#[test]
fn remote_scores_match_local() {
    let net = small_net();
    let server = serve_oracle(Arc::clone(&net), AccessLevel::Scores, "127.0.0.1:0").unwrap();
    let remote = connect_oracle(server.local_addr(), AccessLevel::Scores).unwrap();
    let local = LocalOracle::new(net, AccessLevel::Scores);
    let x = Tensor::vector(vec![0.25, -1.5]).unwrap();
    let (r, l) = (remote.query_scores(&x).unwrap(), local.query_scores(&x).unwrap());
    assert!(r.linf_distance(&l) <= 1e-6);
    assert_eq!(r, l, "f32 scores should survive the wire bit-exactly");
    assert_eq!(remote.query_label(&x).unwrap(), local.query_label(&x).unwrap());
    let stats = server.shutdown();
    assert_eq!((stats.queries_scores, stats.queries_label), (1, 1));
}

#[test]
fn label_only_server_refuses_scores() {
    let server = serve_oracle(small_net(), AccessLevel::LabelOnly, "127.0.0.1:0").unwrap();
    // Ask for more than the server grants; the server still enforces its own level.
    let remote = connect_oracle(server.local_addr(), AccessLevel::Scores).unwrap();
    let x = Tensor::vector(vec![0.5, 0.5]).unwrap();
    assert!(matches!(remote.query_scores(&x), Err(Error::AccessViolation { .. })));
    assert!(remote.query_label(&x).is_ok());
    assert!(matches!(
        remote.query_input_gradient(&x, 0),
        Err(Error::AccessViolation { .. })
    ));
    server.shutdown();
}

#[test]
fn white_box_cannot_be_requested_remotely() {
    let server = serve_oracle(small_net(), AccessLevel::WhiteBox, "127.0.0.1:0").unwrap();
    assert!(connect_oracle(server.local_addr(), AccessLevel::WhiteBox).is_err());
    server.shutdown();
}

#[test]
fn malformed_lines_keep_connection_usable() {
    let server = serve_oracle(small_net(), AccessLevel::Scores, "127.0.0.1:0").unwrap();
    let mut stream = TcpStream::connect(server.local_addr()).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut ask = |line: &str| -> Response {
        stream.write_all(line.as_bytes()).unwrap();
        stream.write_all(b"\n").unwrap();
        let mut reply = String::new();
        reader.read_line(&mut reply).unwrap();
        serde_json::from_str(&reply).unwrap()
    };
    for bad in [
        "not json",
        r#"{"op":"scores"}"#,
        r#"{"op":"gradient","input":[0,0]}"#,
        r#"{"op":"label","input":[1,2,3]}"#,
    ] {
        let r = ask(bad);
        assert!(!r.ok, "{bad}");
        assert!(r.error.unwrap().starts_with("protocol:"), "{bad}");
    }
    let r = ask(r#"{"op":"label","input":[0.5,0.5]}"#);
    assert!(r.ok);
    assert!(r.label.is_some());
    server.shutdown();
}

#[test]
fn concurrent_remote_clients_are_counted_exactly() {
    let server = serve_oracle(small_net(), AccessLevel::Scores, "127.0.0.1:0").unwrap();
    let addr = server.local_addr();
    std::thread::scope(|s| {
        for t in 0..6 {
            s.spawn(move || {
                let remote = connect_oracle(addr, AccessLevel::LabelOnly).unwrap();
                for i in 0..40 {
                    let x = Tensor::vector(vec![t as f32 / 6.0, i as f32 / 40.0]).unwrap();
                    remote.query_label(&x).unwrap();
                }
            });
        }
    });
    assert_eq!(server.stats().queries_label, 240);
    assert_eq!(server.shutdown().total(), 240);
}

#[test]
fn unreachable_endpoint_is_an_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    assert!(connect_oracle(addr, AccessLevel::Scores).is_err());
}

#[test]
fn port_in_use_is_a_startup_error() {
    let server = serve_oracle(small_net(), AccessLevel::Scores, "127.0.0.1:0").unwrap();
    let addr = server.local_addr().to_string();
    assert!(serve_oracle(small_net(), AccessLevel::Scores, &addr).is_err());
    server.shutdown();
}
