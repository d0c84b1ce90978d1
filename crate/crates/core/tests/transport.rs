use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use fedlearn_core::audit::PrivacyBoundary;
use fedlearn_core::data::{gen_blobs, vertical_split, LabelKind, PartyTable};
use fedlearn_core::forest::{ForestConfig, ForestTrainer};
use fedlearn_core::kernel::{KernelConfig, KernelTrainer};
use fedlearn_core::party::loopback;
use fedlearn_core::phase::SHUTDOWN;
use fedlearn_core::pipeline::{check_responses, Pipeline};
use fedlearn_core::transport::{broadcast, send_message, serve_tcp};
use fedlearn_core::{
    run_pipeline, Body, EngineOptions, Message, Party, TcpTransport, TrainingReport, Transport, MASTER,
};

fn tables(kind: LabelKind) -> Vec<PartyTable> {
    let t = gen_blobs(80, 6, 2.0, 3, kind).unwrap();
    vertical_split(&t, 3, 3).unwrap()
}

fn options() -> EngineOptions {
    EngineOptions {
        keep_messages: true,
        ..EngineOptions::default()
    }
}

fn names(t: &[PartyTable]) -> Vec<String> {
    t.iter().map(|t| t.name().to_owned()).collect()
}

fn kernel_config() -> KernelConfig {
    KernelConfig {
        features: 16,
        t_max: 9,
        ..KernelConfig::default()
    }
}

fn forest_config() -> ForestConfig {
    ForestConfig {
        n_trees: 2,
        max_depth: 3,
        key_bits: 64,
        allow_insecure_keys: true,
        ..ForestConfig::default()
    }
}

fn over_loopback(t: &[PartyTable], trainer: &mut dyn Pipeline) -> TrainingReport {
    let (transport, _) = loopback(t.iter().map(|t| Party::new(t.clone(), None)).collect()).unwrap();
    run_pipeline(trainer, &transport, &options()).unwrap()
}

/// Serves every party on its own socket, runs the job and shuts the servers down.
fn over_tcp(t: &[PartyTable], trainer: &mut dyn Pipeline) -> TrainingReport {
    let mut transport = TcpTransport::new(Duration::from_secs(30));
    let mut servers = Vec::new();
    for table in t {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        transport.add_endpoint(table.name(), listener.local_addr().unwrap().to_string());
        let table = table.clone();
        servers.push(thread::spawn(move || {
            let name = table.name().to_owned();
            let mut service = Party::new(table, None).into_service();
            serve_tcp(&listener, &name, &mut service, Duration::from_secs(30)).unwrap()
        }));
    }
    let report = run_pipeline(trainer, &transport, &options()).unwrap();
    let bye: Vec<Message> = t
        .iter()
        .map(|t| Message::request(MASTER, t.name(), SHUTDOWN, Body::new()))
        .collect();
    broadcast(&transport as &dyn Transport, &bye).unwrap();
    for s in servers {
        assert!(s.join().unwrap().requests_served > 0);
    }
    report
}

#[test]
fn kernel_transcript_is_transport_independent() {
    let t = tables(LabelKind::PlusMinusOne);
    let mut a = KernelTrainer::new(names(&t), kernel_config()).unwrap();
    let mut b = KernelTrainer::new(names(&t), kernel_config()).unwrap();
    let ra = over_loopback(&t, &mut a);
    let rb = over_tcp(&t, &mut b);
    assert_eq!(ra.transcript_hash, rb.transcript_hash);
    assert_eq!(a.model(), b.model());
}

#[test]
fn forest_transcript_is_transport_independent() {
    let t = tables(LabelKind::ZeroOne);
    let mut a = ForestTrainer::new(names(&t), 0, forest_config()).unwrap();
    let mut b = ForestTrainer::new(names(&t), 0, forest_config()).unwrap();
    let ra = over_loopback(&t, &mut a);
    let rb = over_tcp(&t, &mut b);
    assert_eq!(ra.transcript_hash, rb.transcript_hash);
    assert_eq!(a.model(), b.model());
}

#[test]
fn kernel_run_keeps_data_local() {
    let t = tables(LabelKind::PlusMinusOne);
    let mut trainer = KernelTrainer::new(names(&t), kernel_config()).unwrap();
    let report = over_loopback(&t, &mut trainer);
    assert!(!report.exchanges.is_empty());
    let violations = PrivacyBoundary::new(&t).audit(&report.exchanges);
    assert!(violations.is_empty(), "{}", violations[0]);
}

#[test]
fn forest_run_keeps_data_local() {
    let t = tables(LabelKind::ZeroOne);
    let mut trainer = ForestTrainer::new(names(&t), 0, forest_config()).unwrap();
    let report = over_loopback(&t, &mut trainer);
    let violations = PrivacyBoundary::new(&t).audit(&report.exchanges);
    assert!(violations.is_empty(), "{}", violations[0]);
}

#[test]
fn wrong_receiver_is_refused_over_tcp() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = thread::spawn(move || {
        let mut echo = |m: Message| m.reply(Body::new());
        serve_tcp(&listener, "alice", &mut echo, Duration::from_secs(5)).unwrap()
    });
    let transport = TcpTransport::with_endpoints(
        [("bob", addr.as_str()), ("alice", addr.as_str())],
        Duration::from_secs(5),
    );
    let req = Message::request(MASTER, "bob", 1, Body::new());
    let resp = transport.deliver(&req).unwrap();
    assert!(resp.error().is_some_and(|e| e.contains("alice")));
    assert!(check_responses(&[send_message(&transport, &req).unwrap()]).is_err());
    let bye = Message::request(MASTER, "alice", SHUTDOWN, Body::new());
    transport.deliver(&bye).unwrap();
    assert_eq!(server.join().unwrap().requests_served, 3);
}
