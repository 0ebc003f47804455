use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use socbench_core::metrics::compute_rcm;
use socbench_core::planners::PolicyRegistry;
use socbench_core::rosas::ITEMS;
use socbench_core::sim::{read_log, run_baseline, run_human_baseline, LogPaths};
use socbench_core::wire::{InputPayload, QuestionnaireSubmitPayload, WireBody, WireMessage};
use socbench_core::{MethodId, ScenarioOverrides};
use socbench_gateway::server::{serve_on, ReplayCheck};
use socbench_gateway::{Gateway, GatewayConfig, InputTrace, Session, SessionReport};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

const TIMEOUT: Duration = Duration::from_secs(60);

async fn start_server(dir: &std::path::Path) -> String {
    let mut c = GatewayConfig::new(dir);
    c.methods = vec![MethodId::Mb, MethodId::Hh];
    c.scenario = ScenarioOverrides {
        robot_loops: Some(1),
        ..Default::default()
    };
    c.tick_interval = Some(Duration::from_millis(1));
    let gw = Arc::new(Gateway::open(c).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_on(listener, gw));
    format!("127.0.0.1:{}", addr.port())
}

struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    seq: u64,
    last_seen: Option<u64>,
}

impl Client {
    async fn connect(addr: &str, id: &str) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws/{id}"))
            .await
            .unwrap();
        Client {
            ws,
            seq: 0,
            last_seen: None,
        }
    }

    async fn send_raw(&mut self, text: String) {
        self.ws.send(Message::Text(text.into())).await.unwrap();
    }

    async fn send(&mut self, body: WireBody) {
        let msg = WireMessage {
            seq: self.seq,
            body,
        };
        self.seq += 1;
        self.send_raw(serde_json::to_string(&msg).unwrap()).await;
    }

    /// Next message; server seq must advance by exactly one.
    async fn recv(&mut self) -> WireMessage {
        loop {
            let frame = tokio::time::timeout(TIMEOUT, self.ws.next())
                .await
                .expect("server went quiet");
            let Message::Text(t) = frame.expect("socket closed").unwrap() else {
                continue;
            };
            let msg: WireMessage = serde_json::from_str(t.as_str()).unwrap();
            if let Some(prev) = self.last_seen {
                assert_eq!(msg.seq, prev + 1, "seq gap from server");
            }
            self.last_seen = Some(msg.seq);
            return msg;
        }
    }

    async fn recv_error(&mut self) -> (String, Vec<String>) {
        loop {
            match self.recv().await.body {
                WireBody::Error(e) => return (e.code, e.details),
                WireBody::State(_) => {}
                other => panic!("expected an error, got {other:?}"),
            }
        }
    }

    async fn expect_event(&mut self, kind: &str) -> String {
        loop {
            match self.recv().await.body {
                WireBody::Event(e) if e.kind == kind => return e.detail,
                WireBody::Event(e) => panic!("expected {kind}, got event {}", e.kind),
                WireBody::State(_) => {}
                other => panic!("expected {kind}, got {other:?}"),
            }
        }
    }
}

fn answers(skip: Option<&str>) -> BTreeMap<String, i64> {
    ITEMS
        .iter()
        .filter(|i| Some(**i) != skip)
        .map(|i| (i.to_string(), 6))
        .collect()
}

/// Steers with a constant input, answering every state, until the trial ends;
/// checks that states arrive once per tick. Returns the number of ticks.
async fn steer_until_questionnaire(c: &mut Client, vx: f64, vy: f64) -> (u64, MethodId) {
    let mut last_tick = None;
    loop {
        match c.recv().await.body {
            WireBody::State(s) => {
                if let Some(prev) = last_tick {
                    assert_eq!(s.tick, prev + 1);
                }
                assert!((s.t - s.tick as f64 * 0.1).abs() < 1e-9);
                last_tick = Some(s.tick);
                c.send(WireBody::Input(InputPayload { vx, vy })).await;
            }
            WireBody::Event(e)
                if matches!(e.kind.as_str(), "pick" | "drop" | "trial_completed") => {}
            WireBody::QuestionnaireRequest(q) => {
                assert_eq!(q.items.len(), 18);
                return (last_tick.unwrap(), q.method);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn http_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start_server(dir.path()).await;
    let http = reqwest::Client::new();
    let base = format!("http://{addr}");

    let r = http
        .post(format!("{base}/sessions"))
        .json(&json!({"participant_id": "p1"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 201);
    let s: Session = r.json().await.unwrap();
    assert_eq!(s.method_order, [MethodId::Mb, MethodId::Hh]);

    let r = http
        .post(format!("{base}/sessions"))
        .json(&json!({"participant_id": "p1"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 409);
    assert_eq!(
        r.json::<Value>().await.unwrap()["code"],
        "duplicate_participant"
    );

    let r = http
        .post(format!("{base}/sessions"))
        .json(&json!({"participant": "p2"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);

    let r = http
        .post(format!("{base}/sessions"))
        .json(&json!({"participant_id": "p2"}))
        .send()
        .await
        .unwrap();
    let s2: Session = r.json().await.unwrap();
    assert_eq!(s2.method_order, [MethodId::Hh, MethodId::Mb]);

    let q: Value = http
        .get(format!("{base}/questionnaire"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(q["items"].as_array().unwrap().len(), 18);
    assert_eq!(q["scale_min"], 1);
    assert_eq!(q["scale_max"], 9);

    let r = http
        .get(format!("{base}/sessions/{}/report", s.session_id))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 409);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["code"], "incomplete");
    assert_eq!(body["details"].as_array().unwrap().len(), 4);

    let r = http
        .get(format!("{base}/sessions/nope"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 404);
    let r = http
        .get(format!("{base}/sessions/{}/trials/1/trace", s.session_id))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);

    let list: Value = http
        .get(format!("{base}/sessions"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(list.as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn socket_rejects_bad_messages() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start_server(dir.path()).await;
    let http = reqwest::Client::new();
    let r = http
        .post(format!("http://{addr}/sessions"))
        .json(&json!({"participant_id": "x"}))
        .send()
        .await
        .unwrap();
    let s: Session = r.json().await.unwrap();

    let mut c = Client::connect(&addr, &s.session_id).await;
    assert_eq!(c.expect_event("phase").await, "briefing");
    assert!(matches!(c.recv().await.body, WireBody::State(ref st) if st.tick == 0));

    let mut second = Client::connect(&addr, &s.session_id).await;
    assert_eq!(second.recv_error().await.0, "already_connected");

    c.send_raw(r#"{"seq":0,"type":"teleport","payload":{}}"#.into())
        .await;
    assert_eq!(c.recv_error().await.0, "unknown_type");
    c.send_raw("not json".into()).await;
    assert_eq!(c.recv_error().await.0, "bad_message");
    c.send(WireBody::Report(json!({}))).await;
    assert_eq!(c.recv_error().await.0, "unexpected_type");
    c.seq = 0;
    c.send(WireBody::Input(InputPayload { vx: 0.0, vy: 0.0 }))
        .await;
    assert_eq!(c.recv_error().await.0, "bad_seq");

    let submit = QuestionnaireSubmitPayload {
        method: MethodId::Hh,
        items: answers(None),
    };
    c.seq = 5;
    c.send(WireBody::QuestionnaireSubmit(submit)).await;
    assert_eq!(c.recv_error().await.0, "phase");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn interactive_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start_server(dir.path()).await;
    let http = reqwest::Client::new();
    let base = format!("http://{addr}");
    let r = http
        .post(format!("{base}/sessions"))
        .json(&json!({"participant_id": "p1"}))
        .send()
        .await
        .unwrap();
    let s: Session = r.json().await.unwrap();
    let id = s.session_id.clone();

    let mut c = Client::connect(&addr, &id).await;
    assert_eq!(c.expect_event("phase").await, "briefing");
    c.send(WireBody::Input(InputPayload { vx: 0.2, vy: 0.6 }))
        .await;
    assert_eq!(c.expect_event("phase").await, "trial");
    assert_eq!(c.expect_event("trial_started").await, "MB");

    let (ticks, method) = steer_until_questionnaire(&mut c, 0.2, 0.6).await;
    assert!(ticks as f64 * 0.1 >= 10.0, "only {ticks} ticks");
    assert_eq!(method, MethodId::Mb);

    let partial = QuestionnaireSubmitPayload {
        method: MethodId::Mb,
        items: answers(Some("competent")),
    };
    c.send(WireBody::QuestionnaireSubmit(partial)).await;
    let (code, details) = c.recv_error().await;
    assert_eq!(code, "invalid_response");
    assert_eq!(details.len(), 1);
    assert!(details[0].contains("competent"));

    let wrong = QuestionnaireSubmitPayload {
        method: MethodId::Hh,
        items: answers(None),
    };
    c.send(WireBody::QuestionnaireSubmit(wrong)).await;
    assert_eq!(c.recv_error().await.0, "phase");

    c.send(WireBody::QuestionnaireSubmit(QuestionnaireSubmitPayload {
        method,
        items: answers(None),
    }))
    .await;
    assert_eq!(c.expect_event("questionnaire_accepted").await, "MB");
    assert_eq!(c.expect_event("phase").await, "trial");
    assert_eq!(c.expect_event("trial_started").await, "HH");

    let (_, method) = steer_until_questionnaire(&mut c, 0.0, 0.0).await;
    assert_eq!(method, MethodId::Hh);
    c.send(WireBody::QuestionnaireSubmit(QuestionnaireSubmitPayload {
        method,
        items: answers(None),
    }))
    .await;
    assert_eq!(c.expect_event("questionnaire_accepted").await, "HH");
    assert_eq!(c.expect_event("phase").await, "done");
    let WireBody::Report(pushed) = c.recv().await.body else {
        panic!("expected the report")
    };

    let r = http
        .get(format!("{base}/sessions/{id}/report"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
    let fetched: Value = r.json().await.unwrap();
    assert_eq!(fetched, pushed);
    let report: SessionReport = serde_json::from_value(fetched).unwrap();
    assert_eq!(report.records.len(), 2);

    // Metrics recomputed from the persisted live logs match the report exactly.
    let session: Session = http
        .get(format!("{base}/sessions/{id}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let cfg = &session.scenario;
    let t_h = run_human_baseline(cfg, session.seed)
        .unwrap()
        .human_task_time
        .unwrap();
    let logs = dir.path().join("sessions").join(&id).join("logs");
    for r in &report.records {
        let log = read_log(&LogPaths::in_dir(&logs, &r.log_stem)).unwrap();
        let baseline = run_baseline(cfg, &r.method, session.seed, &PolicyRegistry::new()).unwrap();
        assert_eq!(r.rcm, compute_rcm(&[log], &baseline, t_h, cfg).unwrap());
        assert_eq!(r.scores.warmth, 6.0);
        assert_eq!(r.normalized.competence, 0.625);
    }

    // The recorded trace replays to the stored log; a tampered one does not.
    let trace: InputTrace = http
        .get(format!("{base}/sessions/{id}/trials/1/trace"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(!trace.inputs.is_empty());
    let check: ReplayCheck = http
        .post(format!("{base}/sessions/{id}/trials/1/replay"))
        .json(&trace)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(check.matches, "{check:?}");
    let mut tampered = trace.clone();
    for i in &mut tampered.inputs {
        i.vx = -i.vx;
    }
    let check: ReplayCheck = http
        .post(format!("{base}/sessions/{id}/trials/1/replay"))
        .json(&tampered)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(!check.matches);
    assert!(
        check.first_difference.is_some() || check.problem.is_some(),
        "{check:?}"
    );

    let stored: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("responses.json")).unwrap()).unwrap();
    assert_eq!(stored.as_array().unwrap().len(), 2);

    drop(c);
    tokio::time::sleep(Duration::from_millis(100)).await;
    let mut again = Client::connect(&addr, &id).await;
    assert_eq!(again.expect_event("phase").await, "done");
    assert!(matches!(again.recv().await.body, WireBody::Report(_)));
}
