mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use common::*;
use fastslow::controller::ControllerConfig;
use fastslow::planner::{MarkerPolicy, Planner, PlannerError, PlannerRequest, PlannerTask, SyntheticPlanner};
use fastslow::remote::{HttpPlanner, HttpTransport, RemoteBackend};
use fastslow::service::{spawn, AnswerRequest, AppState, ErrorBody, ServerHandle};
use fastslow::{answer_query, evaluate, EvalReport, QueryInput, RunRecord};
use serde_json::json;

fn local() -> std::net::SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn start(state: AppState) -> ServerHandle {
    let h = spawn(local(), Arc::new(state)).unwrap();
    h.state.set_ready(true);
    h
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(Duration::from_secs(30)).build().unwrap()
}

fn hand_state(workers: usize, queue: usize) -> AppState {
    let corpus = hand_corpus();
    let e = synthetic_engine(&corpus, 0.0, MarkerPolicy::All);
    AppState::new(Arc::new(e), ControllerConfig::default(), workers, queue).with_corpus(corpus)
}

#[test]
fn health_reflects_readiness() {
    let h = spawn(local(), Arc::new(hand_state(1, 4))).unwrap();
    let c = client();
    assert_eq!(c.get(h.url("/health")).send().unwrap().status(), 503);
    let r = c.post(h.url("/v1/answer")).json(&QueryInput::from(&hand_items()[1])).send().unwrap();
    assert_eq!(r.status(), 503);
    h.state.set_ready(true);
    let r = c.get(h.url("/health")).send().unwrap();
    assert_eq!(r.status(), 200);
    assert_eq!(r.json::<serde_json::Value>().unwrap()["status"], "ready");
    h.shutdown().unwrap();
}

#[test]
fn answer_matches_the_library_and_is_stable_under_concurrency() {
    let corpus = hand_corpus();
    let h = start(hand_state(4, 32));
    let input = QueryInput::from(&hand_items()[0]);
    let want =
        answer_query(&synthetic_engine(&corpus, 0.0, MarkerPolicy::All), &input, &ControllerConfig::default()).unwrap();
    let url = h.url("/v1/answer");
    let got: Vec<RunRecord> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..8)
            .map(|_| {
                let (url, input) = (url.clone(), input.clone());
                s.spawn(move || client().post(url).json(&input).send().unwrap().json::<RunRecord>().unwrap())
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(got.iter().all(|r| *r == want));

    // per-request theta
    let req = AnswerRequest { input: QueryInput::from(&hand_items()[1]), theta: Some(0.99) };
    let r: RunRecord = client().post(&url).json(&req).send().unwrap().json().unwrap();
    assert_eq!(r.decision.theta, 0.99);
    assert_eq!(r.decision.path, fastslow::RoutePath::FastThenSlow);
}

#[test]
fn bad_requests_get_json_errors() {
    let h = start(hand_state(1, 4));
    let c = client();
    let req = AnswerRequest { input: QueryInput::from(&hand_items()[1]), theta: Some(1.0) };
    let r = c.post(h.url("/v1/answer")).json(&req).send().unwrap();
    assert_eq!(r.status(), 400);
    assert!(r.json::<ErrorBody>().unwrap().error.contains("theta"));
    let r = c.post(h.url("/v1/eval")).json(&json!({ "limit": 1, "bogus": true })).send().unwrap();
    assert!(r.status().is_client_error());
    let r = c.post(h.url("/v1/eval")).json(&json!({ "items": ["nope"] })).send().unwrap();
    assert_eq!(r.status(), 400);
}

#[test]
fn eval_endpoint_matches_the_library() {
    let corpus = generated(51, 3, 3, 0.5);
    let e = synthetic_engine(&corpus, 0.1, MarkerPolicy::All);
    let (_, want) = evaluate(&e, &corpus.items[..5], &ControllerConfig::with_theta(0.6), 1);
    let h =
        start(AppState::new(Arc::new(e), ControllerConfig::default(), 2, 4).with_corpus(corpus).with_parallelism(3));
    let got: EvalReport =
        client().post(h.url("/v1/eval")).json(&json!({ "limit": 5, "theta": 0.6 })).send().unwrap().json().unwrap();
    assert_eq!(got.rows, want.rows);
    assert_eq!(got.n, 5);
}

/// Planner that parks every call until opened.
#[derive(Default)]
struct Gate {
    entered: AtomicUsize,
    open: Mutex<bool>,
    cv: Condvar,
}

impl Gate {
    fn release(&self) {
        *self.open.lock().unwrap() = true;
        self.cv.notify_all();
    }

    fn wait_entered(&self, n: usize) {
        for _ in 0..500 {
            if self.entered.load(Ordering::SeqCst) >= n {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        panic!("planner never entered");
    }
}

impl Planner for Gate {
    fn complete(&self, _: &PlannerRequest) -> Result<String, PlannerError> {
        self.entered.fetch_add(1, Ordering::SeqCst);
        let mut open = self.open.lock().unwrap();
        while !*open {
            open = self.cv.wait(open).unwrap();
        }
        Ok(fastslow::planner::base_program())
    }
}

fn gated(queue: usize) -> (ServerHandle, Arc<Gate>) {
    let corpus = hand_corpus();
    let gate = Arc::new(Gate::default());
    let e = engine(simulated(&corpus, 0.0), gate.clone());
    (start(AppState::new(Arc::new(e), ControllerConfig::default(), 1, queue)), gate)
}

#[test]
fn full_queue_is_refused_with_retry_after() {
    let (h, gate) = gated(1);
    let url = h.url("/v1/answer");
    let input = QueryInput::from(&hand_items()[0]);
    std::thread::scope(|s| {
        let first = s.spawn(|| client().post(&url).json(&input).send().unwrap());
        gate.wait_entered(1);
        let r = client().post(&url).json(&input).send().unwrap();
        assert_eq!(r.status(), 429);
        assert_eq!(r.headers()["retry-after"], "1");
        gate.release();
        assert_eq!(first.join().unwrap().status(), 200);
    });
    // capacity is back once the first request is done
    assert_eq!(client().post(&url).json(&input).send().unwrap().status(), 200);
}

#[test]
fn shutdown_drains_in_flight_requests() {
    let (h, gate) = gated(4);
    let url = h.url("/v1/answer");
    let input = QueryInput::from(&hand_items()[0]);
    std::thread::scope(|s| {
        let inflight = s.spawn(|| client().post(&url).json(&input).send().unwrap());
        gate.wait_entered(1);
        let stopper = s.spawn(move || h.shutdown());
        std::thread::sleep(Duration::from_millis(100));
        assert!(!stopper.is_finished(), "shutdown returned with a request in flight");
        gate.release();
        let r = inflight.join().unwrap();
        assert_eq!(r.status(), 200);
        r.json::<RunRecord>().unwrap();
        stopper.join().unwrap().unwrap();
    });
    assert!(client().post(&url).json(&input).send().is_err());
}

#[test]
fn remote_backend_over_http_matches_local() {
    let corpus = generated(52, 3, 3, 0.5);
    let local_engine = synthetic_engine(&corpus, 0.2, MarkerPolicy::All);
    let h = start(AppState::new(
        Arc::new(synthetic_engine(&corpus, 0.2, MarkerPolicy::All)),
        ControllerConfig::default(),
        8,
        64,
    ));

    let transport = HttpTransport::new(h.url("/v1/backend"), Duration::from_secs(30)).unwrap();
    let remote = RemoteBackend::new(transport, 8, Duration::from_secs(30));
    let planner = HttpPlanner::new(h.url("/v1/plan"), Duration::from_secs(30)).unwrap();
    let remote_engine = engine(Arc::new(remote), Arc::new(planner));

    let cfg = ControllerConfig { search: fastslow::SearchConfig::all(), ..ControllerConfig::default() };
    let (a, _) = evaluate(&local_engine, &corpus.items, &cfg, 2);
    let (b, _) = evaluate(&remote_engine, &corpus.items, &cfg, 2);
    assert_eq!(a, b);
}

#[test]
fn plan_endpoint_reports_planner_errors() {
    let h = start(hand_state(1, 4));
    let req = PlannerRequest {
        task: PlannerTask::Answer,
        query_id: Some("hand-q0".into()),
        video_ref: "hand".into(),
        question: hand_items()[0].question.clone(),
        choices: hand_items()[0].choices.clone(),
        gold_answer: None,
        prompt: String::new(),
        stop: None,
    };
    let planner = HttpPlanner::new(h.url("/v1/plan"), Duration::from_secs(30)).unwrap();
    let local = SyntheticPlanner::new(hand_corpus(), MarkerPolicy::All);
    assert_eq!(planner.complete(&req).unwrap(), local.complete(&req).unwrap());

    let corpus = hand_corpus();
    let e = engine(simulated(&corpus, 0.0), Arc::new(scripted(&[])));
    let h2 = start(AppState::new(Arc::new(e), ControllerConfig::default(), 1, 4));
    let r = client().post(h2.url("/v1/plan")).json(&req).send().unwrap();
    assert_eq!(r.status(), 502);
    assert!(r.json::<ErrorBody>().unwrap().error.contains("hand-q0"));
    let scripted_remote = HttpPlanner::new(h2.url("/v1/plan"), Duration::from_secs(30)).unwrap();
    assert!(scripted_remote.complete(&req).is_err());

    let down = HttpPlanner::new("http://127.0.0.1:9/v1/plan", Duration::from_secs(2)).unwrap();
    assert!(matches!(down.complete(&req), Err(PlannerError::Unreachable(_))));
}
