//! Remote adapters: the transport-agnostic backend wire schema, a client
//! backend that speaks it, the server-side dispatcher, and an HTTP planner.
//!
//! Request: `{capability, video_ref?, inputs, params}`.
//! Response: `{outputs, token_logprobs?, confidence?, confidence_kind?, error?}`.
//! videoQA responses must set `confidence_kind` to say whether the
//! confidence comes from token log-probabilities or is a backend scalar.

use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use fastslow_core::modules::{Capability, QaKind, QaOrigin, QaRequest, QaResponse, VideoInfo};
use fastslow_core::world::{DetectedObject, Frame, TextSpan, TimeSpan};
use fastslow_core::{Backend, BackendError};

use crate::guard::InFlight;
use crate::planner::{Planner, PlannerError, PlannerRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub capability: Capability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_ref: Option<String>,
    #[serde(default)]
    pub inputs: Json,
    #[serde(default)]
    pub params: Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceKind {
    TokenLogprobs,
    Scalar,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub outputs: Json,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_kind: Option<ConfidenceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendError>,
}

impl WireResponse {
    fn ok(outputs: Json) -> Self {
        WireResponse { outputs, ..Default::default() }
    }

    fn err(e: BackendError) -> Self {
        WireResponse { error: Some(e), ..Default::default() }
    }
}

fn field<T: DeserializeOwned>(v: &Json, name: &str) -> Result<T, BackendError> {
    let f = v.get(name).cloned().unwrap_or(Json::Null);
    serde_json::from_value(f).map_err(|e| BackendError::protocol(format!("field {name:?}: {e}")))
}

fn video_of(req: &WireRequest) -> Result<&str, BackendError> {
    req.video_ref.as_deref().ok_or_else(|| BackendError::protocol("missing video_ref"))
}

fn to_json<T: Serialize>(v: T) -> Json {
    serde_json::to_value(v).expect("wire values serialize")
}

/// Serves one wire request from a local backend.
pub fn dispatch(backend: &dyn Backend, req: &WireRequest) -> WireResponse {
    let run = || -> Result<WireResponse, BackendError> {
        let i = &req.inputs;
        Ok(match req.capability {
            Capability::VideoInfo => WireResponse::ok(to_json(backend.video_info(video_of(req)?)?)),
            Capability::ClipScores => {
                let windows: Vec<TimeSpan> = field(i, "windows")?;
                WireResponse::ok(to_json(backend.clip_scores(
                    video_of(req)?,
                    &field::<String>(i, "query")?,
                    &windows,
                )?))
            }
            Capability::Subtitles => WireResponse::ok(to_json(backend.subtitles(video_of(req)?)?)),
            Capability::Captions => WireResponse::ok(to_json(backend.captions(video_of(req)?)?)),
            Capability::TextScores => {
                let texts: Vec<String> = field(i, "texts")?;
                WireResponse::ok(to_json(backend.text_scores(&field::<String>(i, "query")?, &texts)?))
            }
            Capability::VideoQa => {
                let qa = QaRequest {
                    video_id: video_of(req)?.to_string(),
                    frames: field(i, "frames")?,
                    query: field(i, "query")?,
                    choices: field::<Option<Vec<String>>>(i, "choices")?.unwrap_or_default(),
                    kind: field(i, "kind")?,
                    origin: field::<Option<QaOrigin>>(&req.params, "origin")?.unwrap_or(QaOrigin::Program),
                };
                let r = backend.video_qa(&qa)?;
                let kind =
                    if r.token_logprobs.is_some() { ConfidenceKind::TokenLogprobs } else { ConfidenceKind::Scalar };
                WireResponse {
                    outputs: json!({ "answer": r.answer }),
                    token_logprobs: r.token_logprobs,
                    confidence: r.confidence,
                    confidence_kind: Some(kind),
                    error: None,
                }
            }
            Capability::Ocr => WireResponse::ok(to_json(backend.ocr(&field::<Frame>(i, "frame")?)?)),
            Capability::Detect => WireResponse::ok(to_json(backend.detect(
                &field::<Frame>(i, "frame")?,
                &field::<String>(i, "text")?,
                field(&req.params, "text_thr")?,
                field(&req.params, "box_thr")?,
            )?)),
            Capability::SceneBoundaries => WireResponse::ok(to_json(backend.scene_boundaries(video_of(req)?)?)),
            Capability::SubtitleHint => {
                WireResponse::ok(to_json(backend.subtitle_hint(video_of(req)?, &field::<String>(i, "query")?)?))
            }
        })
    };
    run().unwrap_or_else(WireResponse::err)
}

/// Moves one wire request to a backend service and back.
pub trait Transport: Send + Sync {
    fn send(&self, request: &WireRequest) -> Result<WireResponse, BackendError>;
}

/// In-process transport that still round-trips through JSON text; used to
/// exercise the wire schema without a network.
pub struct LoopbackTransport {
    pub backend: Arc<dyn Backend>,
}

impl Transport for LoopbackTransport {
    fn send(&self, request: &WireRequest) -> Result<WireResponse, BackendError> {
        let text = serde_json::to_string(request).map_err(|e| BackendError::protocol(e.to_string()))?;
        let req: WireRequest = serde_json::from_str(&text).map_err(|e| BackendError::protocol(e.to_string()))?;
        let resp = serde_json::to_string(&dispatch(self.backend.as_ref(), &req))
            .map_err(|e| BackendError::protocol(e.to_string()))?;
        serde_json::from_str(&resp).map_err(|e| BackendError::protocol(e.to_string()))
    }
}

/// JSON over HTTP POST.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    timeout: Duration,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unavailable { message: e.to_string() })?;
        Ok(HttpTransport { client, url: url.into(), timeout })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &WireRequest) -> Result<WireResponse, BackendError> {
        let resp = self.client.post(&self.url).json(request).send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout {
                    capability: request.capability.as_str().into(),
                    after_ms: self.timeout.as_millis() as u64,
                }
            } else {
                BackendError::Unavailable { message: e.to_string() }
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Remote { message: format!("HTTP {status}") });
        }
        resp.json().map_err(|e| BackendError::protocol(e.to_string()))
    }
}

/// A [`Backend`] whose capabilities are served remotely.
pub struct RemoteBackend<T> {
    transport: T,
    slots: InFlight,
    wait: Duration,
}

impl<T: Transport> RemoteBackend<T> {
    /// At most `max_in_flight` concurrent requests; a caller waits up to
    /// `wait` for a slot before timing out.
    pub fn new(transport: T, max_in_flight: usize, wait: Duration) -> Self {
        RemoteBackend { transport, slots: InFlight::new(max_in_flight), wait }
    }

    fn call(
        &self,
        capability: Capability,
        video_ref: Option<&str>,
        inputs: Json,
        params: Json,
    ) -> Result<WireResponse, BackendError> {
        let Some(_permit) = self.slots.acquire(self.wait) else {
            return Err(BackendError::Timeout {
                capability: capability.as_str().into(),
                after_ms: self.wait.as_millis() as u64,
            });
        };
        let req = WireRequest { capability, video_ref: video_ref.map(str::to_string), inputs, params };
        let resp = self.transport.send(&req)?;
        match resp.error {
            Some(e) => Err(e),
            None => Ok(resp),
        }
    }

    fn outputs<R: DeserializeOwned>(
        &self,
        capability: Capability,
        video_ref: Option<&str>,
        inputs: Json,
        params: Json,
    ) -> Result<R, BackendError> {
        let resp = self.call(capability, video_ref, inputs, params)?;
        serde_json::from_value(resp.outputs)
            .map_err(|e| BackendError::protocol(format!("{} outputs: {e}", capability.as_str())))
    }
}

impl<T: Transport> Backend for RemoteBackend<T> {
    fn video_info(&self, video: &str) -> Result<VideoInfo, BackendError> {
        self.outputs(Capability::VideoInfo, Some(video), Json::Null, Json::Null)
    }
    fn clip_scores(&self, video: &str, query: &str, windows: &[TimeSpan]) -> Result<Vec<f64>, BackendError> {
        self.outputs(Capability::ClipScores, Some(video), json!({ "query": query, "windows": windows }), Json::Null)
    }
    fn subtitles(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        self.outputs(Capability::Subtitles, Some(video), Json::Null, Json::Null)
    }
    fn captions(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        self.outputs(Capability::Captions, Some(video), Json::Null, Json::Null)
    }
    fn text_scores(&self, query: &str, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        self.outputs(Capability::TextScores, None, json!({ "query": query, "texts": texts }), Json::Null)
    }
    fn video_qa(&self, request: &QaRequest) -> Result<QaResponse, BackendError> {
        let choices = (request.kind == QaKind::MultipleChoice).then_some(&request.choices);
        let resp = self.call(
            Capability::VideoQa,
            Some(&request.video_id),
            json!({ "frames": request.frames, "query": request.query, "choices": choices, "kind": request.kind }),
            json!({ "origin": request.origin }),
        )?;
        let answer: String = field(&resp.outputs, "answer")?;
        match resp.confidence_kind {
            Some(ConfidenceKind::TokenLogprobs) if resp.token_logprobs.is_some() => {
                Ok(QaResponse { answer, token_logprobs: resp.token_logprobs, confidence: None })
            }
            Some(ConfidenceKind::Scalar) if resp.confidence.is_some() => {
                Ok(QaResponse { answer, token_logprobs: None, confidence: resp.confidence })
            }
            _ => Err(BackendError::protocol("video_qa response must declare a confidence_kind matching its payload")),
        }
    }
    fn ocr(&self, frame: &Frame) -> Result<String, BackendError> {
        self.outputs(Capability::Ocr, Some(&frame.video_id), json!({ "frame": frame }), Json::Null)
    }
    fn detect(
        &self,
        frame: &Frame,
        text: &str,
        text_thr: f64,
        box_thr: f64,
    ) -> Result<Vec<DetectedObject>, BackendError> {
        self.outputs(
            Capability::Detect,
            Some(&frame.video_id),
            json!({ "frame": frame, "text": text }),
            json!({ "text_thr": text_thr, "box_thr": box_thr }),
        )
    }
    fn scene_boundaries(&self, video: &str) -> Result<Vec<f64>, BackendError> {
        self.outputs(Capability::SceneBoundaries, Some(video), Json::Null, Json::Null)
    }
    fn subtitle_hint(&self, video: &str, query: &str) -> Result<String, BackendError> {
        self.outputs(Capability::SubtitleHint, Some(video), json!({ "query": query }), Json::Null)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub text: String,
}

/// Planner reached over HTTP: POSTs a [`PlannerRequest`], expects `{"text": ...}`.
pub struct HttpPlanner {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpPlanner {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, PlannerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| PlannerError::Unreachable(e.to_string()))?;
        Ok(HttpPlanner { client, url: url.into() })
    }
}

impl Planner for HttpPlanner {
    fn complete(&self, request: &PlannerRequest) -> Result<String, PlannerError> {
        let resp =
            self.client.post(&self.url).json(request).send().map_err(|e| PlannerError::Unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(PlannerError::Unreachable(format!("HTTP {}", resp.status())));
        }
        let body: PlanResponse = resp.json().map_err(|e| PlannerError::Protocol(e.to_string()))?;
        Ok(body.text)
    }
}
