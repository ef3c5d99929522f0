//! Per-call timeouts and an in-flight cap for any backend.
//!
//! A wedged call is abandoned on its worker thread and reported as
//! [`BackendError::Timeout`], which the executor turns into a failed run and
//! the controller into a fallback.

use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use fastslow_core::modules::{Capability, QaRequest, QaResponse, VideoInfo};
use fastslow_core::world::{DetectedObject, Frame, TextSpan, TimeSpan};
use fastslow_core::{Backend, BackendError};

/// Counting semaphore bounding concurrent calls.
#[derive(Debug)]
pub struct InFlight {
    cap: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InFlight);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

impl InFlight {
    pub fn new(cap: usize) -> Self {
        InFlight { cap: cap.max(1), used: Mutex::new(0), freed: Condvar::new() }
    }

    /// Waits up to `timeout` for a slot.
    pub fn acquire(&self, timeout: Duration) -> Option<Permit<'_>> {
        let deadline = Instant::now() + timeout;
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.cap {
            let left = deadline.checked_duration_since(Instant::now())?;
            let (g, res) = self.freed.wait_timeout(used, left).unwrap_or_else(|e| e.into_inner());
            used = g;
            if res.timed_out() && *used >= self.cap {
                return None;
            }
        }
        *used += 1;
        Some(Permit(self))
    }

    pub fn in_use(&self) -> usize {
        *self.used.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Wraps a backend so that no call blocks longer than `timeout` and at most
/// `max_in_flight` calls run at once. Waiting for a slot counts against the
/// same timeout.
#[derive(Clone)]
pub struct TimeoutBackend {
    inner: Arc<dyn Backend>,
    timeout: Duration,
    slots: Arc<InFlight>,
}

impl TimeoutBackend {
    pub fn new(inner: Arc<dyn Backend>, timeout: Duration, max_in_flight: usize) -> Self {
        TimeoutBackend { inner, timeout, slots: Arc::new(InFlight::new(max_in_flight)) }
    }

    fn call<T, F>(&self, cap: Capability, f: F) -> Result<T, BackendError>
    where
        T: Send + 'static,
        F: FnOnce(&dyn Backend) -> Result<T, BackendError> + Send + 'static,
    {
        let timed_out =
            || BackendError::Timeout { capability: cap.as_str().into(), after_ms: self.timeout.as_millis() as u64 };
        let start = Instant::now();
        let Some(_permit) = self.slots.acquire(self.timeout) else { return Err(timed_out()) };
        let left = self.timeout.saturating_sub(start.elapsed());
        let (tx, rx) = mpsc::sync_channel(1);
        let inner = Arc::clone(&self.inner);
        thread::Builder::new()
            .name(format!("backend-{}", cap.as_str()))
            .spawn(move || {
                let _ = tx.send(f(inner.as_ref()));
            })
            .map_err(|e| BackendError::Unavailable { message: format!("cannot spawn call thread: {e}") })?;
        match rx.recv_timeout(left) {
            Ok(r) => r,
            Err(mpsc::RecvTimeoutError::Timeout) => Err(timed_out()),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(BackendError::Unavailable { message: format!("{} call panicked", cap.as_str()) })
            }
        }
    }
}

impl Backend for TimeoutBackend {
    fn video_info(&self, video: &str) -> Result<VideoInfo, BackendError> {
        let video = video.to_string();
        self.call(Capability::VideoInfo, move |b| b.video_info(&video))
    }
    fn clip_scores(&self, video: &str, query: &str, windows: &[TimeSpan]) -> Result<Vec<f64>, BackendError> {
        let (video, query, windows) = (video.to_string(), query.to_string(), windows.to_vec());
        self.call(Capability::ClipScores, move |b| b.clip_scores(&video, &query, &windows))
    }
    fn subtitles(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        let video = video.to_string();
        self.call(Capability::Subtitles, move |b| b.subtitles(&video))
    }
    fn captions(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        let video = video.to_string();
        self.call(Capability::Captions, move |b| b.captions(&video))
    }
    fn text_scores(&self, query: &str, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        let (query, texts) = (query.to_string(), texts.to_vec());
        self.call(Capability::TextScores, move |b| b.text_scores(&query, &texts))
    }
    fn video_qa(&self, request: &QaRequest) -> Result<QaResponse, BackendError> {
        let request = request.clone();
        self.call(Capability::VideoQa, move |b| b.video_qa(&request))
    }
    fn ocr(&self, frame: &Frame) -> Result<String, BackendError> {
        let frame = frame.clone();
        self.call(Capability::Ocr, move |b| b.ocr(&frame))
    }
    fn detect(
        &self,
        frame: &Frame,
        text: &str,
        text_thr: f64,
        box_thr: f64,
    ) -> Result<Vec<DetectedObject>, BackendError> {
        let (frame, text) = (frame.clone(), text.to_string());
        self.call(Capability::Detect, move |b| b.detect(&frame, &text, text_thr, box_thr))
    }
    fn scene_boundaries(&self, video: &str) -> Result<Vec<f64>, BackendError> {
        let video = video.to_string();
        self.call(Capability::SceneBoundaries, move |b| b.scene_boundaries(&video))
    }
    fn subtitle_hint(&self, video: &str, query: &str) -> Result<String, BackendError> {
        let (video, query) = (video.to_string(), query.to_string());
        self.call(Capability::SubtitleHint, move |b| b.subtitle_hint(&video, &query))
    }
}
