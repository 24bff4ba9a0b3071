//! Clients for the three remote capabilities (chat LLM, TTS, ASR) with
//! response caching, bounded retry, bounded concurrency, and deterministic
//! simulated backends for offline runs.
//!
//! Clients are cheap to share behind `Arc`. Every backend call goes through
//! the client's semaphore, retry policy, and cache; instrumentation counters
//! make the bounds observable in tests.

mod http;
mod limit;
pub mod mock;
mod sim;
mod store;

pub use http::{HttpAsrBackend, HttpChatBackend, HttpTtsBackend};
pub use limit::{bounded_map, Semaphore};
pub use sim::{
    build_confusion_model, Confusable, ConfusionModel, SimAsrBackend, SimChatBackend,
    SimTtsBackend,
};
pub use store::{BlobRef, BlobStore, JsonCache};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Hypothesis;
use crate::lang::Language;
use crate::util::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("service unavailable after {attempts} attempts: {last}")]
    ServiceUnavailable { attempts: u32, last: String },
    #[error("client error (HTTP {status}): {body}")]
    ClientError { status: u16, body: String },
    #[error("transient transport failure: {0}")]
    Transport(String),
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("malformed backend payload: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidJob(String),
    #[error("speaker id {got} outside configured range 1..={max}")]
    InvalidSpeaker { got: u32, max: u32 },
    #[error("cache entry {path} is corrupt: {detail}")]
    CacheCorrupt { path: String, detail: String },
    #[error("blob {0} not found in store")]
    BlobMissing(String),
    #[error("missing credentials: set {0}")]
    MissingCredentials(String),
    #[error("invalid confusion model: {0}")]
    InvalidModel(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Transient failures are retried; everything else fails fast.
    pub fn is_transient(&self) -> bool {
        matches!(self, ServiceError::Transport(_) | ServiceError::Io(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// One chat request. Serialization order is the cache fingerprint, so the
/// field order here is load-bearing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub model_id: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

impl ChatExchange {
    pub fn new(model_id: impl Into<String>, temperature: f64, messages: Vec<ChatMessage>) -> Self {
        ChatExchange { model_id: model_id.into(), temperature, messages }
    }

    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("exchange serializes").as_bytes())
    }
}

/// A text-to-speech request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsJob {
    pub text: String,
    pub speaker_id: u32,
    pub voice_id: String,
    pub language: Language,
}

impl TtsJob {
    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("job serializes").as_bytes())
    }
}

/// N-best transcription result, ordered best-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrResult {
    pub utterance_id: String,
    pub nbest: Vec<Hypothesis>,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ServiceError>;
    fn name(&self) -> &str;
}

pub trait TtsBackend: Send + Sync {
    fn synthesize(&self, job: &TtsJob) -> Result<Vec<u8>, ServiceError>;
    fn name(&self) -> &str;
}

pub trait AsrBackend: Send + Sync {
    /// Transcribe audio bytes into up to `n` hypotheses, best-first.
    fn transcribe(&self, audio: &[u8], n: usize) -> Result<Vec<Hypothesis>, ServiceError>;
    fn name(&self) -> &str;
}

/// Retry with exponential backoff. `max_retries` is the number of retries
/// after the first attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, backoff_ms: 250 }
    }
}

impl RetryPolicy {
    fn run<T>(
        &self,
        stats: &ServiceStats,
        mut call: impl FnMut() -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt <= self.max_retries => {
                    stats.retries.fetch_add(1, Ordering::SeqCst);
                    let delay = self.backoff_ms.saturating_mul(1 << (attempt - 1).min(8));
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
                Err(e) if e.is_transient() => {
                    return Err(ServiceError::ServiceUnavailable {
                        attempts: attempt,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Instrumentation counters shared by a client.
#[derive(Debug, Default)]
pub struct ServiceStats {
    pub backend_calls: AtomicUsize,
    pub cache_hits: AtomicUsize,
    pub retries: AtomicUsize,
    in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
}

impl ServiceStats {
    pub fn calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }
    pub fn hits(&self) -> usize {
        self.cache_hits.load(Ordering::SeqCst)
    }
    pub fn peak_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn enter(&self) -> InFlightGuard<'_> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a ServiceStats);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Append-only JSON-lines log of remote payload fingerprints.
pub struct AuditLog {
    file: Mutex<std::fs::File>,
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    unix_ms: u128,
    backend: &'a str,
    kind: &'a str,
    request_hash: &'a str,
    response_hash: Option<&'a str>,
    outcome: &'a str,
}

impl AuditLog {
    pub fn open(path: &std::path::Path) -> std::io::Result<Arc<AuditLog>> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Arc::new(AuditLog { file: Mutex::new(file) }))
    }

    fn record(&self, backend: &str, kind: &str, request_hash: &str, response_hash: Option<&str>, outcome: &str) {
        let unix_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let rec = AuditRecord { unix_ms, backend, kind, request_hash, response_hash, outcome };
        if let Ok(mut f) = self.file.lock() {
            use std::io::Write;
            let line = serde_json::to_string(&rec).expect("audit record serializes");
            let _ = writeln!(f, "{line}");
        }
    }
}

/// Shared client configuration.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub retry: RetryPolicy,
    pub concurrency: usize,
    pub cache_dir: Option<std::path::PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig { retry: RetryPolicy::default(), concurrency: 4, cache_dir: None }
    }
}

/// Chat client: retries transient failures, bounds concurrency, and caches
/// temperature-0 exchanges by content hash.
pub struct ChatClient {
    backend: Box<dyn ChatBackend>,
    model_id: String,
    retry: RetryPolicy,
    limiter: Semaphore,
    cache: Option<JsonCache>,
    audit: Option<Arc<AuditLog>>,
    stats: Arc<ServiceStats>,
}

impl ChatClient {
    pub fn new(backend: Box<dyn ChatBackend>, model_id: impl Into<String>, cfg: &ClientConfig) -> Self {
        let cache = cfg
            .cache_dir
            .as_ref()
            .map(|dir| JsonCache::new(dir.join("chat")));
        ChatClient {
            backend,
            model_id: model_id.into(),
            retry: cfg.retry,
            limiter: Semaphore::new(cfg.concurrency.max(1)),
            cache,
            audit: None,
            stats: Arc::new(ServiceStats::default()),
        }
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn stats(&self) -> &ServiceStats {
        &self.stats
    }

    /// Send an exchange and return the assistant text.
    pub fn chat(&self, exchange: &ChatExchange) -> Result<String, ServiceError> {
        if exchange.last_user_content().is_none() {
            return Err(ServiceError::InvalidJob(
                "exchange needs at least one user message".into(),
            ));
        }
        let key =
            sha256_hex(format!("{}\u{0}{}", self.backend.name(), exchange.fingerprint()).as_bytes());
        let cacheable = exchange.temperature == 0.0;
        if cacheable {
            if let Some(cache) = &self.cache {
                if let Some(hit) = cache.get::<String>(&key)? {
                    self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(hit);
                }
            }
        }
        let _permit = self.limiter.acquire();
        let _guard = self.stats.enter();
        let result = self.retry.run(&self.stats, || {
            self.stats.backend_calls.fetch_add(1, Ordering::SeqCst);
            self.backend.complete(exchange)
        });
        match &result {
            Ok(text) => {
                if cacheable {
                    if let Some(cache) = &self.cache {
                        cache.put(&key, text)?;
                    }
                }
                if let Some(audit) = &self.audit {
                    audit.record(
                        self.backend.name(),
                        "chat",
                        &key,
                        Some(&sha256_hex(text.as_bytes())),
                        "ok",
                    );
                }
            }
            Err(e) => {
                if let Some(audit) = &self.audit {
                    audit.record(self.backend.name(), "chat", &key, None, &e.to_string());
                }
            }
        }
        result
    }

    /// Single user message at the given temperature, using the default model.
    pub fn chat_user(&self, content: &str, temperature: f64) -> Result<String, ServiceError> {
        self.chat(&ChatExchange::new(
            self.model_id.clone(),
            temperature,
            vec![ChatMessage::user(content)],
        ))
    }

    /// Messages at the given temperature, using the default model.
    pub fn chat_messages(
        &self,
        messages: Vec<ChatMessage>,
        temperature: f64,
    ) -> Result<String, ServiceError> {
        self.chat(&ChatExchange::new(self.model_id.clone(), temperature, messages))
    }
}

/// TTS client: persists audio to a content-addressed store and indexes
/// job fingerprints so identical jobs reuse their locator.
pub struct TtsClient {
    backend: Box<dyn TtsBackend>,
    store: Arc<BlobStore>,
    job_index: JsonCache,
    retry: RetryPolicy,
    limiter: Semaphore,
    audit: Option<Arc<AuditLog>>,
    stats: Arc<ServiceStats>,
    max_speakers: u32,
}

impl TtsClient {
    pub fn new(
        backend: Box<dyn TtsBackend>,
        store: Arc<BlobStore>,
        max_speakers: u32,
        cfg: &ClientConfig,
    ) -> Self {
        let job_index = JsonCache::new(store.root().join("tts-jobs"));
        TtsClient {
            backend,
            store,
            job_index,
            retry: cfg.retry,
            limiter: Semaphore::new(cfg.concurrency.max(1)),
            audit: None,
            stats: Arc::new(ServiceStats::default()),
            max_speakers,
        }
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn stats(&self) -> &ServiceStats {
        &self.stats
    }

    pub fn store(&self) -> &Arc<BlobStore> {
        &self.store
    }

    /// Synthesize (or reuse) audio for a job; returns the blob locator.
    pub fn synthesize(&self, job: &TtsJob) -> Result<BlobRef, ServiceError> {
        if job.text.trim().is_empty() {
            return Err(ServiceError::InvalidJob("empty TTS text".into()));
        }
        if job.speaker_id == 0 || job.speaker_id > self.max_speakers {
            return Err(ServiceError::InvalidSpeaker {
                got: job.speaker_id,
                max: self.max_speakers,
            });
        }
        let key = job.fingerprint();
        if let Some(locator) = self.job_index.get::<String>(&key)? {
            self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(BlobRef(locator));
        }
        let _permit = self.limiter.acquire();
        let _guard = self.stats.enter();
        let bytes = self.retry.run(&self.stats, || {
            self.stats.backend_calls.fetch_add(1, Ordering::SeqCst);
            self.backend.synthesize(job)
        })?;
        let locator = self.store.put(&bytes)?;
        self.job_index.put(&key, &locator.0)?;
        if let Some(audit) = &self.audit {
            audit.record(self.backend.name(), "tts", &key, Some(&locator.0), "ok");
        }
        Ok(locator)
    }
}

/// ASR client: reads audio from the store, caches N-best results per
/// (backend, blob, n).
pub struct AsrClient {
    backend: Box<dyn AsrBackend>,
    store: Arc<BlobStore>,
    result_cache: JsonCache,
    retry: RetryPolicy,
    limiter: Semaphore,
    audit: Option<Arc<AuditLog>>,
    stats: Arc<ServiceStats>,
}

impl AsrClient {
    pub fn new(backend: Box<dyn AsrBackend>, store: Arc<BlobStore>, cfg: &ClientConfig) -> Self {
        let result_cache = JsonCache::new(store.root().join("asr-results"));
        AsrClient {
            backend,
            store,
            result_cache,
            retry: cfg.retry,
            limiter: Semaphore::new(cfg.concurrency.max(1)),
            audit: None,
            stats: Arc::new(ServiceStats::default()),
        }
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn stats(&self) -> &ServiceStats {
        &self.stats
    }

    pub fn store(&self) -> &Arc<BlobStore> {
        &self.store
    }

    /// Transcribe stored audio into an N-best result.
    pub fn transcribe(
        &self,
        audio: &BlobRef,
        utterance_id: &str,
        n: usize,
    ) -> Result<AsrResult, ServiceError> {
        if n == 0 {
            return Err(ServiceError::InvalidJob("n must be >= 1".into()));
        }
        let key = sha256_hex(format!("{}\u{0}{}\u{0}{n}", self.backend.name(), audio.0).as_bytes());
        if let Some(nbest) = self.result_cache.get::<Vec<Hypothesis>>(&key)? {
            self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(AsrResult { utterance_id: utterance_id.to_string(), nbest });
        }
        let bytes = self.store.get(audio)?;
        let _permit = self.limiter.acquire();
        let _guard = self.stats.enter();
        let nbest = self.retry.run(&self.stats, || {
            self.stats.backend_calls.fetch_add(1, Ordering::SeqCst);
            self.backend.transcribe(&bytes, n)
        })?;
        if nbest.is_empty() {
            return Err(ServiceError::Protocol("ASR backend returned no hypotheses".into()));
        }
        self.result_cache.put(&key, &nbest)?;
        if let Some(audit) = &self.audit {
            audit.record(self.backend.name(), "asr", &key, None, "ok");
        }
        Ok(AsrResult { utterance_id: utterance_id.to_string(), nbest })
    }
}

#[cfg(test)]
mod tests {
    use super::mock::MockChatBackend;
    use super::*;
    use crate::lang::Language;

    fn exchange(temperature: f64, content: &str) -> ChatExchange {
        ChatExchange::new("m", temperature, vec![ChatMessage::user(content)])
    }

    fn fast_retry() -> ClientConfig {
        ClientConfig {
            retry: RetryPolicy { max_retries: 2, backoff_ms: 0 },
            concurrency: 4,
            cache_dir: None,
        }
    }

    #[test]
    fn temperature_zero_exchanges_are_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ClientConfig {
            cache_dir: Some(dir.path().to_path_buf()),
            ..fast_retry()
        };
        let client = ChatClient::new(Box::new(MockChatBackend::fixed("ok")), "m", &cfg);
        assert_eq!(client.chat(&exchange(0.0, "hello")).unwrap(), "ok");
        assert_eq!(client.chat(&exchange(0.0, "hello")).unwrap(), "ok");
        assert_eq!(client.stats().calls(), 1, "second call must hit the cache");
        assert_eq!(client.stats().hits(), 1);

        // Nonzero temperature is never cached.
        client.chat(&exchange(0.7, "hello")).unwrap();
        client.chat(&exchange(0.7, "hello")).unwrap();
        assert_eq!(client.stats().calls(), 3);
    }

    #[test]
    fn cache_survives_client_restart() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ClientConfig {
            cache_dir: Some(dir.path().to_path_buf()),
            ..fast_retry()
        };
        {
            let client = ChatClient::new(Box::new(MockChatBackend::fixed("ok")), "m", &cfg);
            client.chat(&exchange(0.0, "hello")).unwrap();
        }
        let client = ChatClient::new(Box::new(MockChatBackend::fixed("different")), "m", &cfg);
        assert_eq!(client.chat(&exchange(0.0, "hello")).unwrap(), "ok");
        assert_eq!(client.stats().calls(), 0);
    }

    #[test]
    fn transient_errors_retry_until_exhausted() {
        let client = ChatClient::new(
            Box::new(MockChatBackend::script(vec![Err(500), Err(500), Err(500)])),
            "m",
            &fast_retry(),
        );
        let err = client.chat(&exchange(0.0, "x")).unwrap_err();
        match err {
            ServiceError::ServiceUnavailable { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("expected ServiceUnavailable, got {other:?}"),
        }
        assert_eq!(client.stats().calls(), 3);
    }

    #[test]
    fn transient_then_success_recovers() {
        let client = ChatClient::new(
            Box::new(MockChatBackend::script(vec![Err(500), Ok("fine".into())])),
            "m",
            &fast_retry(),
        );
        assert_eq!(client.chat(&exchange(0.0, "x")).unwrap(), "fine");
        assert_eq!(client.stats().calls(), 2);
    }

    #[test]
    fn client_errors_do_not_retry() {
        let client = ChatClient::new(
            Box::new(MockChatBackend::script(vec![Err(404), Ok("never".into())])),
            "m",
            &fast_retry(),
        );
        assert!(matches!(
            client.chat(&exchange(0.0, "x")),
            Err(ServiceError::ClientError { status: 404, .. })
        ));
        assert_eq!(client.stats().calls(), 1);
    }

    #[test]
    fn concurrent_requests_respect_the_bound() {
        let cfg = ClientConfig {
            concurrency: 3,
            ..fast_retry()
        };
        let backend =
            MockChatBackend::fixed("ok").with_delay(std::time::Duration::from_millis(3));
        let client = ChatClient::new(Box::new(backend), "m", &cfg);
        std::thread::scope(|s| {
            for i in 0..16 {
                let client = &client;
                s.spawn(move || {
                    client.chat(&exchange(0.5, &format!("req {i}"))).unwrap();
                });
            }
        });
        assert_eq!(client.stats().calls(), 16);
        assert!(
            client.stats().peak_in_flight() <= 3,
            "peak in-flight was {}",
            client.stats().peak_in_flight()
        );
    }

    fn sim_tts(dir: &std::path::Path) -> TtsClient {
        let store = Arc::new(BlobStore::open(dir).unwrap());
        TtsClient::new(Box::new(SimTtsBackend), store, 7, &fast_retry())
    }

    fn job(text: &str, speaker_id: u32) -> TtsJob {
        TtsJob {
            text: text.into(),
            speaker_id,
            voice_id: "v".into(),
            language: Language::En,
        }
    }

    #[test]
    fn same_tts_job_reuses_locator_without_a_call() {
        let dir = tempfile::tempdir().unwrap();
        let tts = sim_tts(dir.path());
        let a = tts.synthesize(&job("hello there", 2)).unwrap();
        let b = tts.synthesize(&job("hello there", 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(tts.stats().calls(), 1);
        // Different speaker, different blob.
        let c = tts.synthesize(&job("hello there", 3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn speaker_out_of_range_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let tts = sim_tts(dir.path());
        assert!(matches!(
            tts.synthesize(&job("hello", 8)),
            Err(ServiceError::InvalidSpeaker { got: 8, max: 7 })
        ));
        assert!(matches!(
            tts.synthesize(&job("hello", 0)),
            Err(ServiceError::InvalidSpeaker { .. })
        ));
        assert!(matches!(
            tts.synthesize(&job("  ", 1)),
            Err(ServiceError::InvalidJob(_))
        ));
    }

    #[test]
    fn sim_asr_is_pure_and_cached() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(BlobStore::open(dir.path()).unwrap());
        let tts = TtsClient::new(Box::new(SimTtsBackend), store.clone(), 7, &fast_retry());
        let mut model = ConfusionModel { p_sub: 1.0, seed: 5, ..ConfusionModel::default() };
        model.sub_table.insert(
            "sun".into(),
            vec![Confusable { token: "son".into(), weight: 1.0 }],
        );
        let asr = AsrClient::new(
            Box::new(SimAsrBackend::new(model.clone()).unwrap()),
            store.clone(),
            &fast_retry(),
        );

        let audio = tts.synthesize(&job("the sun is rising", 1)).unwrap();
        let first = asr.transcribe(&audio, "u1", 5).unwrap();
        assert_eq!(first.nbest.len(), 5);
        assert!(first.nbest[0].text.contains("son"));

        // Same inputs, identical result, served from cache.
        let second = asr.transcribe(&audio, "u1", 5).unwrap();
        assert_eq!(first, second);
        assert_eq!(asr.stats().calls(), 1);

        // A separate client with the same model and seed reproduces it.
        let asr2 = AsrClient::new(
            Box::new(SimAsrBackend::new(model).unwrap()),
            store,
            &fast_retry(),
        );
        let third = asr2.transcribe(&audio, "u1", 5).unwrap();
        assert_eq!(first.nbest, third.nbest);
    }

    #[test]
    fn zero_noise_sim_asr_echoes_reference() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(BlobStore::open(dir.path()).unwrap());
        let tts = TtsClient::new(Box::new(SimTtsBackend), store.clone(), 7, &fast_retry());
        let asr = AsrClient::new(
            Box::new(SimAsrBackend::new(ConfusionModel::default()).unwrap()),
            store,
            &fast_retry(),
        );
        let audio = tts.synthesize(&job("the sun is rising", 1)).unwrap();
        let result = asr.transcribe(&audio, "u1", 3).unwrap();
        for hyp in &result.nbest {
            assert_eq!(hyp.text, "the sun is rising");
        }
        assert!(matches!(
            asr.transcribe(&audio, "u1", 0),
            Err(ServiceError::InvalidJob(_))
        ));
    }

    #[test]
    fn exchange_without_user_message_is_rejected() {
        let client = ChatClient::new(Box::new(MockChatBackend::fixed("ok")), "m", &fast_retry());
        let bad = ChatExchange::new("m", 0.0, vec![ChatMessage::system("only system")]);
        assert!(matches!(client.chat(&bad), Err(ServiceError::InvalidJob(_))));
        assert_eq!(client.stats().calls(), 0);
    }

    #[test]
    fn audit_log_records_calls() {
        let dir = tempfile::tempdir().unwrap();
        let audit_path = dir.path().join("audit.jsonl");
        let audit = AuditLog::open(&audit_path).unwrap();
        let client = ChatClient::new(Box::new(MockChatBackend::fixed("ok")), "m", &fast_retry())
            .with_audit(audit);
        client.chat(&exchange(0.0, "x")).unwrap();
        let text = std::fs::read_to_string(&audit_path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let record: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(record["backend"], "mock-chat");
        assert_eq!(record["kind"], "chat");
        assert_eq!(record["outcome"], "ok");
    }
}
