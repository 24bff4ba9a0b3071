//! Real HTTP backends: an OpenAI-compatible chat-completions client and thin
//! generic REST adapters for TTS and ASR providers.

use std::time::Duration;

use serde_json::{json, Value};

use super::{AsrBackend, ChatBackend, ChatExchange, ServiceError, TtsBackend, TtsJob};
use crate::corpus::Hypothesis;

fn build_client(timeout_secs: u64) -> Result<reqwest::blocking::Client, ServiceError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| ServiceError::Transport(e.to_string()))
}

fn classify_transport(e: reqwest::Error) -> ServiceError {
    ServiceError::Transport(e.to_string())
}

fn status_error(status: u16, body: String) -> ServiceError {
    if (400..500).contains(&status) && status != 429 {
        ServiceError::ClientError { status, body }
    } else {
        // 5xx and 429 are worth retrying.
        ServiceError::Transport(format!("HTTP {status}: {body}"))
    }
}

fn check_status(status: u16, body: String) -> Result<String, ServiceError> {
    if (200..300).contains(&status) {
        Ok(body)
    } else {
        Err(status_error(status, body))
    }
}

/// Extract the assistant text from a chat-completions response body.
pub fn parse_chat_completion(body: &str) -> Result<String, ServiceError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| ServiceError::Protocol(format!("invalid JSON from chat backend: {e}")))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| {
            ServiceError::Protocol("response has no choices[0].message.content".into())
        })?;
    if content.trim().is_empty() {
        return Err(ServiceError::EmptyResponse);
    }
    Ok(content.to_string())
}

/// OpenAI-compatible chat-completions backend over HTTPS.
pub struct HttpChatBackend {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    /// `endpoint` is the full chat-completions URL, e.g.
    /// `https://api.openai.com/v1/chat/completions`.
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout_secs: u64,
    ) -> Result<Self, ServiceError> {
        Ok(HttpChatBackend {
            endpoint: endpoint.into(),
            api_key,
            client: build_client(timeout_secs)?,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ServiceError> {
        let body = json!({
            "model": exchange.model_id,
            "temperature": exchange.temperature,
            "messages": exchange.messages,
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify_transport)?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(classify_transport)?;
        let body = check_status(status, text)?;
        parse_chat_completion(&body)
    }

    fn name(&self) -> &str {
        "http-chat"
    }
}

/// Generic REST TTS adapter: POST {text, voice_id, speaker_id, language},
/// audio bytes back.
pub struct HttpTtsBackend {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTtsBackend {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout_secs: u64,
    ) -> Result<Self, ServiceError> {
        Ok(HttpTtsBackend {
            endpoint: endpoint.into(),
            api_key,
            client: build_client(timeout_secs)?,
        })
    }
}

impl TtsBackend for HttpTtsBackend {
    fn synthesize(&self, job: &TtsJob) -> Result<Vec<u8>, ServiceError> {
        let body = json!({
            "text": job.text,
            "voice_id": job.voice_id,
            "speaker_id": job.speaker_id,
            "language": job.language,
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify_transport)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.text().unwrap_or_default();
            return Err(status_error(status, text));
        }
        let bytes = resp.bytes().map_err(classify_transport)?;
        if bytes.is_empty() {
            return Err(ServiceError::EmptyResponse);
        }
        Ok(bytes.to_vec())
    }

    fn name(&self) -> &str {
        "http-tts"
    }
}

/// Generic REST ASR adapter: POST audio bytes with `?n=`, JSON
/// `{"nbest": [{"text": ..., "score": ...}]}` back.
pub struct HttpAsrBackend {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpAsrBackend {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout_secs: u64,
    ) -> Result<Self, ServiceError> {
        Ok(HttpAsrBackend {
            endpoint: endpoint.into(),
            api_key,
            client: build_client(timeout_secs)?,
        })
    }
}

/// Extract the hypothesis list from an ASR response body.
pub fn parse_asr_response(body: &str) -> Result<Vec<Hypothesis>, ServiceError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| ServiceError::Protocol(format!("invalid JSON from ASR backend: {e}")))?;
    let items = value
        .get("nbest")
        .and_then(Value::as_array)
        .ok_or_else(|| ServiceError::Protocol("response has no nbest array".into()))?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let text = item
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| ServiceError::Protocol("nbest item has no text".into()))?;
        out.push(Hypothesis {
            text: text.to_string(),
            score: item.get("score").and_then(Value::as_f64),
        });
    }
    if out.is_empty() {
        return Err(ServiceError::EmptyResponse);
    }
    Ok(out)
}

impl AsrBackend for HttpAsrBackend {
    fn transcribe(&self, audio: &[u8], n: usize) -> Result<Vec<Hypothesis>, ServiceError> {
        let sep = if self.endpoint.contains('?') { '&' } else { '?' };
        let url = format!("{}{sep}n={n}", self.endpoint);
        let mut req = self
            .client
            .post(url)
            .header("content-type", "application/octet-stream")
            .body(audio.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify_transport)?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(classify_transport)?;
        let body = check_status(status, text)?;
        parse_asr_response(&body)
    }

    fn name(&self) -> &str {
        "http-asr"
    }
}
