//! Scriptable chat backend for tests: canned responses, forced failures,
//! call recording, and optional artificial latency.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use super::{ChatBackend, ChatExchange, ServiceError};

enum Behavior {
    /// Always the same response.
    Fixed(String),
    /// Response keyed by the last user message; missing keys are an error.
    Canned(BTreeMap<String, String>),
    /// Echo the first numbered item of the user message.
    EchoFirstNumbered,
    /// Pop scripted outcomes in order; `Err(status)` simulates an HTTP error.
    Script(Mutex<Vec<Result<String, u16>>>),
}

pub struct MockChatBackend {
    behavior: Behavior,
    delay: Option<Duration>,
    pub exchanges: Mutex<Vec<ChatExchange>>,
}

impl MockChatBackend {
    pub fn fixed(response: impl Into<String>) -> Self {
        Self::with_behavior(Behavior::Fixed(response.into()))
    }

    pub fn canned(map: BTreeMap<String, String>) -> Self {
        Self::with_behavior(Behavior::Canned(map))
    }

    pub fn echo_first_numbered() -> Self {
        Self::with_behavior(Behavior::EchoFirstNumbered)
    }

    /// Outcomes are consumed front to back; once exhausted, every further
    /// call fails with a 500.
    pub fn script(outcomes: Vec<Result<String, u16>>) -> Self {
        Self::with_behavior(Behavior::Script(Mutex::new(outcomes)))
    }

    fn with_behavior(behavior: Behavior) -> Self {
        MockChatBackend {
            behavior,
            delay: None,
            exchanges: Mutex::new(Vec::new()),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn call_count(&self) -> usize {
        self.exchanges.lock().unwrap().len()
    }

    pub fn last_exchange(&self) -> Option<ChatExchange> {
        self.exchanges.lock().unwrap().last().cloned()
    }
}

// Sharing an Arc lets tests hold onto the mock and inspect recorded
// exchanges after the client takes ownership of its backend box.
impl ChatBackend for std::sync::Arc<MockChatBackend> {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ServiceError> {
        self.as_ref().complete(exchange)
    }

    fn name(&self) -> &str {
        self.as_ref().name()
    }
}

impl ChatBackend for MockChatBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<String, ServiceError> {
        self.exchanges.lock().unwrap().push(exchange.clone());
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }
        let user = exchange.last_user_content().unwrap_or_default();
        match &self.behavior {
            Behavior::Fixed(r) => Ok(r.clone()),
            Behavior::Canned(map) => map.get(user).cloned().ok_or_else(|| {
                ServiceError::Protocol(format!("mock has no canned response for {user:?}"))
            }),
            Behavior::EchoFirstNumbered => Ok(user
                .lines()
                .find_map(|l| l.trim().strip_prefix("1."))
                .map(|rest| rest.trim().to_string())
                .unwrap_or_else(|| user.trim().to_string())),
            Behavior::Script(outcomes) => {
                let mut outcomes = outcomes.lock().unwrap();
                let outcome = if outcomes.is_empty() {
                    Err(500)
                } else {
                    outcomes.remove(0)
                };
                match outcome {
                    Ok(text) => Ok(text),
                    Err(status) if (500..600).contains(&(status as usize)) || status == 429 => {
                        Err(ServiceError::Transport(format!("mock HTTP {status}")))
                    }
                    Err(status) => Err(ServiceError::ClientError {
                        status,
                        body: "mock client error".into(),
                    }),
                }
            }
        }
    }

    fn name(&self) -> &str {
        "mock-chat"
    }
}
