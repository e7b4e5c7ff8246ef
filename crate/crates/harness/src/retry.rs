//! Exponential backoff around a [`ChatModel`].

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::client::{ChatModel, ChatRequest, ChatResponse, EndpointError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    /// Extra random delay as a fraction of the computed one.
    pub jitter: f64,
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { base: Duration::from_secs(1), factor: 2.0, jitter: 0.25, max_retries: 5 }
    }
}

impl RetryPolicy {
    pub fn with_max_retries(max_retries: u32) -> Self {
        RetryPolicy { max_retries, ..Self::default() }
    }

    /// Delay before retry number `attempt` (0-based), without jitter.
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(attempt as i32))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryRecord {
    pub attempt: u32,
    pub class: String,
    pub message: String,
    pub delay_ms: u64,
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Retries retryable failures of `inner`. A server's Retry-After is honored
/// when longer than the computed backoff.
pub struct Retrying<M> {
    inner: M,
    policy: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
}

impl<M: ChatModel> Retrying<M> {
    pub fn new(inner: M, policy: RetryPolicy) -> Self {
        Self::with_sleeper(inner, policy, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(inner: M, policy: RetryPolicy, sleeper: Arc<dyn Sleeper>) -> Self {
        Retrying { inner, policy, sleeper }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: ChatModel> ChatModel for Retrying<M> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        let mut records = Vec::new();
        let mut attempt = 0;
        loop {
            match self.inner.complete(req) {
                Ok(mut r) => {
                    records.append(&mut r.retries);
                    r.retries = records;
                    return Ok(r);
                }
                Err(e) if e.is_retryable() && attempt < self.policy.max_retries => {
                    let mut delay = self.policy.backoff(attempt);
                    if self.policy.jitter > 0.0 {
                        delay = delay.mul_f64(1.0 + rand::thread_rng().gen_range(0.0..self.policy.jitter));
                    }
                    if let EndpointError::Status { retry_after: Some(ra), .. } = &e {
                        delay = delay.max(*ra);
                    }
                    log::warn!("{}: {e}; retry {} in {:?}", self.inner.name(), attempt + 1, delay);
                    records.push(RetryRecord {
                        attempt,
                        class: e.class().into(),
                        message: e.to_string(),
                        delay_ms: delay.as_millis() as u64,
                    });
                    self.sleeper.sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
