use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::{Environment, ErrorClass, ToolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    pub backoff_factor: f64,
    pub retryable: BTreeSet<ErrorClass>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(10),
            backoff_factor: 2.0,
            retryable: [ErrorClass::RateLimited, ErrorClass::TransientUnavailable].into(),
        }
    }
}

impl RetryPolicy {
    /// A policy that never retries.
    pub fn once() -> Self {
        Self {
            max_attempts: 1,
            ..Self::default()
        }
    }

    /// Delay before attempt `attempt + 1`, counting attempts from 1.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = self
            .backoff_factor
            .max(1.0)
            .powi(attempt.saturating_sub(1) as i32);
        self.base_delay.mul_f64(factor)
    }

    pub fn check(&self) -> Result<(), &'static str> {
        if self.max_attempts == 0 {
            return Err("max_attempts must be at least 1");
        }
        if !(self.backoff_factor >= 1.0 && self.backoff_factor.is_finite()) {
            return Err("backoff_factor must be a finite number >= 1");
        }
        Ok(())
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retried {
    pub value: Value,
    pub attempts: u32,
    pub delays: Vec<Duration>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetryError {
    #[error("gave up after {attempts} attempts: {last_error}")]
    Exhausted {
        last_error: ToolError,
        attempts: u32,
        delays: Vec<Duration>,
    },
    #[error("not retryable: {error}")]
    Fatal {
        error: ToolError,
        attempts: u32,
        delays: Vec<Duration>,
    },
}

impl RetryError {
    pub fn error(&self) -> &ToolError {
        match self {
            RetryError::Exhausted { last_error, .. } => last_error,
            RetryError::Fatal { error, .. } => error,
        }
    }

    pub fn attempts(&self) -> u32 {
        match self {
            RetryError::Exhausted { attempts, .. } | RetryError::Fatal { attempts, .. } => {
                *attempts
            }
        }
    }
}

/// Calls `tool` until it succeeds, fails with a class outside
/// `policy.retryable`, or runs out of attempts. Sleeps on the tokio clock.
pub async fn with_retry<E: Environment>(
    env: &E,
    tool: &str,
    args: &Value,
    policy: &RetryPolicy,
) -> Result<Retried, RetryError> {
    let max = policy.max_attempts.max(1);
    let mut delays = Vec::new();
    let mut attempt = 1;
    loop {
        match env.call(tool, args).await {
            Ok(value) => {
                return Ok(Retried {
                    value,
                    attempts: attempt,
                    delays,
                });
            }
            Err(error) if !policy.retryable.contains(&error.class) => {
                return Err(RetryError::Fatal {
                    error,
                    attempts: attempt,
                    delays,
                });
            }
            Err(error) if attempt >= max => {
                return Err(RetryError::Exhausted {
                    last_error: error,
                    attempts: attempt,
                    delays,
                });
            }
            Err(_) => {
                let delay = policy.delay_after(attempt);
                tokio::time::sleep(delay).await;
                delays.push(delay);
                attempt += 1;
            }
        }
    }
}
