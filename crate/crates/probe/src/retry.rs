use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::ProbeError;

/// Retries with exponential backoff: attempt `i + 1` waits `base · 2^i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            base: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            retries: 0,
            base: Duration::ZERO,
        }
    }

    /// Run `op` until it succeeds, fails with a non-retriable error, or the
    /// retries run out. Returns the value and the number of attempts made.
    pub fn run<T>(
        &self,
        clock: &dyn Clock,
        what: &str,
        mut op: impl FnMut() -> Result<T, ProbeError>,
    ) -> Result<(T, u32), ProbeError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Ok(v) => {
                    if attempt > 1 {
                        log::info!("{what}: succeeded on attempt {attempt}");
                    }
                    return Ok((v, attempt));
                }
                Err(e) if e.is_retriable() && attempt <= self.retries => {
                    let wait = self.base * 2u32.saturating_pow(attempt - 1);
                    log::warn!("{what}: attempt {attempt} failed ({e}); retrying in {wait:?}");
                    clock.sleep(wait);
                }
                Err(e) => return Err(e),
            }
        }
    }
}
