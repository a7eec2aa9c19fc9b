//! Token-bucket rate limiting, implemented as a reservation schedule: each
//! request books the earliest slot the bucket allows and then waits for it.

use std::sync::Mutex;
use std::time::Duration;

use crate::clock::Clock;
use crate::error::ProbeError;

#[derive(Debug)]
pub struct TokenBucket {
    interval: Duration,
    burst: u32,
    /// Time at which the bucket would be full again if nothing else arrived.
    next_free: Mutex<Option<Duration>>,
}

impl TokenBucket {
    /// At most `per_second` requests per second on average, with up to
    /// `burst` back to back. With `burst = 1` no one-second window ever holds
    /// more than `per_second` requests.
    pub fn new(per_second: f64, burst: u32) -> Result<Self, ProbeError> {
        if !(per_second.is_finite() && per_second > 0.0) {
            return Err(ProbeError::Config(format!("rate must be positive, got {per_second}")));
        }
        if burst == 0 {
            return Err(ProbeError::Config("burst must be at least 1".into()));
        }
        // Round the spacing up so rounding never lets the rate exceed the limit.
        let nanos = (1e9 / per_second).ceil() as u64;
        Ok(Self {
            interval: Duration::from_nanos(nanos.max(1)),
            burst,
            next_free: Mutex::new(None),
        })
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Book the next slot without waiting. Returns the slot time.
    pub fn reserve(&self, now: Duration) -> Duration {
        let mut tat = self.next_free.lock().unwrap();
        let slack = self.interval * (self.burst - 1);
        let earliest = tat.map_or(now, |t| t.saturating_sub(slack));
        let slot = now.max(earliest);
        *tat = Some(slot.max(tat.unwrap_or(slot)) + self.interval);
        slot
    }

    /// Wait on `clock` until a request may be issued; returns the issue time.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        let slot = self.reserve(clock.now());
        clock.sleep_until(slot);
        slot
    }
}
