//! Time sources. Probing code never reads the system clock directly, so
//! rate limiting, backoff and cache expiry can run on simulated time.

use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Time since the Unix epoch (or since the start of a simulation).
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);

    fn sleep_until(&self, t: Duration) {
        let now = self.now();
        if t > now {
            self.sleep(t - now);
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Simulated time. `sleep` returns immediately after moving the clock
/// forward, so the clock only advances when some caller waits. Shared
/// between threads via cheap clones.
#[derive(Debug, Clone, Default)]
pub struct SimClock {
    inner: Arc<Mutex<Duration>>,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(t: Duration) -> Self {
        let c = Self::default();
        *c.inner.lock().unwrap() = t;
        c
    }

    pub fn advance(&self, d: Duration) {
        *self.inner.lock().unwrap() += d;
    }
}

impl Clock for SimClock {
    fn now(&self) -> Duration {
        *self.inner.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }

    fn sleep_until(&self, t: Duration) {
        let mut now = self.inner.lock().unwrap();
        *now = (*now).max(t);
    }
}
