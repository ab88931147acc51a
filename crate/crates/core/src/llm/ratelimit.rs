use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

pub const WINDOW: Duration = Duration::from_secs(60);

/// Time source for rate limiting and backoff.
pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock: `sleep` advances time instantly.
#[derive(Debug, Clone, Default)]
pub struct MockClock {
    nanos: Arc<AtomicU64>,
}

impl MockClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for MockClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Sliding-window log limiter: at most `per_minute` grants in any 60 s window.
pub struct RateLimiter {
    per_minute: usize,
    clock: Arc<dyn Clock>,
    grants: Mutex<VecDeque<Duration>>,
}

impl std::fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateLimiter")
            .field("per_minute", &self.per_minute)
            .finish_non_exhaustive()
    }
}

impl RateLimiter {
    pub fn new(per_minute: u32, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            per_minute: per_minute.max(1) as usize,
            clock,
            grants: Mutex::new(VecDeque::new()),
        }
    }

    pub fn per_minute(&self) -> usize {
        self.per_minute
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Blocks until a request may be sent and returns the grant time.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut grants = self.grants.lock().unwrap_or_else(|e| e.into_inner());
                let now = self.clock.now();
                while grants.front().is_some_and(|t| now >= *t + WINDOW) {
                    grants.pop_front();
                }
                if grants.len() < self.per_minute {
                    grants.push_back(now);
                    return now;
                }
                grants[0] + WINDOW - now
            };
            self.clock.sleep(wait);
        }
    }
}
