use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Monotonic time source; the client sleeps and measures through it.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
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

/// Virtual clock: sleeping advances time instantly and is recorded.
#[derive(Debug, Clone, Default)]
pub struct MockClock {
    inner: Arc<Mutex<MockState>>,
}

#[derive(Debug, Default)]
struct MockState {
    now: Duration,
    sleeps: Vec<Duration>,
}

impl MockClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        self.inner.lock().unwrap().now += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.inner.lock().unwrap().sleeps.clone()
    }
}

impl Clock for MockClock {
    fn now(&self) -> Duration {
        self.inner.lock().unwrap().now
    }

    fn sleep(&self, d: Duration) {
        let mut s = self.inner.lock().unwrap();
        s.now += d;
        s.sleeps.push(d);
    }
}
