use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimit {
    pub max_requests: u32,
    pub interval: Duration,
}

impl RateLimit {
    pub fn per_minute(n: u32) -> Self {
        RateLimit {
            max_requests: n,
            interval: Duration::from_secs(60),
        }
    }
}

/// Sliding-window limiter: at most `max_requests` grants in any window of
/// length `interval`. Shared by all workers using one client.
#[derive(Debug)]
pub struct RateLimiter {
    limit: Option<RateLimit>,
    granted: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(limit: Option<RateLimit>) -> Self {
        RateLimiter {
            limit: limit.filter(|l| l.max_requests > 0),
            granted: Mutex::new(VecDeque::new()),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    /// Blocks (through `clock`) until a request may be issued, then records it.
    pub fn acquire(&self, clock: &dyn Clock) {
        let Some(limit) = self.limit else {
            return;
        };
        let mut granted = self.granted.lock().unwrap();
        loop {
            let now = clock.now();
            while granted
                .front()
                .is_some_and(|&t| now.saturating_sub(t) >= limit.interval)
            {
                granted.pop_front();
            }
            if (granted.len() as u32) < limit.max_requests {
                granted.push_back(now);
                return;
            }
            let oldest = *granted.front().unwrap();
            clock.sleep(oldest + limit.interval - now);
        }
    }
}
