use std::collections::{HashMap, VecDeque};
use std::time::{Duration, Instant};

use parking_lot::Mutex;

/// Per-username sliding window over failed authentications.
pub struct RateLimiter {
    max_failures: u32,
    window: Duration,
    failures: Mutex<HashMap<String, VecDeque<Instant>>>,
}

impl RateLimiter {
    pub fn new(max_failures: u32, window: Duration) -> Self {
        RateLimiter { max_failures, window, failures: Mutex::new(HashMap::new()) }
    }

    pub fn is_limited(&self, username: &str) -> bool {
        self.is_limited_at(username, Instant::now())
    }

    pub fn record_failure(&self, username: &str) {
        self.record_failure_at(username, Instant::now())
    }

    pub fn is_limited_at(&self, username: &str, now: Instant) -> bool {
        let mut map = self.failures.lock();
        let Some(q) = map.get_mut(username) else {
            return false;
        };
        self.prune(q, now);
        if q.is_empty() {
            map.remove(username);
            return false;
        }
        q.len() >= self.max_failures as usize
    }

    pub fn record_failure_at(&self, username: &str, now: Instant) {
        let mut map = self.failures.lock();
        let q = map.entry(username.to_owned()).or_default();
        self.prune(q, now);
        q.push_back(now);
    }

    fn prune(&self, q: &mut VecDeque<Instant>, now: Instant) {
        while q.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
            q.pop_front();
        }
    }
}
