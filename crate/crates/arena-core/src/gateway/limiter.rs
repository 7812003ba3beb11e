//! Sliding-window rate limiter.

use std::collections::VecDeque;
use std::time::Duration;

use tokio::sync::Mutex;
use tokio::time::Instant;

/// Admits at most `capacity` acquisitions within any window of the configured
/// length. Callers over the limit sleep until the oldest admission ages out.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: usize,
    window: Duration,
    admissions: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(capacity: u32, window: Duration) -> Self {
        assert!(capacity > 0, "rate limiter capacity must be positive");
        RateLimiter {
            capacity: capacity as usize,
            window,
            admissions: Mutex::new(VecDeque::new()),
        }
    }

    pub fn per_minute(capacity: u32) -> Self {
        RateLimiter::new(capacity, Duration::from_secs(60))
    }

    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut admissions = self.admissions.lock().await;
                let now = Instant::now();
                while let Some(front) = admissions.front() {
                    if now.duration_since(*front) >= self.window {
                        admissions.pop_front();
                    } else {
                        break;
                    }
                }
                if admissions.len() < self.capacity {
                    admissions.push_back(now);
                    None
                } else {
                    let oldest = *admissions.front().expect("queue is at capacity");
                    Some(self.window - now.duration_since(oldest))
                }
            };
            match wait {
                None => return,
                Some(delay) => tokio::time::sleep(delay).await,
            }
        }
    }
}
