use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::ModelProfile;

/// Per-profile token bucket with a capacity of one: callers for the same
/// profile are spaced at least `60 / requests_per_minute` seconds apart.
/// Profiles without a limit pass straight through.
#[derive(Default)]
pub(super) struct RateLimiter {
    next_free: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    pub fn acquire(&self, profile: &ModelProfile) {
        let Some(rpm) = profile.requests_per_minute.filter(|&r| r > 0) else {
            return;
        };
        let interval = Duration::from_secs_f64(60.0 / rpm as f64);
        let wait = {
            let mut map = self.next_free.lock().unwrap();
            let now = Instant::now();
            let slot = map.get(&profile.name).copied().unwrap_or(now).max(now);
            map.insert(profile.name.clone(), slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}
