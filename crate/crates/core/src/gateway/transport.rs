use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// One JSON POST. Implementations must not retry; the gateway owns retries.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &str) -> Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        UreqTransport { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &str) -> Result<HttpResponse, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Time source for rate limiting and backoff.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
    fn unix_secs(&self) -> u64;
}

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
        std::thread::sleep(d)
    }

    fn unix_secs(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }
}

/// Virtual clock: `sleep` advances time instantly and is recorded.
#[derive(Debug, Default)]
pub struct ManualClock {
    state: Mutex<(Duration, Vec<Duration>)>,
    unix_base: u64,
}

impl ManualClock {
    pub fn new(unix_base: u64) -> Self {
        ManualClock { state: Mutex::new((Duration::ZERO, Vec::new())), unix_base }
    }

    pub fn advance(&self, d: Duration) {
        self.state.lock().unwrap().0 += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().unwrap().1.clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        self.state.lock().unwrap().0
    }

    fn sleep(&self, d: Duration) {
        let mut s = self.state.lock().unwrap();
        s.0 += d;
        s.1.push(d);
    }

    fn unix_secs(&self) -> u64 {
        self.unix_base + self.now().as_secs()
    }
}

/// Sliding one-minute window: at most `per_minute` acquisitions in any 60 s.
pub struct RateLimiter {
    per_minute: u32,
    issued: Mutex<VecDeque<Duration>>,
}

const WINDOW: Duration = Duration::from_secs(60);

impl RateLimiter {
    /// `per_minute == 0` disables limiting.
    pub fn new(per_minute: u32) -> Self {
        RateLimiter { per_minute, issued: Mutex::new(VecDeque::new()) }
    }

    /// Blocks (via `clock.sleep`) until a request may be issued, then records it.
    pub fn acquire(&self, clock: &dyn Clock) {
        if self.per_minute == 0 {
            return;
        }
        let mut issued = self.issued.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            let now = clock.now();
            while issued.front().is_some_and(|&t| now >= t + WINDOW) {
                issued.pop_front();
            }
            if issued.len() < self.per_minute as usize {
                issued.push_back(now);
                return;
            }
            let wait = issued[0] + WINDOW - now;
            clock.sleep(wait);
        }
    }
}
