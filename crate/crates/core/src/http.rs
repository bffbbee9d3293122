//! Minimal blocking HTTP layer shared by the registry and repository probes.
//!
//! Everything network-facing goes through [`HttpTransport`], so tests can swap
//! in [`FixtureTransport`] (canned responses) or [`AbortTransport`] (fails the
//! test on any request).

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Head,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest {
            method: Method::Get,
            url: url.into(),
            headers: Vec::new(),
        }
    }

    pub fn head(url: impl Into<String>) -> Self {
        HttpRequest {
            method: Method::Head,
            ..HttpRequest::get(url)
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn host(&self) -> String {
        url::Url::parse(&self.url)
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    /// Header names are lowercased.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status: u16, body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_ascii_lowercase(), value.into()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.headers
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    fn is_retryable(&self) -> bool {
        self.status == 429 || (500..600).contains(&self.status)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("timeout")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("{0}")]
    Other(String),
}

impl TransportError {
    /// Short label used in `Unknown(..)` statuses.
    pub fn reason(&self) -> String {
        match self {
            TransportError::Timeout => "timeout".to_string(),
            TransportError::Connect(_) => "connection failed".to_string(),
            TransportError::Other(msg) => msg.clone(),
        }
    }
}

pub trait HttpTransport: Send + Sync {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Live transport over `reqwest`. Honors the standard proxy environment variables.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("chainsmell/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut builder = match request.method {
            Method::Get => self.client.get(&request.url),
            Method::Head => self.client.head(&request.url),
        };
        for (name, value) in &request.headers {
            builder = builder.header(name.as_str(), value.as_str());
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else if e.is_connect() {
                TransportError::Connect(e.to_string())
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let headers = response
            .headers()
            .iter()
            .filter_map(|(k, v)| {
                Some((
                    k.as_str().to_ascii_lowercase(),
                    v.to_str().ok()?.to_string(),
                ))
            })
            .collect();
        let body = response
            .bytes()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Other(e.to_string())
                }
            })?
            .to_vec();
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Retries transport errors, 429 and 5xx with exponential backoff.
///
/// Once retries are exhausted the last response (or error) is returned as-is;
/// callers map it to an `Unknown` status.
pub struct RetryingTransport<T, S = ThreadSleeper> {
    inner: T,
    policy: RetryPolicy,
    sleeper: S,
}

impl<T: HttpTransport> RetryingTransport<T> {
    pub fn new(inner: T, policy: RetryPolicy) -> Self {
        RetryingTransport {
            inner,
            policy,
            sleeper: ThreadSleeper,
        }
    }
}

impl<T: HttpTransport, S: Sleeper> RetryingTransport<T, S> {
    pub fn with_sleeper(inner: T, policy: RetryPolicy, sleeper: S) -> Self {
        RetryingTransport {
            inner,
            policy,
            sleeper,
        }
    }
}

impl<T: HttpTransport, S: Sleeper> HttpTransport for RetryingTransport<T, S> {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut attempt = 0;
        loop {
            let result = self.inner.execute(request);
            let retry = match &result {
                Ok(response) => response.is_retryable(),
                Err(_) => true,
            };
            if !retry || attempt >= self.policy.max_retries {
                return result;
            }
            let delay = match &result {
                Ok(response) => response
                    .header("retry-after")
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs),
                Err(_) => None,
            }
            .unwrap_or(self.policy.base_delay * 2u32.pow(attempt));
            tracing::debug!(url = %request.url, attempt, ?delay, "retrying request");
            self.sleeper.sleep(delay);
            attempt += 1;
        }
    }
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

/// Token bucket per host, shared by every request that goes through this transport.
pub struct RateLimitedTransport<T> {
    inner: T,
    per_second: f64,
    buckets: Mutex<HashMap<String, Bucket>>,
}

impl<T: HttpTransport> RateLimitedTransport<T> {
    pub fn new(inner: T, per_second: f64) -> Self {
        RateLimitedTransport {
            inner,
            per_second: per_second.max(0.001),
            buckets: Mutex::new(HashMap::new()),
        }
    }

    /// Takes a token for `host`, returning how long the caller must wait first.
    fn reserve(&self, host: &str) -> Duration {
        let mut buckets = self.buckets.lock().unwrap_or_else(|e| e.into_inner());
        let now = Instant::now();
        let capacity = self.per_second.max(1.0);
        let bucket = buckets.entry(host.to_string()).or_insert(Bucket {
            tokens: capacity,
            last: now,
        });
        let elapsed = now.saturating_duration_since(bucket.last).as_secs_f64();
        bucket.tokens = (bucket.tokens + elapsed * self.per_second).min(capacity);
        bucket.last = now;
        bucket.tokens -= 1.0;
        if bucket.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-bucket.tokens / self.per_second)
        }
    }
}

impl<T: HttpTransport> HttpTransport for RateLimitedTransport<T> {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let wait = self.reserve(&request.host());
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        self.inner.execute(request)
    }
}

/// Serves canned responses keyed by method and URL; unknown URLs get a 404.
#[derive(Default)]
pub struct FixtureTransport {
    responses: HashMap<(Method, String), Result<HttpResponse, TransportError>>,
    calls: Mutex<Vec<HttpRequest>>,
}

impl FixtureTransport {
    pub fn new() -> Self {
        FixtureTransport::default()
    }

    pub fn on_get(mut self, url: impl Into<String>, response: HttpResponse) -> Self {
        self.responses
            .insert((Method::Get, url.into()), Ok(response));
        self
    }

    pub fn on_head(mut self, url: impl Into<String>, response: HttpResponse) -> Self {
        self.responses
            .insert((Method::Head, url.into()), Ok(response));
        self
    }

    pub fn on_get_json(self, url: impl Into<String>, body: &serde_json::Value) -> Self {
        self.on_get(url, HttpResponse::new(200, body.to_string()))
    }

    pub fn fail(mut self, method: Method, url: impl Into<String>, error: TransportError) -> Self {
        self.responses.insert((method, url.into()), Err(error));
        self
    }

    pub fn calls(&self) -> Vec<HttpRequest> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl HttpTransport for FixtureTransport {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.calls
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.clone());
        self.responses
            .get(&(request.method, request.url.clone()))
            .cloned()
            .unwrap_or_else(|| Ok(HttpResponse::new(404, "")))
    }
}

/// Counts every attempted request and refuses to serve it. Used to prove
/// replay runs stay offline.
#[derive(Debug, Default)]
pub struct AbortTransport {
    attempts: AtomicUsize,
}

impl AbortTransport {
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl HttpTransport for AbortTransport {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Other(format!(
            "network access is disabled (attempted {})",
            request.url
        )))
    }
}

impl<T: HttpTransport + ?Sized> HttpTransport for std::sync::Arc<T> {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).execute(request)
    }
}

impl<T: HttpTransport + ?Sized> HttpTransport for &T {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).execute(request)
    }
}
