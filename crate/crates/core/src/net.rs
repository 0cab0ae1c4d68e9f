//! Blocking HTTP transport used by the crawler and the LLM client.
//!
//! The pipeline never talks to the network directly; it goes through a
//! [`Transport`]. That keeps three implementations interchangeable:
//! [`UreqTransport`] for live runs, [`FixtureTransport`] for offline runs
//! against a mirrored site directory, and [`RecordingTransport`] which wraps
//! either and logs every request for assertions.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;
use url::Url;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("transport error: {0}")]
    Other(String),
}

impl TransportError {
    /// Timeouts and connection failures are worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(self, TransportError::Timeout(_) | TransportError::Connect(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &Url) -> Result<HttpResponse, TransportError>;

    /// POST a JSON body, optionally with a bearer token.
    fn post_json(&self, url: &Url, bearer: Option<&str>, body: &[u8]) -> Result<HttpResponse, TransportError>;
}

const USER_AGENT: &str = concat!("infodemic/", env!("CARGO_PKG_VERSION"));

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent(USER_AGENT)
            .build()
            .into();
        Self { agent }
    }

    fn finish(result: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<HttpResponse, TransportError> {
        let mut response = result.map_err(map_ureq_error)?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .with_config()
            .limit(32 * 1024 * 1024)
            .read_to_vec()
            .map_err(map_ureq_error)?;
        Ok(HttpResponse { status, body })
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

fn map_ureq_error(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout(io.to_string()),
        ureq::Error::Io(io) => TransportError::Connect(io.to_string()),
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => TransportError::Connect(err.to_string()),
        other => TransportError::Other(other.to_string()),
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &Url) -> Result<HttpResponse, TransportError> {
        Self::finish(self.agent.get(url.as_str()).call())
    }

    fn post_json(&self, url: &Url, bearer: Option<&str>, body: &[u8]) -> Result<HttpResponse, TransportError> {
        let mut request = self.agent.post(url.as_str()).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        Self::finish(request.send(body))
    }
}

/// Serves GET requests from a mirrored site directory.
///
/// The directory holds a `manifest.tsv` with one `url<TAB>status<TAB>file`
/// row per page; `file` is relative to the directory and may be `-` for
/// bodiless responses. Unknown URLs answer 404.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    root: PathBuf,
    pages: HashMap<String, (u16, Option<PathBuf>)>,
}

impl FixtureTransport {
    pub fn open(root: impl AsRef<Path>) -> std::io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = fs::read_to_string(root.join("manifest.tsv"))?;
        let mut pages = HashMap::new();
        for (lineno, line) in manifest.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, format!("manifest.tsv line {}: expected url, status, file", lineno + 1));
            if cols.len() != 3 {
                return Err(bad());
            }
            let status: u16 = cols[1].parse().map_err(|_| bad())?;
            let file = (cols[2] != "-").then(|| PathBuf::from(cols[2]));
            let key = Url::parse(cols[0]).map_err(|_| bad())?.to_string();
            pages.insert(key, (status, file));
        }
        Ok(Self { root, pages })
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &Url) -> Result<HttpResponse, TransportError> {
        match self.pages.get(url.as_str()) {
            Some((status, file)) => {
                let body = match file {
                    Some(rel) => fs::read(self.root.join(rel)).map_err(|e| TransportError::Other(e.to_string()))?,
                    None => Vec::new(),
                };
                Ok(HttpResponse { status: *status, body })
            }
            None => Ok(HttpResponse {
                status: 404,
                body: Vec::new(),
            }),
        }
    }

    fn post_json(&self, url: &Url, _bearer: Option<&str>, _body: &[u8]) -> Result<HttpResponse, TransportError> {
        Err(TransportError::Other(format!("fixture transport cannot POST to {url}")))
    }
}

/// Wraps a transport and records every request it forwards.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<Vec<(Method, Url)>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<(Method, Url)> {
        self.log.lock().unwrap().clone()
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn get(&self, url: &Url) -> Result<HttpResponse, TransportError> {
        self.log.lock().unwrap().push((Method::Get, url.clone()));
        self.inner.get(url)
    }

    fn post_json(&self, url: &Url, bearer: Option<&str>, body: &[u8]) -> Result<HttpResponse, TransportError> {
        self.log.lock().unwrap().push((Method::Post, url.clone()));
        self.inner.post_json(url, bearer, body)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn get(&self, url: &Url) -> Result<HttpResponse, TransportError> {
        (**self).get(url)
    }

    fn post_json(&self, url: &Url, bearer: Option<&str>, body: &[u8]) -> Result<HttpResponse, TransportError> {
        (**self).post_json(url, bearer, body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_transport_serves_manifest_entries_and_404s_the_rest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.html"), "<p>hi</p>").unwrap();
        fs::write(
            dir.path().join("manifest.tsv"),
            "# url\tstatus\tfile\nhttps://example.org/a\t200\ta.html\nhttps://example.org/gone\t410\t-\n",
        )
        .unwrap();
        let transport = RecordingTransport::new(FixtureTransport::open(dir.path()).unwrap());

        let a = transport.get(&Url::parse("https://example.org/a").unwrap()).unwrap();
        assert_eq!(a.status, 200);
        assert_eq!(a.body, b"<p>hi</p>");
        assert_eq!(transport.get(&Url::parse("https://example.org/gone").unwrap()).unwrap().status, 410);
        assert_eq!(transport.get(&Url::parse("https://example.org/missing").unwrap()).unwrap().status, 404);
        assert_eq!(transport.requests().len(), 3);
    }

    #[test]
    fn malformed_manifest_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("manifest.tsv"), "https://example.org/a\tok\ta.html\n").unwrap();
        assert!(FixtureTransport::open(dir.path()).is_err());
    }
}
