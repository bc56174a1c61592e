//! Transports behind source endpoints: live HTTP(S) and recorded fixtures.

use std::path::{Component, Path, PathBuf};
use std::time::Duration;

use barometer_core::ingest::{HttpRequest, HttpResponse, Method, Transport, TransportError};

pub const FIXTURE_SCHEME: &str = "fixture://";

/// Blocking HTTP client. Non-2xx statuses are returned, not raised.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("barometer/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &HttpRequest<'_>) -> Result<HttpResponse, TransportError> {
        let result = match (request.method, request.body) {
            (Method::Post, body) => self
                .agent
                .post(request.url)
                .header("content-type", "application/json")
                .send(body.unwrap_or_default()),
            (Method::Get, _) => self.agent.get(request.url).call(),
        };
        let mut response = result.map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Serves `fixture://<relative path>` from a directory. Missing files
/// answer 404 like a server would.
pub struct FixtureTransport {
    root: PathBuf,
}

impl FixtureTransport {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn resolve(&self, url: &str) -> Result<PathBuf, TransportError> {
        let rel = url
            .strip_prefix(FIXTURE_SCHEME)
            .ok_or_else(|| TransportError(format!("not a fixture endpoint: {url}")))?;
        let rel = Path::new(rel);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(TransportError(format!(
                "fixture path escapes the fixture directory: {url}"
            )));
        }
        Ok(self.root.join(rel))
    }
}

impl Transport for FixtureTransport {
    fn send(&self, request: &HttpRequest<'_>) -> Result<HttpResponse, TransportError> {
        let path = self.resolve(request.url)?;
        match std::fs::read(&path) {
            Ok(body) => Ok(HttpResponse { status: 200, body }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(HttpResponse {
                status: 404,
                body: Vec::new(),
            }),
            Err(e) => Err(TransportError(format!("{}: {e}", path.display()))),
        }
    }
}

/// Dispatches on the endpoint scheme.
pub struct SourceTransport {
    fixtures: Option<FixtureTransport>,
    http: Option<HttpTransport>,
}

impl SourceTransport {
    /// `http` is `None` in fixture mode.
    pub fn new(fixtures: Option<FixtureTransport>, http: Option<HttpTransport>) -> Self {
        Self { fixtures, http }
    }
}

impl Transport for SourceTransport {
    fn send(&self, request: &HttpRequest<'_>) -> Result<HttpResponse, TransportError> {
        if request.url.starts_with(FIXTURE_SCHEME) {
            return match &self.fixtures {
                Some(f) => f.send(request),
                None => Err(TransportError("no fixture directory configured".into())),
            };
        }
        match &self.http {
            Some(h) => h.send(request),
            None => Err(TransportError(format!(
                "network endpoints are disabled in fixture mode: {}",
                request.url
            ))),
        }
    }
}
