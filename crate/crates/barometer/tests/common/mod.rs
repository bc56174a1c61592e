#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use barometer::platform::Platform;
use barometer::transport::FixtureTransport;
use barometer::{api, Config};
use barometer_core::ingest::{HttpRequest, HttpResponse, Timestamp, Transport, TransportError};
use chrono::DateTime;
use http_body_util::BodyExt;
use tempfile::TempDir;
use tower::ServiceExt;

pub const ADMIN_TOKEN: &str = "test-admin-token";
pub const IDENTIFIER_FIELDS: [&str; 3] = ["org_number", "business_name", "contact_email"];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn t0() -> Timestamp {
    DateTime::from_timestamp(1_546_300_800, 0).unwrap()
}

pub struct Harness {
    pub dir: TempDir,
    pub config: Config,
    pub platform: Arc<Platform>,
}

pub fn config(dir: &TempDir) -> Config {
    let mut config = Config::load(&fixtures().join("barometer.toml")).unwrap();
    config.data_dir = dir.path().to_owned();
    config.admin_token = Some(ADMIN_TOKEN.into());
    config.survey.k = 5.try_into().unwrap();
    config.survey.pseudonym_key = "test-pseudonym-key".into();
    config.fixture_mode = true;
    config.fixture_dir = Some(fixtures().join("sources"));
    config
}

/// Platform over a fresh data directory, optionally with every source fetched.
pub fn harness(fetch: bool) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let config = config(&dir);
    let platform = Arc::new(Platform::open(&config).unwrap());
    if fetch {
        fetch_all(&platform);
    }
    Harness {
        dir,
        config,
        platform,
    }
}

pub fn harness_with(transport: Arc<dyn Transport + Send + Sync>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let config = config(&dir);
    let platform = Arc::new(Platform::with_transport(&config, transport).unwrap());
    Harness {
        dir,
        config,
        platform,
    }
}

pub fn fetch_all(platform: &Platform) {
    for s in platform.sources() {
        platform.refresh(&s.source_id, t0()).unwrap();
    }
}

/// Fixture transport that fails for endpoints containing any listed text.
pub struct Breaking {
    pub inner: FixtureTransport,
    pub broken: Mutex<Vec<String>>,
}

impl Breaking {
    pub fn new(broken: &[&str]) -> Self {
        Self {
            inner: FixtureTransport::new(fixtures().join("sources")),
            broken: Mutex::new(broken.iter().map(|s| s.to_string()).collect()),
        }
    }
}

impl Transport for Breaking {
    fn send(&self, request: &HttpRequest<'_>) -> Result<HttpResponse, TransportError> {
        if self
            .broken
            .lock()
            .unwrap()
            .iter()
            .any(|b| request.url.contains(b.as_str()))
        {
            return Ok(HttpResponse {
                status: 500,
                body: b"upstream down".to_vec(),
            });
        }
        self.inner.send(request)
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.text()))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn header(&self, name: &str) -> &str {
        self.headers
            .get(name)
            .map(|v| v.to_str().unwrap())
            .unwrap_or("")
    }
}

/// In-process HTTP client that keeps every response body for later scans.
pub struct Client {
    router: Router,
    pub seen: Mutex<Vec<(String, Vec<u8>)>>,
}

impl Client {
    pub fn new(platform: &Arc<Platform>) -> Self {
        Self {
            router: api::router(Arc::clone(platform)),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub async fn send(
        &self,
        method: Method,
        uri: &str,
        auth: Option<&str>,
        body: Option<&str>,
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(token) = auth {
            req = req.header("authorization", format!("Bearer {token}"));
        }
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req
            .body(Body::from(body.unwrap_or_default().to_owned()))
            .unwrap();
        let response = self.router.clone().oneshot(req).await.unwrap();
        let status = response.status();
        let headers = response.headers().clone();
        let body = response
            .into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec();
        self.seen
            .lock()
            .unwrap()
            .push((uri.to_owned(), body.clone()));
        Reply {
            status,
            headers,
            body,
        }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, None, None).await
    }

    pub async fn post(&self, uri: &str, auth: Option<&str>, body: Option<&str>) -> Reply {
        self.send(Method::POST, uri, auth, body).await
    }

    /// Panics if any recorded body contains an identifier field name or one
    /// of `values`.
    pub fn assert_no_identifiers(&self, values: &[String]) {
        let seen = self.seen.lock().unwrap();
        assert!(!seen.is_empty());
        for (uri, body) in seen.iter() {
            let text = String::from_utf8_lossy(body);
            for needle in IDENTIFIER_FIELDS
                .iter()
                .copied()
                .chain(values.iter().map(String::as_str))
            {
                assert!(!text.contains(needle), "{uri} leaks `{needle}`");
            }
        }
    }
}
