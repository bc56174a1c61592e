//! Periodic fetching of external sources into versioned snapshots.
//!
//! Clock, transport and store are traits so that the scheduler runs
//! unchanged against a simulated clock and scripted endpoints.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cube::DataCube;
use crate::jsonstat::{parse_jsonstat, JsonStatError};

pub type Timestamp = DateTime<Utc>;

/// Refresh interval used when a source does not configure one (24 hours).
pub const DEFAULT_REFRESH_SECS: u64 = 24 * 60 * 60;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceFormat {
    #[default]
    #[serde(rename = "jsonstat2")]
    JsonStat2,
}

fn default_refresh() -> u64 {
    DEFAULT_REFRESH_SECS
}

fn default_enabled() -> bool {
    true
}

/// Where and how often to fetch one external dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub endpoint: String,
    /// Table query sent as a POST body; GET when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<String>,
    #[serde(default)]
    pub format: SourceFormat,
    /// Seconds between successful fetches.
    #[serde(default = "default_refresh")]
    pub refresh_interval: u64,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

impl SourceDescriptor {
    pub fn new(source_id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            endpoint: endpoint.into(),
            request_body: None,
            format: SourceFormat::JsonStat2,
            refresh_interval: DEFAULT_REFRESH_SECS,
            enabled: true,
        }
    }

    pub fn interval(&self) -> TimeDelta {
        TimeDelta::seconds(i64::try_from(self.refresh_interval).unwrap_or(i64::MAX / 1000))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("source id `{0}` is configured twice")]
    DuplicateSource(String),
    #[error("source `{0}` must have a positive refresh interval")]
    ZeroInterval(String),
    #[error("source id must not be empty")]
    EmptySourceId,
    #[error("unknown source `{0}`")]
    UnknownSource(String),
}

pub fn validate_sources(sources: &[SourceDescriptor]) -> Result<(), IngestError> {
    let mut seen = BTreeSet::new();
    for s in sources {
        if s.source_id.is_empty() {
            return Err(IngestError::EmptySourceId);
        }
        if !seen.insert(s.source_id.as_str()) {
            return Err(IngestError::DuplicateSource(s.source_id.clone()));
        }
        if s.refresh_interval == 0 {
            return Err(IngestError::ZeroInterval(s.source_id.clone()));
        }
    }
    Ok(())
}

/// One stored version of a source's dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub source_id: String,
    pub fetched_at: Timestamp,
    pub content_hash: String,
    pub cube: DataCube,
    pub version: u32,
}

/// Last known fetch health of a source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchStatus {
    pub source_id: String,
    pub last_attempt: Option<Timestamp>,
    pub last_success: Option<Timestamp>,
    pub consecutive_failures: u32,
    pub last_error: Option<String>,
    pub latest_version: Option<u32>,
}

impl FetchStatus {
    pub fn new(source_id: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            last_attempt: None,
            last_success: None,
            consecutive_failures: 0,
            last_error: None,
            latest_version: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("snapshot store: {0}")]
pub struct StoreError(pub String);

/// Read access to stored snapshots.
pub trait SnapshotSource {
    fn latest(&self, source_id: &str) -> Option<Arc<Snapshot>>;
    fn version(&self, source_id: &str, version: u32) -> Option<Arc<Snapshot>>;
}

/// Append-only snapshot persistence.
pub trait SnapshotStore: SnapshotSource {
    /// Persist `snapshot` together with the raw payload it was parsed from.
    /// Readers must never observe a partially written snapshot.
    fn append(&mut self, snapshot: Snapshot, payload: &[u8]) -> Result<(), StoreError>;
}

impl<T: SnapshotSource + ?Sized> SnapshotSource for &T {
    fn latest(&self, source_id: &str) -> Option<Arc<Snapshot>> {
        (**self).latest(source_id)
    }
    fn version(&self, source_id: &str, version: u32) -> Option<Arc<Snapshot>> {
        (**self).version(source_id, version)
    }
}

/// In-memory store; versions per source kept in ascending order.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    snapshots: BTreeMap<String, Vec<Arc<Snapshot>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn versions(&self, source_id: &str) -> &[Arc<Snapshot>] {
        self.snapshots.get(source_id).map_or(&[], Vec::as_slice)
    }

    pub fn source_ids(&self) -> impl Iterator<Item = &str> {
        self.snapshots.keys().map(String::as_str)
    }
}

impl SnapshotSource for MemoryStore {
    fn latest(&self, source_id: &str) -> Option<Arc<Snapshot>> {
        self.snapshots.get(source_id)?.last().cloned()
    }

    fn version(&self, source_id: &str, version: u32) -> Option<Arc<Snapshot>> {
        let list = self.snapshots.get(source_id)?;
        list.binary_search_by_key(&version, |s| s.version)
            .ok()
            .map(|i| list[i].clone())
    }
}

impl SnapshotStore for MemoryStore {
    fn append(&mut self, snapshot: Snapshot, _payload: &[u8]) -> Result<(), StoreError> {
        let list = self
            .snapshots
            .entry(snapshot.source_id.clone())
            .or_default();
        if let Some(last) = list.last() {
            if snapshot.version <= last.version {
                return Err(StoreError(format!(
                    "version {} of `{}` is not above {}",
                    snapshot.version, snapshot.source_id, last.version
                )));
            }
        }
        list.push(Arc::new(snapshot));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest<'a> {
    pub method: Method,
    pub url: &'a str,
    pub body: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transport: {0}")]
pub struct TransportError(pub String);

/// Capability to perform one HTTP exchange.
pub trait Transport {
    fn send(&self, request: &HttpRequest<'_>) -> Result<HttpResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &HttpRequest<'_>) -> Result<HttpResponse, TransportError> {
        (**self).send(request)
    }
}

pub trait Clock {
    fn now(&self) -> Timestamp;
    /// Block (or, for simulated clocks, jump) until `deadline`.
    fn sleep_until(&mut self, deadline: Timestamp);
}

/// Clock that only moves when told to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManualClock {
    now: Timestamp,
}

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self { now: start }
    }

    pub fn advance(&mut self, by: TimeDelta) {
        self.now += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        self.now
    }

    fn sleep_until(&mut self, deadline: Timestamp) {
        if deadline > self.now {
            self.now = deadline;
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FetchError {
    #[error("source `{0}` is disabled")]
    Disabled(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("endpoint answered with status {0}")]
    Status(u16),
    #[error("payload is not UTF-8")]
    Encoding,
    #[error("payload rejected at {0}")]
    Parse(#[from] JsonStatError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A fetched and parsed payload, not yet recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Fetched {
    pub payload: Vec<u8>,
    pub cube: DataCube,
    pub content_hash: String,
}

/// Hex SHA-256 of the raw payload bytes.
pub fn content_hash(payload: &[u8]) -> String {
    hex::encode(Sha256::digest(payload))
}

pub fn fetch_once<T: Transport + ?Sized>(
    source: &SourceDescriptor,
    transport: &T,
) -> Result<Fetched, FetchError> {
    if !source.enabled {
        return Err(FetchError::Disabled(source.source_id.clone()));
    }
    let request = HttpRequest {
        method: if source.request_body.is_some() {
            Method::Post
        } else {
            Method::Get
        },
        url: &source.endpoint,
        body: source.request_body.as_deref(),
    };
    let response = transport.send(&request)?;
    if !(200..300).contains(&response.status) {
        return Err(FetchError::Status(response.status));
    }
    let text = core::str::from_utf8(&response.body).map_err(|_| FetchError::Encoding)?;
    let cube = parse_jsonstat(text)?;
    Ok(Fetched {
        content_hash: content_hash(&response.body),
        payload: response.body,
        cube,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RecordOutcome {
    NewVersion { version: u32 },
    Unchanged { version: u32 },
}

impl RecordOutcome {
    pub fn version(self) -> u32 {
        match self {
            RecordOutcome::NewVersion { version } | RecordOutcome::Unchanged { version } => version,
        }
    }
}

/// Store `cube` as the next version of `source_id` unless its hash equals
/// the latest version's.
pub fn record_snapshot<S: SnapshotStore + ?Sized>(
    store: &mut S,
    source_id: &str,
    payload: &[u8],
    cube: DataCube,
    content_hash: String,
    now: Timestamp,
) -> Result<RecordOutcome, StoreError> {
    let latest = store.latest(source_id);
    if let Some(latest) = &latest {
        if latest.content_hash == content_hash {
            return Ok(RecordOutcome::Unchanged {
                version: latest.version,
            });
        }
    }
    let version = latest.map_or(1, |s| s.version + 1);
    let snapshot = Snapshot {
        source_id: source_id.to_owned(),
        fetched_at: now,
        content_hash,
        cube: cube.with_source_id(Some(source_id.to_owned())),
        version,
    };
    store.append(snapshot, payload)?;
    Ok(RecordOutcome::NewVersion { version })
}

pub fn refresh_due(
    source: &SourceDescriptor,
    last_success: Option<Timestamp>,
    now: Timestamp,
) -> bool {
    match last_success {
        None => true,
        Some(t) => now - t >= source.interval(),
    }
}

/// Result of one scheduler pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub now: Timestamp,
    pub attempts: Vec<(String, Result<RecordOutcome, FetchError>)>,
}

/// Drives fetching for a fixed set of sources and tracks their health.
#[derive(Debug, Clone)]
pub struct Scheduler {
    sources: Vec<SourceDescriptor>,
    status: BTreeMap<String, FetchStatus>,
}

impl Scheduler {
    pub fn new(sources: Vec<SourceDescriptor>) -> Result<Self, IngestError> {
        validate_sources(&sources)?;
        let status = sources
            .iter()
            .map(|s| (s.source_id.clone(), FetchStatus::new(s.source_id.clone())))
            .collect();
        Ok(Self { sources, status })
    }

    /// Seed `last_success` and versions from a store that already holds snapshots.
    pub fn resume_from<S: SnapshotSource + ?Sized>(&mut self, store: &S) {
        for (id, status) in &mut self.status {
            if let Some(s) = store.latest(id) {
                status.last_success = Some(s.fetched_at);
                status.latest_version = Some(s.version);
            }
        }
    }

    pub fn sources(&self) -> &[SourceDescriptor] {
        &self.sources
    }

    pub fn source(&self, id: &str) -> Option<&SourceDescriptor> {
        self.sources.iter().find(|s| s.source_id == id)
    }

    pub fn status(&self, id: &str) -> Option<&FetchStatus> {
        self.status.get(id)
    }

    pub fn statuses(&self) -> impl Iterator<Item = &FetchStatus> {
        self.status.values()
    }

    pub fn set_enabled(&mut self, id: &str, enabled: bool) -> Result<(), IngestError> {
        let source = self
            .sources
            .iter_mut()
            .find(|s| s.source_id == id)
            .ok_or_else(|| IngestError::UnknownSource(id.to_owned()))?;
        source.enabled = enabled;
        Ok(())
    }

    /// Fetch one source now, regardless of whether it is due.
    pub fn refresh<S, T>(
        &mut self,
        id: &str,
        store: &mut S,
        transport: &T,
        now: Timestamp,
    ) -> Result<Result<RecordOutcome, FetchError>, IngestError>
    where
        S: SnapshotStore + ?Sized,
        T: Transport + ?Sized,
    {
        let index = self
            .sources
            .iter()
            .position(|s| s.source_id == id)
            .ok_or_else(|| IngestError::UnknownSource(id.to_owned()))?;
        Ok(self.attempt(index, store, transport, now))
    }

    fn attempt<S, T>(
        &mut self,
        index: usize,
        store: &mut S,
        transport: &T,
        now: Timestamp,
    ) -> Result<RecordOutcome, FetchError>
    where
        S: SnapshotStore + ?Sized,
        T: Transport + ?Sized,
    {
        let source = &self.sources[index];
        let result = fetch_once(source, transport).and_then(|f| {
            record_snapshot(
                store,
                &source.source_id,
                &f.payload,
                f.cube,
                f.content_hash,
                now,
            )
            .map_err(FetchError::from)
        });
        let status = self
            .status
            .entry(source.source_id.clone())
            .or_insert_with(|| FetchStatus::new(source.source_id.clone()));
        status.last_attempt = Some(now);
        match &result {
            Ok(outcome) => {
                status.last_success = Some(now);
                status.consecutive_failures = 0;
                status.last_error = None;
                status.latest_version = Some(outcome.version());
            }
            Err(e) => {
                status.consecutive_failures += 1;
                status.last_error = Some(e.to_string());
            }
        }
        result
    }

    /// Fetch every enabled source that is due at `now`, each exactly once.
    pub fn tick<S, T>(&mut self, now: Timestamp, store: &mut S, transport: &T) -> TickReport
    where
        S: SnapshotStore + ?Sized,
        T: Transport + ?Sized,
    {
        let mut attempts = Vec::new();
        for index in 0..self.sources.len() {
            let source = &self.sources[index];
            let last_success = self
                .status
                .get(&source.source_id)
                .and_then(|s| s.last_success);
            if !source.enabled || !refresh_due(source, last_success, now) {
                continue;
            }
            let id = source.source_id.clone();
            attempts.push((id, self.attempt(index, store, transport, now)));
        }
        TickReport { now, attempts }
    }

    /// Earliest instant at which some enabled source becomes due.
    pub fn next_due(&self, now: Timestamp) -> Option<Timestamp> {
        self.sources
            .iter()
            .filter(|s| s.enabled)
            .map(
                |s| match self.status.get(&s.source_id).and_then(|st| st.last_success) {
                    Some(t) => (t + s.interval()).max(now),
                    None => now,
                },
            )
            .min()
    }

    /// Tick, then sleep until the next source is due (at most `poll`),
    /// until `control` breaks. `control` may reconfigure the scheduler.
    pub fn run<C, S, T, F>(
        &mut self,
        clock: &mut C,
        store: &mut S,
        transport: &T,
        poll: TimeDelta,
        mut control: F,
    ) where
        C: Clock + ?Sized,
        S: SnapshotStore + ?Sized,
        T: Transport + ?Sized,
        F: FnMut(&mut Self, &TickReport) -> ControlFlow<()>,
    {
        loop {
            let now = clock.now();
            let report = self.tick(now, store, transport);
            if control(self, &report).is_break() {
                return;
            }
            let wake = match self.next_due(now) {
                Some(due) if due > now => due.min(now + poll),
                _ => now + poll,
            };
            clock.sleep_until(wake);
        }
    }
}
