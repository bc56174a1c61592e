//! Shared service state and the operations behind the HTTP routes.
//!
//! Every operation returns plain data or an [`ApiError`] carrying the
//! HTTP status; the axum layer in `api` only does (de)serialization.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Mutex, PoisonError, RwLock};
use std::thread;
use std::time::Duration;

use barometer_core::catalog::{
    Catalog, CatalogDocument, CatalogError, ChartAxes, NavGroup, NavVariable, VariableEntry,
};
use barometer_core::chart::{
    alternative_kinds, build_chart, toggle_series, ChartError, ChartKind, ChartSpec,
};
use barometer_core::cube::DataCube;
use barometer_core::derive::{
    evaluate, growth_indicators, EvalError, IndicatorValue, Provenance, Window,
};
use barometer_core::export::{to_csv, to_svg, to_table, DataTable};
use barometer_core::ingest::{
    FetchError, FetchStatus, IngestError, RecordOutcome, Scheduler, SourceDescriptor, StoreError,
    Timestamp, Transport,
};
use barometer_core::privacy::SurveySchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Config, SurveyConfig};
use crate::store::{FileSnapshotStore, Shared};
use crate::survey::{read_responses, republish, SurveyError, SurveyInbox};
use crate::transport::{FixtureTransport, HttpTransport, SourceTransport};

pub const EXPORT_FORMATS: [&str; 2] = ["csv", "svg"];
pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 480.0;

/// Error body `{"error": {"code", "message", ..details}}` with an HTTP status.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    pub details: serde_json::Map<String, Value>,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: serde_json::Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.to_owned(), value.into());
        self
    }

    pub fn body(&self) -> Value {
        let mut error = self.details.clone();
        error.insert("code".into(), self.code.into());
        error.insert("message".into(), self.message.clone().into());
        json!({ "error": error })
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(404, "not_found", format!("{what} not found"))
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(422, "invalid_request", message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        tracing::error!(%message, "internal error");
        Self::new(500, "internal", "internal error")
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e.missing_source() {
            Some(source) => ApiError::new(
                503,
                "source_unavailable",
                format!("no snapshot yet for source `{source}`"),
            )
            .with("source_id", source),
            None => ApiError::internal(e),
        }
    }
}

impl From<ChartError> for ApiError {
    fn from(e: ChartError) -> Self {
        ApiError::unprocessable(e.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("catalog {path}: {reason}")]
    Catalog { path: PathBuf, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Sources(#[from] IngestError),
}

/// Read and validate a catalog document.
pub fn load_catalog(path: &Path) -> Result<Catalog, StartupError> {
    let fail = |reason: String| StartupError::Catalog {
        path: path.to_owned(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
    let doc: CatalogDocument = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
    let catalog = Catalog::from_document(doc).map_err(|e| fail(e.to_string()))?;
    catalog.validate().map_err(|e| fail(e.to_string()))?;
    Ok(catalog)
}

/// Transport matching the configuration's fixture settings.
pub fn transport_for(config: &Config) -> SourceTransport {
    let fixtures = config.fixture_dir.as_ref().map(FixtureTransport::new);
    let http = (!config.fixture_mode).then(|| HttpTransport::new(Duration::from_secs(30)));
    SourceTransport::new(fixtures, http)
}

pub fn snapshot_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("snapshots")
}

pub fn identified_partition(data_dir: &Path) -> PathBuf {
    data_dir.join("identified").join("responses.jsonl")
}

/// Chart selection as given in the query string.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ChartQuery {
    pub kind: Option<String>,
    pub x: Option<String>,
    /// Series dimension; `none` for a single series.
    pub series: Option<String>,
    /// `dim:category[,dim:category..]`, categories by id or label.
    pub filter: Option<String>,
    /// Comma separated series names or ids to hide.
    pub hidden: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatisticPayload {
    pub variable: VariableEntry,
    pub route: String,
    pub related: Vec<NavVariable>,
    pub alternative_kinds: Vec<ChartKind>,
    pub provenance: Provenance,
    pub chart: ChartSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct SourceHealth {
    #[serde(flatten)]
    pub status: FetchStatus,
    pub enabled: bool,
    pub refresh_interval: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub started_at: Timestamp,
    pub sources_fetched: usize,
    pub sources: Vec<SourceHealth>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IndicatorRow {
    Ok {
        indicator: barometer_core::derive::Indicator,
        variable: Option<u32>,
        value: f64,
        provenance: Provenance,
    },
    Error {
        indicator: barometer_core::derive::Indicator,
        message: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct IndicatorReport {
    pub window: Window,
    pub indicators: Vec<IndicatorRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefreshReport {
    pub source_id: String,
    #[serde(flatten)]
    pub outcome: RecordOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct Receipt {
    pub receipt: String,
}

pub struct Export {
    pub content_type: &'static str,
    pub filename: String,
    pub body: String,
}

pub struct Platform {
    catalog: Catalog,
    store: Shared<FileSnapshotStore>,
    scheduler: Mutex<Scheduler>,
    health: RwLock<Vec<SourceHealth>>,
    transport: Arc<dyn Transport + Send + Sync>,
    schema: SurveySchema,
    survey: SurveyConfig,
    inbox: SurveyInbox,
    admin_token: Option<String>,
    ui_dir: Option<PathBuf>,
    started_at: Timestamp,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

/// Byte comparison whose duration does not depend on where inputs differ.
fn tokens_match(given: &str, expected: &str) -> bool {
    let (a, b) = (given.as_bytes(), expected.as_bytes());
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn parse_filter(text: &str) -> Result<Vec<(String, String)>, ApiError> {
    text.split(',')
        .filter(|p| !p.is_empty())
        .map(|pair| {
            pair.split_once(':')
                .filter(|(d, c)| !d.is_empty() && !c.is_empty())
                .map(|(d, c)| (d.to_owned(), c.to_owned()))
                .ok_or_else(|| {
                    ApiError::unprocessable(format!("filter `{pair}` is not `dimension:category`"))
                })
        })
        .collect()
}

/// Fix each filtered dimension to one category, matched by id, then label,
/// then id ignoring ASCII case.
fn apply_filter(cube: &DataCube, filter: &BTreeMap<String, String>) -> Result<DataCube, ApiError> {
    let mut keep = BTreeMap::new();
    for (dim, wanted) in filter {
        let (_, d) = cube
            .dimension(dim)
            .ok_or_else(|| ApiError::unprocessable(format!("unknown dimension `{dim}`")))?;
        let category = d
            .categories()
            .iter()
            .find(|c| &c.id == wanted)
            .or_else(|| d.categories().iter().find(|c| &c.label == wanted))
            .or_else(|| {
                d.categories()
                    .iter()
                    .find(|c| c.id.eq_ignore_ascii_case(wanted))
            })
            .ok_or_else(|| {
                ApiError::unprocessable(format!("dimension `{dim}` has no category `{wanted}`"))
            })?;
        keep.insert(dim.clone(), vec![category.id.clone()]);
    }
    if keep.is_empty() {
        return Ok(cube.clone());
    }
    cube.slice(&keep)
        .map_err(|e| ApiError::unprocessable(e.to_string()))
}

impl Platform {
    /// Build from configuration, with the transport it implies.
    pub fn open(config: &Config) -> Result<Self, StartupError> {
        Self::with_transport(config, Arc::new(transport_for(config)))
    }

    pub fn with_transport(
        config: &Config,
        transport: Arc<dyn Transport + Send + Sync>,
    ) -> Result<Self, StartupError> {
        let catalog = load_catalog(&config.catalog)?;
        let store = Shared::new(FileSnapshotStore::open(snapshot_dir(&config.data_dir))?);
        let mut scheduler = Scheduler::new(config.sources.clone())?;
        scheduler.resume_from(&store);
        let inbox = SurveyInbox::open(identified_partition(&config.data_dir))?;
        let platform = Self {
            catalog,
            store,
            health: RwLock::new(Vec::new()),
            scheduler: Mutex::new(scheduler),
            transport,
            schema: SurveySchema::expectations(config.survey.regions.clone()),
            survey: config.survey.clone(),
            inbox,
            admin_token: config.admin_token.clone(),
            ui_dir: config.ui_dir.clone(),
            started_at: chrono::Utc::now(),
        };
        platform.publish_health(&lock(&platform.scheduler));
        Ok(platform)
    }

    pub fn ui_dir(&self) -> Option<&Path> {
        self.ui_dir.as_deref()
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn store(&self) -> &Shared<FileSnapshotStore> {
        &self.store
    }

    fn publish_health(&self, scheduler: &Scheduler) {
        let rows = scheduler
            .sources()
            .iter()
            .map(|s| SourceHealth {
                status: scheduler
                    .status(&s.source_id)
                    .cloned()
                    .unwrap_or_else(|| FetchStatus::new(s.source_id.clone())),
                enabled: s.enabled,
                refresh_interval: s.refresh_interval,
            })
            .collect();
        *self.health.write().unwrap_or_else(PoisonError::into_inner) = rows;
    }

    pub fn check_admin(&self, authorization: Option<&str>) -> Result<(), ApiError> {
        let given = authorization.and_then(|h| h.strip_prefix("Bearer "));
        match (&self.admin_token, given) {
            (Some(expected), Some(given)) if tokens_match(given, expected) => Ok(()),
            _ => Err(ApiError::new(
                401,
                "unauthorized",
                "admin bearer token required",
            )),
        }
    }

    pub fn groups(&self) -> Vec<NavGroup> {
        self.catalog.navigation_tree()
    }

    fn entry(&self, number: u32) -> Result<&VariableEntry, ApiError> {
        self.catalog
            .get_variable(number)
            .map_err(|_| ApiError::not_found(format_args!("variable {number}")))
    }

    pub fn statistic(&self, number: u32) -> Result<StatisticPayload, ApiError> {
        let entry = self.entry(number)?;
        let chart = self.chart(number, &ChartQuery::default())?;
        let related = self
            .catalog
            .related(number)
            .map_err(|e: CatalogError| ApiError::internal(e))?;
        Ok(StatisticPayload {
            variable: entry.clone(),
            route: format!("/statistic/{number}"),
            related,
            alternative_kinds: alternative_kinds(entry),
            provenance: chart.provenance.clone(),
            chart,
        })
    }

    pub fn chart(&self, number: u32, query: &ChartQuery) -> Result<ChartSpec, ApiError> {
        let entry = self.entry(number)?;
        let recipe = self.catalog.recipe(&entry.recipe_id).ok_or_else(|| {
            ApiError::internal(format_args!("recipe `{}` missing", entry.recipe_id))
        })?;
        let user_filter = parse_filter(query.filter.as_deref().unwrap_or(""))?;

        // A filter on the drilldown dimension selects the detail view.
        let detail = entry.drilldown.as_ref().filter(|d| {
            d.target == number && user_filter.iter().any(|(dim, _)| *dim == d.dimension)
        });
        let (default_kind, axes): (ChartKind, &ChartAxes) = match detail {
            Some(d) => (d.kind, &d.axes),
            None => (entry.default_chart, &entry.axes),
        };
        let kind = match &query.kind {
            Some(k) => k
                .parse::<ChartKind>()
                .map_err(|e| ApiError::unprocessable(e.to_string()))?,
            None => default_kind,
        };
        if !alternative_kinds(entry).contains(&kind) {
            return Err(ApiError::unprocessable(format!(
                "variable {number} does not offer chart kind `{kind}`"
            ))
            .with(
                "alternative_kinds",
                alternative_kinds(entry)
                    .iter()
                    .map(|k| k.as_str())
                    .collect::<Vec<_>>(),
            ));
        }
        let mut filter = axes.filter.clone();
        filter.extend(user_filter);

        let evaluated = evaluate(recipe, &self.store)?;
        let cube = apply_filter(&evaluated.cube, &filter)?;
        let x = query.x.as_deref().unwrap_or(&axes.x);
        let series = match query.series.as_deref() {
            Some("none") => None,
            Some(s) => Some(s),
            None => axes.series.as_deref().filter(|s| !filter.contains_key(*s)),
        };
        for dim in std::iter::once(x).chain(series) {
            if cube.dimension(dim).is_none() {
                return Err(ApiError::unprocessable(format!(
                    "unknown dimension `{dim}`"
                )));
            }
        }
        let mut spec = build_chart(&cube, entry, kind, x, series, &evaluated.provenance)?;
        for name in query
            .hidden
            .as_deref()
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.is_empty())
        {
            spec = toggle_series(&spec, name)?;
        }
        Ok(spec)
    }

    pub fn table(&self, number: u32, query: &ChartQuery) -> Result<DataTable, ApiError> {
        Ok(to_table(&self.chart(number, query)?))
    }

    pub fn export(
        &self,
        number: u32,
        format: &str,
        query: &ChartQuery,
    ) -> Result<Export, ApiError> {
        if !EXPORT_FORMATS.contains(&format) {
            return Err(
                ApiError::unprocessable(format!("unsupported export format `{format}`"))
                    .with("supported", EXPORT_FORMATS.to_vec()),
            );
        }
        let spec = self.chart(number, query)?;
        let filename = format!("statistic-{number}.{format}");
        Ok(match format {
            "csv" => Export {
                content_type: "text/csv; charset=utf-8",
                filename,
                body: to_csv(&spec),
            },
            _ => Export {
                content_type: "image/svg+xml",
                filename,
                body: to_svg(&spec, SVG_WIDTH, SVG_HEIGHT).map_err(ApiError::internal)?,
            },
        })
    }

    pub fn indicators(
        &self,
        from: Option<&str>,
        to: Option<&str>,
    ) -> Result<IndicatorReport, ApiError> {
        let (Some(from), Some(to)) = (from, to) else {
            return Err(ApiError::unprocessable(
                "query parameters `from` and `to` are required",
            ));
        };
        let window = Window::new(from, to);
        let results = growth_indicators(
            &self.store,
            self.catalog.indicators(),
            std::slice::from_ref(&window),
        )
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let indicators = results
            .into_iter()
            .map(|r| match r {
                Ok(r) => match r.value {
                    IndicatorValue::Scalar(value) => IndicatorRow::Ok {
                        indicator: r.indicator,
                        variable: r.variable,
                        value,
                        provenance: r.provenance,
                    },
                    IndicatorValue::Cube(_) => IndicatorRow::Error {
                        indicator: r.indicator,
                        message: "indicator is not a scalar".into(),
                    },
                },
                Err(f) => IndicatorRow::Error {
                    indicator: f.indicator,
                    message: f.error.to_string(),
                },
            })
            .collect();
        Ok(IndicatorReport { window, indicators })
    }

    pub fn health(&self) -> Health {
        let sources = self
            .health
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .clone();
        Health {
            status: "ok",
            started_at: self.started_at,
            sources_fetched: sources
                .iter()
                .filter(|s| s.status.latest_version.is_some())
                .count(),
            sources,
        }
    }

    /// Validate and store a submission in the identified partition. Error
    /// messages never name identifier fields.
    pub fn submit_survey(&self, body: &Value, now: Timestamp) -> Result<Receipt, ApiError> {
        let receipt = uuid::Uuid::new_v4().to_string();
        let response = self
            .schema
            .validate_submission(body, receipt.clone(), now)
            .map_err(|e| {
                let field = e.path.split('.').next().unwrap_or_default();
                let path = if self.schema.identifier_fields().any(|f| f == field) {
                    "identifier"
                } else {
                    e.path.as_str()
                };
                ApiError::new(422, "schema_violation", format!("{path}: {}", e.reason))
                    .with("path", path)
            })?;
        self.inbox.append(&response).map_err(ApiError::internal)?;
        Ok(Receipt { receipt })
    }

    /// Fetch one source now (blocking).
    pub fn refresh(&self, source_id: &str, now: Timestamp) -> Result<RefreshReport, ApiError> {
        let mut scheduler = lock(&self.scheduler);
        let mut store = self.store.clone();
        let result = scheduler
            .refresh(source_id, &mut store, &*self.transport, now)
            .map_err(|_| ApiError::not_found(format_args!("source `{source_id}`")))?;
        self.publish_health(&scheduler);
        match result {
            Ok(outcome) => Ok(RefreshReport {
                source_id: source_id.to_owned(),
                outcome,
            }),
            Err(e @ FetchError::Store(_)) => Err(ApiError::internal(e)),
            Err(e) => {
                Err(ApiError::new(502, "fetch_failed", e.to_string()).with("source_id", source_id))
            }
        }
    }

    /// One scheduler pass over all due sources.
    pub fn tick(&self, now: Timestamp) -> Option<Timestamp> {
        let mut scheduler = lock(&self.scheduler);
        let mut store = self.store.clone();
        let report = scheduler.tick(now, &mut store, &*self.transport);
        for (id, result) in &report.attempts {
            match result {
                Ok(outcome) => tracing::info!(source = %id, ?outcome, "fetched"),
                Err(e) => tracing::warn!(source = %id, error = %e, "fetch failed"),
            }
        }
        self.publish_health(&scheduler);
        scheduler.next_due(now)
    }

    /// Pick up snapshots written by other processes.
    pub fn reload_snapshots(&self) -> Result<usize, ApiError> {
        self.store.write(|s| s.rescan()).map_err(ApiError::internal)
    }

    /// Re-run the privacy pipeline over the identified partition.
    pub fn republish_survey(&self, now: Timestamp) -> Result<RecordOutcome, ApiError> {
        let responses = read_responses(self.inbox.path()).map_err(ApiError::internal)?;
        let mut store = self.store.clone();
        republish(&responses, &self.survey, &mut store, now).map_err(ApiError::internal)
    }

    pub fn sources(&self) -> Vec<SourceDescriptor> {
        lock(&self.scheduler).sources().to_vec()
    }
}

/// Handle to the background refresh thread; dropping it stops the loop.
pub struct SchedulerHandle {
    stop: Option<mpsc::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl SchedulerHandle {
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.take();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for SchedulerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Tick, then wait until the next source is due or `poll` elapses.
pub fn spawn_scheduler(platform: Arc<Platform>, poll: Duration) -> SchedulerHandle {
    let (stop, stopped) = mpsc::channel::<()>();
    let thread = thread::Builder::new()
        .name("refresh-scheduler".into())
        .spawn(move || loop {
            let now = chrono::Utc::now();
            let wait = match platform.tick(now) {
                Some(due) if due > now => (due - now).to_std().unwrap_or(poll).min(poll),
                _ => poll,
            };
            match stopped.recv_timeout(wait) {
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                _ => return,
            }
        })
        .expect("spawn scheduler thread");
    SchedulerHandle {
        stop: Some(stop),
        thread: Some(thread),
    }
}
