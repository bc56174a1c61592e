//! Service configuration: a TOML file plus `BAROMETER_*` environment overrides.

use std::num::NonZeroU32;
use std::path::{Path, PathBuf};

use barometer_core::ingest::{validate_sources, IngestError, SourceDescriptor};
use barometer_core::privacy::{AggregationPlan, GroupBy, Measure, Statistic, DEFAULT_K};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("environment variable {name}: {reason}")]
    Env { name: &'static str, reason: String },
    #[error(transparent)]
    Sources(#[from] IngestError),
    #[error("source id `{0}` may only contain ASCII letters, digits, `_` and `-`")]
    SourceIdChars(String),
    #[error("survey source id `{0}` collides with a configured source")]
    SurveySourceCollision(String),
    #[error("survey pseudonym key is empty; set survey.pseudonym_key or BAROMETER_PSEUDONYM_KEY")]
    MissingPseudonymKey,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_poll_secs() -> u64 {
    300
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyConfig {
    /// Minimum respondents per published cell.
    #[serde(default = "default_k")]
    pub k: NonZeroU32,
    #[serde(default)]
    pub pseudonym_key: String,
    pub regions: Vec<String>,
    /// Snapshot source the published aggregate is recorded under.
    #[serde(default = "default_survey_source")]
    pub source_id: String,
    #[serde(default = "default_plan")]
    pub plan: AggregationPlan,
}

fn default_k() -> NonZeroU32 {
    DEFAULT_K
}

fn default_survey_source() -> String {
    "survey_expectations".into()
}

/// Region breakdown of outlook shares, mean size and hiring intent.
pub fn default_plan() -> AggregationPlan {
    let share = |q: &str, c: &str| Measure {
        question: q.into(),
        statistic: Statistic::Share { choice: c.into() },
    };
    AggregationPlan {
        group_by: vec![GroupBy::Region],
        measures: vec![
            share("outlook", "better"),
            share("outlook", "same"),
            share("outlook", "worse"),
            share("hiring", "increase"),
            Measure {
                question: "employees".into(),
                statistic: Statistic::Mean,
            },
        ],
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Bearer token for `/api/admin/*`; admin routes answer 401 when unset.
    #[serde(default)]
    pub admin_token: Option<String>,
    pub catalog: PathBuf,
    pub data_dir: PathBuf,
    /// Directory served under `fixture://` endpoints.
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    /// Refuse network endpoints; only `fixture://` sources are fetched.
    #[serde(default)]
    pub fixture_mode: bool,
    /// Directory holding the browser app bundle served under `/assets/`.
    #[serde(default)]
    pub ui_dir: Option<PathBuf>,
    #[serde(default = "default_poll_secs")]
    pub poll_secs: u64,
    /// Run the refresh scheduler inside `serve`.
    #[serde(default = "default_true")]
    pub scheduler: bool,
    #[serde(default)]
    pub sources: Vec<SourceDescriptor>,
    pub survey: SurveyConfig,
}

impl Config {
    /// Read `path`, resolve relative paths against its directory, apply
    /// environment overrides and validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.apply_env(|name| std::env::var(name).ok())?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.catalog);
        fix(&mut self.data_dir);
        for d in [&mut self.fixture_dir, &mut self.ui_dir]
            .into_iter()
            .flatten()
        {
            fix(d);
        }
    }

    /// Overrides: `BAROMETER_LISTEN`, `BAROMETER_ADMIN_TOKEN`, `BAROMETER_K`,
    /// `BAROMETER_PSEUDONYM_KEY`, `BAROMETER_DATA_DIR`, `BAROMETER_FIXTURE_DIR`,
    /// `BAROMETER_FIXTURE_MODE`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var("BAROMETER_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = var("BAROMETER_ADMIN_TOKEN") {
            self.admin_token = Some(v).filter(|t| !t.is_empty());
        }
        if let Some(v) = var("BAROMETER_K") {
            self.survey.k = v
                .parse()
                .map_err(|e: std::num::ParseIntError| ConfigError::Env {
                    name: "BAROMETER_K",
                    reason: e.to_string(),
                })?;
        }
        if let Some(v) = var("BAROMETER_PSEUDONYM_KEY") {
            self.survey.pseudonym_key = v;
        }
        if let Some(v) = var("BAROMETER_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = var("BAROMETER_FIXTURE_DIR") {
            self.fixture_dir = Some(v.into());
        }
        if let Some(v) = var("BAROMETER_FIXTURE_MODE") {
            self.fixture_mode = match v.as_str() {
                "1" | "true" | "yes" => true,
                "0" | "false" | "no" => false,
                other => {
                    return Err(ConfigError::Env {
                        name: "BAROMETER_FIXTURE_MODE",
                        reason: format!("expected true/false, got `{other}`"),
                    })
                }
            };
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_sources(&self.sources)?;
        let safe = |id: &str| {
            id.bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
        };
        for s in &self.sources {
            if !safe(&s.source_id) {
                return Err(ConfigError::SourceIdChars(s.source_id.clone()));
            }
        }
        if !safe(&self.survey.source_id) {
            return Err(ConfigError::SourceIdChars(self.survey.source_id.clone()));
        }
        if self
            .sources
            .iter()
            .any(|s| s.source_id == self.survey.source_id)
        {
            return Err(ConfigError::SurveySourceCollision(
                self.survey.source_id.clone(),
            ));
        }
        if self.survey.pseudonym_key.is_empty() {
            return Err(ConfigError::MissingPseudonymKey);
        }
        Ok(())
    }
}
