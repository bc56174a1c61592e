//! The identified survey partition and the republish step that turns it
//! into a published aggregate snapshot.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use barometer_core::ingest::{
    content_hash, record_snapshot, RecordOutcome, SnapshotStore, StoreError, Timestamp,
};
use barometer_core::privacy::{
    publish_survey, PrivacyError, PseudonymKey, SurveyResponse, SurveySchema,
};

use crate::config::SurveyConfig;

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("identified partition {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("identified partition line {line}: {source}")]
    Corrupt {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Append-only JSON-lines file of raw responses. Writers are serialized;
/// the service only ever appends, reading back is left to [`republish`].
pub struct SurveyInbox {
    path: PathBuf,
    file: Mutex<File>,
}

impl SurveyInbox {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, SurveyError> {
        let path = path.into();
        let io = |source| SurveyError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        Ok(Self {
            file: Mutex::new(file),
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, response: &SurveyResponse) -> Result<(), SurveyError> {
        let mut line = serde_json::to_vec(response).expect("responses serialize");
        line.push(b'\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(&line)
            .and_then(|()| file.sync_data())
            .map_err(|source| SurveyError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

pub fn read_responses(path: &Path) -> Result<Vec<SurveyResponse>, SurveyError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(SurveyError::Io {
                path: path.to_owned(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| SurveyError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| SurveyError::Corrupt {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

/// Run the privacy pipeline over every stored response and record the
/// aggregate as the next version of the survey source.
pub fn republish<S: SnapshotStore + ?Sized>(
    responses: &[SurveyResponse],
    config: &SurveyConfig,
    store: &mut S,
    now: Timestamp,
) -> Result<RecordOutcome, SurveyError> {
    let schema = SurveySchema::expectations(config.regions.clone());
    let key = PseudonymKey::new(config.pseudonym_key.as_bytes());
    let cube = publish_survey(responses, &config.plan, &schema, config.k, &key)?;
    let payload = serde_json::to_vec(&cube).expect("cubes serialize");
    let hash = content_hash(&payload);
    Ok(record_snapshot(
        store,
        &config.source_id,
        &payload,
        cube,
        hash,
        now,
    )?)
}
