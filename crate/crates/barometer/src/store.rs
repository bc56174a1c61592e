//! Snapshot persistence on the local filesystem.
//!
//! Layout: `<root>/<source_id>/<version>.payload` holds the raw fetched
//! bytes and `<root>/<source_id>/<version>.json` the parsed snapshot. The
//! JSON file is linked into place last and never overwritten, so a version
//! is visible only once complete and two writers cannot clobber each other.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, PoisonError, RwLock};

use barometer_core::ingest::{MemoryStore, Snapshot, SnapshotSource, SnapshotStore, StoreError};

pub struct FileSnapshotStore {
    root: PathBuf,
    index: MemoryStore,
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError(format!("{}: {e}", path.display()))
}

fn version_of(path: &Path) -> Option<u32> {
    (path.extension()? == "json")
        .then(|| path.file_stem()?.to_str()?.parse().ok())
        .flatten()
}

impl FileSnapshotStore {
    /// Open (creating if needed) and load every stored version.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let mut store = Self {
            root,
            index: MemoryStore::new(),
        };
        store.rescan()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &MemoryStore {
        &self.index
    }

    /// Load versions written since the last scan, possibly by another process.
    /// Returns how many were added.
    pub fn rescan(&mut self) -> Result<usize, StoreError> {
        let mut added = 0;
        let mut dirs: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(|e| io_err(&self.root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let Some(source_id) = dir.file_name().and_then(|n| n.to_str()).map(str::to_owned)
            else {
                continue;
            };
            let known = self.index.latest(&source_id).map_or(0, |s| s.version);
            let mut versions: Vec<(u32, PathBuf)> = fs::read_dir(&dir)
                .map_err(|e| io_err(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter_map(|p| version_of(&p).map(|v| (v, p)))
                .filter(|(v, _)| *v > known)
                .collect();
            versions.sort();
            for (_, path) in versions {
                let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                let snapshot: Snapshot = serde_json::from_str(&text)
                    .map_err(|e| StoreError(format!("{}: {e}", path.display())))?;
                self.index.append(snapshot, &[])?;
                added += 1;
            }
        }
        Ok(added)
    }

    /// Raw payload a version was parsed from.
    pub fn payload(&self, source_id: &str, version: u32) -> Result<Vec<u8>, StoreError> {
        let path = self
            .root
            .join(source_id)
            .join(format!("{version:08}.payload"));
        fs::read(&path).map_err(|e| io_err(&path, e))
    }

    fn write_new(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
        let mut file = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        file.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        file.sync_all().map_err(|e| io_err(&tmp, e))?;
        drop(file);
        // hard_link fails if the target exists: no silent overwrite
        let linked = fs::hard_link(&tmp, path).map_err(|e| io_err(path, e));
        let _ = fs::remove_file(&tmp);
        linked
    }
}

impl SnapshotSource for FileSnapshotStore {
    fn latest(&self, source_id: &str) -> Option<Arc<Snapshot>> {
        self.index.latest(source_id)
    }

    fn version(&self, source_id: &str, version: u32) -> Option<Arc<Snapshot>> {
        self.index.version(source_id, version)
    }
}

impl SnapshotStore for FileSnapshotStore {
    fn append(&mut self, snapshot: Snapshot, payload: &[u8]) -> Result<(), StoreError> {
        let dir = self.root.join(&snapshot.source_id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let stem = format!("{:08}", snapshot.version);
        let payload_path = dir.join(format!("{stem}.payload"));
        if !payload_path.exists() {
            Self::write_new(&payload_path, payload)?;
        }
        let json = serde_json::to_vec(&snapshot).map_err(|e| StoreError(e.to_string()))?;
        Self::write_new(&dir.join(format!("{stem}.json")), &json)?;
        self.index.append(snapshot, payload)
    }
}

/// Cloneable handle to a store behind a reader-writer lock. Readers never
/// see a half-recorded snapshot since appends take the write lock.
pub struct Shared<S>(Arc<RwLock<S>>);

impl<S> Clone for Shared<S> {
    fn clone(&self) -> Self {
        Self(Arc::clone(&self.0))
    }
}

impl<S> Shared<S> {
    pub fn new(store: S) -> Self {
        Self(Arc::new(RwLock::new(store)))
    }

    pub fn read<R>(&self, f: impl FnOnce(&S) -> R) -> R {
        f(&self.0.read().unwrap_or_else(PoisonError::into_inner))
    }

    pub fn write<R>(&self, f: impl FnOnce(&mut S) -> R) -> R {
        f(&mut self.0.write().unwrap_or_else(PoisonError::into_inner))
    }
}

impl<S: SnapshotSource> SnapshotSource for Shared<S> {
    fn latest(&self, source_id: &str) -> Option<Arc<Snapshot>> {
        self.read(|s| s.latest(source_id))
    }

    fn version(&self, source_id: &str, version: u32) -> Option<Arc<Snapshot>> {
        self.read(|s| s.version(source_id, version))
    }
}

impl<S: SnapshotStore> SnapshotStore for Shared<S> {
    fn append(&mut self, snapshot: Snapshot, payload: &[u8]) -> Result<(), StoreError> {
        self.write(|s| s.append(snapshot, payload))
    }
}
