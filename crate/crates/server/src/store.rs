use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use pivotrec_core::dataset::{Dataset, DatasetError, TypeOverride};
use pivotrec_core::recommend::{DatasetProfile, Session};
use pivotrec_core::semantics::SemanticOracle;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;

use crate::error::ApiError;
use crate::ingest;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("stored dataset {path} no longer loads: {source}")]
    Dataset { path: PathBuf, source: DatasetError },
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::internal(e.to_string())
    }
}

pub struct StoredDataset {
    /// Original upload, kept so a restart re-derives the same dataset.
    pub csv: String,
    pub overrides: Vec<TypeOverride>,
    pub dataset: Dataset,
    pub profile: DatasetProfile,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    csv: String,
    types: Vec<TypeOverride>,
}

type SessionHandle = Arc<Mutex<Session>>;

pub(crate) struct Store {
    dir: Option<PathBuf>,
    datasets: RwLock<HashMap<String, Arc<StoredDataset>>>,
    sessions: RwLock<HashMap<String, SessionHandle>>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, StoreError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes).map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            datasets: RwLock::default(),
            sessions: RwLock::default(),
        }
    }

    /// Opens (creating if needed) a persistent store and reloads its contents.
    pub fn open(dir: &Path, oracle: &dyn SemanticOracle) -> Result<Self, StoreError> {
        let (dataset_dir, session_dir) = (dir.join("datasets"), dir.join("sessions"));
        std::fs::create_dir_all(&dataset_dir).map_err(io(&dataset_dir))?;
        std::fs::create_dir_all(&session_dir).map_err(io(&session_dir))?;
        let store = Self {
            dir: Some(dir.to_path_buf()),
            ..Self::in_memory()
        };
        for (id, path) in json_files(&dataset_dir)? {
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let file: DatasetFile = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let (dataset, profile) = ingest(file.csv.as_bytes(), &file.types, oracle)
                .map_err(|source| StoreError::Dataset { path, source })?;
            let stored = StoredDataset {
                csv: file.csv,
                overrides: file.types,
                dataset,
                profile,
            };
            store
                .datasets
                .write()
                .expect("store poisoned")
                .insert(id, Arc::new(stored));
        }
        for (id, path) in json_files(&session_dir)? {
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let session: Session = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
            store
                .sessions
                .write()
                .expect("store poisoned")
                .insert(id, Arc::new(Mutex::new(session)));
        }
        Ok(store)
    }

    pub fn insert_dataset(&self, stored: StoredDataset) -> Result<String, StoreError> {
        let id = uuid::Uuid::new_v4().to_string();
        if let Some(dir) = &self.dir {
            let file = DatasetFile {
                csv: stored.csv.clone(),
                types: stored.overrides.clone(),
            };
            let bytes = serde_json::to_vec(&file).expect("dataset files serialize");
            write_atomic(&dir.join("datasets").join(format!("{id}.json")), &bytes)?;
        }
        self.datasets
            .write()
            .expect("store poisoned")
            .insert(id.clone(), Arc::new(stored));
        Ok(id)
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<StoredDataset>, ApiError> {
        self.datasets
            .read()
            .expect("store poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown dataset `{id}`")))
    }

    pub fn insert_session(&self, session: Session) -> Result<(), StoreError> {
        self.persist_session(&session)?;
        self.sessions
            .write()
            .expect("store poisoned")
            .insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(())
    }

    pub fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .read()
            .expect("store poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    pub fn persist_session(&self, session: &Session) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let bytes = serde_json::to_vec_pretty(session).expect("sessions serialize");
        write_atomic(&dir.join("sessions").join(format!("{}.json", session.id)), &bytes)
    }
}
