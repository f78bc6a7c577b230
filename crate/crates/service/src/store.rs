//! On-disk session persistence.
//!
//! Layout under the data directory:
//! `sessions/<id>.json` holds the versioned session state and
//! `datasets/<sha256>.csv` holds the raw uploaded bytes, shared between
//! sessions with identical data.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, ServiceError};
use crate::session::{LoadedDataset, Session, SessionSettings, SessionState};

pub const STATE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredSession {
    version: u32,
    #[serde(flatten)]
    state: SessionState,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn storage(context: &str, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(format!("{context}: {e}"))
}

/// Session ids become file names, so only a safe alphabet is accepted.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Writes via a sibling temporary file and rename so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", uuid::Uuid::new_v4().simple()));
    let mut f = fs::File::create(&tmp).map_err(|e| storage(&tmp.display().to_string(), e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| storage(&tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        storage(&path.display().to_string(), e)
    })
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in ["sessions", "datasets"] {
            fs::create_dir_all(root.join(dir)).map_err(|e| storage(&root.display().to_string(), e))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_path(&self, id: &str) -> Result<PathBuf> {
        if !valid_session_id(id) {
            return Err(ServiceError::SessionNotFound(id.to_string()));
        }
        Ok(self.root.join("sessions").join(format!("{id}.json")))
    }

    pub fn dataset_path(&self, sha256: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{sha256}.csv"))
    }

    pub fn save(&self, session: &Session) -> Result<()> {
        if let Some(d) = session.dataset() {
            let path = self.dataset_path(&d.sha256);
            if !path.exists() {
                write_atomic(&path, &d.bytes)?;
            }
        }
        let stored = StoredSession { version: STATE_VERSION, state: session.state() };
        let json = serde_json::to_vec_pretty(&stored).map_err(|e| storage("encoding session", e))?;
        write_atomic(&self.session_path(session.id())?, &json)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.session_path(id).map(|p| p.exists()).unwrap_or(false)
    }

    pub fn load(&self, id: &str, settings: SessionSettings) -> Result<Session> {
        let path = self.session_path(id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(ServiceError::SessionNotFound(id.to_string())),
            Err(e) => return Err(storage(&path.display().to_string(), e)),
        };
        let value: Value = serde_json::from_slice(&bytes)
            .map_err(|e| ServiceError::Migration(format!("session {id} is not valid JSON: {e}")))?;
        match value.get("version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(STATE_VERSION) => {}
            Some(v) => {
                return Err(ServiceError::Migration(format!(
                    "session {id} has state version {v}; this build reads version {STATE_VERSION}"
                )))
            }
            None => return Err(ServiceError::Migration(format!("session {id} has no state version"))),
        }
        let stored: StoredSession = serde_json::from_value(value)
            .map_err(|e| ServiceError::Migration(format!("session {id} does not match version {STATE_VERSION}: {e}")))?;
        let state = stored.state;
        if state.id != id {
            return Err(ServiceError::Migration(format!("file for session {id} holds session {}", state.id)));
        }

        let dataset = match (&state.dataset_sha256, &state.load_options) {
            (Some(sha), Some(options)) => {
                let path = self.dataset_path(sha);
                let raw = fs::read(&path).map_err(|e| {
                    ServiceError::DanglingReference(format!("dataset {sha} for session {id}: {e}"))
                })?;
                let loaded = LoadedDataset::from_bytes(raw, options.clone())?;
                if &loaded.sha256 != sha {
                    return Err(ServiceError::DanglingReference(format!(
                        "dataset file {} does not match its hash",
                        path.display()
                    )));
                }
                Some(loaded)
            }
            (None, None) => None,
            _ => return Err(ServiceError::Migration(format!("session {id} has an incomplete dataset reference"))),
        };
        Session::restore(state, dataset, settings)
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| storage(&dir.display().to_string(), e))? {
            let path = entry.map_err(|e| storage(&dir.display().to_string(), e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
