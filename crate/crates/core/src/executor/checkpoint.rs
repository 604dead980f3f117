use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint {path} is unavailable: {source}")]
    Unavailable { path: PathBuf, source: io::Error },
    #[error("checkpoint {path} is corrupt at line {line}")]
    StoreCorrupt { path: PathBuf, line: usize },
    #[error("task id {0:?} contains a tab or newline")]
    InvalidTaskId(String),
}

/// Append-only file of processed task ids, one `<id>\t<timestamp>` record
/// per line.
///
/// Every mark is flushed and synced before it returns. A final line without
/// a newline is the remains of an interrupted write: it is dropped on open.
#[derive(Debug)]
pub struct CheckpointStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

#[derive(Debug)]
struct Inner {
    file: File,
    processed: HashSet<String>,
    order: Vec<String>,
}

impl CheckpointStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref().to_path_buf();
        let unavailable = |source| CheckpointError::Unavailable {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(unavailable)?;
        let mut text = String::new();
        file.read_to_string(&mut text)
            .map_err(|_| CheckpointError::StoreCorrupt {
                path: path.clone(),
                line: 0,
            })?;

        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            file.set_len(complete as u64).map_err(unavailable)?;
        }
        let mut processed = HashSet::new();
        let mut order = Vec::new();
        for (i, line) in text[..complete].lines().enumerate() {
            let id = match line.split_once('\t') {
                Some((id, _)) if !id.is_empty() => id,
                _ => {
                    return Err(CheckpointError::StoreCorrupt { path, line: i + 1 });
                }
            };
            if processed.insert(id.to_owned()) {
                order.push(id.to_owned());
            }
        }
        Ok(Self {
            path,
            inner: Mutex::new(Inner {
                file,
                processed,
                order,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_processed(&self, task_id: &str) -> bool {
        self.inner
            .lock()
            .expect("checkpoint poisoned")
            .processed
            .contains(task_id)
    }

    /// Records `task_id` durably. Marking an id twice writes nothing the
    /// second time.
    pub fn mark_processed(&self, task_id: &str) -> Result<(), CheckpointError> {
        if task_id.is_empty() || task_id.contains(['\t', '\n', '\r']) {
            return Err(CheckpointError::InvalidTaskId(task_id.to_owned()));
        }
        let mut inner = self.inner.lock().expect("checkpoint poisoned");
        if inner.processed.contains(task_id) {
            return Ok(());
        }
        let stamp = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
        let record = format!("{task_id}\t{stamp}\n");
        let unavailable = |source| CheckpointError::Unavailable {
            path: self.path.clone(),
            source,
        };
        inner
            .file
            .write_all(record.as_bytes())
            .map_err(unavailable)?;
        inner.file.sync_data().map_err(unavailable)?;
        inner.processed.insert(task_id.to_owned());
        inner.order.push(task_id.to_owned());
        Ok(())
    }

    /// Fails when the backing file can no longer be written.
    pub fn ensure_writable(&self) -> Result<(), CheckpointError> {
        let inner = self.inner.lock().expect("checkpoint poisoned");
        let meta = inner
            .file
            .metadata()
            .map_err(|source| CheckpointError::Unavailable {
                path: self.path.clone(),
                source,
            })?;
        if meta.permissions().readonly() {
            return Err(CheckpointError::Unavailable {
                path: self.path.clone(),
                source: io::Error::new(io::ErrorKind::PermissionDenied, "read-only"),
            });
        }
        inner
            .file
            .sync_data()
            .map_err(|source| CheckpointError::Unavailable {
                path: self.path.clone(),
                source,
            })
    }

    /// Processed ids in the order they were recorded.
    pub fn processed(&self) -> Vec<String> {
        self.inner
            .lock()
            .expect("checkpoint poisoned")
            .order
            .clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("checkpoint poisoned").order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
