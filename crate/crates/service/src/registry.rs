use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{ServiceError, ServiceResult};
use crate::session::{
    now_ms, valid_id, CreateSession, Event, Progress, Session, Snapshot, SubmitAnswer, Task,
};

struct Slot {
    session: Session,
    log: Option<File>,
}

/// All live sessions. Each session sits behind its own lock, so writers to
/// one session are serialised and sessions never contend with each other.
pub struct Registry {
    data_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
}

fn internal(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(e.to_string())
}

fn append(log: &mut Option<File>, event: &Event) -> ServiceResult<()> {
    if let Some(f) = log {
        let mut line = serde_json::to_string(event).map_err(internal)?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(internal)?;
        f.flush().map_err(internal)?;
    }
    Ok(())
}

fn read_events(path: &Path) -> ServiceResult<Vec<Event>> {
    let file = File::open(path).map_err(internal)?;
    let mut events = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(internal)?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(internal)?);
    }
    Ok(events)
}

impl Registry {
    /// Sessions kept in memory only.
    pub fn in_memory() -> Self {
        Registry {
            data_dir: None,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Sessions persisted as `<id>.jsonl` event logs under `dir`. Existing
    /// logs are replayed.
    pub fn open(dir: impl Into<PathBuf>) -> ServiceResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(internal)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir).map_err(internal)? {
            let path = entry.map_err(internal)?.path();
            if path.extension().is_none_or(|e| e != "jsonl") {
                continue;
            }
            let session = Session::replay(&read_events(&path)?)
                .map_err(|e| internal(format!("{}: {e}", path.display())))?;
            let log = OpenOptions::new().append(true).open(&path).map_err(internal)?;
            tracing::info!(id = session.id(), "restored session");
            sessions.insert(
                session.id().to_string(),
                Arc::new(Mutex::new(Slot {
                    session,
                    log: Some(log),
                })),
            );
        }
        Ok(Registry {
            data_dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    fn slot(&self, id: &str) -> ServiceResult<Arc<Mutex<Slot>>> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{id}`")))
    }

    pub fn create(&self, request: CreateSession) -> ServiceResult<Snapshot> {
        let id = request
            .id
            .clone()
            .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        if !valid_id(&id) {
            return Err(ServiceError::BadRequest(format!("invalid session id `{id}`")));
        }
        if self.sessions.read().expect("registry lock").contains_key(&id) {
            return Err(ServiceError::Conflict(format!("session `{id}` already exists")));
        }
        let session = Session::create(id.clone(), request.clone())?;
        let snapshot = session.snapshot()?;
        let mut sessions = self.sessions.write().expect("registry lock");
        if sessions.contains_key(&id) {
            return Err(ServiceError::Conflict(format!("session `{id}` already exists")));
        }
        let mut log = match &self.data_dir {
            Some(dir) => Some(
                OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(dir.join(format!("{id}.jsonl")))
                    .map_err(|e| match e.kind() {
                        std::io::ErrorKind::AlreadyExists => {
                            ServiceError::Conflict(format!("session `{id}` already exists"))
                        }
                        _ => internal(e),
                    })?,
            ),
            None => None,
        };
        append(
            &mut log,
            &Event::Created {
                at_ms: now_ms(),
                id: id.clone(),
                request,
            },
        )?;
        sessions.insert(id, Arc::new(Mutex::new(Slot { session, log })));
        Ok(snapshot)
    }

    pub fn next_tasks(&self, id: &str, count: Option<usize>) -> ServiceResult<Vec<Task>> {
        let slot = self.slot(id)?;
        let slot = slot.lock().expect("session lock");
        let count = count.unwrap_or(slot.session.batch_size());
        Ok(slot.session.next_tasks(count))
    }

    pub fn submit(&self, id: &str, answer: SubmitAnswer) -> ServiceResult<Progress> {
        let slot = self.slot(id)?;
        let mut slot = slot.lock().expect("session lock");
        let value = answer.answer.value();
        slot.session.check_answer(answer.u, answer.v, value)?;
        append(
            &mut slot.log,
            &Event::Answer {
                at_ms: now_ms(),
                u: answer.u,
                v: answer.v,
                value,
            },
        )?;
        slot.session.submit(answer.u, answer.v, value)
    }

    pub fn state(&self, id: &str) -> ServiceResult<Snapshot> {
        let slot = self.slot(id)?;
        let slot = slot.lock().expect("session lock");
        slot.session.snapshot()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.sessions.read().expect("registry lock").keys().cloned().collect();
        ids.sort();
        ids
    }
}
