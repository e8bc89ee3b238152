//! Session registry backed by one append-only JSON-lines log per session.
//!
//! Layout under the data directory:
//!
//! ```text
//! sessions/<id>.jsonl   one EventRecord per line, in sequence order
//! index.json            summary of every session at its last snapshot
//! ```
//!
//! The logs are authoritative. The index is rewritten on creation, on
//! finalization and by [`SessionStore::write_index`]; on open it may lag the
//! logs but must never be ahead of them.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use curtail_core::{Hypotheses, MonitorUpdate};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{ServiceError, ServiceResult};
use crate::session::{EventRecord, SessionEvent, SessionStatus, TrialSession};

const INDEX_FILE: &str = "index.json";
const SESSIONS_DIR: &str = "sessions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: Uuid,
    pub seq: u64,
    pub status: SessionStatus,
    pub p0: f64,
    pub p1: f64,
    pub u: u32,
    #[serde(rename = "K")]
    pub max_n: u32,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl IndexEntry {
    pub fn of(s: &TrialSession) -> Self {
        IndexEntry {
            id: s.id,
            seq: s.seq,
            status: s.status,
            p0: s.hypotheses.p0,
            p1: s.hypotheses.p1,
            u: s.design.u(),
            max_n: s.design.max_n(),
            created_at: s.created_at,
            updated_at: s.updated_at,
        }
    }
}

struct Writer {
    log: Option<File>,
    events: Vec<EventRecord>,
}

struct Slot {
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<TrialSession>>,
}

pub struct SessionStore {
    dir: Option<PathBuf>,
    durable: bool,
    sessions: RwLock<BTreeMap<Uuid, Arc<Slot>>>,
    index_lock: Mutex<()>,
}

impl SessionStore {
    /// A store that keeps everything in memory.
    pub fn in_memory() -> Self {
        SessionStore { dir: None, durable: false, sessions: RwLock::default(), index_lock: Mutex::new(()) }
    }

    /// Opens (or initializes) a data directory and replays every session log.
    pub fn open(dir: impl Into<PathBuf>) -> ServiceResult<Self> {
        let dir = dir.into();
        let sessions_dir = dir.join(SESSIONS_DIR);
        fs::create_dir_all(&sessions_dir).map_err(|e| ServiceError::io(&sessions_dir, e))?;

        let mut sessions = BTreeMap::new();
        let entries = fs::read_dir(&sessions_dir).map_err(|e| ServiceError::io(&sessions_dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| ServiceError::io(&sessions_dir, e))?.path();
            if path.extension().is_some_and(|x| x == "jsonl") {
                let events = read_log(&path)?;
                let session = TrialSession::replay(&events)?;
                let log = OpenOptions::new().append(true).open(&path).map_err(|e| ServiceError::io(&path, e))?;
                sessions.insert(session.id, Arc::new(Slot::new(session, events, Some(log))));
            }
        }

        for entry in read_index(&dir.join(INDEX_FILE))? {
            let slot = sessions
                .get(&entry.id)
                .ok_or_else(|| ServiceError::Corrupt(format!("index lists {} but its log is missing", entry.id)))?;
            let current = slot.snapshot.read().seq;
            if current < entry.seq {
                return Err(ServiceError::Corrupt(format!(
                    "index has seq {} for {} but the log ends at {current}",
                    entry.seq, entry.id
                )));
            }
        }

        let store =
            SessionStore { dir: Some(dir), durable: true, sessions: RwLock::new(sessions), index_lock: Mutex::new(()) };
        store.write_index()?;
        Ok(store)
    }

    /// Skips `fsync` after each append. Appends are still flushed.
    pub fn without_fsync(mut self) -> Self {
        self.durable = false;
        self
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn create(&self, hypotheses: Hypotheses) -> ServiceResult<Arc<TrialSession>> {
        let record = TrialSession::create(hypotheses, Utc::now())?;
        let session = TrialSession::replay([&record])?;
        let log = match &self.dir {
            Some(dir) => {
                let path = log_path(dir, session.id);
                let mut file = OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| ServiceError::io(&path, e))?;
                append(&mut file, &path, &record, self.durable)?;
                Some(file)
            }
            None => None,
        };
        let slot = Arc::new(Slot::new(session, vec![record], log));
        let snapshot = slot.snapshot.read().clone();
        self.sessions.write().insert(snapshot.id, slot);
        self.write_index()?;
        Ok(snapshot)
    }

    pub fn get(&self, id: Uuid) -> ServiceResult<Arc<TrialSession>> {
        Ok(self.slot(id)?.snapshot.read().clone())
    }

    /// All sessions, oldest first.
    pub fn list(&self) -> Vec<Arc<TrialSession>> {
        let mut all: Vec<_> = self.sessions.read().values().map(|s| s.snapshot.read().clone()).collect();
        all.sort_by_key(|s| (s.created_at, s.id));
        all
    }

    pub fn events(&self, id: Uuid) -> ServiceResult<Vec<EventRecord>> {
        Ok(self.slot(id)?.writer.lock().events.clone())
    }

    pub fn record(
        &self,
        id: Uuid,
        responder: bool,
        expected_seq: u64,
    ) -> ServiceResult<(MonitorUpdate, Arc<TrialSession>)> {
        let session = self.mutate(id, Some(expected_seq), |_| Ok(Some(SessionEvent::OutcomeRecorded { responder })))?;
        Ok((session.update(), session))
    }

    pub fn undo(&self, id: Uuid, expected_seq: Option<u64>) -> ServiceResult<Arc<TrialSession>> {
        self.mutate(id, expected_seq, |_| Ok(Some(SessionEvent::OutcomeUndone)))
    }

    /// Computes and stores the final report. Finalizing twice returns the
    /// stored session unchanged.
    pub fn finalize(&self, id: Uuid, expected_seq: Option<u64>) -> ServiceResult<Arc<TrialSession>> {
        let session = self.mutate(id, expected_seq, |s| match s.status {
            SessionStatus::Finalized => Ok(None),
            _ => {
                s.check_finalize()?;
                Ok(Some(SessionEvent::Finalized { report: s.compute_report()? }))
            }
        })?;
        self.write_index()?;
        Ok(session)
    }

    /// Rewrites the index from the current snapshots.
    pub fn write_index(&self) -> ServiceResult<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let _guard = self.index_lock.lock();
        let entries: Vec<IndexEntry> = self.list().iter().map(|s| IndexEntry::of(s)).collect();
        let path = dir.join(INDEX_FILE);
        let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
        let body = serde_json::to_vec_pretty(&entries).expect("index serializes");
        fs::write(&tmp, body).map_err(|e| ServiceError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| ServiceError::io(&path, e))
    }

    fn slot(&self, id: Uuid) -> ServiceResult<Arc<Slot>> {
        self.sessions.read().get(&id).cloned().ok_or(ServiceError::NotFound(id))
    }

    /// Runs one serialized mutation: checks the sequence number, derives the
    /// event from the current state, logs it, then publishes the new snapshot.
    fn mutate(
        &self,
        id: Uuid,
        expected_seq: Option<u64>,
        event_for: impl FnOnce(&TrialSession) -> ServiceResult<Option<SessionEvent>>,
    ) -> ServiceResult<Arc<TrialSession>> {
        let slot = self.slot(id)?;
        let mut writer = slot.writer.lock();
        let current = slot.snapshot.read().clone();
        if let Some(expected) = expected_seq {
            if expected != current.seq {
                return Err(ServiceError::StaleSeq { expected, current: current.seq });
            }
        }
        let Some(event) = event_for(&current)? else { return Ok(current) };
        let record = EventRecord { session_id: id, seq: current.seq + 1, event, timestamp: Utc::now() };
        let mut next = (*current).clone();
        next.apply(&record)?;
        if let (Some(dir), Some(log)) = (&self.dir, writer.log.as_mut()) {
            append(log, &log_path(dir, id), &record, self.durable)?;
        }
        writer.events.push(record);
        let next = Arc::new(next);
        *slot.snapshot.write() = next.clone();
        Ok(next)
    }
}

impl Slot {
    fn new(session: TrialSession, events: Vec<EventRecord>, log: Option<File>) -> Self {
        Slot { writer: Mutex::new(Writer { log, events }), snapshot: RwLock::new(Arc::new(session)) }
    }
}

fn log_path(dir: &Path, id: Uuid) -> PathBuf {
    dir.join(SESSIONS_DIR).join(format!("{id}.jsonl"))
}

fn append(file: &mut File, path: &Path, record: &EventRecord, durable: bool) -> ServiceResult<()> {
    let mut line = serde_json::to_vec(record).expect("event serializes");
    line.push(b'\n');
    file.write_all(&line).map_err(|e| ServiceError::io(path, e))?;
    file.flush().map_err(|e| ServiceError::io(path, e))?;
    if durable {
        file.sync_data().map_err(|e| ServiceError::io(path, e))?;
    }
    Ok(())
}

/// Reads a session log. A torn final line (crash mid-append) is ignored.
pub fn read_log(path: &Path) -> ServiceResult<Vec<EventRecord>> {
    let file = File::open(path).map_err(|e| ServiceError::io(path, e))?;
    let lines: Vec<String> =
        BufReader::new(file).lines().collect::<Result<_, _>>().map_err(|e| ServiceError::io(path, e))?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(ev) => events.push(ev),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(ServiceError::Corrupt(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(events)
}

fn read_index(path: &Path) -> ServiceResult<Vec<IndexEntry>> {
    match fs::read(path) {
        Ok(bytes) => {
            serde_json::from_slice(&bytes).map_err(|e| ServiceError::Corrupt(format!("{}: {e}", path.display())))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(ServiceError::io(path, e)),
    }
}
