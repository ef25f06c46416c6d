//! Append-only event log with periodic snapshots.
//!
//! `events.jsonl` holds one record per line: `{"seq": n, "events": [...]}`.
//! A record groups the events of one request, so a request is either fully
//! persisted or not at all. Each append is fsynced before the in-memory
//! state changes. `snapshot.json` holds the state as of some `seq`; on open
//! the snapshot is loaded and later records are replayed. A torn final line
//! (crash mid-append) is cut off; a bad line anywhere else is an error.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use cultiverse_core::{
    Annotation, AnnotationId, ElementId, Facet, FacetSet, InferenceItem, NormId, TargetNorm, UserBackground, Verdict,
};
use serde::{Deserialize, Serialize};

use crate::gateway::{ConversationThread, ImageResult, Scope};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub background: UserBackground,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub threads: BTreeMap<Scope, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_element: Option<ElementId>,
    pub images: Vec<String>,
    pub translations: Vec<String>,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Log record that produced the entry.
    pub seq: u64,
    #[serde(flatten)]
    pub event: HistoryEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryEvent {
    ElementSelected {
        element: ElementId,
        norm_id: NormId,
    },
    QuestionAnswered {
        norm_id: NormId,
        thread_id: String,
        turn_id: String,
    },
    TurnDeleted {
        thread_id: String,
        turn_id: String,
    },
    ImageGenerated {
        norm_id: Option<NormId>,
        image_id: String,
        index: u32,
    },
    ImageDeleted {
        image_id: String,
    },
    TranslationIssued {
        translation_id: String,
    },
    VerdictReceived {
        translation_id: String,
        target_index: usize,
        verdict: Verdict,
        raw: String,
    },
    InferenceReceived {
        norm_id: NormId,
        anchor: Facet,
        items: Vec<InferenceItem>,
        raw: String,
    },
    ResponseRejected {
        scope: Scope,
        norm_id: NormId,
        raw: String,
        error: String,
    },
    AnnotationAdded {
        annotation_id: AnnotationId,
    },
    AnnotationRemoved {
        annotation_id: AnnotationId,
        flagged: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub id: String,
    pub session_id: String,
    pub norm_id: NormId,
    pub conditions: FacetSet,
    pub questions: FacetSet,
    pub prompt_hash: String,
    pub target_culture: String,
    pub target_norms: Vec<TargetNorm>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SessionCreated { session: Session },
    ThreadSaved { session_id: String, thread: ConversationThread },
    ImageSaved { session_id: String, image: ImageResult },
    ImageDeleted { session_id: String, image_id: String },
    TranslationSaved { translation: TranslationRecord },
    History { session_id: String, event: HistoryEvent },
    AnnotationAdded { annotation: Annotation },
    AnnotationRemoved { annotation_id: AnnotationId },
}

/// Annotation edits made through the service, replayed onto the dataset
/// loaded from disk at startup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AnnotationEdit {
    Added { annotation: Annotation },
    Removed { annotation_id: AnnotationId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreState {
    pub sessions: BTreeMap<String, Session>,
    pub threads: BTreeMap<String, ConversationThread>,
    pub translations: BTreeMap<String, TranslationRecord>,
    /// Live image results; deleted ones are dropped.
    pub images: BTreeMap<String, ImageResult>,
    pub annotation_edits: Vec<AnnotationEdit>,
}

impl StoreState {
    pub fn next_session_id(&self) -> String {
        format!("s{:04}", self.sessions.len() + 1)
    }

    pub fn next_translation_id(&self) -> String {
        format!("tr{:04}", self.translations.len() + 1)
    }

    /// Applies one event. Events referring to unknown sessions are ignored,
    /// which cannot happen for logs written by this module.
    pub fn apply(&mut self, seq: u64, event: Event) {
        match event {
            Event::SessionCreated { session } => {
                self.sessions.insert(session.id.clone(), session);
            }
            Event::ThreadSaved { session_id, thread } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    s.threads.insert(thread.scope, thread.id.clone());
                }
                self.threads.insert(thread.id.clone(), thread);
            }
            Event::ImageSaved { session_id, image } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    if !s.images.contains(&image.id) {
                        s.images.push(image.id.clone());
                    }
                }
                self.images.insert(image.id.clone(), image);
            }
            Event::ImageDeleted { session_id, image_id } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    s.images.retain(|i| *i != image_id);
                }
                self.images.remove(&image_id);
            }
            Event::TranslationSaved { translation } => {
                if let Some(s) = self.sessions.get_mut(&translation.session_id) {
                    s.translations.push(translation.id.clone());
                }
                self.translations.insert(translation.id.clone(), translation);
            }
            Event::History { session_id, event } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    if let HistoryEvent::ElementSelected { element, .. } = &event {
                        s.current_element = Some(element.clone());
                    }
                    s.history.push(HistoryEntry { seq, event });
                }
            }
            Event::AnnotationAdded { annotation } => {
                self.annotation_edits.push(AnnotationEdit::Added { annotation });
            }
            Event::AnnotationRemoved { annotation_id } => {
                self.annotation_edits.push(AnnotationEdit::Removed { annotation_id });
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: corrupt record: {message}", path.display())]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("{}: record seq {found} follows {previous}", path.display())]
    OutOfOrder { path: PathBuf, previous: u64, found: u64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    seq: u64,
    events: Vec<Event>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    state: StoreState,
}

pub struct EventStore {
    dir: PathBuf,
    file: File,
    seq: u64,
    state: StoreState,
    snapshot_every: u64,
    since_snapshot: u64,
}

impl EventStore {
    pub fn open(dir: &Path) -> Result<EventStore, StoreError> {
        EventStore::open_with(dir, DEFAULT_SNAPSHOT_EVERY)
    }

    /// `snapshot_every` of 0 disables automatic snapshots.
    pub fn open_with(dir: &Path, snapshot_every: u64) -> Result<EventStore, StoreError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        let snap_path = dir.join(SNAPSHOT_FILE);
        let (mut seq, mut state) = match fs::read_to_string(&snap_path) {
            Ok(text) => {
                let snap: Snapshot = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                    path: snap_path.clone(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
                (snap.seq, snap.state)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => (0, StoreState::default()),
            Err(e) => return Err(StoreError::Io { path: snap_path, source: e }),
        };

        let log_path = dir.join(EVENTS_FILE);
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
        let mut reader = BufReader::new(&mut file);
        let mut good_len = 0u64;
        let mut line_no = 0;
        let mut replayed = 0;
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(io_err(&log_path))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = buf.ends_with('\n');
            match serde_json::from_str::<Record>(buf.trim_end()) {
                Ok(rec) if complete => {
                    if rec.seq > seq {
                        if rec.seq != seq + 1 {
                            return Err(StoreError::OutOfOrder { path: log_path, previous: seq, found: rec.seq });
                        }
                        for ev in rec.events {
                            state.apply(rec.seq, ev);
                        }
                        seq = rec.seq;
                        replayed += 1;
                    }
                    good_len += n as u64;
                }
                _ if !complete => {
                    tracing::warn!(line = line_no, "dropping torn record at end of event log");
                    break;
                }
                Ok(_) => unreachable!(),
                Err(e) => {
                    return Err(StoreError::Corrupt { path: log_path, line: line_no, message: e.to_string() });
                }
            }
        }
        drop(reader);
        if file.metadata().map_err(io_err(&log_path))?.len() != good_len {
            file.set_len(good_len).map_err(io_err(&log_path))?;
            file.seek(SeekFrom::End(0)).map_err(io_err(&log_path))?;
        }

        Ok(EventStore { dir: dir.to_path_buf(), file, seq, state, snapshot_every, since_snapshot: replayed })
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Durably appends `events` as one record, then applies them.
    pub fn commit(&mut self, events: Vec<Event>) -> Result<u64, StoreError> {
        if events.is_empty() {
            return Ok(self.seq);
        }
        let seq = self.seq + 1;
        let rec = Record { seq, events };
        let mut line = serde_json::to_string(&rec).expect("events serialize");
        line.push('\n');
        let path = self.dir.join(EVENTS_FILE);
        let io_err = |source| StoreError::Io { path: path.clone(), source };
        self.file.write_all(line.as_bytes()).map_err(io_err)?;
        self.file.sync_data().map_err(io_err)?;
        self.seq = seq;
        for ev in rec.events {
            self.state.apply(seq, ev);
        }
        self.since_snapshot += 1;
        if self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every {
            self.snapshot()?;
        }
        Ok(seq)
    }

    /// Writes the current state to `snapshot.json` atomically.
    pub fn snapshot(&mut self) -> Result<(), StoreError> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join("snapshot.json.tmp");
        let io_err = |source| StoreError::Io { path: path.clone(), source };
        let text = serde_json::to_string(&SnapshotRef { seq: self.seq, state: &self.state }).expect("state serializes");
        let mut f = File::create(&tmp).map_err(io_err)?;
        f.write_all(text.as_bytes()).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        self.since_snapshot = 0;
        Ok(())
    }
}

#[derive(Serialize)]
struct SnapshotRef<'a> {
    seq: u64,
    state: &'a StoreState,
}
