use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatRequest, ImageRequest};

/// One outbound provider call, as sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedRequest {
    pub seq: u64,
    pub kind: String,
    pub prompt_hash: String,
    pub attempt: u32,
    pub body: Value,
}

/// Keeps every outbound request in memory and optionally appends it to a
/// JSON lines file. Cloning shares the same log.
#[derive(Clone, Default)]
pub struct Recorder {
    inner: Arc<Mutex<Inner>>,
}

#[derive(Default)]
struct Inner {
    entries: Vec<RecordedRequest>,
    file: Option<File>,
}

impl Recorder {
    pub fn memory() -> Self {
        Recorder::default()
    }

    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Recorder { inner: Arc::new(Mutex::new(Inner { entries: Vec::new(), file: Some(file) })) })
    }

    pub fn entries(&self) -> Vec<RecordedRequest> {
        self.inner.lock().expect("recorder poisoned").entries.clone()
    }

    /// The in-memory trace as JSON lines.
    pub fn to_jsonl(&self) -> String {
        let inner = self.inner.lock().expect("recorder poisoned");
        let mut out = String::new();
        for e in &inner.entries {
            out.push_str(&serde_json::to_string(e).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub(super) fn record_chat(&self, req: &ChatRequest, attempt: u32) {
        let body = json!({ "template_id": req.template_id, "messages": req.messages });
        self.push("chat", &req.prompt_hash, attempt, body);
    }

    pub(super) fn record_image(&self, req: &ImageRequest, attempt: u32) {
        let body = json!({ "prompt": req.prompt, "index": req.index });
        self.push("image", &req.prompt_hash, attempt, body);
    }

    fn push(&self, kind: &str, prompt_hash: &str, attempt: u32, body: Value) {
        let mut inner = self.inner.lock().expect("recorder poisoned");
        let entry = RecordedRequest {
            seq: inner.entries.len() as u64,
            kind: kind.to_string(),
            prompt_hash: prompt_hash.to_string(),
            attempt,
            body,
        };
        if let Some(f) = inner.file.as_mut() {
            let line = serde_json::to_string(&entry).expect("record serializes");
            if let Err(e) = writeln!(f, "{line}") {
                tracing::warn!(error = %e, "request trace write failed");
            }
        }
        inner.entries.push(entry);
    }
}
