use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use cultiverse_core::digest::FieldHasher;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, GeneratedImage, ImageRequest, Provider, ProviderError};

/// Canned replies keyed by prompt content hash, with an ordered fallback
/// list used when no key matches.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub replies: BTreeMap<String, String>,
    #[serde(default)]
    pub fallback: Vec<String>,
}

impl MockScript {
    pub fn load(path: &Path) -> std::io::Result<MockScript> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("script serializes");
        s.push('\n');
        s
    }
}

pub struct MockProvider {
    script: MockScript,
    cursor: AtomicUsize,
    faults: Mutex<VecDeque<ProviderError>>,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        MockProvider { script, cursor: AtomicUsize::new(0), faults: Mutex::new(VecDeque::new()) }
    }

    /// Makes the next call (chat or image) fail with `error`. Queued
    /// faults are consumed in order.
    pub fn inject(&self, error: ProviderError) {
        self.faults.lock().expect("fault queue poisoned").push_back(error);
    }

    fn next_fault(&self) -> Option<ProviderError> {
        self.faults.lock().expect("fault queue poisoned").pop_front()
    }
}

#[async_trait]
impl Provider for MockProvider {
    async fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        if let Some(e) = self.next_fault() {
            return Err(e);
        }
        if let Some(reply) = self.script.replies.get(&request.prompt_hash) {
            return Ok(reply.clone());
        }
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        self.script.fallback.get(i).cloned().ok_or_else(|| ProviderError::ScriptedMiss(request.prompt_hash.clone()))
    }

    async fn image(&self, request: &ImageRequest) -> Result<GeneratedImage, ProviderError> {
        if let Some(e) = self.next_fault() {
            return Err(e);
        }
        Ok(placeholder_image(&request.prompt_hash, request.index))
    }
}

/// Small SVG whose bytes depend only on `prompt_hash` and `index`.
pub fn placeholder_image(prompt_hash: &str, index: u32) -> GeneratedImage {
    let digest = FieldHasher::new().field(prompt_hash).field(index.to_le_bytes()).finish_hex();
    let fill = &digest[..6];
    let stroke = &digest[6..12];
    let svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"256\" height=\"256\" viewBox=\"0 0 256 256\">\
<rect width=\"256\" height=\"256\" fill=\"#{fill}\"/>\
<circle cx=\"128\" cy=\"128\" r=\"80\" fill=\"none\" stroke=\"#{stroke}\" stroke-width=\"12\"/>\
<text x=\"128\" y=\"240\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{} #{index}</text>\
</svg>\n",
        &prompt_hash[..prompt_hash.len().min(12)]
    );
    GeneratedImage { bytes: svg.into_bytes(), extension: "svg".into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_is_reproducible() {
        assert_eq!(placeholder_image("abc", 0), placeholder_image("abc", 0));
        assert_ne!(placeholder_image("abc", 0).bytes, placeholder_image("abc", 1).bytes);
    }

    #[tokio::test]
    async fn fallback_is_consumed_in_order() {
        let mock = MockProvider::new(MockScript { replies: BTreeMap::new(), fallback: vec!["a".into(), "b".into()] });
        let req = ChatRequest { prompt_hash: "h".into(), template_id: "t".into(), messages: vec![] };
        assert_eq!(mock.chat(&req).await.unwrap(), "a");
        assert_eq!(mock.chat(&req).await.unwrap(), "b");
        assert_eq!(mock.chat(&req).await, Err(ProviderError::ScriptedMiss("h".into())));
    }

    #[test]
    fn script_format() {
        let s: MockScript = serde_json::from_str(r#"{"replies": {"h": "x"}}"#).unwrap();
        assert_eq!(s.replies["h"], "x");
        assert!(s.fallback.is_empty());
    }
}
