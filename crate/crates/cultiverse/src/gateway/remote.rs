//! OpenAI-compatible HTTP provider.

use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde_json::{json, Value};

use super::{ChatRequest, GeneratedImage, ImageRequest, Provider, ProviderError};

pub struct RemoteProvider {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    image_model: String,
    credential: Option<String>,
}

impl RemoteProvider {
    pub fn new(
        endpoint: &str,
        model: &str,
        image_model: &str,
        credential: Option<String>,
        timeout: Duration,
    ) -> Result<Self, reqwest::Error> {
        let client = reqwest::Client::builder().timeout(timeout).build()?;
        Ok(RemoteProvider {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            image_model: image_model.to_string(),
            credential,
        })
    }

    async fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let mut req = self.client.post(format!("{}{path}", self.endpoint)).json(body);
        if let Some(token) = &self.credential {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(map_transport)?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(ProviderError::Refused(format!("HTTP {status}: {}", truncate(&text, 300))));
        }
        resp.json::<Value>().await.map_err(map_transport)
    }
}

fn map_transport(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout
    } else {
        ProviderError::Refused(e.to_string())
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[async_trait]
impl Provider for RemoteProvider {
    async fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let messages: Vec<Value> =
            request.messages.iter().map(|m| json!({ "role": m.role.token(), "content": m.text })).collect();
        let body = json!({ "model": self.model, "messages": messages });
        let v = self.post("/chat/completions", &body).await?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| ProviderError::Refused("response has no choices[0].message.content".into()))
    }

    async fn image(&self, request: &ImageRequest) -> Result<GeneratedImage, ProviderError> {
        let body = json!({
            "model": self.image_model,
            "prompt": request.prompt,
            "n": 1,
            "response_format": "b64_json",
        });
        let v = self.post("/images/generations", &body).await?;
        let data = v
            .pointer("/data/0/b64_json")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::Refused("response has no data[0].b64_json".into()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| ProviderError::Refused(format!("image payload is not base64: {e}")))?;
        Ok(GeneratedImage { bytes, extension: "png".into() })
    }
}
