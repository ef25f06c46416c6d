use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{MockProvider, MockScript, Provider, RemoteProvider};

pub const ENV_KIND: &str = "CULTIVERSE_LLM_KIND";
pub const ENV_ENDPOINT: &str = "CULTIVERSE_LLM_ENDPOINT";
pub const ENV_CREDENTIAL_VAR: &str = "CULTIVERSE_LLM_CREDENTIAL_VAR";
pub const ENV_TIMEOUT_S: &str = "CULTIVERSE_LLM_TIMEOUT_S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    Mock,
}

/// Provider settings, read from a JSON file and overridable through
/// `CULTIVERSE_LLM_*` variables. Credentials are never stored here, only
/// the name of the variable holding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_var: Option<String>,
    /// Mock script; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_image_model")]
    pub image_model: String,
    /// JSON lines trace of outbound requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorder: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    4
}
fn default_model() -> String {
    "gpt-4".into()
}
fn default_image_model() -> String {
    "dall-e-3".into()
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("invalid config {0}: {1}")]
    Syntax(PathBuf, serde_json::Error),
    #[error("mock provider requires a script path")]
    MissingScript,
    #[error("remote provider requires an endpoint")]
    MissingEndpoint,
    #[error("{0} must name an environment variable, not hold a credential")]
    NotAVariableName(String),
    #[error("credential variable {0} is not set")]
    CredentialUnset(String),
    #[error("invalid value {value:?} for {var}")]
    BadEnv { var: &'static str, value: String },
    #[error("cannot load mock script {0}: {1}")]
    Script(PathBuf, std::io::Error),
    #[error("cannot open request trace {0}: {1}")]
    Recorder(PathBuf, std::io::Error),
    #[error("cannot build HTTP client: {0}")]
    Client(String),
}

impl ProviderConfig {
    pub fn mock(script: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            endpoint: None,
            credential_var: None,
            script: Some(script.into()),
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
            model: default_model(),
            image_model: default_image_model(),
            recorder: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        let mut cfg: ProviderConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Syntax(path.to_path_buf(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.script, &mut cfg.recorder].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies `CULTIVERSE_LLM_*` overrides read through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup(ENV_KIND) {
            self.kind = match v.to_ascii_lowercase().as_str() {
                "remote" => ProviderKind::Remote,
                "mock" => ProviderKind::Mock,
                _ => return Err(ConfigError::BadEnv { var: ENV_KIND, value: v }),
            };
        }
        if let Some(v) = lookup(ENV_ENDPOINT) {
            self.endpoint = Some(v);
        }
        if let Some(v) = lookup(ENV_CREDENTIAL_VAR) {
            self.credential_var = Some(v);
        }
        if let Some(v) = lookup(ENV_TIMEOUT_S) {
            self.timeout_s = v
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite() && *t > 0.0)
                .ok_or(ConfigError::BadEnv { var: ENV_TIMEOUT_S, value: v })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind {
            ProviderKind::Mock if self.script.is_none() => Err(ConfigError::MissingScript),
            ProviderKind::Remote if self.endpoint.as_deref().is_none_or(str::is_empty) => {
                Err(ConfigError::MissingEndpoint)
            }
            _ => match &self.credential_var {
                Some(v) if !is_env_name(v) => Err(ConfigError::NotAVariableName(v.clone())),
                _ => Ok(()),
            },
        }
    }

    pub fn build_provider(&self) -> Result<Arc<dyn Provider>, ConfigError> {
        self.validate()?;
        match self.kind {
            ProviderKind::Mock => {
                let path = self.script.as_ref().ok_or(ConfigError::MissingScript)?;
                let script = MockScript::load(path).map_err(|e| ConfigError::Script(path.clone(), e))?;
                Ok(Arc::new(MockProvider::new(script)))
            }
            ProviderKind::Remote => {
                let credential = match &self.credential_var {
                    Some(var) => Some(std::env::var(var).map_err(|_| ConfigError::CredentialUnset(var.clone()))?),
                    None => None,
                };
                let endpoint = self.endpoint.as_deref().ok_or(ConfigError::MissingEndpoint)?;
                let provider = RemoteProvider::new(
                    endpoint,
                    &self.model,
                    &self.image_model,
                    credential,
                    Duration::from_secs_f64(self.timeout_s),
                )
                .map_err(|e| ConfigError::Client(e.to_string()))?;
                Ok(Arc::new(provider))
            }
        }
    }
}

fn is_env_name(s: &str) -> bool {
    let mut bytes = s.bytes();
    bytes.next().is_some_and(|b| b.is_ascii_uppercase() || b == b'_')
        && bytes.all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
}
