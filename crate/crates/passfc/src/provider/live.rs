//! HTTP chat-completion backend (OpenAI-compatible wire format).

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, ChatRequest, ProviderError, ProviderResponse};

/// Environment variable holding the bearer token.
pub const LLM_API_KEY_VAR: &str = "LLM_API_KEY";

const TRANSPORT_RETRIES: usize = 2;

pub struct LiveProvider {
    endpoint: String,
    model: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Usage,
    #[serde(default)]
    model: String,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl LiveProvider {
    /// Reads the API key from `LLM_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self, String> {
        let api_key = std::env::var(LLM_API_KEY_VAR)
            .map_err(|_| format!("{LLM_API_KEY_VAR} is not set"))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
        })
    }

    fn call_once(&self, prompt: &str, request: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
        });
        if let Some(max_tokens) = request.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(ProviderError::Transport(format!(
                "HTTP {status}: {}",
                text.chars().take(300).collect::<String>()
            )));
        }
        let completion: ChatCompletion = response
            .json()
            .map_err(|e| ProviderError::Transport(format!("malformed completion body: {e}")))?;
        let choice = completion
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::Transport("completion has no choices".to_string()))?;
        Ok(ProviderResponse {
            text: choice.message.content,
            prompt_tokens: completion.usage.prompt_tokens,
            completion_tokens: completion.usage.completion_tokens,
            model_id: if completion.model.is_empty() {
                self.model.clone()
            } else {
                completion.model
            },
        })
    }
}

impl ChatProvider for LiveProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        let prompt = request.render()?;
        let mut delay = Duration::from_millis(250);
        let mut last_err = None;
        for attempt in 0..=TRANSPORT_RETRIES {
            match self.call_once(&prompt, request) {
                Ok(response) => return Ok(response),
                Err(ProviderError::Transport(message)) => {
                    tracing::warn!(attempt, %message, "llm transport error");
                    last_err = Some(ProviderError::Transport(message));
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(other) => return Err(other),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}
