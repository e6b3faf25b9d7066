use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Assertion, AssertionLabel, NegationError};
use crate::gateway::{Transport, UreqTransport};

pub const ENV_ASSERTION_ENDPOINT: &str = "CTLAB_ASSERTION_ENDPOINT";

/// Client for the assertion service's batch endpoint, `POST <base>/assert`.
/// Offsets are sent as character (code point) offsets.
pub struct AssertionClient {
    url: String,
    transport: Arc<dyn Transport>,
}

#[derive(Deserialize)]
struct WireResponse {
    labels: Vec<WireLabel>,
}

#[derive(Deserialize)]
struct WireLabel {
    label: String,
    confidence: f64,
}

impl AssertionClient {
    pub fn new(base_url: &str, transport: Arc<dyn Transport>) -> Self {
        AssertionClient { url: format!("{}/assert", base_url.trim_end_matches('/')), transport }
    }

    pub fn http(base_url: &str, timeout: Duration) -> Self {
        Self::new(base_url, Arc::new(UreqTransport::new(timeout)))
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// One request per note. Transport failures and non-2xx statuses are
    /// `Remote` errors (eligible for fallback); bad bodies are not.
    pub fn classify(&self, text: &str, spans: &[(usize, usize)]) -> Result<Vec<Assertion>, NegationError> {
        let entities: Vec<[usize; 2]> = spans.iter().map(|&(s, e)| [s, e]).collect();
        let body = json!({"text": text, "entities": entities}).to_string();
        let resp = self
            .transport
            .post_json(&self.url, None, &body)
            .map_err(|e| NegationError::Remote(format!("{}: {e}", self.url)))?;
        if !(200..300).contains(&resp.status) {
            return Err(NegationError::Remote(format!("{}: HTTP {}: {}", self.url, resp.status, resp.body)));
        }
        let wire: WireResponse =
            serde_json::from_str(&resp.body).map_err(|e| NegationError::Protocol(format!("{e}: {}", resp.body)))?;
        if wire.labels.len() != spans.len() {
            return Err(NegationError::LabelCount { expected: spans.len(), got: wire.labels.len() });
        }
        wire.labels
            .into_iter()
            .map(|l| {
                let label: AssertionLabel = l.label.parse().map_err(NegationError::Protocol)?;
                if !(0.0..=1.0).contains(&l.confidence) {
                    return Err(NegationError::Protocol(format!("confidence {} outside [0, 1]", l.confidence)));
                }
                Ok(Assertion { label, confidence: l.confidence })
            })
            .collect()
    }
}
