use std::time::Duration;

use screenprio::corpus::{efetch_url, EfetchTransport, TransportError};
use screenprio::Pmid;

/// Blocking HTTP transport for the efetch endpoint.
pub struct HttpEfetch {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpEfetch {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpEfetch {
            agent,
            endpoint: endpoint.to_owned(),
            api_key,
        }
    }
}

impl EfetchTransport for HttpEfetch {
    fn fetch(&self, pmids: &[Pmid]) -> Result<String, TransportError> {
        let url = efetch_url(&self.endpoint, pmids, self.api_key.as_deref());
        let mut response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| TransportError::new(e.to_string()))?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::new(e.to_string()))
    }
}
