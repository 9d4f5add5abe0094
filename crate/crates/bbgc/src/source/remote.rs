use std::io::Read;
use std::time::Duration;

use bbgc_core::{Embeddings, Generator, Latents, SourceError};
use serde::{Deserialize, Serialize};

use super::{batches, embeddings_from_response};
use crate::store::{encode_batch, read_batch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Endpoint receiving a framed latent batch and answering with embeddings.
    pub url: String,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_batch() -> usize {
    256
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    200
}

#[derive(Debug)]
pub struct RemoteSource {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    latent_dim: usize,
    embed_dim: usize,
}

enum Attempt {
    Retry(SourceError),
    Fatal(SourceError),
}

fn is_timeout(e: &ureq::Transport) -> bool {
    let mut src: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(e);
    while let Some(s) = src {
        if let Some(io) = s.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        src = s.source();
    }
    false
}

impl RemoteSource {
    pub fn new(cfg: RemoteConfig, latent_dim: usize, embed_dim: usize) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(cfg.timeout_secs.max(0.001))).build();
        Self { cfg, agent, latent_dim, embed_dim }
    }

    fn attempt(&self, body: &[u8], batch: &Latents) -> Result<Embeddings, Attempt> {
        let response = match self
            .agent
            .post(&self.cfg.url)
            .set("Content-Type", "application/octet-stream")
            .send_bytes(body)
        {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) if code >= 500 || code == 429 => {
                return Err(Attempt::Retry(SourceError::Unavailable(format!("{}: HTTP {code}", self.cfg.url))))
            }
            Err(ureq::Error::Status(code, _)) => {
                return Err(Attempt::Fatal(SourceError::Unavailable(format!("{}: HTTP {code}", self.cfg.url))))
            }
            Err(ureq::Error::Transport(t)) if is_timeout(&t) => return Err(Attempt::Retry(SourceError::Timeout)),
            Err(ureq::Error::Transport(t)) => {
                return Err(Attempt::Retry(SourceError::Unavailable(format!("{}: {t}", self.cfg.url))))
            }
        };
        let mut bytes = Vec::new();
        if let Err(e) = response.into_reader().read_to_end(&mut bytes) {
            return Err(if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                Attempt::Retry(SourceError::Timeout)
            } else {
                Attempt::Retry(SourceError::Unavailable(format!("{}: {e}", self.cfg.url)))
            });
        }
        let mut reader = bytes.as_slice();
        let (header, records) = match read_batch(&mut reader) {
            Ok(Some(frame)) => frame,
            Ok(None) => return Err(Attempt::Fatal(SourceError::MalformedResponse("empty response body".into()))),
            Err(e) => return Err(Attempt::Fatal(SourceError::MalformedResponse(e.to_string()))),
        };
        if !reader.is_empty() {
            return Err(Attempt::Fatal(SourceError::MalformedResponse(format!(
                "{} unexpected bytes after the response batch",
                reader.len()
            ))));
        }
        embeddings_from_response(batch, self.embed_dim, &header, records).map_err(Attempt::Fatal)
    }

    fn request(&self, batch: &Latents) -> Result<Embeddings, SourceError> {
        let body = encode_batch(batch, None, 0).map_err(|e| SourceError::MalformedResponse(e.to_string()))?;
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&body, batch) {
                Ok(e) => return Ok(e),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= self.cfg.retries => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("remote generator attempt {} failed: {e}; retrying", attempt + 1);
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

impl Generator for RemoteSource {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn generate_batch(&self, latents: &Latents) -> Result<Embeddings, SourceError> {
        let mut out = Embeddings::with_capacity(self.embed_dim, latents.len());
        for batch in batches(latents, self.cfg.batch_size) {
            out.extend(&self.request(&batch)?).expect("validated dimension");
        }
        Ok(out)
    }
}
