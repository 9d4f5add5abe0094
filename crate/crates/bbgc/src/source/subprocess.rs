use std::io::{BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use bbgc_core::{Embeddings, Generator, Latents, SourceError};
use serde::{Deserialize, Serialize};

use super::{batches, embeddings_from_response};
use crate::error::Result;
use crate::store::{encode_batch, read_batch, RawRecord, StoreHeader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubprocessConfig {
    /// Program followed by its arguments; `--latent-dim L --embed-dim D` is appended.
    pub command: Vec<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_batch() -> usize {
    4096
}

fn default_timeout() -> f64 {
    300.0
}

type Frame = crate::error::Result<Option<(StoreHeader, Vec<RawRecord>)>>;

#[derive(Debug)]
struct Running {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    responses: Receiver<Frame>,
    failed: Option<SourceError>,
}

/// A child process speaking the framed store protocol. Requests go out on the
/// caller's thread while a reader thread drains the child's stdout, so a child
/// that answers before reading its whole request cannot deadlock the pipe.
#[derive(Debug)]
pub struct SubprocessSource {
    latent_dim: usize,
    embed_dim: usize,
    batch_size: usize,
    timeout: Duration,
    state: Mutex<Running>,
}

impl SubprocessSource {
    pub fn spawn(cfg: SubprocessConfig, latent_dim: usize, embed_dim: usize) -> Result<Self> {
        let (program, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| SourceError::Unavailable("subprocess command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .arg("--latent-dim")
            .arg(latent_dim.to_string())
            .arg("--embed-dim")
            .arg(embed_dim.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| SourceError::Unavailable(format!("cannot start {program}: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("bbgc-subprocess-reader".into())
            .spawn(move || {
                let mut r = BufReader::new(stdout);
                loop {
                    let frame = read_batch(&mut r);
                    let stop = !matches!(frame, Ok(Some(_)));
                    if tx.send(frame).is_err() || stop {
                        break;
                    }
                }
            })
            .map_err(|e| SourceError::Unavailable(format!("cannot start reader thread: {e}")))?;
        Ok(Self {
            latent_dim,
            embed_dim,
            batch_size: cfg.batch_size.max(1),
            timeout: Duration::from_secs_f64(cfg.timeout_secs.max(0.001)),
            state: Mutex::new(Running { child, stdin: Some(stdin), responses: rx, failed: None }),
        })
    }

    fn exchange(&self, st: &mut Running, batch: &Latents) -> std::result::Result<Embeddings, SourceError> {
        let request = encode_batch(batch, None, 0).map_err(|e| SourceError::MalformedResponse(e.to_string()))?;
        let write = match st.stdin.as_mut() {
            Some(w) => w.write_all(&request).and_then(|_| w.flush()),
            None => Err(std::io::ErrorKind::BrokenPipe.into()),
        };
        if let Err(e) = write {
            return Err(SourceError::Unavailable(format!("{}: {e}", exit_status(&mut st.child))));
        }
        match st.responses.recv_timeout(self.timeout) {
            Ok(Ok(Some((header, records)))) => embeddings_from_response(batch, self.embed_dim, &header, records),
            Ok(Ok(None)) | Err(RecvTimeoutError::Disconnected) => {
                Err(SourceError::Unavailable(format!("{} before answering", exit_status(&mut st.child))))
            }
            Ok(Err(e)) => Err(SourceError::MalformedResponse(e.to_string())),
            Err(RecvTimeoutError::Timeout) => {
                let _ = st.child.kill();
                Err(SourceError::Timeout)
            }
        }
    }
}

fn exit_status(child: &mut Child) -> String {
    match child.try_wait() {
        Ok(Some(status)) => format!("generator process exited ({status})"),
        _ => "generator process closed its output".into(),
    }
}

impl Generator for SubprocessSource {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn generate_batch(&self, latents: &Latents) -> std::result::Result<Embeddings, SourceError> {
        let mut st = self.state.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(e) = &st.failed {
            return Err(e.clone());
        }
        let mut out = Embeddings::with_capacity(self.embed_dim, latents.len());
        for batch in batches(latents, self.batch_size) {
            match self.exchange(&mut st, &batch) {
                Ok(e) => out.extend(&e).expect("validated dimension"),
                Err(e) => {
                    // The stream position is unknown after a failure; refuse further use.
                    st.failed = Some(e.clone());
                    return Err(e);
                }
            }
        }
        Ok(out)
    }
}

impl Drop for SubprocessSource {
    fn drop(&mut self) {
        let st = self.state.get_mut().unwrap_or_else(|p| p.into_inner());
        // Closing stdin asks the child to exit; kill it if it lingers.
        drop(st.stdin.take());
        for _ in 0..100 {
            if matches!(st.child.try_wait(), Ok(Some(_))) {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = st.child.kill();
        let _ = st.child.wait();
    }
}
