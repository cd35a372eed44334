//! Request/response serving over a loaded catalog and a swappable model snapshot.

use std::io::{BufRead, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stitch::{checkpoint, stitch, ModelStore, PositionModels, StitchMode, StitchRequest};
use crate::types::{AssetCatalog, Query, StitchedAd};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServeRequest {
    pub page_url: String,
    pub query: String,
    #[serde(default)]
    pub mode: StitchMode,
    #[serde(default)]
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeResponse {
    pub request_id: String,
    pub ad: StitchedAd,
    /// Predicted probability per slot, T1..D2.
    pub scores: [Option<f64>; 5],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_micros: Option<u64>,
}

/// Error line of the network protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub request_id: String,
    pub error: String,
    pub message: String,
}

/// Control line of the network protocol, e.g. `{"command":"reload"}`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct Control {
    command: String,
}

pub struct Service {
    catalog: AssetCatalog,
    store: ModelStore,
    rng: Mutex<ChaCha8Rng>,
    trial_scale: f64,
    /// Report measured latency; off for byte-reproducible output.
    pub record_latency: bool,
    /// Where a reload command reads the next checkpoint from.
    pub checkpoint_path: Option<PathBuf>,
}

impl Service {
    pub fn new(catalog: AssetCatalog, models: PositionModels, seed: u64, trial_scale: f64) -> Self {
        Service {
            catalog,
            store: ModelStore::new(models),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            trial_scale,
            record_latency: true,
            checkpoint_path: None,
        }
    }

    pub fn serve(&self, req: &ServeRequest) -> Result<ServeResponse> {
        let start = Instant::now();
        let entry = self
            .catalog
            .get(&req.page_url)
            .ok_or_else(|| Error::NotFound(format!("page_url {}", req.page_url)))?;
        let rng_seed = match req.mode {
            StitchMode::Explore => {
                Some(self.rng.lock().unwrap_or_else(|e| e.into_inner()).random())
            }
            StitchMode::Exploit => None,
        };
        let models = self.store.snapshot();
        let query = Query::new(&req.query);
        let out = stitch(
            &models,
            &StitchRequest {
                query: &query,
                titles: &entry.titles,
                descriptions: &entry.descriptions,
                mode: req.mode,
                rng_seed,
                trial_scale: self.trial_scale,
            },
        )?;
        Ok(ServeResponse {
            request_id: req.request_id.clone(),
            ad: out.ad,
            scores: out.scores,
            latency_micros: self
                .record_latency
                .then(|| start.elapsed().as_micros() as u64),
        })
    }

    /// Swaps in new models; in-flight requests finish on the old snapshot.
    pub fn reload(&self, models: PositionModels) -> Result<()> {
        let current = self.store.snapshot();
        if models.hash_bits != current.hash_bits {
            return Err(Error::invalid(format!(
                "reloaded models use {} hash bits, serving uses {}",
                models.hash_bits, current.hash_bits
            )));
        }
        self.store.swap(models);
        Ok(())
    }

    pub fn reload_from(&self, path: &Path) -> Result<()> {
        self.reload(checkpoint::load(path)?)
    }

    pub fn models(&self) -> Arc<PositionModels> {
        self.store.snapshot()
    }

    /// Handles one protocol line and returns the line to send back.
    pub fn handle_line(&self, line: &str) -> String {
        if let Ok(c) = serde_json::from_str::<Control>(line) {
            return match (c.command.as_str(), &self.checkpoint_path) {
                ("reload", Some(path)) => match self.reload_from(path) {
                    Ok(()) => r#"{"reloaded":true}"#.to_string(),
                    Err(e) => error_line("", &e),
                },
                ("reload", None) => error_line(
                    "",
                    &Error::Config("no checkpoint path to reload from".into()),
                ),
                (other, _) => error_line("", &Error::invalid(format!("unknown command `{other}`"))),
            };
        }
        let req: ServeRequest = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => return error_line("", &Error::invalid(format!("bad request: {e}"))),
        };
        match self.serve(&req) {
            Ok(resp) => serde_json::to_string(&resp).expect("response serializes"),
            Err(e) => error_line(&req.request_id, &e),
        }
    }

    /// One request per input line, one response per output line; blank lines are skipped.
    pub fn serve_lines<R: BufRead, W: Write>(
        &self,
        input: R,
        mut output: W,
    ) -> std::io::Result<usize> {
        let mut n = 0;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            writeln!(output, "{}", self.handle_line(&line))?;
            output.flush()?;
            n += 1;
        }
        Ok(n)
    }

    /// Accepts connections forever, one thread per connection.
    pub fn serve_tcp(self: Arc<Self>, addr: impl ToSocketAddrs) -> Result<()> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::io("listen address", e))?;
        self.serve_listener(listener)
    }

    pub fn serve_listener(self: Arc<Self>, listener: TcpListener) -> Result<()> {
        for stream in listener.incoming() {
            let stream = stream.map_err(|e| Error::io("listen address", e))?;
            let service = Arc::clone(&self);
            std::thread::spawn(move || {
                let reader = match stream.try_clone() {
                    Ok(s) => std::io::BufReader::new(s),
                    Err(_) => return,
                };
                let _ = service.serve_lines(reader, stream);
            });
        }
        Ok(())
    }
}

fn error_line(request_id: &str, e: &Error) -> String {
    serde_json::to_string(&ErrorResponse {
        request_id: request_id.to_string(),
        error: e.kind().to_string(),
        message: e.to_string(),
    })
    .expect("error serializes")
}
