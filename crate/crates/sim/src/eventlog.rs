//! JSON-lines event log: header, one turn event per line, summary trailer.
//!
//! A log is a pure function of `(params, seed)`, so `replay` re-executes
//! the header's parameters and verifies the stored bytes exactly.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use bottleneck_core::engine::{self, EventSink, TurnEvent};
use bottleneck_core::metrics::RunResult;
use bottleneck_core::types::ScenarioParams;

pub const SCHEMA: &str = "bottleneck-eventlog/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub params: ScenarioParams,
    pub seed: u64,
}

/// Streams events as JSON lines. IO errors are latched and surfaced by
/// `finish`, since the engine's sink interface is infallible.
pub struct JsonlSink<W: Write> {
    writer: W,
    error: Option<io::Error>,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(writer: W) -> Self {
        JsonlSink { writer, error: None }
    }

    pub fn write_header(&mut self, params: &ScenarioParams) -> io::Result<()> {
        let header = LogHeader {
            schema: SCHEMA.to_string(),
            params: *params,
            seed: params.seed,
        };
        serde_json::to_writer(&mut self.writer, &header)?;
        self.writer.write_all(b"\n")
    }

    pub fn finish(mut self, result: &RunResult) -> io::Result<W> {
        if let Some(err) = self.error {
            return Err(err);
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            summary: &'a RunResult,
        }
        serde_json::to_writer(&mut self.writer, &Summary { summary: result })?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(self.writer)
    }
}

impl<W: Write> EventSink for JsonlSink<W> {
    fn on_event(&mut self, event: &TurnEvent) {
        if self.error.is_some() {
            return;
        }
        let outcome = serde_json::to_writer(&mut self.writer, event)
            .map_err(io::Error::from)
            .and_then(|_| self.writer.write_all(b"\n"));
        if let Err(err) = outcome {
            self.error = Some(err);
        }
    }
}

/// Run `params` and stream the full log into `writer`.
pub fn write_log<W: Write>(writer: W, params: ScenarioParams) -> io::Result<(RunResult, W)> {
    let mut sink = JsonlSink::new(writer);
    sink.write_header(&params)?;
    let result = engine::run_with_sink(params, &mut sink);
    let writer = sink.finish(&result)?;
    Ok((result, writer))
}

/// Re-execute the run recorded in the log at `path` and verify the file
/// byte-for-byte.
pub fn replay(path: &Path) -> anyhow::Result<RunResult> {
    let stored = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let first_line = stored
        .split(|&b| b == b'\n')
        .next()
        .filter(|l| !l.is_empty())
        .context("log file is empty")?;
    let header: LogHeader = serde_json::from_slice(first_line).context("parsing log header")?;
    if header.schema != SCHEMA {
        bail!("unsupported log schema {}", header.schema);
    }
    let params = header
        .params
        .validated()
        .map_err(|e| anyhow::anyhow!("invalid params in log header: {e}"))?;

    let (result, regenerated) = write_log(Vec::with_capacity(stored.len()), params)?;
    if regenerated != stored {
        let line = stored
            .split(|&b| b == b'\n')
            .zip(regenerated.split(|&b| b == b'\n'))
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or_else(|| stored.split(|&b| b == b'\n').count().min(regenerated.split(|&b| b == b'\n').count()));
        bail!("log diverges from replay at line {line}");
    }
    Ok(result)
}
