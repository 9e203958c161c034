//! Grid enumeration and parallel sweep execution.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Context;

use bottleneck_core::engine;
use bottleneck_core::rng::derive_run_seed;
use bottleneck_core::types::{ParamError, ScenarioParams};

use crate::config::GridSpec;
use crate::csvio::{self, SWEEP_HEADER};
use crate::eventlog;

/// Cartesian product of the grid in documented order: variant-major, then
/// dmaxmax, p_f, p_b, kappa (and repeats innermost). Every entry's seed is
/// a pure hash of `(base_seed, combo_index, repeat)`.
pub fn grid(spec: &GridSpec) -> Result<Vec<ScenarioParams>, ParamError> {
    let mut entries = Vec::new();
    let mut index = 0u64;
    for &variant in &spec.variants {
        for &dmaxmax in &spec.dmaxmax_values {
            for &p_f in &spec.p_f_values {
                for &p_b in &spec.p_b_values {
                    for &kappa in &spec.kappa_values {
                        for rep in 0..spec.repeats.max(1) {
                            let params = ScenarioParams {
                                kappa,
                                p_f,
                                p_b,
                                dmaxmax,
                                variant,
                                comm_range: spec.comm_range,
                                turns_target: spec.turns_target,
                                seed: derive_run_seed(spec.base_seed, index, rep),
                            };
                            entries.push(params.validated()?);
                        }
                        index += 1;
                    }
                }
            }
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy)]
pub struct SweepReport {
    pub rows: u64,
    pub wall: Duration,
}

/// Execute every grid entry and write one CSV row per entry, in grid order
/// regardless of completion order, followed by the completion trailer.
///
/// Workers pull entries from a shared counter; each owns its run's state,
/// and a single writer serializes the rows. Output is byte-identical for
/// any worker count. With `log_dir` set, each run also writes its full
/// event log as `run_NNNNN.jsonl` in that directory.
pub fn run_sweep<W: Write>(
    spec: &GridSpec,
    workers: usize,
    out: &mut W,
    log_dir: Option<&Path>,
) -> anyhow::Result<SweepReport> {
    let started = Instant::now();
    let entries = grid(spec).map_err(|e| anyhow::anyhow!("invalid grid: {e}"))?;
    if let Some(dir) = log_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    writeln!(out, "{SWEEP_HEADER}")?;

    let workers = if workers == 0 {
        thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    };
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, anyhow::Result<String>)>();

    thread::scope(|scope| -> anyhow::Result<()> {
        for _ in 0..workers.min(entries.len().max(1)) {
            let tx = tx.clone();
            let next = &next;
            let entries = &entries;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= entries.len() {
                    break;
                }
                let row = execute_entry(entries[i], i, log_dir);
                if tx.send((i, row)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut next_to_write = 0usize;
        for (i, row) in rx {
            pending.insert(i, row?);
            while let Some(row) = pending.remove(&next_to_write) {
                writeln!(out, "{row}")?;
                next_to_write += 1;
            }
        }
        anyhow::ensure!(
            next_to_write == entries.len(),
            "sweep aborted after {next_to_write} of {} rows",
            entries.len()
        );
        Ok(())
    })?;

    writeln!(out, "{}", csvio::trailer(entries.len() as u64))?;
    out.flush()?;
    Ok(SweepReport { rows: entries.len() as u64, wall: started.elapsed() })
}

fn execute_entry(
    params: ScenarioParams,
    index: usize,
    log_dir: Option<&Path>,
) -> anyhow::Result<String> {
    let result = match log_dir {
        None => engine::run(params),
        Some(dir) => {
            let path = dir.join(format!("run_{index:05}.jsonl"));
            let file = fs::File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            let (result, writer) = eventlog::write_log(BufWriter::new(file), params)?;
            writer.into_inner().map_err(|e| e.into_error())?;
            result
        }
    };
    Ok(csvio::sweep_row(&result))
}

/// Convenience wrapper writing to a file path.
pub fn run_sweep_to_path(
    spec: &GridSpec,
    workers: usize,
    path: &Path,
    log_dir: Option<&Path>,
) -> anyhow::Result<SweepReport> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    run_sweep(spec, workers, &mut writer, log_dir)
}
