//! The sweep and aggregate CSV formats.
//!
//! Sweep files carry one data row per run in grid order, and end with a
//! `# complete rows=N` trailer; a missing trailer marks an aborted sweep
//! and downstream aggregation refuses such files. Fields never need
//! quoting, and float formatting is the shortest round-trip form, so files
//! are byte-reproducible.

use std::str::FromStr;

use anyhow::{bail, Context};

use bottleneck_core::metrics::{AggregateRow, PhiSample, RunResult};
use bottleneck_core::types::Variant;

pub const SWEEP_HEADER: &str = "variant,kappa,p_f,p_b,dmaxmax,seed,turns,drained_free,\
drained_blocked,direction_changes,phi,episode_count,mean_blocked_drains_per_episode";

pub const AGGREGATE_HEADER: &str = "variant,dmaxmax,kappa,mean_phi,n_combos";

pub fn sweep_row(r: &RunResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.params.variant,
        r.params.kappa,
        r.params.p_f,
        r.params.p_b,
        r.params.dmaxmax,
        r.seed,
        r.params.turns_target,
        r.drained_free,
        r.drained_blocked,
        r.direction_changes,
        r.phi,
        r.episode_count,
        r.mean_blocked_drains_per_episode,
    )
}

pub fn trailer(rows: u64) -> String {
    format!("# complete rows={rows}")
}

/// Parsed sweep file: the φ samples and whether the completion trailer was
/// present with a matching row count.
pub struct SweepFile {
    pub samples: Vec<PhiSample>,
    pub complete: bool,
}

pub fn parse_sweep_csv(text: &str) -> anyhow::Result<SweepFile> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == SWEEP_HEADER => {}
        Some(other) => bail!("unexpected sweep header: {other}"),
        None => bail!("empty sweep file"),
    }

    let mut samples = Vec::new();
    let mut complete = false;
    for (lineno, line) in lines.enumerate() {
        if let Some(rest) = line.strip_prefix("# complete rows=") {
            let declared: u64 = rest.trim().parse().context("trailer row count")?;
            if declared != samples.len() as u64 {
                bail!("trailer declares {declared} rows, file has {}", samples.len());
            }
            complete = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            bail!("line {}: expected 13 fields, got {}", lineno + 2, fields.len());
        }
        let parse_f = |i: usize| -> anyhow::Result<f64> {
            f64::from_str(fields[i]).with_context(|| format!("line {}, field {}", lineno + 2, i))
        };
        samples.push(PhiSample {
            variant: fields[0]
                .parse::<Variant>()
                .map_err(|e| anyhow::anyhow!("line {}: {e}", lineno + 2))?,
            kappa: parse_f(1)?,
            p_f: parse_f(2)?,
            p_b: parse_f(3)?,
            dmaxmax: fields[4].parse().with_context(|| format!("line {}", lineno + 2))?,
            phi: parse_f(10)?,
        });
    }
    Ok(SweepFile { samples, complete })
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.variant,
            r.dmaxmax,
            r.kappa(),
            r.mean_phi,
            r.n_combos
        ));
    }
    out
}
