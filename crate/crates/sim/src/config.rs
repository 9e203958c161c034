//! Sweep grid specification, loadable from a TOML file.
//!
//! Every key mirrors a field name; omitted keys fall back to the full
//! evaluation grid: κ ∈ {0, 2, ..., 100}%, p_f ∈ {0, 10, ..., 50}%,
//! p_b ∈ {12, 25, 50, 100}%, dmaxmax ∈ {4, 6, ..., 20}, both CAV variants,
//! 50,000 turns per run.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use bottleneck_core::types::{Variant, DEFAULT_COMM_RANGE, DEFAULT_TURNS};

use crate::DEFAULT_BASE_SEED;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub kappa_values: Vec<f64>,
    pub p_f_values: Vec<f64>,
    pub p_b_values: Vec<f64>,
    pub dmaxmax_values: Vec<u8>,
    pub variants: Vec<Variant>,
    pub base_seed: u64,
    pub turns_target: u64,
    pub comm_range: u32,
    /// Runs per grid entry; each repeat gets its own derived seed.
    pub repeats: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            kappa_values: (0..=100).step_by(2).map(|k| k as f64 / 100.0).collect(),
            p_f_values: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            p_b_values: vec![0.12, 0.25, 0.5, 1.0],
            dmaxmax_values: (4..=20).step_by(2).collect(),
            variants: vec![Variant::Counting, Variant::NonCounting],
            base_seed: DEFAULT_BASE_SEED,
            turns_target: DEFAULT_TURNS,
            comm_range: DEFAULT_COMM_RANGE,
            repeats: 1,
        }
    }
}

impl GridSpec {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading grid config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
