//! Run configuration: a nested key-value TOML file with full defaults, so
//! every subcommand also works without a config file.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub simulate: SimulateConfig,
    pub bench: BenchConfig,
    pub viz: VizConfig,
    pub span: SpanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: "out".into(),
            simulate: SimulateConfig::default(),
            bench: BenchConfig::default(),
            viz: VizConfig::default(),
            span: SpanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub policies: Vec<String>,
    pub total_capacity: usize,
    pub cascades: Vec<usize>,
    pub sink_size: usize,
    pub ema_gamma: f64,
    pub context_len: usize,
    pub trials: usize,
    pub heavy_weight: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            policies: vec![
                "sliding_window".into(),
                "streaming_llm_sink".into(),
                "cascade_no_selection".into(),
                "cascade_full".into(),
            ],
            total_capacity: 1024,
            cascades: vec![1, 2, 4, 8, 16],
            sink_size: 4,
            ema_gamma: 0.9999,
            context_len: 15_360,
            trials: 100,
            heavy_weight: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub cache_tokens: usize,
    pub cache_capacity: usize,
    pub dim: usize,
    pub runs: usize,
    pub warmup: usize,
    pub per_op_capacities: Vec<usize>,
    pub per_op_pushes: usize,
    pub prefill_seq_len: usize,
    pub prefill_strides: Vec<usize>,
    pub prefill_capacity: usize,
    pub prefill_sink: usize,
    pub prefill_cascades: usize,
    pub prefill_dim: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cache_tokens: 16_384,
            cache_capacity: 16_384,
            dim: 64,
            runs: 5,
            warmup: 2,
            per_op_capacities: vec![16, 16_384],
            per_op_pushes: 400_000,
            prefill_seq_len: 16_384,
            prefill_strides: vec![1, 256, 1024, 4096],
            prefill_capacity: 2048,
            prefill_sink: 64,
            prefill_cascades: 4,
            prefill_dim: 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VizConfig {
    pub seq_len: usize,
    pub total_capacity: usize,
    pub cascades: Vec<usize>,
    pub sink_size: usize,
    pub stride: usize,
}

impl Default for VizConfig {
    fn default() -> Self {
        Self {
            seq_len: 2048,
            total_capacity: 512,
            cascades: vec![1, 4],
            sink_size: 2,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpanConfig {
    pub total_capacity: usize,
    pub cascades: Vec<usize>,
    pub context_len: u64,
}

impl Default for SpanConfig {
    fn default() -> Self {
        Self {
            total_capacity: 4096,
            cascades: vec![1, 2, 4, 8, 16],
            context_len: 32_768,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
