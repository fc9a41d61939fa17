//! Latency microbenchmarks: cumulative cache-op time for ring vs
//! concatenation, per-op insert cost across capacities, and prefill wall
//! time by stride.

use std::fs;
use std::hint::black_box;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cascade_kv::cascade::{CascadeCache, CascadeConfig};
use cascade_kv::prefill::{prefill, PrefillConfig, ToyModel};
use cascade_kv::ring::{CacheEntry, RingStore};
use cascade_kv::AttentionParams;

use crate::concat::ConcatKvCache;
use crate::config::BenchConfig;
use crate::timing::{measure, median_iqr, TimingSample};

fn random_rows(tokens: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..tokens)
        .map(|_| (0..dim).map(|_| rng.random::<f32>()).collect())
        .collect()
}

/// Cumulative add-op time pushing `tokens` entries into a cascading cache.
pub fn cascade_add_time(
    tokens: usize,
    capacity: usize,
    cascades: usize,
    sink: usize,
    dim: usize,
    rows: &[Vec<f32>],
) -> f64 {
    let mut config = CascadeConfig::new(capacity, cascades, sink);
    config.selection_enabled = false;
    let mut cache = CascadeCache::<f32>::new(config, dim).unwrap();
    let mut total = 0u128;
    for (origin, row) in rows.iter().enumerate().take(tokens) {
        let entry = CacheEntry::new(row.clone(), row.clone(), 0.0, origin as u64);
        let start = Instant::now();
        black_box(cache.add_token(entry).unwrap());
        total += start.elapsed().as_nanos();
        cache.clear_trace();
    }
    total as f64
}

/// Cumulative add-op time for the concatenation baseline over the same stream.
pub fn concat_add_time(
    tokens: usize,
    capacity: usize,
    sink: usize,
    dim: usize,
    rows: &[Vec<f32>],
) -> f64 {
    let mut cache = ConcatKvCache::new(capacity, sink, dim);
    let mut total = 0u128;
    for row in rows.iter().take(tokens) {
        let start = Instant::now();
        cache.push(black_box(row), black_box(row));
        total += start.elapsed().as_nanos();
    }
    black_box(cache.window_origin_checksum());
    total as f64
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub bench: String,
    pub param: String,
    pub runs: usize,
    pub median_ns: f64,
    pub iqr_ns: f64,
    pub note: String,
}

/// Ring (1 and 4 cascades) vs concatenation, cumulative cache-op time.
pub fn bench_cache_ops(cfg: &BenchConfig, seed: u64) -> Vec<BenchRow> {
    let rows = random_rows(cfg.cache_tokens, cfg.dim, seed);
    let mut out = Vec::new();
    let mut run = |bench: &str, f: &mut dyn FnMut() -> f64| {
        let mut samples = Vec::with_capacity(cfg.runs);
        for _ in 0..cfg.warmup {
            f();
        }
        for _ in 0..cfg.runs {
            samples.push(f());
        }
        let (median_ns, iqr_ns) = median_iqr(samples);
        out.push(BenchRow {
            bench: "cache_add_cumulative".into(),
            param: bench.into(),
            runs: cfg.runs,
            median_ns,
            iqr_ns,
            note: format!(
                "{} tokens into capacity {}",
                cfg.cache_tokens, cfg.cache_capacity
            ),
        });
    };
    run("ring_n1", &mut || {
        cascade_add_time(cfg.cache_tokens, cfg.cache_capacity, 1, 0, cfg.dim, &rows)
    });
    run("ring_n4", &mut || {
        cascade_add_time(cfg.cache_tokens, cfg.cache_capacity, 4, 0, cfg.dim, &rows)
    });
    run("concat", &mut || {
        concat_add_time(cfg.cache_tokens, cfg.cache_capacity, 0, cfg.dim, &rows)
    });
    out
}

/// Per-op insert time at different capacities; a flat profile demonstrates
/// O(1) insertion.
pub fn bench_per_op(cfg: &BenchConfig, seed: u64) -> Vec<BenchRow> {
    let rows = random_rows(4096, cfg.dim, seed ^ 0xBEEF);
    let mut out = Vec::new();
    for &capacity in &cfg.per_op_capacities {
        let sample: TimingSample = measure(cfg.runs, cfg.warmup, || {
            let mut store = RingStore::<f32>::new(capacity, cfg.dim);
            let mut origin = 0u64;
            for _ in 0..cfg.per_op_pushes {
                let row = &rows[(origin as usize) & 4095];
                black_box(
                    store
                        .push_overwrite(CacheEntry::new(row.clone(), row.clone(), 0.0, origin))
                        .unwrap(),
                );
                origin += 1;
            }
        });
        out.push(BenchRow {
            bench: "ring_push_per_op".into(),
            param: format!("capacity_{capacity}"),
            runs: cfg.runs,
            median_ns: sample.median_ns / cfg.per_op_pushes as f64,
            iqr_ns: sample.iqr_ns / cfg.per_op_pushes as f64,
            note: format!("{} pushes per run", cfg.per_op_pushes),
        });
    }
    out
}

/// Prefill wall time per stride.
pub fn bench_prefill(cfg: &BenchConfig, seed: u64, runs: usize) -> Vec<BenchRow> {
    let attn = AttentionParams::new(cfg.prefill_dim, 1, 1).unwrap();
    let cache_config =
        CascadeConfig::new(cfg.prefill_capacity, cfg.prefill_cascades, cfg.prefill_sink);
    let model = ToyModel::<f32>::random(&attn, 1, seed);
    let inputs = model.random_inputs(cfg.prefill_seq_len, seed ^ 1);
    let mut out = Vec::new();
    for &stride in &cfg.prefill_strides {
        let config = PrefillConfig {
            stride,
            layers: 1,
            cache_config: cache_config.clone(),
            attn: attn.clone(),
        };
        let sample = measure(runs, 0, || {
            black_box(prefill(&config, &inputs, &model).unwrap());
        });
        out.push(BenchRow {
            bench: "prefill_wall".into(),
            param: format!("stride_{stride}"),
            runs,
            median_ns: sample.median_ns,
            iqr_ns: sample.iqr_ns,
            note: format!(
                "S={} |C|={} N={} d={}",
                cfg.prefill_seq_len, cfg.prefill_capacity, cfg.prefill_cascades, cfg.prefill_dim
            ),
        });
    }
    out
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("bench,param,runs,median_ns,iqr_ns,note\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.0},{:.0},{}\n",
            r.bench, r.param, r.runs, r.median_ns, r.iqr_ns, r.note
        ));
    }
    out
}

pub fn cmd_bench(cfg: &BenchConfig, seed: u64, out_dir: &Path) -> Result<()> {
    let mut rows = bench_cache_ops(cfg, seed);
    rows.extend(bench_per_op(cfg, seed));
    rows.extend(bench_prefill(cfg, seed, cfg.runs));
    fs::create_dir_all(out_dir).context("creating output directory")?;
    fs::write(out_dir.join("bench.csv"), rows_to_csv(&rows))?;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:<22} {:<16} {:>14} {:>12}",
        "bench", "param", "median_ms", "iqr_ms"
    )?;
    for r in &rows {
        writeln!(
            stdout,
            "{:<22} {:<16} {:>14.6} {:>12.6}",
            r.bench,
            r.param,
            r.median_ns / 1e6,
            r.iqr_ns / 1e6
        )?;
    }
    let ring = rows
        .iter()
        .find(|r| r.param == "ring_n1")
        .unwrap()
        .median_ns;
    let concat = rows.iter().find(|r| r.param == "concat").unwrap().median_ns;
    writeln!(
        stdout,
        "concat/ring cumulative ratio: {:.1}x",
        concat / ring
    )?;
    writeln!(stdout, "wrote {}", out_dir.join("bench.csv").display())?;
    Ok(())
}
