//! Span and sparsity table for a range of cascade counts.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use cascade_kv::cascade::{expected_retrieval_accuracy, sparsity, token_span, CascadeConfig};

use crate::config::SpanConfig;

pub fn span_table_csv(cfg: &SpanConfig) -> Result<String> {
    let mut out =
        String::from("capacity,N,span,overall_sparsity,window_sparsity,expected_accuracy\n");
    for &n in &cfg.cascades {
        let config = CascadeConfig::new(cfg.total_capacity, n, 0);
        let span = token_span(&config)?;
        let (overall, window) = sparsity(&config, cfg.context_len.max(cfg.total_capacity as u64))?;
        let accuracy = expected_retrieval_accuracy(span, cfg.context_len);
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6}\n",
            cfg.total_capacity, n, span, overall, window, accuracy
        ));
    }
    Ok(out)
}

pub fn cmd_span(cfg: &SpanConfig, out_dir: &Path) -> Result<()> {
    let csv = span_table_csv(cfg)?;
    fs::create_dir_all(out_dir).context("creating output directory")?;
    fs::write(out_dir.join("span.csv"), &csv)?;
    let mut stdout = std::io::stdout().lock();
    for line in csv.lines() {
        writeln!(stdout, "{}", line.replace(',', "\t"))?;
    }
    writeln!(stdout, "wrote {}", out_dir.join("span.csv").display())?;
    Ok(())
}
