//! Attention-mask emission: replay a policy, reconstruct the mask, write it
//! as a binary PGM image plus a CSV mirror.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use cascade_kv::cascade::CascadeConfig;
use cascade_kv::mask::reconstruct_mask;
use cascade_kv::workloads::{replay_trace, PolicyKind, ScoreProfile, SyntheticStream};

use crate::config::VizConfig;

pub fn cmd_viz(cfg: &VizConfig, seed: u64, out_dir: &Path) -> Result<()> {
    if cfg.seq_len == 0 {
        bail!("viz.seq_len must be positive: an empty trace has no mask");
    }
    fs::create_dir_all(out_dir).context("creating output directory")?;
    let mut stdout = std::io::stdout().lock();
    for &n in &cfg.cascades {
        let mut config = CascadeConfig::new(cfg.total_capacity, n, cfg.sink_size);
        config.selection_enabled = false;
        let stream = SyntheticStream {
            length: cfg.seq_len,
            profile: ScoreProfile::UniformRandom,
            seed,
        };
        let (trace, _) = replay_trace(PolicyKind::CascadeNoSelection, &config, &stream)?;
        if trace.is_empty() {
            bail!("replay produced an empty trace; nothing to visualize");
        }
        let mask = reconstruct_mask(&trace, cfg.seq_len, cfg.stride)?;

        let trace_path = out_dir.join(format!("trace_n{n}.csv"));
        trace.write_csv(BufWriter::new(fs::File::create(&trace_path)?))?;

        let pgm_path = out_dir.join(format!("mask_n{n}.pgm"));
        let pgm = fs::File::create(&pgm_path)?;
        mask.write_pgm(BufWriter::new(pgm))?;

        let csv_path = out_dir.join(format!("mask_n{n}.csv"));
        let csv = fs::File::create(&csv_path)?;
        mask.write_csv(BufWriter::new(csv))?;

        writeln!(
            stdout,
            "N={n}: wrote {} and {} ({}x{})",
            pgm_path.display(),
            csv_path.display(),
            cfg.seq_len,
            cfg.seq_len
        )?;
    }
    Ok(())
}
