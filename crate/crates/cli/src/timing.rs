//! Tiny timing harness: warmup runs discarded, median and interquartile
//! range reported. Medians because single-shot wall timings are noisy.

use std::time::Instant;

#[derive(Debug, Clone, Copy)]
pub struct TimingSample {
    pub median_ns: f64,
    pub iqr_ns: f64,
    pub runs: usize,
}

impl TimingSample {
    pub fn median_ms(&self) -> f64 {
        self.median_ns / 1e6
    }
}

pub fn median_iqr(mut values: Vec<f64>) -> (f64, f64) {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let q = |frac: f64| -> f64 {
        let pos = frac * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi {
            values[lo]
        } else {
            values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
        }
    };
    (q(0.5), q(0.75) - q(0.25))
}

/// Time `body` `runs` times after `warmup` discarded runs.
pub fn measure<F: FnMut()>(runs: usize, warmup: usize, mut body: F) -> TimingSample {
    assert!(runs >= 1);
    for _ in 0..warmup {
        body();
    }
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        body();
        samples.push(start.elapsed().as_nanos() as f64);
    }
    let (median_ns, iqr_ns) = median_iqr(samples);
    TimingSample {
        median_ns,
        iqr_ns,
        runs,
    }
}
