//! Tokenizer timing, optionally against a toy forward pass over the same
//! tokens.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Result, RltError};
use crate::refmodel::{ModelSpec, ToyTransformer};
use crate::rlt::{tokenize_with, TokenizerSettings};
use crate::tensor::{VideoDims, VideoTensor};
use crate::testkit::{gen_video, SyntheticKind, SyntheticSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    /// Square spatial sizes to time.
    pub sizes: Vec<usize>,
    pub channels: usize,
    pub frames: usize,
    pub runs: usize,
    pub warmup: usize,
    pub seed: u64,
    pub settings: TokenizerSettings,
    pub with_forward: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            sizes: vec![112, 224, 448],
            channels: 3,
            frames: 16,
            runs: 20,
            warmup: 2,
            seed: 0,
            settings: TokenizerSettings::default(),
            with_forward: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchEntry {
    pub size: usize,
    pub dims: String,
    pub runs: usize,
    pub tokens_full: usize,
    pub tokens_retained: usize,
    pub tokenize_median_ms: f64,
    pub tokenize_min_ms: f64,
    pub tokens_per_sec: f64,
    pub forward_median_ms: Option<f64>,
    /// Median tokenize time over median forward time.
    pub tokenize_to_forward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub strategy: String,
    pub tau: f64,
    pub metric: String,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>6} {:>14} {:>8} {:>8} {:>12} {:>14} {:>12} {:>8}\n",
            "size", "dims", "N_P", "N_P'", "tok ms", "tokens/s", "fwd ms", "ratio"
        );
        for e in &self.entries {
            let fwd = e.forward_median_ms.map_or("-".to_string(), |v| format!("{v:.3}"));
            let ratio = e
                .tokenize_to_forward
                .map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
            out.push_str(&format!(
                "{:>6} {:>14} {:>8} {:>8} {:>12.3} {:>14.0} {:>12} {:>8}\n",
                e.size, e.dims, e.tokens_full, e.tokens_retained, e.tokenize_median_ms, e.tokens_per_sec, fwd, ratio
            ));
        }
        out
    }
}

pub fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Clip used for timing: mostly static regions with local changes.
pub fn bench_clip(dims: VideoDims, seed: u64) -> VideoTensor {
    gen_video(&SyntheticSpec::new(
        SyntheticKind::PatchJitter {
            block: 16,
            amplitude: 0.2,
        },
        dims,
        seed,
    ))
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let start = Instant::now();
    let out = f();
    (start.elapsed().as_secs_f64() * 1e3, out)
}

/// Times one video. Returns the entry for it.
pub fn bench_video(video: &VideoTensor, opts: &BenchOptions) -> Result<BenchEntry> {
    if opts.runs == 0 {
        return Err(RltError::usage("bench needs at least one run"));
    }
    let settings = opts.settings.clone();
    let seq = tokenize_with(video, settings.clone())?;
    let model = if opts.with_forward {
        Some(ToyTransformer::new(ModelSpec::for_sequence(&seq, opts.seed))?)
    } else {
        None
    };
    for _ in 0..opts.warmup {
        tokenize_with(video, settings.clone())?;
        if let Some(m) = &model {
            m.forward_single(&seq)?;
        }
    }
    let mut tok = Vec::with_capacity(opts.runs);
    let mut fwd = Vec::with_capacity(opts.runs);
    for _ in 0..opts.runs {
        let (ms, r) = time_ms(|| tokenize_with(video, settings.clone()));
        r?;
        tok.push(ms);
        if let Some(m) = &model {
            let (ms, r) = time_ms(|| m.forward_single(&seq));
            r?;
            fwd.push(ms);
        }
    }
    let tokenize_min_ms = tok.iter().copied().fold(f64::INFINITY, f64::min);
    let tokenize_median_ms = median(&mut tok);
    let forward_median_ms = model.as_ref().map(|_| median(&mut fwd));
    let d = video.dims();
    Ok(BenchEntry {
        size: d.height.max(d.width),
        dims: d.to_string(),
        runs: opts.runs,
        tokens_full: seq.full_count(),
        tokens_retained: seq.len(),
        tokenize_median_ms,
        tokenize_min_ms,
        tokens_per_sec: seq.full_count() as f64 / (tokenize_median_ms / 1e3),
        forward_median_ms,
        tokenize_to_forward: forward_median_ms.map(|f| tokenize_median_ms / f),
    })
}

/// Times synthetic clips at every size in `opts.sizes`.
pub fn run_bench(opts: &BenchOptions) -> Result<BenchReport> {
    if opts.sizes.is_empty() {
        return Err(RltError::usage("bench needs at least one size"));
    }
    let entries = opts
        .sizes
        .iter()
        .map(|&s| {
            let dims = VideoDims::new(opts.channels, opts.frames, s, s);
            bench_video(&bench_clip(dims, opts.seed), opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        strategy: opts.settings.strategy.clone(),
        tau: opts.settings.tau.value(),
        metric: opts.settings.metric.name().to_string(),
        entries,
    })
}
