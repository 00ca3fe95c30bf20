//! Dataset-level token-reduction reports and threshold sweeps.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, RltError};
use crate::io::load_video;
use crate::rlt::{DiffMetric, DifferenceGrid, Threshold, TokenSequence, TokenizerSettings};
use crate::strategy::TokenizerRegistry;
use crate::tensor::VideoTensor;

/// Something that can be loaded as a video for batch analysis.
pub trait ClipSource: Send + Sync {
    fn id(&self) -> String;
    fn load(&self) -> Result<VideoTensor>;

    /// The video plus whether its samples were 8-bit.
    fn load_with_source(&self) -> Result<(VideoTensor, bool)> {
        Ok((self.load()?, false))
    }
}

pub struct MemoryClip {
    pub id: String,
    pub video: VideoTensor,
}

impl ClipSource for MemoryClip {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn load(&self) -> Result<VideoTensor> {
        Ok(self.video.clone())
    }
}

/// RLTV1 file or image directory.
pub struct FileClip {
    pub path: PathBuf,
    pub pattern: String,
}

impl ClipSource for FileClip {
    fn id(&self) -> String {
        self.path.display().to_string()
    }

    fn load(&self) -> Result<VideoTensor> {
        load_video(&self.path, &self.pattern).map(|(v, _)| v)
    }

    fn load_with_source(&self) -> Result<(VideoTensor, bool)> {
        load_video(&self.path, &self.pattern)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoRecord {
    pub id: String,
    /// `N_P`
    pub tokens_full: usize,
    /// `N_P'`
    pub tokens_retained: usize,
    pub reduction: f64,
    pub grid_x: usize,
    pub grid_y: usize,
    pub grid_t: usize,
    pub tau: f64,
    pub metric: DiffMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedClip {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub videos: usize,
    pub mean_reduction: f64,
    pub median_reduction: f64,
    pub tokens_before: u64,
    pub tokens_after: u64,
    /// `1 - tokens_after / tokens_before` over the whole corpus.
    pub total_reduction: f64,
    /// Ten equal-width buckets over `[0, 1)`.
    pub histogram: Vec<HistogramBucket>,
}

impl Aggregates {
    pub const BUCKETS: usize = 10;

    pub fn from_records(records: &[VideoRecord]) -> Option<Self> {
        if records.is_empty() {
            return None;
        }
        let n = records.len();
        let mut reductions: Vec<f64> = records.iter().map(|r| r.reduction).collect();
        reductions.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            reductions[n / 2]
        } else {
            (reductions[n / 2 - 1] + reductions[n / 2]) / 2.0
        };
        let mut histogram: Vec<HistogramBucket> = (0..Self::BUCKETS)
            .map(|i| HistogramBucket {
                lo: i as f64 / Self::BUCKETS as f64,
                hi: (i + 1) as f64 / Self::BUCKETS as f64,
                count: 0,
            })
            .collect();
        for r in &reductions {
            let b = ((r * Self::BUCKETS as f64) as usize).min(Self::BUCKETS - 1);
            histogram[b].count += 1;
        }
        let before: u64 = records.iter().map(|r| r.tokens_full as u64).sum();
        let after: u64 = records.iter().map(|r| r.tokens_retained as u64).sum();
        Some(Self {
            videos: n,
            mean_reduction: reductions.iter().sum::<f64>() / n as f64,
            median_reduction: median,
            tokens_before: before,
            tokens_after: after,
            total_reduction: 1.0 - after as f64 / before as f64,
            histogram,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    pub records: Vec<VideoRecord>,
    pub skipped: Vec<SkippedClip>,
    pub aggregates: Option<Aggregates>,
}

impl ReductionReport {
    /// One JSON object per video, then one per skipped clip, then the
    /// aggregate line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::json!({"type": "video", "record": r}).to_string());
            out.push('\n');
        }
        for s in &self.skipped {
            out.push_str(&serde_json::json!({"type": "skipped", "record": s}).to_string());
            out.push('\n');
        }
        if let Some(a) = &self.aggregates {
            out.push_str(&serde_json::json!({"type": "aggregate", "record": a}).to_string());
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<40} {:>10} {:>10} {:>9}  grid\n",
            "video", "N_P", "N_P'", "reduction"
        );
        for r in &self.records {
            out.push_str(&format!(
                "{:<40} {:>10} {:>10} {:>8.2}%  {}x{}x{}\n",
                r.id,
                r.tokens_full,
                r.tokens_retained,
                100.0 * r.reduction,
                r.grid_x,
                r.grid_y,
                r.grid_t
            ));
        }
        for s in &self.skipped {
            out.push_str(&format!("{:<40} skipped: {}\n", s.id, s.reason));
        }
        if let Some(a) = &self.aggregates {
            out.push_str(&format!(
                "total: {} videos, {} -> {} tokens ({:.2}% fewer); mean {:.2}%, median {:.2}%\n",
                a.videos,
                a.tokens_before,
                a.tokens_after,
                100.0 * a.total_reduction,
                100.0 * a.mean_reduction,
                100.0 * a.median_reduction
            ));
        }
        out
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RltError::usage(format!("cannot start worker pool: {e}")))
}

fn differences(clip: &dyn ClipSource, settings: &TokenizerSettings) -> Result<DifferenceGrid> {
    DifferenceGrid::from_video(&clip.load()?, settings)
}

/// Per-video RLT token counts at `settings.tau`. Clips that fail to load or
/// tokenize are listed as skipped. Record order follows input order
/// regardless of `workers`.
pub fn analyze<C: ClipSource>(clips: &[C], settings: &TokenizerSettings, workers: usize) -> Result<ReductionReport> {
    if clips.is_empty() {
        return Err(RltError::usage("analysis needs at least one video"));
    }
    let results: Vec<(String, Result<VideoRecord>)> = pool(workers)?.install(|| {
        clips
            .par_iter()
            .map(|clip| {
                let id = clip.id();
                let rec = differences(clip, settings).map(|diffs| {
                    let g = diffs.grid();
                    let full = g.num_slots();
                    let kept = diffs.retained_count(settings.tau);
                    VideoRecord {
                        id: id.clone(),
                        tokens_full: full,
                        tokens_retained: kept,
                        reduction: 1.0 - kept as f64 / full as f64,
                        grid_x: g.grid_x,
                        grid_y: g.grid_y,
                        grid_t: g.grid_t,
                        tau: settings.tau.value(),
                        metric: settings.metric,
                    }
                });
                (id, rec)
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => skipped.push(SkippedClip {
                id,
                reason: e.to_string(),
            }),
        }
    }
    let aggregates = Aggregates::from_records(&records);
    Ok(ReductionReport {
        records,
        skipped,
        aggregates,
    })
}

/// Tokenizes every clip with the strategy named in `settings`. One result
/// per clip, in input order regardless of `workers`.
pub fn tokenize_clips<C: ClipSource>(
    clips: &[C],
    registry: &TokenizerRegistry,
    settings: &TokenizerSettings,
    workers: usize,
) -> Result<Vec<Result<TokenSequence>>> {
    let tokenizer = registry.get(&settings.strategy)?;
    Ok(pool(workers)?.install(|| {
        clips
            .par_iter()
            .map(|clip| {
                let (video, source_u8) = clip.load_with_source()?;
                let settings = TokenizerSettings {
                    source_u8,
                    ..settings.clone()
                };
                tokenizer.tokenize(&video, &settings)
            })
            .collect()
    }))
}

/// Default threshold grid for sweeps.
pub const DEFAULT_TAU_GRID: [f64; 9] = [0.0, 0.01, 0.025, 0.05, 0.075, 0.1, 0.2, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub mean_reduction: f64,
    pub mean_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepClip {
    pub id: String,
    pub tokens_full: usize,
    /// Retained count at each threshold of the grid.
    pub retained: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub metric: DiffMetric,
    pub points: Vec<SweepPoint>,
    pub clips: Vec<SweepClip>,
    pub skipped: Vec<SkippedClip>,
}

impl SweepReport {
    /// One JSON object per threshold.
    pub fn to_json_lines(&self) -> String {
        self.points
            .iter()
            .map(|p| {
                let mut line = serde_json::to_value(p).expect("serializable");
                if p.tau.is_infinite() {
                    line["tau"] = serde_json::Value::String("inf".into());
                }
                line["metric"] = serde_json::Value::String(self.metric.name().into());
                line.to_string() + "\n"
            })
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:>8} {:>14} {:>10}\n", "tau", "mean tokens", "reduction");
        for p in &self.points {
            out.push_str(&format!(
                "{:>8} {:>14.2} {:>9.2}%\n",
                format!("{}", p.tau),
                p.mean_tokens,
                100.0 * p.mean_reduction
            ));
        }
        out
    }
}

/// Mean retained-token count and reduction for each threshold of an
/// ascending grid. Differences are computed once per clip.
pub fn sweep_tau<C: ClipSource>(
    clips: &[C],
    settings: &TokenizerSettings,
    taus: &[Threshold],
    workers: usize,
) -> Result<SweepReport> {
    if clips.is_empty() {
        return Err(RltError::usage("sweep needs at least one video"));
    }
    if taus.is_empty() {
        return Err(RltError::usage("sweep needs at least one threshold"));
    }
    if taus.windows(2).any(|w| w[0].value() > w[1].value()) {
        return Err(RltError::usage("threshold grid must be sorted ascending"));
    }
    let results: Vec<(String, Result<SweepClip>)> = pool(workers)?.install(|| {
        clips
            .par_iter()
            .map(|clip| {
                let id = clip.id();
                let r = differences(clip, settings).map(|diffs| SweepClip {
                    id: id.clone(),
                    tokens_full: diffs.values().len(),
                    retained: taus.iter().map(|&t| diffs.retained_count(t)).collect(),
                });
                (id, r)
            })
            .collect()
    });
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(c) => done.push(c),
            Err(e) => skipped.push(SkippedClip {
                id,
                reason: e.to_string(),
            }),
        }
    }
    let n = done.len().max(1) as f64;
    let points = taus
        .iter()
        .enumerate()
        .map(|(i, tau)| SweepPoint {
            tau: tau.value(),
            mean_tokens: done.iter().map(|c| c.retained[i] as f64).sum::<f64>() / n,
            mean_reduction: done
                .iter()
                .map(|c| 1.0 - c.retained[i] as f64 / c.tokens_full as f64)
                .sum::<f64>()
                / n,
        })
        .collect();
    Ok(SweepReport {
        metric: settings.metric,
        points,
        clips: done,
        skipped,
    })
}
