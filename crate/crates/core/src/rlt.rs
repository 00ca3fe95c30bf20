//! Static-patch detection, pruning and run-length computation.
//!
//! Two temporally adjacent tubelets at the same spatial slot are *static*
//! when the L1 distance between the first frame-crop of the earlier tubelet
//! and the last frame-crop of the later one is strictly below `tau`. Static
//! tubelets are dropped; every survivor carries the number of slots its run
//! covers. The first temporal slot is always kept.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RltError};
use crate::tensor::{
    crop_chunks, extract_patches, normalize, GridDims, NormalizationParams, PatchGrid, TubeletConfig, VideoDims,
    VideoTensor,
};

/// Default difference threshold.
pub const DEFAULT_TAU: f64 = 0.1;

/// How the L1 distance between two frame-crops is reduced to a scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffMetric {
    /// Sum of absolute differences divided by `C * D_x * D_y`.
    #[default]
    MeanAbs,
    /// Plain sum of absolute differences.
    SumAbs,
}

impl DiffMetric {
    pub fn code(self) -> u8 {
        match self {
            DiffMetric::MeanAbs => 0,
            DiffMetric::SumAbs => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DiffMetric::MeanAbs),
            1 => Some(DiffMetric::SumAbs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DiffMetric::MeanAbs => "mean",
            DiffMetric::SumAbs => "sum",
        }
    }
}

impl fmt::Display for DiffMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiffMetric {
    type Err = RltError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "mean_abs" => Ok(DiffMetric::MeanAbs),
            "sum" | "sum_abs" => Ok(DiffMetric::SumAbs),
            other => Err(RltError::usage(format!(
                "unknown metric {other:?} (expected mean or sum)"
            ))),
        }
    }
}

/// Nonnegative difference threshold `tau`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(RltError::usage(format!(
                "threshold must be finite and nonnegative, got {tau}"
            )));
        }
        Ok(Self(tau))
    }

    /// Sentinel that treats every pair after the first slot as static.
    pub fn infinite() -> Self {
        Self(f64::INFINITY)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Self(DEFAULT_TAU)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = RltError;

    fn try_from(v: f64) -> Result<Self> {
        if v == f64::INFINITY {
            Ok(Self::infinite())
        } else {
            Self::new(v)
        }
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// Retention grid over tubelet slots; `true` means the token is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticMask {
    grid: GridDims,
    bits: Vec<bool>,
}

impl StaticMask {
    /// Wraps raw bits in slot order. Only the length is checked here;
    /// [`StaticMask::validate`] checks the first-slot invariant.
    pub fn from_bits(grid: GridDims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.num_slots() {
            return Err(RltError::usage(format!(
                "mask has {} bits, grid has {} slots",
                bits.len(),
                grid.num_slots()
            )));
        }
        Ok(Self { grid, bits })
    }

    pub fn grid(&self) -> GridDims {
        self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn retained(&self, x: usize, y: usize, t: usize) -> bool {
        self.bits[self.grid.slot_index(x, y, t)]
    }

    pub fn retained_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn column(&self, x: usize, y: usize) -> Vec<bool> {
        (0..self.grid.grid_t).map(|t| self.retained(x, y, t)).collect()
    }

    /// Every spatial slot must be retained at `t = 0`.
    pub fn validate(&self) -> Result<()> {
        let first = &self.bits[..self.grid.spatial()];
        if let Some(pos) = first.iter().position(|b| !b) {
            return Err(RltError::Contract(format!(
                "slot ({}, {}, 0) is pruned; the first temporal slot must be retained",
                pos % self.grid.grid_x,
                pos / self.grid.grid_x
            )));
        }
        Ok(())
    }
}

/// Run length per slot in tubelet units; `0` marks a pruned slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLengths {
    grid: GridDims,
    lengths: Vec<u32>,
}

impl RunLengths {
    pub fn grid(&self) -> GridDims {
        self.grid
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.lengths
    }

    pub fn get(&self, x: usize, y: usize, t: usize) -> Option<u32> {
        match self.lengths[self.grid.slot_index(x, y, t)] {
            0 => None,
            l => Some(l),
        }
    }
}

/// Pairwise differences between adjacent slots. Entry `(x, y, t)` compares
/// slot `t - 1` with slot `t`; entries at `t = 0` are `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceGrid {
    grid: GridDims,
    metric: DiffMetric,
    diffs: Vec<f64>,
}

impl DifferenceGrid {
    pub fn compute(grid: &PatchGrid, metric: DiffMetric) -> Self {
        let dims = grid.grid();
        let cfg = grid.config();
        let spatial = dims.spatial();
        let crop_len = cfg.crop_len(grid.channels());
        let mut diffs = vec![f64::INFINITY; dims.num_slots()];
        for (slot, d) in diffs.iter_mut().enumerate().skip(spatial) {
            let prev = grid.patch_at(slot - spatial);
            *d = reduce(metric, l1_first_vs_last(prev, grid.patch_at(slot), cfg), crop_len);
        }
        Self {
            grid: dims,
            metric,
            diffs,
        }
    }

    /// Same values as [`DifferenceGrid::compute`] on the normalized tubelet
    /// grid, read straight from the source video. Normalization and
    /// accumulation order match, so the results are bit-identical.
    pub fn from_video(video: &VideoTensor, settings: &TokenizerSettings) -> Result<Self> {
        let d = video.dims();
        let cfg = settings.config;
        let g = cfg.validate_for(d)?;
        video.ensure_finite()?;
        settings.norm.check_channels(d.channels)?;
        let spatial = g.spatial();
        let crop_len = cfg.crop_len(d.channels);
        let mut diffs = vec![f64::INFINITY; g.num_slots()];
        let mut acc = vec![0.0f64; spatial];
        for t in 1..g.grid_t {
            acc.fill(0.0);
            for c in 0..d.channels {
                let (m, s) = (settings.norm.mean()[c], settings.norm.std()[c]);
                let earlier = video.plane(c, (t - 1) * cfg.tubelet_t);
                let later = video.plane(c, t * cfg.tubelet_t + cfg.tubelet_t - 1);
                for (h, (a, b)) in earlier
                    .chunks_exact(d.width)
                    .zip(later.chunks_exact(d.width))
                    .enumerate()
                {
                    let row = h / cfg.patch_y * g.grid_x;
                    for (cell, (pa, pb)) in acc[row..row + g.grid_x]
                        .iter_mut()
                        .zip(a.chunks_exact(cfg.patch_x).zip(b.chunks_exact(cfg.patch_x)))
                    {
                        for (&p, &q) in pa.iter().zip(pb) {
                            let (p, q) = ((p - m) / s, (q - m) / s);
                            *cell += (p as f64 - q as f64).abs();
                        }
                    }
                }
            }
            for (out, &sum) in diffs[t * spatial..(t + 1) * spatial].iter_mut().zip(&acc) {
                *out = reduce(settings.metric, sum, crop_len);
            }
        }
        Ok(Self {
            grid: g,
            metric: settings.metric,
            diffs,
        })
    }

    pub fn grid(&self) -> GridDims {
        self.grid
    }

    pub fn metric(&self) -> DiffMetric {
        self.metric
    }

    pub fn values(&self) -> &[f64] {
        &self.diffs
    }

    /// Retained iff `diff >= tau`; a difference exactly at `tau` is not static.
    pub fn mask(&self, tau: Threshold) -> StaticMask {
        let tau = tau.value();
        let bits = self.diffs.iter().map(|&d| d >= tau).collect();
        StaticMask { grid: self.grid, bits }
    }

    pub fn retained_count(&self, tau: Threshold) -> usize {
        let tau = tau.value();
        self.diffs.iter().filter(|&&d| d >= tau).count()
    }
}

#[inline]
fn reduce(metric: DiffMetric, sum: f64, crop_len: usize) -> f64 {
    match metric {
        DiffMetric::MeanAbs => sum / crop_len as f64,
        DiffMetric::SumAbs => sum,
    }
}

/// Sum of `|earlier[first crop] - later[last crop]|`.
#[inline]
fn l1_first_vs_last(earlier: &[f32], later: &[f32], cfg: TubeletConfig) -> f64 {
    let mut sum = 0.0f64;
    for (a, b) in crop_chunks(earlier, cfg, 0).zip(crop_chunks(later, cfg, cfg.tubelet_t - 1)) {
        for (&p, &q) in a.iter().zip(b) {
            sum += (p as f64 - q as f64).abs();
        }
    }
    sum
}

/// Distance between slot `t_prev` and `t_next = t_prev + 1` at `(x, y)`.
pub fn patch_difference(
    grid: &PatchGrid,
    x: usize,
    y: usize,
    t_prev: usize,
    t_next: usize,
    metric: DiffMetric,
) -> Result<f64> {
    if t_next != t_prev + 1 {
        return Err(RltError::usage(format!(
            "patch_difference compares adjacent slots, got t_prev={t_prev}, t_next={t_next}"
        )));
    }
    let earlier = grid.patch(x, y, t_prev)?;
    let later = grid.patch(x, y, t_next)?;
    let cfg = grid.config();
    Ok(reduce(
        metric,
        l1_first_vs_last(earlier, later, cfg),
        cfg.crop_len(grid.channels()),
    ))
}

pub fn compute_static_mask(grid: &PatchGrid, tau: Threshold, metric: DiffMetric) -> StaticMask {
    DifferenceGrid::compute(grid, metric).mask(tau)
}

/// Distance (in slots) from each retained slot to the next retained slot in
/// its column, or to the end of the clip.
pub fn compute_run_lengths(mask: &StaticMask) -> Result<RunLengths> {
    mask.validate()?;
    let g = mask.grid;
    let spatial = g.spatial();
    let mut lengths = vec![0u32; g.num_slots()];
    for col in 0..spatial {
        let mut next = g.grid_t;
        for t in (0..g.grid_t).rev() {
            let slot = t * spatial + col;
            if mask.bits[slot] {
                lengths[slot] = (next - t) as u32;
                next = t;
            }
        }
    }
    Ok(RunLengths { grid: g, lengths })
}

/// Everything needed to reproduce a token sequence from its source video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerSettings {
    pub config: TubeletConfig,
    pub norm: NormalizationParams,
    pub tau: Threshold,
    pub metric: DiffMetric,
    /// Registry name of the strategy that produced the sequence.
    pub strategy: String,
    /// Fraction of tokens removed by random masking (0 when unused).
    pub mask_ratio: f64,
    pub seed: u64,
    /// Source samples were 8-bit and scaled by 1/255 on ingestion.
    pub source_u8: bool,
}

impl Default for TokenizerSettings {
    fn default() -> Self {
        Self {
            config: TubeletConfig::default(),
            norm: NormalizationParams::imagenet(),
            tau: Threshold::default(),
            metric: DiffMetric::MeanAbs,
            strategy: "rlt".into(),
            mask_ratio: 0.0,
            seed: 0,
            source_u8: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub dims: VideoDims,
    pub settings: TokenizerSettings,
}

impl SequenceMeta {
    pub fn grid(&self) -> Result<GridDims> {
        self.settings.config.validate_for(self.dims)
    }

    pub fn patch_len(&self) -> usize {
        self.settings.config.patch_len(self.dims.channels)
    }
}

/// Slot position and run length of one retained token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenPos {
    pub x: u32,
    pub y: u32,
    pub t: u32,
    pub run_length: u32,
}

impl TokenPos {
    fn order_key(&self) -> (u32, u32, u32) {
        (self.t, self.y, self.x)
    }
}

/// Retained tokens in `(t, y, x)` order with their normalized patch payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    meta: SequenceMeta,
    tokens: Vec<TokenPos>,
    payload: Vec<f32>,
}

impl TokenSequence {
    /// Validates payload size, slot bounds, run-length bounds and ordering.
    pub fn from_parts(meta: SequenceMeta, tokens: Vec<TokenPos>, payload: Vec<f32>) -> Result<Self> {
        let grid = meta.grid()?;
        let plen = meta.patch_len();
        if payload.len() != tokens.len() * plen {
            return Err(RltError::Integrity(format!(
                "{} tokens of {plen} values need {} payload values, got {}",
                tokens.len(),
                tokens.len() * plen,
                payload.len()
            )));
        }
        for (i, tok) in tokens.iter().enumerate() {
            if !grid.contains(tok.x as usize, tok.y as usize, tok.t as usize) {
                return Err(RltError::Integrity(format!(
                    "token {i} at ({}, {}, {}) is outside the grid",
                    tok.x, tok.y, tok.t
                )));
            }
            if tok.run_length == 0 || tok.run_length as usize > grid.grid_t - tok.t as usize {
                return Err(RltError::Integrity(format!(
                    "token {i} has run length {} at t={} (grid_t={})",
                    tok.run_length, tok.t, grid.grid_t
                )));
            }
            if i > 0 && tokens[i - 1].order_key() >= tok.order_key() {
                return Err(RltError::Integrity(format!(
                    "token {i} breaks canonical (t, y, x) order"
                )));
            }
        }
        Ok(Self { meta, tokens, payload })
    }

    /// All slots of `grid`, run length 1.
    pub fn standard(grid: &PatchGrid, settings: TokenizerSettings) -> Self {
        let g = grid.grid();
        let mut tokens = Vec::with_capacity(g.num_slots());
        for t in 0..g.grid_t {
            for y in 0..g.grid_y {
                for x in 0..g.grid_x {
                    tokens.push(TokenPos {
                        x: x as u32,
                        y: y as u32,
                        t: t as u32,
                        run_length: 1,
                    });
                }
            }
        }
        Self {
            meta: SequenceMeta {
                dims: grid.source_dims(),
                settings,
            },
            tokens,
            payload: grid.raw().to_vec(),
        }
    }

    /// Gathers the slots retained by `lengths`.
    pub fn gather(grid: &PatchGrid, lengths: &RunLengths, settings: TokenizerSettings) -> Self {
        let g = grid.grid();
        let plen = grid.patch_len();
        let mut tokens = Vec::new();
        let mut payload = Vec::new();
        for (slot, &len) in lengths.lengths.iter().enumerate() {
            if len == 0 {
                continue;
            }
            let x = slot % g.grid_x;
            let y = (slot / g.grid_x) % g.grid_y;
            let t = slot / g.spatial();
            tokens.push(TokenPos {
                x: x as u32,
                y: y as u32,
                t: t as u32,
                run_length: len,
            });
            payload.extend_from_slice(&grid.raw()[slot * plen..(slot + 1) * plen]);
        }
        Self {
            meta: SequenceMeta {
                dims: grid.source_dims(),
                settings,
            },
            tokens,
            payload,
        }
    }

    /// [`TokenSequence::gather`] without materializing the normalized
    /// tubelet grid: retained patches are normalized as they are copied.
    pub fn gather_from_video(video: &VideoTensor, lengths: &RunLengths, settings: TokenizerSettings) -> Self {
        let d = video.dims();
        let g = lengths.grid;
        let cfg = settings.config;
        let plen = cfg.patch_len(d.channels);
        let kept = lengths.lengths.iter().filter(|&&l| l > 0).count();
        let mut tokens = Vec::with_capacity(kept);
        let mut payload = Vec::with_capacity(kept * plen);
        for (slot, &len) in lengths.lengths.iter().enumerate() {
            if len == 0 {
                continue;
            }
            let x = slot % g.grid_x;
            let y = (slot / g.grid_x) % g.grid_y;
            let t = slot / g.spatial();
            tokens.push(TokenPos {
                x: x as u32,
                y: y as u32,
                t: t as u32,
                run_length: len,
            });
            for c in 0..d.channels {
                let (m, s) = (settings.norm.mean()[c], settings.norm.std()[c]);
                for dt in 0..cfg.tubelet_t {
                    let plane = video.plane(c, t * cfg.tubelet_t + dt);
                    for dy in 0..cfg.patch_y {
                        let start = (y * cfg.patch_y + dy) * d.width + x * cfg.patch_x;
                        payload.extend(plane[start..start + cfg.patch_x].iter().map(|&v| (v - m) / s));
                    }
                }
            }
        }
        Self {
            meta: SequenceMeta { dims: d, settings },
            tokens,
            payload,
        }
    }

    pub fn meta(&self) -> &SequenceMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut SequenceMeta {
        &mut self.meta
    }

    pub fn settings(&self) -> &TokenizerSettings {
        &self.meta.settings
    }

    pub fn grid(&self) -> GridDims {
        self.meta.grid().expect("sequence metadata validated on construction")
    }

    pub fn tokens(&self) -> &[TokenPos] {
        &self.tokens
    }

    pub fn payload(&self) -> &[f32] {
        &self.payload
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn patch_len(&self) -> usize {
        self.meta.patch_len()
    }

    pub fn patch(&self, i: usize) -> &[f32] {
        let n = self.patch_len();
        &self.payload[i * n..(i + 1) * n]
    }

    /// `N_P`, the token count of standard tokenization.
    pub fn full_count(&self) -> usize {
        self.grid().num_slots()
    }

    /// Sum of run lengths per spatial column, indexed `y * grid_x + x`.
    pub fn column_length_sums(&self) -> Vec<u64> {
        let g = self.grid();
        let mut sums = vec![0u64; g.spatial()];
        for tok in &self.tokens {
            sums[tok.y as usize * g.grid_x + tok.x as usize] += tok.run_length as u64;
        }
        sums
    }
}

/// Normalize, split into tubelets, drop static tubelets, attach run lengths.
pub fn tokenize(
    video: &VideoTensor,
    config: TubeletConfig,
    params: &NormalizationParams,
    tau: Threshold,
    metric: DiffMetric,
) -> Result<TokenSequence> {
    let settings = TokenizerSettings {
        config,
        norm: params.clone(),
        tau,
        metric,
        ..TokenizerSettings::default()
    };
    tokenize_with(video, settings)
}

/// [`tokenize`] driven by a full settings record (strategy fields are carried
/// through untouched).
pub fn tokenize_with(video: &VideoTensor, settings: TokenizerSettings) -> Result<TokenSequence> {
    let mask = DifferenceGrid::from_video(video, &settings)?.mask(settings.tau);
    let lengths = compute_run_lengths(&mask)?;
    Ok(TokenSequence::gather_from_video(video, &lengths, settings))
}

pub(crate) fn normalized_grid(video: &VideoTensor, settings: &TokenizerSettings) -> Result<PatchGrid> {
    settings.config.validate_for(video.dims())?;
    let normalized = normalize(video, &settings.norm)?;
    extract_patches(&normalized, settings.config)
}

/// `1 - N_P' / N_P`.
pub fn reduction_ratio(seq: &TokenSequence) -> f64 {
    1.0 - seq.len() as f64 / seq.full_count() as f64
}

/// Number of tokens a uniform random mask at `ratio` removes from `n`.
pub fn random_drop_count(n: usize, ratio: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(RltError::usage(format!(
            "masking ratio must lie in [0, 1), got {ratio}"
        )));
    }
    // Products like 0.72 * 100 land a hair under the integer in binary.
    let k = (ratio * n as f64 + 1e-9).floor() as usize;
    Ok(k.min(n.saturating_sub(1)))
}

/// Uniformly removes `floor(ratio * len)` tokens; survivors keep their order
/// and run lengths. Deterministic given `seed`.
pub fn random_mask(seq: &TokenSequence, ratio: f64, seed: u64) -> Result<TokenSequence> {
    let n = seq.len();
    let drop = random_drop_count(n, ratio)?;
    let mut meta = seq.meta.clone();
    meta.settings.mask_ratio = ratio;
    meta.settings.seed = seed;
    if drop == 0 {
        return Ok(TokenSequence {
            meta,
            tokens: seq.tokens.clone(),
            payload: seq.payload.clone(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; n];
    for i in index::sample(&mut rng, n, drop) {
        keep[i] = false;
    }
    let plen = seq.patch_len();
    let mut tokens = Vec::with_capacity(n - drop);
    let mut payload = Vec::with_capacity((n - drop) * plen);
    for (i, tok) in seq.tokens.iter().enumerate() {
        if keep[i] {
            tokens.push(*tok);
            payload.extend_from_slice(seq.patch(i));
        }
    }
    Ok(TokenSequence { meta, tokens, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{extract_patches, VideoDims};
    use rand::Rng;

    fn grid_from_columns(columns: &[&[bool]], grid_t: usize) -> StaticMask {
        let g = GridDims {
            grid_x: columns.len(),
            grid_y: 1,
            grid_t,
        };
        let mut bits = vec![false; g.num_slots()];
        for (x, col) in columns.iter().enumerate() {
            for (t, &b) in col.iter().enumerate() {
                bits[g.slot_index(x, 0, t)] = b;
            }
        }
        StaticMask::from_bits(g, bits).unwrap()
    }

    #[test]
    fn run_lengths_hand_example() {
        let col = [true, false, false, true, false, true, true, true];
        let mask = grid_from_columns(&[&col], 8);
        let rl = compute_run_lengths(&mask).unwrap();
        let got: Vec<_> = (0..8).map(|t| rl.get(0, 0, t)).collect();
        assert_eq!(got, vec![Some(3), None, None, Some(2), None, Some(1), Some(1), Some(1)]);
    }

    #[test]
    fn run_lengths_all_retained_and_fully_static() {
        let mask = grid_from_columns(&[&[true; 5], &[true, false, false, false, false]], 5);
        let rl = compute_run_lengths(&mask).unwrap();
        assert!((0..5).all(|t| rl.get(0, 0, t) == Some(1)));
        assert_eq!(rl.get(1, 0, 0), Some(5));
        assert!((1..5).all(|t| rl.get(1, 0, t).is_none()));
    }

    #[test]
    fn run_lengths_reject_pruned_first_slot() {
        let mask = grid_from_columns(&[&[false, true]], 2);
        assert!(matches!(compute_run_lengths(&mask), Err(RltError::Contract(_))));
    }

    fn uniform_tubelets(a: f32, b: f32) -> PatchGrid {
        let v = VideoTensor::from_fn(VideoDims::new(3, 4, 4, 4), |_, t, _, _| if t < 2 { a } else { b }).unwrap();
        extract_patches(&v, TubeletConfig::square(4, 2)).unwrap()
    }

    #[test]
    fn identical_tubelets_have_zero_difference() {
        let g = uniform_tubelets(0.3, 0.3);
        assert_eq!(patch_difference(&g, 0, 0, 0, 1, DiffMetric::MeanAbs).unwrap(), 0.0);
    }

    #[test]
    fn uniform_shift_difference() {
        let g = uniform_tubelets(0.25, 0.45);
        let mean = patch_difference(&g, 0, 0, 0, 1, DiffMetric::MeanAbs).unwrap();
        assert!((mean - 0.2).abs() < 1e-6, "{mean}");
        let sum = patch_difference(&g, 0, 0, 0, 1, DiffMetric::SumAbs).unwrap();
        assert!((sum - 0.2 * 48.0).abs() < 1e-4, "{sum}");
    }

    #[test]
    fn difference_requires_adjacent_slots() {
        let g = uniform_tubelets(0.0, 0.0);
        assert!(matches!(
            patch_difference(&g, 0, 0, 0, 0, DiffMetric::MeanAbs),
            Err(RltError::Usage(_))
        ));
    }

    #[test]
    fn difference_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let dims = VideoDims::new(3, 6, 8, 8);
        let v = VideoTensor::from_fn(dims, |_, _, _, _| rng.random::<f32>()).unwrap();
        let cfg = TubeletConfig::square(4, 3);
        let g = extract_patches(&v, cfg).unwrap();
        for (x, y) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let mut acc = 0.0f64;
            for c in 0..3 {
                for h in 0..4 {
                    for w in 0..4 {
                        // earlier slot 0 frame 0 vs later slot 1 frame 5
                        let p = v.get(c, 0, y * 4 + h, x * 4 + w) as f64;
                        let q = v.get(c, 5, y * 4 + h, x * 4 + w) as f64;
                        acc += (p - q).abs();
                    }
                }
            }
            let got = patch_difference(&g, x, y, 0, 1, DiffMetric::MeanAbs).unwrap();
            assert!((got - acc / 48.0).abs() < 1e-6);
        }
    }

    #[test]
    fn strict_threshold_keeps_everything_that_changes() {
        let v = VideoTensor::from_fn(VideoDims::new(1, 4, 2, 2), |_, t, _, _| t as f32 * 0.01).unwrap();
        let g = extract_patches(&v, TubeletConfig::square(2, 1)).unwrap();
        let mask = compute_static_mask(&g, Threshold::new(0.0).unwrap(), DiffMetric::MeanAbs);
        assert!(mask.bits().iter().all(|&b| b));
    }

    #[test]
    fn threshold_validation() {
        assert!(Threshold::new(-0.1).is_err());
        assert!(Threshold::new(f64::NAN).is_err());
        assert!(Threshold::new(f64::INFINITY).is_err());
        assert_eq!(Threshold::infinite().value(), f64::INFINITY);
    }

    #[test]
    fn drop_count_matches_floor() {
        assert_eq!(random_drop_count(100, 0.72).unwrap(), 72);
        assert_eq!(random_drop_count(100, 0.0).unwrap(), 0);
        assert_eq!(random_drop_count(7, 0.5).unwrap(), 3);
        assert!(random_drop_count(10, 1.0).is_err());
        assert!(random_drop_count(10, -0.1).is_err());
    }
}
