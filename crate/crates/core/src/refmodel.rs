//! A small seeded, forward-only vision transformer used to exercise
//! run-length token sequences end to end.
//!
//! Tokens are embedded as `E(patch) + pos[x, y, t] + len[l - 1]`, passed
//! through pre-norm transformer blocks whose attention is restricted to the
//! token's own example, normalized, mean-pooled per example and projected
//! to class logits.

use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RltError};
use crate::packing::{BlockDiagonalMask, MaskForm, PackedBatch};
use crate::rlt::{TokenPos, TokenSequence};
use crate::tensor::GridDims;

/// Everything needed to rebuild the weights bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub seed: u64,
    pub d_embed: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    /// Values per input patch (`C * D_x * D_y * D_t`).
    pub patch_dim: usize,
    pub grid: GridDims,
}

impl ModelSpec {
    /// Default toy dimensions for the given input geometry.
    pub fn toy(patch_dim: usize, grid: GridDims, seed: u64) -> Self {
        Self {
            seed,
            d_embed: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 4,
            num_classes: 10,
            patch_dim,
            grid,
        }
    }

    /// Spec matching the geometry of `seq`.
    pub fn for_sequence(seq: &TokenSequence, seed: u64) -> Self {
        Self::toy(seq.patch_len(), seq.grid(), seed)
    }

    fn validate(&self) -> Result<()> {
        if self.d_embed == 0 || self.heads == 0 || !self.d_embed.is_multiple_of(self.heads) {
            return Err(RltError::usage(format!(
                "d_embed {} must be a positive multiple of heads {}",
                self.d_embed, self.heads
            )));
        }
        if self.num_classes == 0 || self.patch_dim == 0 || self.mlp_ratio == 0 {
            return Err(RltError::usage("model dimensions must be positive"));
        }
        if self.grid.num_slots() == 0 {
            return Err(RltError::usage("model grid must be non-empty"));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("spec serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| RltError::parse(e.column() as u64, e.to_string()))
    }
}

#[derive(Debug, Clone)]
struct Linear {
    weight: Array2<f32>, // in x out
    bias: Array1<f32>,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let a = 1.0 / (fan_in as f32).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-a..a)),
            bias: Array1::from_shape_simple_fn(fan_out, || rng.random_range(-0.02..0.02)),
        }
    }

    fn forward(&self, x: ArrayView2<f32>) -> Array2<f32> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone)]
struct LayerNorm {
    gamma: Array1<f32>,
    beta: Array1<f32>,
}

impl LayerNorm {
    const EPS: f32 = 1e-5;

    fn new(d: usize) -> Self {
        Self {
            gamma: Array1::ones(d),
            beta: Array1::zeros(d),
        }
    }

    fn forward(&self, x: ArrayView2<f32>) -> Array2<f32> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            let n = row.len() as f32;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / n;
            let inv = 1.0 / (var + Self::EPS).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        out
    }
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

#[derive(Debug, Clone)]
struct Block {
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Linear patch projection `E`. Products are accumulated in f64 and
/// rounded once, since patch vectors can be long.
#[derive(Debug, Clone)]
pub struct PatchEmbedder {
    linear: Linear,
    weight64: Array2<f64>,
    bias64: Array1<f64>,
}

impl PatchEmbedder {
    fn new(linear: Linear) -> Self {
        Self {
            weight64: linear.weight.mapv(f64::from),
            bias64: linear.bias.mapv(f64::from),
            linear,
        }
    }

    pub fn weight(&self) -> &Array2<f32> {
        &self.linear.weight
    }

    pub fn bias(&self) -> &Array1<f32> {
        &self.linear.bias
    }

    fn project64(&self, patches: ArrayView2<f32>) -> Array2<f64> {
        patches.mapv(f64::from).dot(&self.weight64) + &self.bias64
    }

    pub fn project(&self, patches: ArrayView2<f32>) -> Array2<f32> {
        self.project64(patches).mapv(|v| v as f32)
    }
}

/// Learnable position table indexed by slot and length-bias table indexed
/// by `run_length - 1`.
#[derive(Debug, Clone)]
pub struct PositionalTables {
    grid: GridDims,
    spatial_temporal: Array2<f32>,
    length_bias: Array2<f32>,
}

impl PositionalTables {
    pub fn new(grid: GridDims, spatial_temporal: Array2<f32>, length_bias: Array2<f32>) -> Result<Self> {
        if spatial_temporal.nrows() != grid.num_slots() || length_bias.nrows() != grid.grid_t {
            return Err(RltError::usage(format!(
                "tables have {} / {} rows, grid needs {} / {}",
                spatial_temporal.nrows(),
                length_bias.nrows(),
                grid.num_slots(),
                grid.grid_t
            )));
        }
        if spatial_temporal.ncols() != length_bias.ncols() {
            return Err(RltError::usage("table widths differ"));
        }
        Ok(Self {
            grid,
            spatial_temporal,
            length_bias,
        })
    }

    pub fn zeros(grid: GridDims, d: usize) -> Self {
        Self {
            grid,
            spatial_temporal: Array2::zeros((grid.num_slots(), d)),
            length_bias: Array2::zeros((grid.grid_t, d)),
        }
    }

    pub fn grid(&self) -> GridDims {
        self.grid
    }

    pub fn spatial_temporal(&self) -> &Array2<f32> {
        &self.spatial_temporal
    }

    pub fn length_bias(&self) -> &Array2<f32> {
        &self.length_bias
    }

    fn check(&self, tok: &TokenPos, i: usize) -> Result<()> {
        let (x, y, t) = (tok.x as usize, tok.y as usize, tok.t as usize);
        if !self.grid.contains(x, y, t) {
            return Err(RltError::Contract(format!(
                "token {i} at ({x}, {y}, {t}) is outside the position table"
            )));
        }
        let l = tok.run_length as usize;
        if l == 0 || l > self.length_bias.nrows() {
            return Err(RltError::Contract(format!(
                "token {i} has run length {l}, length table covers 1..={} (length unit mismatch?)",
                self.length_bias.nrows()
            )));
        }
        Ok(())
    }
}

/// Adds `pos[x, y, t] + len[l - 1]` to already-projected rows.
fn embed_rows(
    embedder: &PatchEmbedder,
    tables: &PositionalTables,
    tokens: &[TokenPos],
    payload: &[f32],
) -> Result<Array2<f32>> {
    let d_in = embedder.linear.weight.nrows();
    if payload.len() != tokens.len() * d_in {
        return Err(RltError::usage(format!(
            "payload of {} values does not hold {} patches of {d_in}",
            payload.len(),
            tokens.len()
        )));
    }
    for (i, tok) in tokens.iter().enumerate() {
        tables.check(tok, i)?;
    }
    let patches = ArrayView2::from_shape((tokens.len(), d_in), payload).expect("shape checked");
    let mut out = embedder.project64(patches);
    for (mut row, tok) in out.rows_mut().into_iter().zip(tokens) {
        let slot = tables.grid.slot_index(tok.x as usize, tok.y as usize, tok.t as usize);
        let pos = tables.spatial_temporal.row(slot);
        let len = tables.length_bias.row(tok.run_length as usize - 1);
        for ((v, &p), &l) in row.iter_mut().zip(pos).zip(len) {
            *v += f64::from(p) + f64::from(l);
        }
    }
    Ok(out.mapv(|v| v as f32))
}

/// Per-token `E(patch) + pos[x, y, t] + len[l - 1]`.
pub fn embed(seq: &TokenSequence, embedder: &PatchEmbedder, tables: &PositionalTables) -> Result<Array2<f32>> {
    embed_rows(embedder, tables, seq.tokens(), seq.payload())
}

/// Which keys each query may see.
#[derive(Debug, Clone, Copy)]
pub enum Attention<'a> {
    /// Every token sees every token.
    Full,
    /// Only keys in the query's segment; segments given as cumulative offsets.
    Segments(&'a [usize]),
    /// Explicit mask; disallowed keys get `-inf` before the softmax.
    Dense(&'a BlockDiagonalMask),
}

/// Row-wise softmax, in place. Entries that are `-inf` end up exactly zero.
pub fn softmax_rows(scores: &mut Array2<f32>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row /= sum;
    }
}

#[derive(Debug, Clone)]
pub struct ToyTransformer {
    spec: ModelSpec,
    embedder: PatchEmbedder,
    tables: PositionalTables,
    blocks: Vec<Block>,
    norm: LayerNorm,
    head: Linear,
}

impl ToyTransformer {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.d_embed;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let embedder = PatchEmbedder::new(Linear::init(&mut rng, spec.patch_dim, d));
        let spatial_temporal = Array2::from_shape_simple_fn((spec.grid.num_slots(), d), || rng.random_range(-0.1..0.1));
        let length_bias = Array2::from_shape_simple_fn((spec.grid.grid_t, d), || rng.random_range(-0.1..0.1));
        let tables = PositionalTables::new(spec.grid, spatial_temporal, length_bias)?;
        let blocks = (0..spec.depth)
            .map(|_| Block {
                norm1: LayerNorm::new(d),
                qkv: Linear::init(&mut rng, d, 3 * d),
                proj: Linear::init(&mut rng, d, d),
                norm2: LayerNorm::new(d),
                fc1: Linear::init(&mut rng, d, spec.mlp_ratio * d),
                fc2: Linear::init(&mut rng, spec.mlp_ratio * d, d),
            })
            .collect();
        let head = Linear::init(&mut rng, d, spec.num_classes);
        Ok(Self {
            spec,
            embedder,
            tables,
            blocks,
            norm: LayerNorm::new(d),
            head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn embedder(&self) -> &PatchEmbedder {
        &self.embedder
    }

    pub fn tables(&self) -> &PositionalTables {
        &self.tables
    }

    /// Replaces the position/length tables (for structural experiments).
    pub fn set_tables(&mut self, tables: PositionalTables) -> Result<()> {
        if tables.grid != self.spec.grid || tables.spatial_temporal.ncols() != self.spec.d_embed {
            return Err(RltError::usage("tables do not match the model geometry"));
        }
        self.tables = tables;
        Ok(())
    }

    /// Softmaxed scores of head `h` for the queries and keys in `r`.
    fn head_probs(&self, qkv: &Array2<f32>, h: usize, r: &Range<usize>, mode: Attention<'_>) -> Array2<f32> {
        let (d, hd) = (self.spec.d_embed, self.spec.d_embed / self.spec.heads);
        let scale = 1.0 / (hd as f32).sqrt();
        let q = qkv.slice(s![r.clone(), h * hd..(h + 1) * hd]);
        let k = qkv.slice(s![r.clone(), d + h * hd..d + (h + 1) * hd]);
        let mut scores = q.dot(&k.t()) * scale;
        if let Attention::Dense(mask) = mode {
            for ((i, j), v) in scores.indexed_iter_mut() {
                if !mask.allowed(i + r.start, j + r.start) {
                    *v = f32::NEG_INFINITY;
                }
            }
        }
        softmax_rows(&mut scores);
        scores
    }

    fn ranges(mode: Attention<'_>, n: usize) -> Vec<Range<usize>> {
        match mode {
            Attention::Segments(b) => segment_ranges(b),
            Attention::Full | Attention::Dense(_) => std::iter::once(0..n).collect(),
        }
    }

    fn attention(&self, block: &Block, x: ArrayView2<f32>, mode: Attention<'_>) -> Array2<f32> {
        let qkv = block.qkv.forward(block.norm1.forward(x).view());
        let n = x.nrows();
        let (d, hd) = (self.spec.d_embed, self.spec.d_embed / self.spec.heads);
        let mut out = Array2::<f32>::zeros((n, d));
        for r in Self::ranges(mode, n) {
            for h in 0..self.spec.heads {
                let probs = self.head_probs(&qkv, h, &r, mode);
                let v = qkv.slice(s![r.clone(), 2 * d + h * hd..2 * d + (h + 1) * hd]);
                out.slice_mut(s![r.clone(), h * hd..(h + 1) * hd])
                    .assign(&probs.dot(&v));
            }
        }
        block.proj.forward(out.view())
    }

    /// Transformer blocks plus final norm on embedded rows.
    pub fn encode(&self, mut x: Array2<f32>, mode: Attention<'_>) -> Array2<f32> {
        for block in &self.blocks {
            let attn = self.attention(block, x.view(), mode);
            x += &attn;
            let mut hidden = block.fc1.forward(block.norm2.forward(x.view()).view());
            hidden.mapv_inplace(gelu);
            x += &block.fc2.forward(hidden.view());
        }
        self.norm.forward(x.view())
    }

    fn classify(&self, pooled: Array2<f32>) -> Array2<f32> {
        self.head.forward(pooled.view())
    }

    pub fn embed(&self, seq: &TokenSequence) -> Result<Array2<f32>> {
        embed(seq, &self.embedder, &self.tables)
    }

    /// Unpacked reference path: full attention over one example.
    pub fn forward_single(&self, seq: &TokenSequence) -> Result<Array1<f32>> {
        if seq.is_empty() {
            return Err(RltError::usage("forward needs at least one token"));
        }
        if seq.patch_len() != self.spec.patch_dim {
            return Err(RltError::usage(format!(
                "sequence patches hold {} values, model expects {}",
                seq.patch_len(),
                self.spec.patch_dim
            )));
        }
        let encoded = self.encode(self.embed(seq)?, Attention::Full);
        let pooled = encoded.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        Ok(self.classify(pooled).row(0).to_owned())
    }

    /// One row of logits per packed example.
    pub fn forward_packed(&self, batch: &PackedBatch, form: MaskForm) -> Result<Array2<f32>> {
        batch.validate()?;
        if batch.patch_len() != self.spec.patch_dim {
            return Err(RltError::usage(format!(
                "batch patches hold {} values, model expects {}",
                batch.patch_len(),
                self.spec.patch_dim
            )));
        }
        let x = embed_rows(&self.embedder, &self.tables, batch.tokens(), batch.payload())?;
        let dense;
        let mode = match form {
            MaskForm::Compact => Attention::Segments(batch.boundaries()),
            MaskForm::Dense => {
                dense = crate::packing::build_mask(batch, MaskForm::Dense);
                Attention::Dense(&dense)
            }
        };
        let encoded = self.encode(x, mode);
        let mut pooled = Array2::<f32>::zeros((batch.num_segments(), self.spec.d_embed));
        for (i, mut row) in pooled.rows_mut().into_iter().enumerate() {
            let r = batch.segment_range(i);
            row.assign(&encoded.slice(s![r, ..]).mean_axis(Axis(0)).expect("non-empty segment"));
        }
        Ok(self.classify(pooled))
    }

    /// First-block attention probabilities (one `N x N` matrix per head)
    /// for a packed batch under `form`.
    pub fn first_layer_attention(&self, batch: &PackedBatch, form: MaskForm) -> Result<Vec<Array2<f32>>> {
        if self.blocks.is_empty() {
            return Err(RltError::usage("model has no blocks"));
        }
        let x = embed_rows(&self.embedder, &self.tables, batch.tokens(), batch.payload())?;
        let dense;
        let mode = match form {
            MaskForm::Compact => Attention::Segments(batch.boundaries()),
            MaskForm::Dense => {
                dense = crate::packing::build_mask(batch, MaskForm::Dense);
                Attention::Dense(&dense)
            }
        };
        let block = &self.blocks[0];
        let qkv = block.qkv.forward(block.norm1.forward(x.view()).view());
        let n = x.nrows();
        Ok((0..self.spec.heads)
            .map(|h| {
                let mut probs = Array2::<f32>::zeros((n, n));
                for r in Self::ranges(mode, n) {
                    probs
                        .slice_mut(s![r.clone(), r.clone()])
                        .assign(&self.head_probs(&qkv, h, &r, mode));
                }
                probs
            })
            .collect())
    }
}

fn segment_ranges(boundaries: &[usize]) -> Vec<Range<usize>> {
    boundaries.windows(2).map(|w| w[0]..w[1]).collect()
}

/// Multiply-accumulate count (2 flops each) of the matrix products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FlopCount {
    pub embedding: u64,
    pub projections: u64,
    /// `QK^T` and `PV`; quadratic in each example's token count.
    pub attention: u64,
    pub mlp: u64,
    pub head: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.embedding + self.projections + self.attention + self.mlp + self.head
    }
}

/// Analytic flop estimate for examples of the given token counts.
pub fn count_flops(lengths: &[usize], spec: &ModelSpec) -> FlopCount {
    let d = spec.d_embed as u64;
    let depth = spec.depth as u64;
    let n: u64 = lengths.iter().map(|&l| l as u64).sum();
    let sq: u64 = lengths.iter().map(|&l| (l as u64).pow(2)).sum();
    let hidden = spec.mlp_ratio as u64 * d;
    FlopCount {
        embedding: 2 * n * spec.patch_dim as u64 * d,
        projections: depth * 2 * n * (3 * d * d + d * d),
        attention: depth * 4 * sq * d,
        mlp: depth * 4 * n * d * hidden,
        head: 2 * lengths.len() as u64 * d * spec.num_classes as u64,
    }
}

pub fn count_flops_batch(batch: &PackedBatch, spec: &ModelSpec) -> FlopCount {
    count_flops(&batch.segment_lengths(), spec)
}

pub fn count_flops_sequence(seq: &TokenSequence, spec: &ModelSpec) -> FlopCount {
    count_flops(&[seq.len()], spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            seed: 1,
            d_embed: 8,
            depth: 1,
            heads: 2,
            mlp_ratio: 2,
            num_classes: 3,
            patch_dim: 4,
            grid: GridDims {
                grid_x: 2,
                grid_y: 1,
                grid_t: 3,
            },
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a = ToyTransformer::new(tiny_spec()).unwrap();
        let b = ToyTransformer::new(tiny_spec()).unwrap();
        assert_eq!(a.embedder.linear.weight, b.embedder.linear.weight);
        assert_eq!(a.tables.length_bias, b.tables.length_bias);
        let mut other = tiny_spec();
        other.seed = 2;
        let c = ToyTransformer::new(other).unwrap();
        assert_ne!(a.embedder.linear.weight, c.embedder.linear.weight);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut s = tiny_spec();
        s.heads = 3;
        assert!(ToyTransformer::new(s).is_err());
    }

    #[test]
    fn softmax_masks_to_exact_zero() {
        let mut m = ndarray::array![[1.0f32, f32::NEG_INFINITY, 2.0]];
        softmax_rows(&mut m);
        assert_eq!(m[[0, 1]], 0.0);
        assert!((m.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flops_closed_form() {
        // d=8, depth=1, patch=4, r=2, classes=3; one example of 5 tokens
        let f = count_flops(&[5], &tiny_spec());
        assert_eq!(f.embedding, 2 * 5 * 4 * 8);
        assert_eq!(f.projections, 2 * 5 * (3 * 64 + 64));
        assert_eq!(f.attention, 4 * 25 * 8);
        assert_eq!(f.mlp, 4 * 5 * 8 * 16);
        assert_eq!(f.head, 2 * 8 * 3);
        assert_eq!(f.total(), 320 + 2560 + 800 + 2560 + 48);
    }

    #[test]
    fn flops_scale_with_lengths() {
        let s = tiny_spec();
        let a = count_flops(&[3, 5], &s);
        let b = count_flops(&[6, 10], &s);
        assert_eq!(b.attention, 4 * a.attention);
        assert_eq!(b.mlp, 2 * a.mlp);
        assert!(count_flops(&[4], &s).total() < count_flops(&[6], &s).total());
    }

    #[test]
    fn spec_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        tiny_spec().save(&p).unwrap();
        assert_eq!(ModelSpec::load(&p).unwrap(), tiny_spec());
    }
}
