//! Example packing: several token sequences concatenated into one long
//! sequence, with cumulative boundaries that define a block-diagonal
//! attention structure.

use serde::Serialize;

use crate::error::{Result, RltError};
use crate::rlt::{SequenceMeta, TokenPos, TokenSequence};

/// One packed example.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub source_id: String,
    pub meta: SequenceMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedBatch {
    tokens: Vec<TokenPos>,
    payload: Vec<f32>,
    boundaries: Vec<usize>,
    segments: Vec<Segment>,
}

/// Token-count spread across the examples of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchStats {
    pub examples: usize,
    pub total_tokens: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub mean_tokens: f64,
    pub std_tokens: f64,
}

fn check_compatible(first: &SequenceMeta, other: &SequenceMeta, index: usize) -> Result<()> {
    let (a, b) = (&first.settings, &other.settings);
    let same = a.config == b.config
        && a.norm == b.norm
        && a.tau == b.tau
        && a.metric == b.metric
        && first.dims.channels == other.dims.channels;
    if !same {
        return Err(RltError::usage(format!(
            "sequence {index} was tokenized with a different configuration than sequence 0"
        )));
    }
    Ok(())
}

/// Packs `seqs` in input order; examples are labelled `"0"`, `"1"`, ...
pub fn pack(seqs: &[TokenSequence]) -> Result<PackedBatch> {
    let ids: Vec<String> = (0..seqs.len()).map(|i| i.to_string()).collect();
    pack_with_ids(seqs, &ids)
}

pub fn pack_with_ids(seqs: &[TokenSequence], ids: &[String]) -> Result<PackedBatch> {
    let first = seqs
        .first()
        .ok_or_else(|| RltError::usage("cannot pack an empty list of sequences"))?;
    if ids.len() != seqs.len() {
        return Err(RltError::usage(format!(
            "{} ids for {} sequences",
            ids.len(),
            seqs.len()
        )));
    }
    let total: usize = seqs.iter().map(TokenSequence::len).sum();
    let mut tokens = Vec::with_capacity(total);
    let mut payload = Vec::with_capacity(total * first.patch_len());
    let mut boundaries = Vec::with_capacity(seqs.len() + 1);
    let mut segments = Vec::with_capacity(seqs.len());
    boundaries.push(0);
    for (i, (seq, id)) in seqs.iter().zip(ids).enumerate() {
        check_compatible(first.meta(), seq.meta(), i)?;
        if seq.is_empty() {
            return Err(RltError::usage(format!("sequence {i} has no tokens")));
        }
        tokens.extend_from_slice(seq.tokens());
        payload.extend_from_slice(seq.payload());
        boundaries.push(tokens.len());
        segments.push(Segment {
            source_id: id.clone(),
            meta: seq.meta().clone(),
        });
    }
    Ok(PackedBatch {
        tokens,
        payload,
        boundaries,
        segments,
    })
}

impl PackedBatch {
    /// Reassembles a batch from stored parts, checking every structural
    /// invariant.
    pub fn from_parts(
        tokens: Vec<TokenPos>,
        payload: Vec<f32>,
        boundaries: Vec<usize>,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        let batch = Self {
            tokens,
            payload,
            boundaries,
            segments,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.boundaries;
        if b.first() != Some(&0) {
            return Err(RltError::Integrity("boundaries must start at 0".into()));
        }
        if b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RltError::Integrity("boundaries must be strictly increasing".into()));
        }
        if *b.last().unwrap() != self.tokens.len() {
            return Err(RltError::Integrity(format!(
                "last boundary {} does not match {} tokens",
                b.last().unwrap(),
                self.tokens.len()
            )));
        }
        if b.len() - 1 != self.segments.len() {
            return Err(RltError::Integrity(format!(
                "{} boundary segments but {} segment records",
                b.len() - 1,
                self.segments.len()
            )));
        }
        let Some(first) = self.segments.first() else {
            return Err(RltError::Integrity("batch has no segments".into()));
        };
        let plen = first.meta.patch_len();
        if self.payload.len() != self.tokens.len() * plen {
            return Err(RltError::Integrity(format!(
                "payload has {} values, expected {}",
                self.payload.len(),
                self.tokens.len() * plen
            )));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            check_compatible(&first.meta, &seg.meta, i).map_err(|e| RltError::Integrity(e.to_string()))?;
        }
        Ok(())
    }

    /// Total token count `sum T_i`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn tokens(&self) -> &[TokenPos] {
        &self.tokens
    }

    pub fn payload(&self) -> &[f32] {
        &self.payload
    }

    pub fn patch_len(&self) -> usize {
        self.segments[0].meta.patch_len()
    }

    pub fn segment_range(&self, i: usize) -> std::ops::Range<usize> {
        self.boundaries[i]..self.boundaries[i + 1]
    }

    pub fn segment_lengths(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn stats(&self) -> BatchStats {
        let lens = self.segment_lengths();
        let n = lens.len() as f64;
        let mean = self.len() as f64 / n;
        let var = lens.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
        BatchStats {
            examples: lens.len(),
            total_tokens: self.len(),
            min_tokens: lens.iter().copied().min().unwrap_or(0),
            max_tokens: lens.iter().copied().max().unwrap_or(0),
            mean_tokens: mean,
            std_tokens: var.sqrt(),
        }
    }
}

/// Splits a batch back into its sequences.
pub fn unpack(batch: &PackedBatch) -> Result<Vec<TokenSequence>> {
    batch.validate()?;
    let plen = batch.patch_len();
    batch
        .segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let r = batch.segment_range(i);
            TokenSequence::from_parts(
                seg.meta.clone(),
                batch.tokens[r.clone()].to_vec(),
                batch.payload[r.start * plen..r.end * plen].to_vec(),
            )
            .map_err(|e| RltError::Integrity(format!("segment {i}: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskForm {
    Dense,
    Compact,
}

/// Attention structure allowing pairs only within one packed example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockDiagonalMask {
    /// Row-major `side x side` matrix.
    Dense { side: usize, allowed: Vec<bool> },
    /// Cumulative segment offsets, the form varlen attention kernels take.
    Compact { boundaries: Vec<usize> },
}

impl BlockDiagonalMask {
    pub fn from_boundaries(boundaries: &[usize], form: MaskForm) -> Self {
        let compact = BlockDiagonalMask::Compact {
            boundaries: boundaries.to_vec(),
        };
        match form {
            MaskForm::Compact => compact,
            MaskForm::Dense => compact.to_dense(),
        }
    }

    pub fn side(&self) -> usize {
        match self {
            BlockDiagonalMask::Dense { side, .. } => *side,
            BlockDiagonalMask::Compact { boundaries } => *boundaries.last().unwrap_or(&0),
        }
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        match self {
            BlockDiagonalMask::Dense { side, allowed } => allowed[i * side + j],
            BlockDiagonalMask::Compact { boundaries } => {
                let side = *boundaries.last().unwrap_or(&0);
                i < side && j < side && segment_of(boundaries, i) == segment_of(boundaries, j)
            }
        }
    }

    pub fn to_dense(&self) -> Self {
        match self {
            BlockDiagonalMask::Dense { .. } => self.clone(),
            BlockDiagonalMask::Compact { boundaries } => {
                let side = *boundaries.last().unwrap_or(&0);
                let mut allowed = vec![false; side * side];
                for w in boundaries.windows(2) {
                    for i in w[0]..w[1] {
                        allowed[i * side + w[0]..i * side + w[1]].fill(true);
                    }
                }
                BlockDiagonalMask::Dense { side, allowed }
            }
        }
    }

    pub fn allowed_pairs(&self) -> usize {
        match self {
            BlockDiagonalMask::Dense { allowed, .. } => allowed.iter().filter(|&&a| a).count(),
            BlockDiagonalMask::Compact { boundaries } => boundaries.windows(2).map(|w| (w[1] - w[0]).pow(2)).sum(),
        }
    }
}

/// Index of the segment containing token `i`.
fn segment_of(boundaries: &[usize], i: usize) -> usize {
    boundaries.partition_point(|&b| b <= i) - 1
}

pub fn build_mask(batch: &PackedBatch, form: MaskForm) -> BlockDiagonalMask {
    BlockDiagonalMask::from_boundaries(&batch.boundaries, form)
}
