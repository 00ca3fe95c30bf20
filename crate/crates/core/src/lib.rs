//! Run-length tokenization for video: tubelet extraction, static-patch
//! pruning with run-length encoding, sequence packing, a small reference
//! transformer and the file formats around them.

pub mod bench;
pub mod error;
pub mod io;
pub mod packing;
pub mod refmodel;
pub mod rlt;
pub mod stats;
pub mod strategy;
pub mod tensor;
pub mod testkit;
pub mod viz;

pub use error::{Result, RltError};
pub use packing::{build_mask, pack, pack_with_ids, unpack, BlockDiagonalMask, MaskForm, PackedBatch};
pub use rlt::{
    compute_run_lengths, compute_static_mask, random_mask, tokenize, tokenize_with, DiffMetric, Threshold, TokenPos,
    TokenSequence, TokenizerSettings,
};
pub use strategy::{Tokenizer, TokenizerRegistry};
pub use tensor::{extract_patches, GridDims, NormalizationParams, PatchGrid, TubeletConfig, VideoDims, VideoTensor};
