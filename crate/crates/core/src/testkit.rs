//! Synthetic clips and slow reference implementations for tests.
//!
//! The oracles here deliberately avoid the helpers used by [`crate::rlt`]:
//! they index raw buffers or pixels themselves and scan literally.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rlt::{DiffMetric, StaticMask};
use crate::tensor::{GridDims, PatchGrid, TubeletConfig, VideoDims, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// One random frame repeated.
    Static,
    /// Independent uniform pixels.
    Noise,
    /// A `block_x x block_y` foreground block on a flat background that moves
    /// one block to the right (wrapping) every `frames_per_step` frames,
    /// along block row `row`.
    MovingBlock {
        block_x: usize,
        block_y: usize,
        frames_per_step: usize,
        row: usize,
        background: f32,
        foreground: f32,
    },
    /// Every pixel equals `base + delta * frame`.
    BrightnessRamp { base: f32, delta: f32 },
    /// First half of the frames show frame A, second half frame `A + 0.5`.
    TwoSegmentStatic,
    /// Per frame, every `block x block` region is kept, nudged by up to
    /// `amplitude`, or redrawn.
    PatchJitter { block: usize, amplitude: f32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub dims: VideoDims,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, dims: VideoDims, seed: u64) -> Self {
        Self { kind, dims, seed }
    }
}

/// Deterministic video for `spec`.
pub fn gen_video(spec: &SyntheticSpec) -> VideoTensor {
    let d = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let plane = d.height * d.width;
    let mut data = vec![0.0f32; d.len()];
    let at = |c: usize, t: usize, i: usize| (c * d.frames + t) * plane + i;
    match spec.kind {
        SyntheticKind::Static => {
            let frame: Vec<f32> = (0..d.channels * plane).map(|_| rng.random()).collect();
            for c in 0..d.channels {
                for t in 0..d.frames {
                    for i in 0..plane {
                        data[at(c, t, i)] = frame[c * plane + i];
                    }
                }
            }
        }
        SyntheticKind::Noise => data.iter_mut().for_each(|v| *v = rng.random()),
        SyntheticKind::MovingBlock {
            block_x,
            block_y,
            frames_per_step,
            row,
            background,
            foreground,
        } => {
            let cols = d.width / block_x;
            for t in 0..d.frames {
                let bx = (t / frames_per_step) % cols;
                for c in 0..d.channels {
                    for h in 0..d.height {
                        for w in 0..d.width {
                            let inside = h / block_y == row && w / block_x == bx;
                            data[at(c, t, h * d.width + w)] = if inside { foreground } else { background };
                        }
                    }
                }
            }
        }
        SyntheticKind::BrightnessRamp { base, delta } => {
            for c in 0..d.channels {
                for t in 0..d.frames {
                    for i in 0..plane {
                        data[at(c, t, i)] = base + delta * t as f32;
                    }
                }
            }
        }
        SyntheticKind::TwoSegmentStatic => {
            let frame: Vec<f32> = (0..d.channels * plane).map(|_| rng.random_range(0.0..0.4)).collect();
            let half = d.frames / 2;
            for c in 0..d.channels {
                for t in 0..d.frames {
                    let shift = if t < half { 0.0 } else { 0.5 };
                    for i in 0..plane {
                        data[at(c, t, i)] = frame[c * plane + i] + shift;
                    }
                }
            }
        }
        SyntheticKind::PatchJitter { block, amplitude } => {
            for v in data.iter_mut().take(plane) {
                *v = rng.random();
            }
            for c in 1..d.channels {
                for i in 0..plane {
                    data[at(c, 0, i)] = rng.random();
                }
            }
            let by = d.height.div_ceil(block);
            let bx = d.width.div_ceil(block);
            for t in 1..d.frames {
                for cell_y in 0..by {
                    for cell_x in 0..bx {
                        let action: f32 = rng.random();
                        let nudge = amplitude * rng.random::<f32>();
                        for c in 0..d.channels {
                            for h in cell_y * block..((cell_y + 1) * block).min(d.height) {
                                for w in cell_x * block..((cell_x + 1) * block).min(d.width) {
                                    let i = h * d.width + w;
                                    let prev = data[at(c, t - 1, i)];
                                    data[at(c, t, i)] = if action < 0.5 {
                                        prev
                                    } else if action < 0.75 {
                                        prev + nudge * (rng.random::<f32>() * 2.0 - 1.0)
                                    } else {
                                        rng.random()
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    VideoTensor::new(d, data).expect("generator respects dims")
}

/// Random video with a random kind and geometry compatible with `config`,
/// for property tests.
pub fn random_spec(rng: &mut impl Rng, config: TubeletConfig, max: VideoDims) -> SyntheticSpec {
    let pick = |rng: &mut dyn rand::RngCore, unit: usize, max: usize| {
        let k = (max / unit).max(1);
        unit * (1 + (rng.next_u32() as usize % k))
    };
    let dims = VideoDims::new(
        1 + rng.random_range(0..max.channels),
        pick(rng, config.tubelet_t, max.frames),
        pick(rng, config.patch_y, max.height),
        pick(rng, config.patch_x, max.width),
    );
    let kind = match rng.random_range(0..4) {
        0 => SyntheticKind::Static,
        1 => SyntheticKind::Noise,
        _ => SyntheticKind::PatchJitter {
            block: [2, 4, 8, 16][rng.random_range(0..4)],
            amplitude: rng.random_range(0.0..0.3),
        },
    };
    SyntheticSpec::new(kind, dims, rng.random())
}

/// Triple-loop static mask computed from the raw tubelet buffer.
pub fn oracle_mask(grid: &PatchGrid, tau: f64, metric: DiffMetric) -> StaticMask {
    let g = grid.grid();
    let cfg = grid.config();
    let c_count = grid.channels();
    let raw = grid.raw();
    let patch_len = c_count * cfg.tubelet_t * cfg.patch_y * cfg.patch_x;
    // element (c, dt, dy, dx) of the tubelet at slot (x, y, t)
    let value = |x: usize, y: usize, t: usize, c: usize, dt: usize, dy: usize, dx: usize| -> f64 {
        let slot = t * g.grid_y * g.grid_x + y * g.grid_x + x;
        let inner = ((c * cfg.tubelet_t + dt) * cfg.patch_y + dy) * cfg.patch_x + dx;
        raw[slot * patch_len + inner] as f64
    };
    let mut bits = Vec::with_capacity(g.num_slots());
    for t in 0..g.grid_t {
        for y in 0..g.grid_y {
            for x in 0..g.grid_x {
                if t == 0 {
                    bits.push(true);
                    continue;
                }
                let mut sum = 0.0f64;
                for c in 0..c_count {
                    for dy in 0..cfg.patch_y {
                        for dx in 0..cfg.patch_x {
                            let first_of_prev = value(x, y, t - 1, c, 0, dy, dx);
                            let last_of_next = value(x, y, t, c, cfg.tubelet_t - 1, dy, dx);
                            sum += (last_of_next - first_of_prev).abs();
                        }
                    }
                }
                let diff = match metric {
                    DiffMetric::MeanAbs => sum / (c_count * cfg.patch_y * cfg.patch_x) as f64,
                    DiffMetric::SumAbs => sum,
                };
                bits.push(diff >= tau);
            }
        }
    }
    StaticMask::from_bits(g, bits).expect("oracle sizes its own mask")
}

/// Static mask computed straight from (already normalized) pixels.
pub fn oracle_mask_from_pixels(video: &VideoTensor, cfg: TubeletConfig, tau: f64, metric: DiffMetric) -> StaticMask {
    let d = video.dims();
    let g = GridDims {
        grid_x: d.width / cfg.patch_x,
        grid_y: d.height / cfg.patch_y,
        grid_t: d.frames / cfg.tubelet_t,
    };
    let mut bits = vec![true; g.num_slots()];
    for t in 1..g.grid_t {
        let first_frame_prev = (t - 1) * cfg.tubelet_t;
        let last_frame_next = t * cfg.tubelet_t + cfg.tubelet_t - 1;
        for y in 0..g.grid_y {
            for x in 0..g.grid_x {
                let mut sum = 0.0f64;
                for c in 0..d.channels {
                    for h in y * cfg.patch_y..(y + 1) * cfg.patch_y {
                        for w in x * cfg.patch_x..(x + 1) * cfg.patch_x {
                            let a = video.get(c, first_frame_prev, h, w) as f64;
                            let b = video.get(c, last_frame_next, h, w) as f64;
                            sum += (a - b).abs();
                        }
                    }
                }
                let diff = match metric {
                    DiffMetric::MeanAbs => sum / (d.channels * cfg.patch_x * cfg.patch_y) as f64,
                    DiffMetric::SumAbs => sum,
                };
                bits[(t * g.grid_y + y) * g.grid_x + x] = diff >= tau;
            }
        }
    }
    StaticMask::from_bits(g, bits).expect("oracle sizes its own mask")
}

/// Literal minimum over later retained slots, with the end-of-clip tail.
/// Indexed by slot; `None` for pruned slots.
pub fn oracle_run_lengths(mask: &StaticMask) -> Vec<Option<u32>> {
    let g = mask.grid();
    let mut out = vec![None; g.num_slots()];
    for t in 0..g.grid_t {
        for y in 0..g.grid_y {
            for x in 0..g.grid_x {
                if !mask.retained(x, y, t) {
                    continue;
                }
                let mut best = g.grid_t - t;
                for t2 in t + 1..g.grid_t {
                    if mask.retained(x, y, t2) && t2 - t < best {
                        best = t2 - t;
                    }
                }
                out[(t * g.grid_y + y) * g.grid_x + x] = Some(best as u32);
            }
        }
    }
    out
}

/// Expected retained slots `(x, y, t)` for a [`SyntheticKind::MovingBlock`]
/// clip whose block equals the patch and steps once per tubelet: everything
/// at `t = 0`, then the vacated and entered columns of each step.
pub fn moving_block_prediction(grid: GridDims, row: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for y in 0..grid.grid_y {
        for x in 0..grid.grid_x {
            out.push((x, y, 0));
        }
    }
    for t in 1..grid.grid_t {
        let vacated = (t - 1) % grid.grid_x;
        let entered = t % grid.grid_x;
        let mut cols = vec![vacated, entered];
        cols.sort_unstable();
        cols.dedup();
        for x in cols {
            out.push((x, row, t));
        }
    }
    out.sort_by_key(|&(x, y, t)| (t, y, x));
    out
}

/// Scalar-loop `E(patch) + pos[slot] + len[l - 1]` for one token.
pub fn oracle_embed_token(
    patch: &[f32],
    weight: &ndarray::Array2<f32>,
    bias: &ndarray::Array1<f32>,
    pos_row: ndarray::ArrayView1<f32>,
    len_row: ndarray::ArrayView1<f32>,
) -> Vec<f64> {
    let d = bias.len();
    (0..d)
        .map(|j| {
            let mut acc = bias[j] as f64;
            for (i, &p) in patch.iter().enumerate() {
                acc += p as f64 * weight[[i, j]] as f64;
            }
            acc + pos_row[j] as f64 + len_row[j] as f64
        })
        .collect()
}
