//! Dense video storage, per-channel normalization and tubelet extraction.
//!
//! Videos are stored channel-major (`C x T x H x W`, channel outermost). A
//! [`PatchGrid`] holds the same pixels regrouped into non-overlapping
//! `D_x x D_y x D_t` tubelets. Each tubelet is stored contiguously with its
//! own channel-major layout `(c, dt, dy, dx)`, and tubelets are ordered by
//! slot `(t, y, x)` with `x` fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RltError};

/// `(C, T, H, W)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VideoDims {
    pub channels: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoDims {
    pub fn new(channels: usize, frames: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            frames,
            height,
            width,
        }
    }

    /// Element count, or `None` on overflow.
    pub fn checked_len(&self) -> Option<usize> {
        self.channels
            .checked_mul(self.frames)?
            .checked_mul(self.height)?
            .checked_mul(self.width)
    }

    pub fn len(&self) -> usize {
        self.channels * self.frames * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        for (axis, v) in [
            ("C", self.channels),
            ("T", self.frames),
            ("H", self.height),
            ("W", self.width),
        ] {
            if v == 0 {
                return Err(RltError::DataValidity(format!("video axis {axis} must be at least 1")));
            }
        }
        if self.checked_len().is_none() {
            return Err(RltError::DataValidity(format!("video dimensions {self:?} overflow")));
        }
        Ok(())
    }
}

impl std::fmt::Display for VideoDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.channels, self.frames, self.height, self.width)
    }
}

/// A dense `C x T x H x W` float video in channel-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    dims: VideoDims,
    data: Vec<f32>,
}

impl VideoTensor {
    pub fn new(dims: VideoDims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(RltError::DataValidity(format!(
                "video {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: VideoDims, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self> {
        dims.validate()?;
        let mut data = Vec::with_capacity(dims.len());
        for c in 0..dims.channels {
            for t in 0..dims.frames {
                for h in 0..dims.height {
                    for w in 0..dims.width {
                        data.push(f(c, t, h, w));
                    }
                }
            }
        }
        Ok(Self { dims, data })
    }

    /// 8-bit samples are scaled into `[0, 1]` by dividing by 255.
    pub fn from_u8(dims: VideoDims, bytes: &[u8]) -> Result<Self> {
        Self::new(dims, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, t: usize, h: usize, w: usize) -> usize {
        let d = &self.dims;
        ((c * d.frames + t) * d.height + h) * d.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(c, t, h, w)]
    }

    pub fn set(&mut self, c: usize, t: usize, h: usize, w: usize, v: f32) {
        let i = self.index(c, t, h, w);
        self.data[i] = v;
    }

    /// Contiguous `H x W` plane of one channel at one frame.
    pub fn plane(&self, c: usize, t: usize) -> &[f32] {
        let n = self.dims.height * self.dims.width;
        let start = self.index(c, t, 0, 0);
        &self.data[start..start + n]
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(RltError::DataValidity(format!(
                "non-finite value {} at element {pos}",
                self.data[pos]
            )));
        }
        Ok(())
    }
}

/// Tubelet geometry: spatial patch size `D_x x D_y` and temporal size `D_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TubeletConfig {
    pub patch_x: usize,
    pub patch_y: usize,
    pub tubelet_t: usize,
    /// Embedding width carried for the model; unused by tokenization itself.
    pub embed_dim: usize,
}

impl Default for TubeletConfig {
    fn default() -> Self {
        Self {
            patch_x: 16,
            patch_y: 16,
            tubelet_t: 2,
            embed_dim: 64,
        }
    }
}

impl TubeletConfig {
    pub fn new(patch_x: usize, patch_y: usize, tubelet_t: usize) -> Self {
        Self {
            patch_x,
            patch_y,
            tubelet_t,
            ..Self::default()
        }
    }

    pub fn square(patch: usize, tubelet_t: usize) -> Self {
        Self::new(patch, patch, tubelet_t)
    }

    /// Checks positivity and exact divisibility against `dims`.
    pub fn validate_for(&self, dims: VideoDims) -> Result<GridDims> {
        for (axis, size, extent) in [
            ("x", self.patch_x, dims.width),
            ("y", self.patch_y, dims.height),
            ("t", self.tubelet_t, dims.frames),
        ] {
            if size == 0 {
                return Err(RltError::Config {
                    axis,
                    message: "tubelet size must be at least 1".into(),
                });
            }
            if extent % size != 0 {
                return Err(RltError::Config {
                    axis,
                    message: format!("extent {extent} is not divisible by tubelet size {size}"),
                });
            }
        }
        Ok(GridDims {
            grid_x: dims.width / self.patch_x,
            grid_y: dims.height / self.patch_y,
            grid_t: dims.frames / self.tubelet_t,
        })
    }

    /// Values per tubelet for `channels` channels.
    pub fn patch_len(&self, channels: usize) -> usize {
        channels * self.tubelet_t * self.patch_y * self.patch_x
    }

    /// Values per single-frame crop.
    pub fn crop_len(&self, channels: usize) -> usize {
        channels * self.patch_y * self.patch_x
    }
}

/// Number of tubelet slots along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub grid_x: usize,
    pub grid_y: usize,
    pub grid_t: usize,
}

impl GridDims {
    pub fn spatial(&self) -> usize {
        self.grid_x * self.grid_y
    }

    pub fn num_slots(&self) -> usize {
        self.grid_x * self.grid_y * self.grid_t
    }

    #[inline]
    pub fn slot_index(&self, x: usize, y: usize, t: usize) -> usize {
        (t * self.grid_y + y) * self.grid_x + x
    }

    pub fn contains(&self, x: usize, y: usize, t: usize) -> bool {
        x < self.grid_x && y < self.grid_y && t < self.grid_t
    }
}

/// Per-channel affine normalization applied before patches are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    mean: Vec<f32>,
    std: Vec<f32>,
}

impl Default for NormalizationParams {
    fn default() -> Self {
        Self::imagenet()
    }
}

impl NormalizationParams {
    pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
    pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

    pub fn new(mean: Vec<f32>, std: Vec<f32>) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(RltError::usage(format!(
                "normalization needs equal, non-empty mean/std lists (got {} and {})",
                mean.len(),
                std.len()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(RltError::usage("normalization mean must be finite"));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(RltError::usage(
                "normalization std components must be finite and strictly positive",
            ));
        }
        Ok(Self { mean, std })
    }

    pub fn imagenet() -> Self {
        Self {
            mean: Self::IMAGENET_MEAN.to_vec(),
            std: Self::IMAGENET_STD.to_vec(),
        }
    }

    /// Zero mean, unit std: normalization becomes the identity.
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn std(&self) -> &[f32] {
        &self.std
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn check_channels(&self, channels: usize) -> Result<()> {
        if self.channels() != channels {
            return Err(RltError::usage(format!(
                "normalization has {} channels, video has {channels}",
                self.channels()
            )));
        }
        Ok(())
    }
}

/// `(x - mean[c]) / std[c]` for every element.
pub fn normalize(video: &VideoTensor, params: &NormalizationParams) -> Result<VideoTensor> {
    video.ensure_finite()?;
    params.check_channels(video.dims.channels)?;
    let plane = video.dims.frames * video.dims.height * video.dims.width;
    let mut data = Vec::with_capacity(video.data.len());
    for (c, chunk) in video.data.chunks_exact(plane).enumerate() {
        let (m, s) = (params.mean[c], params.std[c]);
        data.extend(chunk.iter().map(|&v| (v - m) / s));
    }
    Ok(VideoTensor { dims: video.dims, data })
}

/// Inverse of [`normalize`].
pub fn denormalize(video: &VideoTensor, params: &NormalizationParams) -> Result<VideoTensor> {
    params.check_channels(video.dims.channels)?;
    let plane = video.dims.frames * video.dims.height * video.dims.width;
    let mut data = Vec::with_capacity(video.data.len());
    for (c, chunk) in video.data.chunks_exact(plane).enumerate() {
        let (m, s) = (params.mean[c], params.std[c]);
        data.extend(chunk.iter().map(|&v| v * s + m));
    }
    Ok(VideoTensor { dims: video.dims, data })
}

/// A video regrouped into non-overlapping tubelets.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    source: VideoDims,
    config: TubeletConfig,
    grid: GridDims,
    data: Vec<f32>,
}

impl PatchGrid {
    pub fn source_dims(&self) -> VideoDims {
        self.source
    }

    pub fn config(&self) -> TubeletConfig {
        self.config
    }

    pub fn grid(&self) -> GridDims {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.source.channels
    }

    pub fn patch_len(&self) -> usize {
        self.config.patch_len(self.source.channels)
    }

    pub fn num_patches(&self) -> usize {
        self.grid.num_slots()
    }

    /// All tubelets back to back in slot order.
    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn patch(&self, x: usize, y: usize, t: usize) -> Result<&[f32]> {
        if !self.grid.contains(x, y, t) {
            return Err(RltError::Bounds(format!(
                "slot ({x}, {y}, {t}) outside grid {}x{}x{}",
                self.grid.grid_x, self.grid.grid_y, self.grid.grid_t
            )));
        }
        Ok(self.patch_at(self.grid.slot_index(x, y, t)))
    }

    #[inline]
    pub(crate) fn patch_at(&self, slot: usize) -> &[f32] {
        let n = self.patch_len();
        &self.data[slot * n..(slot + 1) * n]
    }

    /// Rebuilds the dense video from the tubelets.
    pub fn reassemble(&self) -> VideoTensor {
        let d = self.source;
        let cfg = self.config;
        let mut data = vec![0.0f32; d.len()];
        let mut slot = 0;
        for t in 0..self.grid.grid_t {
            for y in 0..self.grid.grid_y {
                for x in 0..self.grid.grid_x {
                    let mut src = self.patch_at(slot).chunks_exact(cfg.patch_x);
                    for c in 0..d.channels {
                        for dt in 0..cfg.tubelet_t {
                            let frame = t * cfg.tubelet_t + dt;
                            for dy in 0..cfg.patch_y {
                                let row = y * cfg.patch_y + dy;
                                let start = ((c * d.frames + frame) * d.height + row) * d.width + x * cfg.patch_x;
                                data[start..start + cfg.patch_x].copy_from_slice(src.next().expect("patch row"));
                            }
                        }
                    }
                    slot += 1;
                }
            }
        }
        VideoTensor { dims: d, data }
    }
}

/// Splits `video` into tubelets. Rejects non-divisible geometry.
pub fn extract_patches(video: &VideoTensor, config: TubeletConfig) -> Result<PatchGrid> {
    let grid = config.validate_for(video.dims)?;
    let d = video.dims;
    let mut data = Vec::with_capacity(d.len());
    for t in 0..grid.grid_t {
        for y in 0..grid.grid_y {
            for x in 0..grid.grid_x {
                for c in 0..d.channels {
                    for dt in 0..config.tubelet_t {
                        let frame = t * config.tubelet_t + dt;
                        for dy in 0..config.patch_y {
                            let row = y * config.patch_y + dy;
                            let start = ((c * d.frames + frame) * d.height + row) * d.width + x * config.patch_x;
                            data.extend_from_slice(&video.data[start..start + config.patch_x]);
                        }
                    }
                }
            }
        }
    }
    Ok(PatchGrid {
        source: d,
        config,
        grid,
        data,
    })
}

/// The `C x D_y x D_x` crop of tubelet `(x, y, t_slot)` at frame
/// `t_slot * D_t + frame_offset`.
pub fn patch_frame_crop(grid: &PatchGrid, x: usize, y: usize, t_slot: usize, frame_offset: usize) -> Result<Vec<f32>> {
    let cfg = grid.config;
    if frame_offset >= cfg.tubelet_t {
        return Err(RltError::Bounds(format!(
            "frame offset {frame_offset} outside tubelet of {} frames",
            cfg.tubelet_t
        )));
    }
    let patch = grid.patch(x, y, t_slot)?;
    let mut out = Vec::with_capacity(cfg.crop_len(grid.channels()));
    out.extend(crop_chunks(patch, cfg, frame_offset).flatten().copied());
    Ok(out)
}

/// Per-channel slices of a single-frame crop inside a tubelet buffer.
#[inline]
pub(crate) fn crop_chunks(patch: &[f32], cfg: TubeletConfig, frame_offset: usize) -> impl Iterator<Item = &[f32]> {
    let plane = cfg.patch_y * cfg.patch_x;
    let per_channel = cfg.tubelet_t * plane;
    patch
        .chunks_exact(per_channel)
        .map(move |ch| &ch[frame_offset * plane..(frame_offset + 1) * plane])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_video(dims: VideoDims, seed: u64) -> VideoTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VideoTensor::from_fn(dims, |_, _, _, _| rng.random::<f32>()).unwrap()
    }

    #[test]
    fn identity_normalization_is_noop() {
        let v = random_video(VideoDims::new(3, 2, 4, 4), 1);
        let n = normalize(&v, &NormalizationParams::identity(3)).unwrap();
        assert_eq!(n, v);
    }

    #[test]
    fn centering_constant_video_gives_zeros() {
        let p = NormalizationParams::imagenet();
        let v = VideoTensor::from_fn(VideoDims::new(3, 2, 2, 2), |c, _, _, _| p.mean()[c]).unwrap();
        let n = normalize(&v, &p).unwrap();
        assert!(n.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn imagenet_scalar_check() {
        let v = VideoTensor::new(VideoDims::new(3, 1, 1, 1), vec![0.8, 0.0, 0.0]).unwrap();
        let n = normalize(&v, &NormalizationParams::imagenet()).unwrap();
        let expected = (0.8f64 - 0.485) / 0.229;
        assert!((n.get(0, 0, 0, 0) as f64 - expected).abs() < 1e-6);
        assert!((expected - 1.3755).abs() < 1e-4);
    }

    #[test]
    fn non_finite_rejected() {
        let v = VideoTensor::new(VideoDims::new(1, 1, 1, 2), vec![0.1, f32::NAN]).unwrap();
        let err = normalize(&v, &NormalizationParams::identity(1)).unwrap_err();
        assert!(matches!(err, RltError::DataValidity(_)));
    }

    #[test]
    fn bad_std_rejected() {
        assert!(NormalizationParams::new(vec![0.0], vec![0.0]).is_err());
        assert!(NormalizationParams::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn videomae_geometry() {
        let dims = VideoDims::new(3, 16, 224, 224);
        let grid = TubeletConfig::square(16, 2).validate_for(dims).unwrap();
        assert_eq!((grid.grid_x, grid.grid_y, grid.grid_t), (14, 14, 8));
        assert_eq!(grid.num_slots(), 1568);
    }

    #[test]
    fn degenerate_single_pixel() {
        let v = VideoTensor::new(VideoDims::new(1, 1, 1, 1), vec![0.25]).unwrap();
        let g = extract_patches(&v, TubeletConfig::square(1, 1)).unwrap();
        assert_eq!(g.num_patches(), 1);
        assert_eq!(g.patch(0, 0, 0).unwrap(), &[0.25]);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let v = random_video(VideoDims::new(3, 4, 8, 8), 7);
        let g = extract_patches(&v, TubeletConfig::square(4, 2)).unwrap();
        assert_eq!((g.grid().grid_x, g.grid().grid_y, g.grid().grid_t), (2, 2, 2));
        assert_eq!(g.reassemble(), v);
    }

    #[test]
    fn patch_matches_direct_slicing() {
        let v = random_video(VideoDims::new(2, 4, 8, 12), 3);
        let cfg = TubeletConfig::new(4, 2, 2);
        let g = extract_patches(&v, cfg).unwrap();
        let p = g.patch(2, 3, 1).unwrap();
        let mut i = 0;
        for c in 0..2 {
            for dt in 0..2 {
                for dy in 0..2 {
                    for dx in 0..4 {
                        assert_eq!(p[i], v.get(c, 2 + dt, 6 + dy, 8 + dx));
                        i += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn non_divisible_names_axis() {
        let v = random_video(VideoDims::new(1, 3, 8, 8), 0);
        match extract_patches(&v, TubeletConfig::square(4, 2)) {
            Err(RltError::Config { axis, .. }) => assert_eq!(axis, "t"),
            other => panic!("unexpected {other:?}"),
        }
        let v = random_video(VideoDims::new(1, 2, 8, 10), 0);
        match extract_patches(&v, TubeletConfig::square(4, 2)) {
            Err(RltError::Config { axis, .. }) => assert_eq!(axis, "x"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn crop_single_frame_tubelet_is_whole_patch() {
        let v = random_video(VideoDims::new(3, 2, 4, 4), 5);
        let g = extract_patches(&v, TubeletConfig::square(2, 1)).unwrap();
        assert_eq!(patch_frame_crop(&g, 1, 0, 1, 0).unwrap(), g.patch(1, 0, 1).unwrap());
        assert!(patch_frame_crop(&g, 1, 0, 1, 1).is_err());
        assert!(patch_frame_crop(&g, 2, 0, 0, 0).is_err());
    }

    #[test]
    fn crop_of_constant_frame() {
        let v = VideoTensor::from_fn(VideoDims::new(3, 2, 4, 4), |_, t, _, _| if t == 1 { 0.5 } else { 0.1 }).unwrap();
        let g = extract_patches(&v, TubeletConfig::square(2, 2)).unwrap();
        let crop = patch_frame_crop(&g, 1, 1, 0, 1).unwrap();
        assert_eq!(crop.len(), 12);
        assert!(crop.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn crop_matches_reslicing() {
        let v = random_video(VideoDims::new(3, 6, 8, 8), 11);
        let g = extract_patches(&v, TubeletConfig::square(4, 3)).unwrap();
        let crop = patch_frame_crop(&g, 1, 0, 1, 2).unwrap();
        let mut expected = Vec::new();
        for c in 0..3 {
            for h in 0..4 {
                for w in 4..8 {
                    expected.push(v.get(c, 5, h, w));
                }
            }
        }
        assert_eq!(crop, expected);
    }

    #[test]
    fn denormalize_inverts() {
        let v = random_video(VideoDims::new(3, 2, 4, 4), 9);
        let p = NormalizationParams::imagenet();
        let back = denormalize(&normalize(&v, &p).unwrap(), &p).unwrap();
        for (a, b) in v.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
