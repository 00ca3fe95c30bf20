//! Overlay rendering: pruned tubelets painted a flat gray on top of the
//! source frames.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Result, RltError};
use crate::rlt::TokenSequence;
use crate::tensor::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayStyle {
    /// Fill value for pruned patches, in `[0, 1]`.
    pub gray: f32,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self { gray: 0.5 }
    }
}

/// One rendered frame in channel-major `C x H x W` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayFrame {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    /// `H x W`; true where the pixel was painted gray.
    pub grayed: Vec<bool>,
}

impl OverlayFrame {
    pub fn grayed_count(&self) -> usize {
        self.grayed.iter().filter(|&&g| g).count()
    }

    /// RGB image; single-channel frames are replicated, extra channels ignored.
    pub fn to_rgb_image(&self) -> RgbImage {
        let plane = self.height * self.width;
        let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        RgbImage::from_fn(self.width as u32, self.height as u32, |w, h| {
            let i = h as usize * self.width + w as usize;
            let ch = |c: usize| to_u8(self.data[c.min(self.channels - 1) * plane + i]);
            Rgb([ch(0), ch(1), ch(2)])
        })
    }
}

/// Renders one frame per source frame. Pixels of slots absent from `seq`
/// are filled with `style.gray`; all other pixels are copied from `video`.
pub fn render_overlay(video: &VideoTensor, seq: &TokenSequence, style: OverlayStyle) -> Result<Vec<OverlayFrame>> {
    let dims = video.dims();
    if seq.meta().dims != dims {
        return Err(RltError::usage(format!(
            "token sequence was produced from a {} video, got {}",
            seq.meta().dims,
            dims
        )));
    }
    let cfg = seq.settings().config;
    let kept: HashSet<(u32, u32, u32)> = seq.tokens().iter().map(|t| (t.x, t.y, t.t)).collect();
    let plane = dims.height * dims.width;
    let mut frames = Vec::with_capacity(dims.frames);
    for f in 0..dims.frames {
        let slot_t = (f / cfg.tubelet_t) as u32;
        let mut grayed = vec![false; plane];
        for h in 0..dims.height {
            let y = (h / cfg.patch_y) as u32;
            for w in 0..dims.width {
                let x = (w / cfg.patch_x) as u32;
                grayed[h * dims.width + w] = !kept.contains(&(x, y, slot_t));
            }
        }
        let mut data = Vec::with_capacity(dims.channels * plane);
        for c in 0..dims.channels {
            data.extend(
                video
                    .plane(c, f)
                    .iter()
                    .zip(&grayed)
                    .map(|(&v, &g)| if g { style.gray } else { v }),
            );
        }
        frames.push(OverlayFrame {
            channels: dims.channels,
            height: dims.height,
            width: dims.width,
            data,
            grayed,
        });
    }
    Ok(frames)
}

/// Writes `frame_0000.png`, `frame_0001.png`, ... into `dir`.
pub fn save_overlay(frames: &[OverlayFrame], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let path = dir.join(format!("frame_{i:04}.png"));
            frame.to_rgb_image().save(&path).map_err(|e| RltError::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
            Ok(path)
        })
        .collect()
}
