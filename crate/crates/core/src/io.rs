//! File formats and frame ingestion.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! RLTV1  raw video
//!   "RLTV1" | dtype u8 (0 = f32, 1 = u8) | C T H W u32 | C*T*H*W samples (channel-major)
//!
//! config block (shared by RLTT1 and RLTP1)
//!   D_x D_y D_t embed_dim u32 | tau f64 | metric u8 (0 = mean, 1 = sum)
//!   | n u32 | mean f32 * n | std f32 * n
//!
//! sequence header
//!   C T H W u32 | source_u8 u8 | strategy (u16 length + UTF-8)
//!   | mask_ratio f64 | seed u64 | token count u32
//!
//! token record
//!   x y t run_length u32 | C*D_x*D_y*D_t f32
//!
//! RLTT1  "RLTT1" | config block | sequence header | records
//! RLTP1  "RLTP1" | config block | B u32 | B * (source id (u16 length + UTF-8) | sequence header)
//!        | records of all segments in order
//! ```

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, RltError};
use crate::packing::{PackedBatch, Segment};
use crate::rlt::{DiffMetric, SequenceMeta, Threshold, TokenPos, TokenSequence, TokenizerSettings};
use crate::tensor::{NormalizationParams, TubeletConfig, VideoDims, VideoTensor};

pub const VIDEO_MAGIC: &[u8; 5] = b"RLTV1";
pub const SEQUENCE_MAGIC: &[u8; 5] = b"RLTT1";
pub const PACKED_MAGIC: &[u8; 5] = b"RLTP1";

/// Sample encoding of an RLTV1 payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawDtype {
    F32,
    U8,
}

impl RawDtype {
    fn code(self) -> u8 {
        match self {
            RawDtype::F32 => 0,
            RawDtype::U8 => 1,
        }
    }

    fn size(self) -> usize {
        match self {
            RawDtype::F32 => 4,
            RawDtype::U8 => 1,
        }
    }
}

/// Byte reader that reports offsets in its errors.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.buf.len() - self.pos;
        if remaining < n {
            return Err(RltError::parse(
                self.pos as u64,
                format!("truncated {what}: expected {n} bytes, found {remaining}"),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 5]) -> Result<()> {
        let got = self.take(5, "magic")?;
        if got != expected {
            return Err(RltError::parse(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| RltError::parse(self.pos as u64, format!("{what} size overflows")))?;
        Ok(self
            .take(bytes, what)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos as u64;
        let n = self.u16(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| RltError::parse(at, format!("{what} is not UTF-8")))
    }

    fn dims(&mut self) -> Result<VideoDims> {
        let at = self.pos as u64;
        let d = VideoDims::new(
            self.u32("C")? as usize,
            self.u32("T")? as usize,
            self.u32("H")? as usize,
            self.u32("W")? as usize,
        );
        if d.checked_len().is_none() {
            return Err(RltError::parse(at, format!("dimensions {d} overflow")));
        }
        if d.is_empty() {
            return Err(RltError::parse(at, format!("dimensions {d} contain a zero axis")));
        }
        Ok(d)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(RltError::parse(
                self.pos as u64,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| RltError::usage(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let n = u16::try_from(s.len()).map_err(|_| RltError::usage("string longer than 65535 bytes"))?;
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_dims(out: &mut Vec<u8>, d: VideoDims) -> Result<()> {
    for v in [d.channels, d.frames, d.height, d.width] {
        put_u32(out, v)?;
    }
    Ok(())
}

// ---- raw video ----

pub fn encode_raw(video: &VideoTensor, dtype: RawDtype) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(22 + video.data().len() * dtype.size());
    out.extend_from_slice(VIDEO_MAGIC);
    out.push(dtype.code());
    put_dims(&mut out, video.dims())?;
    match dtype {
        RawDtype::F32 => {
            for v in video.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        RawDtype::U8 => out.extend(video.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)),
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<(VideoTensor, RawDtype)> {
    let mut cur = Cursor::new(bytes);
    cur.magic(VIDEO_MAGIC)?;
    let dtype = match cur.u8("dtype")? {
        0 => RawDtype::F32,
        1 => RawDtype::U8,
        other => return Err(RltError::parse(5, format!("unknown dtype code {other}"))),
    };
    let dims = cur.dims()?;
    let expected = dims
        .len()
        .checked_mul(dtype.size())
        .ok_or_else(|| RltError::parse(6, "payload size overflows"))?;
    let actual = bytes.len() - cur.pos;
    if actual != expected {
        return Err(RltError::parse(
            cur.pos as u64,
            format!("payload for {dims} needs {expected} bytes, file has {actual}"),
        ));
    }
    let payload = cur.take(expected, "payload")?;
    let video = match dtype {
        RawDtype::F32 => VideoTensor::new(
            dims,
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        )?,
        RawDtype::U8 => VideoTensor::from_u8(dims, payload)?,
    };
    Ok((video, dtype))
}

pub fn write_raw(path: &Path, video: &VideoTensor, dtype: RawDtype) -> Result<()> {
    fs::write(path, encode_raw(video, dtype)?)?;
    Ok(())
}

/// Reads an RLTV1 file; u8 payloads are scaled by 1/255.
pub fn read_raw(path: &Path) -> Result<VideoTensor> {
    Ok(read_raw_with_dtype(path)?.0)
}

pub fn read_raw_with_dtype(path: &Path) -> Result<(VideoTensor, RawDtype)> {
    decode_raw(&fs::read(path)?)
}

// ---- image directories ----

/// Loads every file in `dir` whose name matches the glob `pattern`, ordered
/// by natural filename sort, as RGB frames (alpha dropped).
pub fn read_image_dir(dir: &Path, pattern: &str) -> Result<VideoTensor> {
    let pat = glob::Pattern::new(pattern).map_err(|e| RltError::usage(format!("bad file pattern {pattern:?}: {e}")))?;
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| pat.matches(n))
        .collect();
    names.sort_by(|a, b| natord::compare(a, b));
    if names.is_empty() {
        return Err(RltError::usage(format!(
            "no files matching {pattern:?} in {}",
            dir.display()
        )));
    }
    let mut frames = Vec::with_capacity(names.len());
    for name in &names {
        let path = dir.join(name);
        let img = image::open(&path).map_err(|e| RltError::Image {
            path: path.clone(),
            message: e.to_string(),
        })?;
        frames.push((path, img.to_rgb8()));
    }
    let (w, h) = frames[0].1.dimensions();
    let offenders: Vec<String> = frames
        .iter()
        .filter(|(_, f)| f.dimensions() != (w, h))
        .map(|(p, f)| format!("{} ({}x{})", p.display(), f.width(), f.height()))
        .collect();
    if !offenders.is_empty() {
        return Err(RltError::DataValidity(format!(
            "frames differ from {w}x{h}: {}",
            offenders.join(", ")
        )));
    }
    let dims = VideoDims::new(3, frames.len(), h as usize, w as usize);
    let plane = dims.height * dims.width;
    let mut data = vec![0.0f32; dims.len()];
    for (t, (_, frame)) in frames.iter().enumerate() {
        for (i, px) in frame.pixels().enumerate() {
            for c in 0..3 {
                data[(c * dims.frames + t) * plane + i] = px[c] as f32 / 255.0;
            }
        }
    }
    VideoTensor::new(dims, data)
}

// ---- raw frame pipe ----

/// Reads `frames` interleaved `H x W x C` 8-bit frames (e.g. `rgb24` from an
/// external decoder) and transposes them to channel-major floats in `[0, 1]`.
pub fn read_frame_pipe<R: Read>(mut stream: R, dims: VideoDims) -> Result<VideoTensor> {
    if dims.checked_len().is_none() || dims.is_empty() {
        return Err(RltError::usage(format!("invalid pipe dimensions {dims}")));
    }
    let (c, plane) = (dims.channels, dims.height * dims.width);
    let mut frame = vec![0u8; plane * c];
    let mut data = vec![0.0f32; dims.len()];
    for t in 0..dims.frames {
        if let Err(e) = stream.read_exact(&mut frame) {
            return Err(RltError::Stream {
                frames_received: t,
                frames_expected: dims.frames,
                message: e.to_string(),
            });
        }
        for (i, px) in frame.chunks_exact(c).enumerate() {
            for (ch, &b) in px.iter().enumerate() {
                data[(ch * dims.frames + t) * plane + i] = b as f32 / 255.0;
            }
        }
    }
    VideoTensor::new(dims, data)
}

/// Loads a video from an RLTV1 file or an image directory. The flag is true
/// when samples were 8-bit.
pub fn load_video(path: &Path, pattern: &str) -> Result<(VideoTensor, bool)> {
    if path.is_dir() {
        Ok((read_image_dir(path, pattern)?, true))
    } else {
        let (v, dtype) = read_raw_with_dtype(path)?;
        Ok((v, dtype == RawDtype::U8))
    }
}

/// Channel count of a video input without loading its payload: image
/// directories are always RGB, RLTV1 files are read up to their header.
pub fn probe_channels(path: &Path) -> Result<usize> {
    if path.is_dir() {
        return Ok(3);
    }
    let mut head = [0u8; 22];
    let mut file = fs::File::open(path)?;
    let mut filled = 0;
    while filled < head.len() {
        match file.read(&mut head[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    let mut cur = Cursor::new(&head[..filled]);
    cur.magic(VIDEO_MAGIC)?;
    cur.u8("dtype")?;
    Ok(cur.dims()?.channels)
}

// ---- token files ----

fn put_config(out: &mut Vec<u8>, s: &TokenizerSettings) -> Result<()> {
    let c = s.config;
    for v in [c.patch_x, c.patch_y, c.tubelet_t, c.embed_dim] {
        put_u32(out, v)?;
    }
    out.extend_from_slice(&s.tau.value().to_le_bytes());
    out.push(s.metric.code());
    put_u32(out, s.norm.channels())?;
    for v in s.norm.mean().iter().chain(s.norm.std()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Config-block fields; strategy fields are filled from the sequence header.
fn get_config(cur: &mut Cursor<'_>) -> Result<TokenizerSettings> {
    let at = cur.pos as u64;
    let config = TubeletConfig {
        patch_x: cur.u32("D_x")? as usize,
        patch_y: cur.u32("D_y")? as usize,
        tubelet_t: cur.u32("D_t")? as usize,
        embed_dim: cur.u32("embed_dim")? as usize,
    };
    if config.patch_x == 0 || config.patch_y == 0 || config.tubelet_t == 0 {
        return Err(RltError::parse(at, "zero tubelet size"));
    }
    let tau_at = cur.pos as u64;
    let tau = Threshold::try_from(cur.f64("tau")?).map_err(|e| RltError::parse(tau_at, e.to_string()))?;
    let metric_at = cur.pos as u64;
    let metric =
        DiffMetric::from_code(cur.u8("metric")?).ok_or_else(|| RltError::parse(metric_at, "unknown metric code"))?;
    let norm_at = cur.pos as u64;
    let n = cur.u32("norm channel count")? as usize;
    let mean = cur.f32s(n, "norm mean")?;
    let std = cur.f32s(n, "norm std")?;
    let norm = NormalizationParams::new(mean, std).map_err(|e| RltError::parse(norm_at, e.to_string()))?;
    Ok(TokenizerSettings {
        config,
        norm,
        tau,
        metric,
        ..TokenizerSettings::default()
    })
}

fn put_header(out: &mut Vec<u8>, meta: &SequenceMeta, count: usize) -> Result<()> {
    put_dims(out, meta.dims)?;
    out.push(meta.settings.source_u8 as u8);
    put_str(out, &meta.settings.strategy)?;
    out.extend_from_slice(&meta.settings.mask_ratio.to_le_bytes());
    out.extend_from_slice(&meta.settings.seed.to_le_bytes());
    put_u32(out, count)
}

fn get_header(cur: &mut Cursor<'_>, shared: &TokenizerSettings) -> Result<(SequenceMeta, usize)> {
    let dims = cur.dims()?;
    let source_u8 = cur.u8("source_u8")? != 0;
    let strategy = cur.string("strategy")?;
    let mask_ratio = cur.f64("mask_ratio")?;
    let seed = cur.u64("seed")?;
    let count = cur.u32("token count")? as usize;
    let settings = TokenizerSettings {
        strategy,
        mask_ratio,
        seed,
        source_u8,
        ..shared.clone()
    };
    Ok((SequenceMeta { dims, settings }, count))
}

fn put_records(out: &mut Vec<u8>, tokens: &[TokenPos], payload: &[f32], plen: usize) {
    for (i, tok) in tokens.iter().enumerate() {
        let patch = &payload[i * plen..(i + 1) * plen];
        for v in [tok.x, tok.y, tok.t, tok.run_length] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in patch {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn get_records(cur: &mut Cursor<'_>, count: usize, plen: usize) -> Result<(Vec<TokenPos>, Vec<f32>)> {
    let record = 16 + 4 * plen;
    let need = count
        .checked_mul(record)
        .ok_or_else(|| RltError::parse(cur.pos as u64, "record block size overflows"))?;
    let remaining = cur.buf.len() - cur.pos;
    if remaining < need {
        return Err(RltError::parse(
            cur.pos as u64,
            format!("{count} token records need {need} bytes, found {remaining}"),
        ));
    }
    let mut tokens = Vec::with_capacity(count);
    let mut payload = Vec::with_capacity(count * plen);
    for _ in 0..count {
        tokens.push(TokenPos {
            x: cur.u32("x")?,
            y: cur.u32("y")?,
            t: cur.u32("t")?,
            run_length: cur.u32("run length")?,
        });
        payload.extend(cur.f32s(plen, "patch")?);
    }
    Ok((tokens, payload))
}

pub fn encode_tokens(seq: &TokenSequence) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(SEQUENCE_MAGIC);
    put_config(&mut out, seq.settings())?;
    put_header(&mut out, seq.meta(), seq.len())?;
    put_records(&mut out, seq.tokens(), seq.payload(), seq.patch_len());
    Ok(out)
}

pub fn decode_tokens(bytes: &[u8]) -> Result<TokenSequence> {
    let mut cur = Cursor::new(bytes);
    cur.magic(SEQUENCE_MAGIC)?;
    let shared = get_config(&mut cur)?;
    let (meta, count) = get_header(&mut cur, &shared)?;
    let at = cur.pos as u64;
    let (tokens, payload) = get_records(&mut cur, count, meta.patch_len())?;
    cur.finish()?;
    TokenSequence::from_parts(meta, tokens, payload).map_err(|e| RltError::parse(at, e.to_string()))
}

pub fn encode_packed(batch: &PackedBatch) -> Result<Vec<u8>> {
    batch.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(PACKED_MAGIC);
    put_config(&mut out, &batch.segments()[0].meta.settings)?;
    put_u32(&mut out, batch.num_segments())?;
    for (seg, len) in batch.segments().iter().zip(batch.segment_lengths()) {
        put_str(&mut out, &seg.source_id)?;
        put_header(&mut out, &seg.meta, len)?;
    }
    put_records(&mut out, batch.tokens(), batch.payload(), batch.patch_len());
    Ok(out)
}

/// Parses an RLTP1 buffer. Segment counts that do not form valid boundaries
/// yield an integrity error.
pub fn decode_packed(bytes: &[u8]) -> Result<PackedBatch> {
    let mut cur = Cursor::new(bytes);
    cur.magic(PACKED_MAGIC)?;
    let shared = get_config(&mut cur)?;
    let b = cur.u32("segment count")? as usize;
    let mut segments = Vec::with_capacity(b.min(1 << 16));
    let mut boundaries = Vec::with_capacity(b.min(1 << 16) + 1);
    boundaries.push(0usize);
    for _ in 0..b {
        let source_id = cur.string("source id")?;
        let (meta, count) = get_header(&mut cur, &shared)?;
        boundaries.push(boundaries.last().unwrap() + count);
        segments.push(Segment { source_id, meta });
    }
    let plen = segments
        .first()
        .map(|s| s.meta.patch_len())
        .ok_or_else(|| RltError::Integrity("packed file has no segments".into()))?;
    let (tokens, payload) = get_records(&mut cur, *boundaries.last().unwrap(), plen)?;
    cur.finish()?;
    let batch = PackedBatch::from_parts(tokens, payload, boundaries, segments)?;
    // per-segment structure (ordering, bounds) is checked by unpacking
    crate::packing::unpack(&batch)?;
    Ok(batch)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

pub fn write_tokens(path: &Path, seq: &TokenSequence) -> Result<()> {
    write_file(path, &encode_tokens(seq)?)
}

pub fn read_tokens(path: &Path) -> Result<TokenSequence> {
    decode_tokens(&fs::read(path)?)
}

pub fn write_packed(path: &Path, batch: &PackedBatch) -> Result<()> {
    write_file(path, &encode_packed(batch)?)
}

pub fn read_packed(path: &Path) -> Result<PackedBatch> {
    decode_packed(&fs::read(path)?)
}

/// Either kind of token file, dispatched on magic.
#[derive(Debug, Clone, PartialEq)]
pub enum TokenFile {
    Sequence(TokenSequence),
    Packed(PackedBatch),
}

pub fn read_token_file(path: &Path) -> Result<TokenFile> {
    let bytes = fs::read(path)?;
    match bytes.get(..5) {
        Some(m) if m == SEQUENCE_MAGIC => decode_tokens(&bytes).map(TokenFile::Sequence),
        Some(m) if m == PACKED_MAGIC => decode_packed(&bytes).map(TokenFile::Packed),
        _ => Err(RltError::parse(
            0,
            format!("{} is not an RLTT1/RLTP1 file", path.display()),
        )),
    }
}

/// `dir/<stem><suffix>` for an input path.
pub fn derived_path(dir: &Path, input: &Path, suffix: &str) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    dir.join(format!("{stem}{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u8_full_scale_is_one() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(VIDEO_MAGIC);
        bytes.push(1);
        for d in [1u32, 1, 1, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        bytes.extend_from_slice(&[255, 0]);
        let (v, dtype) = decode_raw(&bytes).unwrap();
        assert_eq!(dtype, RawDtype::U8);
        assert_eq!(v.data(), &[1.0, 0.0]);
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let v = VideoTensor::new(VideoDims::new(1, 1, 2, 2), vec![0.5; 4]).unwrap();
        let mut bytes = encode_raw(&v, RawDtype::F32).unwrap();
        bytes.truncate(bytes.len() - 3);
        let msg = decode_raw(&bytes).unwrap_err().to_string();
        assert!(msg.contains("needs 16 bytes") && msg.contains("has 13"), "{msg}");
        assert!(msg.contains("byte 22"), "{msg}");
    }

    #[test]
    fn bad_magic_and_overflow() {
        assert!(matches!(decode_raw(b"RLTX1\0"), Err(RltError::Parse { offset: 0, .. })));
        let mut bytes = VIDEO_MAGIC.to_vec();
        bytes.push(0);
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        let err = decode_raw(&bytes).unwrap_err().to_string();
        assert!(err.contains("overflow"), "{err}");
    }

    #[test]
    fn pipe_layout_matches_index_arithmetic() {
        let dims = VideoDims::new(3, 2, 2, 3);
        // byte value encodes its own (t, h, w, c) position
        let bytes: Vec<u8> = (0..dims.len()).map(|i| i as u8).collect();
        let v = read_frame_pipe(&bytes[..], dims).unwrap();
        for t in 0..2 {
            for h in 0..2 {
                for w in 0..3 {
                    for c in 0..3 {
                        let src = ((t * 2 + h) * 3 + w) * 3 + c;
                        assert_eq!(v.get(c, t, h, w), src as f32 / 255.0);
                    }
                }
            }
        }
    }

    #[test]
    fn pipe_constant_and_short_reads() {
        let dims = VideoDims::new(3, 2, 2, 2);
        let v = read_frame_pipe(&vec![51u8; 24][..], dims).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.2));
        match read_frame_pipe(&[][..], dims) {
            Err(RltError::Stream { frames_received, .. }) => assert_eq!(frames_received, 0),
            other => panic!("unexpected {other:?}"),
        }
        match read_frame_pipe(&vec![0u8; 20][..], dims) {
            Err(RltError::Stream { frames_received, .. }) => assert_eq!(frames_received, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
