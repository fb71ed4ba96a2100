//! Predictor input: superpixel contours and block motion, averaged over four
//! temporal segments at 1/8 spatial resolution.
//!
//! # Tensor layout
//!
//! A [`FeatureTensor`] holds `4 x 7 x H x W` `f32` values, segment-major then
//! channel, row and column (`data[((s * 7 + c) * H + y) * W + x]`), where
//! `H` and `W` are the cubemap height and width divided by 8 and rounded up.
//! Channels are, in order: contour density, forward `dx`, `dy`, `dt`, and
//! backward `dx`, `dy`, `dt`.
//!
//! On disk the tensor is the 4-byte magic `ISFT`, a little-endian `u32`
//! version, four `u32` dimensions (segments, channels, height, width) and the
//! values as little-endian `f32`. A JSON sidecar with the same stem carries
//! the dimensions, channel names and clip id.

pub mod slic;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_reference, BlockMode, ClipSpec, EncodeResult, MotionField};
use crate::error::{Error, Result};
use crate::frame::Plane;
use crate::oracle::ClipId;

pub use slic::{slic_contours, SlicParams};

pub const SEGMENTS: usize = 4;
pub const CHANNELS: usize = 7;
pub const DOWNSCALE: usize = 8;
pub const CHANNEL_NAMES: [&str; CHANNELS] = [
    "contour", "fwd_dx", "fwd_dy", "fwd_dt", "bwd_dx", "bwd_dy", "bwd_dt",
];

const MAGIC: &[u8; 4] = b"ISFT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureTensor {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; SEGMENTS * CHANNELS * height * width],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [SEGMENTS, CHANNELS, self.height, self.width]
    }

    #[inline]
    pub fn index(&self, segment: usize, channel: usize, y: usize, x: usize) -> usize {
        ((segment * CHANNELS + channel) * self.height + y) * self.width + x
    }

    pub fn get(&self, segment: usize, channel: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(segment, channel, y, x)]
    }

    /// One `H x W` plane.
    pub fn plane(&self, segment: usize, channel: usize) -> &[f32] {
        let start = self.index(segment, channel, 0, 0);
        &self.data[start..start + self.height * self.width]
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        for d in self.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Input(format!("cannot read feature tensor: {e}")))?;
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(Error::Input("not a feature tensor".into()));
        }
        let word =
            |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        if word(1) != VERSION as usize {
            return Err(Error::Input(format!(
                "unsupported feature tensor version {}",
                word(1)
            )));
        }
        let (s, c, h, w) = (word(2), word(3), word(4), word(5));
        if s != SEGMENTS || c != CHANNELS {
            return Err(Error::Input(format!(
                "unexpected tensor shape {s}x{c}x{h}x{w}"
            )));
        }
        let body = &bytes[24..];
        if body.len() != s * c * h * w * 4 {
            return Err(Error::Input("feature tensor is truncated".into()));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub shape: [usize; 4],
    pub channel_names: Vec<String>,
    pub clip: ClipId,
    pub layout: String,
}

pub fn sidecar_path(tensor_path: &Path) -> PathBuf {
    tensor_path.with_extension("json")
}

/// Writes the tensor and its JSON sidecar.
pub fn write_feature_tensor(path: &Path, t: &FeatureTensor, clip: &ClipId) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    t.write_to(std::io::BufWriter::new(file))
        .map_err(|e| Error::io(path, e))?;
    let sidecar = FeatureSidecar {
        shape: t.shape(),
        channel_names: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        clip: clip.clone(),
        layout: "segment, channel, row, column; little-endian f32".into(),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
}

pub fn read_feature_tensor(path: &Path) -> Result<(FeatureTensor, FeatureSidecar)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let tensor = FeatureTensor::read_from(std::io::BufReader::new(file))?;
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: FeatureSidecar = serde_json::from_str(&text)?;
    if sidecar.shape != tensor.shape() {
        return Err(Error::Input(
            "sidecar shape does not match the tensor".into(),
        ));
    }
    Ok((tensor, sidecar))
}

/// Six motion channels for one frame at block resolution: forward
/// `(dx, dy, dt)` then backward `(dx, dy, dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionMap {
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// `[channel][by][bx]`
    pub values: Vec<f32>,
}

impl MotionMap {
    pub fn get(&self, channel: usize, bx: usize, by: usize) -> f32 {
        self.values[(channel * self.blocks_y + by) * self.blocks_x + bx]
    }
}

fn motion_of(enc: &EncodeResult) -> Result<&MotionField> {
    enc.motion.as_ref().ok_or_else(|| {
        Error::Input(format!(
            "{} encodes carry no motion vectors; use the reference codec for features",
            enc.codec
        ))
    })
}

/// Per-frame motion maps from a natural-order encode and a field already
/// re-indexed to natural order from a reversed encode
/// (see [`MotionField::reversed_as_backward`]). Intra blocks are zero.
pub fn motion_features(forward: &EncodeResult, backward: &EncodeResult) -> Result<Vec<MotionMap>> {
    let (f, b) = (motion_of(forward)?, motion_of(backward)?);
    if f.frame_count() != b.frame_count()
        || f.blocks_x() != b.blocks_x()
        || f.blocks_y() != b.blocks_y()
    {
        return Err(Error::Input(
            "forward and backward motion fields disagree in shape".into(),
        ));
    }
    let (bw, bh) = (f.blocks_x(), f.blocks_y());
    Ok((0..f.frame_count())
        .map(|t| {
            let mut values = vec![0.0f32; 6 * bw * bh];
            for (side, field) in [f, b].into_iter().enumerate() {
                for by in 0..bh {
                    for bx in 0..bw {
                        if field.mode(t, bx, by) == BlockMode::Intra {
                            continue;
                        }
                        let v = field.vector(t, bx, by);
                        for (k, c) in [v.dx, v.dy, v.dt].into_iter().enumerate() {
                            values[((3 * side + k) * bh + by) * bw + bx] = c as f32;
                        }
                    }
                }
            }
            MotionMap {
                blocks_x: bw,
                blocks_y: bh,
                values,
            }
        })
        .collect())
}

/// Encodes `clip` forwards and backwards with the reference codec.
pub fn bidirectional_encodes(clip: &ClipSpec) -> Result<(EncodeResult, EncodeResult)> {
    let forward = encode_reference(clip)?;
    let mut backward = encode_reference(&clip.reversed())?;
    backward.motion = backward.motion.map(|m| m.reversed_as_backward());
    Ok((forward, backward))
}

/// 8x8 max-pool of a binary plane; partial border blocks pool what they cover.
pub fn max_pool(p: &Plane, k: usize) -> Plane {
    let (w, h) = (p.width().div_ceil(k), p.height().div_ceil(k));
    Plane::from_fn(w, h, |bx, by| {
        let mut m = 0;
        for y in by * k..((by + 1) * k).min(p.height()) {
            for &v in &p.row(y)[bx * k..((bx + 1) * k).min(p.width())] {
                m = m.max(v);
            }
        }
        m
    })
}

/// Frame range `[start, end)` of each temporal quarter of `n` frames.
pub fn segment_bounds(n: usize) -> [(usize, usize); SEGMENTS] {
    std::array::from_fn(|s| (s * n / SEGMENTS, (s + 1) * n / SEGMENTS))
}

/// Builds the tensor from a clip and its two encodes.
pub fn build_feature_tensor(
    clip: &ClipSpec,
    forward: &EncodeResult,
    backward: &EncodeResult,
    p: &SlicParams,
) -> Result<FeatureTensor> {
    if clip.len() < SEGMENTS {
        return Err(Error::Input(format!(
            "feature extraction needs at least {SEGMENTS} frames, got {}",
            clip.len()
        )));
    }
    let motion = motion_features(forward, backward)?;
    if motion.len() != clip.len() {
        return Err(Error::Input(
            "motion field does not match the clip length".into(),
        ));
    }
    let contours: Vec<Plane> = clip
        .frames
        .par_iter()
        .map(|f| slic_contours(f, p).map(|c| max_pool(&c, DOWNSCALE)))
        .collect::<Result<_>>()?;
    let (h, w) = (contours[0].height(), contours[0].width());
    if motion[0].blocks_x != w || motion[0].blocks_y != h {
        return Err(Error::Input(
            "motion grid does not match the frame size".into(),
        ));
    }

    let mut out = FeatureTensor::zeros(h, w);
    let mut acc = vec![0.0f64; CHANNELS * h * w];
    for (s, (start, end)) in segment_bounds(clip.len()).into_iter().enumerate() {
        acc.fill(0.0);
        for t in start..end {
            for (a, &v) in acc[..h * w].iter_mut().zip(contours[t].data()) {
                *a += v as f64;
            }
            for (a, &v) in acc[h * w..].iter_mut().zip(&motion[t].values) {
                *a += v as f64;
            }
        }
        let n = (end - start) as f64;
        let base = out.index(s, 0, 0, 0);
        for (o, a) in out.data[base..base + CHANNELS * h * w].iter_mut().zip(&acc) {
            *o = (a / n) as f32;
        }
    }
    Ok(out)
}

/// Runs both encodes and builds the tensor.
pub fn extract_features(clip: &ClipSpec, p: &SlicParams) -> Result<FeatureTensor> {
    let (forward, backward) = bidirectional_encodes(clip)?;
    build_feature_tensor(clip, &forward, &backward, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{CodecId, MotionVector};
    use crate::scenes::{static_cubemap, translating_cubemap};

    fn small_slic() -> SlicParams {
        SlicParams {
            superpixels_per_face: 16,
            ..SlicParams::default()
        }
    }

    #[test]
    fn quarters_are_equal_for_sixty_frames() {
        assert_eq!(segment_bounds(60), [(0, 15), (15, 30), (30, 45), (45, 60)]);
        assert_eq!(segment_bounds(5), [(0, 1), (1, 2), (2, 3), (3, 5)]);
    }

    #[test]
    fn pooling_keeps_thin_edges() {
        let mut p = Plane::filled(16, 16, 0);
        p.set(3, 12, 1);
        let m = max_pool(&p, 8);
        assert_eq!((m.width(), m.height()), (2, 2));
        assert_eq!(m.data(), &[0, 0, 1, 0]);
        assert_eq!(max_pool(&Plane::filled(20, 12, 1), 8).width(), 3);
    }

    #[test]
    fn static_clip_has_zero_motion() {
        let clip = ClipSpec::new(static_cubemap(16, 6, 4), 24.0).unwrap();
        let t = extract_features(&clip, &small_slic()).unwrap();
        assert_eq!(t.shape(), [4, 7, 4, 6]);
        for s in 0..4 {
            // no displacement; dt still records the reference frame of
            // inter blocks
            for c in [1, 2, 4, 5] {
                assert!(t.plane(s, c).iter().all(|&v| v == 0.0));
            }
            assert!(t.plane(s, 3).iter().all(|&v| (-1.0..=0.0).contains(&v)));
            assert!(t.plane(s, 6).iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(t.plane(s, 0).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn pan_shows_up_in_both_directions() {
        let clip = ClipSpec::new(translating_cubemap(32, 4, 2, 0, 9), 24.0).unwrap();
        let (f, b) = bidirectional_encodes(&clip).unwrap();
        let maps = motion_features(&f, &b).unwrap();
        // interior block of frame 1: forward from frame 0, backward from frame 2
        assert_eq!(maps[1].get(0, 5, 3), 2.0);
        assert_eq!(maps[1].get(2, 5, 3), -1.0);
        assert_eq!(maps[1].get(3, 5, 3), -2.0);
        assert_eq!(maps[1].get(5, 5, 3), 1.0);
        // first frame has no forward reference, last frame no backward one
        assert!(maps[0].values[..3 * 8 * 12].iter().all(|&v| v == 0.0));
        assert!(maps[3].values[3 * 8 * 12..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slow_motion_keeps_contours() {
        let frames = translating_cubemap(16, 8, 1, 0, 2);
        let doubled: Vec<_> = frames.iter().flat_map(|f| [f.clone(), f.clone()]).collect();
        let a = extract_features(&ClipSpec::new(frames, 24.0).unwrap(), &small_slic()).unwrap();
        let b = extract_features(&ClipSpec::new(doubled, 24.0).unwrap(), &small_slic()).unwrap();
        for s in 0..4 {
            assert_eq!(a.plane(s, 0), b.plane(s, 0));
        }
    }

    #[test]
    fn motion_requires_the_reference_codec() {
        let enc = EncodeResult {
            codec: CodecId::H264,
            bytes: 10,
            motion: None,
        };
        assert!(matches!(motion_features(&enc, &enc), Err(Error::Input(_))));
    }

    #[test]
    fn intra_blocks_are_zero() {
        let mut field = MotionField::new(1, 1);
        field.push_frame(
            vec![MotionVector {
                dx: 4,
                dy: 4,
                dt: -1,
            }],
            vec![BlockMode::Intra],
        );
        let enc = EncodeResult {
            codec: CodecId::Reference,
            bytes: 10,
            motion: Some(field),
        };
        let maps = motion_features(&enc, &enc).unwrap();
        assert!(maps[0].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tensor_file_round_trip() {
        let clip = ClipSpec::new(translating_cubemap(16, 4, 1, 1, 3), 24.0).unwrap();
        let t = extract_features(&clip, &small_slic()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.ft");
        write_feature_tensor(&path, &t, &ClipId::new("v", 0)).unwrap();
        let (back, side) = read_feature_tensor(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(side.channel_names.len(), 7);
        assert_eq!(t, extract_features(&clip, &small_slic()).unwrap());
    }
}
