//! Encoded-size measurement for cubemap clips.

pub mod entropy;
pub mod external;
pub mod reference;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{CubemapFrame, EquirectFrame, Plane};
use crate::geometry::Orientation;
use crate::projection::project_clip;

pub const DEFAULT_CLIP_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecId {
    H264,
    Hevc,
    Vp9,
    Reference,
}

impl CodecId {
    pub fn name(self) -> &'static str {
        match self {
            CodecId::H264 => "h264",
            CodecId::Hevc => "hevc",
            CodecId::Vp9 => "vp9",
            CodecId::Reference => "reference",
        }
    }

    pub fn is_external(self) -> bool {
        self != CodecId::Reference
    }
}

impl fmt::Display for CodecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodecId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h264" | "x264" | "avc" => Ok(CodecId::H264),
            "hevc" | "h265" | "x265" => Ok(CodecId::Hevc),
            "vp9" | "libvpx" => Ok(CodecId::Vp9),
            "reference" | "ref" => Ok(CodecId::Reference),
            other => Err(Error::Config(format!("unknown codec {other:?}"))),
        }
    }
}

/// One independently coded clip (one GOP).
#[derive(Debug, Clone)]
pub struct ClipSpec {
    pub frames: Vec<CubemapFrame>,
    pub fps: f64,
    pub clip_seconds: f64,
    /// Set for a trailing clip shorter than `fps * clip_seconds`.
    pub partial: bool,
}

impl ClipSpec {
    pub fn new(frames: Vec<CubemapFrame>, fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Input("a clip needs at least one frame".into()));
        }
        if !(fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            frames,
            fps,
            clip_seconds: DEFAULT_CLIP_SECONDS,
            partial: false,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn luma_planes(&self) -> Vec<Plane> {
        self.frames.iter().map(|f| f.luma().clone()).collect()
    }

    /// Same clip with the frame order reversed.
    pub fn reversed(&self) -> ClipSpec {
        let mut c = self.clone();
        c.frames.reverse();
        c
    }
}

/// Splits a frame sequence into consecutive non-overlapping clips. A shorter
/// trailing clip is kept and flagged `partial`.
pub fn split_clips<T: Clone>(
    frames: &[T],
    fps: f64,
    clip_seconds: f64,
) -> Result<Vec<(Vec<T>, bool)>> {
    if frames.is_empty() {
        return Err(Error::Input("cannot split an empty frame sequence".into()));
    }
    if !(fps > 0.0) || !(clip_seconds > 0.0) {
        return Err(Error::Config(format!(
            "fps and clip length must be positive (fps {fps}, seconds {clip_seconds})"
        )));
    }
    let per_clip = ((fps * clip_seconds).round() as usize).max(1);
    Ok(frames
        .chunks(per_clip)
        .map(|c| (c.to_vec(), c.len() < per_clip))
        .collect())
}

/// [`split_clips`] for cubemap frames, producing [`ClipSpec`]s.
pub fn split_cubemap_clips(
    frames: &[CubemapFrame],
    fps: f64,
    clip_seconds: f64,
) -> Result<Vec<ClipSpec>> {
    split_clips(frames, fps, clip_seconds)?
        .into_iter()
        .map(|(frames, partial)| {
            let mut clip = ClipSpec::new(frames, fps)?;
            clip.clip_seconds = clip_seconds;
            clip.partial = partial;
            Ok(clip)
        })
        .collect()
}

/// Forward motion of one block. `(dx, dy)` is the content displacement in
/// pixels, so the reference block lies at `(x - dx, y - dy)`; `dt` is the
/// signed frame offset of the reference frame (`-1` forward, `+1` backward,
/// `0` for intra blocks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MotionVector {
    pub dx: i16,
    pub dy: i16,
    pub dt: i16,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector {
        dx: 0,
        dy: 0,
        dt: 0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockMode {
    Intra,
    Inter,
}

/// Per-frame grids of block motion vectors and coding modes, one vector per
/// 8x8 block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionField {
    blocks_x: usize,
    blocks_y: usize,
    vectors: Vec<Vec<MotionVector>>,
    modes: Vec<Vec<BlockMode>>,
}

impl MotionField {
    pub fn new(blocks_x: usize, blocks_y: usize) -> Self {
        Self {
            blocks_x,
            blocks_y,
            vectors: Vec::new(),
            modes: Vec::new(),
        }
    }

    pub(crate) fn push_frame(&mut self, vectors: Vec<MotionVector>, modes: Vec<BlockMode>) {
        debug_assert_eq!(vectors.len(), self.blocks_x * self.blocks_y);
        self.vectors.push(vectors);
        self.modes.push(modes);
    }

    pub fn blocks_x(&self) -> usize {
        self.blocks_x
    }

    pub fn blocks_y(&self) -> usize {
        self.blocks_y
    }

    pub fn frame_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector(&self, frame: usize, bx: usize, by: usize) -> MotionVector {
        self.vectors[frame][by * self.blocks_x + bx]
    }

    pub fn mode(&self, frame: usize, bx: usize, by: usize) -> BlockMode {
        self.modes[frame][by * self.blocks_x + bx]
    }

    pub fn frame_vectors(&self, frame: usize) -> &[MotionVector] {
        &self.vectors[frame]
    }

    /// Re-indexes a field produced from a time-reversed encode so frame `t`
    /// refers to the original order; `dt` becomes `+1` for inter blocks.
    pub fn reversed_as_backward(&self) -> MotionField {
        let flip = |v: &MotionVector| MotionVector { dt: -v.dt, ..*v };
        MotionField {
            blocks_x: self.blocks_x,
            blocks_y: self.blocks_y,
            vectors: self
                .vectors
                .iter()
                .rev()
                .map(|f| f.iter().map(flip).collect())
                .collect(),
            modes: self.modes.iter().rev().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncodeResult {
    pub codec: CodecId,
    /// Encoded bit-stream size in bytes.
    pub bytes: u64,
    /// Present for the reference codec only.
    pub motion: Option<MotionField>,
}

/// Encodes a clip with the built-in reference codec.
pub fn encode_reference(clip: &ClipSpec) -> Result<EncodeResult> {
    let enc = reference::encode(&clip.luma_planes())?;
    Ok(EncodeResult {
        codec: CodecId::Reference,
        bytes: enc.bitstream.len() as u64,
        motion: Some(enc.motion),
    })
}

/// Encodes with whichever backend `codec` names.
pub fn encode(clip: &ClipSpec, codec: CodecId) -> Result<EncodeResult> {
    match codec {
        CodecId::Reference => encode_reference(clip),
        external => external::encode_external(clip, external),
    }
}

/// Renders an equirectangular clip at `o` and measures its encoded size.
pub fn size_at(
    clip_equirect: &[EquirectFrame],
    o: Orientation,
    codec: CodecId,
    face_size: usize,
    fps: f64,
) -> Result<u64> {
    let frames = project_clip(clip_equirect, o, face_size)?;
    let clip = ClipSpec::new(frames, fps)?;
    Ok(encode(&clip, codec)?.bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        let frames: Vec<u32> = (0..240).collect();
        let clips = split_clips(&frames, 30.0, 2.0).unwrap();
        assert_eq!(
            clips.iter().map(|c| c.0.len()).collect::<Vec<_>>(),
            vec![60; 4]
        );
        assert!(clips.iter().all(|c| !c.1));

        let clips = split_clips(&frames[..61], 30.0, 2.0).unwrap();
        assert_eq!(
            clips.iter().map(|c| c.0.len()).collect::<Vec<_>>(),
            vec![60, 1]
        );
        assert!(clips[1].1);

        let clips = split_clips(&frames[..48], 24.0, 2.0).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].0.len(), 48);
        assert!(!clips[0].1);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_clips::<u8>(&[], 30.0, 2.0),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            split_clips(&[1u8], 0.0, 2.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn codec_names_parse() {
        for c in [
            CodecId::H264,
            CodecId::Hevc,
            CodecId::Vp9,
            CodecId::Reference,
        ] {
            assert_eq!(c.name().parse::<CodecId>().unwrap(), c);
        }
        assert!("mpeg2".parse::<CodecId>().is_err());
    }

    #[test]
    fn backward_reindexing() {
        let mut f = MotionField::new(1, 1);
        f.push_frame(vec![MotionVector::ZERO], vec![BlockMode::Intra]);
        f.push_frame(
            vec![MotionVector {
                dx: 3,
                dy: 0,
                dt: -1,
            }],
            vec![BlockMode::Inter],
        );
        let b = f.reversed_as_backward();
        assert_eq!(
            b.vector(0, 0, 0),
            MotionVector {
                dx: 3,
                dy: 0,
                dt: 1
            }
        );
        assert_eq!(b.mode(1, 0, 0), BlockMode::Intra);
    }
}
