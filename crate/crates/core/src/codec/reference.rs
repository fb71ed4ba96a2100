//! Deterministic lossless reference codec.
//!
//! Luma only, one intra frame per clip followed by motion-compensated frames:
//!
//! * The first frame is coded pixel by pixel with the median edge detector
//!   (MED) predictor over the left, top and top-left neighbours.
//! * Later frames are split into 8x8 blocks (smaller at the right and bottom
//!   borders). Each block runs a full search over +-16 px in the previous
//!   frame by SAD and falls back to intra (MED) coding when the best SAD
//!   exceeds the block's summed absolute MED residual.
//! * Motion vectors are coded as deltas against the component-wise median of
//!   the left, top and top-right block vectors.
//! * Every residual, vector delta and mode flag goes through the adaptive
//!   binary range coder in [`super::entropy`].
//!
//! Residuals are taken modulo 256, which keeps them in `[-128, 127]` and the
//! reconstruction exact.
//!
//! # Bitstream
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ISRC"
//! 4       1     version (1)
//! 5       2     width, little endian
//! 7       2     height, little endian
//! 9       4     frame count, little endian
//! 13      ...   range coder payload
//! ```
//!
//! A motion vector `(dx, dy)` is the displacement of the block content from
//! the reference frame: the reference block sits at `(x - dx, y - dy)`.

use super::entropy::{BinCoder, BitModel, RangeDecoder, RangeEncoder, SignedModel};
use super::{BlockMode, MotionField, MotionVector};
use crate::error::{Error, Result};
use crate::frame::Plane;

pub const MAGIC: &[u8; 4] = b"ISRC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 13;
pub const BLOCK: usize = 8;
pub const SEARCH_RANGE: i32 = 16;

const CONTEXTS: usize = 8;

fn quantize_activity(d: u32) -> usize {
    match d {
        0 => 0,
        1..=2 => 1,
        3..=5 => 2,
        6..=10 => 3,
        11..=20 => 4,
        21..=40 => 5,
        41..=80 => 6,
        _ => 7,
    }
}

#[inline]
fn wrap_residual(r: i32) -> i32 {
    ((r + 128) & 255) - 128
}

/// MED prediction and coding context for pixel `(x, y)` of `p`, using only
/// causal neighbours.
#[inline]
fn med(p: &[u8], width: usize, x: usize, y: usize) -> (i32, usize) {
    match (x, y) {
        (0, 0) => (128, 0),
        (_, 0) => {
            let a = p[x - 1] as i32;
            (a, 0)
        }
        (0, _) => {
            let b = p[(y - 1) * width] as i32;
            (b, 0)
        }
        _ => {
            let a = p[y * width + x - 1] as i32;
            let b = p[(y - 1) * width + x] as i32;
            let c = p[(y - 1) * width + x - 1] as i32;
            let pred = if c >= a.max(b) {
                a.min(b)
            } else if c <= a.min(b) {
                a.max(b)
            } else {
                a + b - c
            };
            let activity = ((a - c).abs() + (b - c).abs()) as u32;
            (pred, quantize_activity(activity))
        }
    }
}

struct Models {
    intra: Vec<SignedModel>,
    inter: Vec<SignedModel>,
    mode: [BitModel; 3],
    mvd_x: SignedModel,
    mvd_y: SignedModel,
}

impl Models {
    fn new() -> Self {
        Self {
            intra: vec![SignedModel::default(); CONTEXTS],
            inter: vec![SignedModel::default(); CONTEXTS],
            mode: [BitModel::default(); 3],
            mvd_x: SignedModel::default(),
            mvd_y: SignedModel::default(),
        }
    }
}

#[derive(Clone, Copy)]
struct BlockRect {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

fn blocks(width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(BLOCK), height.div_ceil(BLOCK))
}

fn block_rect(bx: usize, by: usize, width: usize, height: usize) -> BlockRect {
    let x0 = bx * BLOCK;
    let y0 = by * BLOCK;
    BlockRect {
        x0,
        y0,
        w: BLOCK.min(width - x0),
        h: BLOCK.min(height - y0),
    }
}

/// Sum of absolute wrapped MED residuals over a block of a fully known frame.
fn intra_cost(p: &[u8], width: usize, r: BlockRect) -> u32 {
    let mut cost = 0u32;
    for y in r.y0..r.y0 + r.h {
        for x in r.x0..r.x0 + r.w {
            let (pred, _) = med(p, width, x, y);
            cost += wrap_residual(p[y * width + x] as i32 - pred).unsigned_abs();
        }
    }
    cost
}

/// SAD between the block at `r` in `cur` and the block displaced by `-mv` in
/// `reference`; gives up once the partial sum reaches `limit`.
#[inline]
fn sad(
    cur: &[u8],
    reference: &[u8],
    width: usize,
    r: BlockRect,
    mv: (i32, i32),
    limit: u32,
) -> u32 {
    let rx = (r.x0 as i32 - mv.0) as usize;
    let ry = (r.y0 as i32 - mv.1) as usize;
    let mut total = 0u32;
    for row in 0..r.h {
        let a = &cur[(r.y0 + row) * width + r.x0..][..r.w];
        let b = &reference[(ry + row) * width + rx..][..r.w];
        total += a
            .iter()
            .zip(b)
            .map(|(p, q)| (*p as i32 - *q as i32).unsigned_abs())
            .sum::<u32>();
        if total >= limit {
            return total;
        }
    }
    total
}

fn mv_valid(r: BlockRect, mv: (i32, i32), width: usize, height: usize) -> bool {
    let rx = r.x0 as i32 - mv.0;
    let ry = r.y0 as i32 - mv.1;
    mv.0.abs() <= SEARCH_RANGE
        && mv.1.abs() <= SEARCH_RANGE
        && rx >= 0
        && ry >= 0
        && rx as usize + r.w <= width
        && ry as usize + r.h <= height
}

/// Full search; candidates are tried as zero, predicted, then raster order,
/// and only a strictly smaller SAD replaces the incumbent.
fn motion_search(
    cur: &[u8],
    reference: &[u8],
    width: usize,
    height: usize,
    r: BlockRect,
    predicted: (i32, i32),
) -> ((i32, i32), u32) {
    let mut best = (0, 0);
    let mut best_sad = sad(cur, reference, width, r, best, u32::MAX);
    if best_sad == 0 {
        return (best, 0);
    }
    if predicted != (0, 0) && mv_valid(r, predicted, width, height) {
        let s = sad(cur, reference, width, r, predicted, best_sad);
        if s < best_sad {
            best = predicted;
            best_sad = s;
            if s == 0 {
                return (best, 0);
            }
        }
    }
    let lo_x = (r.x0 as i32 + r.w as i32 - width as i32).max(-SEARCH_RANGE);
    let hi_x = (r.x0 as i32).min(SEARCH_RANGE);
    let lo_y = (r.y0 as i32 + r.h as i32 - height as i32).max(-SEARCH_RANGE);
    let hi_y = (r.y0 as i32).min(SEARCH_RANGE);
    for dy in lo_y..=hi_y {
        for dx in lo_x..=hi_x {
            let s = sad(cur, reference, width, r, (dx, dy), best_sad);
            if s < best_sad {
                best = (dx, dy);
                best_sad = s;
                if s == 0 {
                    return (best, 0);
                }
            }
        }
    }
    (best, best_sad)
}

fn median3(a: i32, b: i32, c: i32) -> i32 {
    a.max(b).min(a.min(b).max(c))
}

enum Side<'a> {
    Encode(&'a [Plane]),
    Decode,
}

/// Shared syntax walk. Encoding supplies the source frames; decoding
/// reconstructs them from the coder. Returns the reconstruction and the
/// motion field of the walk.
fn walk<C: BinCoder>(
    coder: &mut C,
    side: Side<'_>,
    width: usize,
    height: usize,
    frame_count: usize,
) -> (Vec<Vec<u8>>, MotionField) {
    let mut models = Models::new();
    let (bw, bh) = blocks(width, height);
    let mut field = MotionField::new(bw, bh);
    let mut recon: Vec<Vec<u8>> = Vec::with_capacity(frame_count);
    let src = |t: usize| -> Option<&[u8]> {
        match &side {
            Side::Encode(frames) => Some(frames[t].data()),
            Side::Decode => None,
        }
    };

    for t in 0..frame_count {
        let mut cur = vec![0u8; width * height];
        let mut res_mag = vec![0u8; width * height];
        let source = src(t);
        let mut vectors = vec![MotionVector::ZERO; bw * bh];
        let mut modes = vec![BlockMode::Intra; bw * bh];

        if t == 0 {
            for y in 0..height {
                for x in 0..width {
                    let v = source.map_or(0, |s| s[y * width + x]);
                    code_intra_pixel(coder, &mut models, &mut cur, &mut res_mag, width, x, y, v);
                }
            }
        } else {
            let reference = &recon[t - 1];
            for by in 0..bh {
                for bx in 0..bw {
                    let r = block_rect(bx, by, width, height);
                    let neighbour = |ox: isize, oy: isize| -> (i32, i32) {
                        let nx = bx as isize + ox;
                        let ny = by as isize + oy;
                        if nx < 0 || ny < 0 || nx >= bw as isize || ny >= bh as isize {
                            return (0, 0);
                        }
                        let i = ny as usize * bw + nx as usize;
                        match modes[i] {
                            BlockMode::Inter => (vectors[i].dx as i32, vectors[i].dy as i32),
                            BlockMode::Intra => (0, 0),
                        }
                    };
                    let (l, tp, tr) = (neighbour(-1, 0), neighbour(0, -1), neighbour(1, -1));
                    let predicted = (median3(l.0, tp.0, tr.0), median3(l.1, tp.1, tr.1));
                    let intra_neighbours = [(-1isize, 0isize), (0, -1)]
                        .iter()
                        .filter(|(ox, oy)| {
                            let nx = bx as isize + ox;
                            let ny = by as isize + oy;
                            nx >= 0
                                && ny >= 0
                                && modes[ny as usize * bw + nx as usize] == BlockMode::Intra
                        })
                        .count();

                    let (want_intra, want_mv) = match source {
                        Some(s) => {
                            let (mv, best) =
                                motion_search(s, reference, width, height, r, predicted);
                            let intra = best > intra_cost(s, width, r);
                            (intra, mv)
                        }
                        None => (false, (0, 0)),
                    };

                    let is_intra =
                        coder.bit(&mut models.mode[intra_neighbours], want_intra as u32) == 1;
                    let i = by * bw + bx;
                    if is_intra {
                        for y in r.y0..r.y0 + r.h {
                            for x in r.x0..r.x0 + r.w {
                                let v = source.map_or(0, |s| s[y * width + x]);
                                code_intra_pixel(
                                    coder,
                                    &mut models,
                                    &mut cur,
                                    &mut res_mag,
                                    width,
                                    x,
                                    y,
                                    v,
                                );
                            }
                        }
                    } else {
                        let mdx = models.mvd_x.code(coder, want_mv.0 - predicted.0);
                        let mdy = models.mvd_y.code(coder, want_mv.1 - predicted.1);
                        let mv = (predicted.0 + mdx, predicted.1 + mdy);
                        modes[i] = BlockMode::Inter;
                        vectors[i] = MotionVector {
                            dx: mv.0 as i16,
                            dy: mv.1 as i16,
                            dt: -1,
                        };
                        for y in r.y0..r.y0 + r.h {
                            for x in r.x0..r.x0 + r.w {
                                let pred = reference[(y as i32 - mv.1) as usize * width
                                    + (x as i32 - mv.0) as usize]
                                    as i32;
                                let left =
                                    if x > 0 { res_mag[y * width + x - 1] } else { 0 } as u32;
                                let top = if y > 0 {
                                    res_mag[(y - 1) * width + x]
                                } else {
                                    0
                                } as u32;
                                let ctx = quantize_activity(left + top);
                                let v = source.map_or(0, |s| s[y * width + x]) as i32;
                                let res = models.inter[ctx].code(coder, wrap_residual(v - pred));
                                cur[y * width + x] = ((pred + res) & 255) as u8;
                                res_mag[y * width + x] = res.unsigned_abs().min(255) as u8;
                            }
                        }
                    }
                }
            }
        }
        field.push_frame(vectors, modes);
        recon.push(cur);
    }
    (recon, field)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn code_intra_pixel<C: BinCoder>(
    coder: &mut C,
    models: &mut Models,
    cur: &mut [u8],
    res_mag: &mut [u8],
    width: usize,
    x: usize,
    y: usize,
    value: u8,
) {
    let (pred, ctx) = med(cur, width, x, y);
    let res = models.intra[ctx].code(coder, wrap_residual(value as i32 - pred));
    cur[y * width + x] = ((pred + res) & 255) as u8;
    res_mag[y * width + x] = res.unsigned_abs().min(255) as u8;
}

/// Encoded clip plus the side information gathered while encoding.
#[derive(Debug, Clone)]
pub struct ReferenceEncoding {
    pub bitstream: Vec<u8>,
    pub motion: MotionField,
}

pub fn encode(frames: &[Plane]) -> Result<ReferenceEncoding> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Input("cannot encode an empty clip".into()))?;
    if let Some(i) = frames.iter().position(|f| !f.same_dims(first)) {
        return Err(Error::Input(format!("frame {i} has mismatched dimensions")));
    }
    let (width, height) = (first.width(), first.height());
    if width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(Error::Input(format!(
            "frame {width}x{height} exceeds 16-bit dimensions"
        )));
    }
    let mut coder = RangeEncoder::new();
    let (_, motion) = walk(
        &mut coder,
        Side::Encode(frames),
        width,
        height,
        frames.len(),
    );
    let payload = coder.finish();

    let mut bitstream = Vec::with_capacity(HEADER_LEN + payload.len());
    bitstream.extend_from_slice(MAGIC);
    bitstream.push(VERSION);
    bitstream.extend_from_slice(&(width as u16).to_le_bytes());
    bitstream.extend_from_slice(&(height as u16).to_le_bytes());
    bitstream.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    bitstream.extend_from_slice(&payload);
    Ok(ReferenceEncoding { bitstream, motion })
}

pub fn decode(bitstream: &[u8]) -> Result<Vec<Plane>> {
    if bitstream.len() < HEADER_LEN || &bitstream[..4] != MAGIC {
        return Err(Error::Input("not a reference-codec bitstream".into()));
    }
    if bitstream[4] != VERSION {
        return Err(Error::Input(format!(
            "unsupported bitstream version {}",
            bitstream[4]
        )));
    }
    let width = u16::from_le_bytes([bitstream[5], bitstream[6]]) as usize;
    let height = u16::from_le_bytes([bitstream[7], bitstream[8]]) as usize;
    let count = u32::from_le_bytes(bitstream[9..13].try_into().expect("4 bytes")) as usize;
    if width == 0 || height == 0 || count == 0 {
        return Err(Error::Input(
            "bitstream header describes an empty clip".into(),
        ));
    }
    let mut coder = RangeDecoder::new(&bitstream[HEADER_LEN..]);
    let (frames, _) = walk(&mut coder, Side::Decode, width, height, count);
    frames
        .into_iter()
        .map(|data| Plane::new(width, height, data))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn med_predictor_cases() {
        // c >= max(a, b) -> min(a, b)
        let p = [50u8, 10, 20, 0];
        assert_eq!(med(&p, 2, 1, 1).0, 10);
        // c <= min(a, b) -> max(a, b)
        let p = [0u8, 10, 20, 0];
        assert_eq!(med(&p, 2, 1, 1).0, 20);
        // otherwise planar
        let p = [15u8, 10, 20, 0];
        assert_eq!(med(&p, 2, 1, 1).0, 15);
    }

    #[test]
    fn residual_wrap_is_invertible() {
        for pred in 0..256 {
            for v in 0..256 {
                let r = wrap_residual(v - pred);
                assert!((-128..128).contains(&r));
                assert_eq!((pred + r) & 255, v);
            }
        }
    }

    #[test]
    fn search_finds_exact_shift() {
        let (w, h) = (64, 32);
        let texture = |x: i32, y: i32| ((x * 37 + y * 91 + (x * y) % 13) % 251) as u8;
        let reference = Plane::from_fn(w, h, |x, y| texture(x as i32, y as i32));
        let cur = Plane::from_fn(w, h, |x, y| texture(x as i32 - 5, y as i32 + 3));
        let r = block_rect(3, 1, w, h);
        let (mv, best) = motion_search(cur.data(), reference.data(), w, h, r, (0, 0));
        assert_eq!((mv, best), ((5, -3), 0));
    }

    #[test]
    fn partial_blocks_round_trip() {
        let frames: Vec<Plane> = (0..3)
            .map(|t| Plane::from_fn(21, 13, |x, y| ((x * 7 + y * 3 + t * 2) % 256) as u8))
            .collect();
        let enc = encode(&frames).unwrap();
        assert_eq!(decode(&enc.bitstream).unwrap(), frames);
        assert_eq!(enc.motion.blocks_x(), 3);
        assert_eq!(enc.motion.blocks_y(), 2);
    }

    #[test]
    fn header_layout() {
        let enc = encode(&[Plane::filled(24, 16, 9)]).unwrap();
        assert_eq!(&enc.bitstream[..4], b"ISRC");
        assert_eq!(enc.bitstream[4], 1);
        assert_eq!(&enc.bitstream[5..9], &[24, 0, 16, 0]);
        assert_eq!(&enc.bitstream[9..13], &[1, 0, 0, 0]);
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        assert!(decode(b"nope").is_err());
        assert!(decode(b"ISRC\x02\x08\x00\x08\x00\x01\x00\x00\x00").is_err());
        assert!(encode(&[]).is_err());
        assert!(encode(&[Plane::filled(8, 8, 0), Plane::filled(8, 16, 0)]).is_err());
    }
}
