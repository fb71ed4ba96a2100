//! Equirectangular to cubemap rendering at an arbitrary orientation.
//!
//! Sampling uses a Catmull-Rom bicubic kernel (a = -0.5). Longitude wraps
//! around the frame width and latitude rows are clamped at the poles.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{CubemapFrame, EquirectFrame, Plane};
use crate::geometry::{
    direction_to_equirect, direction_to_face, equirect_to_direction, face_to_direction,
    rotation_of, FaceCoord, Orientation,
};

pub const MIN_FACE_SIZE: usize = 8;

/// Catmull-Rom weights for taps at offsets -1, 0, 1, 2 from the base sample.
#[inline]
pub fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Precomputed bicubic taps for one output pixel.
#[derive(Debug, Clone, Copy)]
struct Taps {
    cols: [u32; 4],
    rows: [u32; 4],
    wx: [f64; 4],
    wy: [f64; 4],
}

impl Taps {
    fn for_equirect(x: f64, y: f64, width: usize, height: usize) -> Self {
        // pixel centres sit at half-integers
        let xs = x - 0.5;
        let ys = y - 0.5;
        let x0 = xs.floor();
        let y0 = ys.floor();
        let w = width as i64;
        let h = height as i64;
        let mut cols = [0u32; 4];
        let mut rows = [0u32; 4];
        for k in 0..4 {
            cols[k] = (x0 as i64 - 1 + k as i64).rem_euclid(w) as u32;
            rows[k] = (y0 as i64 - 1 + k as i64).clamp(0, h - 1) as u32;
        }
        Self {
            cols,
            rows,
            wx: catmull_rom_weights(xs - x0),
            wy: catmull_rom_weights(ys - y0),
        }
    }

    /// Clamped lookup inside a square face whose top-left pixel is `origin`.
    fn for_face(u: f64, v: f64, face_size: usize, origin: (usize, usize)) -> Self {
        let n = face_size as f64;
        let xs = u * n - 0.5;
        let ys = v * n - 0.5;
        let x0 = xs.floor();
        let y0 = ys.floor();
        let last = face_size as i64 - 1;
        let mut cols = [0u32; 4];
        let mut rows = [0u32; 4];
        for k in 0..4 {
            cols[k] = (origin.0 as i64 + (x0 as i64 - 1 + k as i64).clamp(0, last)) as u32;
            rows[k] = (origin.1 as i64 + (y0 as i64 - 1 + k as i64).clamp(0, last)) as u32;
        }
        Self {
            cols,
            rows,
            wx: catmull_rom_weights(xs - x0),
            wy: catmull_rom_weights(ys - y0),
        }
    }

    #[inline]
    fn sample(&self, src: &Plane) -> u8 {
        let mut acc = 0.0;
        for (r, wy) in self.rows.iter().zip(self.wy) {
            let row = src.row(*r as usize);
            let mut line = 0.0;
            for (c, wx) in self.cols.iter().zip(self.wx) {
                line += wx * row[*c as usize] as f64;
            }
            acc += wy * line;
        }
        quantize(acc)
    }
}

/// Sampling plan mapping every cubemap pixel to equirectangular taps. Built
/// once per orientation and reused for every frame of a clip.
pub struct CubemapSampler {
    face_size: usize,
    src_width: usize,
    src_height: usize,
    taps: Vec<Taps>,
}

impl CubemapSampler {
    pub fn new(
        o: Orientation,
        face_size: usize,
        src_width: usize,
        src_height: usize,
    ) -> Result<Self> {
        if face_size < MIN_FACE_SIZE {
            return Err(Error::Config(format!(
                "face size must be at least {MIN_FACE_SIZE}, got {face_size}"
            )));
        }
        let rot = rotation_of(o);
        let width = 3 * face_size;
        let height = 2 * face_size;
        let n = face_size as f64;
        let taps = (0..width * height)
            .map(|idx| {
                let (px, py) = (idx % width, idx / width);
                let face = CubemapFrame::face_at_slot(px / face_size, py / face_size);
                let u = ((px % face_size) as f64 + 0.5) / n;
                let v = ((py % face_size) as f64 + 0.5) / n;
                let d = rot.apply(face_to_direction(FaceCoord::new(face, u, v)));
                let (x, y) = direction_to_equirect(d, src_width, src_height);
                Taps::for_equirect(x, y, src_width, src_height)
            })
            .collect();
        Ok(Self {
            face_size,
            src_width,
            src_height,
            taps,
        })
    }

    pub fn render(&self, src: &EquirectFrame) -> Result<CubemapFrame> {
        if src.width() != self.src_width || src.height() != self.src_height {
            return Err(Error::Input(format!(
                "sampler built for {}x{}, frame is {}x{}",
                self.src_width,
                self.src_height,
                src.width(),
                src.height()
            )));
        }
        let width = 3 * self.face_size;
        let mut out = vec![0u8; self.taps.len()];
        out.par_chunks_mut(width)
            .zip(self.taps.par_chunks(width))
            .for_each(|(row, taps)| {
                for (px, t) in row.iter_mut().zip(taps) {
                    *px = t.sample(src.luma());
                }
            });
        CubemapFrame::new(self.face_size, Plane::new(width, 2 * self.face_size, out)?)
    }
}

/// Renders one equirectangular frame into a packed cubemap rotated by `o`.
pub fn project(src: &EquirectFrame, o: Orientation, face_size: usize) -> Result<CubemapFrame> {
    CubemapSampler::new(o, face_size, src.width(), src.height())?.render(src)
}

/// Projects every frame of a clip with one shared sampling plan.
pub fn project_clip(
    frames: &[EquirectFrame],
    o: Orientation,
    face_size: usize,
) -> Result<Vec<CubemapFrame>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Input("cannot project an empty clip".into()))?;
    if let Some(bad) = frames
        .iter()
        .position(|f| f.width() != first.width() || f.height() != first.height())
    {
        return Err(Error::Input(format!(
            "frame {bad} is {}x{}, expected {}x{}",
            frames[bad].width(),
            frames[bad].height(),
            first.width(),
            first.height()
        )));
    }
    let sampler = CubemapSampler::new(o, face_size, first.width(), first.height())?;
    frames.iter().map(|f| sampler.render(f)).collect()
}

/// Renders a cubemap back to an equirectangular frame of the given height,
/// undoing the rotation `o`. Faces are sampled bicubically with clamping at
/// face borders.
pub fn unproject(cube: &CubemapFrame, o: Orientation, height: usize) -> Result<EquirectFrame> {
    let width = 2 * height;
    let inv = rotation_of(o).transpose();
    let n = cube.face_size();
    let mut out = vec![0u8; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let d = equirect_to_direction(x as f64 + 0.5, y as f64 + 0.5, width, height);
            let fc = direction_to_face(inv.apply(d));
            let taps = Taps::for_face(fc.u, fc.v, n, cube.face_origin(fc.face));
            *px = taps.sample(cube.luma());
        }
    });
    EquirectFrame::new(Plane::new(width, height, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Face;

    fn gradient_equirect(width: usize, height: usize) -> EquirectFrame {
        // smooth on the sphere: a function of the 3D direction
        EquirectFrame::new(Plane::from_fn(width, height, |x, y| {
            let d = equirect_to_direction(x as f64 + 0.5, y as f64 + 0.5, width, height);
            (128.0 + 60.0 * d.x + 40.0 * d.y - 20.0 * d.z).round() as u8
        }))
        .unwrap()
    }

    #[test]
    fn catmull_rom_weights_partition_unity() {
        for i in 0..=10 {
            let w = catmull_rom_weights(i as f64 / 10.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(catmull_rom_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_source_gives_constant_cubemap() {
        let src = EquirectFrame::new(Plane::filled(128, 64, 77)).unwrap();
        for o in [
            Orientation::IDENTITY,
            Orientation::new(25.0, -10.0),
            Orientation::new(45.0, 45.0),
        ] {
            let cube = project(&src, o, 16).unwrap();
            assert!(cube.luma().data().iter().all(|&v| v == 77));
        }
    }

    #[test]
    fn center_marker_lands_on_front_center() {
        let (w, h) = (256, 128);
        let mut p = Plane::filled(w, h, 0);
        // the four pixels around the image centre
        for (x, y) in [(127, 63), (128, 63), (127, 64), (128, 64)] {
            p.set(x, y, 255);
        }
        let cube = project(&EquirectFrame::new(p).unwrap(), Orientation::IDENTITY, 32).unwrap();
        let (ox, oy) = cube.face_origin(Face::Front);
        let (imax, _) = cube
            .luma()
            .data()
            .iter()
            .enumerate()
            .max_by_key(|(i, v)| (**v, std::cmp::Reverse(*i)))
            .unwrap();
        let (mx, my) = (imax % 96, imax / 96);
        assert!((mx as i64 - (ox + 16) as i64).abs() <= 1, "{mx}");
        assert!((my as i64 - (oy + 16) as i64).abs() <= 1, "{my}");
    }

    #[test]
    fn face_size_below_minimum_is_rejected() {
        let src = EquirectFrame::new(Plane::filled(16, 8, 0)).unwrap();
        assert!(matches!(
            project(&src, Orientation::IDENTITY, 4),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn supersampled_nearest_neighbour_oracle_agrees() {
        // Oracle: render a 4x finer equirect of the same analytic field, then
        // sample it nearest-neighbour at each cubemap pixel direction.
        let field = |x: f64, y: f64, w: usize, h: usize| {
            let d = equirect_to_direction(x, y, w, h);
            128.0 + 60.0 * d.x + 40.0 * d.y - 20.0 * d.z
        };
        let (w, h) = (256, 128);
        let src = EquirectFrame::new(Plane::from_fn(w, h, |x, y| {
            field(x as f64 + 0.5, y as f64 + 0.5, w, h).round() as u8
        }))
        .unwrap();
        let fine = Plane::from_fn(4 * w, 4 * h, |x, y| {
            field(x as f64 + 0.5, y as f64 + 0.5, 4 * w, 4 * h).round() as u8
        });
        let o = Orientation::new(30.0, 15.0);
        let cube = project(&src, o, 64).unwrap();
        let rot = rotation_of(o);
        for py in 0..128 {
            for px in 0..192 {
                let face = CubemapFrame::face_at_slot(px / 64, py / 64);
                let u = ((px % 64) as f64 + 0.5) / 64.0;
                let v = ((py % 64) as f64 + 0.5) / 64.0;
                let d = rot.apply(face_to_direction(FaceCoord::new(face, u, v)));
                let (x, y) = direction_to_equirect(d, 4 * w, 4 * h);
                let fx = (x.floor() as usize).min(4 * w - 1);
                let fy = (y.floor() as usize).min(4 * h - 1);
                let want = fine.get(fx, fy) as i32;
                let got = cube.luma().get(px, py) as i32;
                assert!((want - got).abs() <= 1, "({px},{py}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn quarter_yaw_permutes_faces() {
        let src = gradient_equirect(256, 128);
        let n = 32;
        let base = project(&src, Orientation::IDENTITY, n).unwrap();
        let turned = project(&src, Orientation::new(90.0, 0.0), n).unwrap();
        // after the turn, each side face shows what its right-hand neighbour showed
        for (dst, from) in [
            (Face::Front, Face::Right),
            (Face::Right, Face::Back),
            (Face::Back, Face::Left),
            (Face::Left, Face::Front),
        ] {
            let a = turned.face_plane(dst);
            let b = base.face_plane(from);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((*x as i32 - *y as i32).abs() <= 1);
            }
        }
        // up face rotates in-plane: (u, v) <- (v, 1 - u)
        let a = turned.face_plane(Face::Up);
        let b = base.face_plane(Face::Up);
        for y in 0..n {
            for x in 0..n {
                let (sx, sy) = (y, n - 1 - x);
                assert!((a.get(x, y) as i32 - b.get(sx, sy) as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn round_trip_psnr_on_smooth_content() {
        let src = gradient_equirect(256, 128);
        let o = Orientation::new(20.0, -35.0);
        let cube = project(&src, o, 128).unwrap();
        let back = unproject(&cube, o, 128).unwrap();
        let mse: f64 = src
            .luma()
            .data()
            .iter()
            .zip(back.luma().data())
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum::<f64>()
            / (256.0 * 128.0);
        let psnr = 10.0 * (255.0f64 * 255.0 / mse.max(1e-12)).log10();
        assert!(psnr >= 40.0, "psnr {psnr}");
    }

    #[test]
    fn clip_projection_validates_and_is_deterministic() {
        let f = gradient_equirect(64, 32);
        let frames = vec![f.clone(); 60];
        let cubes = project_clip(&frames, Orientation::new(10.0, 5.0), 8).unwrap();
        assert_eq!(cubes.len(), 60);
        assert!(cubes.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(
            project_clip(&frames[..1], Orientation::IDENTITY, 8)
                .unwrap()
                .len(),
            1
        );

        let odd = EquirectFrame::new(Plane::filled(32, 16, 0)).unwrap();
        assert!(matches!(
            project_clip(&[f, odd], Orientation::IDENTITY, 8),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            project_clip(&[], Orientation::IDENTITY, 8),
            Err(Error::Input(_))
        ));
    }
}
