//! Synthetic 360° scenes for tests, demos and the learnability corpus.
//!
//! A scene is a smooth static background plus textured spherical caps
//! ("blobs") that rotate rigidly about the world `y` axis over time. The blob
//! texture is hashed value noise, so blobs are expensive to code losslessly
//! while the background is nearly free; how many cubemap pixels a blob covers
//! and whether it straddles a face seam then drive the encoded size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frame::{CubemapFrame, EquirectFrame, Plane};
use crate::geometry::{
    equirect_to_direction, rotation_of, yaw_matrix, Direction, Mat3, Orientation,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Orientation whose front-face centre is the blob centre at frame 0.
    pub center: Orientation,
    pub radius_deg: f64,
    /// Texture lattice spacing in degrees.
    pub cell_deg: f64,
    /// Peak deviation from mid-grey.
    pub amplitude: f64,
    /// Longitude drift in degrees per frame (rotation about world `y`).
    pub drift_deg_per_frame: f64,
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub blobs: Vec<Blob>,
    /// Intensity at the horizon and the change towards the zenith.
    pub background_level: f64,
    pub background_slope: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            blobs: Vec::new(),
            background_level: 110.0,
            background_slope: 60.0,
        }
    }
}

#[inline]
fn hash2(seed: u64, i: i64, j: i64) -> f64 {
    let mut z = seed
        ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Bilinear value noise in `[0, 1)`.
fn value_noise(seed: u64, s: f64, t: f64) -> f64 {
    let (i, j) = (s.floor(), t.floor());
    let (fs, ft) = (s - i, t - j);
    let (i, j) = (i as i64, j as i64);
    let a = hash2(seed, i, j);
    let b = hash2(seed, i + 1, j);
    let c = hash2(seed, i, j + 1);
    let d = hash2(seed, i + 1, j + 1);
    let top = a + (b - a) * fs;
    let bottom = c + (d - c) * fs;
    top + (bottom - top) * ft
}

struct PreparedBlob {
    /// World-to-blob-local rotation at frame 0.
    local: Mat3,
    cos_radius: f64,
    blob: Blob,
}

impl Scene {
    fn prepare(&self) -> Vec<PreparedBlob> {
        self.blobs
            .iter()
            .map(|b| PreparedBlob {
                local: rotation_of(b.center).transpose(),
                cos_radius: b.radius_deg.to_radians().cos(),
                blob: *b,
            })
            .collect()
    }

    fn shade(&self, blobs: &[PreparedBlob], d: Direction, frame: usize) -> f64 {
        for pb in blobs {
            // undo the drift, then express in blob-local coordinates
            let undrift = yaw_matrix(-pb.blob.drift_deg_per_frame * frame as f64);
            let q = pb.local.apply(undrift.apply(d));
            if q.z >= pb.cos_radius {
                let s = q.x.atan2(q.z).to_degrees() / pb.blob.cell_deg;
                let t = q.y.clamp(-1.0, 1.0).asin().to_degrees() / pb.blob.cell_deg;
                let n = value_noise(pb.blob.texture_seed, s, t);
                return 128.0 + pb.blob.amplitude * (2.0 * n - 1.0);
            }
        }
        self.background_level + self.background_slope * d.y
    }

    /// Renders `frames` equirectangular frames of the given height.
    pub fn render(&self, height: usize, frames: usize) -> Vec<EquirectFrame> {
        let width = 2 * height;
        let blobs = self.prepare();
        (0..frames)
            .map(|t| {
                let plane = Plane::from_fn(width, height, |x, y| {
                    let d = equirect_to_direction(x as f64 + 0.5, y as f64 + 0.5, width, height);
                    self.shade(&blobs, d, t).round().clamp(0.0, 255.0) as u8
                });
                EquirectFrame::new(plane).expect("2:1 by construction")
            })
            .collect()
    }
}

/// Uniform grey equirectangular clip.
pub fn constant_clip(height: usize, frames: usize, value: u8) -> Vec<EquirectFrame> {
    (0..frames)
        .map(|_| EquirectFrame::new(Plane::filled(2 * height, height, value)).expect("2:1"))
        .collect()
}

/// Whole-sphere texture rotating about `y` by `deg_per_frame`.
pub fn panning_sphere(
    height: usize,
    frames: usize,
    deg_per_frame: f64,
    seed: u64,
) -> Vec<EquirectFrame> {
    Scene {
        blobs: vec![Blob {
            center: Orientation::IDENTITY,
            radius_deg: 180.0,
            cell_deg: 6.0,
            amplitude: 90.0,
            drift_deg_per_frame: deg_per_frame,
            texture_seed: seed,
        }],
        ..Scene::default()
    }
    .render(height, frames)
}

/// A textured blob on the equator drifting across the front/right face seam
/// of the unrotated cubemap.
pub fn seam_crosser() -> Scene {
    Scene {
        blobs: vec![Blob {
            center: Orientation::new(32.0, 5.0),
            radius_deg: 28.0,
            cell_deg: 2.0,
            amplitude: 80.0,
            drift_deg_per_frame: 0.5,
            texture_seed: 7,
        }],
        ..Scene::default()
    }
}

/// Scenes with one blob placed at a random orientation; the blob centre is
/// the cue that determines the most compressible rotation.
pub fn planted_cue_scene(rng: &mut impl Rng, radius_deg: f64) -> Scene {
    let yaw = rng.gen_range(-40.0..40.0);
    let pitch = rng.gen_range(-40.0..40.0);
    // fast enough to register as whole-pixel motion on small faces
    let speed = rng.gen_range(3.0..6.0);
    let drift = if rng.gen::<bool>() { speed } else { -speed };
    Scene {
        blobs: vec![Blob {
            center: Orientation::new(yaw, pitch),
            radius_deg,
            cell_deg: 2.5,
            amplitude: 80.0,
            drift_deg_per_frame: drift,
            texture_seed: rng.gen(),
        }],
        ..Scene::default()
    }
}

/// `count` planted-cue scenes from one seed.
pub fn planted_cue_corpus(seed: u64, count: usize, radius_deg: f64) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| planted_cue_scene(&mut rng, radius_deg))
        .collect()
}

/// A random mix of blobs, for symmetry checks and clustering demos.
pub fn random_scene(seed: u64, blobs: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Scene {
        blobs: (0..blobs)
            .map(|_| Blob {
                center: Orientation::new(rng.gen_range(-180.0..180.0), rng.gen_range(-60.0..60.0)),
                radius_deg: rng.gen_range(15.0..35.0),
                cell_deg: rng.gen_range(1.5..4.0),
                amplitude: rng.gen_range(40.0..90.0),
                drift_deg_per_frame: rng.gen_range(-1.0..1.0),
                texture_seed: rng.gen(),
            })
            .collect(),
        ..Scene::default()
    }
}

/// Cubemap-raster clip whose texture translates by `(dx, dy)` pixels per frame.
pub fn translating_cubemap(
    face_size: usize,
    frames: usize,
    dx: i64,
    dy: i64,
    seed: u64,
) -> Vec<CubemapFrame> {
    (0..frames)
        .map(|t| {
            let plane = Plane::from_fn(3 * face_size, 2 * face_size, |x, y| {
                let sx = x as i64 - dx * t as i64;
                let sy = y as i64 - dy * t as i64;
                let n = value_noise(seed, sx as f64 / 3.0, sy as f64 / 3.0);
                (40.0 + 170.0 * n) as u8
            });
            CubemapFrame::new(face_size, plane).expect("3N x 2N by construction")
        })
        .collect()
}

/// Cubemap-raster clip of `frames` copies of one random-texture frame.
pub fn static_cubemap(face_size: usize, frames: usize, seed: u64) -> Vec<CubemapFrame> {
    translating_cubemap(face_size, frames, 0, 0, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic() {
        let a = seam_crosser().render(32, 3);
        let b = seam_crosser().render(32, 3);
        assert_eq!(a, b);
        assert_ne!(a[0], a[2]);
    }

    #[test]
    fn blob_occupies_its_center() {
        let scene = Scene {
            blobs: vec![Blob {
                center: Orientation::new(0.0, 0.0),
                radius_deg: 20.0,
                cell_deg: 2.0,
                amplitude: 80.0,
                drift_deg_per_frame: 0.0,
                texture_seed: 1,
            }],
            ..Scene::default()
        };
        let f = &scene.render(64, 1)[0];
        // background at the horizon is exactly the level; the blob is textured
        let row = f.luma().row(32);
        let distinct: std::collections::BTreeSet<u8> = row[56..72].iter().copied().collect();
        assert!(distinct.len() > 4);
        assert!((row[0] as i32 - 110).abs() <= 2);
    }

    #[test]
    fn translation_moves_content() {
        let clip = translating_cubemap(16, 2, 8, 0, 3);
        let (a, b) = (clip[0].luma(), clip[1].luma());
        for y in 0..32 {
            for x in 8..48 {
                assert_eq!(b.get(x, y), a.get(x - 8, y));
            }
        }
    }
}
