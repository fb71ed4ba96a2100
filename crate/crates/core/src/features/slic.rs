//! SLIC superpixels on single-channel faces.
//!
//! Intensity is mapped to a lightness scale `L = Y * 100 / 255` and the
//! distance between a pixel and a cluster centre is
//! `sqrt(dL^2 + (ds / S)^2 * m^2)` with `S` the grid interval and `m` the
//! compactness. Centres start on a regular grid, are nudged to the lowest
//! gradient in their 3x3 neighbourhood, and are refined for a fixed number of
//! iterations inside a `2S x 2S` window. Labels are then made connected, with
//! fragments smaller than a quarter cell merged into a neighbour.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{CubemapFrame, Plane};
use crate::geometry::Face;

pub const DEFAULT_SUPERPIXELS: usize = 256;
pub const DEFAULT_COMPACTNESS: f64 = 1.0;
pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub superpixels_per_face: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            superpixels_per_face: DEFAULT_SUPERPIXELS,
            compactness: DEFAULT_COMPACTNESS,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

impl SlicParams {
    pub fn validate(&self) -> Result<()> {
        if self.superpixels_per_face == 0 {
            return Err(Error::Config("need at least one superpixel".into()));
        }
        if !(self.compactness > 0.0) {
            return Err(Error::Config(format!(
                "compactness must be positive, got {}",
                self.compactness
            )));
        }
        Ok(())
    }

    /// Columns and rows of the initial centre grid for a `w x h` image.
    fn grid_dims(&self, w: usize, h: usize) -> (usize, usize) {
        let k = self.superpixels_per_face as f64;
        let gx = ((k * w as f64 / h as f64).sqrt().round() as usize).max(1);
        let gy = ((k / gx as f64).round() as usize).max(1);
        (gx, gy)
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    x: f64,
    y: f64,
    l: f64,
}

/// Superpixel labels of `plane`, row-major, numbered from 0 without gaps.
pub fn slic_labels(plane: &Plane, p: &SlicParams) -> Result<Vec<u32>> {
    p.validate()?;
    let (w, h) = (plane.width(), plane.height());
    let (gx, gy) = p.grid_dims(w, h);
    if gx > w || gy > h {
        return Err(Error::Input(format!(
            "a {w}x{h} face cannot hold a {gx}x{gy} superpixel grid"
        )));
    }
    let light: Vec<f64> = plane
        .data()
        .iter()
        .map(|&v| v as f64 * 100.0 / 255.0)
        .collect();
    let at = |x: usize, y: usize| light[y * w + x];
    let step = ((w * h) as f64 / (gx * gy) as f64).sqrt();

    let gradient = |x: usize, y: usize| {
        let xl = x.saturating_sub(1);
        let xr = (x + 1).min(w - 1);
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        let gxv = at(xr, y) - at(xl, y);
        let gyv = at(x, yd) - at(x, yu);
        gxv * gxv + gyv * gyv
    };

    let mut centers = Vec::with_capacity(gx * gy);
    for j in 0..gy {
        for i in 0..gx {
            let cx = (((i as f64 + 0.5) * w as f64 / gx as f64) as usize).min(w - 1);
            let cy = (((j as f64 + 0.5) * h as f64 / gy as f64) as usize).min(h - 1);
            let (mut bx, mut by, mut best) = (cx, cy, gradient(cx, cy));
            for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient(nx, ny);
                    if g < best {
                        (bx, by, best) = (nx, ny, g);
                    }
                }
            }
            centers.push(Center {
                x: bx as f64,
                y: by as f64,
                l: at(bx, by),
            });
        }
    }

    let spatial = (p.compactness / step).powi(2);
    let radius = step.ceil() as i64;
    let mut labels = vec![u32::MAX; w * h];
    let mut dist = vec![f64::INFINITY; w * h];
    for _ in 0..p.iterations.max(1) {
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as i64, c.y.round() as i64);
            let y0 = (cy - radius).max(0) as usize;
            let y1 = (cy + radius).min(h as i64 - 1) as usize;
            let x0 = (cx - radius).max(0) as usize;
            let x1 = (cx + radius).min(w as i64 - 1) as usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dl = light[y * w + x] - c.l;
                    let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
                    let d = dl * dl + (dx * dx + dy * dy) * spatial;
                    if d < dist[y * w + x] {
                        dist[y * w + x] = d;
                        labels[y * w + x] = k as u32;
                    }
                }
            }
        }
        let mut sums = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for y in 0..h {
            for x in 0..w {
                let k = labels[y * w + x];
                if k != u32::MAX {
                    let s = &mut sums[k as usize];
                    s.0 += x as f64;
                    s.1 += y as f64;
                    s.2 += light[y * w + x];
                    s.3 += 1;
                }
            }
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let n = s.3 as f64;
                *c = Center {
                    x: s.0 / n,
                    y: s.1 / n,
                    l: s.2 / n,
                };
            }
        }
    }

    // pixels no window reached (only possible with odd aspect ratios) join
    // the nearest centre
    for y in 0..h {
        for x in 0..w {
            if labels[y * w + x] == u32::MAX {
                let k = centers
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k, (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                labels[y * w + x] = k as u32;
            }
        }
    }

    let min_size = ((step * step) / 4.0) as usize;
    Ok(enforce_connectivity(&labels, w, h, min_size))
}

/// Relabels 4-connected components; components of at most `min_size` pixels
/// take the label of an already-visited neighbour.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    let mut out = vec![u32::MAX; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if out[start] != u32::MAX {
            continue;
        }
        let (sx, sy) = (start % w, start / w);
        let mut adjacent = None;
        for (nx, ny) in neighbours(sx, sy, w, h) {
            let n = ny * w + nx;
            if out[n] != u32::MAX {
                adjacent = Some(out[n]);
            }
        }
        let old = labels[start];
        component.clear();
        out[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            component.push(i);
            for (nx, ny) in neighbours(i % w, i / w, w, h) {
                let n = ny * w + nx;
                if out[n] == u32::MAX && labels[n] == old {
                    out[n] = next;
                    queue.push_back(n);
                }
            }
        }
        match adjacent {
            Some(a) if component.len() <= min_size => {
                for &i in &component {
                    out[i] = a;
                }
            }
            _ => next += 1,
        }
    }
    out
}

fn neighbours(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut v = [(usize::MAX, usize::MAX); 4];
    if x > 0 {
        v[0] = (x - 1, y);
    }
    if y > 0 {
        v[1] = (x, y - 1);
    }
    if x + 1 < w {
        v[2] = (x + 1, y);
    }
    if y + 1 < h {
        v[3] = (x, y + 1);
    }
    v.into_iter().filter(|p| p.0 != usize::MAX)
}

/// Number of distinct labels.
pub fn label_count(labels: &[u32]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m as usize + 1)
}

/// 1 where any 4-neighbour carries a different label, else 0.
pub fn contour_map(labels: &[u32], w: usize, h: usize) -> Plane {
    Plane::from_fn(w, h, |x, y| {
        let l = labels[y * w + x];
        neighbours(x, y, w, h).any(|(nx, ny)| labels[ny * w + nx] != l) as u8
    })
}

/// Binary contour map of a packed cubemap frame, each face segmented on its
/// own so face edges are contours only where a superpixel boundary meets them.
pub fn slic_contours(frame: &CubemapFrame, p: &SlicParams) -> Result<Plane> {
    let n = frame.face_size();
    let mut out = Plane::filled(3 * n, 2 * n, 0);
    for face in Face::ALL {
        let plane = frame.face_plane(face);
        let labels = slic_labels(&plane, p)?;
        let contours = contour_map(&labels, n, n);
        let (ox, oy) = frame.face_origin(face);
        for y in 0..n {
            for x in 0..n {
                out.set(ox + x, oy + y, contours.get(x, y));
            }
        }
    }
    Ok(out)
}
