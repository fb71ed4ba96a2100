//! Pixel rasters for both projections.

use crate::error::{Error, Result};
use crate::geometry::Face;

/// 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("empty plane {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Input(format!(
                "plane {width}x{height} needs {} bytes, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "empty plane");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "empty plane");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn same_dims(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Equirectangular frame; only luma is carried through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquirectFrame {
    luma: Plane,
}

impl EquirectFrame {
    pub fn new(luma: Plane) -> Result<Self> {
        if luma.width() != 2 * luma.height() {
            return Err(Error::Input(format!(
                "equirectangular frame must be 2:1, got {}x{}",
                luma.width(),
                luma.height()
            )));
        }
        Ok(Self { luma })
    }

    pub fn luma(&self) -> &Plane {
        &self.luma
    }

    pub fn width(&self) -> usize {
        self.luma.width()
    }

    pub fn height(&self) -> usize {
        self.luma.height()
    }
}

/// Cubemap packed as 3 columns by 2 rows of square faces:
///
/// ```text
/// +------+-------+-------+
/// | left | front | right |
/// +------+-------+-------+
/// | down | back  |  up   |
/// +------+-------+-------+
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubemapFrame {
    face_size: usize,
    luma: Plane,
}

impl CubemapFrame {
    pub fn new(face_size: usize, luma: Plane) -> Result<Self> {
        if face_size == 0 || luma.width() != 3 * face_size || luma.height() != 2 * face_size {
            return Err(Error::Input(format!(
                "cubemap raster {}x{} does not match face size {face_size}",
                luma.width(),
                luma.height()
            )));
        }
        Ok(Self { face_size, luma })
    }

    /// Wraps a raster whose dimensions are already 3N x 2N.
    pub fn from_plane(luma: Plane) -> Result<Self> {
        let n = luma.height() / 2;
        Self::new(n, luma)
    }

    pub fn face_size(&self) -> usize {
        self.face_size
    }

    pub fn luma(&self) -> &Plane {
        &self.luma
    }

    pub fn into_luma(self) -> Plane {
        self.luma
    }

    /// `(column, row)` slot of a face in the packed layout.
    pub fn slot(face: Face) -> (usize, usize) {
        match face {
            Face::Left => (0, 0),
            Face::Front => (1, 0),
            Face::Right => (2, 0),
            Face::Down => (0, 1),
            Face::Back => (1, 1),
            Face::Up => (2, 1),
        }
    }

    pub fn face_at_slot(col: usize, row: usize) -> Face {
        match (col, row) {
            (0, 0) => Face::Left,
            (1, 0) => Face::Front,
            (2, 0) => Face::Right,
            (0, 1) => Face::Down,
            (1, 1) => Face::Back,
            (2, 1) => Face::Up,
            _ => panic!("slot ({col}, {row}) outside the 3x2 layout"),
        }
    }

    /// Top-left pixel of a face in the packed raster.
    pub fn face_origin(&self, face: Face) -> (usize, usize) {
        let (c, r) = Self::slot(face);
        (c * self.face_size, r * self.face_size)
    }

    /// Copies one face out as its own square plane.
    pub fn face_plane(&self, face: Face) -> Plane {
        let (ox, oy) = self.face_origin(face);
        Plane::from_fn(self.face_size, self.face_size, |x, y| {
            self.luma.get(ox + x, oy + y)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_rejects_bad_length() {
        assert!(Plane::new(4, 4, vec![0; 15]).is_err());
        assert!(Plane::new(0, 4, vec![]).is_err());
    }

    #[test]
    fn equirect_requires_two_to_one() {
        assert!(EquirectFrame::new(Plane::filled(8, 4, 0)).is_ok());
        assert!(EquirectFrame::new(Plane::filled(8, 5, 0)).is_err());
    }

    #[test]
    fn cubemap_layout_slots() {
        let f = CubemapFrame::new(4, Plane::filled(12, 8, 0)).unwrap();
        assert_eq!(f.face_origin(Face::Front), (4, 0));
        assert_eq!(f.face_origin(Face::Up), (8, 4));
        for face in Face::ALL {
            let (c, r) = CubemapFrame::slot(face);
            assert_eq!(CubemapFrame::face_at_slot(c, r), face);
        }
        assert!(CubemapFrame::new(4, Plane::filled(12, 9, 0)).is_err());
    }
}
