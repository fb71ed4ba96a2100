//! Orientations, rotations and the sphere / cube / equirectangular maps.
//!
//! Conventions used everywhere in the crate:
//!
//! * Right-handed world frame with `+y` up and the cubemap front face looking
//!   down `+z`.
//! * Yaw rotates about `+y` so that a positive yaw carries `+z` towards `+x`;
//!   `rotation_of((90, 0))` maps `(0, 0, 1)` to `(1, 0, 0)`.
//! * Pitch rotates about the (fixed) `x` axis so that a positive pitch carries
//!   `+z` towards `+y` (the front face looks up).
//! * `R(yaw, pitch) = R_pitch(pitch) * R_yaw(yaw)`: yaw is applied first, both
//!   about world axes.
//! * Equirectangular `x` grows with longitude `atan2(x, z)` over `[-180, 180)`,
//!   `y` runs from latitude `+90` (top row) to `-90` (bottom row).
//!
//! Other tools may mirror yaw or pitch relative to these choices, so heatmaps
//! produced here can appear flipped when compared with external renderings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A cubemap orientation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl Orientation {
    pub const IDENTITY: Orientation = Orientation {
        yaw_deg: 0.0,
        pitch_deg: 0.0,
    };

    pub fn new(yaw_deg: f64, pitch_deg: f64) -> Self {
        Self { yaw_deg, pitch_deg }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(yaw {}, pitch {})", self.yaw_deg, self.pitch_deg)
    }
}

/// The discrete search space: every combination of a yaw and a pitch value.
///
/// Orientations are enumerated row-major with pitch as the outer (row) index,
/// so index order coincides with lexicographic `(pitch, yaw)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationGrid {
    yaw_values: Vec<f64>,
    pitch_values: Vec<f64>,
}

impl Default for OrientationGrid {
    fn default() -> Self {
        make_grid(5.0, 5.0, 45.0).expect("default grid is valid")
    }
}

impl OrientationGrid {
    pub fn new(yaw_values: Vec<f64>, pitch_values: Vec<f64>) -> Result<Self> {
        for (axis, values) in [("yaw", &yaw_values), ("pitch", &pitch_values)] {
            if values.is_empty() {
                return Err(Error::Config(format!("{axis} axis has no values")));
            }
            if values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!(
                    "{axis} values must be strictly increasing"
                )));
            }
            if !values.contains(&0.0) {
                return Err(Error::Config(format!("{axis} values must contain 0")));
            }
        }
        Ok(Self {
            yaw_values,
            pitch_values,
        })
    }

    pub fn yaw_values(&self) -> &[f64] {
        &self.yaw_values
    }

    pub fn pitch_values(&self) -> &[f64] {
        &self.pitch_values
    }

    pub fn len(&self) -> usize {
        self.yaw_values.len() * self.pitch_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Orientation {
        let n = self.yaw_values.len();
        Orientation::new(self.yaw_values[index % n], self.pitch_values[index / n])
    }

    pub fn index_of(&self, o: Orientation) -> Option<usize> {
        let yi = self.yaw_values.iter().position(|&v| v == o.yaw_deg)?;
        let pi = self.pitch_values.iter().position(|&v| v == o.pitch_deg)?;
        Some(pi * self.yaw_values.len() + yi)
    }

    /// Index of `(0, 0)`; always present.
    pub fn center_index(&self) -> usize {
        self.index_of(Orientation::IDENTITY)
            .expect("grid invariant: contains (0, 0)")
    }

    pub fn iter(&self) -> impl Iterator<Item = Orientation> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

/// Builds the symmetric lattice `{-h, -h + step, ..., h}` on both axes.
pub fn make_grid(yaw_step: f64, pitch_step: f64, half_range: f64) -> Result<OrientationGrid> {
    if !(half_range > 0.0 && half_range <= 45.0) {
        return Err(Error::Config(format!(
            "half range must lie in (0, 45], got {half_range}"
        )));
    }
    let axis = |step: f64| -> Result<Vec<f64>> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("step must be positive, got {step}")));
        }
        let intervals = 2.0 * half_range / step;
        let rounded = intervals.round();
        if (intervals - rounded).abs() > 1e-9 || rounded % 2.0 != 0.0 {
            return Err(Error::Config(format!(
                "step {step} does not divide [-{half_range}, {half_range}] symmetrically"
            )));
        }
        let n = rounded as usize;
        Ok((0..=n)
            .map(|i| {
                let v = -half_range + i as f64 * step;
                // snap exact lattice points so (0, 0) is always representable
                if v.abs() < 1e-9 {
                    0.0
                } else {
                    v
                }
            })
            .collect())
    };
    OrientationGrid::new(axis(yaw_step)?, axis(pitch_step)?)
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn mul(&self, other: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[r][k] * other.0[k][c]).sum();
            }
        }
        Mat3(out)
    }

    pub fn apply(&self, d: Direction) -> Direction {
        let v = [d.x, d.y, d.z];
        let row = |r: usize| self.0[r][0] * v[0] + self.0[r][1] * v[1] + self.0[r][2] * v[2];
        Direction {
            x: row(0),
            y: row(1),
            z: row(2),
        }
    }

    pub fn transpose(&self) -> Mat3 {
        let m = self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

pub fn yaw_matrix(yaw_deg: f64) -> Mat3 {
    let (s, c) = sin_cos_deg(yaw_deg);
    Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

pub fn pitch_matrix(pitch_deg: f64) -> Mat3 {
    let (s, c) = sin_cos_deg(pitch_deg);
    Mat3([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
}

/// Rotation taking cube-local sampling directions to world directions.
pub fn rotation_of(o: Orientation) -> Mat3 {
    pitch_matrix(o.pitch_deg).mul(&yaw_matrix(o.yaw_deg))
}

/// Point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction {
    /// Normalizes `(x, y, z)`; the input must be non-zero.
    pub fn normalized(x: f64, y: f64, z: f64) -> Self {
        let n = (x * x + y * y + z * z).sqrt();
        Self {
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Longitude and latitude in degrees.
    pub fn lon_lat_deg(&self) -> (f64, f64) {
        let lon = self.x.atan2(self.z).to_degrees();
        let lat = self.y.clamp(-1.0, 1.0).asin().to_degrees();
        (lon, lat)
    }

    pub fn from_lon_lat_deg(lon: f64, lat: f64) -> Self {
        let (sl, cl) = lon.to_radians().sin_cos();
        let (sb, cb) = lat.to_radians().sin_cos();
        Self {
            x: cb * sl,
            y: sb,
            z: cb * cl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    Front,
    Back,
    Left,
    Right,
    Up,
    Down,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Front,
        Face::Back,
        Face::Left,
        Face::Right,
        Face::Up,
        Face::Down,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Face::Front => "front",
            Face::Back => "back",
            Face::Left => "left",
            Face::Right => "right",
            Face::Up => "up",
            Face::Down => "down",
        }
    }
}

/// A point on one cube face. `u` grows rightwards and `v` downwards in the
/// face image, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceCoord {
    pub face: Face,
    pub u: f64,
    pub v: f64,
}

impl FaceCoord {
    pub fn new(face: Face, u: f64, v: f64) -> Self {
        Self { face, u, v }
    }
}

/// Face-local axes: with `a = 2u - 1` and `b = 2v - 1`
///
/// | face  | cube point      |
/// |-------|-----------------|
/// | front | `( a, -b,  1)`  |
/// | back  | `(-a, -b, -1)`  |
/// | right | `( 1, -b, -a)`  |
/// | left  | `(-1, -b,  a)`  |
/// | up    | `( a,  1,  b)`  |
/// | down  | `( a, -1, -b)`  |
///
/// Every face edge meets its neighbour without a flip, and the up face's
/// bottom edge touches the front face's top edge.
pub fn face_to_direction(fc: FaceCoord) -> Direction {
    let a = 2.0 * fc.u - 1.0;
    let b = 2.0 * fc.v - 1.0;
    let (x, y, z) = match fc.face {
        Face::Front => (a, -b, 1.0),
        Face::Back => (-a, -b, -1.0),
        Face::Right => (1.0, -b, -a),
        Face::Left => (-1.0, -b, a),
        Face::Up => (a, 1.0, b),
        Face::Down => (a, -1.0, -b),
    };
    Direction::normalized(x, y, z)
}

/// Inverse of [`face_to_direction`]: the face hit by the ray and the point on it.
pub fn direction_to_face(d: Direction) -> FaceCoord {
    let (ax, ay, az) = (d.x.abs(), d.y.abs(), d.z.abs());
    // (face, a, b) such that the cube point matches the table above
    let (face, a, b) = if az >= ax && az >= ay {
        if d.z > 0.0 {
            (Face::Front, d.x / az, -d.y / az)
        } else {
            (Face::Back, -d.x / az, -d.y / az)
        }
    } else if ax >= ay {
        if d.x > 0.0 {
            (Face::Right, -d.z / ax, -d.y / ax)
        } else {
            (Face::Left, d.z / ax, -d.y / ax)
        }
    } else if d.y > 0.0 {
        (Face::Up, d.x / ay, d.z / ay)
    } else {
        (Face::Down, d.x / ay, -d.z / ay)
    };
    FaceCoord {
        face,
        u: ((a + 1.0) * 0.5).clamp(0.0, 1.0),
        v: ((b + 1.0) * 0.5).clamp(0.0, 1.0),
    }
}

/// Continuous equirectangular pixel coordinates of a direction. Pixel `(i, j)`
/// covers `[i, i + 1) x [j, j + 1)`.
pub fn direction_to_equirect(d: Direction, width: usize, height: usize) -> (f64, f64) {
    let (lon, lat) = d.lon_lat_deg();
    let x = (lon / 360.0 + 0.5) * width as f64;
    let y = (0.5 - lat / 180.0) * height as f64;
    (x, y)
}

pub fn equirect_to_direction(x: f64, y: f64, width: usize, height: usize) -> Direction {
    let lon = (x / width as f64 - 0.5) * 360.0;
    let lat = (0.5 - y / height as f64) * 180.0;
    Direction::from_lon_lat_deg(lon, lat)
}
