//! Exhaustive orientation search and the size statistics computed from it.

pub mod export;
pub mod kmeans;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{size_at, CodecId};
use crate::error::{Error, Result};
use crate::frame::EquirectFrame;
use crate::geometry::{Orientation, OrientationGrid};

pub use kmeans::{cluster_distributions, ClusterModel};

/// Identifies a clip: its source video and its position within it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClipId {
    pub video: String,
    pub index: usize,
}

impl ClipId {
    pub fn new(video: impl Into<String>, index: usize) -> Self {
        Self {
            video: video.into(),
            index,
        }
    }
}

impl fmt::Display for ClipId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.video, self.index)
    }
}

/// Encoded size of one clip at every grid orientation, stored row-major in
/// grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeTable {
    pub grid: OrientationGrid,
    pub sizes: Vec<u64>,
    pub codec: CodecId,
    pub clip: ClipId,
}

impl SizeTable {
    pub fn new(
        grid: OrientationGrid,
        sizes: Vec<u64>,
        codec: CodecId,
        clip: ClipId,
    ) -> Result<Self> {
        if sizes.len() != grid.len() {
            return Err(Error::Input(format!(
                "{} sizes for a grid of {}",
                sizes.len(),
                grid.len()
            )));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Input(format!("zero size at {}", grid.get(i))));
        }
        Ok(Self {
            grid,
            sizes,
            codec,
            clip,
        })
    }

    /// Builds a table from `(orientation, bytes)` pairs in any order.
    pub fn from_entries(
        grid: OrientationGrid,
        entries: &[(Orientation, u64)],
        codec: CodecId,
        clip: ClipId,
    ) -> Result<Self> {
        let mut sizes = vec![0u64; grid.len()];
        for &(o, bytes) in entries {
            let i = grid
                .index_of(o)
                .ok_or_else(|| Error::Input(format!("{o} is not on the grid")))?;
            if sizes[i] != 0 {
                return Err(Error::Input(format!("duplicate entry for {o}")));
            }
            sizes[i] = bytes;
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Input(format!("missing entry for {}", grid.get(i))));
        }
        Self::new(grid, sizes, codec, clip)
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn size_of(&self, o: Orientation) -> Option<u64> {
        self.grid.index_of(o).map(|i| self.sizes[i])
    }

    /// Index of the smallest size; ties go to the lowest index, which is the
    /// lexicographically smallest `(pitch, yaw)`.
    pub fn argmin(&self) -> usize {
        first_extreme(&self.sizes, |a, b| a < b)
    }

    pub fn argmax(&self) -> usize {
        first_extreme(&self.sizes, |a, b| a > b)
    }

    pub fn min(&self) -> u64 {
        self.sizes[self.argmin()]
    }

    pub fn max(&self) -> u64 {
        self.sizes[self.argmax()]
    }

    /// Entries keyed by orientation, in grid order.
    pub fn entries(&self) -> Vec<(Orientation, u64)> {
        self.grid.iter().zip(self.sizes.iter().copied()).collect()
    }
}

fn first_extreme<T: Copy>(values: &[T], better: impl Fn(T, T) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

/// Index of the smallest value with lowest-index tie-breaking. NaNs never win.
pub fn argmin_f64(values: &[f64]) -> usize {
    first_extreme(values, |a, b| a < b || (b.is_nan() && !a.is_nan()))
}

/// Measures `clip` at every orientation of `grid`, running at most `jobs`
/// encodes at a time. The table is assembled by grid index, so the result
/// does not depend on `jobs`.
pub fn build_size_table(
    clip: &[EquirectFrame],
    grid: &OrientationGrid,
    codec: CodecId,
    face_size: usize,
    fps: f64,
    clip_id: ClipId,
    jobs: usize,
) -> Result<SizeTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<u64>> = pool.install(|| {
        (0..grid.len())
            .into_par_iter()
            .map(|i| size_at(clip, grid.get(i), codec, face_size, fps))
            .collect()
    });
    let total = results.len();
    let completed = results.iter().filter(|r| r.is_ok()).count();
    let mut sizes = Vec::with_capacity(total);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(bytes) => sizes.push(bytes),
            Err(e) => {
                return Err(Error::SizeTableAborted {
                    completed,
                    total,
                    failed_at: grid.get(i),
                    source: Box::new(e),
                })
            }
        }
    }
    SizeTable::new(grid.clone(), sizes, codec, clip_id)
}

/// Percentage size gap between the worst and the best orientation.
pub fn reduction(t: &SizeTable) -> f64 {
    let (max, min) = (t.max() as f64, t.min() as f64);
    100.0 * (max - min) / max
}

/// Size reduction of a whole video when every clip is coded at its best
/// rather than its worst orientation (sums of per-clip extremes).
pub fn video_reduction(tables: &[SizeTable]) -> f64 {
    let max: u64 = tables.iter().map(SizeTable::max).sum();
    let min: u64 = tables.iter().map(SizeTable::min).sum();
    if max == 0 {
        return 0.0;
    }
    100.0 * (max - min) as f64 / max as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSizes {
    /// `100 * (S - S_min) / (S_max - S_min)` per orientation, grid order.
    pub values: Vec<f64>,
    /// Set when every orientation has the same size; values are then all 0.
    pub degenerate: bool,
}

pub fn normalized_sizes(t: &SizeTable) -> NormalizedSizes {
    let (max, min) = (t.max(), t.min());
    if max == min {
        return NormalizedSizes {
            values: vec![0.0; t.len()],
            degenerate: true,
        };
    }
    let span = (max - min) as f64;
    NormalizedSizes {
        values: t
            .sizes
            .iter()
            .map(|&s| 100.0 * (s - min) as f64 / span)
            .collect(),
        degenerate: false,
    }
}

/// Size relative to the unrotated orientation, `S - S(0, 0)`, in bytes.
pub fn relative_sizes(t: &SizeTable) -> Result<Vec<i64>> {
    let center = t
        .grid
        .index_of(Orientation::IDENTITY)
        .ok_or_else(|| Error::Input("size table has no (0, 0) entry".into()))?;
    let base = t.sizes[center] as i64;
    Ok(t.sizes.iter().map(|&s| s as i64 - base).collect())
}

/// Everything derived from one size table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub clip: ClipId,
    pub codec: CodecId,
    pub omega_min: Orientation,
    pub omega_max: Orientation,
    pub size_min: u64,
    pub size_max: u64,
    pub size_center: u64,
    pub reduction_percent: f64,
    pub normalized: NormalizedSizes,
    pub relative: Vec<i64>,
}

pub fn clip_metrics(t: &SizeTable) -> Result<ClipMetrics> {
    let relative = relative_sizes(t)?;
    Ok(ClipMetrics {
        clip: t.clip.clone(),
        codec: t.codec,
        omega_min: t.grid.get(t.argmin()),
        omega_max: t.grid.get(t.argmax()),
        size_min: t.min(),
        size_max: t.max(),
        size_center: t.sizes[t.grid.center_index()],
        reduction_percent: reduction(t),
        normalized: normalized_sizes(t),
        relative,
    })
}

/// Pearson correlation; `None` when either side has zero variance or fewer
/// than two samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson needs paired samples");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa.sqrt() * sbb.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCodecCorrelation {
    /// Mean of the per-orientation correlations that are defined.
    pub mean: f64,
    /// Per-orientation correlation in grid order; `None` where either codec's
    /// relative sizes do not vary across clips (always the case at (0, 0)).
    pub per_orientation: Vec<Option<f64>>,
}

/// For each orientation, correlates the relative sizes of the same clips
/// under two codecs, then averages over orientations.
pub fn cross_codec_correlation(a: &[SizeTable], b: &[SizeTable]) -> Result<CrossCodecCorrelation> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "{} clips versus {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Input("correlation needs at least two clips".into()));
    }
    let grid = &a[0].grid;
    for (ta, tb) in a.iter().zip(b) {
        if ta.clip != tb.clip {
            return Err(Error::Input(format!(
                "clip mismatch: {} vs {}",
                ta.clip, tb.clip
            )));
        }
        if &ta.grid != grid || &tb.grid != grid {
            return Err(Error::Input("tables use different grids".into()));
        }
    }
    let rel_a = a.iter().map(relative_sizes).collect::<Result<Vec<_>>>()?;
    let rel_b = b.iter().map(relative_sizes).collect::<Result<Vec<_>>>()?;
    let per_orientation: Vec<Option<f64>> = (0..grid.len())
        .map(|i| {
            let xa: Vec<f64> = rel_a.iter().map(|r| r[i] as f64).collect();
            let xb: Vec<f64> = rel_b.iter().map(|r| r[i] as f64).collect();
            pearson(&xa, &xb)
        })
        .collect();
    let defined: Vec<f64> = per_orientation.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Input(
            "relative sizes never vary across clips".into(),
        ));
    }
    Ok(CrossCodecCorrelation {
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
        per_orientation,
    })
}

/// Which orientations a symmetry check compares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryConfig {
    pub base_yaws: Vec<f64>,
    pub base_pitches: Vec<f64>,
    /// Yaw offset between each base orientation and its partner. Partners of
    /// non-positive base yaws are `yaw + shift`, of positive ones `yaw - shift`,
    /// so every partner stays within a half turn of the front.
    pub shift_deg: f64,
}

impl SymmetryConfig {
    pub fn with_shift(shift_deg: f64) -> Self {
        Self {
            base_yaws: vec![-30.0, -15.0, 0.0, 15.0, 30.0],
            base_pitches: vec![-30.0, 0.0, 30.0],
            shift_deg,
        }
    }

    pub fn pairs(&self) -> Vec<(Orientation, Orientation)> {
        let mut out = Vec::new();
        for &p in &self.base_pitches {
            for &y in &self.base_yaws {
                let partner = if y <= 0.0 {
                    y + self.shift_deg
                } else {
                    y - self.shift_deg
                };
                out.push((Orientation::new(y, p), Orientation::new(partner, p)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub shift_deg: f64,
    pub base_sizes: Vec<u64>,
    pub shifted_sizes: Vec<u64>,
    /// `None` when the sizes are flat (e.g. uniform content).
    pub correlation: Option<f64>,
}

impl SymmetryReport {
    pub fn is_degenerate(&self) -> bool {
        self.correlation.is_none()
    }
}

/// Correlates sizes at a set of base orientations with sizes at their
/// yaw-shifted partners.
pub fn rotational_symmetry_check(
    clip: &[EquirectFrame],
    codec: CodecId,
    face_size: usize,
    fps: f64,
    cfg: &SymmetryConfig,
) -> Result<SymmetryReport> {
    let pairs = cfg.pairs();
    let measured: Vec<Result<(u64, u64)>> = pairs
        .par_iter()
        .map(|(a, b)| {
            Ok((
                size_at(clip, *a, codec, face_size, fps)?,
                size_at(clip, *b, codec, face_size, fps)?,
            ))
        })
        .collect();
    let measured = measured.into_iter().collect::<Result<Vec<_>>>()?;
    let (base_sizes, shifted_sizes): (Vec<u64>, Vec<u64>) = measured.into_iter().unzip();
    let xa: Vec<f64> = base_sizes.iter().map(|&s| s as f64).collect();
    let xb: Vec<f64> = shifted_sizes.iter().map(|&s| s as f64).collect();
    Ok(SymmetryReport {
        shift_deg: cfg.shift_deg,
        correlation: pearson(&xa, &xb),
        base_sizes,
        shifted_sizes,
    })
}

/// Normalized maps keyed by clip, for clustering.
pub fn normalized_maps(tables: &[SizeTable]) -> BTreeMap<ClipId, Vec<f64>> {
    tables
        .iter()
        .map(|t| (t.clip.clone(), normalized_sizes(t).values))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;

    fn table(sizes: Vec<u64>) -> SizeTable {
        SizeTable::new(
            make_grid(45.0, 45.0, 45.0).unwrap(),
            sizes,
            CodecId::Reference,
            ClipId::new("v", 0),
        )
        .unwrap()
    }

    #[test]
    fn reduction_examples() {
        let t = table(vec![1000, 990, 980, 970, 960, 950, 930, 910, 900]);
        assert!((reduction(&t) - 10.0).abs() < 1e-12);
        assert_eq!(reduction(&table(vec![5; 9])), 0.0);
    }

    #[test]
    fn normalized_examples() {
        let t = table(vec![100, 200, 150, 120, 180, 100, 110, 190, 130]);
        let n = normalized_sizes(&t);
        assert!(!n.degenerate);
        assert_eq!(n.values[0], 0.0);
        assert_eq!(n.values[1], 100.0);
        assert_eq!(n.values[2], 50.0);
        let flat = normalized_sizes(&table(vec![7; 9]));
        assert!(flat.degenerate);
        assert!(flat.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relative_examples() {
        let sizes = vec![100, 200, 150, 120, 180, 100, 110, 190, 130];
        let t = table(sizes.clone());
        let r = relative_sizes(&t).unwrap();
        assert_eq!(r[4], 0);
        assert_eq!(r[0], -80);
        let shifted = table(sizes.iter().map(|s| s + 1234).collect());
        assert_eq!(relative_sizes(&shifted).unwrap(), r);
    }

    #[test]
    fn table_validation() {
        let g = make_grid(45.0, 45.0, 45.0).unwrap();
        assert!(SizeTable::new(
            g.clone(),
            vec![1; 8],
            CodecId::Reference,
            ClipId::new("v", 0)
        )
        .is_err());
        assert!(SizeTable::new(
            g.clone(),
            vec![0; 9],
            CodecId::Reference,
            ClipId::new("v", 0)
        )
        .is_err());
        let entries: Vec<_> = g.iter().map(|o| (o, 10)).take(8).collect();
        assert!(
            SizeTable::from_entries(g, &entries, CodecId::Reference, ClipId::new("v", 0)).is_err()
        );
    }

    #[test]
    fn ties_break_to_smallest_pitch_then_yaw() {
        let t = table(vec![5, 3, 3, 9, 3, 9, 1, 1, 9]);
        assert_eq!(t.grid.get(t.argmin()), Orientation::new(-45.0, 45.0));
        assert_eq!(t.grid.get(t.argmax()), Orientation::new(-45.0, 0.0));
        assert_eq!(argmin_f64(&[2.0, f64::NAN, 1.0, 1.0]), 2);
    }

    #[test]
    fn correlation_of_identical_and_affine_tables() {
        let a: Vec<SizeTable> = (0..4)
            .map(|k| {
                let mut t = table(
                    (0..9)
                        .map(|i| 100 + ((i * 7 + k * 13) % 11) as u64)
                        .collect(),
                );
                t.clip = ClipId::new("v", k as usize);
                t
            })
            .collect();
        let c = cross_codec_correlation(&a, &a).unwrap();
        assert!((c.mean - 1.0).abs() < 1e-12);
        assert!(c.per_orientation[4].is_none());

        let b: Vec<SizeTable> = a
            .iter()
            .map(|t| SizeTable {
                sizes: t.sizes.iter().map(|s| 2 * s + 7).collect(),
                ..t.clone()
            })
            .collect();
        assert!((cross_codec_correlation(&a, &b).unwrap().mean - 1.0).abs() < 1e-12);
        assert!(cross_codec_correlation(&a[..1], &b[..1]).is_err());
    }

    #[test]
    fn symmetry_pairs_match_the_partner_set() {
        let cfg = SymmetryConfig::with_shift(90.0);
        let mut partners: Vec<f64> = cfg.pairs().iter().map(|p| p.1.yaw_deg).collect();
        partners.sort_by(f64::total_cmp);
        partners.dedup();
        assert_eq!(partners, vec![-75.0, -60.0, 60.0, 75.0, 90.0]);
    }
}
