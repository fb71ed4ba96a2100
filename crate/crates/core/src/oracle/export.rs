//! On-disk formats for size tables and heatmaps.
//!
//! Size table CSV columns are `theta_deg` (pitch), `phi_deg` (yaw) and
//! `bytes`, one row per orientation in grid order. Heatmaps are matrices with
//! one row per pitch (top row = largest pitch) and one column per yaw.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{clip_metrics, ClipId, ClipMetrics, SizeTable};
use crate::codec::CodecId;
use crate::error::{Error, Result};
use crate::frame::Plane;
use crate::geometry::{Orientation, OrientationGrid};
use crate::io::write_png;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    theta_deg: f64,
    phi_deg: f64,
    bytes: u64,
}

pub fn write_size_csv(path: &Path, t: &SizeTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (o, bytes) in t.entries() {
        w.serialize(Row {
            theta_deg: o.pitch_deg,
            phi_deg: o.yaw_deg,
            bytes,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a size CSV back; rows may appear in any order.
pub fn read_size_csv(
    path: &Path,
    grid: OrientationGrid,
    codec: CodecId,
    clip: ClipId,
) -> Result<SizeTable> {
    let mut r = csv::Reader::from_path(path)?;
    let mut entries = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        entries.push((Orientation::new(row.phi_deg, row.theta_deg), row.bytes));
    }
    SizeTable::from_entries(grid, &entries, codec, clip)
}

/// A size table together with everything derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableBundle {
    pub table: SizeTable,
    pub metrics: ClipMetrics,
}

pub fn write_bundle_json(path: &Path, t: &SizeTable) -> Result<()> {
    let bundle = TableBundle {
        table: t.clone(),
        metrics: clip_metrics(t)?,
    };
    let text = serde_json::to_string_pretty(&bundle)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_bundle_json(path: &Path) -> Result<TableBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rearranges grid-ordered values into heatmap rows (largest pitch first).
pub fn heatmap_rows(grid: &OrientationGrid, values: &[f64]) -> Vec<Vec<f64>> {
    let nyaw = grid.yaw_values().len();
    values.chunks(nyaw).rev().map(<[f64]>::to_vec).collect()
}

pub fn write_heatmap_csv(path: &Path, grid: &OrientationGrid, values: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut header = vec!["theta\\phi".to_string()];
    header.extend(grid.yaw_values().iter().map(|y| y.to_string()));
    w.write_record(&header)?;
    let pitches: Vec<f64> = grid.pitch_values().iter().rev().copied().collect();
    for (p, row) in pitches.iter().zip(heatmap_rows(grid, values)) {
        let mut rec = vec![p.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// 8-bit grayscale rendering, linearly scaled so the smallest value is black
/// and the largest white; each cell is `cell` pixels square.
pub fn heatmap_image(grid: &OrientationGrid, values: &[f64], cell: usize) -> Plane {
    let rows = heatmap_rows(grid, values);
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cell = cell.max(1);
    let w = grid.yaw_values().len() * cell;
    let h = rows.len() * cell;
    Plane::from_fn(w, h, |x, y| {
        let v = rows[y / cell][x / cell];
        (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8
    })
}

pub fn write_heatmap_png(
    path: &Path,
    grid: &OrientationGrid,
    values: &[f64],
    cell: usize,
) -> Result<()> {
    write_png(path, &heatmap_image(grid, values, cell))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;

    fn table() -> SizeTable {
        SizeTable::new(
            make_grid(45.0, 45.0, 45.0).unwrap(),
            vec![100, 200, 150, 120, 180, 100, 110, 190, 130],
            CodecId::Reference,
            ClipId::new("clip", 2),
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sizes.csv");
        let t = table();
        write_size_csv(&path, &t).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some("theta_deg,phi_deg,bytes"));
        assert_eq!(text.lines().count(), 10);
        let back = read_size_csv(&path, t.grid.clone(), t.codec, t.clip.clone()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        write_bundle_json(&path, &table()).unwrap();
        let b = read_bundle_json(&path).unwrap();
        assert_eq!(b.table, table());
        assert_eq!(b.metrics.size_min, 100);
    }

    #[test]
    fn heatmap_puts_top_pitch_first() {
        let t = table();
        let values: Vec<f64> = t.sizes.iter().map(|&s| s as f64).collect();
        let rows = heatmap_rows(&t.grid, &values);
        assert_eq!(rows[0], vec![110.0, 190.0, 130.0]);
        let img = heatmap_image(&t.grid, &values, 2);
        assert_eq!((img.width(), img.height()), (6, 6));
        assert_eq!(img.get(2, 4), 255);
        assert_eq!(img.get(0, 4), 0);
    }
}
