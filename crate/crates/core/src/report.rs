//! Relative-error maps, summary statistics and grayscale snapshots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::parr::write_atomic;
use crate::{Error, Result};

/// Chebyshev radius (in cells) around a well that counts as near-well.
pub const NEAR_WELL_RADIUS: usize = 3;

/// `|test − ref| / ref` elementwise. Undefined for non-positive reference
/// values, which are rejected.
pub fn relative_error_map(reference: &[f64], test: &[f64]) -> Result<Vec<f64>> {
    crate::error::check_len("test snapshot", reference.len(), test.len())?;
    reference
        .iter()
        .zip(test)
        .enumerate()
        .map(|(index, (&r, &t))| {
            if r > 0.0 {
                Ok((t - r).abs() / r)
            } else {
                Err(Error::NonPositiveReference { index, value: r })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
    /// Nearest-rank 95th percentile.
    pub p95: f64,
}

impl ErrorStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Self {
            count: sorted.len(),
            max: *sorted.last().unwrap(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p95: sorted[rank - 1],
        }
    }
}

/// Cells within Chebyshev distance `radius` of any well cell.
pub fn near_well_mask(nx: usize, ny: usize, wells: &[(usize, usize)], radius: usize) -> Vec<bool> {
    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            mask[j * nx + i] = wells
                .iter()
                .any(|&(wi, wj)| wi.abs_diff(i) <= radius && wj.abs_diff(j) <= radius);
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotReport {
    pub step: usize,
    pub all: ErrorStats,
    pub near_well: ErrorStats,
    pub far_field: ErrorStats,
    #[serde(skip)]
    pub field: Vec<f64>,
}

impl SnapshotReport {
    pub fn new(step: usize, reference: &[f64], test: &[f64], near: &[bool]) -> Result<Self> {
        let field = relative_error_map(reference, test)?;
        crate::error::check_len("near-well mask", field.len(), near.len())?;
        let (near_vals, far_vals): (Vec<(f64, bool)>, Vec<(f64, bool)>) =
            field.iter().map(|&e| e).zip(near.iter().copied()).partition(|&(_, is_near)| is_near);
        let strip = |v: Vec<(f64, bool)>| v.into_iter().map(|(e, _)| e).collect::<Vec<_>>();
        Ok(Self {
            step,
            all: ErrorStats::of(&field),
            near_well: ErrorStats::of(&strip(near_vals)),
            far_field: ErrorStats::of(&strip(far_vals)),
            field,
        })
    }
}

/// Error report over a set of snapshots of two trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub radius: usize,
    pub snapshots: Vec<SnapshotReport>,
}

impl ErrorReport {
    pub fn new(
        reference: &[Vec<f64>],
        test: &[Vec<f64>],
        steps: &[usize],
        nx: usize,
        ny: usize,
        wells: &[(usize, usize)],
        radius: usize,
    ) -> Result<Self> {
        let near = near_well_mask(nx, ny, wells, radius);
        let snapshots = steps
            .iter()
            .map(|&k| {
                let (r, t) = match (reference.get(k), test.get(k)) {
                    (Some(r), Some(t)) => (r, t),
                    _ => return Err(Error::StepOutOfRange { k, len: reference.len().min(test.len()) }),
                };
                SnapshotReport::new(k, r, t, &near)
            })
            .collect::<Result<_>>()?;
        Ok(Self { radius, snapshots })
    }

    pub fn to_csv(&self, dt_days: f64) -> String {
        let mut s = String::from("step,day,region,count,max,mean,p95\n");
        for snap in &self.snapshots {
            for (region, st) in [("all", snap.all), ("near_well", snap.near_well), ("far_field", snap.far_field)] {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:e},{:e},{:e}",
                    snap.step,
                    snap.step as f64 * dt_days,
                    region,
                    st.count,
                    st.max,
                    st.mean,
                    st.p95
                );
            }
        }
        s
    }
}

/// Snapshot indices proportional to the reference report days 20, 60 and
/// 100 of a 150-day training window and days 160 and 180 of a 50-day
/// extrapolation window.
pub fn report_steps(trained: usize, extrapolated: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [20.0, 60.0, 100.0]
        .iter()
        .map(|d| ((d / 150.0) * trained as f64).round() as usize)
        .collect();
    if extrapolated > 0 {
        out.extend(
            [10.0, 30.0]
                .iter()
                .map(|d| trained + ((d / 50.0) * extrapolated as f64).round() as usize),
        );
    }
    out.retain(|&k| k >= 1);
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapBounds {
    pub min: f64,
    pub max: f64,
    /// Set when the field is constant and was rendered as mid-gray.
    pub constant: bool,
}

/// 8-bit binary PGM (P5), min-max scaled, row `j = 0` first.
pub fn render_pgm(field: &[f64], nx: usize, ny: usize) -> Result<(Vec<u8>, HeatmapBounds)> {
    crate::error::check_len("heatmap field", nx * ny, field.len())?;
    if let Some(i) = field.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let min = field.iter().copied().fold(f64::INFINITY, f64::min);
    let max = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let constant = !(max > min);
    let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    bytes.extend(field.iter().map(|&v| {
        if constant {
            128
        } else {
            ((v - min) / (max - min) * 255.0).round().clamp(0.0, 255.0) as u8
        }
    }));
    Ok((bytes, HeatmapBounds { min, max, constant }))
}

/// Writes `path` as PGM and `<path>.json` with the scaling bounds.
pub fn write_heatmap(path: impl AsRef<Path>, field: &[f64], nx: usize, ny: usize) -> Result<HeatmapBounds> {
    let path = path.as_ref();
    let (bytes, bounds) = render_pgm(field, nx, ny)?;
    write_atomic(path, &bytes)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    write_atomic(&PathBuf::from(side), serde_json::to_string_pretty(&bounds)?.as_bytes())?;
    Ok(bounds)
}

/// One row of a well-rate history.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub step: usize,
    pub day: f64,
    pub well: String,
    /// m³/s
    pub rate: f64,
}

pub fn rates_csv(rows: &[RateRow]) -> String {
    let mut s = String::from("step,day,well,rate\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:e}", r.step, r.day, r.well, r.rate);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{to_si, Unit};

    #[test]
    fn self_comparison_is_zero() {
        let r = vec![2e7, 1.5e7, 1.9e7];
        assert_eq!(relative_error_map(&r, &r).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn uniform_one_percent() {
        let r = vec![to_si(2000.0, Unit::Psi); 16];
        let t = vec![to_si(2020.0, Unit::Psi); 16];
        for e in relative_error_map(&r, &t).unwrap() {
            assert!((e - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn non_positive_reference_rejected() {
        assert!(matches!(
            relative_error_map(&[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::NonPositiveReference { index: 1, .. })
        ));
    }

    #[test]
    fn stats_and_percentile() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = ErrorStats::of(&v);
        assert_eq!((s.count, s.max, s.p95), (100, 100.0, 95.0));
        assert_eq!(s.mean, 50.5);
        assert_eq!(ErrorStats::of(&[]).count, 0);
    }

    #[test]
    fn partition_covers_each_cell_once() {
        let near = near_well_mask(16, 16, &[(2, 2), (13, 13)], 3);
        assert_eq!(near.iter().filter(|&&b| b).count(), 6 * 6 + 6 * 6);
        let r = vec![1.0; 256];
        let t: Vec<f64> = (0..256).map(|i| 1.0 + i as f64 * 1e-3).collect();
        let snap = SnapshotReport::new(0, &r, &t, &near).unwrap();
        assert_eq!(snap.near_well.count + snap.far_field.count, 256);
        assert_eq!(snap.all.count, 256);
    }

    #[test]
    fn report_steps_scale() {
        assert_eq!(report_steps(300, 100), vec![40, 120, 200, 320, 360]);
        assert_eq!(report_steps(50, 20), vec![7, 20, 33, 54, 62]);
    }

    #[test]
    fn checkerboard_pgm() {
        let (bytes, b) = render_pgm(&[0.0, 1.0, 1.0, 0.0], 2, 2).unwrap();
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 255, 0]);
        assert!(!b.constant);
    }

    #[test]
    fn constant_pgm_is_mid_gray() {
        let (bytes, b) = render_pgm(&[3.0; 6], 3, 2).unwrap();
        assert!(bytes[11..].iter().all(|&v| v == 128));
        assert!(b.constant);
        assert!(render_pgm(&[f64::NAN], 1, 1).is_err());
    }
}
