//! Low-dimensional projections of an embedded trajectory, their occupancy
//! histograms, and the L1 deviation between two histograms.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::DelayVectorSet;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("BadAxes: {0}")]
    BadAxes(String),
    #[error("BadBounds: {0}")]
    BadBounds(String),
    #[error("IncompatibleHistograms: {0}")]
    IncompatibleHistograms(String),
}

/// Points of a trajectory restricted to 2 or 3 embedding components, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub axes: Vec<usize>,
    points: Vec<f64>,
}

impl Projection {
    pub fn len(&self) -> usize {
        self.points.len() / self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let k = self.axes.len();
        &self.points[i * k..(i + 1) * k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.axes.len())
    }

    /// Projection over the given subset of point indices, keeping their order.
    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> Projection {
        let mut points = Vec::new();
        for i in indices {
            points.extend_from_slice(self.point(i));
        }
        Projection { axes: self.axes.clone(), points }
    }

    /// Points of several projections over the same axes, in order.
    pub fn concat(parts: &[Projection]) -> Result<Projection, TrajectoryError> {
        let Some(first) = parts.first() else {
            return Err(TrajectoryError::BadAxes("nothing to concatenate".into()));
        };
        if let Some(p) = parts.iter().find(|p| p.axes != first.axes) {
            return Err(TrajectoryError::BadAxes(format!("axes {:?} vs {:?}", first.axes, p.axes)));
        }
        Ok(Projection {
            axes: first.axes.clone(),
            points: parts.iter().flat_map(|p| p.points.iter().copied()).collect(),
        })
    }

    /// `t_index,x,y[,z]` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t_index", "x", "y"];
        if self.axes.len() == 3 {
            header.push("z");
        }
        w.write_record(&header)?;
        for (i, p) in self.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn project(vectors: &DelayVectorSet, axes: &[usize]) -> Result<Projection, TrajectoryError> {
    if !(2..=3).contains(&axes.len()) {
        return Err(TrajectoryError::BadAxes(format!("need 2 or 3 axes, got {}", axes.len())));
    }
    for (i, a) in axes.iter().enumerate() {
        if *a >= vectors.dim {
            return Err(TrajectoryError::BadAxes(format!("axis {a} out of range for dimension {}", vectors.dim)));
        }
        if axes[..i].contains(a) {
            return Err(TrajectoryError::BadAxes(format!("axis {a} repeated")));
        }
    }
    let mut points = Vec::with_capacity(vectors.len() * axes.len());
    for v in vectors.iter() {
        points.extend(axes.iter().map(|&a| v[a]));
    }
    Ok(Projection { axes: axes.to_vec(), points })
}

/// Normalized cell masses over a `B^k` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyHistogram {
    pub axes: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
    pub bins_per_axis: usize,
    /// Row-major, first axis most significant.
    pub mass: Vec<f64>,
}

/// Grid description without the masses (the JSON sidecar of a histogram export).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramShape {
    pub axes: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
    pub bins_per_axis: usize,
}

impl OccupancyHistogram {
    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn shape(&self) -> HistogramShape {
        HistogramShape { axes: self.axes.clone(), bounds: self.bounds.clone(), bins_per_axis: self.bins_per_axis }
    }

    /// Cell holding `point`; values outside the bounds land in the nearest edge cell.
    pub fn cell_of(&self, point: &[f64]) -> usize {
        cell_index(point, &self.bounds, self.bins_per_axis)
    }

    /// `cell_index,mass` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_index", "mass"])?;
        for (i, m) in self.mass.iter().enumerate() {
            w.write_record([i.to_string(), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn axis_cell(v: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    if v.is_nan() || v <= lo {
        return 0;
    }
    if v >= hi {
        return bins - 1;
    }
    (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
}

fn cell_index(point: &[f64], bounds: &[(f64, f64)], bins: usize) -> usize {
    point.iter().zip(bounds).fold(0, |idx, (&v, &b)| idx * bins + axis_cell(v, b, bins))
}

fn data_bounds(projection: &Projection) -> Vec<(f64, f64)> {
    (0..projection.axes.len())
        .map(|k| {
            let (lo, hi) = projection
                .iter()
                .map(|p| p[k])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if !lo.is_finite() || !hi.is_finite() {
                (0.0, 1.0)
            } else if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        })
        .collect()
}

/// Builds the occupancy histogram of `projection`.
///
/// Without explicit bounds each axis spans the data range (a zero-width
/// range is widened to one unit centred on the value).
pub fn occupancy(
    projection: &Projection,
    bins_per_axis: usize,
    bounds: Option<&[(f64, f64)]>,
) -> Result<OccupancyHistogram, TrajectoryError> {
    if bins_per_axis < 2 {
        return Err(TrajectoryError::BadBounds(format!("bins_per_axis {bins_per_axis} below 2")));
    }
    let dims = projection.axes.len();
    let bounds = match bounds {
        Some(b) => {
            if b.len() != dims {
                return Err(TrajectoryError::BadBounds(format!("{} bounds for {dims} axes", b.len())));
            }
            for &(lo, hi) in b {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(TrajectoryError::BadBounds(format!("need finite min < max, got ({lo}, {hi})")));
                }
            }
            b.to_vec()
        }
        None => data_bounds(projection),
    };
    let cells =
        bins_per_axis.checked_pow(dims as u32).ok_or_else(|| TrajectoryError::BadBounds("grid too large".into()))?;
    let mut counts = vec![0u64; cells];
    for p in projection.iter() {
        counts[cell_index(p, &bounds, bins_per_axis)] += 1;
    }
    let n = projection.len();
    let mass = if n == 0 { vec![0.0; cells] } else { counts.iter().map(|&c| c as f64 / n as f64).collect() };
    Ok(OccupancyHistogram { axes: projection.axes.clone(), bounds, bins_per_axis, mass })
}

/// L1 distance between two histograms on the same grid, in `[0, 2]`.
pub fn deviation_score(baseline: &OccupancyHistogram, observed: &OccupancyHistogram) -> Result<f64, TrajectoryError> {
    if baseline.axes != observed.axes {
        return Err(TrajectoryError::IncompatibleHistograms(format!(
            "axes {:?} vs {:?}",
            baseline.axes, observed.axes
        )));
    }
    if baseline.bins_per_axis != observed.bins_per_axis {
        return Err(TrajectoryError::IncompatibleHistograms(format!(
            "bins {} vs {}",
            baseline.bins_per_axis, observed.bins_per_axis
        )));
    }
    if baseline.bounds != observed.bounds {
        return Err(TrajectoryError::IncompatibleHistograms("bounds differ".into()));
    }
    if baseline.mass.len() != observed.mass.len() {
        return Err(TrajectoryError::IncompatibleHistograms("cell counts differ".into()));
    }
    Ok(baseline.mass.iter().zip(&observed.mass).map(|(a, b)| (a - b).abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::build_delay_vectors;

    fn proj2(points: &[[f64; 2]]) -> Projection {
        Projection { axes: vec![0, 1], points: points.iter().flatten().copied().collect() }
    }

    #[test]
    fn project_selects_components() {
        let v = build_delay_vectors(&[1.0, 2.0, 3.0, 4.0], 3, 1).unwrap();
        let p = project(&v, &[0, 2]).unwrap();
        assert_eq!(p.point(0), &[1.0, 3.0]);
        assert_eq!(p.point(1), &[2.0, 4.0]);
        assert!(matches!(project(&v, &[1, 1]), Err(TrajectoryError::BadAxes(_))));
        assert!(matches!(project(&v, &[0, 3]), Err(TrajectoryError::BadAxes(_))));
        assert!(matches!(project(&v, &[0]), Err(TrajectoryError::BadAxes(_))));
    }

    #[test]
    fn corners_split_evenly() {
        let p = proj2(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
        let h = occupancy(&p, 2, None).unwrap();
        assert_eq!(h.mass, vec![0.25; 4]);
    }

    #[test]
    fn empty_and_single_point() {
        let h = occupancy(&proj2(&[]), 4, None).unwrap();
        assert_eq!(h.total_mass(), 0.0);
        let h = occupancy(&proj2(&[[3.0, 3.0]; 5]), 4, None).unwrap();
        assert_eq!(h.mass.iter().filter(|m| **m > 0.0).count(), 1);
        assert_eq!(h.total_mass(), 1.0);
    }

    #[test]
    fn out_of_bounds_clip_to_edges() {
        let p = proj2(&[[-10.0, 0.5], [10.0, 0.5]]);
        let h = occupancy(&p, 4, Some(&[(0.0, 1.0), (0.0, 1.0)])).unwrap();
        assert_eq!(h.mass[2], 0.5);
        assert_eq!(h.mass[3 * 4 + 2], 0.5);
    }

    #[test]
    fn bad_bounds() {
        let p = proj2(&[[0.0, 0.0]]);
        assert!(matches!(occupancy(&p, 1, None), Err(TrajectoryError::BadBounds(_))));
        assert!(matches!(occupancy(&p, 4, Some(&[(1.0, 1.0), (0.0, 1.0)])), Err(TrajectoryError::BadBounds(_))));
        assert!(matches!(occupancy(&p, 4, Some(&[(0.0, 1.0)])), Err(TrajectoryError::BadBounds(_))));
    }

    #[test]
    fn deviation_extremes() {
        let a = occupancy(&proj2(&[[0.0, 0.0], [1.0, 1.0]]), 2, None).unwrap();
        assert_eq!(deviation_score(&a, &a).unwrap(), 0.0);
        let b = occupancy(&proj2(&[[0.0, 0.0]]), 2, Some(&a.bounds)).unwrap();
        let c = occupancy(&proj2(&[[1.0, 1.0]]), 2, Some(&a.bounds)).unwrap();
        assert_eq!(deviation_score(&b, &c).unwrap(), 2.0);
        let d = occupancy(&proj2(&[[0.0, 0.0]]), 3, Some(&a.bounds)).unwrap();
        assert!(matches!(deviation_score(&b, &d), Err(TrajectoryError::IncompatibleHistograms(_))));
    }
}
