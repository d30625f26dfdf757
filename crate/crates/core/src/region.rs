//! Observation windows and event sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A location in the observation window; its length is the window dimension.
pub type Point = Vec<f64>;

/// Axis-aligned bounded observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
    volume: f64,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Parameter(format!(
                "region bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (a, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::Parameter(format!(
                    "axis {a}: upper bound {hi} must strictly exceed lower bound {lo}"
                )));
            }
        }
        let volume = lower.iter().zip(&upper).map(|(lo, hi)| hi - lo).product();
        Ok(Region {
            lower,
            upper,
            volume,
        })
    }

    /// The unit interval `[0, 1]`.
    pub fn unit_interval() -> Self {
        Region::new(vec![0.0], vec![1.0]).expect("valid bounds")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Closed-bounds membership test.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    /// Evenly spaced points per axis (row-major over axes, last axis fastest),
    /// including both endpoints.
    pub fn lattice(&self, per_axis: usize) -> Vec<Point> {
        lattice(&self.lower, &self.upper, per_axis)
    }

    /// Same as [`Region::lattice`] on the window widened by `margin` times the
    /// extent on each side.
    pub fn widened_lattice(&self, per_axis: usize, margin: f64) -> Vec<Point> {
        let lower: Vec<f64> = (0..self.dim())
            .map(|a| self.lower[a] - margin * self.extent(a))
            .collect();
        let upper: Vec<f64> = (0..self.dim())
            .map(|a| self.upper[a] + margin * self.extent(a))
            .collect();
        lattice(&lower, &upper, per_axis)
    }
}

fn lattice(lower: &[f64], upper: &[f64], per_axis: usize) -> Vec<Point> {
    let axis_values: Vec<Vec<f64>> = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| {
            if per_axis == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_axis)
                    .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let total = per_axis.pow(lower.len() as u32);
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = vec![0.0; lower.len()];
        for a in (0..lower.len()).rev() {
            p[a] = axis_values[a][rem % per_axis];
            rem /= per_axis;
        }
        points.push(p);
    }
    points
}

/// Observed event locations of one process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub process_id: usize,
    pub points: Vec<Point>,
}

impl EventSet {
    pub fn new(process_id: usize, points: Vec<Point>) -> Self {
        EventSet { process_id, points }
    }

    pub fn empty(process_id: usize) -> Self {
        EventSet {
            process_id,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fails on the first point outside `region`, naming its index.
    pub fn validate(&self, region: &Region) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !region.contains(p) {
                return Err(Error::Validation(format!(
                    "process {}: event {i} at {p:?} lies outside the region",
                    self.process_id
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_is_product_of_extents() {
        let r = Region::new(vec![0.0, -1.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(r.volume(), 6.0);
        assert_eq!(r.dim(), 2);
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(Region::new(vec![1.0], vec![1.0]).is_err());
        assert!(Region::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Region::new(vec![], vec![]).is_err());
    }

    #[test]
    fn closed_bounds() {
        let r = Region::unit_interval();
        assert!(r.contains(&[0.0]));
        assert!(r.contains(&[1.0]));
        assert!(!r.contains(&[1.0 + 1e-12]));
        assert!(!r.contains(&[0.5, 0.5]));
    }

    #[test]
    fn lattice_layout() {
        let r = Region::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let pts = r.lattice(3);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(pts[1], vec![0.0, 1.0]);
        assert_eq!(pts[8], vec![1.0, 2.0]);
        let wide = Region::unit_interval().widened_lattice(3, 0.1);
        assert!((wide[0][0] + 0.1).abs() < 1e-15);
        assert!((wide[2][0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn event_validation_names_index() {
        let r = Region::unit_interval();
        let ev = EventSet::new(0, vec![vec![0.2], vec![1.5]]);
        let msg = ev.validate(&r).unwrap_err().to_string();
        assert!(msg.contains("event 1"), "{msg}");
    }
}
