//! Discretization of the domain into a regular lattice with half-open cells.
//!
//! The lattice consists of the grid points `i / N` (componentwise) whose
//! half-open cell `(t - 1/N, t]` (componentwise product) meets the domain.
//! Each point owns the Lebesgue measure of its clipped cell; the measures
//! partition the domain exactly, so the discrete exponential sum below is a
//! Riemann sum anchored at cell upper corners. Points whose clipped cell is a
//! lower face of the domain carry measure zero but still participate in the
//! sampling measure.

use crate::error::{GrfError, Result};
use crate::model::Domain;

/// Regular grid over an axis-aligned domain, points in lexicographic order
/// of their integer coordinates (first axis most significant).
#[derive(Debug, Clone)]
pub struct Lattice {
    pub d: usize,
    /// Subdivisions per unit length; the grid step is `1 / n_per_unit`.
    pub n_per_unit: u32,
    /// Grid point coordinates, `len() = n_points()`.
    pub points: Vec<Vec<f64>>,
    /// Clipped cell measures, aligned with `points`; they sum to the domain
    /// volume.
    pub measures: Vec<f64>,
    pub total_measure: f64,
}

impl Lattice {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }
}

/// Inclusive integer index range `[i_min, i_max]` of grid points on one axis
/// whose cell `((i-1)/n, i/n]` meets `[lower, upper]`. The float comparisons
/// are verified and nudged so that exact lattice-aligned endpoints land on
/// the intended side.
fn axis_index_range(lower: f64, upper: f64, n: f64) -> (i64, i64) {
    // Smallest i with i/n >= lower.
    let mut i_min = (lower * n).ceil() as i64;
    while (i_min as f64) / n < lower {
        i_min += 1;
    }
    while ((i_min - 1) as f64) / n >= lower {
        i_min -= 1;
    }
    // Largest i with (i-1)/n < upper.
    let mut i_max = (upper * n).floor() as i64 + 1;
    while ((i_max - 1) as f64) / n >= upper {
        i_max -= 1;
    }
    while (i_max as f64) / n < upper {
        i_max += 1;
    }
    (i_min, i_max)
}

/// Build the lattice with `n` subdivisions per unit length.
pub fn build_lattice(domain: &Domain, n: u32) -> Result<Lattice> {
    if n == 0 {
        return Err(GrfError::InvalidArgument("lattice resolution must be at least 1".into()));
    }
    let d = domain.dim();
    let nf = n as f64;
    let step = 1.0 / nf;

    let mut ranges = Vec::with_capacity(d);
    let mut count: usize = 1;
    for i in 0..d {
        let (lo, hi) = axis_index_range(domain.lower[i], domain.upper[i], nf);
        debug_assert!(hi >= lo, "axis {i} produced an empty index range");
        let len = (hi - lo + 1) as usize;
        count = count.checked_mul(len).ok_or_else(|| {
            GrfError::InvalidArgument("lattice point count overflows".into())
        })?;
        ranges.push((lo, hi));
    }

    let lens: Vec<usize> = ranges.iter().map(|&(lo, hi)| (hi - lo + 1) as usize).collect();
    let mut points = Vec::with_capacity(count);
    let mut measures = Vec::with_capacity(count);
    let mut idx = vec![0i64; d];
    for lin in 0..count {
        // Decompose the linear index with the last axis running fastest, so
        // points come out in lexicographic order of their grid coordinates.
        let mut rem = lin;
        for axis in (0..d).rev() {
            idx[axis] = ranges[axis].0 + (rem % lens[axis]) as i64;
            rem /= lens[axis];
        }
        let mut point = Vec::with_capacity(d);
        let mut measure = 1.0;
        for axis in 0..d {
            let g = idx[axis] as f64 / nf;
            point.push(g);
            let len = (g.min(domain.upper[axis]) - (g - step).max(domain.lower[axis])).max(0.0);
            measure *= len;
        }
        points.push(point);
        measures.push(measure);
    }

    let total_measure: f64 = measures.iter().sum();
    Ok(Lattice { d, n_per_unit: n, points, measures, total_measure })
}
