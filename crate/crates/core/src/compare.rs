//! Density differences between firm populations, radial profiles around
//! cluster centroids, and per-zone means.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::density::{FieldKind, GridField};
use crate::error::{invalid, Result};
use crate::geometry::{ceil_count, nearest_distance, Coord, ZoneMap};

pub const DEFAULT_BIN_WIDTH: f64 = 250.0;
pub const DEFAULT_MAX_DIST: f64 = 10_000.0;

/// Cellwise `a - b` of two density fields on the same grid.
pub fn delta_density(a: &GridField, b: &GridField) -> Result<GridField> {
    a.ensure_same_grid(b)?;
    if a.kind() != FieldKind::Density || b.kind() != FieldKind::Density {
        return Err(invalid("density difference needs two density fields"));
    }
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    GridField::new(*a.grid(), values, FieldKind::Delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean over the bin, `None` when the bin is empty.
    pub mean: Option<f64>,
    /// Number (or total weight) of items in the bin.
    pub count: f64,
}

/// Binned mean of a quantity against distance to the nearest of a set of centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub bins: Vec<RadialBin>,
}

impl RadialProfile {
    /// Accumulates `(distance, value, weight)` samples into contiguous bins
    /// of `bin_width` covering `[0, max_dist)`. Samples beyond are dropped.
    pub fn accumulate(
        bin_width: f64,
        max_dist: f64,
        samples: impl IntoIterator<Item = (f64, f64, f64)>,
    ) -> Result<Self> {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(invalid("bin width must be positive"));
        }
        if !(max_dist.is_finite() && max_dist > 0.0) {
            return Err(invalid("maximum distance must be positive"));
        }
        let n_bins = ceil_count(max_dist / bin_width).max(1);
        let mut sums = vec![0.0; n_bins];
        let mut counts = vec![0.0; n_bins];
        for (d, v, w) in samples {
            if !(d >= 0.0 && d < max_dist) {
                continue;
            }
            let b = ((d / bin_width) as usize).min(n_bins - 1);
            sums[b] += w * v;
            counts[b] += w;
        }
        let bins = (0..n_bins)
            .map(|b| RadialBin {
                lo: b as f64 * bin_width,
                hi: ((b + 1) as f64 * bin_width).min(max_dist),
                mean: (counts[b] > 0.0).then(|| sums[b] / counts[b]),
                count: counts[b],
            })
            .collect();
        Ok(Self { bins })
    }

    /// Index of the non-empty bin with the largest mean.
    pub fn argmax(&self) -> Option<usize> {
        self.bins
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.mean.map(|m| (i, m)))
            .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
                Some((_, bm)) if bm >= m => best,
                _ => Some((i, m)),
            })
            .map(|(i, _)| i)
    }
}

/// Mean field value against distance from each cell centre to the nearest centre.
pub fn radial_profile(field: &GridField, centers: &[Coord], bin_width: f64, max_dist: f64) -> Result<RadialProfile> {
    if centers.is_empty() {
        return Err(invalid("radial profile needs at least one centre"));
    }
    let grid = field.grid();
    RadialProfile::accumulate(
        bin_width,
        max_dist,
        field.values().iter().enumerate().map(|(i, &v)| (nearest_distance(&grid.cell_center(i), centers), v, 1.0)),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneMean {
    pub zone_id: String,
    /// `None` when no cell centre falls inside the zone.
    pub mean: Option<f64>,
    pub n_cells: usize,
}

/// Mean of the field over cells whose centres fall inside each zone.
pub fn zone_mean(field: &GridField, zones: &ZoneMap) -> Vec<ZoneMean> {
    let grid = field.grid();
    let centers: Vec<Coord> = (0..field.len()).map(|i| grid.cell_center(i)).collect();
    zones
        .zones()
        .iter()
        .map(|z| {
            let bb = z.polygon.bbox();
            let (mut sum, mut n) = (0.0, 0usize);
            for (c, v) in centers.iter().zip(field.values()) {
                if bb.contains(c) && z.polygon.contains(c) {
                    sum += v;
                    n += 1;
                }
            }
            ZoneMean { zone_id: z.id.clone(), mean: (n > 0).then(|| sum / n as f64), n_cells: n }
        })
        .collect()
}
