//! Grid fields, kernel density estimation and concentration statistics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ceil_count, GridSpec, PointSet};

/// Default KDE bandwidth in metres.
pub const DEFAULT_BANDWIDTH: f64 = 150.0;

/// Kernel support, in bandwidths. Beyond this the Gaussian is below 1.3e-14.
pub const TRUNCATION_BANDWIDTHS: f64 = 8.0;

/// Tolerance on the unit-mass contract of density fields.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Count,
    Density,
    Delta,
    Statistic,
}

/// One finite scalar per grid cell, in row-major cell order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    grid: GridSpec,
    values: Vec<f64>,
    kind: FieldKind,
}

impl GridField {
    pub fn new(grid: GridSpec, values: Vec<f64>, kind: FieldKind) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(invalid(format!("field has {} values for a grid of {} cells", values.len(), grid.n_cells())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("field value at cell {i} is not finite")));
        }
        if kind == FieldKind::Density {
            if values.iter().any(|&v| v < 0.0) {
                return Err(invalid("density field has negative values"));
            }
            let total: f64 = values.iter().sum();
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(invalid(format!("density field sums to {total}, expected 1")));
            }
        }
        Ok(Self { grid, values, kind })
    }

    pub fn zeros(grid: GridSpec, kind: FieldKind) -> Self {
        Self { grid, values: vec![0.0; grid.n_cells()], kind }
    }

    /// Rescales non-negative values to unit mass.
    pub fn normalized_density(grid: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(invalid("density values must be finite and non-negative"));
        }
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("density has zero total mass"));
        }
        for v in &mut values {
            *v /= total;
        }
        Self::new(grid, values, FieldKind::Density)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn ensure_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(invalid("fields are defined on different grids"));
        }
        Ok(())
    }
}

/// Counts of points per cell, with the number of points falling off-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub field: GridField,
    /// Points outside the grid extent.
    pub out_of_grid: usize,
    /// Total weight of the points outside the grid extent.
    pub out_of_grid_weight: f64,
}

/// Sums point weights per containing cell.
pub fn rasterize_counts(points: &PointSet, grid: &GridSpec) -> Rasterized {
    let mut values = vec![0.0; grid.n_cells()];
    let mut out_of_grid = 0;
    let mut out_of_grid_weight = 0.0;
    for p in &points.points {
        match grid.locate_index(&p.coord()) {
            Some(i) => values[i] += p.weight,
            None => {
                out_of_grid += 1;
                out_of_grid_weight += p.weight;
            }
        }
    }
    Rasterized { field: GridField { grid: *grid, values, kind: FieldKind::Count }, out_of_grid, out_of_grid_weight }
}

/// Gaussian kernel profile `exp(-u²/2)`.
#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    libm::exp(-0.5 * u * u)
}

/// Evaluates the unnormalized Gaussian KDE at cell centres.
///
/// Points are bucketed on the grid lattice (padded by the kernel support) so
/// each cell only visits nearby buckets. Per-cell summation order is fixed
/// (bucket rows, bucket columns, then input order), so any partition of the
/// cells across workers yields bit-identical values.
#[derive(Debug, Clone)]
pub struct KdeEvaluator<'a> {
    grid: GridSpec,
    points: &'a PointSet,
    bandwidth: f64,
    radius_sq: f64,
    pad: usize,
    b_cols: usize,
    b_rows: usize,
    bucket_start: Vec<usize>,
    bucket_points: Vec<u32>,
}

impl<'a> KdeEvaluator<'a> {
    pub fn new(points: &'a PointSet, grid: &GridSpec, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid("bandwidth must be positive"));
        }
        let in_grid_mass: f64 =
            points.points.iter().filter(|p| grid.locate(&p.coord()).is_some()).map(|p| p.weight).sum();
        if !(in_grid_mass > 0.0) {
            return Err(invalid("KDE needs at least one weighted point inside the grid"));
        }
        if points.len() > u32::MAX as usize {
            return Err(invalid("too many points"));
        }
        let radius = TRUNCATION_BANDWIDTHS * bandwidth;
        let pad = libm::ceil(radius / grid.cell_size) as usize + 1;
        let b_cols = grid.n_cols + 2 * pad;
        let b_rows = grid.n_rows + 2 * pad;

        let bucket_of = |x: f64, y: f64| -> Option<usize> {
            let bx = libm::floor((x - grid.origin.x) / grid.cell_size) + pad as f64;
            let by = libm::floor((y - grid.origin.y) / grid.cell_size) + pad as f64;
            if bx < 0.0 || by < 0.0 || bx >= b_cols as f64 || by >= b_rows as f64 {
                None
            } else {
                Some(by as usize * b_cols + bx as usize)
            }
        };

        // counting sort into CSR buckets, preserving input order
        let n_buckets = b_cols * b_rows;
        let mut counts = vec![0usize; n_buckets + 1];
        let mut slot = Vec::with_capacity(points.len());
        for p in &points.points {
            let b = if p.weight > 0.0 { bucket_of(p.x, p.y) } else { None };
            if let Some(b) = b {
                counts[b + 1] += 1;
            }
            slot.push(b);
        }
        for i in 0..n_buckets {
            counts[i + 1] += counts[i];
        }
        let bucket_start = counts.clone();
        let mut cursor = counts;
        let mut bucket_points = vec![0u32; bucket_start[n_buckets]];
        for (i, b) in slot.into_iter().enumerate() {
            if let Some(b) = b {
                bucket_points[cursor[b]] = i as u32;
                cursor[b] += 1;
            }
        }

        Ok(Self {
            grid: *grid,
            points,
            bandwidth,
            radius_sq: radius * radius,
            pad,
            b_cols,
            b_rows,
            bucket_start,
            bucket_points,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Unnormalized density `Σ w·K(d/h)` at the centre of `cell`.
    pub fn evaluate(&self, cell: usize) -> f64 {
        let center = self.grid.cell_center(cell);
        let rc = self.grid.cell(cell);
        // cell (r, c) sits at bucket (r + pad, c + pad)
        let row_lo = rc.row;
        let row_hi = (rc.row + 2 * self.pad).min(self.b_rows - 1);
        let col_lo = rc.col;
        let col_hi = (rc.col + 2 * self.pad).min(self.b_cols - 1);
        let inv_h = 1.0 / self.bandwidth;
        let mut acc = 0.0;
        for br in row_lo..=row_hi {
            let base = br * self.b_cols;
            let start = self.bucket_start[base + col_lo];
            let end = self.bucket_start[base + col_hi + 1];
            for &pi in &self.bucket_points[start..end] {
                let p = &self.points.points[pi as usize];
                let dx = p.x - center.x;
                let dy = p.y - center.y;
                let d2 = dx * dx + dy * dy;
                if d2 <= self.radius_sq {
                    acc += p.weight * libm::exp(-0.5 * d2 * inv_h * inv_h);
                }
            }
        }
        acc
    }

    pub fn evaluate_all(&self) -> Vec<f64> {
        (0..self.grid.n_cells()).map(|i| self.evaluate(i)).collect()
    }
}

/// Gaussian KDE evaluated at cell centres and rescaled to unit mass.
pub fn kde(points: &PointSet, grid: &GridSpec, bandwidth: f64) -> Result<GridField> {
    let raw = KdeEvaluator::new(points, grid, bandwidth)?.evaluate_all();
    GridField::normalized_density(*grid, raw)
}

/// Population standard deviation over mean, across all cells.
pub fn coefficient_of_variation(field: &GridField) -> Result<f64> {
    let n = field.len() as f64;
    let mean = field.mean();
    if !(mean > 0.0) {
        return Err(invalid("coefficient of variation needs a positive mean"));
    }
    let var = field.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(libm::sqrt(var) / mean)
}

/// Share of counts held by the densest cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopShare {
    pub percentile: f64,
    /// Number of top-ranked cells included.
    pub n_cells: usize,
    pub share: f64,
    /// `curve[k]` is the count share of the `k + 1` densest cells.
    pub curve: Vec<f64>,
}

/// Cell order by density, descending; ties broken by ascending cell index.
pub fn rank_cells(density: &GridField) -> Vec<usize> {
    let v = density.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order
}

/// Number of cells making up the top `fraction` of a grid of `n` cells.
pub fn top_cell_count(fraction: f64, n: usize) -> usize {
    ceil_count(fraction * n as f64).min(n)
}

/// Fraction of the total count found in the top `percentile` of cells ranked by density.
pub fn top_share(density: &GridField, counts: &GridField, percentile: f64) -> Result<TopShare> {
    density.ensure_same_grid(counts)?;
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(invalid("percentile must lie in (0, 1]"));
    }
    let total = counts.sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("count field has zero total".into()));
    }
    let order = rank_cells(density);
    let mut acc = 0.0;
    let curve: Vec<f64> = order
        .iter()
        .map(|&i| {
            acc += counts.values()[i];
            acc / total
        })
        .collect();
    let n_cells = top_cell_count(percentile, order.len());
    let share = if n_cells == 0 { 0.0 } else { curve[n_cells - 1] };
    Ok(TopShare { percentile, n_cells, share, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, Coord, Point};

    fn grid(cols: usize, rows: usize) -> GridSpec {
        GridSpec::new(Coord::new(0.0, 0.0), 200.0, cols, rows).unwrap()
    }

    #[test]
    fn rasterize_sums_weights() {
        let g = grid(5, 3);
        let pts = PointSet::new(vec![Point::new(10.0, 10.0), Point::new(50.0, 50.0), Point::new(150.0, 20.0)]).unwrap();
        let r = rasterize_counts(&pts, &g);
        assert_eq!(r.field.values()[0], 3.0);
        assert_eq!(r.field.sum(), 3.0);

        let empty = rasterize_counts(&PointSet::default(), &g);
        assert!(empty.field.values().iter().all(|&v| v == 0.0));

        let pts = PointSet::new(vec![Point::weighted(450.0, 250.0, 2.0), Point::weighted(420.0, 210.0, 0.5)]).unwrap();
        let r = rasterize_counts(&pts, &g);
        assert_eq!(r.field.values()[g.index(crate::geometry::Cell { row: 1, col: 2 })], 2.5);

        let pts = PointSet::new(vec![Point::new(-1.0, 0.0), Point::weighted(5000.0, 0.0, 4.0)]).unwrap();
        let r = rasterize_counts(&pts, &g);
        assert_eq!((r.out_of_grid, r.out_of_grid_weight), (2, 5.0));
    }

    #[test]
    fn kde_single_point_peaks_and_is_symmetric() {
        let g = grid(9, 9);
        let c = g.cell_center(g.index(crate::geometry::Cell { row: 4, col: 4 }));
        let pts = PointSet::new(vec![Point::new(c.x, c.y)]).unwrap();
        let f = kde(&pts, &g, 150.0).unwrap();
        let v = f.values();
        let argmax = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert_eq!(argmax, 40);
        assert!((f.sum() - 1.0).abs() < 1e-12);
        // rotation by 90 degrees about the centre: (r, c) -> (c, 8 - r)
        for r in 0..9 {
            for col in 0..9 {
                let a = v[r * 9 + col];
                let b = v[col * 9 + (8 - r)];
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kde_rejects_bad_input() {
        let g = grid(3, 3);
        assert!(kde(&PointSet::default(), &g, 150.0).is_err());
        let off = PointSet::new(vec![Point::new(-500.0, -500.0)]).unwrap();
        assert!(kde(&off, &g, 150.0).is_err());
        let on = PointSet::new(vec![Point::new(10.0, 10.0)]).unwrap();
        assert!(kde(&on, &g, 0.0).is_err());
    }

    #[test]
    fn off_grid_points_still_contribute() {
        let g = grid(3, 3);
        let pts = PointSet::new(vec![Point::new(100.0, 100.0), Point::new(700.0, 500.0)]).unwrap();
        let with = kde(&pts, &g, 150.0).unwrap();
        let without = kde(&PointSet::new(vec![Point::new(100.0, 100.0)]).unwrap(), &g, 150.0).unwrap();
        assert!(with.values()[8] > without.values()[8]);
    }

    #[test]
    fn cv_examples() {
        let g = grid(2, 1);
        let f = GridField::new(g, vec![1.0, 3.0], FieldKind::Count).unwrap();
        assert!((coefficient_of_variation(&f).unwrap() - 0.5).abs() < 1e-15);
        let c = GridField::new(g, vec![4.0, 4.0], FieldKind::Count).unwrap();
        assert_eq!(coefficient_of_variation(&c).unwrap(), 0.0);
        let z = GridField::zeros(g, FieldKind::Count);
        assert!(coefficient_of_variation(&z).is_err());
    }

    #[test]
    fn top_share_examples() {
        let g = grid(10, 10);
        let uniform = GridField::normalized_density(g, vec![1.0; 100]).unwrap();
        let counts = GridField::new(g, vec![1.0; 100], FieldKind::Count).unwrap();
        let t = top_share(&uniform, &counts, 0.055).unwrap();
        assert_eq!(t.n_cells, 6);
        assert!((t.share - 0.06).abs() < 1e-12);

        let mut d = vec![0.0; 100];
        d[37] = 1.0;
        let dens = GridField::new(g, d.clone(), FieldKind::Density).unwrap();
        let cnt = GridField::new(g, d.iter().map(|v| v * 50.0).collect(), FieldKind::Count).unwrap();
        assert_eq!(top_share(&dens, &cnt, 0.01).unwrap().share, 1.0);

        let other = GridField::zeros(grid(5, 5), FieldKind::Count);
        assert!(top_share(&dens, &other, 0.1).is_err());
        assert!(top_share(&dens, &cnt, 0.0).is_err());
    }

    #[test]
    fn top_fraction_counts_ignore_float_noise() {
        assert_eq!(top_cell_count(1.0 - 0.8, 2400), 480);
        assert_eq!(top_cell_count(0.2, 2400), 480);
        assert_eq!(top_cell_count(0.0, 10), 0);
        assert_eq!(top_cell_count(0.01, 10), 1);
    }

    #[test]
    fn density_contract_enforced() {
        let g = grid(2, 1);
        assert!(GridField::new(g, vec![0.5, 0.6], FieldKind::Density).is_err());
        assert!(GridField::new(g, vec![f64::NAN, 0.6], FieldKind::Count).is_err());
        assert!(GridField::new(g, vec![1.0], FieldKind::Count).is_err());
        let _ = BBox::new(0.0, 0.0, 1.0, 1.0);
    }
}
