//! Multi-threaded drivers for the per-cell and per-region loops.
//!
//! Every unit of work draws from its own seeded stream and sums in a fixed
//! order, so the output does not depend on the worker count.

use firmscape_core::density::{GridField, KdeEvaluator};
use firmscape_core::geometry::{GridSpec, PointSet};
use firmscape_core::lisa::{LisaResult, LocalMoran, SpatialWeights};
use firmscape_core::survey::{summarize_regions, CenterMode, OmissionModel, Robustness};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub struct Workers {
    pool: rayon::ThreadPool,
}

impl Workers {
    /// A pool of `n` threads; `0` picks the machine's available parallelism.
    pub fn new(n: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .thread_name(|i| format!("firmscape-{i}"))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn count(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn kde(&self, points: &PointSet, grid: &GridSpec, bandwidth: f64) -> Result<GridField> {
        let ev = KdeEvaluator::new(points, grid, bandwidth)?;
        let raw: Vec<f64> = self.pool.install(|| (0..grid.n_cells()).into_par_iter().map(|i| ev.evaluate(i)).collect());
        Ok(GridField::normalized_density(*grid, raw)?)
    }

    pub fn local_moran(
        &self,
        field: &GridField,
        weights: &SpatialWeights,
        permutations: usize,
        seed: u64,
    ) -> Result<LisaResult> {
        let lm = LocalMoran::new(field, weights, permutations, seed)?;
        let p: Vec<f64> = self.pool.install(|| (0..lm.n()).into_par_iter().map(|i| lm.p_value(i)).collect());
        Ok(lm.finish(p)?)
    }

    pub fn omission_robustness(
        &self,
        points: &PointSet,
        keep_prob: f64,
        n_regions: usize,
        radius_range: (f64, f64),
        mode: CenterMode,
        seed: u64,
    ) -> Result<Robustness> {
        if n_regions == 0 {
            return Err(Error::invalid("at least one region is required"));
        }
        let model = OmissionModel::new(points, keep_prob, radius_range, mode, seed)?;
        let samples = self
            .pool
            .install(|| (0..n_regions).into_par_iter().map(|r| model.region(r)).collect::<Result<Vec<_>, _>>())?;
        Ok(summarize_regions(samples)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use firmscape_core::density::kde;
    use firmscape_core::geometry::{Coord, Point};
    use firmscape_core::lisa::{build_weights, local_moran, Contiguity};
    use firmscape_core::survey::omission_robustness;

    fn points() -> PointSet {
        PointSet::new((0..400).map(|i| Point::new(((i * 7919) % 3000) as f64, ((i * 104_729) % 2400) as f64)).collect())
            .unwrap()
    }

    #[test]
    fn matches_serial_bit_for_bit() {
        let grid = GridSpec::new(Coord::new(0.0, 0.0), 200.0, 15, 12).unwrap();
        let serial = kde(&points(), &grid, 150.0).unwrap();
        let w = build_weights(&grid, Contiguity::Queen, true);
        let lisa = local_moran(&serial, &w, 199, 11).unwrap();
        let rob = omission_robustness(&points(), 0.7, 50, (200.0, 600.0), CenterMode::BBox, 4).unwrap();
        for n in [1, 3, 8] {
            let pool = Workers::new(n).unwrap();
            assert_eq!(pool.count(), n);
            assert_eq!(pool.kde(&points(), &grid, 150.0).unwrap(), serial);
            assert_eq!(pool.local_moran(&serial, &w, 199, 11).unwrap(), lisa);
            assert_eq!(pool.omission_robustness(&points(), 0.7, 50, (200.0, 600.0), CenterMode::BBox, 4).unwrap(), rob);
        }
    }
}
