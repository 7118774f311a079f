//! Local Moran's I with conditional-permutation inference, significant
//! high-high cluster extraction, and the dendrogram of nested clusters
//! across density thresholds.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::density::{rank_cells, top_cell_count, GridField};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Coord, GridSpec};
use crate::rng::{stream, Domain};

pub const DEFAULT_PERMUTATIONS: usize = 999;
pub const MIN_PERMUTATIONS: usize = 99;
pub const DEFAULT_P_THRESHOLD: f64 = 0.10;

/// Relative tolerance under which a permuted statistic ties the observed one.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contiguity {
    /// 8-neighbourhood.
    Queen,
    /// 4-neighbourhood.
    Rook,
}

impl Contiguity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const QUEEN: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        const ROOK: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        match self {
            Contiguity::Queen => &QUEEN,
            Contiguity::Rook => &ROOK,
        }
    }
}

/// Neighbours of `cell` under `scheme`, clipped at the grid edge, in
/// ascending index order.
pub fn grid_neighbors(grid: &GridSpec, scheme: Contiguity, cell: usize) -> impl Iterator<Item = usize> + '_ {
    let rc = grid.cell(cell);
    scheme.offsets().iter().filter_map(move |&(dr, dc)| {
        let r = rc.row as isize + dr;
        let c = rc.col as isize + dc;
        if r < 0 || c < 0 || r >= grid.n_rows as isize || c >= grid.n_cols as isize {
            None
        } else {
            Some(r as usize * grid.n_cols + c as usize)
        }
    })
}

/// Sparse lattice weights in compressed-row form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeights {
    grid: GridSpec,
    scheme: Contiguity,
    row_standardized: bool,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl SpatialWeights {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn scheme(&self) -> Contiguity {
        self.scheme
    }

    pub fn row_standardized(&self) -> bool {
        self.row_standardized
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, cell: usize) -> &[usize] {
        &self.neighbors[self.offsets[cell]..self.offsets[cell + 1]]
    }

    pub fn weights(&self, cell: usize) -> &[f64] {
        &self.weights[self.offsets[cell]..self.offsets[cell + 1]]
    }

    /// Spatial lag `Σ_j w_ij x_j`.
    pub fn lag(&self, cell: usize, x: &[f64]) -> f64 {
        self.neighbors(cell).iter().zip(self.weights(cell)).map(|(&j, &w)| w * x[j]).sum()
    }
}

/// Contiguity weights on a grid, optionally row-standardized.
pub fn build_weights(grid: &GridSpec, scheme: Contiguity, row_standardize: bool) -> SpatialWeights {
    let n = grid.n_cells();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(n * scheme.offsets().len());
    let mut weights = Vec::with_capacity(n * scheme.offsets().len());
    offsets.push(0);
    for i in 0..n {
        let start = neighbors.len();
        neighbors.extend(grid_neighbors(grid, scheme, i));
        let k = neighbors.len() - start;
        let w = if row_standardize { 1.0 / k as f64 } else { 1.0 };
        weights.extend(core::iter::repeat(w).take(k));
        offsets.push(neighbors.len());
    }
    SpatialWeights { grid: *grid, scheme, row_standardized: row_standardize, offsets, neighbors, weights }
}

/// Moran scatterplot quadrant: sign of the cell's deviation, then of its lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    HH,
    LL,
    HL,
    LH,
}

impl Quadrant {
    fn of(z: f64, lag: f64) -> Self {
        match (z > 0.0, lag > 0.0) {
            (true, true) => Quadrant::HH,
            (false, false) => Quadrant::LL,
            (true, false) => Quadrant::HL,
            (false, true) => Quadrant::LH,
        }
    }

    /// Positive association (HH, LL) is tested in the upper tail, negative in the lower.
    pub fn upper_tail(self) -> bool {
        matches!(self, Quadrant::HH | Quadrant::LL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LisaResult {
    /// Local Moran statistic per cell.
    pub statistics: Vec<f64>,
    /// Pseudo p-value per cell, `(1 + extreme) / (1 + permutations)`.
    pub p_values: Vec<f64>,
    pub quadrants: Vec<Quadrant>,
    pub permutations: usize,
    pub seed: u64,
}

impl LisaResult {
    pub fn len(&self) -> usize {
        self.statistics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statistics.is_empty()
    }

    pub fn significant_hh(&self, cell: usize, p_threshold: f64) -> bool {
        self.quadrants[cell] == Quadrant::HH && self.p_values[cell] <= p_threshold
    }
}

/// Observed local Moran statistics plus the state needed to run the
/// per-cell permutation tests independently (and in any order).
#[derive(Debug, Clone)]
pub struct LocalMoran<'w> {
    weights: &'w SpatialWeights,
    z: Vec<f64>,
    z_max: f64,
    m2: f64,
    lags: Vec<f64>,
    statistics: Vec<f64>,
    quadrants: Vec<Quadrant>,
    permutations: usize,
    seed: u64,
}

impl<'w> LocalMoran<'w> {
    pub fn new(field: &GridField, weights: &'w SpatialWeights, permutations: usize, seed: u64) -> Result<Self> {
        if field.grid() != weights.grid() {
            return Err(invalid("field and weights are defined on different grids"));
        }
        if permutations < MIN_PERMUTATIONS {
            return Err(invalid(format!("at least {MIN_PERMUTATIONS} permutations are required")));
        }
        let x = field.values();
        let n = x.len();
        if n < 2 {
            return Err(invalid("local Moran's I needs at least two cells"));
        }
        if x.iter().all(|&v| v == x[0]) {
            return Err(Error::Degenerate("field is constant".into()));
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let z: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let m2 = z.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if !(m2 > 0.0) {
            return Err(Error::Degenerate("field has zero variance".into()));
        }
        let lags: Vec<f64> = (0..n).map(|i| weights.lag(i, &z)).collect();
        let statistics = (0..n).map(|i| (z[i] / m2) * lags[i]).collect();
        let quadrants = (0..n).map(|i| Quadrant::of(z[i], lags[i])).collect();
        let z_max = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(Self { weights, z, z_max, m2, lags, statistics, quadrants, permutations, seed })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn statistics(&self) -> &[f64] {
        &self.statistics
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    /// Conditional-permutation pseudo p-value for one cell.
    ///
    /// Cell `i` keeps its value; its neighbours receive values drawn without
    /// replacement from the other `n - 1` cells.
    pub fn p_value(&self, i: usize) -> f64 {
        let nbrs = self.weights.neighbors(i);
        let w = self.weights.weights(i);
        let k = nbrs.len();
        let n = self.n();
        if k == 0 {
            return 1.0;
        }
        let scale = self.z[i] / self.m2;
        let observed = self.statistics[i];
        let upper = self.quadrants[i].upper_tail();
        // permuted sums that differ from the observed one only by summation order count as ties
        let tol = TIE_TOLERANCE * scale.abs() * w.iter().map(|v| v.abs()).sum::<f64>() * self.z_max;
        let mut rng = stream(self.seed, Domain::Permutation, i as u64);
        let mut chosen = vec![0usize; k];
        let mut pool: Vec<usize> = Vec::new();
        let dense = 2 * k > n - 1;
        if dense {
            pool = (0..n).filter(|&j| j != i).collect();
        }
        let mut extreme = 0usize;
        for _ in 0..self.permutations {
            if dense {
                // partial Fisher-Yates over the other cells
                for m in 0..k {
                    let r = rng.gen_range(m..pool.len());
                    pool.swap(m, r);
                    chosen[m] = pool[m];
                }
            } else {
                let mut m = 0;
                while m < k {
                    let mut j = rng.gen_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    if !chosen[..m].contains(&j) {
                        chosen[m] = j;
                        m += 1;
                    }
                }
            }
            let lag: f64 = chosen.iter().zip(w).map(|(&j, &wj)| wj * self.z[j]).sum();
            let stat = scale * lag;
            if (upper && stat >= observed - tol) || (!upper && stat <= observed + tol) {
                extreme += 1;
            }
        }
        (1 + extreme) as f64 / (1 + self.permutations) as f64
    }

    /// Assembles the result from per-cell p-values (in cell order).
    pub fn finish(self, p_values: Vec<f64>) -> Result<LisaResult> {
        if p_values.len() != self.n() {
            return Err(Error::Internal("p-value count does not match cell count".into()));
        }
        Ok(LisaResult {
            statistics: self.statistics,
            p_values,
            quadrants: self.quadrants,
            permutations: self.permutations,
            seed: self.seed,
        })
    }
}

/// Local Moran's I with conditional-permutation pseudo p-values.
///
/// With `z_i = x_i - mean(x)` and `m2 = Σ z² / n`, the statistic is
/// `I_i = (z_i / m2) · Σ_j w_ij z_j`.
pub fn local_moran(field: &GridField, weights: &SpatialWeights, permutations: usize, seed: u64) -> Result<LisaResult> {
    let lm = LocalMoran::new(field, weights, permutations, seed)?;
    let p = (0..lm.n()).map(|i| lm.p_value(i)).collect();
    lm.finish(p)
}

/// A connected group of significant high-high cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub label: String,
    /// Member cell indices, ascending.
    pub cells: Vec<usize>,
    /// Density-weighted centroid of member cell centres.
    pub centroid: Coord,
    /// Total density mass of the member cells.
    pub mass: f64,
}

impl Cluster {
    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    /// Fraction of cells, ranked by density, that were eligible.
    pub top_fraction: f64,
    pub p_threshold: f64,
    /// Clusters by descending mass; labels `C1`, `C2`, ...
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn centroids(&self) -> Vec<Coord> {
        self.clusters.iter().map(|c| c.centroid).collect()
    }

    /// Union of member cells, ascending.
    pub fn cells(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.clusters.iter().flat_map(|c| c.cells.iter().copied()).collect();
        all.sort_unstable();
        all
    }

    pub fn cluster_of(&self, cell: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(cell))
    }
}

/// Cells that are in the top `top_fraction` by density, significant at
/// `p_threshold`, and high-high.
pub fn eligible_cells(field: &GridField, lisa: &LisaResult, top_fraction: f64, p_threshold: f64) -> Result<Vec<bool>> {
    if lisa.len() != field.len() {
        return Err(invalid("LISA result and field have different cell counts"));
    }
    if !(0.0..=1.0).contains(&top_fraction) {
        return Err(invalid("density fraction must lie in [0, 1]"));
    }
    if !(p_threshold > 0.0 && p_threshold < 1.0) {
        return Err(invalid("p threshold must lie in (0, 1)"));
    }
    let order = rank_cells(field);
    let mut eligible = vec![false; field.len()];
    for &i in &order[..top_cell_count(top_fraction, order.len())] {
        eligible[i] = lisa.significant_hh(i, p_threshold);
    }
    Ok(eligible)
}

/// Queen-connected components of eligible cells.
pub fn extract_clusters(
    field: &GridField,
    lisa: &LisaResult,
    top_fraction: f64,
    p_threshold: f64,
) -> Result<ClusterSet> {
    let eligible = eligible_cells(field, lisa, top_fraction, p_threshold)?;
    let grid = field.grid();
    let values = field.values();
    let mut seen = vec![false; eligible.len()];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..eligible.len() {
        if !eligible[start] || seen[start] {
            continue;
        }
        let mut cells = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            for nb in grid_neighbors(grid, Contiguity::Queen, c) {
                if eligible[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        cells.sort_unstable();
        clusters.push(summarize(grid, values, cells));
    }
    clusters.sort_by(|a, b| b.mass.total_cmp(&a.mass).then(a.cells[0].cmp(&b.cells[0])));
    for (k, c) in clusters.iter_mut().enumerate() {
        c.label = format!("C{}", k + 1);
    }
    Ok(ClusterSet { top_fraction, p_threshold, clusters })
}

fn summarize(grid: &GridSpec, values: &[f64], cells: Vec<usize>) -> Cluster {
    let mass: f64 = cells.iter().map(|&c| values[c]).sum();
    let (mut sx, mut sy) = (0.0, 0.0);
    for &c in &cells {
        let p = grid.cell_center(c);
        sx += values[c] * p.x;
        sy += values[c] * p.y;
    }
    let centroid = if mass > 0.0 {
        Coord::new(sx / mass, sy / mass)
    } else {
        // zero-mass cluster: fall back to the unweighted centroid
        let n = cells.len() as f64;
        let (x, y) = cells.iter().map(|&c| grid.cell_center(c)).fold((0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y));
        Coord::new(x / n, y / n)
    };
    Cluster { label: String::new(), cells, centroid, mass }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramNode {
    /// Position of this node's threshold in [`Dendrogram::thresholds`].
    pub level: usize,
    pub threshold: f64,
    pub cluster: Cluster,
    /// Node index of the containing cluster at the next looser threshold.
    pub parent: Option<usize>,
}

/// Life span of a named branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: String,
    /// Loosest threshold at which the branch exists (where it splits off or the root level).
    pub appears: f64,
    /// Strictest threshold at which the branch still exists.
    pub disappears: f64,
}

/// Containment tree of clusters as the density threshold tightens.
///
/// Thresholds are density percentiles (e.g. 0.80 keeps the top 20% of
/// cells), ascending, so later levels are stricter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub thresholds: Vec<f64>,
    pub p_threshold: f64,
    pub nodes: Vec<DendrogramNode>,
    pub branches: Vec<Branch>,
}

impl Dendrogram {
    pub fn level(&self, level: usize) -> impl Iterator<Item = &DendrogramNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.parent == Some(node)).map(|(i, _)| i)
    }

    pub fn branch(&self, label: &str) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    /// Strictest threshold reached by any descendant of the root labelled `root`.
    pub fn lineage_end(&self, root: &str) -> Option<f64> {
        let prefix = format!("{root}.");
        self.branches
            .iter()
            .filter(|b| b.label == root || b.label.starts_with(&prefix))
            .map(|b| b.disappears)
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
    }

    /// Node index at `level` whose cluster contains `cell`.
    pub fn node_containing(&self, level: usize, cell: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.level == level && n.cluster.contains(cell))
    }
}

/// Builds the cluster dendrogram over ascending density percentiles.
pub fn build_dendrogram(
    field: &GridField,
    lisa: &LisaResult,
    thresholds: &[f64],
    p_threshold: f64,
) -> Result<Dendrogram> {
    if thresholds.is_empty() {
        return Err(invalid("dendrogram needs at least one threshold"));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("thresholds must be strictly ascending"));
    }
    if thresholds.iter().any(|t| !(0.0..1.0).contains(t)) {
        return Err(invalid("threshold percentiles must lie in [0, 1)"));
    }
    let mut nodes: Vec<DendrogramNode> = Vec::new();
    let mut branches: Vec<Branch> = Vec::new();
    let mut prev_level: Vec<usize> = Vec::new();
    for (level, &t) in thresholds.iter().enumerate() {
        let set = extract_clusters(field, lisa, 1.0 - t, p_threshold)?;
        let mut current = Vec::with_capacity(set.len());
        // parent lookup, then labels per parent by descending mass (set order)
        let mut parents = Vec::with_capacity(set.len());
        for c in &set.clusters {
            let parent = if level == 0 {
                None
            } else {
                let p = prev_level
                    .iter()
                    .copied()
                    .find(|&n| nodes[n].cluster.contains(c.cells[0]))
                    .ok_or_else(|| Error::Internal(format!("cluster at threshold {t} has no parent")))?;
                if !c.cells.iter().all(|&cell| nodes[p].cluster.contains(cell)) {
                    return Err(Error::Internal(format!("cluster at threshold {t} straddles two parents")));
                }
                Some(p)
            };
            parents.push(parent);
        }
        for (k, mut cluster) in set.clusters.into_iter().enumerate() {
            let parent = parents[k];
            cluster.label = match parent {
                None => cluster.label,
                Some(p) => {
                    let siblings: Vec<usize> = (0..parents.len()).filter(|&s| parents[s] == Some(p)).collect();
                    if siblings.len() == 1 {
                        nodes[p].cluster.label.clone()
                    } else {
                        let rank = siblings.iter().position(|&s| s == k).expect("self is a sibling");
                        format!("{}.{}", nodes[p].cluster.label, rank + 1)
                    }
                }
            };
            match branches.iter_mut().find(|b| b.label == cluster.label) {
                Some(b) => b.disappears = t,
                None => branches.push(Branch { label: cluster.label.clone(), appears: t, disappears: t }),
            }
            current.push(nodes.len());
            nodes.push(DendrogramNode { level, threshold: t, cluster, parent });
        }
        prev_level = current;
    }
    Ok(Dendrogram { thresholds: thresholds.to_vec(), p_threshold, nodes, branches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::FieldKind;

    fn grid(cols: usize, rows: usize) -> GridSpec {
        GridSpec::new(Coord::new(0.0, 0.0), 200.0, cols, rows).unwrap()
    }

    #[test]
    fn queen_and_rook_neighbour_counts() {
        let g = grid(3, 3);
        let q = build_weights(&g, Contiguity::Queen, false);
        assert_eq!(q.neighbors(0).len(), 3);
        assert_eq!(q.neighbors(1).len(), 5);
        assert_eq!(q.neighbors(4).len(), 8);
        let r = build_weights(&g, Contiguity::Rook, false);
        assert_eq!(r.neighbors(4), &[1, 3, 5, 7]);
        let qs = build_weights(&g, Contiguity::Queen, true);
        assert!(qs.weights(0).iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        for i in 0..9 {
            assert!((qs.weights(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(!qs.neighbors(i).contains(&i));
            for &j in q.neighbors(i) {
                assert!(q.neighbors(j).contains(&i));
            }
        }
    }

    fn field(g: GridSpec, v: Vec<f64>) -> GridField {
        GridField::new(g, v, FieldKind::Statistic).unwrap()
    }

    #[test]
    fn constant_field_is_degenerate() {
        let g = grid(3, 3);
        let w = build_weights(&g, Contiguity::Queen, true);
        let f = field(g, vec![0.1; 9]);
        assert!(matches!(local_moran(&f, &w, 99, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_few_permutations_rejected() {
        let g = grid(3, 1);
        let w = build_weights(&g, Contiguity::Queen, true);
        let f = field(g, vec![1.0, 2.0, 4.0]);
        assert!(local_moran(&f, &w, 98, 1).is_err());
    }

    #[test]
    fn checkerboard_is_negative_everywhere() {
        let g = grid(4, 4);
        let w = build_weights(&g, Contiguity::Rook, true);
        let v: Vec<f64> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect();
        let r = local_moran(&field(g, v.clone()), &w, 99, 3).unwrap();
        // z = ±0.5, m2 = 0.25; every rook neighbour has the opposite sign
        for (i, x) in v.iter().enumerate() {
            assert!(r.statistics[i] < 0.0);
            let z = x - 0.5;
            assert!((r.statistics[i] - (z / 0.25) * (-z)).abs() < 1e-15);
            assert!(matches!(r.quadrants[i], Quadrant::HL | Quadrant::LH));
        }
    }

    #[test]
    fn two_cells_have_a_single_arrangement() {
        let g = grid(2, 1);
        let w = build_weights(&g, Contiguity::Queen, true);
        let r = local_moran(&field(g, vec![0.0, 1.0]), &w, 199, 11).unwrap();
        assert_eq!(r.p_values, vec![1.0, 1.0]);
    }

    #[test]
    fn p_values_are_in_unit_interval_and_deterministic() {
        let g = grid(5, 4);
        let w = build_weights(&g, Contiguity::Queen, true);
        let v: Vec<f64> = (0..20).map(|i| ((i * 7919) % 13) as f64).collect();
        let f = field(g, v);
        let a = local_moran(&f, &w, 199, 42).unwrap();
        let b = local_moran(&f, &w, 199, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.p_values.iter().all(|&p| p > 0.0 && p <= 1.0));
        let c = local_moran(&f, &w, 199, 43).unwrap();
        assert_ne!(a.p_values, c.p_values);
    }

    fn blob_field(g: GridSpec, peaks: &[(f64, f64, f64)]) -> GridField {
        let v = (0..g.n_cells())
            .map(|i| {
                let c = g.cell_center(i);
                peaks
                    .iter()
                    .map(|&(x, y, a)| {
                        a * libm::exp(-((c.x - x).powi(2) + (c.y - y).powi(2)) / (2.0 * 500.0f64.powi(2)))
                    })
                    .sum::<f64>()
                    + 1e-4
            })
            .collect();
        GridField::normalized_density(g, v).unwrap()
    }

    #[test]
    fn two_blobs_give_two_clusters() {
        let g = grid(30, 15);
        let f = blob_field(g, &[(1500.0, 1500.0, 1.0), (4500.0, 1500.0, 1.0)]);
        let w = build_weights(&g, Contiguity::Queen, true);
        let lisa = local_moran(&f, &w, 199, 5).unwrap();
        let set = extract_clusters(&f, &lisa, 0.2, 0.1).unwrap();
        assert_eq!(set.len(), 2);
        let a = g.locate_index(&Coord::new(1500.0, 1500.0)).unwrap();
        let b = g.locate_index(&Coord::new(4500.0, 1500.0)).unwrap();
        assert!(set.cluster_of(a).is_some() && set.cluster_of(b).is_some());
        assert_ne!(set.cluster_of(a), set.cluster_of(b));
        assert!(extract_clusters(&f, &lisa, 0.0, 0.1).unwrap().is_empty());
        for c in &set.clusters {
            assert!(c.mass > 0.0);
            assert_eq!(c.cells.iter().map(|&i| f.values()[i]).sum::<f64>(), c.mass);
        }
    }

    #[test]
    fn weak_blob_branch_ends_first() {
        let g = grid(30, 15);
        let f = blob_field(g, &[(1500.0, 1500.0, 1.0), (4500.0, 1500.0, 0.4)]);
        let w = build_weights(&g, Contiguity::Queen, true);
        let lisa = local_moran(&f, &w, 199, 5).unwrap();
        let d = build_dendrogram(&f, &lisa, &[0.8, 0.85, 0.9, 0.95, 0.99], 0.1).unwrap();
        let strong = d.node_containing(0, g.locate_index(&Coord::new(1500.0, 1500.0)).unwrap()).unwrap();
        let weak = d.node_containing(0, g.locate_index(&Coord::new(4500.0, 1500.0)).unwrap()).unwrap();
        let s = d.lineage_end(&d.nodes[strong].cluster.label).unwrap();
        let wk = d.lineage_end(&d.nodes[weak].cluster.label).unwrap();
        assert!(wk < s, "weak ends at {wk}, strong at {s}");
    }

    #[test]
    fn single_threshold_is_flat() {
        let g = grid(30, 15);
        let f = blob_field(g, &[(1500.0, 1500.0, 1.0), (4500.0, 1500.0, 1.0)]);
        let w = build_weights(&g, Contiguity::Queen, true);
        let lisa = local_moran(&f, &w, 99, 5).unwrap();
        let d = build_dendrogram(&f, &lisa, &[0.8], 0.1).unwrap();
        let flat = extract_clusters(&f, &lisa, 1.0 - 0.8, 0.1).unwrap();
        assert_eq!(d.nodes.len(), flat.len());
        assert!(d.nodes.iter().all(|n| n.parent.is_none()));
        assert!(build_dendrogram(&f, &lisa, &[0.9, 0.8], 0.1).is_err());
        assert!(build_dendrogram(&f, &lisa, &[], 0.1).is_err());
    }
}
