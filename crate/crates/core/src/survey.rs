//! Street survey tooling: sample-point planning along a street network,
//! detector count metrics, and the regional omission-robustness ratio.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Coord, Point, PointSet};
use crate::rng::{stream, Domain};
use crate::stats::mean_std;

pub const DEFAULT_SPACING: f64 = 20.0;

/// Tolerance between a declared edge length and its polyline length, metres.
pub const LENGTH_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Index of the start node in [`StreetNetwork::nodes`].
    pub from: usize,
    pub to: usize,
    /// Full geometry from the start node to the end node.
    pub polyline: Vec<Coord>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// An edge as supplied by a caller: node ids, optional intermediate
/// vertices, optional declared length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeSpec {
    pub from: u64,
    pub to: u64,
    /// Vertices strictly between the end nodes, or the full polyline including them.
    pub polyline: Vec<Coord>,
    pub length: Option<f64>,
}

impl StreetNetwork {
    pub fn new(nodes: Vec<Node>, edges: Vec<EdgeSpec>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(invalid(format!("node {} has a non-finite coordinate", n.id)));
            }
            if index.insert(n.id, i).is_some() {
                return Err(invalid(format!("duplicate node id {}", n.id)));
            }
        }
        let mut out = Vec::with_capacity(edges.len());
        for (k, e) in edges.into_iter().enumerate() {
            let lookup = |id: u64| {
                index.get(&id).copied().ok_or_else(|| invalid(format!("edge {k} references unknown node {id}")))
            };
            let (from, to) = (lookup(e.from)?, lookup(e.to)?);
            let a = Coord::new(nodes[from].x, nodes[from].y);
            let b = Coord::new(nodes[to].x, nodes[to].y);
            let mut polyline = e.polyline;
            if polyline.first() != Some(&a) {
                polyline.insert(0, a);
            }
            if polyline.last() != Some(&b) || polyline.len() == 1 {
                polyline.push(b);
            }
            let length: f64 = polyline.windows(2).map(|s| s[0].distance(&s[1])).sum();
            if !(length > 0.0) {
                return Err(invalid(format!("edge {k} has zero length")));
            }
            if let Some(declared) = e.length {
                if (declared - length).abs() > LENGTH_TOLERANCE {
                    return Err(invalid(format!(
                        "edge {k} declares length {declared} but its geometry measures {length}"
                    )));
                }
            }
            out.push(Edge { from, to, polyline, length });
        }
        Ok(Self { nodes, edges: out })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
}

/// Largest `k ≥ 0` with `length / (k + 1) ≥ spacing`: the
/// number of evenly spaced interior points an edge can hold.
pub fn interior_count(length: f64, spacing: f64) -> usize {
    if length < spacing {
        return 0;
    }
    let mut k = (libm::floor(length / spacing) as usize).saturating_sub(1);
    while k > 0 && length / ((k + 1) as f64) < spacing {
        k -= 1;
    }
    while length / (k + 2) as f64 >= spacing {
        k += 1;
    }
    k
}

fn point_along(polyline: &[Coord], mut s: f64) -> Coord {
    for seg in polyline.windows(2) {
        let d = seg[0].distance(&seg[1]);
        if s <= d && d > 0.0 {
            let t = s / d;
            return Coord::new(seg[0].x + t * (seg[1].x - seg[0].x), seg[0].y + t * (seg[1].y - seg[0].y));
        }
        s -= d;
    }
    *polyline.last().expect("polyline is non-empty")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleOrigin {
    Crossing { node: u64 },
    Interior { edge: usize, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: f64,
    pub y: f64,
    pub origin: SampleOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub spacing: f64,
    pub points: Vec<SamplePoint>,
}

impl SamplePlan {
    pub fn to_point_set(&self) -> PointSet {
        PointSet { points: self.points.iter().map(|p| Point::new(p.x, p.y)).collect(), codes: None }
    }

    pub fn interior_on(&self, edge: usize) -> impl Iterator<Item = (f64, &SamplePoint)> + '_ {
        self.points.iter().filter_map(move |p| match p.origin {
            SampleOrigin::Interior { edge: e, offset } if e == edge => Some((offset, p)),
            _ => None,
        })
    }
}

/// Every crossing plus, per edge, the maximal number of evenly spaced
/// interior points that stay at least `spacing` apart along the edge.
pub fn plan_sample_points(net: &StreetNetwork, spacing: f64) -> Result<SamplePlan> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(invalid("spacing must be positive"));
    }
    let mut points: Vec<SamplePoint> = net
        .nodes()
        .iter()
        .map(|n| SamplePoint { x: n.x, y: n.y, origin: SampleOrigin::Crossing { node: n.id } })
        .collect();
    for (e, edge) in net.edges().iter().enumerate() {
        let k = interior_count(edge.length, spacing);
        let step = edge.length / (k + 1) as f64;
        for j in 1..=k {
            let offset = j as f64 * step;
            let c = point_along(&edge.polyline, offset);
            points.push(SamplePoint { x: c.x, y: c.y, origin: SampleOrigin::Interior { edge: e, offset } });
        }
    }
    Ok(SamplePlan { spacing, points })
}

/// True and predicted firm counts per image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectorEval {
    pub truth: Vec<u64>,
    pub predicted: Vec<u64>,
    /// Externally supplied box-level scores, echoed in reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

impl DetectorEval {
    pub fn new(truth: Vec<u64>, predicted: Vec<u64>) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(invalid(format!("{} true counts but {} predicted", truth.len(), predicted.len())));
        }
        Ok(Self { truth, predicted, precision: None, recall: None })
    }

    /// Images with at least one firm.
    pub fn n_r(&self) -> usize {
        self.truth.iter().filter(|&&c| c > 0).count()
    }

    /// Images with no firms.
    pub fn n_nr(&self) -> usize {
        self.truth.len() - self.n_r()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMetrics {
    /// Mean detected fraction over images with firms; `None` if there are none.
    pub c_f: Option<f64>,
    /// Mean detections over images without firms; `None` if there are none.
    pub err_0: Option<f64>,
    pub n_r: usize,
    pub n_nr: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// `C_f = mean(ĉ/c | c > 0)` and `Err_0 = mean(ĉ | c = 0)`.
pub fn count_metrics(eval: &DetectorEval) -> CountMetrics {
    let (mut ratio_sum, mut n_r) = (0.0, 0usize);
    let (mut false_sum, mut n_nr) = (0.0, 0usize);
    for (&c, &p) in eval.truth.iter().zip(&eval.predicted) {
        if c > 0 {
            ratio_sum += p as f64 / c as f64;
            n_r += 1;
        } else {
            false_sum += p as f64;
            n_nr += 1;
        }
    }
    let f1 = match (eval.precision, eval.recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    CountMetrics {
        c_f: (n_r > 0).then(|| ratio_sum / n_r as f64),
        err_0: (n_nr > 0).then(|| false_sum / n_nr as f64),
        n_r,
        n_nr,
        precision: eval.precision,
        recall: eval.recall,
        f1,
    }
}

/// Where random region centres are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    /// Uniform over the points' bounding box.
    #[default]
    #[serde(rename = "bbox")]
    BBox,
    /// A uniformly chosen data point.
    DataPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    /// `c_r`, true firms inside the disk.
    pub truth: f64,
    /// `ĉ_r`, simulated detections inside the disk.
    pub detected: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<RegionSample>,
}

/// Draws per region before giving up on finding a non-empty disk.
pub const MAX_REGION_ATTEMPTS: usize = 10_000;

/// Thinned detections over a point set, ready for regional sampling.
#[derive(Debug, Clone)]
pub struct OmissionModel<'a> {
    points: &'a PointSet,
    detected: Vec<f64>,
    seed: u64,
    lo: f64,
    hi: f64,
    mode: CenterMode,
}

impl<'a> OmissionModel<'a> {
    /// Thins every unit of point weight independently with probability `keep_prob`.
    pub fn new(
        points: &'a PointSet,
        keep_prob: f64,
        radius_range: (f64, f64),
        mode: CenterMode,
        seed: u64,
    ) -> Result<Self> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(invalid("keep probability must lie in (0, 1]"));
        }
        let (lo, hi) = radius_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(invalid("radius range must satisfy 0 < min < max"));
        }
        if !(points.total_weight() > 0.0) {
            return Err(invalid("omission robustness needs weighted points"));
        }
        let detected = points
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let units = libm::round(p.weight) as u64;
                if keep_prob >= 1.0 {
                    return units as f64;
                }
                let mut rng = stream(seed, Domain::Thinning, i as u64);
                (0..units).filter(|_| rng.gen_bool(keep_prob)).count() as f64
            })
            .collect();
        Ok(Self { points, detected, seed, lo, hi, mode })
    }

    /// Samples region `r` from its own stream, redrawing empty disks.
    pub fn region(&self, r: usize) -> Result<RegionSample> {
        let bbox = self.points.bbox().expect("non-empty point set");
        let mut rng = stream(self.seed, Domain::Region, r as u64);
        for _ in 0..MAX_REGION_ATTEMPTS {
            let center = match self.mode {
                CenterMode::BBox => Coord::new(
                    bbox.min_x + rng.gen::<f64>() * bbox.width(),
                    bbox.min_y + rng.gen::<f64>() * bbox.height(),
                ),
                CenterMode::DataPoint => self.points.points[rng.gen_range(0..self.points.len())].coord(),
            };
            let radius = rng.gen_range(self.lo..self.hi);
            let r2 = radius * radius;
            let (mut truth, mut detected) = (0.0, 0.0);
            for (p, &d) in self.points.points.iter().zip(&self.detected) {
                let (dx, dy) = (p.x - center.x, p.y - center.y);
                if dx * dx + dy * dy <= r2 {
                    truth += libm::round(p.weight);
                    detected += d;
                }
            }
            if truth > 0.0 {
                return Ok(RegionSample { x: center.x, y: center.y, radius, truth, detected, ratio: detected / truth });
            }
        }
        Err(Error::Degenerate(format!("no non-empty region found in {MAX_REGION_ATTEMPTS} draws")))
    }
}

/// Summarizes per-region ratios.
pub fn summarize_regions(samples: Vec<RegionSample>) -> Result<Robustness> {
    let ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    let (mean, std) = mean_std(&ratios).ok_or_else(|| invalid("no regions sampled"))?;
    Ok(Robustness { mean, std, samples })
}

/// Mean and spread of `R_r = ĉ_r / c_r` over random disks after thinning.
pub fn omission_robustness(
    points: &PointSet,
    keep_prob: f64,
    n_regions: usize,
    radius_range: (f64, f64),
    mode: CenterMode,
    seed: u64,
) -> Result<Robustness> {
    if n_regions == 0 {
        return Err(invalid("at least one region is required"));
    }
    let model = OmissionModel::new(points, keep_prob, radius_range, mode, seed)?;
    let samples = (0..n_regions).map(|r| model.region(r)).collect::<Result<Vec<_>>>()?;
    summarize_regions(samples)
}
