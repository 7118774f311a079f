//! Planar geometry: grids, points, polygons and zone maps.
//!
//! All coordinates are planar metres. Longitude/latitude input is brought
//! into this frame with [`Equirectangular`], a local projection about the
//! dataset centroid.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Default grid cell edge in metres.
pub const DEFAULT_CELL_SIZE: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Coord) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }
}

/// A geo-referenced location carrying a non-negative multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y, weight: 1.0 }
    }

    pub const fn weighted(x: f64, y: f64, weight: f64) -> Self {
        Self { x, y, weight }
    }

    pub const fn coord(&self) -> Coord {
        Coord { x: self.x, y: self.y }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.weight.is_finite() && self.weight >= 0.0
    }
}

/// A set of points, optionally labelled with an industry code per point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
    /// Industry codes aligned with `points`, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<String>>,
}

impl PointSet {
    /// Builds a point set, rejecting non-finite coordinates and negative weights.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_valid()) {
            return Err(invalid(format!("point {i} has a non-finite coordinate or negative weight")));
        }
        Ok(Self { points, codes: None })
    }

    pub fn with_codes(points: Vec<Point>, codes: Vec<String>) -> Result<Self> {
        if codes.len() != points.len() {
            return Err(invalid(format!("{} industry codes for {} points", codes.len(), points.len())));
        }
        let mut set = Self::new(points)?;
        set.codes = Some(codes);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn bbox(&self) -> Option<BBox> {
        BBox::from_coords(self.points.iter().map(Point::coord))
    }

    /// Keeps the points for which `keep(index)` holds, carrying codes along.
    pub fn retain_indices(&self, mut keep: impl FnMut(usize) -> bool) -> PointSet {
        let mut points = Vec::new();
        let mut codes = self.codes.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            if keep(i) {
                points.push(*p);
                if let (Some(out), Some(src)) = (codes.as_mut(), self.codes.as_ref()) {
                    out.push(src[i].clone());
                }
            }
        }
        PointSet { points, codes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn from_coords(coords: impl IntoIterator<Item = Coord>) -> Option<Self> {
        let mut it = coords.into_iter();
        let first = it.next()?;
        let mut b = BBox::new(first.x, first.y, first.x, first.y);
        for c in it {
            b.min_x = b.min_x.min(c.x);
            b.min_y = b.min_y.min(c.y);
            b.max_x = b.max_x.max(c.x);
            b.max_y = b.max_y.max(c.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn expand(&self, margin: f64) -> BBox {
        BBox::new(self.min_x - margin, self.min_y - margin, self.max_x + margin, self.max_y + margin)
    }

    pub fn contains(&self, c: &Coord) -> bool {
        c.x >= self.min_x && c.x <= self.max_x && c.y >= self.min_y && c.y <= self.max_y
    }
}

/// Row/column address of a grid cell. Row 0 is the southernmost row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

/// A rectangular lattice of square cells anchored at `origin` (south-west corner).
///
/// Cells are half-open: cell `(r, c)` covers
/// `[x0 + c·s, x0 + (c+1)·s) × [y0 + r·s, y0 + (r+1)·s)`.
/// Linear cell indices are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Coord,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl GridSpec {
    pub fn new(origin: Coord, cell_size: f64, n_cols: usize, n_rows: usize) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(invalid("cell size must be positive"));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(invalid("grid origin must be finite"));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(invalid("grid must have at least one row and one column"));
        }
        Ok(Self { origin, cell_size, n_cols, n_rows })
    }

    /// Smallest grid of `cell_size` cells anchored at the bbox's lower-left
    /// corner that covers the bbox.
    pub fn covering(bbox: &BBox, cell_size: f64) -> Result<Self> {
        if !(bbox.max_x > bbox.min_x && bbox.max_y > bbox.min_y) {
            return Err(invalid("degenerate bounding box"));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(invalid("cell size must be positive"));
        }
        let n_cols = ceil_count(bbox.width() / cell_size);
        let n_rows = ceil_count(bbox.height() / cell_size);
        Self::new(Coord::new(bbox.min_x, bbox.min_y), cell_size, n_cols, n_rows)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.n_cols + cell.col
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell { row: index / self.n_cols, col: index % self.n_cols }
    }

    pub fn cell_center(&self, index: usize) -> Coord {
        let Cell { row, col } = self.cell(index);
        Coord::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing `c`, or `None` when `c` lies outside the grid.
    pub fn locate(&self, c: &Coord) -> Option<Cell> {
        let fx = libm::floor((c.x - self.origin.x) / self.cell_size);
        let fy = libm::floor((c.y - self.origin.y) / self.cell_size);
        if !(fx >= 0.0 && fy >= 0.0) || fx >= self.n_cols as f64 || fy >= self.n_rows as f64 {
            return None;
        }
        Some(Cell { row: fy as usize, col: fx as usize })
    }

    pub fn locate_index(&self, c: &Coord) -> Option<usize> {
        self.locate(c).map(|cell| self.index(cell))
    }

    pub fn extent(&self) -> BBox {
        BBox::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.n_cols as f64 * self.cell_size,
            self.origin.y + self.n_rows as f64 * self.cell_size,
        )
    }
}

/// `ceil(v)` that ignores floating-point noise just above an integer.
pub(crate) fn ceil_count(v: f64) -> usize {
    let r = libm::round(v);
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        libm::ceil(v) as usize
    }
}

/// Grid construction over a bounding box.
pub fn build_grid(bbox: &BBox, cell_size: f64) -> Result<GridSpec> {
    GridSpec::covering(bbox, cell_size)
}

/// Cell index of `p`, or `None` outside the grid.
pub fn point_to_cell(p: &Point, grid: &GridSpec) -> Option<Cell> {
    grid.locate(&p.coord())
}

/// A simple polygon with optional holes. Rings are stored closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    exterior: Vec<Coord>,
    holes: Vec<Vec<Coord>>,
}

impl Polygon {
    pub fn new(exterior: Vec<Coord>, holes: Vec<Vec<Coord>>) -> Result<Self> {
        let exterior = close_ring(exterior)?;
        if ring_area(&exterior) == 0.0 {
            return Err(invalid("polygon has zero area"));
        }
        let holes = holes.into_iter().map(close_ring).collect::<Result<Vec<_>>>()?;
        Ok(Self { exterior, holes })
    }

    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Self::new(
            alloc::vec![
                Coord::new(min_x, min_y),
                Coord::new(max_x, min_y),
                Coord::new(max_x, max_y),
                Coord::new(min_x, max_y),
            ],
            Vec::new(),
        )
    }

    pub fn exterior(&self) -> &[Coord] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Coord>] {
        &self.holes
    }

    pub fn area(&self) -> f64 {
        ring_area(&self.exterior) - self.holes.iter().map(|h| ring_area(h)).sum::<f64>()
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_coords(self.exterior.iter().copied()).expect("ring has vertices")
    }

    /// Even-odd containment. Points on any ring's boundary count as inside.
    pub fn contains(&self, c: &Coord) -> bool {
        if !self.bbox().contains(c) {
            return false;
        }
        let rings = core::iter::once(&self.exterior).chain(self.holes.iter());
        let mut inside = false;
        for ring in rings {
            for seg in ring.windows(2) {
                if on_segment(c, &seg[0], &seg[1]) {
                    return true;
                }
                let (a, b) = (seg[0], seg[1]);
                if (a.y > c.y) != (b.y > c.y) {
                    let x_cross = a.x + (c.y - a.y) * (b.x - a.x) / (b.y - a.y);
                    if c.x < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

fn close_ring(mut ring: Vec<Coord>) -> Result<Vec<Coord>> {
    if ring.iter().any(|c| !(c.x.is_finite() && c.y.is_finite())) {
        return Err(invalid("ring has a non-finite vertex"));
    }
    if ring.first() != ring.last() {
        let first = ring[0];
        ring.push(first);
    }
    if ring.len() < 4 {
        return Err(invalid("ring needs at least 3 distinct vertices"));
    }
    Ok(ring)
}

fn ring_area(ring: &[Coord]) -> f64 {
    let twice: f64 = ring.windows(2).map(|s| s[0].x * s[1].y - s[1].x * s[0].y).sum();
    (twice / 2.0).abs()
}

fn on_segment(p: &Coord, a: &Coord, b: &Coord) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let scale = (b.x - a.x).abs().max((b.y - a.y).abs()).max(1.0);
    if cross.abs() > 1e-9 * scale {
        return false;
    }
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: &Point, poly: &Polygon) -> bool {
    poly.contains(&p.coord())
}

/// Zoning class of a zone: commercial/mixed use or anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandUse {
    CommercialMixed,
    Other,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZoneAttributes {
    /// Socio-economic stratum, 1 (poorest) to 6 (richest).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub land_use: Option<LandUse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comuna_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub polygon: Polygon,
    pub attributes: ZoneAttributes,
}

/// An ordered collection of zones with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZoneMap {
    zones: Vec<Zone>,
}

/// Result of assigning points to zones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneAssignment {
    /// Index into the zone map of the first zone containing each point.
    pub zone: Vec<Option<usize>>,
    /// Points that fell in no zone.
    pub unmatched: usize,
    /// Points contained by more than one zone.
    pub overlaps: usize,
}

impl ZoneMap {
    pub fn new(zones: Vec<Zone>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for z in &zones {
            if !seen.insert(z.id.as_str()) {
                return Err(invalid(format!("duplicate zone id {:?}", z.id)));
            }
            if let Some(s) = z.attributes.stratum {
                if !(1..=6).contains(&s) {
                    return Err(invalid(format!("zone {:?} has stratum {s}, expected 1..=6", z.id)));
                }
            }
        }
        Ok(Self { zones })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }

    /// Zones containing `c`, in input order.
    pub fn containing<'a>(&'a self, c: &'a Coord) -> impl Iterator<Item = (usize, &'a Zone)> + 'a {
        self.zones.iter().enumerate().filter(move |(_, z)| z.polygon.contains(c))
    }

    /// Index of the first zone (in input order) that contains `c`.
    pub fn first_containing(&self, c: &Coord) -> Option<usize> {
        self.containing(c).map(|(i, _)| i).next()
    }

    pub fn assign(&self, points: &PointSet) -> ZoneAssignment {
        assign_zones(points, self)
    }
}

/// Assigns each point to the first containing zone in input order.
pub fn assign_zones(points: &PointSet, zones: &ZoneMap) -> ZoneAssignment {
    let mut zone = Vec::with_capacity(points.len());
    let mut unmatched = 0;
    let mut overlaps = 0;
    for p in &points.points {
        let c = p.coord();
        let mut hits = zones.containing(&c).map(|(i, _)| i);
        let first = hits.next();
        if first.is_none() {
            unmatched += 1;
        } else if hits.next().is_some() {
            overlaps += 1;
        }
        zone.push(first);
    }
    ZoneAssignment { zone, unmatched, overlaps }
}

/// Local equirectangular projection about a reference longitude/latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equirectangular {
    pub lon0: f64,
    pub lat0: f64,
}

impl Equirectangular {
    /// Projection centred on the mean of the given (lon, lat) pairs.
    pub fn about_centroid(lonlat: &[(f64, f64)]) -> Result<Self> {
        if lonlat.is_empty() {
            return Err(invalid("cannot project an empty coordinate list"));
        }
        let n = lonlat.len() as f64;
        let lon0 = lonlat.iter().map(|p| p.0).sum::<f64>() / n;
        let lat0 = lonlat.iter().map(|p| p.1).sum::<f64>() / n;
        Ok(Self { lon0, lat0 })
    }

    pub fn project(&self, lon: f64, lat: f64) -> Coord {
        let k = core::f64::consts::PI / 180.0 * EARTH_RADIUS_M;
        Coord::new((lon - self.lon0) * k * libm::cos(self.lat0.to_radians()), (lat - self.lat0) * k)
    }
}

/// Distance from `c` to the nearest of `centers`; infinite when `centers` is empty.
pub fn nearest_distance(c: &Coord, centers: &[Coord]) -> f64 {
    centers.iter().map(|k| k.distance(c)).fold(f64::INFINITY, f64::min)
}
