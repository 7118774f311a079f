//! Synthetic cities: Gaussian firm blobs over a uniform background, a
//! rectangular zone partition with strata and land use, and registry
//! industries drawn per zone.

use std::path::Path;

use firmscape_core::econ::{code_listed, FirmTable};
use firmscape_core::geometry::{BBox, GridSpec, LandUse, Point, PointSet, Polygon, Zone, ZoneAttributes, ZoneMap};
use firmscape_core::rng::{stream, Domain, StreamRng};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, PointFormat};

/// Draws before a blob point that keeps landing outside the extent is an error.
const MAX_DRAWS_PER_POINT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCityConfig {
    pub extent: BBox,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default)]
    pub blobs: Vec<Blob>,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub zones: Option<ZoneLayout>,
    /// Registry industry mixture; a built-in mix is used when empty.
    #[serde(default)]
    pub industries: Vec<IndustryShare>,
    /// Codes that count as street commerce; the shipped list when absent.
    #[serde(default)]
    pub commercial_codes: Option<Vec<String>>,
    pub seed: u64,
}

fn default_cell_size() -> f64 {
    firmscape_core::geometry::DEFAULT_CELL_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub center: [f64; 2],
    /// Standard deviation of the isotropic Gaussian, metres.
    pub spread: f64,
    pub count: u64,
    #[serde(default)]
    pub population: Population,
}

/// Which firm populations a blob feeds. `both` draws `count` firms for each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    #[default]
    Visible,
    Registered,
    Both,
}

impl Population {
    fn visible(self) -> bool {
        matches!(self, Population::Visible | Population::Both)
    }

    fn registered(self) -> bool {
        matches!(self, Population::Registered | Population::Both)
    }
}

/// Uniformly scattered firm counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    #[serde(default)]
    pub visible: u64,
    #[serde(default)]
    pub registered: u64,
}

/// A `cols` x `rows` partition of the extent. Attribute lists are row-major
/// from the lower-left zone and must have `cols * rows` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneLayout {
    pub cols: usize,
    pub rows: usize,
    #[serde(default)]
    pub strata: Option<Vec<u8>>,
    #[serde(default)]
    pub land_use: Option<Vec<LandUse>>,
    #[serde(default)]
    pub population: Option<Vec<f64>>,
}

/// Relative frequency of an industry. In a zone of stratum `s` the weight is
/// scaled by `exp(tilt * (s - 3.5))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndustryShare {
    pub code: String,
    pub weight: f64,
    #[serde(default)]
    pub tilt: f64,
}

fn default_industries() -> Vec<IndustryShare> {
    [
        ("4711", 4.0, 0.0),
        ("4719", 1.0, 0.2),
        ("5611", 2.0, -0.1),
        ("9602", 1.0, -0.3),
        ("4771", 1.0, 0.3),
        ("6201", 1.0, 0.4),
        ("8610", 0.5, 0.2),
        ("1011", 0.5, -0.4),
    ]
    .into_iter()
    .map(|(code, weight, tilt)| IndustryShare { code: code.to_string(), weight, tilt })
    .collect()
}

/// Everything a pipeline run consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    pub visible: PointSet,
    pub registered: PointSet,
    /// Registered firms whose industry is on the street-commerce list.
    pub registered_commercial: PointSet,
    /// Registered firms by zone and industry; empty without zones.
    pub firms: FirmTable,
    pub zones: Option<ZoneMap>,
}

const GRID_FILE: &str = "grid.json";
const VISIBLE_FILE: &str = "visible.csv";
const REGISTERED_FILE: &str = "registered.csv";
const COMMERCIAL_FILE: &str = "registered_commercial.csv";
const FIRMS_FILE: &str = "firms.csv";
const ZONES_FILE: &str = "zones.json";

impl Dataset {
    /// Writes the dataset files into an existing directory.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join(GRID_FILE), &self.grid)?;
        io::write_points(&dir.join(VISIBLE_FILE), &self.visible)?;
        io::write_points(&dir.join(REGISTERED_FILE), &self.registered)?;
        io::write_points(&dir.join(COMMERCIAL_FILE), &self.registered_commercial)?;
        if let Some(zones) = &self.zones {
            io::write_zones(&dir.join(ZONES_FILE), zones)?;
            io::write_firm_table(&dir.join(FIRMS_FILE), &self.firms)?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let grid: GridSpec = io::read_json(&dir.join(GRID_FILE))?;
        let points = |f: &str| io::load_points(&dir.join(f), PointFormat::XyCsv, None);
        let zones_path = dir.join(ZONES_FILE);
        let (zones, firms) = if zones_path.exists() {
            (Some(io::read_zones(&zones_path)?), io::read_firm_table(&dir.join(FIRMS_FILE))?)
        } else {
            (None, FirmTable::default())
        };
        Ok(Dataset {
            grid,
            visible: points(VISIBLE_FILE)?,
            registered: points(REGISTERED_FILE)?,
            registered_commercial: points(COMMERCIAL_FILE)?,
            firms,
            zones,
        })
    }
}

impl SyntheticCityConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.extent;
        if !(e.min_x.is_finite() && e.min_y.is_finite() && e.max_x.is_finite() && e.max_y.is_finite())
            || e.max_x <= e.min_x
            || e.max_y <= e.min_y
        {
            return Err(Error::invalid("extent must have positive width and height"));
        }
        for (k, b) in self.blobs.iter().enumerate() {
            if !(b.spread.is_finite() && b.spread > 0.0) {
                return Err(Error::invalid(format!("blob {k}: spread must be positive")));
            }
            if !(b.center[0].is_finite() && b.center[1].is_finite()) {
                return Err(Error::invalid(format!("blob {k}: centre is not finite")));
            }
        }
        let total: u64 =
            self.blobs.iter().map(|b| b.count).sum::<u64>() + self.background.visible + self.background.registered;
        if total == 0 {
            return Err(Error::invalid("synthetic city has zero firms"));
        }
        for s in &self.industries {
            if s.code.is_empty() || !(s.weight.is_finite() && s.weight >= 0.0) || !s.tilt.is_finite() {
                return Err(Error::invalid(format!("industry {:?}: bad code, weight or tilt", s.code)));
            }
        }
        if !self.industries.is_empty() && self.industries.iter().all(|s| s.weight == 0.0) {
            return Err(Error::invalid("industry weights are all zero"));
        }
        if let Some(z) = &self.zones {
            let n = z.cols * z.rows;
            if n == 0 {
                return Err(Error::invalid("zone layout needs at least one row and column"));
            }
            let check = |name: &str, len: Option<usize>| match len {
                Some(l) if l != n => Err(Error::invalid(format!("zones.{name} has {l} entries, expected {n}"))),
                _ => Ok(()),
            };
            check("strata", z.strata.as_ref().map(Vec::len))?;
            check("land_use", z.land_use.as_ref().map(Vec::len))?;
            check("population", z.population.as_ref().map(Vec::len))?;
        }
        Ok(())
    }
}

/// Stream indices within the synthetic domain.
fn blob_stream(blob: usize, registered: bool) -> u64 {
    2 * blob as u64 + registered as u64
}
const BACKGROUND_STREAM: u64 = 1 << 40;
const INDUSTRY_STREAM: u64 = 1 << 41;

pub fn generate_synthetic_city(cfg: &SyntheticCityConfig) -> Result<Dataset> {
    cfg.validate()?;
    let grid = GridSpec::covering(&cfg.extent, cfg.cell_size)?;
    let zones = cfg.zones.as_ref().map(|layout| zone_partition(&cfg.extent, layout)).transpose()?;

    let mut visible = Vec::new();
    let mut registered = Vec::new();
    for (k, blob) in cfg.blobs.iter().enumerate() {
        if blob.population.visible() {
            gaussian_points(cfg, blob, &mut stream(cfg.seed, Domain::Synthetic, blob_stream(k, false)), &mut visible)?;
        }
        if blob.population.registered() {
            gaussian_points(
                cfg,
                blob,
                &mut stream(cfg.seed, Domain::Synthetic, blob_stream(k, true)),
                &mut registered,
            )?;
        }
    }
    uniform_points(
        &cfg.extent,
        cfg.background.visible,
        &mut stream(cfg.seed, Domain::Synthetic, BACKGROUND_STREAM),
        &mut visible,
    );
    uniform_points(
        &cfg.extent,
        cfg.background.registered,
        &mut stream(cfg.seed, Domain::Synthetic, BACKGROUND_STREAM + 1),
        &mut registered,
    );

    let mix = if cfg.industries.is_empty() { default_industries() } else { cfg.industries.clone() };
    let mut rng = stream(cfg.seed, Domain::Synthetic, INDUSTRY_STREAM);
    let samplers = industry_samplers(&mix, zones.as_ref())?;
    let codes = registered
        .iter()
        .map(|p| {
            let z = zones.as_ref().and_then(|m| m.first_containing(&p.coord()));
            mix[samplers[z.map_or(0, |z| z + 1)].sample(&mut rng)].code.clone()
        })
        .collect();
    let registered = PointSet::with_codes(registered, codes)?;
    let firms = match &zones {
        Some(map) => tabulate_firms(&registered, map)?,
        None => FirmTable::default(),
    };
    let list = match &cfg.commercial_codes {
        Some(list) => list.clone(),
        None => io::read_code_list(None)?,
    };
    let registered_commercial = firmscape_core::econ::filter_points(&registered, &list)?.subset;
    debug_assert!(registered_commercial.codes.iter().flatten().all(|c| code_listed(c, &list)));

    Ok(Dataset { grid, visible: PointSet::new(visible)?, registered, registered_commercial, firms, zones })
}

/// Counts coded points by containing zone and industry. Points outside
/// every zone are left out; every zone appears, even when empty.
pub fn tabulate_firms(points: &PointSet, zones: &ZoneMap) -> Result<FirmTable> {
    let codes = points.codes.as_ref().ok_or_else(|| Error::invalid("registered firms carry no industry codes"))?;
    let records = points.points.iter().zip(codes).filter_map(|(p, code)| {
        zones.first_containing(&p.coord()).map(|z| (zones.zones()[z].id.as_str(), code.as_str(), 1u64))
    });
    Ok(FirmTable::with_zones(zones.zones().iter().map(|z| z.id.as_str()), records))
}

fn gaussian_points(cfg: &SyntheticCityConfig, blob: &Blob, rng: &mut StreamRng, out: &mut Vec<Point>) -> Result<()> {
    let e = &cfg.extent;
    for _ in 0..blob.count {
        let mut placed = false;
        for _ in 0..MAX_DRAWS_PER_POINT {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let (x, y) = (blob.center[0] + blob.spread * dx, blob.center[1] + blob.spread * dy);
            if x >= e.min_x && x < e.max_x && y >= e.min_y && y < e.max_y {
                out.push(Point::new(x, y));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::invalid(format!(
                "blob at ({}, {}) keeps falling outside the extent",
                blob.center[0], blob.center[1]
            )));
        }
    }
    Ok(())
}

fn uniform_points(e: &BBox, n: u64, rng: &mut StreamRng, out: &mut Vec<Point>) {
    for _ in 0..n {
        out.push(Point::new(rng.gen_range(e.min_x..e.max_x), rng.gen_range(e.min_y..e.max_y)));
    }
}

/// Index 0 is the untilted mixture for firms outside every zone.
fn industry_samplers(mix: &[IndustryShare], zones: Option<&ZoneMap>) -> Result<Vec<WeightedIndex<f64>>> {
    let build = |stratum: Option<u8>| {
        let w: Vec<f64> = mix
            .iter()
            .map(|s| match stratum {
                Some(st) => s.weight * (s.tilt * (f64::from(st) - 3.5)).exp(),
                None => s.weight,
            })
            .collect();
        WeightedIndex::new(w).map_err(|e| Error::invalid(format!("industry mixture: {e}")))
    };
    let mut out = vec![build(None)?];
    if let Some(map) = zones {
        for z in map.zones() {
            out.push(build(z.attributes.stratum)?);
        }
    }
    Ok(out)
}

fn zone_partition(extent: &BBox, layout: &ZoneLayout) -> Result<ZoneMap> {
    let w = extent.width() / layout.cols as f64;
    let h = extent.height() / layout.rows as f64;
    let mut zones = Vec::with_capacity(layout.cols * layout.rows);
    for r in 0..layout.rows {
        for c in 0..layout.cols {
            let k = r * layout.cols + c;
            let x0 = extent.min_x + c as f64 * w;
            let y0 = extent.min_y + r as f64 * h;
            let x1 = if c + 1 == layout.cols { extent.max_x } else { x0 + w };
            let y1 = if r + 1 == layout.rows { extent.max_y } else { y0 + h };
            zones.push(Zone {
                id: format!("Z{r:02}{c:02}"),
                polygon: Polygon::rect(x0, y0, x1, y1)?,
                attributes: ZoneAttributes {
                    stratum: layout.strata.as_ref().map(|s| s[k]),
                    land_use: layout.land_use.as_ref().map(|s| s[k]),
                    population: layout.population.as_ref().map(|s| s[k]),
                    comuna_id: None,
                },
            });
        }
    }
    Ok(ZoneMap::new(zones)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use firmscape_core::density::{coefficient_of_variation, kde};
    use firmscape_core::geometry::Coord;

    fn two_blobs(seed: u64) -> SyntheticCityConfig {
        serde_json::from_value(serde_json::json!({
            "extent": {"min_x": 0, "min_y": 0, "max_x": 12000, "max_y": 8000},
            "blobs": [
                {"center": [3000, 4000], "spread": 400, "count": 3000, "population": "both"},
                {"center": [9000, 4000], "spread": 400, "count": 3000}
            ],
            "background": {"visible": 1000, "registered": 1000},
            "zones": {"cols": 3, "rows": 2, "strata": [1, 2, 3, 4, 5, 6],
                      "land_use": ["commercial_mixed", "other", "commercial_mixed", "other", "commercial_mixed", "other"],
                      "population": [1e4, 2e4, 3e4, 4e4, 5e4, 6e4]},
            "seed": seed
        }))
        .unwrap()
    }

    #[test]
    fn blobs_peak_at_their_centres() {
        let d = generate_synthetic_city(&two_blobs(1)).unwrap();
        assert_eq!(d.visible.len(), 7000);
        assert_eq!(d.registered.len(), 4000);
        let f = kde(&d.visible, &d.grid, 150.0).unwrap();
        let v = f.values();
        let g = d.grid;
        let is_local_max = |i: usize| {
            let c = g.cell(i);
            (-1i64..=1).all(|dr| {
                (-1i64..=1).all(|dc| {
                    let (r, cc) = (c.row as i64 + dr, c.col as i64 + dc);
                    if (dr, dc) == (0, 0) || r < 0 || cc < 0 || r >= g.n_rows as i64 || cc >= g.n_cols as i64 {
                        return true;
                    }
                    v[i] >= v[r as usize * g.n_cols + cc as usize]
                })
            })
        };
        for centre in [Coord::new(3000.0, 4000.0), Coord::new(9000.0, 4000.0)] {
            let cell = g.locate_index(&centre).unwrap();
            let best = (0..g.n_cells())
                .filter(|&i| g.cell_center(i).distance(&centre) < 1500.0)
                .max_by(|&a, &b| v[a].total_cmp(&v[b]))
                .unwrap();
            assert!(is_local_max(best));
            assert!(g.cell_center(best).distance(&g.cell_center(cell)) <= 300.0, "peak {best} vs centre {cell}");
        }
    }

    #[test]
    fn firm_table_matches_registered_points() {
        let d = generate_synthetic_city(&two_blobs(2)).unwrap();
        assert_eq!(d.firms.total() as usize, d.registered.len());
        assert_eq!(d.firms.zones().len(), 6);
        assert!(d.registered_commercial.len() < d.registered.len());
        assert!(!d.registered_commercial.is_empty());
        let list = io::read_code_list(None).unwrap();
        assert!(d.registered_commercial.codes.as_ref().unwrap().iter().all(|c| code_listed(c, &list)));
        let zones = d.zones.as_ref().unwrap();
        let z = d.registered.points.iter().filter(|p| zones.first_containing(&p.coord()) == Some(4)).count();
        assert_eq!(d.firms.zone_total(d.firms.zone_index("Z0101").unwrap()) as usize, z);
    }

    #[test]
    fn background_only_city_is_flat() {
        for seed in 0..5 {
            let cfg: SyntheticCityConfig = serde_json::from_value(serde_json::json!({
                "extent": {"min_x": 0, "min_y": 0, "max_x": 10000, "max_y": 10000},
                "background": {"visible": 50000},
                "seed": seed
            }))
            .unwrap();
            let d = generate_synthetic_city(&cfg).unwrap();
            assert_eq!((d.grid.n_cols, d.grid.n_rows), (50, 50));
            let cv = coefficient_of_variation(&kde(&d.visible, &d.grid, 150.0).unwrap()).unwrap();
            assert!(cv < 0.3, "seed {seed}: cv {cv}");
        }
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic_city(&two_blobs(9)).unwrap().write(a.path()).unwrap();
        generate_synthetic_city(&two_blobs(9)).unwrap().write(b.path()).unwrap();
        for f in [GRID_FILE, VISIBLE_FILE, REGISTERED_FILE, COMMERCIAL_FILE, FIRMS_FILE, ZONES_FILE] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let other = generate_synthetic_city(&two_blobs(10)).unwrap();
        assert_ne!(other.visible, Dataset::read(a.path()).unwrap().visible);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_synthetic_city(&two_blobs(3)).unwrap();
        d.write(dir.path()).unwrap();
        let back = Dataset::read(dir.path()).unwrap();
        assert_eq!(back.grid, d.grid);
        assert_eq!(back.visible, d.visible);
        assert_eq!(back.registered, d.registered);
        assert_eq!(back.registered_commercial, d.registered_commercial);
        assert_eq!(back.zones, d.zones);
        assert_eq!(back.firms.total(), d.firms.total());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = two_blobs(0);
        cfg.blobs.clear();
        cfg.background = Background::default();
        assert_eq!(generate_synthetic_city(&cfg).unwrap_err().exit_code(), 2);
        let mut cfg = two_blobs(0);
        cfg.blobs[0].spread = 0.0;
        assert!(generate_synthetic_city(&cfg).is_err());
        let mut cfg = two_blobs(0);
        cfg.zones.as_mut().unwrap().strata = Some(vec![1, 2]);
        assert!(generate_synthetic_city(&cfg).is_err());
        let mut cfg = two_blobs(0);
        cfg.blobs[0].center = [1e9, 1e9];
        assert!(generate_synthetic_city(&cfg).is_err());
        assert!(serde_json::from_str::<SyntheticCityConfig>(
            r#"{"extent": {"min_x":0,"min_y":0,"max_x":1,"max_y":1}, "seed": 1, "typo": 3}"#
        )
        .is_err());
    }
}
