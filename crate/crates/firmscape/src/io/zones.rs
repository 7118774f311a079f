use std::path::Path;

use firmscape_core::geometry::{Coord, Polygon, Zone, ZoneAttributes, ZoneMap};
use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::error::{Error, Result};

/// On-disk zone layout:
///
/// ```json
/// {"zones": [{"id": "Z1",
///             "rings": [[[0, 0], [100, 0], [100, 100], [0, 100]]],
///             "attributes": {"stratum": 3, "land_use": "commercial_mixed",
///                            "population": 1200, "comuna_id": "C1"}}]}
/// ```
///
/// The first ring is the exterior, any further rings are holes. Rings may be
/// given open or closed. `land_use` is `commercial_mixed` or `other`; every
/// attribute is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneDocument {
    pub zones: Vec<ZoneRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRecord {
    pub id: String,
    pub rings: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub attributes: ZoneAttributes,
}

impl ZoneDocument {
    pub fn from_map(map: &ZoneMap) -> Self {
        let ring = |r: &[Coord]| r.iter().map(|c| [c.x, c.y]).collect::<Vec<_>>();
        ZoneDocument {
            zones: map
                .zones()
                .iter()
                .map(|z| {
                    let mut rings = vec![ring(z.polygon.exterior())];
                    rings.extend(z.polygon.holes().iter().map(|h| ring(h)));
                    ZoneRecord { id: z.id.clone(), rings, attributes: z.attributes.clone() }
                })
                .collect(),
        }
    }

    pub fn into_map(self) -> Result<ZoneMap> {
        let mut zones = Vec::with_capacity(self.zones.len());
        for rec in self.zones {
            let mut rings =
                rec.rings.into_iter().map(|r| r.into_iter().map(|[x, y]| Coord::new(x, y)).collect::<Vec<_>>());
            let exterior = rings.next().ok_or_else(|| Error::invalid(format!("zone {:?} has no rings", rec.id)))?;
            let polygon = Polygon::new(exterior, rings.collect())
                .map_err(|e| Error::invalid(format!("zone {:?}: {e}", rec.id)))?;
            zones.push(Zone { id: rec.id, polygon, attributes: rec.attributes });
        }
        Ok(ZoneMap::new(zones)?)
    }
}

pub fn read_zones(path: &Path) -> Result<ZoneMap> {
    read_json::<ZoneDocument>(path)?.into_map()
}

pub fn write_zones(path: &Path, zones: &ZoneMap) -> Result<()> {
    write_json(path, &ZoneDocument::from_map(zones))
}
