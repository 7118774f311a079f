//! Land-use adherence: the share of firms located outside commercial or
//! mixed-use zoned land, by socio-economic stratum and by distance to
//! cluster centres.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::compare::RadialProfile;
use crate::error::{invalid, Result};
use crate::geometry::{nearest_distance, Coord, LandUse, PointSet, ZoneMap};

/// Zoning facts for one firm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirmZoning {
    /// Stratum of the first containing zone that carries one.
    pub stratum: Option<u8>,
    /// Whether the first containing zone with a land-use class is commercial/mixed.
    pub commercial: bool,
}

/// Looks up stratum and land use for every firm.
pub fn classify(firms: &PointSet, zones: &ZoneMap) -> Vec<FirmZoning> {
    firms
        .points
        .iter()
        .map(|p| {
            let c = p.coord();
            let stratum = zones.containing(&c).find_map(|(_, z)| z.attributes.stratum);
            let land_use = zones.containing(&c).find_map(|(_, z)| z.attributes.land_use);
            FirmZoning { stratum, commercial: land_use == Some(LandUse::CommercialMixed) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceRow {
    /// `None` for firms outside every stratum zone.
    pub stratum: Option<u8>,
    /// `|C_s|`, total firm weight.
    pub firms: f64,
    /// Firm weight outside commercial/mixed-use land.
    pub outside: f64,
    /// `A(s) = 1 - |C_s ∩ C_A| / |C_s|`; `None` when `|C_s| = 0`.
    pub rate: Option<f64>,
}

impl AdherenceRow {
    fn new(stratum: Option<u8>, firms: f64, outside: f64) -> Self {
        Self { stratum, firms, outside, rate: (firms > 0.0).then(|| outside / firms) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceReport {
    /// Strata 1 through 6, in order.
    pub strata: Vec<AdherenceRow>,
    pub unzoned: AdherenceRow,
    /// Non-adherence over all stratum-zoned firms.
    pub overall: Option<f64>,
}

/// Non-adherence rate per stratum.
pub fn nonadherence_by_stratum(firms: &PointSet, zones: &ZoneMap) -> AdherenceReport {
    let zoning = classify(firms, zones);
    let mut totals = [(0.0f64, 0.0f64); 7];
    for (p, z) in firms.points.iter().zip(&zoning) {
        let slot = z.stratum.map_or(0, usize::from);
        totals[slot].0 += p.weight;
        if !z.commercial {
            totals[slot].1 += p.weight;
        }
    }
    let strata: Vec<AdherenceRow> =
        (1..=6u8).map(|s| AdherenceRow::new(Some(s), totals[s as usize].0, totals[s as usize].1)).collect();
    let zoned: f64 = strata.iter().map(|r| r.firms).sum();
    let outside: f64 = strata.iter().map(|r| r.outside).sum();
    AdherenceReport {
        strata,
        unzoned: AdherenceRow::new(None, totals[0].0, totals[0].1),
        overall: (zoned > 0.0).then(|| outside / zoned),
    }
}

/// Non-adherence rate against distance to the nearest centre.
pub fn nonadherence_vs_distance(
    firms: &PointSet,
    zones: &ZoneMap,
    centers: &[Coord],
    bin_width: f64,
    max_dist: f64,
) -> Result<RadialProfile> {
    if centers.is_empty() {
        return Err(invalid("adherence profile needs at least one centre"));
    }
    let zoning = classify(firms, zones);
    RadialProfile::accumulate(
        bin_width,
        max_dist,
        firms
            .points
            .iter()
            .zip(&zoning)
            .map(|(p, z)| (nearest_distance(&p.coord(), centers), if z.commercial { 0.0 } else { 1.0 }, p.weight)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Polygon, Zone, ZoneAttributes};
    use alloc::vec;

    fn zone(id: &str, poly: Polygon, stratum: Option<u8>, land_use: Option<LandUse>) -> Zone {
        Zone { id: id.into(), polygon: poly, attributes: ZoneAttributes { stratum, land_use, ..Default::default() } }
    }

    /// Stratum 2 covers x in [0, 100); its left half is commercial.
    fn fixture() -> ZoneMap {
        ZoneMap::new(vec![
            zone("com", Polygon::rect(0.0, 0.0, 49.0, 100.0).unwrap(), Some(2), Some(LandUse::CommercialMixed)),
            zone("res", Polygon::rect(51.0, 0.0, 99.0, 100.0).unwrap(), Some(2), Some(LandUse::Other)),
            zone("s5", Polygon::rect(200.0, 0.0, 300.0, 100.0).unwrap(), Some(5), Some(LandUse::Other)),
        ])
        .unwrap()
    }

    #[test]
    fn rate_examples() {
        let zones = fixture();
        let inside = PointSet::new(vec![Point::new(10.0, 10.0), Point::new(20.0, 20.0)]).unwrap();
        assert_eq!(nonadherence_by_stratum(&inside, &zones).strata[1].rate, Some(0.0));
        let outside = PointSet::new(vec![Point::new(60.0, 10.0), Point::new(70.0, 20.0)]).unwrap();
        assert_eq!(nonadherence_by_stratum(&outside, &zones).strata[1].rate, Some(1.0));
        let half = PointSet::new(vec![
            Point::new(10.0, 10.0),
            Point::new(20.0, 20.0),
            Point::new(60.0, 10.0),
            Point::new(70.0, 20.0),
        ])
        .unwrap();
        let r = nonadherence_by_stratum(&half, &zones);
        assert_eq!(r.strata[1].rate, Some(0.5));
        assert_eq!(r.strata[0].rate, None);
    }

    #[test]
    fn unzoned_and_overall() {
        let zones = fixture();
        let pts = PointSet::new(vec![
            Point::new(10.0, 10.0),
            Point::new(60.0, 10.0),
            Point::weighted(250.0, 10.0, 3.0),
            Point::new(1000.0, 1000.0),
        ])
        .unwrap();
        let r = nonadherence_by_stratum(&pts, &zones);
        assert_eq!(r.unzoned.firms, 1.0);
        assert_eq!(r.unzoned.rate, Some(1.0));
        assert_eq!(r.strata[4].firms, 3.0);
        let weighted: f64 = r.strata.iter().filter_map(|s| s.rate.map(|q| q * s.firms)).sum::<f64>()
            / r.strata.iter().map(|s| s.firms).sum::<f64>();
        assert!((r.overall.unwrap() - weighted).abs() < 1e-12);
        assert!((r.overall.unwrap() - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn distance_profile() {
        let zones = fixture();
        let all_in = PointSet::new(vec![Point::new(5.0, 5.0), Point::new(40.0, 90.0)]).unwrap();
        let p = nonadherence_vs_distance(&all_in, &zones, &[Coord::new(0.0, 0.0)], 50.0, 200.0).unwrap();
        assert!(p.bins.iter().all(|b| b.mean.map_or(true, |m| m == 0.0)));
        assert!(p.bins.iter().any(|b| b.mean.is_none()));
        assert!(nonadherence_vs_distance(&all_in, &zones, &[], 50.0, 200.0).is_err());
    }
}
