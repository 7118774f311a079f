use std::io::Write;
use std::path::Path;

use firmscape_core::compare::{RadialProfile, ZoneMean};
use firmscape_core::econ::{diversity, FirmTable, RcaMatrix, SectorAssociation};
use firmscape_core::landuse::AdherenceReport;
use firmscape_core::lisa::{ClusterSet, Dendrogram};
use serde::Serialize;

use super::{close_csv, create, csv_writer, finish, num, opt_num, write_row};
use crate::error::{Error, Result};

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn write_cluster_set(path: &Path, clusters: &ClusterSet) -> Result<()> {
    write_json(path, clusters)
}

pub fn write_dendrogram(path: &Path, dendrogram: &Dendrogram) -> Result<()> {
    write_json(path, dendrogram)
}

/// One row per dendrogram node with its parent, for plotting.
pub fn write_dendrogram_edges(path: &Path, dendrogram: &Dendrogram) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(
        path,
        &mut w,
        [
            "node",
            "label",
            "level",
            "threshold",
            "parent",
            "parent_label",
            "n_cells",
            "mass",
            "centroid_x",
            "centroid_y",
        ],
    )?;
    for (k, n) in dendrogram.nodes.iter().enumerate() {
        let (parent, parent_label) = match n.parent {
            Some(p) => (p.to_string(), dendrogram.nodes[p].cluster.label.clone()),
            None => (String::new(), String::new()),
        };
        write_row(
            path,
            &mut w,
            [
                k.to_string(),
                n.cluster.label.clone(),
                n.level.to_string(),
                num(n.threshold),
                parent,
                parent_label,
                n.cluster.cells.len().to_string(),
                num(n.cluster.mass),
                num(n.cluster.centroid.x),
                num(n.cluster.centroid.y),
            ],
        )?;
    }
    close_csv(path, w)
}

/// `bin_lo,bin_hi,mean,n_cells`; empty bins leave `mean` blank.
pub fn write_radial_profile(path: &Path, profile: &RadialProfile) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["bin_lo", "bin_hi", "mean", "n_cells"])?;
    for b in &profile.bins {
        write_row(path, &mut w, [num(b.lo), num(b.hi), opt_num(b.mean), num(b.count)])?;
    }
    close_csv(path, w)
}

/// Rows for strata 1..=6, then `unzoned`, then `all` (stratum-zoned firms together).
pub fn write_adherence(path: &Path, report: &AdherenceReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["stratum", "firms", "outside", "rate"])?;
    for row in &report.strata {
        let s = row.stratum.map(|s| s.to_string()).unwrap_or_default();
        write_row(path, &mut w, [s, num(row.firms), num(row.outside), opt_num(row.rate)])?;
    }
    let u = &report.unzoned;
    write_row(path, &mut w, ["unzoned".to_string(), num(u.firms), num(u.outside), opt_num(u.rate)])?;
    let firms: f64 = report.strata.iter().map(|r| r.firms).sum();
    let outside: f64 = report.strata.iter().map(|r| r.outside).sum();
    write_row(path, &mut w, ["all".to_string(), num(firms), num(outside), opt_num(report.overall)])?;
    close_csv(path, w)
}

/// `zone_id,industry_code,count,rca`, blank `rca` where undefined.
pub fn write_rca(path: &Path, table: &FirmTable, rca: &RcaMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["zone_id", "industry_code", "count", "rca"])?;
    for (z, zone) in table.zones().iter().enumerate() {
        for (i, code) in table.industries().iter().enumerate() {
            write_row(
                path,
                &mut w,
                [zone.clone(), code.clone(), table.count(z, i).to_string(), opt_num(rca.get(z, i))],
            )?;
        }
    }
    close_csv(path, w)
}

pub fn write_diversity(path: &Path, table: &FirmTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["zone_id", "firms", "diversity"])?;
    for (z, zone) in table.zones().iter().enumerate() {
        let d = diversity(table, zone)?;
        write_row(path, &mut w, [zone.clone(), table.zone_total(z).to_string(), d.to_string()])?;
    }
    close_csv(path, w)
}

/// Ranked per-industry regressions; skipped industries follow with a note.
pub fn write_sector_table(path: &Path, assoc: &SectorAssociation) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(
        path,
        &mut w,
        ["rank", "industry", "slope", "intercept", "se_slope", "t", "p_value", "r_squared", "n", "weighted", "note"],
    )?;
    for (k, s) in assoc.ranked.iter().enumerate() {
        let r = &s.report;
        write_row(
            path,
            &mut w,
            [
                (k + 1).to_string(),
                s.industry.clone(),
                num(r.slope),
                num(r.intercept),
                num(r.se_slope),
                num(r.t),
                num(r.p_value),
                num(r.r_squared),
                r.n.to_string(),
                r.weighted.to_string(),
                String::new(),
            ],
        )?;
    }
    for s in &assoc.skipped {
        let mut row = vec![String::new(), s.industry.clone()];
        row.extend(std::iter::repeat(String::new()).take(8));
        row.push(format!("skipped: {}", s.reason));
        write_row(path, &mut w, &row)?;
    }
    close_csv(path, w)
}

pub fn write_zone_means(path: &Path, means: &[ZoneMean]) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["zone_id", "mean", "n_cells"])?;
    for m in means {
        write_row(path, &mut w, [m.zone_id.clone(), opt_num(m.mean), m.n_cells.to_string()])?;
    }
    close_csv(path, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use firmscape_core::compare::RadialBin;

    #[test]
    fn empty_bins_are_blank_not_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("radial.csv");
        let profile = RadialProfile {
            bins: vec![
                RadialBin { lo: 0.0, hi: 250.0, mean: Some(0.5), count: 4.0 },
                RadialBin { lo: 250.0, hi: 500.0, mean: None, count: 0.0 },
            ],
        };
        write_radial_profile(&p, &profile).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "bin_lo,bin_hi,mean,n_cells\n0,250,0.5,4\n250,500,,0\n");
    }

    #[test]
    fn json_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_json(&p, &serde_json::json!({"b": 1, "a": [0.1, 2.5e-300]})).unwrap();
        let first = std::fs::read(&p).unwrap();
        write_json(&p, &serde_json::json!({"b": 1, "a": [0.1, 2.5e-300]})).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
        assert!(first.ends_with(b"\n"));
    }
}
