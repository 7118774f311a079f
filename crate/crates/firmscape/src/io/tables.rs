use std::collections::BTreeMap;
use std::path::Path;

use firmscape_core::econ::FirmTable;

use super::{close_csv, csv_writer, write_row, CsvInput};
use crate::error::Result;

/// Writes `zone_id,industry_code,count`. Zones without firms get a single
/// row with an empty code and count 0 so they survive a reload.
pub fn write_firm_table(path: &Path, table: &FirmTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["zone_id", "industry_code", "count"])?;
    for (z, zone) in table.zones().iter().enumerate() {
        if table.zone_total(z) == 0 {
            write_row(path, &mut w, [zone.as_str(), "", "0"])?;
            continue;
        }
        for (i, code) in table.industries().iter().enumerate() {
            let c = table.count(z, i);
            if c > 0 {
                write_row(path, &mut w, [zone.as_str(), code.as_str(), &c.to_string()])?;
            }
        }
    }
    close_csv(path, w)
}

/// Reads `zone_id,industry_code,count`. Repeated pairs are summed.
pub fn read_firm_table(path: &Path) -> Result<FirmTable> {
    let input = CsvInput::open(path)?;
    let zc = input.require("zone_id")?;
    let ic = input.require("industry_code")?;
    let nc = input.require("count")?;
    let mut zones: Vec<String> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut records = Vec::new();
    input.for_each(|row| {
        let zone = row.str(zc);
        if zone.is_empty() {
            return Err(row.error("empty zone_id"));
        }
        let count: u64 = row.parse(nc, "count")?;
        if seen.insert(zone.to_string()) {
            zones.push(zone.to_string());
        }
        if count > 0 {
            let code = row.str(ic);
            if code.is_empty() {
                return Err(row.error("empty industry_code with a positive count"));
            }
            records.push((zone.to_string(), code.to_string(), count));
        }
        Ok(())
    })?;
    Ok(FirmTable::with_zones(zones.iter(), records))
}

/// Reads a per-zone scalar table with columns `zone_id` and `column`.
pub fn read_zone_values(path: &Path, column: &str) -> Result<BTreeMap<String, f64>> {
    let input = CsvInput::open(path)?;
    let zc = input.require("zone_id")?;
    let vc = input.require(column)?;
    let mut out = BTreeMap::new();
    input.for_each(|row| {
        let zone = row.str(zc).to_string();
        if let Some(v) = row.optional_finite(Some(vc), column)? {
            if out.insert(zone.clone(), v).is_some() {
                return Err(row.error(format!("zone {zone:?} listed twice")));
            }
        }
        Ok(())
    })?;
    Ok(out)
}
