use std::path::{Path, PathBuf};

use firmscape_core::density::{FieldKind, GridField};
use firmscape_core::geometry::GridSpec;
use firmscape_core::lisa::{LisaResult, Quadrant};
use serde::{Deserialize, Serialize};

use super::{close_csv, csv_writer, num, read_json, write_json, write_row, CsvInput};
use crate::error::{Error, Result};

/// Sidecar metadata for a field CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub grid: GridSpec,
    pub kind: FieldKind,
}

/// `density.csv` -> `density.grid.json`.
pub fn field_header_path(csv: &Path) -> PathBuf {
    csv.with_extension("grid.json")
}

/// Writes `row,col,value` for every cell plus the JSON header next to it.
pub fn write_field(path: &Path, field: &GridField) -> Result<()> {
    write_json(&field_header_path(path), &FieldHeader { grid: *field.grid(), kind: field.kind() })?;
    let grid = field.grid();
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["row", "col", "value"])?;
    for (i, &v) in field.values().iter().enumerate() {
        let c = grid.cell(i);
        write_row(path, &mut w, [c.row.to_string(), c.col.to_string(), num(v)])?;
    }
    close_csv(path, w)
}

/// Reads a field written by [`write_field`]. Every cell must appear exactly once.
pub fn read_field(path: &Path) -> Result<GridField> {
    let header: FieldHeader = read_json(&field_header_path(path))?;
    let grid = header.grid;
    let input = CsvInput::open(path)?;
    let rc = input.require("row")?;
    let cc = input.require("col")?;
    let vc = input.require("value")?;
    let mut values: Vec<Option<f64>> = vec![None; grid.n_cells()];
    input.for_each(|row| {
        let r: usize = row.parse(rc, "row")?;
        let c: usize = row.parse(cc, "col")?;
        if r >= grid.n_rows || c >= grid.n_cols {
            return Err(row.error(format!("cell ({r}, {c}) is outside the grid")));
        }
        let slot = &mut values[r * grid.n_cols + c];
        if slot.is_some() {
            return Err(row.error(format!("cell ({r}, {c}) appears twice")));
        }
        *slot = Some(row.finite(vc, "value")?);
        Ok(())
    })?;
    let missing = values.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        return Err(Error::invalid(format!("{}: {missing} cells have no value", path.display())));
    }
    Ok(GridField::new(grid, values.into_iter().flatten().collect(), header.kind)?)
}

/// LISA output: `row,col,statistic,p_value,quadrant` plus a JSON sidecar
/// holding the grid, permutation count and seed.
pub fn write_lisa(path: &Path, grid: &GridSpec, lisa: &LisaResult) -> Result<()> {
    write_json(
        &field_header_path(path),
        &LisaHeader { grid: *grid, permutations: lisa.permutations, seed: lisa.seed },
    )?;
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["row", "col", "statistic", "p_value", "quadrant"])?;
    for i in 0..lisa.len() {
        let c = grid.cell(i);
        write_row(
            path,
            &mut w,
            [
                c.row.to_string(),
                c.col.to_string(),
                num(lisa.statistics[i]),
                num(lisa.p_values[i]),
                format!("{:?}", lisa.quadrants[i]),
            ],
        )?;
    }
    close_csv(path, w)
}

#[derive(Serialize, Deserialize)]
struct LisaHeader {
    grid: GridSpec,
    permutations: usize,
    seed: u64,
}

pub fn read_lisa(path: &Path) -> Result<(GridSpec, LisaResult)> {
    let header: LisaHeader = read_json(&field_header_path(path))?;
    let n = header.grid.n_cells();
    let input = CsvInput::open(path)?;
    let rc = input.require("row")?;
    let cc = input.require("col")?;
    let sc = input.require("statistic")?;
    let pc = input.require("p_value")?;
    let qc = input.require("quadrant")?;
    let mut cells: Vec<Option<(f64, f64, Quadrant)>> = vec![None; n];
    input.for_each(|row| {
        let r: usize = row.parse(rc, "row")?;
        let c: usize = row.parse(cc, "col")?;
        if r >= header.grid.n_rows || c >= header.grid.n_cols {
            return Err(row.error(format!("cell ({r}, {c}) is outside the grid")));
        }
        let q = match row.str(qc) {
            "HH" => Quadrant::HH,
            "LL" => Quadrant::LL,
            "HL" => Quadrant::HL,
            "LH" => Quadrant::LH,
            other => return Err(row.error(format!("unknown quadrant {other:?}"))),
        };
        let p = row.finite(pc, "p_value")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(row.error("p_value outside [0, 1]"));
        }
        cells[r * header.grid.n_cols + c] = Some((row.finite(sc, "statistic")?, p, q));
        Ok(())
    })?;
    if cells.iter().any(Option::is_none) {
        return Err(Error::invalid(format!("{}: not every cell has a LISA row", path.display())));
    }
    let cells: Vec<_> = cells.into_iter().flatten().collect();
    Ok((
        header.grid,
        LisaResult {
            statistics: cells.iter().map(|c| c.0).collect(),
            p_values: cells.iter().map(|c| c.1).collect(),
            quadrants: cells.iter().map(|c| c.2).collect(),
            permutations: header.permutations,
            seed: header.seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use firmscape_core::geometry::Coord;
    use firmscape_core::lisa::{build_weights, local_moran, Contiguity};

    fn grid() -> GridSpec {
        GridSpec::new(Coord::new(-100.5, 2000.25), 200.0, 7, 5).unwrap()
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("density.csv");
        let raw: Vec<f64> = (0..35).map(|i| ((i * 7919) % 113) as f64 / 7.0 + 1e-17 * i as f64).collect();
        let field = GridField::normalized_density(grid(), raw).unwrap();
        write_field(&p, &field).unwrap();
        assert!(dir.path().join("density.grid.json").exists());
        let back = read_field(&p).unwrap();
        assert_eq!(back, field);
        assert!(back.values().iter().zip(field.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn incomplete_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_field(&p, &GridField::zeros(grid(), FieldKind::Count)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let cut: Vec<&str> = text.lines().take(10).collect();
        std::fs::write(&p, cut.join("\n")).unwrap();
        assert!(read_field(&p).is_err());
    }

    #[test]
    fn lisa_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lisa.csv");
        let g = grid();
        let f = GridField::new(g, (0..35).map(|i| ((i * 37) % 11) as f64).collect(), FieldKind::Statistic).unwrap();
        let r = local_moran(&f, &build_weights(&g, Contiguity::Queen, true), 99, 3).unwrap();
        write_lisa(&p, &g, &r).unwrap();
        let (g2, r2) = read_lisa(&p).unwrap();
        assert_eq!(g2, g);
        assert_eq!(r2, r);
    }
}
