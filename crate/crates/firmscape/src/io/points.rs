use std::fmt;
use std::path::Path;
use std::str::FromStr;

use firmscape_core::density::rasterize_counts;
use firmscape_core::geometry::{Equirectangular, GridSpec, Point, PointSet};

use super::{close_csv, csv_writer, num, write_row, CsvInput};
use crate::error::{Error, Result};

/// Supported point file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    /// `x,y[,weight][,industry]` in planar metres.
    XyCsv,
    /// `lon,lat[,weight][,industry]` in degrees, projected about the file's centroid.
    LonLatCsv,
    /// `row,col,count` against a known grid; each cell becomes a weighted point at its centre.
    GridCountsCsv,
}

impl FromStr for PointFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xy_csv" | "xy" => Ok(PointFormat::XyCsv),
            "lonlat_csv" | "lonlat" => Ok(PointFormat::LonLatCsv),
            "grid_counts_csv" | "grid_counts" => Ok(PointFormat::GridCountsCsv),
            other => Err(Error::invalid(format!(
                "unknown point format {other:?} (expected xy_csv, lonlat_csv or grid_counts_csv)"
            ))),
        }
    }
}

impl fmt::Display for PointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointFormat::XyCsv => "xy_csv",
            PointFormat::LonLatCsv => "lonlat_csv",
            PointFormat::GridCountsCsv => "grid_counts_csv",
        })
    }
}

const CODE_COLUMNS: [&str; 3] = ["industry", "industry_code", "code"];

/// Reads a point file. `grid` is required for [`PointFormat::GridCountsCsv`].
pub fn load_points(path: &Path, format: PointFormat, grid: Option<&GridSpec>) -> Result<PointSet> {
    let (points, codes) = match format {
        PointFormat::XyCsv => read_coordinates(path, "x", "y")?,
        PointFormat::LonLatCsv => {
            let (raw, codes) = read_coordinates(path, "lon", "lat")?;
            let lonlat: Vec<(f64, f64)> = raw.iter().map(|p| (p.x, p.y)).collect();
            let proj = Equirectangular::about_centroid(&lonlat)?;
            let projected = raw
                .into_iter()
                .map(|p| {
                    let c = proj.project(p.x, p.y);
                    Point::weighted(c.x, c.y, p.weight)
                })
                .collect();
            (projected, codes)
        }
        PointFormat::GridCountsCsv => {
            let grid = grid.ok_or_else(|| Error::invalid("grid_counts_csv input needs a grid"))?;
            (read_grid_counts(path, grid)?, None)
        }
    };
    Ok(match codes {
        Some(codes) => PointSet::with_codes(points, codes)?,
        None => PointSet::new(points)?,
    })
}

type Coordinates = (Vec<Point>, Option<Vec<String>>);

fn read_coordinates(path: &Path, xname: &str, yname: &str) -> Result<Coordinates> {
    let input = CsvInput::open(path)?;
    let xc = input.require(xname)?;
    let yc = input.require(yname)?;
    let wc = input.column("weight");
    let cc = CODE_COLUMNS.iter().find_map(|c| input.column(c));
    let mut points = Vec::new();
    let mut codes = cc.map(|_| Vec::new());
    input.for_each(|row| {
        let x = row.finite(xc, xname)?;
        let y = row.finite(yc, yname)?;
        let w = row.optional_finite(wc, "weight")?.unwrap_or(1.0);
        if w < 0.0 {
            return Err(row.error("weight is negative"));
        }
        points.push(Point::weighted(x, y, w));
        if let (Some(col), Some(out)) = (cc, codes.as_mut()) {
            out.push(row.str(col).to_string());
        }
        Ok(())
    })?;
    Ok((points, codes))
}

fn read_grid_counts(path: &Path, grid: &GridSpec) -> Result<Vec<Point>> {
    let input = CsvInput::open(path)?;
    let rc = input.require("row")?;
    let cc = input.require("col")?;
    let nc = input.require("count")?;
    let mut points = Vec::new();
    input.for_each(|row| {
        let r: usize = row.parse(rc, "row")?;
        let c: usize = row.parse(cc, "col")?;
        let n = row.finite(nc, "count")?;
        if r >= grid.n_rows || c >= grid.n_cols {
            return Err(row.error(format!("cell ({r}, {c}) is outside the {}x{} grid", grid.n_rows, grid.n_cols)));
        }
        if n < 0.0 {
            return Err(row.error("count is negative"));
        }
        let centre = grid.cell_center(r * grid.n_cols + c);
        points.push(Point::weighted(centre.x, centre.y, n));
        Ok(())
    })?;
    Ok(points)
}

/// Writes `x,y,weight[,industry]`.
pub fn write_points(path: &Path, points: &PointSet) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header: &[&str] =
        if points.codes.is_some() { &["x", "y", "weight", "industry"] } else { &["x", "y", "weight"] };
    write_row(path, &mut w, header)?;
    for (i, p) in points.points.iter().enumerate() {
        let mut row = vec![num(p.x), num(p.y), num(p.weight)];
        if let Some(codes) = &points.codes {
            row.push(codes[i].clone());
        }
        write_row(path, &mut w, &row)?;
    }
    close_csv(path, w)
}

/// Privacy export: aggregates `points` to per-cell counts and writes
/// `row,col,count` for non-empty cells. Returns the number of points that
/// fell outside the grid and were dropped.
pub fn write_cell_counts(path: &Path, points: &PointSet, grid: &GridSpec) -> Result<usize> {
    let raster = rasterize_counts(points, grid);
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["row", "col", "count"])?;
    for (i, &v) in raster.field.values().iter().enumerate() {
        if v > 0.0 {
            let cell = grid.cell(i);
            write_row(path, &mut w, [cell.row.to_string(), cell.col.to_string(), num(v)])?;
        }
    }
    close_csv(path, w)?;
    Ok(raster.out_of_grid)
}

/// The shipped street-commerce code list.
pub const DEFAULT_STREET_COMMERCE_CODES: &str = include_str!("../../assets/street_commerce_codes.txt");

/// Parses a code list: one code per line, `#` comments, blank lines ignored.
pub fn parse_code_list(text: &str) -> Result<Vec<String>> {
    let mut codes = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let code = line.split('#').next().unwrap_or("").trim();
        if code.is_empty() {
            continue;
        }
        if !code.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(Error::invalid(format!("line {}: bad industry code {code:?}", n + 1)));
        }
        codes.push(code.to_string());
    }
    if codes.is_empty() {
        return Err(Error::invalid("industry code list is empty"));
    }
    Ok(codes)
}

/// Reads a code list file, or the shipped default when `path` is `None`.
pub fn read_code_list(path: Option<&Path>) -> Result<Vec<String>> {
    match path {
        Some(p) => parse_code_list(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => parse_code_list(DEFAULT_STREET_COMMERCE_CODES),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use firmscape_core::geometry::Coord;
    use std::fs;

    #[test]
    fn xy_rows_become_unit_points() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        fs::write(&p, "x,y\n1,2\n3.5,4\n-1e3,0\n").unwrap();
        let pts = load_points(&p, PointFormat::XyCsv, None).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.points.iter().all(|q| q.weight == 1.0));
        assert_eq!(pts.points[2].x, -1000.0);
        assert!(pts.codes.is_none());
    }

    #[test]
    fn grid_count_row_is_a_weighted_centre() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        fs::write(&p, "row,col,count\n2,1,7\n").unwrap();
        let grid = GridSpec::new(Coord::new(0.0, 0.0), 200.0, 3, 3).unwrap();
        let pts = load_points(&p, PointFormat::GridCountsCsv, Some(&grid)).unwrap();
        assert_eq!(pts.points, vec![Point::weighted(300.0, 500.0, 7.0)]);
        assert!(load_points(&p, PointFormat::GridCountsCsv, None).is_err());
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        fs::write(&p, "x,z\n1,2\n").unwrap();
        let err = load_points(&p, PointFormat::XyCsv, None).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn { column, .. } if column == "y"));
        assert!(err.to_string().contains("`y`"));
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        fs::write(&p, "x,y\n1,2\n3,abc\n").unwrap();
        match load_points(&p, PointFormat::XyCsv, None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        fs::write(&p, "x,y\n1,2\n3\n").unwrap();
        assert!(matches!(load_points(&p, PointFormat::XyCsv, None), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn unknown_format_is_invalid_input() {
        let e = "shapefile".parse::<PointFormat>().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        for f in [PointFormat::XyCsv, PointFormat::LonLatCsv, PointFormat::GridCountsCsv] {
            assert_eq!(f.to_string().parse::<PointFormat>().unwrap(), f);
        }
    }

    #[test]
    fn lonlat_is_projected_about_centroid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ll.csv");
        fs::write(&p, "lon,lat,weight,industry\n-75.57,6.25,2,4711\n-75.56,6.25,1,5611\n").unwrap();
        let pts = load_points(&p, PointFormat::LonLatCsv, None).unwrap();
        assert!((pts.points[0].x + pts.points[1].x).abs() < 1e-6);
        let d = pts.points[1].x - pts.points[0].x;
        assert!((d - 1105.7).abs() < 2.0, "{d}");
        assert_eq!(pts.codes.unwrap(), vec!["4711".to_string(), "5611".to_string()]);
    }

    #[test]
    fn points_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let pts = PointSet::with_codes(
            vec![Point::weighted(0.1 + 0.2, 1.0 / 3.0, 2.5e-7), Point::weighted(-1e300, 5e-324, 1.0)],
            vec!["47,11".into(), "x".into()],
        )
        .unwrap();
        write_points(&p, &pts).unwrap();
        assert_eq!(load_points(&p, PointFormat::XyCsv, None).unwrap(), pts);
    }

    #[test]
    fn cell_counts_preserve_totals() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let grid = GridSpec::new(Coord::new(0.0, 0.0), 200.0, 4, 4).unwrap();
        let pts =
            PointSet::new((0..50).map(|i| Point::weighted((i * 13 % 800) as f64, (i * 7 % 800) as f64, 1.5)).collect())
                .unwrap();
        assert_eq!(write_cell_counts(&p, &pts, &grid).unwrap(), 0);
        let back = load_points(&p, PointFormat::GridCountsCsv, Some(&grid)).unwrap();
        assert_eq!(back.total_weight(), pts.total_weight());
    }

    #[test]
    fn shipped_code_list_parses() {
        let codes = read_code_list(None).unwrap();
        assert!(codes.iter().any(|c| c == "4711"));
        assert!(codes.iter().all(|c| c.len() == 4));
        assert!(parse_code_list("# nothing\n\n").is_err());
        assert!(parse_code_list("47 11").is_err());
    }
}
