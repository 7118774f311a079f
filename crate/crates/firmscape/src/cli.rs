use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use firmscape_core::compare::{delta_density, radial_profile, DEFAULT_BIN_WIDTH, DEFAULT_MAX_DIST};
use firmscape_core::density::{coefficient_of_variation, rasterize_counts, DEFAULT_BANDWIDTH};
use firmscape_core::econ::{least_squares, rca, sector_association};
use firmscape_core::geometry::{GridSpec, PointSet, DEFAULT_CELL_SIZE};
use firmscape_core::landuse::{nonadherence_by_stratum, nonadherence_vs_distance};
use firmscape_core::lisa::{
    build_dendrogram, build_weights, extract_clusters, ClusterSet, Contiguity, LisaResult, DEFAULT_PERMUTATIONS,
    DEFAULT_P_THRESHOLD,
};
use firmscape_core::survey::{count_metrics, plan_sample_points, CenterMode, DetectorEval, DEFAULT_SPACING};

use crate::error::{Error, Result};
use crate::io::{self, PointFormat};
use crate::parallel::Workers;
use crate::pipeline::{run_config, PipelineConfig, RunOptions};
use crate::synth::{generate_synthetic_city, SyntheticCityConfig};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "FIRMSCAPE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "firmscape",
    version,
    about = "Firm-density mapping, hotspot clusters and industry analytics on city grids"
)]
pub struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel density of a point file on a grid.
    Density(DensityArgs),
    /// Local Moran's I with permutation p-values for a field.
    Lisa(LisaArgs),
    /// Significant high-density clusters.
    Clusters(ClusterArgs),
    /// Cluster nesting across density percentiles.
    Dendrogram(DendrogramArgs),
    /// Density difference and its radial profile around cluster centroids.
    Compare(CompareArgs),
    /// Revealed comparative advantage per zone and industry.
    Rca(FirmArgs),
    /// Distinct industries per zone.
    Diversity(FirmArgs),
    /// Weighted least squares on a table, or per-industry against zone values.
    Regress(RegressArgs),
    /// Share of firms outside commercial land, by stratum and by distance.
    Adherence(AdherenceArgs),
    /// Survey points along a street network.
    SamplePoints(SampleArgs),
    /// Count-based detector metrics from per-image true and predicted counts.
    EvalDetector(EvalArgs),
    /// Detections-to-truth ratios over random disks after thinning.
    Robustness(RobustnessArgs),
    /// Write a synthetic city dataset.
    Synth(SynthArgs),
    /// Run every stage from a configuration file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct PointArgs {
    /// Point file.
    #[arg(long)]
    pub points: PathBuf,
    /// xy_csv, lonlat_csv or grid_counts_csv.
    #[arg(long, default_value = "xy_csv")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Grid cell size in metres.
    #[arg(long = "grid", default_value_t = DEFAULT_CELL_SIZE)]
    pub cell_size: f64,
    /// JSON grid definition; otherwise the padded bounding box of the points.
    #[arg(long)]
    pub grid_spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub input: PointArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
    pub bandwidth: f64,
    /// Output name stem.
    #[arg(long, default_value = "points")]
    pub name: String,
    /// Also write per-cell counts only, for sharing without coordinates.
    #[arg(long)]
    pub cell_counts: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ContiguityArg {
    Queen,
    Rook,
}

impl From<ContiguityArg> for Contiguity {
    fn from(c: ContiguityArg) -> Self {
        match c {
            ContiguityArg::Queen => Contiguity::Queen,
            ContiguityArg::Rook => Contiguity::Rook,
        }
    }
}

#[derive(Debug, Args)]
pub struct PermutationArgs {
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "queen")]
    pub contiguity: ContiguityArg,
}

#[derive(Debug, Args)]
pub struct LisaArgs {
    /// Field CSV (with its `.grid.json` header alongside).
    #[arg(long)]
    pub field: PathBuf,
    #[command(flatten)]
    pub perm: PermutationArgs,
    #[arg(long, default_value = "lisa")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// Precomputed LISA CSV; computed from the field when absent.
    #[arg(long)]
    pub lisa: Option<PathBuf>,
    #[command(flatten)]
    pub perm: PermutationArgs,
    #[arg(long, default_value_t = DEFAULT_P_THRESHOLD)]
    pub p_threshold: f64,
    /// Cells at or above this density percentile are eligible.
    #[arg(long, default_value_t = 0.80)]
    pub density_percentile: f64,
}

#[derive(Debug, Args)]
pub struct DendrogramArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub lisa: Option<PathBuf>,
    #[command(flatten)]
    pub perm: PermutationArgs,
    #[arg(long, default_value_t = DEFAULT_P_THRESHOLD)]
    pub p_threshold: f64,
    /// Ascending density percentiles.
    #[arg(long, value_delimiter = ',', default_value = "0.80,0.85,0.90,0.95,0.99")]
    pub levels: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Density subtracted from.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Cluster JSON whose centroids anchor the radial profile.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_DIST)]
    pub max_dist: f64,
}

#[derive(Debug, Args)]
pub struct FirmArgs {
    /// `zone_id,industry_code,count` table.
    #[arg(long)]
    pub firms: PathBuf,
    /// Aggregate industry codes to this many leading digits first.
    #[arg(long)]
    pub digits: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    /// Table with `x`, `y` and optional `weight` columns.
    #[arg(long, conflicts_with_all = ["firms", "zone_values"])]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "zone_values")]
    pub firms: Option<PathBuf>,
    /// `zone_id,<column>` table of per-zone values.
    #[arg(long, requires = "firms")]
    pub zone_values: Option<PathBuf>,
    #[arg(long, default_value = "mean")]
    pub column: String,
    #[arg(long, default_value_t = 2)]
    pub digits: usize,
    /// Ordinary instead of firm-weighted least squares.
    #[arg(long)]
    pub unweighted: bool,
}

#[derive(Debug, Args)]
pub struct AdherenceArgs {
    #[command(flatten)]
    pub input: PointArgs,
    #[arg(long)]
    pub zones: PathBuf,
    /// Cluster JSON whose centroids anchor the distance profile.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[arg(long)]
    pub grid_spec: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_DIST)]
    pub max_dist: f64,
    #[arg(long, default_value = "points")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Street network JSON.
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    pub spacing: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Table with `truth` and `predicted` columns, one row per image.
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long)]
    pub precision: Option<f64>,
    #[arg(long)]
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CenterArg {
    Bbox,
    DataPoint,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub input: PointArgs,
    #[arg(long)]
    pub grid_spec: Option<PathBuf>,
    /// Probability that a unit of firm weight is detected.
    #[arg(long)]
    pub keep: f64,
    #[arg(long, default_value_t = 1000)]
    pub regions: usize,
    #[arg(long, default_value_t = 500.0)]
    pub radius_min: f64,
    #[arg(long, default_value_t = 1500.0)]
    pub radius_max: f64,
    #[arg(long, value_enum, default_value = "bbox")]
    pub centers: CenterArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Artifact directory; defaults to the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing artifact directory.
    #[arg(long)]
    pub force: bool,
    #[arg(long = "grid")]
    pub cell_size: Option<f64>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub p_threshold: Option<f64>,
    #[arg(long)]
    pub density_percentile: Option<f64>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out_dir;
    let workers = || Workers::new(cli.workers);
    let ensure_out = || fs::create_dir_all(out).map_err(|e| Error::io(out, e));
    match &cli.command {
        Command::Density(a) => {
            let grid_spec = read_grid(a.grid.grid_spec.as_deref())?;
            let points = read_points(&a.input, grid_spec.as_ref())?;
            let grid = match grid_spec {
                Some(g) => g,
                None => padded_grid(&points, a.grid.cell_size)?,
            };
            let density = workers()?.kde(&points, &grid, a.bandwidth).map_err(|e| Error::in_stage("density", e))?;
            ensure_out()?;
            io::write_field(&out.join(format!("density_{}.csv", a.name)), &density)?;
            let raster = rasterize_counts(&points, &grid);
            io::write_field(&out.join(format!("counts_{}.csv", a.name)), &raster.field)?;
            if a.cell_counts {
                io::write_cell_counts(&out.join(format!("cells_{}.csv", a.name)), &points, &grid)?;
            }
            println!("cells {} x {}", grid.n_cols, grid.n_rows);
            println!("cv {}", coefficient_of_variation(&density)?);
            if raster.out_of_grid > 0 {
                eprintln!("notice: {} points outside the grid", raster.out_of_grid);
            }
        }
        Command::Lisa(a) => {
            let field = io::read_field(&a.field)?;
            let w = build_weights(field.grid(), a.perm.contiguity.into(), true);
            let lisa = workers()?
                .local_moran(&field, &w, a.perm.permutations, a.perm.seed)
                .map_err(|e| Error::in_stage("lisa", e))?;
            ensure_out()?;
            io::write_lisa(&out.join(format!("{}.csv", a.name)), field.grid(), &lisa)?;
        }
        Command::Clusters(a) => {
            let field = io::read_field(&a.field)?;
            let lisa = lisa_for(&field, a.lisa.as_deref(), &a.perm, cli.workers)?;
            let set = extract_clusters(&field, &lisa, 1.0 - a.density_percentile, a.p_threshold)
                .map_err(|e| Error::in_stage("clusters", e.into()))?;
            ensure_out()?;
            io::write_cluster_set(&out.join("clusters.json"), &set)?;
            for c in &set.clusters {
                println!(
                    "{} cells={} mass={} centroid=({}, {})",
                    c.label,
                    c.cells.len(),
                    c.mass,
                    c.centroid.x,
                    c.centroid.y
                );
            }
        }
        Command::Dendrogram(a) => {
            let field = io::read_field(&a.field)?;
            let lisa = lisa_for(&field, a.lisa.as_deref(), &a.perm, cli.workers)?;
            let tree = build_dendrogram(&field, &lisa, &a.levels, a.p_threshold)
                .map_err(|e| Error::in_stage("dendrogram", e.into()))?;
            ensure_out()?;
            io::write_dendrogram(&out.join("dendrogram.json"), &tree)?;
            io::write_dendrogram_edges(&out.join("dendrogram_edges.csv"), &tree)?;
        }
        Command::Compare(a) => {
            let fa = io::read_field(&a.a)?;
            let fb = io::read_field(&a.b)?;
            let delta = delta_density(&fa, &fb)?;
            ensure_out()?;
            io::write_field(&out.join("delta.csv"), &delta)?;
            println!("cv_a {}", coefficient_of_variation(&fa)?);
            println!("cv_b {}", coefficient_of_variation(&fb)?);
            if let Some(path) = &a.clusters {
                let set: ClusterSet = io::read_json(path)?;
                if set.is_empty() {
                    return Err(Error::invalid(format!("{} holds no clusters", path.display())));
                }
                let profile = radial_profile(&delta, &set.centroids(), a.bin_width, a.max_dist)?;
                io::write_radial_profile(&out.join("radial_delta.csv"), &profile)?;
                if let Some(k) = profile.argmax() {
                    println!("peak {}..{} m", profile.bins[k].lo, profile.bins[k].hi);
                }
            }
        }
        Command::Rca(a) => {
            let table = firm_table(a)?;
            let m = rca(&table)?;
            ensure_out()?;
            io::write_rca(&out.join("rca.csv"), &table, &m)?;
        }
        Command::Diversity(a) => {
            let table = firm_table(a)?;
            ensure_out()?;
            io::write_diversity(&out.join("diversity.csv"), &table)?;
        }
        Command::Regress(a) => regress(a, out)?,
        Command::Adherence(a) => {
            let grid = read_grid(a.grid_spec.as_deref())?;
            let points = read_points(&a.input, grid.as_ref())?;
            let zones = io::read_zones(&a.zones)?;
            let report = nonadherence_by_stratum(&points, &zones);
            ensure_out()?;
            io::write_adherence(&out.join(format!("adherence_{}.csv", a.name)), &report)?;
            if let Some(path) = &a.clusters {
                let set: ClusterSet = io::read_json(path)?;
                let profile = nonadherence_vs_distance(&points, &zones, &set.centroids(), a.bin_width, a.max_dist)?;
                io::write_radial_profile(&out.join(format!("adherence_distance_{}.csv", a.name)), &profile)?;
            }
            if let Some(rate) = report.overall {
                println!("overall {rate}");
            }
        }
        Command::SamplePoints(a) => {
            let net = io::read_network(&a.network)?;
            let plan = plan_sample_points(&net, a.spacing)?;
            ensure_out()?;
            io::write_sample_plan(&out.join("sample_points.csv"), &plan)?;
            println!("points {}", plan.points.len());
        }
        Command::EvalDetector(a) => {
            let mut eval = read_detector_counts(&a.counts)?;
            eval.precision = a.precision;
            eval.recall = a.recall;
            let m = count_metrics(&eval);
            ensure_out()?;
            io::write_json(&out.join("detector_metrics.json"), &m)?;
            println!("c_f {}", m.c_f.map(|v| v.to_string()).unwrap_or_else(|| "undefined".into()));
            println!("err_0 {}", m.err_0.map(|v| v.to_string()).unwrap_or_else(|| "undefined".into()));
        }
        Command::Robustness(a) => {
            let grid = read_grid(a.grid_spec.as_deref())?;
            let points = read_points(&a.input, grid.as_ref())?;
            let mode = match a.centers {
                CenterArg::Bbox => CenterMode::BBox,
                CenterArg::DataPoint => CenterMode::DataPoint,
            };
            let r = workers()?
                .omission_robustness(&points, a.keep, a.regions, (a.radius_min, a.radius_max), mode, a.seed)
                .map_err(|e| match e {
                    Error::Core(firmscape_core::Error::InvalidInput(_)) => e,
                    e => Error::in_stage("robustness", e),
                })?;
            ensure_out()?;
            io::write_json(&out.join("robustness.json"), &r)?;
            println!("mean {}", r.mean);
            println!("std {}", r.std);
        }
        Command::Synth(a) => {
            let mut cfg: SyntheticCityConfig = io::read_json(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let data = generate_synthetic_city(&cfg)?;
            ensure_out()?;
            data.write(out)?;
            println!(
                "visible {} registered {} registered_commercial {}",
                data.visible.len(),
                data.registered.len(),
                data.registered_commercial.len()
            );
        }
        Command::Pipeline(a) => {
            let mut cfg = PipelineConfig::load(&a.config)?;
            let p = &mut cfg.params;
            if let Some(v) = a.cell_size {
                p.cell_size = v;
            }
            if let Some(v) = a.bandwidth {
                p.bandwidth = v;
            }
            if let Some(v) = a.p_threshold {
                p.p_threshold = v;
            }
            if let Some(v) = a.density_percentile {
                p.density_percentile = v;
            }
            if let Some(v) = a.permutations {
                p.permutations = v;
            }
            if let Some(v) = a.seed {
                p.seed = v;
            }
            let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
            let target = a.out.clone().unwrap_or_else(|| out.clone());
            let opts = RunOptions { workers: cli.workers, overwrite: a.force };
            let summary = run_config(&cfg, &base, &target, &opts)?;
            println!("clusters {}", summary.clusters);
            println!("manifest {}", summary.manifest_sha256);
        }
    }
    Ok(())
}

fn read_grid(path: Option<&Path>) -> Result<Option<GridSpec>> {
    path.map(io::read_json::<GridSpec>).transpose()
}

fn read_points(a: &PointArgs, grid: Option<&GridSpec>) -> Result<PointSet> {
    let format: PointFormat = a.format.parse()?;
    io::load_points(&a.points, format, grid)
}

fn padded_grid(points: &PointSet, cell_size: f64) -> Result<GridSpec> {
    let bbox = points.bbox().ok_or_else(|| Error::invalid("no points"))?;
    Ok(GridSpec::covering(&bbox.expand(cell_size), cell_size)?)
}

fn lisa_for(
    field: &firmscape_core::density::GridField,
    path: Option<&Path>,
    perm: &PermutationArgs,
    workers: usize,
) -> Result<LisaResult> {
    match path {
        Some(p) => {
            let (grid, lisa) = io::read_lisa(p)?;
            if grid != *field.grid() {
                return Err(Error::invalid(format!("{} was computed on a different grid", p.display())));
            }
            Ok(lisa)
        }
        None => {
            let w = build_weights(field.grid(), perm.contiguity.into(), true);
            Workers::new(workers)?
                .local_moran(field, &w, perm.permutations, perm.seed)
                .map_err(|e| Error::in_stage("lisa", e))
        }
    }
}

fn firm_table(a: &FirmArgs) -> Result<firmscape_core::econ::FirmTable> {
    let t = io::read_firm_table(&a.firms)?;
    Ok(match a.digits {
        Some(d) => t.aggregate(d)?,
        None => t,
    })
}

fn regress(a: &RegressArgs, out: &Path) -> Result<()> {
    let ensure_out = || fs::create_dir_all(out).map_err(|e| Error::io(out, e));
    if let Some(path) = &a.data {
        let input = io::CsvInput::open(path)?;
        let xc = input.require("x")?;
        let yc = input.require("y")?;
        let wc = input.column("weight");
        let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
        input.for_each(|row| {
            x.push(row.finite(xc, "x")?);
            y.push(row.finite(yc, "y")?);
            w.push(row.optional_finite(wc, "weight")?.unwrap_or(1.0));
            Ok(())
        })?;
        let weights = (wc.is_some() && !a.unweighted).then_some(w.as_slice());
        let report = least_squares(&x, &y, weights)?;
        ensure_out()?;
        io::write_json(&out.join("regression.json"), &report)?;
        println!("slope {} intercept {} p {} r2 {}", report.slope, report.intercept, report.p_value, report.r_squared);
        return Ok(());
    }
    let (Some(firms), Some(values)) = (&a.firms, &a.zone_values) else {
        return Err(Error::invalid("regress needs --data, or --firms with --zone-values"));
    };
    let table = io::read_firm_table(firms)?;
    let y = io::read_zone_values(values, &a.column)?;
    let assoc = sector_association(&table, &y, a.digits, !a.unweighted)?;
    ensure_out()?;
    io::write_sector_table(&out.join("sectors.csv"), &assoc)?;
    let (top, bottom) = assoc.top_bottom(6);
    for s in top.iter().chain(bottom) {
        println!("{} slope {} p {}", s.industry, s.report.slope, s.report.p_value);
    }
    Ok(())
}

fn read_detector_counts(path: &Path) -> Result<DetectorEval> {
    let input = io::CsvInput::open(path)?;
    let tc = input.require("truth")?;
    let pc = input.require("predicted")?;
    let (mut truth, mut predicted) = (Vec::new(), Vec::new());
    input.for_each(|row| {
        truth.push(row.parse(tc, "truth")?);
        predicted.push(row.parse(pc, "predicted")?);
        Ok(())
    })?;
    Ok(DetectorEval::new(truth, predicted)?)
}
