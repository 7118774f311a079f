//! End-to-end runs: density, LISA clusters, density comparison, industry
//! analytics and land-use adherence, written to one artifact directory with
//! a manifest.
//!
//! The run writes into a hidden sibling directory and renames it into place
//! only when every stage succeeded.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use firmscape_core::compare::{delta_density, radial_profile, zone_mean, DEFAULT_BIN_WIDTH, DEFAULT_MAX_DIST};
use firmscape_core::density::{coefficient_of_variation, rasterize_counts, top_share, GridField, DEFAULT_BANDWIDTH};
use firmscape_core::econ::{diversity, least_squares, rca, sector_association, FirmTable, RegressionReport};
use firmscape_core::geometry::{Coord, GridSpec, PointSet, ZoneMap, DEFAULT_CELL_SIZE};
use firmscape_core::landuse::{nonadherence_by_stratum, nonadherence_vs_distance};
use firmscape_core::lisa::{
    build_dendrogram, build_weights, extract_clusters, ClusterSet, Contiguity, DEFAULT_PERMUTATIONS,
    DEFAULT_P_THRESHOLD,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{self, PointFormat};
use crate::parallel::Workers;
use crate::synth::{generate_synthetic_city, tabulate_firms, Dataset, SyntheticCityConfig};

/// A pipeline configuration file. Exactly one of `synthetic` and `inputs` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub synthetic: Option<SyntheticCityConfig>,
    #[serde(default)]
    pub inputs: Option<Inputs>,
    #[serde(default)]
    pub params: Params,
}

/// File inputs; relative paths resolve against the configuration file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub visible: PointInput,
    #[serde(default)]
    pub registered: Option<PointInput>,
    /// Defaults to the registered firms filtered by the code list.
    #[serde(default)]
    pub registered_commercial: Option<PointInput>,
    /// `zone_id,industry_code,count`; defaults to tabulating coded registered firms by zone.
    #[serde(default)]
    pub firms: Option<PathBuf>,
    #[serde(default)]
    pub zones: Option<PathBuf>,
    /// Street-commerce code list; the shipped list when absent.
    #[serde(default)]
    pub commercial_codes: Option<PathBuf>,
    /// Explicit grid; otherwise the data bounding box padded by one cell.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointInput {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_format() -> String {
    "xy_csv".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub cell_size: f64,
    pub bandwidth: f64,
    pub p_threshold: f64,
    /// Cells at or above this density percentile are eligible for clusters.
    pub density_percentile: f64,
    pub permutations: usize,
    pub seed: u64,
    pub contiguity: Contiguity,
    /// Percentile levels of the cluster dendrogram, ascending.
    pub dendrogram_levels: Vec<f64>,
    pub bin_width: f64,
    pub max_dist: f64,
    /// Digit level of the per-sector regressions.
    pub sector_digits: usize,
    /// Fractions of densest cells for the concentration report.
    pub top_shares: Vec<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            cell_size: DEFAULT_CELL_SIZE,
            bandwidth: DEFAULT_BANDWIDTH,
            p_threshold: DEFAULT_P_THRESHOLD,
            density_percentile: 0.80,
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            contiguity: Contiguity::Queen,
            dendrogram_levels: vec![0.80, 0.85, 0.90, 0.95, 0.99],
            bin_width: DEFAULT_BIN_WIDTH,
            max_dist: DEFAULT_MAX_DIST,
            sector_digits: 2,
            top_shares: vec![0.01, 0.05, 0.10],
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive")))
            }
        };
        positive("cell_size", self.cell_size)?;
        positive("bandwidth", self.bandwidth)?;
        positive("bin_width", self.bin_width)?;
        positive("max_dist", self.max_dist)?;
        if !(self.p_threshold > 0.0 && self.p_threshold <= 1.0) {
            return Err(Error::invalid("p_threshold must lie in (0, 1]"));
        }
        if !(self.density_percentile >= 0.0 && self.density_percentile < 1.0) {
            return Err(Error::invalid("density_percentile must lie in [0, 1)"));
        }
        if self.top_shares.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::invalid("top_shares must lie in (0, 1]"));
        }
        if self.sector_digits == 0 {
            return Err(Error::invalid("sector_digits must be at least 1"));
        }
        Ok(())
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `0` uses all available cores.
    pub workers: usize,
    /// Replace an existing output directory.
    pub overwrite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub out_dir: PathBuf,
    /// SHA-256 of `manifest.json`.
    pub manifest_sha256: String,
    /// Cluster count of the visible-firm density at the configured percentile.
    pub clusters: usize,
    pub notices: Vec<String>,
}

type ZoneCovariate = fn(&firmscape_core::geometry::Zone) -> Option<f64>;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Runs the configuration at `config_path`, writing artifacts to `out_dir`.
pub fn run_pipeline(config_path: &Path, out_dir: &Path, opts: &RunOptions) -> Result<PipelineSummary> {
    let cfg = PipelineConfig::load(config_path)?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_config(&cfg, &base, out_dir, opts)
}

pub fn run_config(cfg: &PipelineConfig, base: &Path, out_dir: &Path, opts: &RunOptions) -> Result<PipelineSummary> {
    cfg.params.validate()?;
    if out_dir.exists() && !opts.overwrite && fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?.next().is_some()
    {
        return Err(Error::invalid(format!("{} exists and is not empty", out_dir.display())));
    }
    let workers = Workers::new(opts.workers)?;
    let dataset = load_dataset(cfg, base)?;

    let staging = staging_dir(out_dir)?;
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let result = Run { cfg, dataset: &dataset, workers: &workers, dir: &staging, notices: Vec::new() }.execute();
    let (clusters, notices) = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    let manifest = fs::read(staging.join(MANIFEST_FILE)).map_err(|e| Error::io(staging.join(MANIFEST_FILE), e))?;
    if out_dir.exists() {
        fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    fs::rename(&staging, out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(PipelineSummary {
        out_dir: out_dir.to_path_buf(),
        manifest_sha256: hex::encode(Sha256::digest(&manifest)),
        clusters,
        notices,
    })
}

fn staging_dir(out_dir: &Path) -> Result<PathBuf> {
    let name = out_dir
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a usable output directory", out_dir.display())))?;
    let parent = out_dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    Ok(parent.join(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id())))
}

fn load_dataset(cfg: &PipelineConfig, base: &Path) -> Result<Dataset> {
    match (&cfg.synthetic, &cfg.inputs) {
        (Some(s), None) => {
            let mut d = generate_synthetic_city(s)?;
            if d.grid.cell_size != cfg.params.cell_size {
                d.grid = GridSpec::covering(&s.extent, cfg.params.cell_size)?;
            }
            Ok(d)
        }
        (None, Some(inputs)) => load_inputs(inputs, base, cfg.params.cell_size),
        _ => Err(Error::invalid("configuration needs exactly one of `synthetic` and `inputs`")),
    }
}

fn load_inputs(inputs: &Inputs, base: &Path, cell_size: f64) -> Result<Dataset> {
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let read = |input: &PointInput| -> Result<PointSet> {
        let format: PointFormat = input.format.parse()?;
        io::load_points(&resolve(&input.path), format, inputs.grid.as_ref())
    };
    let visible = read(&inputs.visible)?;
    let registered = inputs.registered.as_ref().map(read).transpose()?.unwrap_or_default();
    let registered_commercial = match &inputs.registered_commercial {
        Some(input) => read(input)?,
        None if registered.codes.is_some() => {
            let list = io::read_code_list(inputs.commercial_codes.as_deref().map(resolve).as_deref())?;
            firmscape_core::econ::filter_points(&registered, &list)?.subset
        }
        None => PointSet::default(),
    };
    let zones = inputs.zones.as_deref().map(|p| io::read_zones(&resolve(p))).transpose()?;
    let firms = match (&inputs.firms, &zones) {
        (Some(p), _) => io::read_firm_table(&resolve(p))?,
        (None, Some(z)) if registered.codes.is_some() => tabulate_firms(&registered, z)?,
        _ => FirmTable::default(),
    };
    let grid = match inputs.grid {
        Some(g) => g,
        None => {
            let bbox = [&visible, &registered, &registered_commercial]
                .iter()
                .filter_map(|s| s.bbox())
                .reduce(|a, b| {
                    firmscape_core::geometry::BBox::new(
                        a.min_x.min(b.min_x),
                        a.min_y.min(b.min_y),
                        a.max_x.max(b.max_x),
                        a.max_y.max(b.max_y),
                    )
                })
                .ok_or_else(|| Error::invalid("no input points"))?;
            GridSpec::covering(&bbox.expand(cell_size), cell_size)?
        }
    };
    Ok(Dataset { grid, visible, registered, registered_commercial, firms, zones })
}

/// Per-population cluster results carried between stages.
struct Clustered {
    name: &'static str,
    clusters: ClusterSet,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    dataset: &'a Dataset,
    workers: &'a Workers,
    dir: &'a Path,
    notices: Vec<String>,
}

#[derive(Serialize)]
struct StageRecord {
    name: &'static str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    notice: Option<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    params: &'a Params,
    seeds: BTreeMap<&'static str, u64>,
    grid: GridSpec,
    inputs: BTreeMap<&'static str, usize>,
    stages: Vec<StageRecord>,
    clusters: BTreeMap<&'static str, ClusterSummary>,
    files: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct ClusterSummary {
    count: usize,
    labels: Vec<String>,
    top_fraction: f64,
    p_threshold: f64,
    per_level: Vec<(f64, usize)>,
}

#[derive(Serialize)]
struct Concentration {
    population: &'static str,
    firms: f64,
    cv: f64,
    top_shares: Vec<ShareRow>,
}

#[derive(Serialize)]
struct ShareRow {
    fraction: f64,
    n_cells: usize,
    share: f64,
}

#[derive(Serialize)]
struct NamedRegression {
    name: String,
    weighted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<RegressionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped: Option<String>,
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::in_stage(name, e))
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn notice(&mut self, stages: &mut Vec<StageRecord>, name: &'static str, msg: String) {
        eprintln!("notice: {msg}");
        self.notices.push(msg.clone());
        stages.push(StageRecord { name, status: "skipped", notice: Some(msg) });
    }

    fn execute(mut self) -> Result<(usize, Vec<String>)> {
        let p = self.cfg.params.clone();
        let d = self.dataset;
        let grid = d.grid;
        let mut stages = Vec::new();
        let mut summaries = BTreeMap::new();

        if self.cfg.synthetic.is_some() {
            let data = self.path("data");
            stage("data", || {
                fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))?;
                d.write(&data)
            })?;
        }

        let populations: Vec<(&'static str, &PointSet)> = [
            ("visible", &d.visible),
            ("registered_commercial", &d.registered_commercial),
            ("registered", &d.registered),
        ]
        .into_iter()
        .filter(|(_, s)| s.total_weight() > 0.0)
        .collect();
        if !populations.iter().any(|(n, _)| *n == "visible") {
            return Err(Error::in_stage("density", Error::invalid("visible firm set is empty")));
        }

        let mut densities: BTreeMap<&'static str, GridField> = BTreeMap::new();
        stage("density", || {
            let mut report = Vec::new();
            for (name, points) in &populations {
                let density = self.workers.kde(points, &grid, p.bandwidth)?;
                let counts = rasterize_counts(points, &grid).field;
                io::write_field(&self.path(&format!("density_{name}.csv")), &density)?;
                io::write_field(&self.path(&format!("counts_{name}.csv")), &counts)?;
                let mut top = Vec::new();
                if counts.sum() > 0.0 {
                    for &f in &p.top_shares {
                        let t = top_share(&density, &counts, f)?;
                        top.push(ShareRow { fraction: f, n_cells: t.n_cells, share: t.share });
                    }
                }
                report.push(Concentration {
                    population: name,
                    firms: points.total_weight(),
                    cv: coefficient_of_variation(&density)?,
                    top_shares: top,
                });
                densities.insert(name, density);
            }
            io::write_json(&self.path("concentration.json"), &report)
        })?;
        stages.push(StageRecord { name: "density", status: "ok", notice: None });

        let weights = build_weights(&grid, p.contiguity, true);
        let mut clustered: Vec<Clustered> = Vec::new();
        stage("lisa", || {
            for name in ["visible", "registered_commercial"] {
                let Some(density) = densities.get(name) else { continue };
                let lisa = self.workers.local_moran(density, &weights, p.permutations, p.seed)?;
                io::write_lisa(&self.path(&format!("lisa_{name}.csv")), &grid, &lisa)?;
                let clusters = extract_clusters(density, &lisa, 1.0 - p.density_percentile, p.p_threshold)?;
                io::write_cluster_set(&self.path(&format!("clusters_{name}.json")), &clusters)?;
                let tree = build_dendrogram(density, &lisa, &p.dendrogram_levels, p.p_threshold)?;
                io::write_dendrogram(&self.path(&format!("dendrogram_{name}.json")), &tree)?;
                io::write_dendrogram_edges(&self.path(&format!("dendrogram_{name}_edges.csv")), &tree)?;
                summaries.insert(
                    name,
                    ClusterSummary {
                        count: clusters.len(),
                        labels: clusters.clusters.iter().map(|c| c.label.clone()).collect(),
                        top_fraction: clusters.top_fraction,
                        p_threshold: clusters.p_threshold,
                        per_level: tree
                            .thresholds
                            .iter()
                            .enumerate()
                            .map(|(k, &t)| (t, tree.level(k).count()))
                            .collect(),
                    },
                );
                clustered.push(Clustered { name, clusters });
            }
            Ok(())
        })?;
        stages.push(StageRecord { name: "lisa", status: "ok", notice: None });

        // Distances are measured from the registered-commercial clusters when
        // there are any, else from the visible ones.
        let centre_sets: Vec<(&'static str, Vec<Coord>)> =
            clustered.iter().filter(|c| !c.clusters.is_empty()).map(|c| (c.name, c.clusters.centroids())).collect();
        let reference = centre_sets.last().cloned();

        let mut delta = None;
        match densities.get("registered_commercial") {
            None => {
                self.notice(&mut stages, "compare", "no registered commercial firms; density comparison skipped".into())
            }
            Some(formal) => {
                let field = stage("compare", || {
                    let field = delta_density(&densities["visible"], formal)?;
                    io::write_field(&self.path("delta.csv"), &field)?;
                    if let Some((name, centres)) = &reference {
                        let profile = radial_profile(&field, centres, p.bin_width, p.max_dist)?;
                        io::write_radial_profile(&self.path(&format!("radial_delta_from_{name}.csv")), &profile)?;
                    }
                    Ok(field)
                })?;
                delta = Some(field);
                stages.push(StageRecord {
                    name: "compare",
                    status: "ok",
                    notice: reference.is_none().then(|| "no clusters found; radial profile not written".to_string()),
                });
            }
        }

        match &d.zones {
            None => {
                self.notice(&mut stages, "econ", "zones not provided; econ stage skipped".into());
                self.notice(&mut stages, "adherence", "zones not provided; adherence stage skipped".into());
            }
            Some(zones) => {
                if d.firms.total() == 0 {
                    self.notice(&mut stages, "econ", "no registered firms by zone; econ stage skipped".into());
                } else {
                    stage("econ", || self.econ(zones, delta.as_ref()))?;
                    stages.push(StageRecord { name: "econ", status: "ok", notice: None });
                }
                let attributed = zones.zones().iter().any(|z| z.attributes.stratum.is_some())
                    && zones.zones().iter().any(|z| z.attributes.land_use.is_some());
                if attributed {
                    stage("adherence", || self.adherence(zones, &populations, &centre_sets))?;
                    stages.push(StageRecord { name: "adherence", status: "ok", notice: None });
                } else {
                    self.notice(
                        &mut stages,
                        "adherence",
                        "zones carry no stratum or land-use attributes; adherence stage skipped".into(),
                    );
                }
            }
        }

        let clusters = summaries.get("visible").map_or(0, |s| s.count);
        stage("manifest", || {
            let mut seeds = BTreeMap::from([("lisa", p.seed)]);
            if let Some(s) = &self.cfg.synthetic {
                seeds.insert("synthetic", s.seed);
            }
            let manifest = Manifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                params: &p,
                seeds,
                grid,
                inputs: BTreeMap::from([
                    ("visible", d.visible.len()),
                    ("registered", d.registered.len()),
                    ("registered_commercial", d.registered_commercial.len()),
                    ("zones", d.zones.as_ref().map_or(0, ZoneMap::len)),
                ]),
                stages,
                clusters: summaries,
                files: hash_tree(self.dir)?,
            };
            io::write_json(&self.path(MANIFEST_FILE), &manifest)
        })?;
        Ok((clusters, self.notices))
    }

    fn econ(&self, zones: &ZoneMap, delta: Option<&GridField>) -> Result<()> {
        let p = &self.cfg.params;
        let table = &self.dataset.firms;
        io::write_rca(&self.path("rca.csv"), table, &rca(table)?)?;
        io::write_diversity(&self.path("diversity.csv"), table)?;
        let Some(delta) = delta else { return Ok(()) };

        let means = zone_mean(delta, zones);
        io::write_zone_means(&self.path("zone_delta.csv"), &means)?;
        let delta_by_zone: BTreeMap<String, f64> =
            means.iter().filter_map(|m| m.mean.map(|v| (m.zone_id.clone(), v))).collect();

        let firms_in = |id: &str| table.zone_index(id).map_or(0.0, |z| table.zone_total(z) as f64);
        let mut rows: Vec<(String, f64, f64, f64)> = Vec::new();
        let mut fits = Vec::new();
        let covariates: [(&str, ZoneCovariate); 2] = [
            ("delta_vs_stratum", |z| z.attributes.stratum.map(f64::from)),
            ("delta_vs_population_density", |z| z.attributes.population.map(|pop| pop / (z.polygon.area() / 1e6))),
        ];
        for (name, covariate) in covariates {
            rows.clear();
            for z in zones.zones() {
                if let (Some(x), Some(&y)) = (covariate(z), delta_by_zone.get(&z.id)) {
                    rows.push((z.id.clone(), x, y, firms_in(&z.id)));
                }
            }
            fits.extend(fit_both(name, &rows));
        }
        rows.clear();
        for (z, id) in table.zones().iter().enumerate() {
            if let Some(&x) = delta_by_zone.get(id) {
                rows.push((id.clone(), x, diversity(table, id)? as f64, table.zone_total(z) as f64));
            }
        }
        fits.extend(fit_both("diversity_vs_delta", &rows));
        io::write_json(&self.path("regressions.json"), &fits)?;

        for (weighted, file) in [(true, "sectors.csv"), (false, "sectors_unweighted.csv")] {
            let assoc = sector_association(table, &delta_by_zone, p.sector_digits, weighted)?;
            io::write_sector_table(&self.path(file), &assoc)?;
        }
        Ok(())
    }

    fn adherence(
        &self,
        zones: &ZoneMap,
        populations: &[(&'static str, &PointSet)],
        centre_sets: &[(&'static str, Vec<Coord>)],
    ) -> Result<()> {
        let p = &self.cfg.params;
        let path = self.path("adherence_distance.csv");
        let mut w = io::csv_writer(&path)?;
        io::write_row(&path, &mut w, ["population", "centres", "bin_lo", "bin_hi", "rate", "n_firms"])?;
        for (name, points) in populations {
            io::write_adherence(&self.path(&format!("adherence_{name}.csv")), &nonadherence_by_stratum(points, zones))?;
            for (centres_name, centres) in centre_sets {
                let profile = nonadherence_vs_distance(points, zones, centres, p.bin_width, p.max_dist)?;
                for b in &profile.bins {
                    io::write_row(
                        &path,
                        &mut w,
                        [
                            name.to_string(),
                            format!("{centres_name}_clusters"),
                            io::num(b.lo),
                            io::num(b.hi),
                            b.mean.map(io::num).unwrap_or_default(),
                            io::num(b.count),
                        ],
                    )?;
                }
            }
        }
        io::close_csv(&path, w)
    }
}

/// Weighted and unweighted fits of `y` on `x`; rows are `(zone, x, y, weight)`.
fn fit_both(name: &str, rows: &[(String, f64, f64, f64)]) -> Vec<NamedRegression> {
    let x: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.3).collect();
    [true, false]
        .into_iter()
        .map(|weighted| {
            let fit = least_squares(&x, &y, weighted.then_some(w.as_slice()));
            let (report, skipped) = match fit {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            NamedRegression { name: name.to_string(), weighted, report, skipped }
        })
        .collect()
}

/// SHA-256 of every file under `dir`, keyed by `/`-separated relative path.
fn hash_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let entry = entry.map_err(|e| Error::io(&d, e))?;
            let path = entry.path();
            if path.is_dir() {
                pending.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).expect("walked from dir");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if key == MANIFEST_FILE {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            out.insert(key, hex::encode(Sha256::digest(&bytes)));
        }
    }
    Ok(out)
}
