//! Industry structure: revealed comparative advantage, diversity, and
//! weighted least-squares association tests across zones.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::PointSet;
use crate::stats::student_t_two_sided;

/// Firm counts cross-classified by zone and industry code.
///
/// Zones and industries keep their first-appearance order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FirmTable {
    zones: Vec<String>,
    industries: Vec<String>,
    /// Row-major `zones × industries`.
    counts: Vec<u64>,
}

impl FirmTable {
    /// Builds a table from `(zone, industry, count)` records; repeated pairs are summed.
    pub fn from_records<Z, I>(records: impl IntoIterator<Item = (Z, I, u64)>) -> Self
    where
        Z: AsRef<str>,
        I: AsRef<str>,
    {
        Self::with_zones(core::iter::empty::<&str>(), records)
    }

    /// Like [`FirmTable::from_records`] but registers `zones` first so that
    /// zones without firms are still present.
    pub fn with_zones<S, Z, I>(
        zones: impl IntoIterator<Item = S>,
        records: impl IntoIterator<Item = (Z, I, u64)>,
    ) -> Self
    where
        S: AsRef<str>,
        Z: AsRef<str>,
        I: AsRef<str>,
    {
        let mut zone_idx: BTreeMap<String, usize> = BTreeMap::new();
        let mut ind_idx: BTreeMap<String, usize> = BTreeMap::new();
        let mut zone_list = Vec::new();
        let mut ind_list = Vec::new();
        let mut triples = Vec::new();
        for z in zones {
            intern(&mut zone_idx, &mut zone_list, z.as_ref());
        }
        for (z, i, c) in records {
            let zi = intern(&mut zone_idx, &mut zone_list, z.as_ref());
            let ii = intern(&mut ind_idx, &mut ind_list, i.as_ref());
            triples.push((zi, ii, c));
        }
        let mut counts = vec![0u64; zone_list.len() * ind_list.len()];
        for (zi, ii, c) in triples {
            counts[zi * ind_list.len() + ii] += c;
        }
        Self { zones: zone_list, industries: ind_list, counts }
    }

    pub fn zones(&self) -> &[String] {
        &self.zones
    }

    pub fn industries(&self) -> &[String] {
        &self.industries
    }

    pub fn zone_index(&self, zone: &str) -> Option<usize> {
        self.zones.iter().position(|z| z == zone)
    }

    pub fn industry_index(&self, industry: &str) -> Option<usize> {
        self.industries.iter().position(|i| i == industry)
    }

    pub fn count(&self, zone: usize, industry: usize) -> u64 {
        self.counts[zone * self.industries.len() + industry]
    }

    /// `|F_c|`.
    pub fn zone_total(&self, zone: usize) -> u64 {
        (0..self.industries.len()).map(|i| self.count(zone, i)).sum()
    }

    /// `|F_i|`.
    pub fn industry_total(&self, industry: usize) -> u64 {
        (0..self.zones.len()).map(|z| self.count(z, industry)).sum()
    }

    /// `|F|`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Non-zero `(zone, industry, count)` entries in table order.
    pub fn records(&self) -> impl Iterator<Item = (&str, &str, u64)> + '_ {
        self.zones.iter().enumerate().flat_map(move |(z, zone)| {
            self.industries.iter().enumerate().filter_map(move |(i, ind)| {
                let c = self.count(z, i);
                (c > 0).then_some((zone.as_str(), ind.as_str(), c))
            })
        })
    }

    /// Re-aggregates industries to their first `digits` characters.
    pub fn aggregate(&self, digits: usize) -> Result<FirmTable> {
        if digits == 0 {
            return Err(invalid("aggregation level must be at least one digit"));
        }
        if let Some(code) = self.industries.iter().find(|c| c.chars().count() < digits) {
            return Err(invalid(format!("industry code {code:?} is shorter than {digits} digits")));
        }
        let records = self.records().map(|(z, i, c)| (z, i.chars().take(digits).collect::<String>(), c));
        Ok(FirmTable::with_zones(self.zones.iter(), records))
    }

    /// Keeps industries whose code is listed in `codes` (see [`code_listed`]).
    /// Zones are kept even when emptied.
    pub fn filter_industries(&self, codes: &[String]) -> Filtered<FirmTable> {
        let records = self.records().filter(|(_, i, _)| code_listed(i, codes));
        let table = FirmTable::with_zones(self.zones.iter(), records);
        Filtered { retained: table.total() as usize, total: self.total() as usize, subset: table }
    }
}

fn intern(index: &mut BTreeMap<String, usize>, list: &mut Vec<String>, key: &str) -> usize {
    if let Some(&i) = index.get(key) {
        return i;
    }
    let i = list.len();
    index.insert(key.to_string(), i);
    list.push(key.to_string());
    i
}

/// True when `code` equals a listed code or refines one (`"471101"` under `"4711"`).
pub fn code_listed(code: &str, list: &[String]) -> bool {
    list.iter().any(|c| !c.is_empty() && code.starts_with(c.as_str()))
}

/// Keeps the points whose industry code is listed.
pub fn filter_points(points: &PointSet, list: &[String]) -> Result<Filtered<PointSet>> {
    if list.is_empty() {
        return Err(invalid("industry code list is empty"));
    }
    let codes = points.codes.as_ref().ok_or_else(|| invalid("points carry no industry codes"))?;
    let subset = points.retain_indices(|i| code_listed(&codes[i], list));
    Ok(Filtered { retained: subset.len(), total: points.len(), subset })
}

/// A filtered subset and the retained/total tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered<T> {
    pub subset: T,
    pub retained: usize,
    pub total: usize,
}

/// Revealed comparative advantage per (zone, industry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcaMatrix {
    pub zones: Vec<String>,
    pub industries: Vec<String>,
    /// Row-major `zones × industries`; `None` where the zone has no firms.
    pub values: Vec<Option<f64>>,
}

impl RcaMatrix {
    pub fn get(&self, zone: usize, industry: usize) -> Option<f64> {
        self.values[zone * self.industries.len() + industry]
    }
}

/// Balassa index `RCA_{i,c} = (|F_c ∩ F_i| / |F_c|) / (|F_i| / |F|)`.
pub fn rca(table: &FirmTable) -> Result<RcaMatrix> {
    let total = table.total();
    if total == 0 {
        return Err(invalid("RCA needs a table with at least one firm"));
    }
    let total = total as f64;
    let n_ind = table.industries().len();
    let industry_share: Vec<f64> = (0..n_ind).map(|i| table.industry_total(i) as f64 / total).collect();
    let mut values = Vec::with_capacity(table.zones().len() * n_ind);
    for z in 0..table.zones().len() {
        let zt = table.zone_total(z);
        for (i, share) in industry_share.iter().enumerate() {
            values.push((zt > 0).then(|| (table.count(z, i) as f64 / zt as f64) / share));
        }
    }
    Ok(RcaMatrix { zones: table.zones().to_vec(), industries: table.industries().to_vec(), values })
}

/// Number of distinct industries with at least one firm in `zone`.
pub fn diversity(table: &FirmTable, zone: &str) -> Result<usize> {
    let z = table.zone_index(zone).ok_or_else(|| invalid(format!("unknown zone {zone:?}")))?;
    Ok((0..table.industries().len()).filter(|&i| table.count(z, i) > 0).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    pub t: f64,
    /// Two-sided p-value on `n - 2` degrees of freedom.
    pub p_value: f64,
    pub r_squared: f64,
    /// Observations with positive weight.
    pub n: usize,
    pub weighted: bool,
}

/// Simple linear regression `y = a + b·x` by weighted least squares.
///
/// `weights = None` is ordinary least squares. Observations with zero weight
/// are ignored; at least three with positive weight are required.
pub fn least_squares(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<RegressionReport> {
    if x.len() != y.len() {
        return Err(invalid("x and y have different lengths"));
    }
    if let Some(w) = weights {
        if w.len() != x.len() {
            return Err(invalid("weights and x have different lengths"));
        }
        if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(invalid("weights must be finite and non-negative"));
        }
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("regression data must be finite"));
    }
    let weight = |k: usize| weights.map_or(1.0, |w| w[k]);
    let used: Vec<usize> = (0..x.len()).filter(|&k| weight(k) > 0.0).collect();
    let n = used.len();
    if n < 3 {
        return Err(invalid("regression needs at least three observations with positive weight"));
    }
    let sw: f64 = used.iter().map(|&k| weight(k)).sum();
    let xm = used.iter().map(|&k| weight(k) * x[k]).sum::<f64>() / sw;
    let ym = used.iter().map(|&k| weight(k) * y[k]).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &k in &used {
        let (dx, dy, w) = (x[k] - xm, y[k] - ym, weight(k));
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    if !(sxx > 0.0) || used.iter().all(|&k| x[k] == x[used[0]]) {
        return Err(invalid("regressor is constant"));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = used
        .iter()
        .map(|&k| {
            let r = y[k] - intercept - slope * x[k];
            weight(k) * r * r
        })
        .sum();
    let df = (n - 2) as f64;
    let se_slope = libm::sqrt(ssr / df / sxx);
    let (t, p_value) = if se_slope > 0.0 {
        let t = slope / se_slope;
        (t, student_t_two_sided(t, df)?)
    } else if slope == 0.0 {
        (0.0, 1.0)
    } else {
        (f64::INFINITY.copysign(slope), 0.0)
    };
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RegressionReport { slope, intercept, se_slope, t, p_value, r_squared, n, weighted: weights.is_some() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorRegression {
    pub industry: String,
    pub report: RegressionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSector {
    pub industry: String,
    pub reason: String,
}

/// Per-industry regressions of zone mean Δρ on RCA, ranked by slope (descending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorAssociation {
    pub ranked: Vec<SectorRegression>,
    pub skipped: Vec<SkippedSector>,
}

impl SectorAssociation {
    /// The `k` most positive and `k` most negative slopes.
    pub fn top_bottom(&self, k: usize) -> (&[SectorRegression], &[SectorRegression]) {
        let k = k.min(self.ranked.len());
        (&self.ranked[..k], &self.ranked[self.ranked.len() - k..])
    }
}

/// Minimum number of zones in which an industry must have firms.
pub const MIN_SECTOR_SUPPORT: usize = 3;

/// Regresses zone-level mean Δρ on each industry's RCA across zones,
/// weighted by zone firm counts, after aggregating codes to `digits`.
pub fn sector_association(
    table: &FirmTable,
    delta_means: &BTreeMap<String, f64>,
    digits: usize,
    weighted: bool,
) -> Result<SectorAssociation> {
    let table = table.aggregate(digits)?;
    let matrix = rca(&table)?;
    let zones: Vec<usize> = (0..table.zones().len())
        .filter(|&z| table.zone_total(z) > 0 && delta_means.contains_key(&table.zones()[z]))
        .collect();
    let y: Vec<f64> = zones.iter().map(|&z| delta_means[&table.zones()[z]]).collect();
    let w: Vec<f64> = zones.iter().map(|&z| table.zone_total(z) as f64).collect();
    let mut ranked = Vec::new();
    let mut skipped = Vec::new();
    for (i, industry) in table.industries().iter().enumerate() {
        let support = zones.iter().filter(|&&z| table.count(z, i) > 0).count();
        if support < MIN_SECTOR_SUPPORT {
            skipped.push(SkippedSector {
                industry: industry.clone(),
                reason: format!("present in {support} zones, need {MIN_SECTOR_SUPPORT}"),
            });
            continue;
        }
        let x: Vec<f64> = zones.iter().map(|&z| matrix.get(z, i).expect("zone has firms")).collect();
        match least_squares(&x, &y, weighted.then_some(w.as_slice())) {
            Ok(report) => ranked.push(SectorRegression { industry: industry.clone(), report }),
            Err(e) => skipped.push(SkippedSector { industry: industry.clone(), reason: e.to_string() }),
        }
    }
    ranked.sort_by(|a, b| b.report.slope.total_cmp(&a.report.slope).then_with(|| a.industry.cmp(&b.industry)));
    Ok(SectorAssociation { ranked, skipped })
}
