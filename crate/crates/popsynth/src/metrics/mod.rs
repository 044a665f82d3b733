//! Evaluation suite: trip-length distributions, marginal and conditional
//! comparisons, spatial visit grids, and the Pearson / zero-intercept R² /
//! SRMSE score triple.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::haversine_km;
use crate::matcher::CompositeTable;
use crate::schema::{ColumnKind, RecordBatch, TrajectorySeq, ZoneRegistry};

pub mod charts;

/// Uniform-bin histogram normalized to proportions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Set when the input was empty (frequencies are all zero).
    pub empty: bool,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.frequencies.len()
    }
}

/// Sum of great-circle leg lengths (km) along a trajectory's centroids.
pub fn trip_length(traj: &TrajectorySeq, zones: &ZoneRegistry) -> Result<f64> {
    let mut centroids = Vec::with_capacity(traj.tokens.len());
    for token in &traj.tokens {
        centroids.push(zones.centroid(token).ok_or_else(|| {
            Error::Metrics(format!("zone `{token}` has no centroid"))
        })?);
    }
    Ok(centroids
        .windows(2)
        .map(|w| haversine_km(w[0].0, w[0].1, w[1].0, w[1].1))
        .sum())
}

/// Histogram over `[range.0, range.1)` with B uniform bins: right-open bins,
/// the last bin closed, out-of-range values clamped into the end bins.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Metrics("bin count must be positive".into()));
    }
    if !(range.1 > range.0) {
        return Err(Error::Metrics(format!(
            "range ({}, {}) must be increasing",
            range.0, range.1
        )));
    }
    let width = (range.1 - range.0) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| range.0 + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = ((v - range.0) / width).floor() as i64;
        let idx = idx.clamp(0, bins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    let total = values.len();
    let frequencies = if total == 0 {
        vec![0.0; bins]
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    Ok(Histogram {
        edges,
        frequencies,
        empty: total == 0,
    })
}

/// Standard sample correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Metrics("inputs must have equal length >= 2".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metrics("correlation undefined for zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// R² of the least-squares fit y = βx forced through the origin, with the
/// uncentered total sum of squares.
pub fn r2_zero_intercept(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Metrics("inputs must have equal nonzero length".into()));
    }
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    if sxx == 0.0 {
        return Err(Error::Metrics("all-zero x has no zero-intercept fit".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let beta = sxy / sxx;
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - beta * a).powi(2))
        .sum();
    Ok(1.0 - ss_res / syy)
}

/// Root-mean-square error between frequency vectors divided by the mean of
/// the reference frequencies.
pub fn srmse(real: &[f64], synth: &[f64]) -> Result<f64> {
    if real.len() != synth.len() || real.is_empty() {
        return Err(Error::Metrics("inputs must have equal nonzero length".into()));
    }
    let b = real.len() as f64;
    let mean = real.iter().sum::<f64>() / b;
    if mean <= 0.0 {
        return Err(Error::Metrics("reference mean must be positive".into()));
    }
    let mse = real
        .iter()
        .zip(synth)
        .map(|(&r, &s)| (s - r).powi(2))
        .sum::<f64>()
        / b;
    Ok(mse.sqrt() / mean)
}

/// Pearson / zero-intercept R² / SRMSE of a synthetic frequency vector
/// against a reference one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub pearson: f64,
    pub r2_zero_intercept: f64,
    pub srmse: f64,
}

pub fn score_triple(real: &[f64], synth: &[f64]) -> Result<ScoreTriple> {
    Ok(ScoreTriple {
        pearson: pearson(real, synth)?,
        r2_zero_intercept: r2_zero_intercept(real, synth)?,
        srmse: srmse(real, synth)?,
    })
}

/// Per-category trip-length histograms over one categorical column;
/// flattens to |categories| × B points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalGrid {
    pub categories: Vec<String>,
    pub histograms: Vec<Histogram>,
}

impl ConditionalGrid {
    pub fn flatten(&self) -> Vec<f64> {
        self.histograms
            .iter()
            .flat_map(|h| h.frequencies.iter().cloned())
            .collect()
    }

    pub fn points(&self) -> usize {
        self.histograms.iter().map(|h| h.bins()).sum()
    }
}

/// Builds the per-category trip-length grid of a composite table. All
/// categories share the bin range; empty categories yield flagged all-zero
/// histograms.
pub fn conditional_grid(
    composite: &CompositeTable,
    category_column: &str,
    zones: &ZoneRegistry,
    bins: usize,
    range: (f64, f64),
) -> Result<ConditionalGrid> {
    let col = composite
        .population
        .schema
        .col_idx(category_column)
        .ok_or_else(|| Error::Metrics(format!("unknown column `{category_column}`")))?;
    let categories = match &composite.population.schema.columns[col].kind {
        ColumnKind::Categorical { categories } => categories.clone(),
        ColumnKind::Continuous { .. } => {
            return Err(Error::Metrics(format!(
                "column `{category_column}` is not categorical"
            )))
        }
    };
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); categories.len()];
    for i in 0..composite.population.n_rows() {
        let cat = composite.population.cell(i, col).as_cat().unwrap();
        values[cat].push(trip_length(&composite.trajectories[i], zones)?);
    }
    let histograms = values
        .iter()
        .map(|v| histogram(v, bins, range))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionalGrid {
        categories,
        histograms,
    })
}

/// Trip lengths of every trajectory in a set.
pub fn trip_lengths(trajs: &[TrajectorySeq], zones: &ZoneRegistry) -> Result<Vec<f64>> {
    trajs.iter().map(|t| trip_length(t, zones)).collect()
}

/// Shared histogram range for aligned real/synthetic binning:
/// [0, max over both datasets] (1.0 when everything is zero-length).
pub fn shared_range(real: &[f64], synth: &[f64]) -> (f64, f64) {
    let max = real
        .iter()
        .chain(synth)
        .cloned()
        .fold(0.0f64, f64::max);
    (0.0, if max > 0.0 { max } else { 1.0 })
}

/// Per-cell visit counts of real vs synthetic activity locations over a
/// shared lat/lon grid, with per-cell percentage error
/// (synth − real) / max(real, 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub lat_min: f64,
    pub lon_min: f64,
    pub cell_deg: f64,
    pub n_lat: usize,
    pub n_lon: usize,
    pub real_counts: Vec<u64>,
    pub synth_counts: Vec<u64>,
    pub pct_error: Vec<f64>,
}

impl SpatialGrid {
    pub fn cell(&self, lat_idx: usize, lon_idx: usize) -> usize {
        lat_idx * self.n_lon + lon_idx
    }

    /// CSV heat-grid layout: one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lat_idx,lon_idx,lat_lo,lon_lo,real_count,synth_count,pct_error\n");
        for i in 0..self.n_lat {
            for j in 0..self.n_lon {
                let c = self.cell(i, j);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    i,
                    j,
                    self.lat_min + i as f64 * self.cell_deg,
                    self.lon_min + j as f64 * self.cell_deg,
                    self.real_counts[c],
                    self.synth_counts[c],
                    self.pct_error[c]
                ));
            }
        }
        out
    }
}

/// Counts every activity-location visit of both datasets into lat/lon cells
/// over the zone registry's bounding box.
pub fn spatial_grid(
    trajs_real: &[TrajectorySeq],
    trajs_synth: &[TrajectorySeq],
    zones: &ZoneRegistry,
    cell_deg: f64,
) -> Result<SpatialGrid> {
    if cell_deg <= 0.0 {
        return Err(Error::Metrics("cell size must be positive".into()));
    }
    if zones.is_empty() {
        return Err(Error::Metrics("zone registry is empty".into()));
    }
    let mut lat_min = f64::INFINITY;
    let mut lat_max = f64::NEG_INFINITY;
    let mut lon_min = f64::INFINITY;
    let mut lon_max = f64::NEG_INFINITY;
    for (_, (lat, lon)) in zones.entries() {
        lat_min = lat_min.min(*lat);
        lat_max = lat_max.max(*lat);
        lon_min = lon_min.min(*lon);
        lon_max = lon_max.max(*lon);
    }
    let n_lat = (((lat_max - lat_min) / cell_deg).floor() as usize) + 1;
    let n_lon = (((lon_max - lon_min) / cell_deg).floor() as usize) + 1;
    let mut grid = SpatialGrid {
        lat_min,
        lon_min,
        cell_deg,
        n_lat,
        n_lon,
        real_counts: vec![0; n_lat * n_lon],
        synth_counts: vec![0; n_lat * n_lon],
        pct_error: vec![0.0; n_lat * n_lon],
    };
    tally(&mut grid, trajs_real, zones, true)?;
    tally(&mut grid, trajs_synth, zones, false)?;
    for c in 0..grid.pct_error.len() {
        let real = grid.real_counts[c] as f64;
        let synth = grid.synth_counts[c] as f64;
        grid.pct_error[c] = (synth - real) / real.max(1.0);
    }
    Ok(grid)
}

fn tally(
    grid: &mut SpatialGrid,
    trajs: &[TrajectorySeq],
    zones: &ZoneRegistry,
    real: bool,
) -> Result<()> {
    for traj in trajs {
        for token in &traj.tokens {
            let (lat, lon) = zones
                .centroid(token)
                .ok_or_else(|| Error::Metrics(format!("zone `{token}` has no centroid")))?;
            let i = (((lat - grid.lat_min) / grid.cell_deg).floor() as usize).min(grid.n_lat - 1);
            let j = (((lon - grid.lon_min) / grid.cell_deg).floor() as usize).min(grid.n_lon - 1);
            let c = grid.cell(i, j);
            if real {
                grid.real_counts[c] += 1;
            } else {
                grid.synth_counts[c] += 1;
            }
        }
    }
    Ok(())
}

/// Per-category proportions of one categorical column in both batches, plus
/// the total-variation distance between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalComparison {
    pub column: String,
    pub categories: Vec<String>,
    pub real: Vec<f64>,
    pub synth: Vec<f64>,
    pub tv_distance: f64,
}

pub fn marginal_compare(
    real: &RecordBatch,
    synth: &RecordBatch,
    column: &str,
) -> Result<MarginalComparison> {
    let col = real
        .schema
        .col_idx(column)
        .ok_or_else(|| Error::Metrics(format!("unknown column `{column}`")))?;
    if synth.schema.col_idx(column) != Some(col) {
        return Err(Error::Metrics("batches do not share a schema".into()));
    }
    let categories = match &real.schema.columns[col].kind {
        ColumnKind::Categorical { categories } => categories.clone(),
        ColumnKind::Continuous { .. } => {
            return Err(Error::Metrics(format!("column `{column}` is not categorical")))
        }
    };
    let to_props = |batch: &RecordBatch| -> Vec<f64> {
        let counts = batch.category_counts(col);
        let n = batch.n_rows().max(1) as f64;
        counts.iter().map(|&c| c as f64 / n).collect()
    };
    let real_p = to_props(real);
    let synth_p = to_props(synth);
    let tv = 0.5
        * real_p
            .iter()
            .zip(&synth_p)
            .map(|(&a, &b)| (a - b).abs())
            .sum::<f64>();
    Ok(MarginalComparison {
        column: column.to_string(),
        categories,
        real: real_p,
        synth: synth_p,
        tv_distance: tv,
    })
}

/// Full evaluation artifact: score triples for the unconditional and
/// conditional trip-length comparisons, marginal comparisons for every
/// categorical column, and the spatial grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_real: usize,
    pub n_synth: usize,
    pub bins: usize,
    pub unconditional: UnconditionalReport,
    pub conditional: ConditionalReport,
    pub marginals: Vec<MarginalComparison>,
    pub spatial_summary: SpatialSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnconditionalReport {
    pub real_hist: Histogram,
    pub synth_hist: Histogram,
    pub scores: ScoreTriple,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalReport {
    pub category_column: String,
    pub points: usize,
    pub real_grid: ConditionalGrid,
    pub synth_grid: ConditionalGrid,
    pub scores: ScoreTriple,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpatialSummary {
    pub cells: usize,
    pub mean_abs_pct_error: f64,
    pub max_abs_pct_error: f64,
}

/// Scores a synthetic composite against the real composite.
pub fn evaluate(
    real: &CompositeTable,
    synth: &CompositeTable,
    zones: &ZoneRegistry,
    category_column: &str,
    bins: usize,
    cell_deg: f64,
) -> Result<EvalReport> {
    let real_lengths = trip_lengths(&real.trajectories, zones)?;
    let synth_lengths = trip_lengths(&synth.trajectories, zones)?;
    let range = shared_range(&real_lengths, &synth_lengths);
    let real_hist = histogram(&real_lengths, bins, range)?;
    let synth_hist = histogram(&synth_lengths, bins, range)?;
    let scores = score_triple(&real_hist.frequencies, &synth_hist.frequencies)?;

    let real_grid = conditional_grid(real, category_column, zones, bins, range)?;
    let synth_grid = conditional_grid(synth, category_column, zones, bins, range)?;
    let cond_scores = score_triple(&real_grid.flatten(), &synth_grid.flatten())?;
    let points = real_grid.points();

    let marginals = real
        .population
        .schema
        .categorical_columns()
        .map(|(_, col)| marginal_compare(&real.population, &synth.population, &col.name))
        .collect::<Result<Vec<_>>>()?;

    let grid = spatial_grid(&real.trajectories, &synth.trajectories, zones, cell_deg)?;
    let abs_errs: Vec<f64> = grid.pct_error.iter().map(|e| e.abs()).collect();
    let spatial_summary = SpatialSummary {
        cells: abs_errs.len(),
        mean_abs_pct_error: abs_errs.iter().sum::<f64>() / abs_errs.len().max(1) as f64,
        max_abs_pct_error: abs_errs.iter().cloned().fold(0.0, f64::max),
    };

    Ok(EvalReport {
        n_real: real.population.n_rows(),
        n_synth: synth.population.n_rows(),
        bins,
        unconditional: UnconditionalReport {
            real_hist,
            synth_hist,
            scores,
        },
        conditional: ConditionalReport {
            category_column: category_column.to_string(),
            points,
            real_grid,
            synth_grid,
            scores: cond_scores,
        },
        marginals,
        spatial_summary,
    })
}
