//! Data model for population records, trajectories, and zones, plus CSV
//! ingestion, radius filtering, and vocabulary construction.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const PAD_IDX: usize = 0;
pub const BOS_IDX: usize = 1;
pub const EOS_IDX: usize = 2;

/// Zone id ↔ centroid coordinate mapping shared by both data domains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoneRegistry {
    entries: Vec<(String, (f64, f64))>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ZoneRegistry {
    pub fn new(entries: Vec<(String, (f64, f64))>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (id, (lat, lon))) in entries.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate zone id `{id}`")));
            }
            if !(-90.0..=90.0).contains(lat) || !(-180.0..=180.0).contains(lon) {
                return Err(Error::Schema(format!(
                    "zone `{id}` centroid ({lat}, {lon}) out of range"
                )));
            }
        }
        Ok(Self { entries, index })
    }

    /// Parses the `zone_id,centroid_lat,centroid_lon` CSV layout.
    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(bytes);
        expect_headers(&mut reader, &["zone_id", "centroid_lat", "centroid_lon"])?;
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record?;
            let id = record.get(0).unwrap_or("").to_string();
            let lat: f64 = parse_f64(record.get(1))?;
            let lon: f64 = parse_f64(record.get(2))?;
            entries.push((id, (lat, lon)));
        }
        Self::new(entries)
    }

    pub fn centroid(&self, zone_id: &str) -> Option<(f64, f64)> {
        self.index.get(zone_id).map(|&i| self.entries[i].1)
    }

    pub fn contains(&self, zone_id: &str) -> bool {
        self.index.contains_key(zone_id)
    }

    pub fn entries(&self) -> &[(String, (f64, f64))] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (id.clone(), i))
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical { categories: Vec<String> },
    Continuous { unit: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Ordered, typed description of the population table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSchema {
    pub columns: Vec<Column>,
}

impl TabularSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let mut seen = HashSet::new();
        for col in &columns {
            if !seen.insert(col.name.clone()) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
            if let ColumnKind::Categorical { categories } = &col.kind {
                if categories.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical column `{}` needs at least 2 categories",
                        col.name
                    )));
                }
                let distinct: HashSet<_> = categories.iter().collect();
                if distinct.len() != categories.len() {
                    return Err(Error::Schema(format!(
                        "categorical column `{}` has duplicate categories",
                        col.name
                    )));
                }
            }
        }
        Ok(Self { columns })
    }

    pub fn col_idx(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn categories(&self, col: usize) -> Option<&[String]> {
        match &self.columns[col].kind {
            ColumnKind::Categorical { categories } => Some(categories),
            ColumnKind::Continuous { .. } => None,
        }
    }

    pub fn categorical_columns(&self) -> impl Iterator<Item = (usize, &Column)> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.kind, ColumnKind::Categorical { .. }))
    }
}

/// A single table cell: category index or real value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Cat(usize),
    Num(f64),
}

impl Cell {
    pub fn as_cat(&self) -> Option<usize> {
        match self {
            Cell::Cat(i) => Some(*i),
            Cell::Num(_) => None,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Cat(_) => None,
        }
    }
}

/// Fully-parsed population table. No missing cells; categorical cells hold
/// indices into the schema's category lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordBatch {
    pub schema: TabularSchema,
    pub row_ids: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl RecordBatch {
    pub fn new(schema: TabularSchema, row_ids: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        if row_ids.len() != rows.len() {
            return Err(Error::Schema("row_ids/rows length mismatch".into()));
        }
        for row in &rows {
            if row.len() != schema.columns.len() {
                return Err(Error::Schema("row width does not match schema".into()));
            }
            for (cell, col) in row.iter().zip(&schema.columns) {
                match (cell, &col.kind) {
                    (Cell::Cat(i), ColumnKind::Categorical { categories }) => {
                        if *i >= categories.len() {
                            return Err(Error::Schema(format!(
                                "category index {i} out of range for `{}`",
                                col.name
                            )));
                        }
                    }
                    (Cell::Num(v), ColumnKind::Continuous { .. }) => {
                        if !v.is_finite() {
                            return Err(Error::Schema(format!(
                                "non-finite value in `{}`",
                                col.name
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::Schema(format!(
                            "cell type does not match column `{}`",
                            col.name
                        )))
                    }
                }
            }
        }
        Ok(Self {
            schema,
            row_ids,
            rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.rows[row][col]
    }

    /// All values of a continuous column.
    pub fn continuous_values(&self, col: usize) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r[col].as_num().expect("continuous column"))
            .collect()
    }

    /// Per-category occurrence counts for a categorical column.
    pub fn category_counts(&self, col: usize) -> Vec<usize> {
        let n_cats = self
            .schema
            .categories(col)
            .map(|c| c.len())
            .expect("categorical column");
        let mut counts = vec![0usize; n_cats];
        for row in &self.rows {
            counts[row[col].as_cat().expect("categorical column")] += 1;
        }
        counts
    }

    /// Keeps only the rows at `keep` (in the given order).
    pub fn select(&self, keep: &[usize]) -> RecordBatch {
        RecordBatch {
            schema: self.schema.clone(),
            row_ids: keep.iter().map(|&i| self.row_ids[i].clone()).collect(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Tokenized activity-location chain for one person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeq {
    pub person_id: String,
    pub tokens: Vec<String>,
}

/// Token list with reserved PAD/BOS/EOS entries at fixed indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenVocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TokenVocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn idx(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn is_reserved(idx: usize) -> bool {
        idx <= EOS_IDX
    }

    /// Zone tokens only, in vocabulary order.
    pub fn zone_tokens(&self) -> &[String] {
        &self.tokens[EOS_IDX + 1..]
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PopulationIngest {
    pub batch_rows: usize,
    /// Rows dropped for missing cells, parse failures, unknown categories,
    /// or duplicate person ids.
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectoryIngest {
    pub persons: usize,
    /// Persons with more than `n_max` locations.
    pub excluded_over_cap: usize,
    /// Persons rejected for unknown zones or non-contiguous sequence indices.
    pub rejected_invalid: usize,
}

/// Parses the persons CSV against `schema`. Rows with any unparseable,
/// missing, or unknown-category cell are dropped and counted.
pub fn ingest_population(
    csv_bytes: &[u8],
    schema: &TabularSchema,
) -> Result<(RecordBatch, PopulationIngest)> {
    let mut reader = csv::Reader::from_reader(csv_bytes);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut expected: Vec<&str> = vec!["person_id"];
    expected.extend(schema.columns.iter().map(|c| c.name.as_str()));
    let header_set: HashSet<&str> = headers.iter().map(|s| s.as_str()).collect();
    let expected_set: HashSet<&str> = expected.iter().copied().collect();
    if header_set != expected_set || headers.len() != expected.len() {
        return Err(Error::Schema(format!(
            "persons header {:?} does not match schema columns {:?}",
            headers, expected
        )));
    }

    let id_pos = headers.iter().position(|h| h == "person_id").unwrap();
    let col_pos: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| headers.iter().position(|h| *h == c.name).unwrap())
        .collect();

    let mut row_ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut dropped = 0usize;

    'records: for record in reader.records() {
        let record = record?;
        let id = record.get(id_pos).unwrap_or("").trim().to_string();
        if id.is_empty() || !seen_ids.insert(id.clone()) {
            dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(schema.columns.len());
        for (col, &pos) in schema.columns.iter().zip(&col_pos) {
            let raw = record.get(pos).unwrap_or("").trim();
            if raw.is_empty() {
                dropped += 1;
                seen_ids.remove(&id);
                continue 'records;
            }
            let cell = match &col.kind {
                ColumnKind::Categorical { categories } => {
                    match categories.iter().position(|c| c == raw) {
                        Some(i) => Cell::Cat(i),
                        None => {
                            dropped += 1;
                            seen_ids.remove(&id);
                            continue 'records;
                        }
                    }
                }
                ColumnKind::Continuous { .. } => match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Cell::Num(v),
                    _ => {
                        dropped += 1;
                        seen_ids.remove(&id);
                        continue 'records;
                    }
                },
            };
            row.push(cell);
        }
        row_ids.push(id);
        rows.push(row);
    }

    let stats = PopulationIngest {
        batch_rows: rows.len(),
        dropped_rows: dropped,
    };
    Ok((RecordBatch::new(schema.clone(), row_ids, rows)?, stats))
}

/// Parses the trips CSV (`person_id,seq_index,zone_id`) into one trajectory
/// per person. Persons exceeding `n_max` locations, referencing unknown
/// zones, or with non-contiguous sequence indices are excluded and counted.
pub fn ingest_trajectories(
    csv_bytes: &[u8],
    zones: &ZoneRegistry,
    n_max: usize,
) -> Result<(Vec<TrajectorySeq>, TrajectoryIngest)> {
    let mut reader = csv::Reader::from_reader(csv_bytes);
    expect_headers(&mut reader, &["person_id", "seq_index", "zone_id"])?;

    // Group rows by person, preserving first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut visits: HashMap<String, Vec<(u64, String, bool)>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let id = record.get(0).unwrap_or("").trim().to_string();
        let seq: u64 = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Schema("seq_index must be a non-negative integer".into()))?;
        let zone = record.get(2).unwrap_or("").trim().to_string();
        let known = zones.contains(&zone);
        if !visits.contains_key(&id) {
            order.push(id.clone());
        }
        visits.entry(id).or_default().push((seq, zone, known));
    }

    let mut trajs = Vec::new();
    let mut stats = TrajectoryIngest::default();
    for id in order {
        let mut rows = visits.remove(&id).unwrap();
        // A row with an unknown zone is rejected, which leaves the person's
        // index sequence broken; the person is then rejected as a whole.
        if rows.iter().any(|(_, _, known)| !known) {
            stats.rejected_invalid += 1;
            continue;
        }
        rows.sort_by_key(|(seq, _, _)| *seq);
        let contiguous = rows
            .iter()
            .enumerate()
            .all(|(i, (seq, _, _))| *seq == (i + 1) as u64);
        if !contiguous {
            stats.rejected_invalid += 1;
            continue;
        }
        if rows.len() > n_max {
            stats.excluded_over_cap += 1;
            continue;
        }
        if rows.is_empty() {
            stats.rejected_invalid += 1;
            continue;
        }
        trajs.push(TrajectorySeq {
            person_id: id,
            tokens: rows.into_iter().map(|(_, z, _)| z).collect(),
        });
    }
    stats.persons = trajs.len();
    Ok((trajs, stats))
}

/// Retains persons whose origin lies within `radius_km` (great-circle) of
/// `center`, keeping population and trajectories aligned on person id.
/// Persons present in only one of the two inputs are dropped.
pub fn filter_radius(
    batch: &RecordBatch,
    trajs: &[TrajectorySeq],
    zones: &ZoneRegistry,
    center: (f64, f64),
    radius_km: f64,
) -> Result<(RecordBatch, Vec<TrajectorySeq>)> {
    let lat_col = batch
        .schema
        .col_idx("origin_lat")
        .ok_or_else(|| Error::Schema("batch lacks `origin_lat` column".into()))?;
    let lon_col = batch
        .schema
        .col_idx("origin_lon")
        .ok_or_else(|| Error::Schema("batch lacks `origin_lon` column".into()))?;

    let traj_by_id: HashMap<&str, usize> = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| (t.person_id.as_str(), i))
        .collect();

    let mut keep_rows = Vec::new();
    let mut kept_trajs = Vec::new();
    for i in 0..batch.n_rows() {
        let Some(&ti) = traj_by_id.get(batch.row_ids[i].as_str()) else {
            continue;
        };
        let lat = batch.cell(i, lat_col).as_num().unwrap();
        let lon = batch.cell(i, lon_col).as_num().unwrap();
        if geo::haversine_km(center.0, center.1, lat, lon) <= radius_km {
            for token in &trajs[ti].tokens {
                if !zones.contains(token) {
                    return Err(Error::Schema(format!(
                        "trajectory for `{}` references unknown zone `{token}`",
                        batch.row_ids[i]
                    )));
                }
            }
            keep_rows.push(i);
            kept_trajs.push(trajs[ti].clone());
        }
    }
    Ok((batch.select(&keep_rows), kept_trajs))
}

/// Builds the vocabulary: reserved tokens first, then the distinct zone
/// tokens in lexicographic order.
pub fn build_vocabulary(trajs: &[TrajectorySeq]) -> Result<TokenVocabulary> {
    if trajs.is_empty() {
        return Err(Error::Schema("cannot build vocabulary from empty corpus".into()));
    }
    let mut zones: Vec<String> = trajs
        .iter()
        .flat_map(|t| t.tokens.iter().cloned())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    zones.sort();
    for z in &zones {
        if z == PAD_TOKEN || z == BOS_TOKEN || z == EOS_TOKEN {
            return Err(Error::Schema(format!("zone token `{z}` collides with a reserved token")));
        }
    }
    let mut tokens = vec![
        PAD_TOKEN.to_string(),
        BOS_TOKEN.to_string(),
        EOS_TOKEN.to_string(),
    ];
    tokens.extend(zones);
    Ok(TokenVocabulary::from_tokens(tokens))
}

fn expect_headers(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers != expected {
        return Err(Error::Schema(format!(
            "header {:?} does not match expected {:?}",
            headers, expected
        )));
    }
    Ok(())
}

fn parse_f64(field: Option<&str>) -> Result<f64> {
    field
        .unwrap_or("")
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Schema("expected a real number".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_schema() -> TabularSchema {
        TabularSchema::new(vec![
            Column {
                name: "age".into(),
                kind: ColumnKind::Continuous { unit: "years".into() },
            },
            Column {
                name: "industry".into(),
                kind: ColumnKind::Categorical {
                    categories: vec!["Construction".into(), "Education".into()],
                },
            },
        ])
        .unwrap()
    }

    fn demo_zones() -> ZoneRegistry {
        ZoneRegistry::new(vec![
            ("A".into(), (-27.40, 153.00)),
            ("B".into(), (-27.45, 153.05)),
            ("C".into(), (-27.50, 153.10)),
            ("D".into(), (-27.55, 153.15)),
        ])
        .unwrap()
    }

    #[test]
    fn ingest_drops_row_with_missing_cell() {
        let csv = "person_id,age,industry\np1,30,Construction\np2,41,\np3,55,Education\n";
        let (batch, stats) = ingest_population(csv.as_bytes(), &demo_schema()).unwrap();
        assert_eq!(batch.n_rows(), 2);
        assert_eq!(stats.dropped_rows, 1);
        assert_eq!(batch.row_ids, vec!["p1", "p3"]);
    }

    #[test]
    fn ingest_maps_category_to_index() {
        let csv = "person_id,age,industry\np1,30,Construction\n";
        let (batch, _) = ingest_population(csv.as_bytes(), &demo_schema()).unwrap();
        assert_eq!(batch.cell(0, 1), Cell::Cat(0));
    }

    #[test]
    fn ingest_rejects_header_mismatch() {
        let csv = "person_id,age\np1,30\n";
        assert!(ingest_population(csv.as_bytes(), &demo_schema()).is_err());
    }

    #[test]
    fn ingest_drops_unknown_category() {
        let csv = "person_id,age,industry\np1,30,Mining\np2,40,Education\n";
        let (batch, stats) = ingest_population(csv.as_bytes(), &demo_schema()).unwrap();
        assert_eq!(batch.n_rows(), 1);
        assert_eq!(stats.dropped_rows, 1);
    }

    #[test]
    fn ingest_is_deterministic() {
        let csv = "person_id,age,industry\np1,30,Construction\np2,41,Education\n";
        let (a, _) = ingest_population(csv.as_bytes(), &demo_schema()).unwrap();
        let (b, _) = ingest_population(csv.as_bytes(), &demo_schema()).unwrap();
        assert_eq!(a.row_ids, b.row_ids);
        assert_eq!(a.rows(), b.rows());
    }

    #[test]
    fn trajectories_grouped_and_capped() {
        let csv = "person_id,seq_index,zone_id\n\
                   p1,1,A\np1,2,B\np1,3,C\np1,4,D\n\
                   p2,1,A\np2,2,B\np2,3,C\np2,4,D\np2,5,A\n";
        let (trajs, stats) = ingest_trajectories(csv.as_bytes(), &demo_zones(), 4).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].tokens, vec!["A", "B", "C", "D"]);
        assert_eq!(stats.excluded_over_cap, 1);
    }

    #[test]
    fn trajectories_reject_unknown_zone_and_gaps() {
        let csv = "person_id,seq_index,zone_id\np1,1,A\np1,2,Z\np2,1,A\np2,3,B\n";
        let (trajs, stats) = ingest_trajectories(csv.as_bytes(), &demo_zones(), 4).unwrap();
        assert!(trajs.is_empty());
        assert_eq!(stats.rejected_invalid, 2);
    }

    #[test]
    fn trajectories_empty_csv() {
        let csv = "person_id,seq_index,zone_id\n";
        let (trajs, _) = ingest_trajectories(csv.as_bytes(), &demo_zones(), 4).unwrap();
        assert!(trajs.is_empty());
    }

    fn radius_fixture(n: usize, offset_deg: f64) -> (RecordBatch, Vec<TrajectorySeq>) {
        let schema = TabularSchema::new(vec![
            Column {
                name: "origin_lat".into(),
                kind: ColumnKind::Continuous { unit: "deg".into() },
            },
            Column {
                name: "origin_lon".into(),
                kind: ColumnKind::Continuous { unit: "deg".into() },
            },
        ])
        .unwrap();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut trajs = Vec::new();
        for i in 0..n {
            let lat = -27.47 + (i as f64) * offset_deg;
            ids.push(format!("p{i}"));
            rows.push(vec![Cell::Num(lat), Cell::Num(153.02)]);
            trajs.push(TrajectorySeq {
                person_id: format!("p{i}"),
                tokens: vec!["A".into()],
            });
        }
        (RecordBatch::new(schema, ids, rows).unwrap(), trajs)
    }

    #[test]
    fn filter_keeps_center_point() {
        let (batch, trajs) = radius_fixture(1, 0.0);
        let (fb, ft) =
            filter_radius(&batch, &trajs, &demo_zones(), (-27.47, 153.02), 40.0).unwrap();
        assert_eq!(fb.n_rows(), 1);
        assert_eq!(ft.len(), 1);
    }

    #[test]
    fn filter_drops_point_past_boundary() {
        // 41 km north of center: 41 km / 111.195 km per degree of latitude.
        let (batch, trajs) = radius_fixture(2, 41.0 / 111.19508);
        let (fb, _) = filter_radius(&batch, &trajs, &demo_zones(), (-27.47, 153.02), 40.0).unwrap();
        assert_eq!(fb.n_rows(), 1);
    }

    #[test]
    fn filter_matches_independent_distance_check() {
        // 100 persons spread north; an independent spherical-law-of-cosines
        // distance decides which should survive.
        let (batch, trajs) = radius_fixture(100, 0.005);
        let center = (-27.47f64, 153.02f64);
        let radius = 40.0;
        let lat_col = batch.schema.col_idx("origin_lat").unwrap();
        let lon_col = batch.schema.col_idx("origin_lon").unwrap();
        let expected: usize = (0..batch.n_rows())
            .filter(|&i| {
                let lat = batch.cell(i, lat_col).as_num().unwrap().to_radians();
                let lon = batch.cell(i, lon_col).as_num().unwrap().to_radians();
                let c0 = center.0.to_radians();
                let c1 = center.1.to_radians();
                let cos_d =
                    c0.sin() * lat.sin() + c0.cos() * lat.cos() * (lon - c1).cos();
                let d = geo::EARTH_RADIUS_KM * cos_d.clamp(-1.0, 1.0).acos();
                d <= radius
            })
            .count();
        let (fb, ft) = filter_radius(&batch, &trajs, &demo_zones(), center, radius).unwrap();
        assert_eq!(fb.n_rows(), expected);
        assert_eq!(ft.len(), expected);
        assert!(expected < 100, "fixture should push some persons past the radius");
    }

    #[test]
    fn filter_is_idempotent() {
        let (batch, trajs) = radius_fixture(100, 0.005);
        let center = (-27.47, 153.02);
        let (fb1, ft1) = filter_radius(&batch, &trajs, &demo_zones(), center, 40.0).unwrap();
        let (fb2, ft2) = filter_radius(&fb1, &ft1, &demo_zones(), center, 40.0).unwrap();
        assert_eq!(fb1.row_ids, fb2.row_ids);
        assert_eq!(ft1, ft2);
    }

    #[test]
    fn vocabulary_reserved_plus_zones() {
        let trajs = vec![
            TrajectorySeq {
                person_id: "p1".into(),
                tokens: vec!["Kenmore".into(), "St. Lucia".into()],
            },
            TrajectorySeq {
                person_id: "p2".into(),
                tokens: vec!["Kenmore".into()],
            },
        ];
        let vocab = build_vocabulary(&trajs).unwrap();
        assert_eq!(vocab.size(), 5);
        assert_eq!(vocab.token(PAD_IDX), PAD_TOKEN);
        assert_eq!(vocab.token(BOS_IDX), BOS_TOKEN);
        assert_eq!(vocab.token(EOS_IDX), EOS_TOKEN);
        assert_eq!(vocab.idx("Kenmore"), Some(3));
        assert_eq!(vocab.idx("St. Lucia"), Some(4));
    }

    #[test]
    fn vocabulary_order_independent() {
        let a = vec![
            TrajectorySeq { person_id: "1".into(), tokens: vec!["X".into(), "Y".into()] },
            TrajectorySeq { person_id: "2".into(), tokens: vec!["Z".into()] },
        ];
        let mut b = a.clone();
        b.reverse();
        let va = build_vocabulary(&a).unwrap();
        let vb = build_vocabulary(&b).unwrap();
        assert_eq!(va.tokens(), vb.tokens());
    }

    #[test]
    fn vocabulary_empty_corpus_errors() {
        assert!(build_vocabulary(&[]).is_err());
    }
}
