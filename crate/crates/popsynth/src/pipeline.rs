//! Pipeline orchestration: configuration, per-stage seeding, stage execution
//! through checkpoint files (ingest → fit-transforms → train-tabular →
//! train-seq → sample → merge → evaluate), and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fixture;
use crate::gan;
use crate::matcher::{self, CompositeTable, CostOptions};
use crate::metrics::{self, EvalReport};
use crate::schema::{
    build_vocabulary, filter_radius, ingest_population, ingest_trajectories, Cell, ColumnKind,
    PopulationIngest, RecordBatch, TabularSchema, TrajectoryIngest, TrajectorySeq, ZoneRegistry,
};
use crate::seq::{self, SamplerConfig};
use crate::transforms::ColumnEncoding;

pub const STAGES: [&str; 7] = [
    "ingest",
    "fit-transforms",
    "train-tabular",
    "train-seq",
    "sample",
    "merge",
    "evaluate",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    pub center_lat: f64,
    pub center_lon: f64,
    pub radius_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformsConfig {
    pub gmm_components: usize,
    pub em_max_iter: usize,
    pub em_tol: f64,
}

impl Default for TransformsConfig {
    fn default() -> Self {
        Self {
            gmm_components: 10,
            em_max_iter: 100,
            em_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerSection {
    pub n_samples: usize,
    pub temperature: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            temperature: 0.7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSection {
    pub bins: usize,
    pub cell_deg: f64,
    pub conditional_column: String,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            bins: 30,
            cell_deg: 0.02,
            conditional_column: "industry".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MatcherSection {
    /// Weight of destination proximity added to the origin cost (0 = origin
    /// only, the default).
    #[serde(default)]
    pub dest_weight: f64,
}

fn default_n_max() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub persons_csv: PathBuf,
    pub trips_csv: PathBuf,
    pub zones_csv: PathBuf,
    #[serde(default = "fixture::default_schema")]
    pub schema: TabularSchema,
    #[serde(default)]
    pub filter: Option<FilterConfig>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub transforms: TransformsConfig,
    #[serde(default)]
    pub gan: gan::TrainConfig,
    #[serde(default)]
    pub seq: seq::SeqConfig,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub matcher: MatcherSection,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be positive".into()));
        }
        if self.sampler.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.sampler.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if self.metrics.bins == 0 || self.metrics.cell_deg <= 0.0 {
            return Err(Error::Config("metrics bins/cell_deg must be positive".into()));
        }
        if self.transforms.gmm_components == 0 {
            return Err(Error::Config("gmm_components must be positive".into()));
        }
        self.gan.validate()?;
        Ok(())
    }

    /// Canonical config for a fixture directory: data files in `data_dir`,
    /// artifacts in `out_dir`.
    pub fn for_fixture(data_dir: &Path, out_dir: &Path) -> Self {
        Self {
            persons_csv: data_dir.join("persons.csv"),
            trips_csv: data_dir.join("trips.csv"),
            zones_csv: data_dir.join("zones.csv"),
            schema: fixture::default_schema(),
            filter: Some(FilterConfig {
                center_lat: fixture::FIXTURE_CENTER.0,
                center_lon: fixture::FIXTURE_CENTER.1,
                radius_km: 40.0,
            }),
            n_max: 4,
            transforms: TransformsConfig::default(),
            gan: gan::TrainConfig::default(),
            seq: seq::SeqConfig::default(),
            sampler: SamplerSection::default(),
            metrics: MetricsSection::default(),
            matcher: MatcherSection::default(),
            seed: 0,
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(hex_sha256(serde_json::to_string(self)?.as_bytes()))
    }
}

/// Derives a stage seed from the master seed and the stage name, so changing
/// one stage's config cannot perturb another stage's randomness.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: u64,
    pub wall_ms: u128,
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    /// Worker threads used by numeric kernels; the build is single-threaded.
    pub thread_count: usize,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn artifact_count(&self) -> usize {
        self.stages.iter().map(|s| s.artifacts.len()).sum()
    }
}

fn manifest_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.out_dir.join("manifest.json")
}

fn load_or_init_manifest(cfg: &PipelineConfig) -> Result<RunManifest> {
    let path = manifest_path(cfg);
    if path.exists() {
        let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        Ok(manifest)
    } else {
        Ok(RunManifest {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: cfg.sha256()?,
            master_seed: cfg.seed,
            thread_count: 1,
            stages: Vec::new(),
        })
    }
}

fn update_manifest(cfg: &PipelineConfig, record: StageRecord) -> Result<RunManifest> {
    let mut manifest = load_or_init_manifest(cfg)?;
    manifest.config_sha256 = cfg.sha256()?;
    manifest.master_seed = cfg.seed;
    manifest.stages.retain(|s| s.stage != record.stage);
    manifest.stages.push(record);
    std::fs::write(
        manifest_path(cfg),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn write_artifact(cfg: &PipelineConfig, name: &str, bytes: &[u8]) -> Result<ArtifactRecord> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, bytes)?;
    Ok(ArtifactRecord {
        name: name.to_string(),
        path: path.to_string_lossy().into_owned(),
        sha256: hex_sha256(bytes),
    })
}

fn read_artifact(cfg: &PipelineConfig, name: &str) -> Result<String> {
    let path = cfg.out_dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| {
        Error::Config(format!(
            "missing stage input `{}` (run the earlier stages first): {e}",
            path.display()
        ))
    })
}

/// Aligned, filtered training data shared by the downstream stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestedData {
    pub batch: RecordBatch,
    pub trajs: Vec<TrajectorySeq>,
    pub zones: ZoneRegistry,
    pub pop_stats: PopulationIngest,
    pub traj_stats: TrajectoryIngest,
}

impl IngestedData {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        let mut data: IngestedData = serde_json::from_str(&read_artifact(cfg, "ingested.json")?)?;
        data.zones.rebuild_index();
        Ok(data)
    }
}

// ── CSV interchange ───────────────────────────────────────────────────────

/// Serializes a batch in the persons.csv layout (person_id plus the schema
/// columns, categorical cells as category names).
pub fn population_to_csv(batch: &RecordBatch) -> String {
    let mut out = String::from("person_id");
    for col in &batch.schema.columns {
        out.push(',');
        out.push_str(&col.name);
    }
    out.push('\n');
    for i in 0..batch.n_rows() {
        out.push_str(&batch.row_ids[i]);
        for (j, col) in batch.schema.columns.iter().enumerate() {
            out.push(',');
            match (batch.cell(i, j), &col.kind) {
                (Cell::Cat(c), ColumnKind::Categorical { categories }) => {
                    out.push_str(&categories[c])
                }
                (Cell::Num(v), _) => out.push_str(&format!("{v}")),
                (Cell::Cat(_), ColumnKind::Continuous { .. }) => unreachable!("typed batch"),
            }
        }
        out.push('\n');
    }
    out
}

/// Serializes trajectories in the trips.csv layout.
pub fn trips_to_csv(trajs: &[TrajectorySeq]) -> String {
    let mut out = String::from("person_id,seq_index,zone_id\n");
    for traj in trajs {
        for (k, token) in traj.tokens.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", traj.person_id, k + 1, token));
        }
    }
    out
}

/// Serializes the composite table: population columns plus loc_1..loc_n_max,
/// empty cells for short chains.
pub fn composite_to_csv(composite: &CompositeTable, n_max: usize) -> String {
    let mut out = String::from("person_id");
    for col in &composite.population.schema.columns {
        out.push(',');
        out.push_str(&col.name);
    }
    for k in 1..=n_max {
        out.push_str(&format!(",loc_{k}"));
    }
    out.push('\n');
    for i in 0..composite.population.n_rows() {
        out.push_str(&composite.population.row_ids[i]);
        for (j, col) in composite.population.schema.columns.iter().enumerate() {
            out.push(',');
            match (composite.population.cell(i, j), &col.kind) {
                (Cell::Cat(c), ColumnKind::Categorical { categories }) => {
                    out.push_str(&categories[c])
                }
                (Cell::Num(v), _) => out.push_str(&format!("{v}")),
                (Cell::Cat(_), ColumnKind::Continuous { .. }) => unreachable!("typed batch"),
            }
        }
        let tokens = &composite.trajectories[i].tokens;
        for k in 0..n_max {
            out.push(',');
            if k < tokens.len() {
                out.push_str(&tokens[k]);
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a composite CSV back into a table.
pub fn composite_from_csv(
    csv_text: &str,
    schema: &TabularSchema,
    n_max: usize,
) -> Result<CompositeTable> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let mut expected = vec!["person_id".to_string()];
    expected.extend(schema.columns.iter().map(|c| c.name.clone()));
    for k in 1..=n_max {
        expected.push(format!("loc_{k}"));
    }
    if headers != expected {
        return Err(Error::Schema(format!(
            "composite header {headers:?} does not match {expected:?}"
        )));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id = record.get(0).unwrap_or("").to_string();
        let mut row = Vec::with_capacity(schema.columns.len());
        for (j, col) in schema.columns.iter().enumerate() {
            let raw = record.get(1 + j).unwrap_or("");
            let cell = match &col.kind {
                ColumnKind::Categorical { categories } => Cell::Cat(
                    categories
                        .iter()
                        .position(|c| c == raw)
                        .ok_or_else(|| Error::Schema(format!("unknown category `{raw}`")))?,
                ),
                ColumnKind::Continuous { .. } => Cell::Num(
                    raw.parse::<f64>()
                        .map_err(|_| Error::Schema(format!("bad number `{raw}`")))?,
                ),
            };
            row.push(cell);
        }
        let mut tokens = Vec::new();
        for k in 0..n_max {
            let raw = record.get(1 + schema.columns.len() + k).unwrap_or("");
            if !raw.is_empty() {
                tokens.push(raw.to_string());
            }
        }
        trajectories.push(TrajectorySeq {
            person_id: id.clone(),
            tokens,
        });
        ids.push(id);
        rows.push(row);
    }
    Ok(CompositeTable {
        population: RecordBatch::new(schema.clone(), ids, rows)?,
        trajectories,
    })
}

// ── stages ────────────────────────────────────────────────────────────────

pub fn stage_ingest(cfg: &PipelineConfig) -> Result<Vec<ArtifactRecord>> {
    let persons = std::fs::read(&cfg.persons_csv)?;
    let trips = std::fs::read(&cfg.trips_csv)?;
    let zones_bytes = std::fs::read(&cfg.zones_csv)?;

    let zones = ZoneRegistry::from_csv(&zones_bytes)?;
    let (batch, pop_stats) = ingest_population(&persons, &cfg.schema)?;
    let (trajs, traj_stats) = ingest_trajectories(&trips, &zones, cfg.n_max)?;

    let (center, radius) = match &cfg.filter {
        Some(f) => ((f.center_lat, f.center_lon), f.radius_km),
        None => ((0.0, 0.0), f64::INFINITY),
    };
    let (batch, trajs) = filter_radius(&batch, &trajs, &zones, center, radius)?;
    if batch.n_rows() == 0 {
        return Err(Error::Schema(
            "no persons survive ingestion and filtering".into(),
        ));
    }

    let data = IngestedData {
        batch,
        trajs,
        zones,
        pop_stats,
        traj_stats,
    };
    Ok(vec![write_artifact(
        cfg,
        "ingested.json",
        serde_json::to_string(&data)?.as_bytes(),
    )?])
}

pub fn stage_fit_transforms(cfg: &PipelineConfig) -> Result<Vec<ArtifactRecord>> {
    let data = IngestedData::load(cfg)?;
    let encoding = ColumnEncoding::fit(
        &data.batch,
        cfg.transforms.gmm_components,
        cfg.transforms.em_max_iter,
        cfg.transforms.em_tol,
    )?;
    Ok(vec![write_artifact(
        cfg,
        "encoding.json",
        encoding.to_json()?.as_bytes(),
    )?])
}

pub fn stage_train_tabular(cfg: &PipelineConfig) -> Result<Vec<ArtifactRecord>> {
    let data = IngestedData::load(cfg)?;
    let encoding_json = read_artifact(cfg, "encoding.json")?;
    let encoding = ColumnEncoding::from_json(&encoding_json)?;

    let mut gan_cfg = cfg.gan.clone();
    gan_cfg.seed = stage_seed(cfg.seed, "train-tabular");
    let (generator, discriminator, trace) = gan::train(&data.batch, &encoding, &gan_cfg)?;
    let sampler = gan::ConditionSampler::from_batch(&data.batch).ok();

    let ckpt = gan::GanCheckpoint {
        version: gan::GanCheckpoint::VERSION,
        config: gan_cfg,
        encoding_sha256: hex_sha256(encoding_json.as_bytes()),
        generator,
        discriminator,
        sampler,
    };
    Ok(vec![
        write_artifact(cfg, "gan_model.json", ckpt.to_json()?.as_bytes())?,
        write_artifact(cfg, "gan_loss.csv", gan::loss_trace_csv(&trace).as_bytes())?,
    ])
}

pub fn stage_train_seq(cfg: &PipelineConfig) -> Result<Vec<ArtifactRecord>> {
    let data = IngestedData::load(cfg)?;
    let vocab = build_vocabulary(&data.trajs)?;
    let mut seq_cfg = cfg.seq.clone();
    seq_cfg.seed = stage_seed(cfg.seed, "train-seq");
    let (model, trace) = seq::train_seq(&data.trajs, &vocab, cfg.n_max, &seq_cfg)?;
    let ckpt = seq::SeqCheckpoint {
        version: seq::SeqCheckpoint::VERSION,
        config: seq_cfg,
        model,
    };
    Ok(vec![
        write_artifact(cfg, "seq_model.json", ckpt.to_json()?.as_bytes())?,
        write_artifact(cfg, "seq_loss.csv", seq::seq_trace_csv(&trace).as_bytes())?,
    ])
}

pub fn stage_sample(cfg: &PipelineConfig) -> Result<Vec<ArtifactRecord>> {
    let encoding = ColumnEncoding::from_json(&read_artifact(cfg, "encoding.json")?)?;
    let gan_ckpt = gan::GanCheckpoint::from_json(&read_artifact(cfg, "gan_model.json")?)?;
    let seq_ckpt = seq::SeqCheckpoint::from_json(&read_artifact(cfg, "seq_model.json")?)?;

    let n = cfg.sampler.n_samples;
    let mut pop_rng = ChaCha12Rng::seed_from_u64(stage_seed(cfg.seed, "sample-population"));
    let synth_pop = gan::sample_population(
        &gan_ckpt.generator,
        n,
        &encoding,
        gan_ckpt.sampler.as_ref(),
        &mut pop_rng,
    )?;

    let sampler_cfg = SamplerConfig {
        temperature: cfg.sampler.temperature,
        max_len: cfg.n_max,
        seed: stage_seed(cfg.seed, "sample-trajectories"),
    };
    let mut traj_rng = ChaCha12Rng::seed_from_u64(sampler_cfg.seed);
    let synth_trajs = seq::sample_trajectories(&seq_ckpt.model, n, &sampler_cfg, &mut traj_rng)?;

    Ok(vec![
        write_artifact(
            cfg,
            "synthetic_persons.csv",
            population_to_csv(&synth_pop).as_bytes(),
        )?,
        write_artifact(
            cfg,
            "synthetic_trips.csv",
            trips_to_csv(&synth_trajs).as_bytes(),
        )?,
    ])
}

pub fn stage_merge(cfg: &PipelineConfig) -> Result<Vec<ArtifactRecord>> {
    let data = IngestedData::load(cfg)?;
    let persons_csv = read_artifact(cfg, "synthetic_persons.csv")?;
    let trips_csv = read_artifact(cfg, "synthetic_trips.csv")?;

    let (synth_pop, _) = ingest_population(persons_csv.as_bytes(), &cfg.schema)?;
    let (synth_trajs, _) = ingest_trajectories(trips_csv.as_bytes(), &data.zones, cfg.n_max)?;

    let costs = matcher::build_cost_matrix(
        &synth_pop,
        &synth_trajs,
        &data.zones,
        CostOptions {
            dest_weight: cfg.matcher.dest_weight,
        },
    )?;
    let assignment = matcher::hungarian(&costs);
    let composite = matcher::merge(&synth_pop, &synth_trajs, &assignment)?;

    // Conservation check: merging must not alter the trajectory multiset.
    let mut before: Vec<&[String]> = synth_trajs.iter().map(|t| t.tokens.as_slice()).collect();
    let mut after: Vec<&[String]> = composite
        .trajectories
        .iter()
        .map(|t| t.tokens.as_slice())
        .collect();
    before.sort();
    after.sort();
    if before != after {
        return Err(Error::Assignment(
            "merge altered the trajectory multiset".into(),
        ));
    }

    Ok(vec![write_artifact(
        cfg,
        "composite.csv",
        composite_to_csv(&composite, cfg.n_max).as_bytes(),
    )?])
}

pub fn stage_evaluate(cfg: &PipelineConfig) -> Result<Vec<ArtifactRecord>> {
    let data = IngestedData::load(cfg)?;
    let composite_csv = read_artifact(cfg, "composite.csv")?;
    let synth = composite_from_csv(&composite_csv, &cfg.schema, cfg.n_max)?;
    let real = CompositeTable {
        population: data.batch.clone(),
        trajectories: data.trajs.clone(),
    };

    let report = metrics::evaluate(
        &real,
        &synth,
        &data.zones,
        &cfg.metrics.conditional_column,
        cfg.metrics.bins,
        cfg.metrics.cell_deg,
    )?;
    let grid = metrics::spatial_grid(
        &real.trajectories,
        &synth.trajectories,
        &data.zones,
        cfg.metrics.cell_deg,
    )?;

    let mut artifacts = vec![
        write_artifact(
            cfg,
            "eval_report.json",
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?,
        write_artifact(cfg, "spatial_grid.csv", grid.to_csv().as_bytes())?,
        write_artifact(
            cfg,
            "trip_length_distribution.svg",
            metrics::charts::trip_length_chart(
                &report.unconditional.real_hist,
                &report.unconditional.synth_hist,
                "Trip length distribution",
            )
            .as_bytes(),
        )?,
        write_artifact(
            cfg,
            "conditional_scatter.svg",
            metrics::charts::conditional_scatter(
                &report.conditional.real_grid,
                &report.conditional.synth_grid,
                "Conditional trip-length frequencies",
            )
            .as_bytes(),
        )?,
    ];
    if let Some(cmp) = report
        .marginals
        .iter()
        .find(|m| m.column == cfg.metrics.conditional_column)
    {
        artifacts.push(write_artifact(
            cfg,
            "marginal_comparison.svg",
            metrics::charts::marginal_bar_chart(cmp).as_bytes(),
        )?);
    }
    Ok(artifacts)
}

/// Runs one named stage, recording wall time and artifacts in the manifest.
pub fn run_stage(cfg: &PipelineConfig, stage: &'static str) -> Result<StageRecord> {
    let start = Instant::now();
    let artifacts = match stage {
        "ingest" => stage_ingest(cfg),
        "fit-transforms" => stage_fit_transforms(cfg),
        "train-tabular" => stage_train_tabular(cfg),
        "train-seq" => stage_train_seq(cfg),
        "sample" => stage_sample(cfg),
        "merge" => stage_merge(cfg),
        "evaluate" => stage_evaluate(cfg),
        other => return Err(Error::Config(format!("unknown stage `{other}`"))),
    }
    .map_err(|e| e.in_stage(stage))?;
    let record = StageRecord {
        stage: stage.to_string(),
        seed: stage_seed(cfg.seed, stage),
        wall_ms: start.elapsed().as_millis(),
        artifacts,
    };
    update_manifest(cfg, record.clone())?;
    Ok(record)
}

/// Executes all seven stages in order and returns the final manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    for stage in STAGES {
        run_stage(cfg, stage)?;
    }
    load_or_init_manifest(cfg)
}

/// Reads the evaluation report a finished run produced.
pub fn load_eval_report(cfg: &PipelineConfig) -> Result<EvalReport> {
    Ok(serde_json::from_str(&read_artifact(cfg, "eval_report.json")?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_differ_by_stage_and_master() {
        let a = stage_seed(1, "ingest");
        let b = stage_seed(1, "sample");
        let c = stage_seed(2, "ingest");
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, stage_seed(1, "ingest"));
    }

    #[test]
    fn config_round_trips_with_defaults() {
        let json = r#"{
            "persons_csv": "data/persons.csv",
            "trips_csv": "data/trips.csv",
            "zones_csv": "data/zones.csv",
            "out_dir": "out"
        }"#;
        let cfg = PipelineConfig::from_json(json).unwrap();
        assert_eq!(cfg.n_max, 4);
        assert_eq!(cfg.metrics.bins, 30);
        assert_eq!(cfg.sampler.temperature, 0.7);
        assert_eq!(cfg.gan.epochs, 300);
        assert_eq!(cfg.gan.batch_size, 10);
        assert_eq!(cfg.gan.hidden, vec![512, 512, 512]);
        assert_eq!(cfg.seq.epochs, 300);
        assert_eq!(cfg.matcher.dest_weight, 0.0);
        assert_eq!(cfg.schema.columns.len(), 7);
    }

    #[test]
    fn invalid_config_rejected() {
        let json = r#"{
            "persons_csv": "p", "trips_csv": "t", "zones_csv": "z",
            "out_dir": "o", "sampler": {"n_samples": 0, "temperature": 0.7}
        }"#;
        assert!(PipelineConfig::from_json(json).is_err());
    }

    #[test]
    fn composite_csv_round_trip() {
        let schema = fixture::default_schema();
        let ids = vec!["a".to_string(), "b".to_string()];
        let rows = vec![
            vec![
                Cell::Num(31.0),
                Cell::Cat(0),
                Cell::Cat(4),
                Cell::Num(-27.43),
                Cell::Num(153.01),
                Cell::Num(-27.5),
                Cell::Num(153.1),
            ],
            vec![
                Cell::Num(55.5),
                Cell::Cat(1),
                Cell::Cat(15),
                Cell::Num(-27.48),
                Cell::Num(153.07),
                Cell::Num(-27.41),
                Cell::Num(152.99),
            ],
        ];
        let population = RecordBatch::new(schema.clone(), ids, rows).unwrap();
        let trajectories = vec![
            TrajectorySeq {
                person_id: "a".into(),
                tokens: vec!["Z001".into(), "Z002".into()],
            },
            TrajectorySeq {
                person_id: "b".into(),
                tokens: vec!["Z003".into()],
            },
        ];
        let composite = CompositeTable {
            population,
            trajectories,
        };
        let csv_text = composite_to_csv(&composite, 4);
        let first_line = csv_text.lines().next().unwrap();
        assert_eq!(
            first_line,
            "person_id,age,sex,industry,origin_lat,origin_lon,dest_lat,dest_lon,loc_1,loc_2,loc_3,loc_4"
        );
        let back = composite_from_csv(&csv_text, &schema, 4).unwrap();
        assert_eq!(back.population.rows(), composite.population.rows());
        assert_eq!(back.trajectories, composite.trajectories);
    }
}
