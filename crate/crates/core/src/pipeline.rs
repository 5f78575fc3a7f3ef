//! Stage-file pipeline behind the `orbitpool` command.
//!
//! Each stage reads the previous stage's artifacts from the output directory
//! and writes its own:
//!
//! ```text
//! <output>/features/<id>.fot                  extract  (toy extractor)
//! <output>/orbit_images/<id>_r<r>_s<s>.png    extract --debug-images
//! <output>/descriptors/<sequence>.json        pool
//! <output>/hashes/<sequence>.bhi, .bht        hash
//! <output>/eval/<sequence>_<metric>.json      eval (`_hash` suffix for Hamming)
//! <output>/distances.csv                      distance
//! <output>/config.resolved.toml               every run
//! ```
//!
//! Progress is logged to stderr as one JSON object per image per stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::{read_feature_file, write_feature_file, ToyExtractor, ToyExtractorConfig};
use crate::hashing::{binarize, fit_thresholds, HashIndex};
use crate::io::write_atomic;
use crate::orbit::{generate_orbit_images, ImageRGB, OrbitSpec};
use crate::pooling::{apply_sequence, PoolingSequence};
use crate::retrieval::{
    pairwise_distance_report, rank_all, write_distance_csv, DatasetManifest, EvalReport, Metric, Query, SearchIndex,
};
use crate::types::{AxisPresence, Descriptor};

/// Overrides the toy extractor seed.
pub const SEED_ENV: &str = "ORBITPOOL_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExtractorConfig {
    Toy(ToyExtractorConfig),
    /// FOT1 files named `<id>.fot`, produced by an external exporter.
    File {
        dir: PathBuf,
    },
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig::Toy(ToyExtractorConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    /// Root that manifest image paths are relative to.
    #[serde(default = "default_images_dir")]
    pub images: PathBuf,
    pub output: PathBuf,
}

fn default_images_dir() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DistanceConfig {
    /// Image id pairs to compare.
    #[serde(default)]
    pub pairs: Vec<(String, String)>,
    /// Sequences in grammar form; empty means raw, `A:scale`,
    /// `A:scale,A:trans` and `A:scale,A:trans,A:rot`.
    #[serde(default)]
    pub sequences: Vec<String>,
}

/// Everything one pipeline run needs, loaded from a single TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub sequence: String,
    #[serde(default)]
    pub hash: bool,
    pub paths: PathsConfig,
    #[serde(default)]
    pub orbit: OrbitSpec,
    #[serde(default)]
    pub extractor: ExtractorConfig,
    #[serde(default)]
    pub distance: DistanceConfig,
}

impl RunConfig {
    /// Parses a config; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.manifest);
        resolve(&mut cfg.paths.images);
        resolve(&mut cfg.paths.output);
        if let ExtractorConfig::File { dir } = &mut cfg.extractor {
            resolve(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Applies `ORBITPOOL_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var(SEED_ENV) {
            let seed = seed.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={seed} is not a u64")))?;
            if let ExtractorConfig::Toy(toy) = &mut self.extractor {
                toy.seed = seed;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.orbit.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.pooling_sequence().map_err(|e| Error::Config(e.to_string()))?;
        for s in &self.distance.sequences {
            s.parse::<PoolingSequence>().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn pooling_sequence(&self) -> Result<PoolingSequence> {
        self.sequence.parse()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn output(&self) -> &Path {
        &self.paths.output
    }

    pub fn features_dir(&self) -> PathBuf {
        match &self.extractor {
            ExtractorConfig::Toy(_) => self.output().join("features"),
            ExtractorConfig::File { dir } => dir.clone(),
        }
    }

    pub fn feature_path(&self, id: &str) -> PathBuf {
        self.features_dir().join(format!("{}.fot", file_stem(id)))
    }

    pub fn descriptors_path(&self, seq: &PoolingSequence) -> PathBuf {
        self.output().join("descriptors").join(format!("{}.json", seq.slug()))
    }

    pub fn hash_index_path(&self, seq: &PoolingSequence) -> PathBuf {
        self.output().join("hashes").join(format!("{}.bhi", seq.slug()))
    }

    pub fn thresholds_path(&self, seq: &PoolingSequence) -> PathBuf {
        self.output().join("hashes").join(format!("{}.bht", seq.slug()))
    }

    pub fn eval_path(&self, seq: &PoolingSequence, metric: Metric, hashed: bool) -> PathBuf {
        let suffix = if hashed { "_hash" } else { "" };
        self.output().join("eval").join(format!("{}_{}{suffix}.json", seq.slug(), metric))
    }

    pub fn distances_path(&self) -> PathBuf {
        self.output().join("distances.csv")
    }

    fn write_resolved(&self) -> Result<()> {
        write_atomic(&self.output().join("config.resolved.toml"), self.to_toml().as_bytes())
    }
}

/// Maps an image id to a filesystem-safe stem.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

/// Per-invocation switches from the command line.
#[derive(Debug, Clone, Default)]
pub struct StageOptions {
    pub force: bool,
    pub debug_images: bool,
    pub sequence: Option<String>,
    pub metric: Option<Metric>,
}

impl StageOptions {
    fn sequence(&self, cfg: &RunConfig) -> Result<PoolingSequence> {
        match &self.sequence {
            Some(s) => s.parse(),
            None => cfg.pooling_sequence(),
        }
    }
}

/// Outcome of one stage. Per-image failures do not abort the stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageSummary {
    pub stage: &'static str,
    pub written: usize,
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
    pub outputs: Vec<PathBuf>,
}

impl StageSummary {
    fn new(stage: &'static str) -> Self {
        Self { stage, ..Self::default() }
    }

    pub fn is_success(&self) -> bool {
        self.failed.is_empty()
    }
}

fn log_event(stage: &str, id: &str, status: &str, started: Instant, error: Option<&str>) {
    let mut event = serde_json::json!({
        "stage": stage,
        "image": id,
        "status": status,
        "ms": started.elapsed().as_millis() as u64,
    });
    if let Some(e) = error {
        event["error"] = e.into();
    }
    eprintln!("{event}");
}

enum ImageOutcome {
    Written,
    Skipped,
    Failed(String),
}

/// Generates each manifest image's orbit and writes one FOT1 file per image.
/// Existing files are kept unless `force` is set.
pub fn cmd_extract(cfg: &RunConfig, opts: &StageOptions) -> Result<StageSummary> {
    cfg.write_resolved()?;
    let mut summary = StageSummary::new("extract");
    let toy = match &cfg.extractor {
        ExtractorConfig::Toy(toy) => ToyExtractor::new(toy.clone())?,
        ExtractorConfig::File { .. } => {
            // features come from elsewhere; only check they exist
            let manifest = DatasetManifest::read(&cfg.manifest)?;
            for img in &manifest.images {
                let path = cfg.feature_path(&img.id);
                if path.exists() {
                    summary.skipped += 1;
                } else {
                    summary.failed.push((img.id.clone(), format!("missing feature file {}", path.display())));
                }
            }
            return Ok(summary);
        }
    };
    let manifest = DatasetManifest::read(&cfg.manifest)?;
    let axes = AxisPresence { rotation: cfg.orbit.rotation_enabled, scale: cfg.orbit.scale_enabled };
    let debug_dir = cfg.output().join("orbit_images");

    let outcomes: Vec<(String, ImageOutcome)> = manifest
        .images
        .par_iter()
        .map(|img| {
            let started = Instant::now();
            let out_path = cfg.feature_path(&img.id);
            if out_path.exists() && !opts.force {
                log_event("extract", &img.id, "skipped", started, None);
                return (img.id.clone(), ImageOutcome::Skipped);
            }
            let result = (|| -> Result<()> {
                let image = ImageRGB::open(cfg.paths.images.join(&img.path))?;
                let orbit = generate_orbit_images(&image, &cfg.orbit)?;
                if opts.debug_images {
                    std::fs::create_dir_all(&debug_dir)?;
                    let n_scale = cfg.orbit.n_scale();
                    for (i, o) in orbit.iter().enumerate() {
                        let name = format!("{}_r{}_s{}.png", file_stem(&img.id), i / n_scale, i % n_scale);
                        o.save_png(debug_dir.join(name))?;
                    }
                }
                let tensor = toy.extract_orbit(&orbit, cfg.orbit.n_rot(), cfg.orbit.n_scale())?.with_axes(axes);
                write_feature_file(&tensor, &out_path)
            })();
            match result {
                Ok(()) => {
                    log_event("extract", &img.id, "ok", started, None);
                    (img.id.clone(), ImageOutcome::Written)
                }
                Err(e) => {
                    let msg = e.to_string();
                    log_event("extract", &img.id, "error", started, Some(&msg));
                    (img.id.clone(), ImageOutcome::Failed(msg))
                }
            }
        })
        .collect();

    for (id, outcome) in outcomes {
        match outcome {
            ImageOutcome::Written => {
                summary.written += 1;
                summary.outputs.push(cfg.feature_path(&id));
            }
            ImageOutcome::Skipped => summary.skipped += 1,
            ImageOutcome::Failed(msg) => summary.failed.push((id, msg)),
        }
    }
    Ok(summary)
}

/// On-disk descriptor set for one pooling sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorFile {
    pub sequence: String,
    pub sequence_tag: String,
    pub dims: usize,
    pub entries: Vec<DescriptorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorEntry {
    pub id: String,
    pub values: Vec<f32>,
}

impl DescriptorFile {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn descriptors(&self) -> BTreeMap<String, Descriptor> {
        self.entries
            .iter()
            .map(|e| (e.id.clone(), Descriptor::new(e.values.clone(), self.sequence_tag.clone())))
            .collect()
    }
}

/// Pools every image's feature orbit with the configured sequence.
pub fn cmd_pool(cfg: &RunConfig, opts: &StageOptions) -> Result<StageSummary> {
    cfg.write_resolved()?;
    let seq = opts.sequence(cfg)?;
    let manifest = DatasetManifest::read(&cfg.manifest)?;
    let mut summary = StageSummary::new("pool");
    if !cfg.features_dir().is_dir() {
        return Err(Error::MissingStage { stage: "extract", path: cfg.features_dir() });
    }
    let results: Vec<(String, Result<Descriptor>)> = manifest
        .images
        .par_iter()
        .map(|img| {
            let started = Instant::now();
            let path = cfg.feature_path(&img.id);
            let result = if path.exists() {
                read_feature_file(&path).and_then(|t| apply_sequence(&t, &seq))
            } else {
                Err(Error::MissingStage { stage: "extract", path })
            };
            match &result {
                Ok(_) => log_event("pool", &img.id, "ok", started, None),
                Err(e) => log_event("pool", &img.id, "error", started, Some(&e.to_string())),
            }
            (img.id.clone(), result)
        })
        .collect();

    let mut entries = Vec::new();
    let mut dims = None;
    for (id, result) in results {
        match result {
            Ok(d) if dims.is_some_and(|n| n != d.dims()) => {
                summary.failed.push((id, format!("descriptor has {} dims, others have {}", d.dims(), dims.unwrap())))
            }
            Ok(d) => {
                dims = Some(d.dims());
                entries.push(DescriptorEntry { id, values: d.values().to_vec() });
            }
            Err(e) => summary.failed.push((id, e.to_string())),
        }
    }
    let file = DescriptorFile {
        sequence: seq.to_string(),
        sequence_tag: crate::pooling::sequence_tag(&seq),
        dims: dims.unwrap_or(0),
        entries,
    };
    let path = cfg.descriptors_path(&seq);
    write_atomic(&path, serde_json::to_string(&file)?.as_bytes())?;
    summary.written = file.entries.len();
    summary.outputs.push(path);
    Ok(summary)
}

fn load_descriptors(cfg: &RunConfig, seq: &PoolingSequence) -> Result<DescriptorFile> {
    let path = cfg.descriptors_path(seq);
    if !path.exists() {
        return Err(Error::MissingStage { stage: "pool", path });
    }
    DescriptorFile::read(&path)
}

/// Fits thresholds on database descriptors and hashes every descriptor.
pub fn cmd_hash(cfg: &RunConfig, opts: &StageOptions) -> Result<StageSummary> {
    cfg.write_resolved()?;
    let seq = opts.sequence(cfg)?;
    let manifest = DatasetManifest::read(&cfg.manifest)?;
    let file = load_descriptors(cfg, &seq)?;
    let descriptors = file.descriptors();
    let database: Vec<Descriptor> =
        manifest.database_images().filter_map(|img| descriptors.get(&img.id).cloned()).collect();
    let source = format!("{}#database", cfg.manifest.display());
    let thresholds = fit_thresholds(&database, source)?;
    let mut index = HashIndex::new(thresholds.dims());
    for entry in &file.entries {
        let d = Descriptor::new(entry.values.clone(), file.sequence_tag.clone());
        index.push(entry.id.clone(), binarize(&d, &thresholds)?)?;
    }
    let mut summary = StageSummary::new("hash");
    let (index_path, thresholds_path) = (cfg.hash_index_path(&seq), cfg.thresholds_path(&seq));
    index.write(&index_path)?;
    thresholds.write(&thresholds_path)?;
    summary.written = index.len();
    summary.outputs = vec![index_path, thresholds_path];
    Ok(summary)
}

/// Ranks every query and writes the metric document. Uses the hash index
/// with Hamming distance when `hash = true`, float descriptors otherwise.
pub fn cmd_eval(cfg: &RunConfig, opts: &StageOptions) -> Result<(StageSummary, EvalReport)> {
    cfg.write_resolved()?;
    let seq = opts.sequence(cfg)?;
    let metric = opts.metric.unwrap_or(Metric::Map);
    let manifest = DatasetManifest::read(&cfg.manifest)?;
    let is_db = |id: &str| manifest.image(id).is_some_and(|i| i.role.is_database());

    let (lists, distance, dims) = if cfg.hash {
        let path = cfg.hash_index_path(&seq);
        if !path.exists() {
            return Err(Error::MissingStage { stage: "hash", path });
        }
        let all = HashIndex::read(&path)?;
        let mut db = HashIndex::new(all.n_bits());
        for (id, h) in all.entries().iter().filter(|(id, _)| is_db(id)) {
            db.push(id.clone(), h.clone())?;
        }
        let index = SearchIndex::hash(db);
        let lists = rank_all(&manifest, &index, |qid| all.get(qid).map(Query::Hash))?;
        (lists, index.distance_name(), all.n_bits())
    } else {
        let file = load_descriptors(cfg, &seq)?;
        let descriptors = file.descriptors();
        let db = descriptors.iter().filter(|(id, _)| is_db(id)).map(|(id, d)| (id.clone(), d.clone())).collect();
        let index = SearchIndex::float(db)?;
        let lists = rank_all(&manifest, &index, |qid| descriptors.get(qid).map(Query::Float))?;
        (lists, index.distance_name(), file.dims)
    };
    let scores = metric.evaluate(&lists, &manifest)?;
    let report = EvalReport {
        metric,
        value: scores.value,
        per_query: scores.per_query,
        config: serde_json::json!({
            "sequence": seq.to_string(),
            "distance": distance,
            "hash": cfg.hash,
            "dims": dims,
            "protocol": manifest.protocol,
            "ap_variant": "non-interpolated, junk removed",
            "tie_break": "lexicographic id",
            "n_queries": lists.len(),
        }),
    };
    let path = cfg.eval_path(&seq, metric, cfg.hash);
    write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    let summary = StageSummary { stage: "eval", written: 1, outputs: vec![path], ..StageSummary::default() };
    Ok((summary, report))
}

/// The sequences compared when a distance config lists none.
pub fn default_distance_sequences() -> Vec<PoolingSequence> {
    ["", "A:scale", "A:scale,A:trans", "A:scale,A:trans,A:rot"]
        .iter()
        .map(|s| s.parse().expect("valid built-in sequence"))
        .collect()
}

/// Writes `pair_id,sequence,distance` rows for every configured pair.
pub fn cmd_distance(cfg: &RunConfig, opts: &StageOptions) -> Result<StageSummary> {
    cfg.write_resolved()?;
    let sequences: Vec<PoolingSequence> = match (&opts.sequence, cfg.distance.sequences.is_empty()) {
        (Some(s), _) => vec![s.parse()?],
        (None, true) => default_distance_sequences(),
        (None, false) => cfg.distance.sequences.iter().map(|s| s.parse()).collect::<Result<_>>()?,
    };
    if cfg.distance.pairs.is_empty() {
        return Err(Error::Config("distance.pairs is empty".into()));
    }
    let mut summary = StageSummary::new("distance");
    let mut rows = Vec::new();
    for (a, b) in &cfg.distance.pairs {
        let started = Instant::now();
        let pair_id = format!("{a}|{b}");
        let load = |id: &str| {
            let path = cfg.feature_path(id);
            if path.exists() {
                read_feature_file(&path)
            } else {
                Err(Error::MissingStage { stage: "extract", path })
            }
        };
        match load(a)
            .and_then(|ta| Ok((ta, load(b)?)))
            .and_then(|(ta, tb)| pairwise_distance_report(&pair_id, (&ta, &tb), &sequences))
        {
            Ok(r) => {
                log_event("distance", &pair_id, "ok", started, None);
                rows.extend(r);
            }
            Err(e) => {
                log_event("distance", &pair_id, "error", started, Some(&e.to_string()));
                summary.failed.push((pair_id, e.to_string()));
            }
        }
    }
    let mut buf = Vec::new();
    write_distance_csv(&rows, &mut buf)?;
    let path = cfg.distances_path();
    write_atomic(&path, &buf)?;
    summary.written = rows.len();
    summary.outputs.push(path);
    Ok(summary)
}
