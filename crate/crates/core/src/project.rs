//! On-disk project directory.
//!
//! ```text
//! project.json                 corpus manifest, labels per target
//! corpus/<id>.<ext>            ingested images, id = content hash
//! prototypes/manifest.json     categories and prototype rects
//! prototypes/<id>.png          prototype crops
//! prototypes/matrix.json       last distance matrix with a fingerprint
//! datasets/<id>.json           extracted datasets (+ <id>.audit.jsonl)
//! reports/<id>.json            cv and k-means reports
//! cache/complexity.bin         LZ76 complexities keyed by sha256
//! ```
//!
//! Paths stored in manifests are relative to the project root. Every file
//! is replaced atomically through a temporary file in the same directory.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complexity::lz76_complexity;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{assemble_dataset, audit_jsonl, extract_corpus, ComplexityLookup};
use crate::imaging::{decode_image, PixelRect, RgbImage};
use crate::learn::{cross_validate, kmeans, Algorithm, ClusterReport, CvReport};
use crate::prototypes::{
    cut_clusters, distance_matrix, hierarchical_cluster, purity_check, Dendrogram, DendrogramNode, DistanceMatrix,
    Linkage, Prototype, PrototypeSet, PurityReport,
};
use crate::strdist::ComplexityCachedString;

pub const FORMAT_VERSION: u32 = 1;

const PROJECT_FILE: &str = "project.json";
const PROTO_MANIFEST: &str = "prototypes/manifest.json";
const MATRIX_FILE: &str = "prototypes/matrix.json";
const CACHE_FILE: &str = "cache/complexity.bin";
const CACHE_MAGIC: &[u8; 8] = b"UIDLZC01";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub file: String,
    pub width: u32,
    pub height: u32,
    /// File name at ingestion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub images: BTreeMap<String, ImageEntry>,
    /// Target variable → image id → label.
    #[serde(default)]
    pub labels: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct PrototypeEntry {
    id: String,
    category: String,
    source_id: String,
    rect: PixelRect,
    file: String,
    complexity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct PrototypeManifest {
    format_version: u32,
    categories: Vec<String>,
    next_id: u64,
    prototypes: Vec<PrototypeEntry>,
}

/// A distance matrix together with the prototype state it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredMatrix {
    pub fingerprint: String,
    pub matrix: DistanceMatrix,
}

/// Dendrogram, cut and purity verdict for the current prototypes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DendrogramReport {
    pub dendrogram: Dendrogram,
    pub tree: DendrogramNode,
    pub newick: String,
    pub cut: usize,
    pub clusters: Vec<Vec<String>>,
    pub purity: PurityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Cv { dataset_id: String, report: CvReport },
    Kmeans { dataset_id: String, report: ClusterReport },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IngestFailure {
    pub path: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// One id per successfully read input, in input order (duplicates repeat).
    pub ids: Vec<String>,
    pub failures: Vec<IngestFailure>,
}

/// Memoized complexities keyed by the sha256 of the symbol string.
#[derive(Debug, Default)]
pub struct ComplexityCache {
    map: RwLock<HashMap<[u8; 32], u32>>,
}

impl ComplexityCache {
    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.write().expect("cache lock").clear();
    }

    fn to_bytes(&self) -> Vec<u8> {
        let map = self.map.read().expect("cache lock");
        let mut entries: Vec<(&[u8; 32], &u32)> = map.iter().collect();
        entries.sort_unstable();
        let mut out = Vec::with_capacity(16 + entries.len() * 36);
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        for (k, v) in entries {
            out.extend_from_slice(k);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// `None` on any malformed input.
    fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let body = bytes.strip_prefix(CACHE_MAGIC)?;
        let (n, body) = body.split_first_chunk::<8>()?;
        let n = u64::from_le_bytes(*n) as usize;
        if body.len() != n.checked_mul(36)? {
            return None;
        }
        let map = body
            .chunks_exact(36)
            .map(|c| {
                let k: [u8; 32] = c[..32].try_into().expect("chunk size");
                let v = u32::from_le_bytes(c[32..].try_into().expect("chunk size"));
                (k, v)
            })
            .collect();
        Some(Self { map: RwLock::new(map) })
    }
}

impl ComplexityLookup for ComplexityCache {
    fn complexity(&self, s: &[u8]) -> usize {
        let key: [u8; 32] = Sha256::digest(s).into();
        if let Some(&c) = self.map.read().expect("cache lock").get(&key) {
            return c as usize;
        }
        let c = lz76_complexity(s);
        self.map.write().expect("cache lock").insert(key, c as u32);
        c
    }
}

pub struct Project {
    root: PathBuf,
    manifest: CorpusManifest,
    prototypes: PrototypeSet,
    cache: ComplexityCache,
}

impl std::fmt::Debug for Project {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Project")
            .field("root", &self.root)
            .field("images", &self.manifest.images.len())
            .field("prototypes", &self.prototypes.len())
            .finish()
    }
}

impl PartialEq for Project {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.manifest == other.manifest && self.prototypes == other.prototypes
    }
}

fn content_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..16].to_string()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().expect("project paths have a parent");
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Manifest {
        file: path.to_path_buf(),
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Like [`read_json`], checking `format_version` before the schema.
fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    #[derive(Deserialize)]
    struct Probe {
        format_version: Option<u32>,
    }
    let probe: Probe = read_json(path)?;
    match probe.format_version {
        Some(FORMAT_VERSION) => read_json(path),
        Some(found) => Err(Error::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        }),
        None => Err(Error::Manifest {
            file: path.to_path_buf(),
            path: "format_version".into(),
            message: "missing field `format_version`".into(),
        }),
    }
}

fn hashed_id(prefix: &str, bytes: &[u8]) -> String {
    format!("{prefix}-{}", &hex::encode(Sha256::digest(bytes))[..12])
}

fn check_artifact_id(kind: &'static str, id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::UnknownId {
            kind,
            id: id.to_string(),
        })
    }
}

impl Project {
    /// Open the project at `root`, creating the skeleton when absent.
    pub fn open_or_init(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        if root.join(PROJECT_FILE).exists() {
            return Self::open(root);
        }
        for d in ["corpus", "prototypes", "datasets", "reports", "cache"] {
            fs::create_dir_all(root.join(d))?;
        }
        let p = Self {
            root: root.to_path_buf(),
            manifest: CorpusManifest {
                format_version: FORMAT_VERSION,
                images: BTreeMap::new(),
                labels: BTreeMap::new(),
            },
            prototypes: PrototypeSet::new(),
            cache: ComplexityCache::default(),
        };
        p.save_manifest()?;
        p.save_prototypes()?;
        Ok(p)
    }

    /// Open and validate an existing project.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if !root.join(PROJECT_FILE).is_file() {
            return Err(Error::NotAProject(root));
        }
        let manifest: CorpusManifest = read_versioned(&root.join(PROJECT_FILE))?;
        for (id, e) in &manifest.images {
            if !root.join(&e.file).is_file() {
                return Err(Error::MissingFile {
                    kind: "image",
                    id: id.clone(),
                    path: PathBuf::from(&e.file),
                });
            }
        }
        for (target, map) in &manifest.labels {
            if let Some(id) = map.keys().find(|id| !manifest.images.contains_key(*id)) {
                return Err(Error::Manifest {
                    file: root.join(PROJECT_FILE),
                    path: format!("labels.{target}.{id}"),
                    message: format!("label for unknown image `{id}`"),
                });
            }
        }
        let prototypes = Self::load_prototypes(&root)?;
        let cache = fs::read(root.join(CACHE_FILE))
            .ok()
            .and_then(|b| ComplexityCache::from_bytes(&b))
            .unwrap_or_default();
        Ok(Self {
            root,
            manifest,
            prototypes,
            cache,
        })
    }

    fn load_prototypes(root: &Path) -> Result<PrototypeSet> {
        let path = root.join(PROTO_MANIFEST);
        if !path.exists() {
            return Ok(PrototypeSet::new());
        }
        let pm: PrototypeManifest = read_versioned(&path)?;
        let mut ps = PrototypeSet::with_categories(&pm.categories)?;
        for e in pm.prototypes {
            let cat = ps.category_index(&e.category).ok_or_else(|| Error::Manifest {
                file: path.clone(),
                path: format!("prototypes.{}.category", e.id),
                message: format!("unknown category `{}`", e.category),
            })?;
            let file = root.join(&e.file);
            let bytes = fs::read(&file).map_err(|_| Error::MissingFile {
                kind: "prototype",
                id: e.id.clone(),
                path: PathBuf::from(&e.file),
            })?;
            let image = decode_image(&bytes)?;
            if (image.width(), image.height()) != (e.rect.width, e.rect.height) {
                return Err(Error::Manifest {
                    file: path.clone(),
                    path: format!("prototypes.{}.rect", e.id),
                    message: format!("crop is {}x{}, rect says {}", image.width(), image.height(), e.rect),
                });
            }
            let proto = Prototype::from_crop(e.id.clone(), cat, e.source_id, e.rect, image);
            ComplexityCachedString::verified(&e.id, proto.cached().string().clone(), e.complexity)?;
            ps.insert(proto)?;
        }
        ps.set_next_id(pm.next_id);
        Ok(ps)
    }

    fn save_manifest(&self) -> Result<()> {
        write_json(&self.root.join(PROJECT_FILE), &self.manifest)
    }

    fn save_prototypes(&self) -> Result<()> {
        let pm = PrototypeManifest {
            format_version: FORMAT_VERSION,
            categories: self.prototypes.category_names(),
            next_id: self.prototypes.next_id(),
            prototypes: self
                .prototypes
                .iter()
                .map(|p| PrototypeEntry {
                    id: p.id.clone(),
                    category: self.prototypes.categories()[p.category].name.clone(),
                    source_id: p.source_id.clone(),
                    rect: p.rect,
                    file: format!("prototypes/{}.png", p.id),
                    complexity: p.complexity(),
                })
                .collect(),
        };
        write_json(&self.root.join(PROTO_MANIFEST), &pm)
    }

    /// Persist the complexity cache.
    pub fn save_cache(&self) -> Result<()> {
        write_atomic(&self.root.join(CACHE_FILE), &self.cache.to_bytes())
    }

    /// Drop every memoized complexity, in memory and on disk.
    pub fn invalidate_cache(&self) -> Result<()> {
        self.cache.clear();
        match fs::remove_file(self.root.join(CACHE_FILE)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }

    pub fn cache(&self) -> &ComplexityCache {
        &self.cache
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn prototypes(&self) -> &PrototypeSet {
        &self.prototypes
    }

    // ---- corpus ----

    pub fn image(&self, id: &str) -> Result<&ImageEntry> {
        self.manifest.images.get(id).ok_or_else(|| Error::UnknownId {
            kind: "image",
            id: id.to_string(),
        })
    }

    pub fn image_bytes(&self, id: &str) -> Result<Vec<u8>> {
        let e = self.image(id)?;
        Ok(fs::read(self.root.join(&e.file))?)
    }

    pub fn load_image(&self, id: &str) -> Result<RgbImage> {
        decode_image(&self.image_bytes(id)?)
    }

    /// Add one encoded image. Identical bytes map to the same id and are
    /// stored once.
    pub fn ingest_bytes(&mut self, name: Option<&str>, bytes: &[u8]) -> Result<String> {
        let id = content_id(bytes);
        if self.manifest.images.contains_key(&id) {
            return Ok(id);
        }
        let img = decode_image(bytes)?;
        let ext = match image::guess_format(bytes) {
            Ok(image::ImageFormat::Jpeg) => "jpg",
            _ => "png",
        };
        let file = format!("corpus/{id}.{ext}");
        write_atomic(&self.root.join(&file), bytes)?;
        self.manifest.images.insert(
            id.clone(),
            ImageEntry {
                file,
                width: img.width(),
                height: img.height(),
                name: name.map(str::to_string),
            },
        );
        self.save_manifest()?;
        Ok(id)
    }

    /// Ingest files; unreadable or undecodable files are reported and skipped.
    pub fn ingest_images<P: AsRef<Path>>(&mut self, paths: &[P]) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        for p in paths {
            let p = p.as_ref();
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned());
            let outcome = fs::read(p).map_err(Error::from).and_then(|b| self.ingest_bytes(name.as_deref(), &b));
            match outcome {
                Ok(id) => report.ids.push(id),
                Err(e) if e.is_validation() || matches!(e, Error::Io(_)) => report.failures.push(IngestFailure {
                    path: p.display().to_string(),
                    message: e.to_string(),
                }),
                Err(e) => return Err(e),
            }
        }
        Ok(report)
    }

    /// Merge labels for `target`; existing labels for other ids are kept.
    pub fn set_labels(&mut self, target: &str, labels: &BTreeMap<String, String>) -> Result<()> {
        if target.trim().is_empty() {
            return Err(Error::invalid("target", "must not be empty"));
        }
        if let Some(id) = labels.keys().find(|id| !self.manifest.images.contains_key(*id)) {
            return Err(Error::UnknownId {
                kind: "image",
                id: id.clone(),
            });
        }
        if let Some((id, _)) = labels.iter().find(|(_, l)| l.is_empty()) {
            return Err(Error::invalid(format!("labels.{id}"), "label must not be empty"));
        }
        let map = self.manifest.labels.entry(target.to_string()).or_default();
        map.extend(labels.iter().map(|(k, v)| (k.clone(), v.clone())));
        self.save_manifest()
    }

    pub fn labels(&self, target: &str) -> Option<&BTreeMap<String, String>> {
        self.manifest.labels.get(target)
    }

    // ---- prototypes ----

    pub fn add_category(&mut self, name: &str) -> Result<()> {
        self.prototypes.add_category(name)?;
        self.save_prototypes()
    }

    /// Remove a category together with its prototypes.
    pub fn remove_category(&mut self, name: &str) -> Result<()> {
        let idx = self.prototypes.category_index(name).ok_or_else(|| Error::UnknownId {
            kind: "category",
            id: name.to_string(),
        })?;
        let doomed: Vec<String> = self.prototypes.in_category(idx).map(|p| p.id.clone()).collect();
        self.prototypes.remove_category(name)?;
        self.save_prototypes()?;
        for id in doomed {
            let _ = fs::remove_file(self.proto_path(&id));
        }
        Ok(())
    }

    fn proto_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("prototypes/{id}.png"))
    }

    /// Crop `rect` from corpus image `source_id` into a new prototype.
    pub fn add_prototype(&mut self, category: &str, source_id: &str, rect: PixelRect) -> Result<String> {
        if self.prototypes.category_index(category).is_none() {
            return Err(Error::UnknownId {
                kind: "category",
                id: category.to_string(),
            });
        }
        let source = self.load_image(source_id)?;
        let proto = self.prototypes.add_prototype(category, source_id, &source, rect)?;
        let (id, png) = (proto.id.clone(), proto.image().to_png()?);
        write_atomic(&self.proto_path(&id), &png)?;
        self.save_prototypes()?;
        Ok(id)
    }

    pub fn remove_prototype(&mut self, id: &str) -> Result<()> {
        self.prototypes.remove_prototype(id)?;
        self.save_prototypes()?;
        let _ = fs::remove_file(self.proto_path(id));
        Ok(())
    }

    pub fn prototype_png(&self, id: &str) -> Result<Vec<u8>> {
        if self.prototypes.get(id).is_none() {
            return Err(Error::UnknownId {
                kind: "prototype",
                id: id.to_string(),
            });
        }
        Ok(fs::read(self.proto_path(id))?)
    }

    /// Hash of the ordered prototype ids, categories and crop strings.
    pub fn prototype_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for p in self.prototypes.ordered() {
            h.update(p.id.as_bytes());
            h.update([0]);
            h.update(self.prototypes.categories()[p.category].name.as_bytes());
            h.update([0]);
            h.update(p.rect.width.to_le_bytes());
            h.update(p.cached().string().as_slice());
        }
        hex::encode(h.finalize())
    }

    /// Compute `H` for the current prototypes and persist it.
    pub fn compute_matrix(&self) -> Result<DistanceMatrix> {
        let matrix = distance_matrix(&self.prototypes)?;
        write_json(
            &self.root.join(MATRIX_FILE),
            &StoredMatrix {
                fingerprint: self.prototype_fingerprint(),
                matrix: matrix.clone(),
            },
        )?;
        Ok(matrix)
    }

    /// The stored matrix, if it was computed from the current prototypes.
    pub fn fresh_matrix(&self) -> Result<Option<DistanceMatrix>> {
        let path = self.root.join(MATRIX_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let stored: StoredMatrix = read_json(&path)?;
        Ok((stored.fingerprint == self.prototype_fingerprint()).then_some(stored.matrix))
    }

    /// Dendrogram of the stored matrix cut into `cut` groups (default `M`),
    /// with the purity verdict. Fails with a conflict when the matrix is
    /// missing or stale.
    pub fn dendrogram(&self, cut: Option<usize>, linkage: Linkage) -> Result<DendrogramReport> {
        let matrix = self
            .fresh_matrix()?
            .ok_or_else(|| Error::Conflict("distance matrix is missing or stale; recompute it".into()))?;
        dendrogram_report(&matrix, &self.prototypes, cut, linkage)
    }

    // ---- datasets and reports ----

    /// Extract the whole corpus (sorted by id) into a dataset, labeled by
    /// `target` when given. Returns the content-derived dataset id.
    pub fn extract(
        &self,
        target: Option<&str>,
        audit: bool,
        progress: &(dyn Fn(usize, usize) + Sync),
    ) -> Result<String> {
        let labels = match target {
            Some(t) => Some((
                t,
                self.labels(t).ok_or_else(|| Error::UnknownId {
                    kind: "target",
                    id: t.to_string(),
                })?,
            )),
            None => None,
        };
        if self.manifest.images.is_empty() {
            return Err(Error::invalid("corpus", "corpus is empty"));
        }
        if let Some((_, map)) = labels {
            let missing: Vec<String> =
                self.manifest.images.keys().filter(|id| !map.contains_key(*id)).cloned().collect();
            if !missing.is_empty() {
                return Err(Error::MissingLabels(missing));
            }
        }
        self.prototypes.check_complete()?;
        let corpus = self
            .manifest
            .images
            .keys()
            .map(|id| Ok((id.clone(), self.load_image(id)?)))
            .collect::<Result<Vec<_>>>()?;
        let total = corpus.len();
        let rows = extract_corpus(&corpus, &self.prototypes, audit, &self.cache, &|done| progress(done, total))?;
        let mut audit_log = String::new();
        if audit {
            for r in &rows {
                audit_log.push_str(&audit_jsonl(&r.image_id, &r.extraction.attributions)?);
            }
        }
        let dataset = assemble_dataset(rows, self.prototypes.category_names(), labels)?;
        let json = dataset.export(crate::dataset::ExportFormat::Json)?;
        let id = hashed_id("ds", json.as_bytes());
        write_atomic(&self.root.join(format!("datasets/{id}.json")), json.as_bytes())?;
        if audit {
            write_atomic(&self.root.join(format!("datasets/{id}.audit.jsonl")), audit_log.as_bytes())?;
        }
        self.save_cache()?;
        Ok(id)
    }

    pub fn dataset(&self, id: &str) -> Result<Dataset> {
        check_artifact_id("dataset", id)?;
        let path = self.root.join(format!("datasets/{id}.json"));
        if !path.is_file() {
            return Err(Error::UnknownId {
                kind: "dataset",
                id: id.to_string(),
            });
        }
        read_json(&path)
    }

    /// `.audit.jsonl` written by an audited extraction.
    pub fn dataset_audit(&self, id: &str) -> Result<String> {
        check_artifact_id("dataset", id)?;
        fs::read_to_string(self.root.join(format!("datasets/{id}.audit.jsonl"))).map_err(|_| Error::UnknownId {
            kind: "audit",
            id: id.to_string(),
        })
    }

    fn list_ids(&self, dir: &str, suffix: &str) -> Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(self.root.join(dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(suffix)).map(str::to_string))
            .filter(|n| !n.contains('.'))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn datasets(&self) -> Result<Vec<String>> {
        self.list_ids("datasets", ".json")
    }

    pub fn reports(&self) -> Result<Vec<String>> {
        self.list_ids("reports", ".json")
    }

    fn save_report(&self, report: &Report) -> Result<String> {
        let prefix = match report {
            Report::Cv { .. } => "cv",
            Report::Kmeans { .. } => "km",
        };
        let mut json = serde_json::to_string_pretty(report)?;
        json.push('\n');
        let id = hashed_id(prefix, json.as_bytes());
        write_atomic(&self.root.join(format!("reports/{id}.json")), json.as_bytes())?;
        Ok(id)
    }

    pub fn report(&self, id: &str) -> Result<Report> {
        check_artifact_id("report", id)?;
        let path = self.root.join(format!("reports/{id}.json"));
        if !path.is_file() {
            return Err(Error::UnknownId {
                kind: "report",
                id: id.to_string(),
            });
        }
        read_json(&path)
    }

    /// Cross-validate on a stored dataset and store the report.
    pub fn run_cv(&self, dataset_id: &str, algorithm: Algorithm, folds: usize, seed: u64) -> Result<(String, CvReport)> {
        let d = self.dataset(dataset_id)?;
        let report = cross_validate(&d, algorithm, folds, seed)?;
        let id = self.save_report(&Report::Cv {
            dataset_id: dataset_id.to_string(),
            report: report.clone(),
        })?;
        Ok((id, report))
    }

    /// Cluster a stored dataset and store the report.
    pub fn run_kmeans(&self, dataset_id: &str, k: usize, seed: u64) -> Result<(String, ClusterReport)> {
        let d = self.dataset(dataset_id)?;
        let report = kmeans(&d, k, seed)?;
        let id = self.save_report(&Report::Kmeans {
            dataset_id: dataset_id.to_string(),
            report: report.clone(),
        })?;
        Ok((id, report))
    }
}

/// Library-level dendrogram, cut and purity for a matrix over `ps`.
pub fn dendrogram_report(
    matrix: &DistanceMatrix,
    ps: &PrototypeSet,
    cut: Option<usize>,
    linkage: Linkage,
) -> Result<DendrogramReport> {
    let dendrogram = hierarchical_cluster(matrix, linkage);
    let m = cut.unwrap_or(ps.num_categories());
    let clusters = cut_clusters(&dendrogram, m)?;
    let purity = purity_check(&clusters, ps);
    Ok(DendrogramReport {
        tree: dendrogram.tree(),
        newick: dendrogram.newick(),
        dendrogram,
        cut: m,
        clusters,
        purity,
    })
}
