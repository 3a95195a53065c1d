//! Feature vectors: scan an image with non-overlapping windows the size of
//! the largest prototype, vote each window into the category whose
//! prototypes are nearest in UID (Euclidean norm over the category), and
//! normalize the vote counts.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{lz76_complexity, SymbolString};
use crate::dataset::{Dataset, DatasetRow};
use crate::error::{Error, Result};
use crate::imaging::{linearize, tile_rects, to_grayscale, GrayImage, PixelRect, RgbImage};
use crate::prototypes::{Prototype, PrototypeSet};
use crate::strdist::{normalized_distance, ComplexityCachedString};

/// Source of LZ76 complexities; lets callers memoize parses across runs.
pub trait ComplexityLookup: Sync {
    fn complexity(&self, s: &[u8]) -> usize;
}

/// Parses every string afresh.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoCache;

impl ComplexityLookup for NoCache {
    fn complexity(&self, s: &[u8]) -> usize {
        lz76_complexity(s)
    }
}

/// `v(I)`: one nonnegative component per category, summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub categories: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn from_counts(categories: Vec<String>, counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        let values = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self { categories, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Audit record for one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowAttribution {
    pub window: usize,
    pub rect: PixelRect,
    /// Per-category aggregate `r_i`.
    pub aggregates: Vec<f64>,
    /// UIDs against every prototype, grouped like `aggregates`.
    pub uids: Vec<Vec<f64>>,
    /// The winning category `i*`.
    pub category: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub vector: FeatureVector,
    pub counts: Vec<usize>,
    pub windows: usize,
    pub window_size: (u32, u32),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributions: Vec<WindowAttribution>,
}

/// `sqrt(Σ uᵢ²)`.
pub fn aggregate_uids(uids: &[f64]) -> f64 {
    uids.iter().map(|u| u * u).sum::<f64>().sqrt()
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `r` for one window against one category's prototypes, with the window
/// first in every concatenation.
pub fn category_aggregate(window: &GrayImage, prototypes: &[&Prototype]) -> Result<f64> {
    if prototypes.is_empty() {
        return Err(Error::EmptyCategory(String::new()));
    }
    let w = ComplexityCachedString::new(linearize(window));
    let uids: Vec<f64> = prototypes
        .iter()
        .map(|p| crate::uid::uid_cached(&w, p.cached()).map(|u| u.value))
        .collect::<Result<_>>()?;
    Ok(aggregate_uids(&uids))
}

/// Prepared prototype strings grouped by category.
struct Groups<'a> {
    by_category: Vec<Vec<&'a ComplexityCachedString>>,
}

impl<'a> Groups<'a> {
    fn new(ps: &'a PrototypeSet) -> Result<Self> {
        ps.check_complete()?;
        let by_category = (0..ps.num_categories())
            .map(|i| ps.in_category(i).map(Prototype::cached).collect())
            .collect();
        Ok(Self { by_category })
    }
}

fn attribute_window(
    window: &[u8],
    groups: &Groups<'_>,
    cache: &dyn ComplexityLookup,
) -> (Vec<f64>, Vec<Vec<f64>>, usize) {
    let cw = cache.complexity(window);
    let mut buf = Vec::with_capacity(window.len() * 2);
    let uids: Vec<Vec<f64>> = groups
        .by_category
        .iter()
        .map(|protos| {
            protos
                .iter()
                .map(|p| {
                    buf.clear();
                    buf.extend_from_slice(window);
                    buf.extend_from_slice(p.string().as_slice());
                    normalized_distance(cache.complexity(&buf), cw, p.complexity())
                })
                .collect()
        })
        .collect();
    let aggregates: Vec<f64> = uids.iter().map(|u| aggregate_uids(u)).collect();
    let category = argmin(&aggregates);
    (aggregates, uids, category)
}

/// Full extraction with optional audit trail and complexity cache.
pub fn extract(img: &GrayImage, ps: &PrototypeSet, audit: bool, cache: &dyn ComplexityLookup) -> Result<Extraction> {
    let groups = Groups::new(ps)?;
    let (ww, wh) = ps.window_size().ok_or(Error::NoCategories)?;
    let rects = tile_rects(img.width(), img.height(), ww, wh)?;
    let results: Vec<(Vec<f64>, Vec<Vec<f64>>, usize)> = rects
        .par_iter()
        .map(|&r| {
            let tile = img.crop(r).expect("tile rects lie inside the image");
            attribute_window(tile.pixels(), &groups, cache)
        })
        .collect();

    let mut counts = vec![0usize; ps.num_categories()];
    for (_, _, c) in &results {
        counts[*c] += 1;
    }
    let attributions = if audit {
        results
            .into_iter()
            .zip(&rects)
            .enumerate()
            .map(|(j, ((aggregates, uids, category), &rect))| WindowAttribution {
                window: j,
                rect,
                aggregates,
                uids,
                category,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Extraction {
        vector: FeatureVector::from_counts(ps.category_names(), &counts),
        counts,
        windows: rects.len(),
        window_size: (ww, wh),
        attributions,
    })
}

/// `v(I)` for a grayscale image.
pub fn feature_vector(img: &GrayImage, ps: &PrototypeSet) -> Result<FeatureVector> {
    extract(img, ps, false, &NoCache).map(|e| e.vector)
}

/// `v(I)` for an RGB image.
pub fn feature_vector_rgb(img: &RgbImage, ps: &PrototypeSet) -> Result<FeatureVector> {
    feature_vector(&to_grayscale(img), ps)
}

/// One extracted row, before assembly into a [`Dataset`].
#[derive(Clone, Debug)]
pub struct CorpusExtraction {
    pub image_id: String,
    pub extraction: Extraction,
}

/// Extract every corpus image in parallel; results keep corpus order.
pub fn extract_corpus(
    corpus: &[(String, RgbImage)],
    ps: &PrototypeSet,
    audit: bool,
    cache: &dyn ComplexityLookup,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<Vec<CorpusExtraction>> {
    ps.check_complete()?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    corpus
        .par_iter()
        .map(|(id, img)| {
            let extraction = extract(&to_grayscale(img), ps, audit, cache)?;
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
            Ok(CorpusExtraction {
                image_id: id.clone(),
                extraction,
            })
        })
        .collect()
}

/// Assemble extracted rows with optional labels into a dataset.
pub fn assemble_dataset(
    rows: Vec<CorpusExtraction>,
    categories: Vec<String>,
    labels: Option<(&str, &BTreeMap<String, String>)>,
) -> Result<Dataset> {
    if let Some((_, map)) = labels {
        let missing: Vec<String> = rows
            .iter()
            .filter(|r| !map.contains_key(&r.image_id))
            .map(|r| r.image_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingLabels(missing));
        }
    }
    let rows = rows
        .into_iter()
        .map(|r| DatasetRow {
            label: labels.map(|(_, m)| m[&r.image_id].clone()),
            image_id: r.image_id,
            features: r.extraction.vector.values,
        })
        .collect();
    Dataset::new(categories, labels.map(|(t, _)| t.to_string()), rows)
}

/// The database of feature vectors for a corpus, labeled when `labels` is given.
pub fn build_dataset(
    corpus: &[(String, RgbImage)],
    ps: &PrototypeSet,
    labels: Option<(&str, &BTreeMap<String, String>)>,
) -> Result<Dataset> {
    if let Some((_, map)) = labels {
        let missing: Vec<String> = corpus
            .iter()
            .filter(|(id, _)| !map.contains_key(id))
            .map(|(id, _)| id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingLabels(missing));
        }
    }
    let rows = extract_corpus(corpus, ps, false, &NoCache, &|_| {})?;
    assemble_dataset(rows, ps.category_names(), labels)
}

/// JSON-lines audit trail, one [`WindowAttribution`] per line.
pub fn audit_jsonl(image_id: &str, attributions: &[WindowAttribution]) -> Result<String> {
    #[derive(Serialize)]
    struct Line<'a> {
        image_id: &'a str,
        #[serde(flatten)]
        attribution: &'a WindowAttribution,
    }
    let mut out = String::new();
    for a in attributions {
        out.push_str(&serde_json::to_string(&Line { image_id, attribution: a })?);
        out.push('\n');
    }
    Ok(out)
}

/// UIDs of a window string against all prototypes, for re-checking audits.
pub fn window_uids(window: &SymbolString, ps: &PrototypeSet) -> Result<Vec<Vec<f64>>> {
    let groups = Groups::new(ps)?;
    Ok(attribute_window(window.as_slice(), &groups, &NoCache).1)
}
