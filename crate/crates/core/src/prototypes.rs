//! Feature categories, prototypes, the prototype distance matrix, agglomerative
//! clustering into a dendrogram, and the cluster purity test that decides
//! whether a prototype selection is good enough to stop.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{linearize, to_grayscale, GrayImage, PixelRect, RgbImage};
use crate::strdist::ComplexityCachedString;
use crate::uid::uid_cached;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCategory {
    /// 0-based position in the set; component `index` of every feature vector.
    pub index: usize,
    pub name: String,
}

/// A user-chosen crop representing one feature category.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototype {
    pub id: String,
    pub category: usize,
    pub source_id: String,
    pub rect: PixelRect,
    image: RgbImage,
    gray: GrayImage,
    cached: ComplexityCachedString,
}

impl Prototype {
    /// Crop `rect` out of `source` and cache its string and complexity.
    pub fn from_source(
        id: impl Into<String>,
        category: usize,
        source_id: impl Into<String>,
        source: &RgbImage,
        rect: PixelRect,
    ) -> Result<Self> {
        let image = source.crop(rect)?;
        Ok(Self::from_crop(id, category, source_id, rect, image))
    }

    /// Wrap an already cropped image.
    pub fn from_crop(
        id: impl Into<String>,
        category: usize,
        source_id: impl Into<String>,
        rect: PixelRect,
        image: RgbImage,
    ) -> Self {
        let gray = to_grayscale(&image);
        let cached = ComplexityCachedString::new(linearize(&gray));
        Self {
            id: id.into(),
            category,
            source_id: source_id.into(),
            rect,
            image,
            gray,
            cached,
        }
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn gray(&self) -> &GrayImage {
        &self.gray
    }

    pub fn cached(&self) -> &ComplexityCachedString {
        &self.cached
    }

    pub fn complexity(&self) -> usize {
        self.cached.complexity()
    }
}

/// `M` categories with their prototypes, in insertion order within each category.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrototypeSet {
    categories: Vec<FeatureCategory>,
    prototypes: Vec<Prototype>,
    next_id: u64,
}

impl PrototypeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// A set with the given category names, in order.
    pub fn with_categories<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut ps = Self::new();
        for n in names {
            ps.add_category(n.as_ref())?;
        }
        Ok(ps)
    }

    pub fn categories(&self) -> &[FeatureCategory] {
        &self.categories
    }

    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    /// `M`.
    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    /// `L`.
    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn add_category(&mut self, name: &str) -> Result<usize> {
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::invalid("category", "name must not be empty"));
        }
        if self.category_index(name).is_some() {
            return Err(Error::Duplicate {
                kind: "category",
                id: name.to_string(),
            });
        }
        let index = self.categories.len();
        self.categories.push(FeatureCategory {
            index,
            name: name.to_string(),
        });
        Ok(index)
    }

    /// Remove a category and all of its prototypes; later categories shift down.
    pub fn remove_category(&mut self, name: &str) -> Result<()> {
        let idx = self.category_index(name).ok_or_else(|| Error::UnknownId {
            kind: "category",
            id: name.to_string(),
        })?;
        self.categories.remove(idx);
        for (i, c) in self.categories.iter_mut().enumerate() {
            c.index = i;
        }
        self.prototypes.retain(|p| p.category != idx);
        for p in &mut self.prototypes {
            if p.category > idx {
                p.category -= 1;
            }
        }
        Ok(())
    }

    /// Crop a new prototype from `source`, assigning the next sequential id.
    pub fn add_prototype(
        &mut self,
        category: &str,
        source_id: &str,
        source: &RgbImage,
        rect: PixelRect,
    ) -> Result<&Prototype> {
        let cat = self.category_index(category).ok_or_else(|| Error::UnknownId {
            kind: "category",
            id: category.to_string(),
        })?;
        let id = format!("p{}", self.next_id + 1);
        let proto = Prototype::from_source(id, cat, source_id, source, rect)?;
        self.next_id += 1;
        self.prototypes.push(proto);
        Ok(self.prototypes.last().expect("just pushed"))
    }

    /// Insert a prototype built elsewhere (e.g. loaded from disk).
    pub fn insert(&mut self, proto: Prototype) -> Result<()> {
        if proto.category >= self.categories.len() {
            return Err(Error::invalid("category", format!("index {} out of range", proto.category)));
        }
        if self.get(&proto.id).is_some() {
            return Err(Error::Duplicate {
                kind: "prototype",
                id: proto.id,
            });
        }
        if let Some(n) = proto.id.strip_prefix('p').and_then(|n| n.parse::<u64>().ok()) {
            self.next_id = self.next_id.max(n);
        }
        self.prototypes.push(proto);
        Ok(())
    }

    pub(crate) fn set_next_id(&mut self, n: u64) {
        self.next_id = self.next_id.max(n);
    }

    pub fn remove_prototype(&mut self, id: &str) -> Result<Prototype> {
        let pos = self.prototypes.iter().position(|p| p.id == id).ok_or_else(|| Error::UnknownId {
            kind: "prototype",
            id: id.to_string(),
        })?;
        Ok(self.prototypes.remove(pos))
    }

    /// Prototypes in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Prototype> {
        self.prototypes.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Prototype> {
        self.prototypes.iter().find(|p| p.id == id)
    }

    /// All prototypes enumerated category by category, the order used for
    /// the distance matrix.
    pub fn ordered(&self) -> Vec<&Prototype> {
        let mut v: Vec<&Prototype> = self.prototypes.iter().collect();
        v.sort_by_key(|p| p.category);
        v
    }

    pub fn in_category(&self, index: usize) -> impl Iterator<Item = &Prototype> {
        self.prototypes.iter().filter(move |p| p.category == index)
    }

    /// Window size for feature extraction: the largest prototype width by
    /// the largest prototype height.
    pub fn window_size(&self) -> Option<(u32, u32)> {
        let w = self.prototypes.iter().map(|p| p.rect.width).max()?;
        let h = self.prototypes.iter().map(|p| p.rect.height).max()?;
        Some((w, h))
    }

    /// Every category must hold at least one prototype before extraction.
    pub fn check_complete(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::NoCategories);
        }
        for c in &self.categories {
            if self.in_category(c.index).next().is_none() {
                return Err(Error::EmptyCategory(c.name.clone()));
            }
        }
        Ok(())
    }
}

/// `H[k][l] = UID(P_k, P_l)` over the enumerated prototypes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    /// Prototype ids, row and column order.
    pub labels: Vec<String>,
    /// Row-major `L × L` entries.
    pub entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, entries: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        Ok(Self { labels, entries })
    }

    pub fn order(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[k * self.order() + l]
    }

    /// `(H + Hᵀ) / 2`.
    pub fn symmetrized(&self) -> DistanceMatrix {
        let n = self.order();
        let mut entries = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                entries[k * n + l] = (self.get(k, l) + self.get(l, k)) / 2.0;
            }
        }
        DistanceMatrix {
            labels: self.labels.clone(),
            entries,
        }
    }
}

/// Compute `H` for all `L²` ordered pairs.
pub fn distance_matrix(ps: &PrototypeSet) -> Result<DistanceMatrix> {
    let protos = ps.ordered();
    let n = protos.len();
    if n < 2 {
        return Err(Error::TooFewPrototypes { needed: 2, have: n });
    }
    let entries = (0..n * n)
        .into_par_iter()
        .map(|e| uid_cached(protos[e / n].cached(), protos[e % n].cached()).map(|u| u.value))
        .collect::<Result<Vec<f64>>>()?;
    DistanceMatrix::new(protos.iter().map(|p| p.id.clone()).collect(), entries)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::invalid("linkage", format!("unknown linkage `{other}` (single, complete, average)"))),
        }
    }
}

/// One agglomeration step. Leaves are clusters `0..L`; step `s` creates `L + s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Binary merge tree over the prototypes, as a SciPy-style step list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

/// Nested view of a dendrogram for JSON export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DendrogramNode {
    Leaf {
        leaf: usize,
        id: String,
    },
    Merge {
        cluster: usize,
        height: f64,
        size: usize,
        children: Box<[DendrogramNode; 2]>,
    },
}

impl Dendrogram {
    pub fn leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn heights_monotone(&self) -> bool {
        self.merges.windows(2).all(|w| w[0].height <= w[1].height)
    }

    pub fn tree(&self) -> DendrogramNode {
        self.node(self.leaves() + self.merges.len() - 1)
    }

    fn node(&self, cluster: usize) -> DendrogramNode {
        let n = self.leaves();
        if cluster < n {
            return DendrogramNode::Leaf {
                leaf: cluster,
                id: self.labels[cluster].clone(),
            };
        }
        let m = &self.merges[cluster - n];
        DendrogramNode::Merge {
            cluster,
            height: m.height,
            size: m.size,
            children: Box::new([self.node(m.left), self.node(m.right)]),
        }
    }

    fn height_of(&self, cluster: usize) -> f64 {
        if cluster < self.leaves() {
            0.0
        } else {
            self.merges[cluster - self.leaves()].height
        }
    }

    /// Newick text with branch lengths equal to height differences.
    pub fn newick(&self) -> String {
        let mut out = String::new();
        if self.merges.is_empty() {
            let _ = write!(out, "{};", self.labels.first().map_or("", String::as_str));
            return out;
        }
        self.write_newick(self.leaves() + self.merges.len() - 1, &mut out);
        out.push(';');
        out
    }

    fn write_newick(&self, cluster: usize, out: &mut String) {
        let n = self.leaves();
        if cluster < n {
            out.push_str(&self.labels[cluster]);
            return;
        }
        let m = self.merges[cluster - n];
        out.push('(');
        for (i, child) in [m.left, m.right].into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.write_newick(child, out);
            let _ = write!(out, ":{}", m.height - self.height_of(child));
        }
        out.push(')');
    }

    /// Cophenetic distance: height of the merge that first joins two leaves.
    pub fn cophenetic(&self) -> Vec<Vec<f64>> {
        let n = self.leaves();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut out = vec![vec![0.0; n]; n];
        for m in &self.merges {
            let (a, b) = (members[m.left].clone(), members[m.right].clone());
            for &i in &a {
                for &j in &b {
                    out[i][j] = m.height;
                    out[j][i] = m.height;
                }
            }
            members.push([a, b].concat());
        }
        out
    }
}

/// Agglomerative clustering of the symmetrized matrix.
///
/// Ties in the minimum distance go to the lexicographically smallest pair of
/// cluster labels.
pub fn hierarchical_cluster(h: &DistanceMatrix, linkage: Linkage) -> Dendrogram {
    let sym = h.symmetrized();
    let n = sym.order();
    // Distances between live clusters, keyed by label. Labels grow as merges happen.
    let mut dist: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|l| sym.get(k, l)).collect()).collect();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let d = dist[a][b];
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (height, a, b) = best.expect("at least two active clusters");
        let new = dist.len();
        let (na, nb) = (size[a], size[b]);
        let mut row = vec![0.0; new + 1];
        for &k in &active {
            if k == a || k == b {
                continue;
            }
            let (da, db) = (dist[a][k], dist[b][k]);
            row[k] = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => (na as f64 * da + nb as f64 * db) / (na + nb) as f64,
            };
        }
        for (k, r) in dist.iter_mut().enumerate() {
            r.push(row[k]);
        }
        dist.push(row);
        size.push(na + nb);
        active.retain(|&k| k != a && k != b);
        active.push(new);
        merges.push(Merge {
            left: a,
            right: b,
            height,
            size: na + nb,
        });
    }

    Dendrogram {
        labels: sym.labels,
        linkage,
        merges,
    }
}

/// Partition into `m` groups by undoing the `m − 1` highest merges.
///
/// Groups are ordered by their first leaf; members keep leaf order.
pub fn cut_clusters(d: &Dendrogram, m: usize) -> Result<Vec<Vec<String>>> {
    let n = d.leaves();
    if m == 0 || m > n {
        return Err(Error::CutOutOfRange { m, leaves: n });
    }
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut live = vec![true; n];
    for merge in &d.merges[..n - m] {
        let mut joined = std::mem::take(&mut members[merge.left]);
        joined.extend(std::mem::take(&mut members[merge.right]));
        live[merge.left] = false;
        live[merge.right] = false;
        members.push(joined);
        live.push(true);
    }
    let mut groups: Vec<Vec<usize>> = members
        .into_iter()
        .zip(live)
        .filter_map(|(g, l)| l.then_some(g))
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    groups.sort_by_key(|g| g[0]);
    Ok(groups
        .into_iter()
        .map(|g| g.into_iter().map(|i| d.labels[i].clone()).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPurity {
    pub members: Vec<String>,
    /// Most frequent category in the cluster (lowest index on ties).
    pub majority: Option<String>,
    /// Members whose category is not the majority.
    pub offending: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurityReport {
    pub pure: bool,
    pub expected_clusters: usize,
    pub clusters: Vec<ClusterPurity>,
    /// Prototypes that must be reconsidered, sorted.
    pub offending: Vec<String>,
    /// Categories whose prototypes are spread over more than one cluster.
    pub split_categories: Vec<String>,
}

/// Does the partition coincide with the grouping by category, up to order?
///
/// Each cluster's offending members are those outside its majority category.
/// When several clusters share a majority category, all but the one holding
/// most of that category (earliest on ties) are offending in full.
pub fn purity_check(partition: &[Vec<String>], ps: &PrototypeSet) -> PurityReport {
    let m = ps.num_categories();
    let names = ps.category_names();
    let cat_of = |id: &str| ps.get(id).map(|p| p.category);

    let counts: Vec<Vec<usize>> = partition
        .iter()
        .map(|g| {
            let mut c = vec![0usize; m];
            for id in g {
                if let Some(k) = cat_of(id) {
                    c[k] += 1;
                }
            }
            c
        })
        .collect();
    let majority: Vec<Option<usize>> = counts
        .iter()
        .map(|c| {
            (0..m)
                .filter(|&k| c[k] > 0)
                .fold(None, |best: Option<usize>, k| match best {
                    Some(b) if c[b] >= c[k] => Some(b),
                    _ => Some(k),
                })
        })
        .collect();

    let mut clusters: Vec<ClusterPurity> = partition
        .iter()
        .zip(&majority)
        .map(|(g, &maj)| ClusterPurity {
            members: g.clone(),
            majority: maj.map(|k| names[k].clone()),
            offending: g.iter().filter(|id| cat_of(id) != maj || maj.is_none()).cloned().collect(),
        })
        .collect();

    for k in 0..m {
        let owners: Vec<usize> = (0..partition.len()).filter(|&g| majority[g] == Some(k)).collect();
        if owners.len() < 2 {
            continue;
        }
        let keep = owners
            .iter()
            .copied()
            .fold(owners[0], |best, g| if counts[g][k] > counts[best][k] { g } else { best });
        for g in owners.into_iter().filter(|&g| g != keep) {
            clusters[g].offending = clusters[g].members.clone();
        }
    }

    let split_categories: Vec<String> = (0..m)
        .filter(|&k| counts.iter().filter(|c| c[k] > 0).count() > 1)
        .map(|k| names[k].clone())
        .collect();
    let mut offending: Vec<String> = clusters.iter().flat_map(|c| c.offending.iter().cloned()).collect();
    offending.sort();
    offending.dedup();
    let covered: usize = partition.iter().map(Vec::len).sum();
    let pure = partition.len() == m && covered == ps.len() && offending.is_empty() && split_categories.is_empty();
    PurityReport {
        pure,
        expected_clusters: m,
        clusters,
        offending,
        split_categories,
    }
}
