use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub seed: u64,
    pub categories: Vec<String>,
    pub assignments: Vec<usize>,
    pub image_ids: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub full_data_mean: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Within-cluster sum of squares after each update step.
    pub objective: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut bd = sq_dist(x, &centroids[0]);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(x, c);
        if d < bd {
            best = i;
            bd = d;
        }
    }
    best
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a [f64]>, m: usize) -> Option<Vec<f64>> {
    let mut s = vec![0.0; m];
    let mut n = 0usize;
    for r in rows {
        for (a, b) in s.iter_mut().zip(r) {
            *a += b;
        }
        n += 1;
    }
    (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect())
}

/// k-means++ seeding: the first centre uniformly, each next one with
/// probability proportional to squared distance from the nearest chosen centre.
fn plus_plus(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].to_vec());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Lloyd iterations from a seeded k-means++ start on the dataset's features.
/// Stops when assignments no longer change or after [`MAX_ITERATIONS`].
pub fn kmeans(d: &Dataset, k: usize, seed: u64) -> Result<ClusterReport> {
    let n = d.rows.len();
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid("k", format!("k={k} exceeds the {n} rows")));
    }
    let m = d.dimension();
    let points: Vec<&[f64]> = d.rows.iter().map(|r| r.features.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(&points, k, &mut rng);

    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut objective: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            // An emptied cluster keeps its previous centre.
            if let Some(mean) = mean_of(points.iter().zip(&assignments).filter(|(_, &a)| a == c).map(|(p, _)| *p), m) {
                *centroid = mean;
            }
        }
        let j: f64 = points.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
        if let Some(&prev) = objective.last() {
            debug_assert!(j <= prev + 1e-12 * prev.max(1.0), "k-means objective rose: {prev} -> {j}");
        }
        objective.push(j);
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }

    let mut sizes = vec![0usize; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    Ok(ClusterReport {
        k,
        seed,
        categories: d.categories.clone(),
        image_ids: d.rows.iter().map(|r| r.image_id.clone()).collect(),
        full_data_mean: mean_of(points.iter().copied(), m).unwrap_or_else(|| vec![0.0; m]),
        assignments,
        centroids,
        sizes,
        iterations,
        converged,
        objective,
    })
}

impl ClusterReport {
    /// Feature-by-cluster profile: one row per category, columns
    /// `Full data, Cluster#1, …`.
    pub fn render_table(&self) -> String {
        let mut header = vec!["Feature".to_string(), "Full data".to_string()];
        header.extend((1..=self.k).map(|c| format!("Cluster#{c}")));
        let mut rows = vec![header];
        for (i, name) in self.categories.iter().enumerate() {
            let mut row = vec![name.clone(), format!("{:.4}", self.full_data_mean[i])];
            row.extend(self.centroids.iter().map(|c| format!("{:.4}", c[i])));
            rows.push(row);
        }
        let mut size_row = vec!["(size)".to_string(), self.assignments.len().to_string()];
        size_row.extend(self.sizes.iter().map(|s| s.to_string()));
        rows.push(size_row);

        let cols = rows[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (ri, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{:<w$}", s, w = widths[c])
                    } else {
                        format!("{:>w$}", s, w = widths[c])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
            if ri == 0 {
                let total = widths.iter().sum::<usize>() + 3 * (cols - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let sum_cells: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (sum_cells - expected) / (max - expected)
}
