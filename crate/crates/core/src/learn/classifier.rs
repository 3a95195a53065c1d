use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRow;
use crate::error::{Error, Result};

/// Variance floor for Gaussian naive Bayes; feature components are often
/// exactly constant within a class.
pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Algorithm {
    /// Majority class of the training set.
    ZeroR,
    /// Per-class Gaussian per feature.
    NaiveBayes,
    /// k nearest neighbours, Euclidean.
    Knn { k: usize },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::ZeroR => "zero_r",
            Algorithm::NaiveBayes => "naive_bayes",
            Algorithm::Knn { .. } => "knn",
        }
    }

    /// Parse `zero_r | naive_bayes | knn`, with `k` for knn.
    pub fn parse(name: &str, k: usize) -> Result<Self> {
        match name {
            "zero_r" | "zeror" => Ok(Algorithm::ZeroR),
            "naive_bayes" | "nb" => Ok(Algorithm::NaiveBayes),
            "knn" => {
                if k == 0 {
                    return Err(Error::invalid("k", "must be at least 1"));
                }
                Ok(Algorithm::Knn { k })
            }
            other => Err(Error::invalid(
                "algorithm",
                format!("unknown algorithm `{other}` (zero_r, naive_bayes, knn)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Model {
    ZeroR {
        class: usize,
    },
    NaiveBayes {
        log_priors: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
    Knn {
        k: usize,
        points: Vec<Vec<f64>>,
        labels: Vec<usize>,
    },
}

/// A fitted classifier. Immutable; predicts only labels from `classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub algorithm: Algorithm,
    /// Sorted class labels.
    pub classes: Vec<String>,
    pub dimension: usize,
    model: Model,
}

pub fn train(algorithm: Algorithm, rows: &[DatasetRow]) -> Result<TrainedClassifier> {
    if rows.is_empty() {
        return Err(Error::invalid("rows", "training set is empty"));
    }
    let unlabeled: Vec<String> = rows
        .iter()
        .filter(|r| r.label.is_none())
        .map(|r| r.image_id.clone())
        .collect();
    if !unlabeled.is_empty() {
        return Err(Error::MissingLabels(unlabeled));
    }
    let dimension = rows[0].features.len();
    if let Some(bad) = rows.iter().find(|r| r.features.len() != dimension) {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            actual: bad.features.len(),
        });
    }
    let mut classes: Vec<String> = rows.iter().filter_map(|r| r.label.clone()).collect();
    classes.sort();
    classes.dedup();
    let y: Vec<usize> = rows
        .iter()
        .map(|r| classes.binary_search(r.label.as_ref().expect("checked")).expect("collected"))
        .collect();

    let mut counts = vec![0usize; classes.len()];
    for &c in &y {
        counts[c] += 1;
    }

    let model = match algorithm {
        Algorithm::ZeroR => Model::ZeroR {
            class: first_max(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()),
        },
        Algorithm::NaiveBayes => {
            let n = rows.len() as f64;
            let mut means = vec![vec![0.0; dimension]; classes.len()];
            let mut variances = vec![vec![0.0; dimension]; classes.len()];
            for (r, &c) in rows.iter().zip(&y) {
                for (m, x) in means[c].iter_mut().zip(&r.features) {
                    *m += x;
                }
            }
            for (c, m) in means.iter_mut().enumerate() {
                m.iter_mut().for_each(|v| *v /= counts[c] as f64);
            }
            for (r, &c) in rows.iter().zip(&y) {
                for ((v, x), m) in variances[c].iter_mut().zip(&r.features).zip(&means[c]) {
                    *v += (x - m) * (x - m);
                }
            }
            for (c, v) in variances.iter_mut().enumerate() {
                v.iter_mut()
                    .for_each(|s| *s = (*s / counts[c] as f64).max(VARIANCE_FLOOR));
            }
            Model::NaiveBayes {
                log_priors: counts.iter().map(|&c| (c as f64 / n).ln()).collect(),
                means,
                variances,
            }
        }
        Algorithm::Knn { k } => {
            if k == 0 {
                return Err(Error::invalid("k", "must be at least 1"));
            }
            Model::Knn {
                k,
                points: rows.iter().map(|r| r.features.clone()).collect(),
                labels: y,
            }
        }
    };
    Ok(TrainedClassifier {
        algorithm,
        classes,
        dimension,
        model,
    })
}

/// Index of the largest value, lowest index on ties.
fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl TrainedClassifier {
    /// Predicted class index into `classes`.
    pub fn predict_index(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: v.len(),
            });
        }
        Ok(match &self.model {
            Model::ZeroR { class } => *class,
            Model::NaiveBayes {
                log_priors,
                means,
                variances,
            } => {
                let scores: Vec<f64> = (0..self.classes.len())
                    .map(|c| {
                        log_priors[c]
                            + v.iter()
                                .zip(&means[c])
                                .zip(&variances[c])
                                .map(|((x, m), s)| {
                                    -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (x - m) * (x - m) / s)
                                })
                                .sum::<f64>()
                    })
                    .collect();
                first_max(&scores)
            }
            Model::Knn { k, points, labels } => {
                let mut d: Vec<(f64, usize)> = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut votes = vec![0.0; self.classes.len()];
                for &(_, i) in d.iter().take(*k) {
                    votes[labels[i]] += 1.0;
                }
                first_max(&votes)
            }
        })
    }

    pub fn predict(&self, v: &[f64]) -> Result<&str> {
        self.predict_index(v).map(|i| self.classes[i].as_str())
    }
}
