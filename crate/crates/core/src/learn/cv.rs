use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::classifier::{train, Algorithm};
use crate::dataset::{Dataset, DatasetRow};
use crate::error::{Error, Result};

/// Significance level of the baseline comparison.
pub const ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Significantly better than the baseline.
    Better,
    /// Significantly worse than the baseline.
    Worse,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_size: usize,
    /// Percent correct.
    pub accuracy: f64,
    pub baseline_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub algorithm: Algorithm,
    pub folds: Vec<FoldResult>,
    pub seed: u64,
    pub mean_accuracy: f64,
    pub baseline_mean_accuracy: f64,
    /// `±inf` when the differences are constant; stored as the strings
    /// `"inf"` / `"-inf"` since JSON has no infinities.
    #[serde(with = "extended_f64")]
    pub t_statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            v if v.is_nan() => s.serialize_str("nan"),
            v => s.serialize_f64(v),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }
}

/// Paired two-tailed t-test on `a − b`: `t = mean(d) / (sd(d) / √n)` with
/// `n − 1` degrees of freedom. Returns `(t, p)`.
///
/// Constant differences give `t = ±∞, p = 0`, or `t = 0, p = 1` when they
/// are all zero.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "paired samples");
    assert!(a.len() >= 2, "t-test needs at least two pairs");
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    // Spread below rounding noise of the mean counts as none.
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("df >= 1");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, p.clamp(0.0, 1.0))
}

/// Stratified fold assignment: each class is shuffled, then dealt round-robin
/// with the fold counter carried over between classes (classes in sorted order).
pub fn stratified_folds(labels: &[&str], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::invalid("folds", "need at least 2 folds"));
    }
    let mut classes: Vec<&str> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < n {
            return Err(Error::ClassTooSmall {
                class: class.to_string(),
                count: members.len(),
                folds: n,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next % n;
            next += 1;
        }
    }
    Ok(fold_of)
}

fn accuracy(train_rows: &[DatasetRow], test_rows: &[DatasetRow], algorithm: Algorithm) -> Result<f64> {
    let c = train(algorithm, train_rows)?;
    let mut correct = 0usize;
    for r in test_rows {
        if Some(c.predict(&r.features)?) == r.label.as_deref() {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / test_rows.len() as f64)
}

/// `n`-fold stratified cross-validation of `algorithm` against a ZeroR
/// baseline on the same folds.
pub fn cross_validate(d: &Dataset, algorithm: Algorithm, n: usize, seed: u64) -> Result<CvReport> {
    if !d.is_labeled() {
        let missing: Vec<String> = d.rows.iter().filter(|r| r.label.is_none()).map(|r| r.image_id.clone()).collect();
        return Err(if d.rows.is_empty() {
            Error::invalid("dataset", "dataset is empty")
        } else {
            Error::MissingLabels(missing)
        });
    }
    let labels: Vec<&str> = d.rows.iter().map(|r| r.label.as_deref().expect("labeled")).collect();
    let fold_of = stratified_folds(&labels, n, seed)?;

    let folds = (0..n)
        .into_par_iter()
        .map(|f| {
            let (test, train_rows): (Vec<_>, Vec<_>) = d
                .rows
                .iter()
                .zip(&fold_of)
                .partition(|(_, &k)| k == f);
            let test: Vec<DatasetRow> = test.into_iter().map(|(r, _)| r.clone()).collect();
            let train_rows: Vec<DatasetRow> = train_rows.into_iter().map(|(r, _)| r.clone()).collect();
            Ok(FoldResult {
                fold: f,
                test_size: test.len(),
                accuracy: accuracy(&train_rows, &test, algorithm)?,
                baseline_accuracy: accuracy(&train_rows, &test, Algorithm::ZeroR)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let base: Vec<f64> = folds.iter().map(|f| f.baseline_accuracy).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (t, p) = paired_t_test(&acc, &base);
    let verdict = if p < ALPHA {
        if t > 0.0 {
            Verdict::Better
        } else {
            Verdict::Worse
        }
    } else {
        Verdict::None
    };
    Ok(CvReport {
        algorithm,
        seed,
        mean_accuracy: mean(&acc),
        baseline_mean_accuracy: mean(&base),
        folds,
        t_statistic: t,
        p_value: p,
        alpha: ALPHA,
        verdict,
        target: d.target.clone(),
    })
}

impl CvReport {
    pub fn significant(&self) -> bool {
        self.verdict != Verdict::None
    }

    /// Percent-correct table: baseline in column (1), the learner in (2),
    /// with `∘` / `•` marking significant improvement / degradation.
    pub fn render_table(&self) -> String {
        let name = format!(
            "Classify Image into {}:",
            self.target.as_deref().unwrap_or("target")
        );
        let mark = match self.verdict {
            Verdict::Better => " \u{2218}",
            Verdict::Worse => " \u{2022}",
            Verdict::None => "",
        };
        let width = name.chars().count().max(7);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>10}", "Dataset", "(1)", "(2)");
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.2}  {:>8.2}{:<2}",
            name, self.baseline_mean_accuracy, self.mean_accuracy, mark
        );
        let _ = writeln!(out, "\u{2218}, \u{2022} statistically significant improvement or degradation");
        let _ = writeln!(out, "(1) zero_r");
        let _ = writeln!(out, "(2) {}", describe(&self.algorithm));
        let _ = writeln!(
            out,
            "folds={} seed={} t={:.4} p={:.4} alpha={}",
            self.folds.len(),
            self.seed,
            self.t_statistic,
            self.p_value,
            self.alpha
        );
        out
    }
}

fn describe(a: &Algorithm) -> String {
    match a {
        Algorithm::Knn { k } => format!("knn k={k}"),
        other => other.name().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_statistic_hand_computed() {
        // d = (2, 4, 6): mean 4, sd 2, t = 4 / (2/√3) = 2√3.
        let (t, p) = paired_t_test(&[12.0, 14.0, 16.0], &[10.0, 10.0, 10.0]);
        assert!((t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        // df = 2 has the closed form cdf(t) = 1/2 + t / (2 sqrt(2 + t^2)).
        let closed = 2.0 * (0.5 - t / (2.0 * (2.0 + t * t).sqrt()));
        assert!((p - closed).abs() < 1e-9, "{p} vs {closed}");
    }

    #[test]
    fn t_test_degenerate() {
        assert_eq!(paired_t_test(&[1.0, 1.0], &[1.0, 1.0]), (0.0, 1.0));
        let (t, p) = paired_t_test(&[100.0, 100.0, 100.0], &[50.0, 50.0, 50.0]);
        assert_eq!((t, p), (f64::INFINITY, 0.0));
    }

    #[test]
    fn infinite_t_round_trips() {
        let a = [100.0, 100.0];
        let (t, p) = paired_t_test(&a, &[50.0, 50.0]);
        let r = CvReport {
            algorithm: Algorithm::ZeroR,
            folds: vec![],
            seed: 0,
            mean_accuracy: 100.0,
            baseline_mean_accuracy: 50.0,
            t_statistic: t,
            p_value: p,
            alpha: ALPHA,
            verdict: Verdict::Better,
            target: None,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"t_statistic\":\"inf\""), "{json}");
        assert_eq!(serde_json::from_str::<CvReport>(&json).unwrap(), r);
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<&str> = (0..37).map(|i| if i % 3 == 0 { "a" } else { "b" }).collect();
        let f = stratified_folds(&labels, 5, 9).unwrap();
        assert_eq!(f.len(), 37);
        for k in 0..5 {
            let a = (0..37).filter(|&i| f[i] == k && labels[i] == "a").count();
            assert!((2..=3).contains(&a));
        }
        assert_eq!(f, stratified_folds(&labels, 5, 9).unwrap());
        assert!(matches!(stratified_folds(&labels, 14, 1), Err(Error::ClassTooSmall { .. })));
        assert!(stratified_folds(&labels, 1, 1).is_err());
    }
}
