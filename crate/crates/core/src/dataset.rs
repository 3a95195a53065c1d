//! The feature-vector database and its CSV / ARFF / JSON encodings.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub image_id: String,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Rows of `(image id, v(I), optional label)` with the class set `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub categories: Vec<String>,
    /// Name of the target variable, when labeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Sorted distinct labels.
    pub classes: Vec<String>,
    pub rows: Vec<DatasetRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Arff,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "arff" => Ok(Self::Arff),
            "json" => Ok(Self::Json),
            other => Err(Error::invalid("format", format!("unknown format `{other}` (csv, arff, json)"))),
        }
    }
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            Self::Csv => "text/csv",
            Self::Arff => "text/plain",
            Self::Json => "application/json",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Arff => "arff",
            Self::Json => "json",
        }
    }
}

impl Dataset {
    /// Validates dimensions; derives the class set from the labels.
    pub fn new(categories: Vec<String>, target: Option<String>, rows: Vec<DatasetRow>) -> Result<Self> {
        let m = categories.len();
        for r in &rows {
            if r.features.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: r.features.len(),
                });
            }
        }
        let classes: BTreeSet<String> = rows.iter().filter_map(|r| r.label.clone()).collect();
        Ok(Self {
            categories,
            target,
            classes: classes.into_iter().collect(),
            rows,
        })
    }

    pub fn dimension(&self) -> usize {
        self.categories.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.label.is_some())
    }

    pub fn export(&self, format: ExportFormat) -> Result<String> {
        match format {
            ExportFormat::Csv => self.to_csv(),
            ExportFormat::Arff => Ok(self.to_arff()),
            ExportFormat::Json => Ok(serde_json::to_string_pretty(self)? + "\n"),
        }
    }

    /// Header `image_id, v_<category>…[, <target>]`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let labeled = self.is_labeled();
        let mut header = vec!["image_id".to_string()];
        header.extend(self.categories.iter().map(|c| format!("v_{c}")));
        if labeled {
            header.push(self.target.clone().unwrap_or_else(|| "target".into()));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.image_id.clone()];
            rec.extend(r.features.iter().map(|v| v.to_string()));
            if labeled {
                rec.push(r.label.clone().unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    /// ARFF with one numeric attribute per category and a nominal class.
    pub fn to_arff(&self) -> String {
        let mut out = String::new();
        let relation = self.target.as_deref().map_or("uid_features".to_string(), |t| format!("uid_features_{t}"));
        let _ = writeln!(out, "@RELATION {}", arff_name(&relation));
        out.push('\n');
        for c in &self.categories {
            let _ = writeln!(out, "@ATTRIBUTE {} NUMERIC", arff_name(&format!("v_{c}")));
        }
        let labeled = self.is_labeled();
        if labeled {
            let classes: Vec<String> = self.classes.iter().map(|c| arff_name(c)).collect();
            let name = self.target.as_deref().unwrap_or("class");
            let _ = writeln!(out, "@ATTRIBUTE {} {{{}}}", arff_name(name), classes.join(","));
        }
        out.push_str("\n@DATA\n");
        for r in &self.rows {
            let _ = writeln!(out, "% {}", r.image_id);
            let vals: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
            out.push_str(&vals.join(","));
            if labeled {
                let _ = write!(out, ",{}", arff_name(r.label.as_deref().unwrap_or("?")));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn arff_name(s: &str) -> String {
    let plain = !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
    }
}
