use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvaluationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManualScheme {
    Usefulness,
    GenerativeError,
}

impl ManualScheme {
    pub const ALL: [ManualScheme; 2] = [ManualScheme::Usefulness, ManualScheme::GenerativeError];

    pub fn as_str(self) -> &'static str {
        match self {
            ManualScheme::Usefulness => "usefulness",
            ManualScheme::GenerativeError => "generative-error",
        }
    }

    /// The scheme's closed value set, in report order.
    pub fn values(self) -> &'static [&'static str] {
        match self {
            ManualScheme::Usefulness => &["good", "useful", "a-bit-useful", "useless"],
            ManualScheme::GenerativeError => &[
                "correct",
                "incomplete",
                "meaningless-ill-formed",
                "repeated-phrase",
                "more-complex",
                "opposite-meaning",
            ],
        }
    }
}

impl fmt::Display for ManualScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManualScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "usefulness" => Ok(ManualScheme::Usefulness),
            "generative-error" => Ok(ManualScheme::GenerativeError),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManualLabel {
    pub sentence_id: String,
    pub scheme: ManualScheme,
    value: &'static str,
}

impl ManualLabel {
    /// Fails when `value` is outside the scheme's closed set.
    pub fn new(sentence_id: impl Into<String>, scheme: ManualScheme, value: &str) -> Result<Self, String> {
        let wanted = value.trim().to_ascii_lowercase();
        let value = scheme
            .values()
            .iter()
            .find(|v| **v == wanted)
            .ok_or_else(|| format!("`{value}` is not a {scheme} value (expected one of {})", scheme.values().join(", ")))?;
        Ok(Self {
            sentence_id: sentence_id.into(),
            scheme,
            value,
        })
    }

    pub fn value(&self) -> &'static str {
        self.value
    }
}

/// Reads `sentence_id,scheme,value` rows; a header row with those names is
/// skipped. Errors carry the 1-based line number.
pub fn parse_manual_labels(reader: impl Read) -> Result<Vec<ManualLabel>, EvaluationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| EvaluationError::Label {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        let bad = |message: String| EvaluationError::Label { line, message };
        if record.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && record.get(0) == Some("sentence_id") {
            continue;
        }
        if record.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", record.len())));
        }
        let scheme: ManualScheme = record[1].parse().map_err(bad)?;
        labels.push(ManualLabel::new(&record[0], scheme, &record[2]).map_err(bad)?);
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualCount {
    pub value: String,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualDistribution {
    pub scheme: ManualScheme,
    pub total: usize,
    pub counts: Vec<ManualCount>,
}

impl ManualDistribution {
    pub fn count(&self, value: &str) -> usize {
        self.counts.iter().find(|c| c.value == value).map_or(0, |c| c.count)
    }

    pub fn percentage(&self, value: &str) -> f64 {
        self.counts.iter().find(|c| c.value == value).map_or(0.0, |c| c.percentage)
    }

    /// CSV with header `scheme,value,count,percentage`; percentages to one
    /// decimal.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,value,count,percentage\n");
        for c in &self.counts {
            out.push_str(&format!("{},{},{},{:.1}\n", self.scheme, c.value, c.count, c.percentage));
        }
        out
    }
}

/// Counts and percentages for every value of `scheme`. An empty label list
/// gives all zeros.
pub fn aggregate_manual(scheme: ManualScheme, labels: &[ManualLabel]) -> Result<ManualDistribution, EvaluationError> {
    if let Some(other) = labels.iter().find(|l| l.scheme != scheme) {
        return Err(EvaluationError::MixedSchemes {
            expected: scheme,
            found: other.scheme,
        });
    }
    let total = labels.len();
    let counts = scheme
        .values()
        .iter()
        .map(|v| {
            let count = labels.iter().filter(|l| l.value == *v).count();
            ManualCount {
                value: v.to_string(),
                count,
                percentage: if total == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / total as f64
                },
            }
        })
        .collect();
    Ok(ManualDistribution { scheme, total, counts })
}
