use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batch::{ResultRecord, RunMeta};
use super::manifest::Manifest;
use super::{io_error, HarnessError};
use crate::stimulus::Polarity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracies are absent when their group is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub overall_accuracy: Option<f64>,
    pub positive_accuracy: Option<f64>,
    pub negative_accuracy: Option<f64>,
    pub n_total: usize,
    pub n_correct: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    /// Labeled entries with no result; scored as incorrect.
    pub n_missing: usize,
    /// Manifest entries without a label; excluded.
    pub n_unlabeled: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_category: BTreeMap<String, GroupScore>,
}

fn ratio(correct: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| correct as f64 / n as f64)
}

/// Pure function of (results, manifest); result order does not matter.
pub fn score(results: &[ResultRecord], manifest: &Manifest) -> Result<ScoreReport, HarnessError> {
    let by_id: HashMap<&str, &ResultRecord> = results.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    let (mut n_total, mut n_correct, mut n_missing, mut n_unlabeled) = (0, 0, 0, 0);
    let (mut pos, mut neg) = ((0, 0), (0, 0));
    let mut categories: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for entry in &manifest.entries {
        let Some(label) = entry.label else {
            n_unlabeled += 1;
            continue;
        };
        let ok = match by_id.get(entry.sample_id.as_str()) {
            Some(r) => r.answer == label,
            None => {
                n_missing += 1;
                false
            }
        };
        n_total += 1;
        n_correct += usize::from(ok);
        match entry.polarity {
            Some(Polarity::Positive) => {
                pos.0 += 1;
                pos.1 += usize::from(ok);
            }
            Some(Polarity::Negative) => {
                neg.0 += 1;
                neg.1 += usize::from(ok);
            }
            None => {}
        }
        if let Some(cat) = &entry.category {
            let slot = categories.entry(cat.clone()).or_default();
            slot.0 += 1;
            slot.1 += usize::from(ok);
        }
    }
    if n_total == 0 {
        return Err(HarnessError::NoLabels);
    }
    Ok(ScoreReport {
        overall_accuracy: ratio(n_correct, n_total),
        positive_accuracy: ratio(pos.1, pos.0),
        negative_accuracy: ratio(neg.1, neg.0),
        n_total,
        n_correct,
        n_positive: pos.0,
        n_negative: neg.0,
        n_missing,
        n_unlabeled,
        per_category: categories
            .into_iter()
            .map(|(k, (n, correct))| {
                (
                    k,
                    GroupScore {
                        n,
                        correct,
                        accuracy: correct as f64 / n as f64,
                    },
                )
            })
            .collect(),
    })
}

/// Reads a results file, returning the run metadata header if present.
pub fn load_results(path: &Path) -> Result<(Option<RunMeta>, Vec<ResultRecord>), HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    let mut meta = None;
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| HarnessError::Validation(format!("{} line {}: {e}", path.display(), n + 1));
        let value: serde_json::Value = serde_json::from_str(line).map_err(bad)?;
        if let Some(m) = value.get("run_meta") {
            meta = Some(serde_json::from_value(m.clone()).map_err(bad)?);
        } else {
            records.push(serde_json::from_value(value).map_err(bad)?);
        }
    }
    Ok((meta, records))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}%", v * 100.0))
}

impl ScoreReport {
    pub fn render_table(&self) -> String {
        let mut rows = vec![
            ("overall".to_string(), self.n_total, pct(self.overall_accuracy)),
            ("positive".to_string(), self.n_positive, pct(self.positive_accuracy)),
            ("negative".to_string(), self.n_negative, pct(self.negative_accuracy)),
        ];
        for (name, g) in &self.per_category {
            rows.push((format!("  {name}"), g.n, pct(Some(g.accuracy))));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("group".len());
        let mut out = format!("{:<width$}  {:>5}  {:>8}\n", "group", "n", "accuracy");
        for (name, n, acc) in rows {
            out.push_str(&format!("{name:<width$}  {n:>5}  {acc:>8}\n"));
        }
        if self.n_missing > 0 {
            out.push_str(&format!("{} labeled samples had no result (scored incorrect)\n", self.n_missing));
        }
        if self.n_unlabeled > 0 {
            out.push_str(&format!("{} unlabeled samples excluded\n", self.n_unlabeled));
        }
        out
    }
}
