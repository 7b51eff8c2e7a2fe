use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    band_counts, criterion_means, reliability, round2, triage, AlphaResult, BandCounts, Criterion, EvalError,
    EvalItem, Metric, TriageSummary, ValidationRecord,
};
use crate::domain::EdgeCaseLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSummary {
    pub mean: f64,
    pub alpha: Option<AlphaResult>,
    pub bands: BandCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: usize,
    pub triage: TriageSummary,
    #[serde(default)]
    pub edge_cases: BTreeMap<EdgeCaseLabel, usize>,
    /// Present when validation records were supplied.
    #[serde(default)]
    pub validation: Option<BTreeMap<Criterion, CriterionSummary>>,
}

/// Triage plus, when records are given, per-criterion means (two decimals),
/// reliability and band counts.
pub fn build_report(
    items: &mut [EvalItem],
    threshold: f64,
    records: Option<&[ValidationRecord]>,
    metric: Metric,
) -> Result<EvalReport, EvalError> {
    let triage = triage(items, threshold);
    let mut edge_cases = BTreeMap::new();
    for label in items.iter().filter_map(|i| i.edge_case_label) {
        *edge_cases.entry(label).or_insert(0) += 1;
    }
    let validation = match records {
        None => None,
        Some(records) => {
            let means = criterion_means(records)?;
            let mut out = BTreeMap::new();
            for c in Criterion::ALL {
                let alpha = match reliability(records, c, metric) {
                    Ok(a) => Some(a),
                    Err(EvalError::InsufficientData(_)) => None,
                    Err(e) => return Err(e),
                };
                out.insert(c, CriterionSummary { mean: round2(means[&c]), alpha, bands: band_counts(records, c) });
            }
            Some(out)
        }
    };
    Ok(EvalReport { items: items.len(), triage, edge_cases, validation })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let t = &self.triage;
        let mut out = String::new();
        let mean = t.mean_overlap.map_or("n/a".to_owned(), |m| format!("{m:.2}"));
        let _ = writeln!(out, "items            {}", self.items);
        let _ = writeln!(out, "scored           {}", t.scored);
        let _ = writeln!(out, "errored          {}", t.errored);
        let _ = writeln!(out, "mean overlap     {mean}");
        let _ = writeln!(out, "flagged (<{:.2})  {}", t.threshold, t.flagged);
        for (label, n) in &self.edge_cases {
            let _ = writeln!(out, "edge case        {label:?}: {n}");
        }
        if let Some(v) = &self.validation {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<12} {:>6} {:>7} {:>5} {:>6} {:>5}", "criterion", "mean", "alpha", "low", "medium", "high");
            for (c, s) in v {
                let alpha = s.alpha.as_ref().map_or("n/a".to_owned(), |a| format!("{:.2}", a.alpha));
                let _ = writeln!(
                    out,
                    "{:<12} {:>6.2} {:>7} {:>5} {:>6} {:>5}",
                    c.as_str(),
                    s.mean,
                    alpha,
                    s.bands.low,
                    s.bands.medium,
                    s.bands.high
                );
            }
        }
        out
    }
}
