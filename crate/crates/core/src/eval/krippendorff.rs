//! Krippendorff's alpha over a coincidence matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Criterion, EvalError, ValidationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Interval,
    Ordinal,
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Units with at least two values.
    pub units: usize,
    /// Pairable values across those units.
    pub pairable: usize,
    /// Expected disagreement was zero (all pooled values identical); alpha
    /// is reported as 1.
    pub degenerate: bool,
}

/// Alpha for a reliability matrix given as units × coders, `None` marking a
/// missing value. Units with fewer than two values are not pairable and are
/// skipped.
pub fn krippendorff_alpha(units: &[Vec<Option<f64>>], metric: Metric) -> Result<AlphaResult, EvalError> {
    let coders = units.iter().map(Vec::len).max().unwrap_or(0);
    if coders < 2 {
        return Err(EvalError::InsufficientData("need at least two coders".into()));
    }
    let mut values: Vec<f64> = units.iter().flatten().flatten().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::Invalid("non-finite rating".into()));
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    let index = |v: f64| values.binary_search_by(|x| x.total_cmp(&v)).expect("value was collected");

    let k = values.len();
    let mut coincidence = vec![0.0; k * k];
    let mut n_units = 0;
    for unit in units {
        let present: Vec<usize> = unit.iter().flatten().map(|v| index(*v)).collect();
        let m = present.len();
        if m < 2 {
            continue;
        }
        n_units += 1;
        let w = 1.0 / (m - 1) as f64;
        for (i, a) in present.iter().enumerate() {
            for (j, b) in present.iter().enumerate() {
                if i != j {
                    coincidence[a * k + b] += w;
                }
            }
        }
    }
    let marginals: Vec<f64> = (0..k).map(|c| (0..k).map(|d| coincidence[c * k + d]).sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return Err(EvalError::InsufficientData("fewer than two pairable values".into()));
    }

    let delta = distance_matrix(&values, &marginals, metric);
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            observed += coincidence[c * k + d] * delta[c * k + d];
            expected += marginals[c] * marginals[d] * delta[c * k + d];
        }
    }
    let pairable = n.round() as usize;
    if expected == 0.0 {
        return Ok(AlphaResult { alpha: 1.0, units: n_units, pairable, degenerate: true });
    }
    Ok(AlphaResult { alpha: 1.0 - (n - 1.0) * observed / expected, units: n_units, pairable, degenerate: false })
}

fn distance_matrix(values: &[f64], marginals: &[f64], metric: Metric) -> Vec<f64> {
    let k = values.len();
    let mut delta = vec![0.0; k * k];
    for c in 0..k {
        for d in 0..k {
            delta[c * k + d] = match metric {
                Metric::Nominal => f64::from(u8::from(c != d)),
                Metric::Interval => (values[c] - values[d]).powi(2),
                Metric::Ordinal => {
                    let (lo, hi) = (c.min(d), c.max(d));
                    let span: f64 = marginals[lo..=hi].iter().sum();
                    (span - (marginals[lo] + marginals[hi]) / 2.0).powi(2)
                }
            };
        }
    }
    delta
}

/// Alpha for one criterion across validation records, with items as units.
pub fn reliability(records: &[ValidationRecord], criterion: Criterion, metric: Metric) -> Result<AlphaResult, EvalError> {
    let mut coders: Vec<&str> = records.iter().map(ValidationRecord::coder_id).collect();
    coders.sort_unstable();
    coders.dedup();
    let mut by_item: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        let row = by_item.entry(r.item_id()).or_insert_with(|| vec![None; coders.len()]);
        let slot = coders.binary_search(&r.coder_id()).expect("coder collected");
        if row[slot].is_some() {
            return Err(EvalError::Invalid(format!(
                "coder {} scored item {} twice",
                r.coder_id(),
                r.item_id()
            )));
        }
        row[slot] = Some(f64::from(r.score(criterion)));
    }
    let units: Vec<Vec<Option<f64>>> = by_item.into_values().collect();
    krippendorff_alpha(&units, metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(rows: &[&[Option<f64>]]) -> Vec<Vec<Option<f64>>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn hand_case() {
        let u = units(&[&[Some(1.0), Some(2.0)], &[Some(1.0), Some(2.0)]]);
        assert_eq!(krippendorff_alpha(&u, Metric::Interval).unwrap().alpha, -0.5);
    }

    #[test]
    fn perfect_agreement() {
        let u = units(&[&[Some(3.0), Some(3.0)], &[Some(7.0), Some(7.0)], &[Some(9.0), None]]);
        let r = krippendorff_alpha(&u, Metric::Interval).unwrap();
        assert_eq!(r.alpha, 1.0);
        assert_eq!((r.units, r.pairable), (2, 4));
    }

    #[test]
    fn identical_values_are_degenerate() {
        let u = units(&[&[Some(5.0), Some(5.0)], &[Some(5.0), Some(5.0)]]);
        let r = krippendorff_alpha(&u, Metric::Interval).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.alpha, 1.0);
    }

    #[test]
    fn nominal_textbook_example() {
        // Krippendorff's 4-coder, 12-unit nominal example; alpha = 0.743.
        let n = None;
        let s = |v: f64| Some(v);
        let u = units(&[
            &[s(1.0), s(1.0), n, s(1.0)],
            &[s(2.0), s(2.0), s(3.0), s(2.0)],
            &[s(3.0), s(3.0), s(3.0), s(3.0)],
            &[s(3.0), s(3.0), s(3.0), s(3.0)],
            &[s(2.0), s(2.0), s(2.0), s(2.0)],
            &[s(1.0), s(2.0), s(3.0), s(4.0)],
            &[s(4.0), s(4.0), s(4.0), s(4.0)],
            &[s(1.0), s(1.0), s(2.0), s(1.0)],
            &[s(2.0), s(2.0), s(2.0), s(2.0)],
            &[n, s(5.0), s(5.0), s(5.0)],
            &[n, n, s(1.0), s(1.0)],
            &[n, n, s(3.0), n],
        ]);
        let a = krippendorff_alpha(&u, Metric::Nominal).unwrap().alpha;
        assert!((a - 0.743).abs() < 5e-4, "{a}");
    }

    #[test]
    fn needs_two_coders() {
        assert!(krippendorff_alpha(&units(&[&[Some(1.0)]]), Metric::Interval).is_err());
        assert!(krippendorff_alpha(&units(&[&[Some(1.0), None]]), Metric::Interval).is_err());
    }
}
