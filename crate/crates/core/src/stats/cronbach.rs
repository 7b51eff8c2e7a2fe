use serde::{Deserialize, Serialize};

use super::descriptive::sample_variance;
use super::{Matrix, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub alpha: f64,
    pub k: usize,
    pub n: usize,
}

/// Cronbach's alpha for an `n × k` matrix (respondents × items):
/// `k/(k−1) · (1 − Σ var(item) / var(total))` with sample variances.
pub fn cronbach_alpha(items: &Matrix) -> Result<ReliabilityResult, StatsError> {
    let (n, k) = (items.rows(), items.cols());
    if n < 2 {
        return Err(StatsError::InsufficientObservations { have: n, need: 1 });
    }
    if k < 2 {
        return Err(StatsError::InvalidInput(format!("need at least 2 items, got {k}")));
    }
    if (0..n).any(|r| items.row(r).iter().any(|v| !v.is_finite())) {
        return Err(StatsError::InvalidInput("item matrix has missing or non-finite cells".into()));
    }
    let item_var_sum: f64 = (0..k).map(|c| sample_variance(&items.column(c))).sum();
    let totals: Vec<f64> = (0..n).map(|r| items.row(r).iter().sum()).collect();
    let total_var = sample_variance(&totals);
    if total_var <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let k_f = k as f64;
    Ok(ReliabilityResult { alpha: k_f / (k_f - 1.0) * (1.0 - item_var_sum / total_var), k, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_correlated_items_give_one() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![4.0, 4.0]]).unwrap();
        assert!((cronbach_alpha(&m).unwrap().alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uncorrelated_equal_variance_items_give_zero() {
        // Columns (1,1,-1,-1) and (1,-1,1,-1): equal variance, zero covariance.
        let m = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
        ])
        .unwrap();
        assert!(cronbach_alpha(&m).unwrap().alpha.abs() < 1e-12);
    }

    #[test]
    fn constant_matrix_is_degenerate() {
        let m = Matrix::from_rows(&[vec![3.0, 3.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(cronbach_alpha(&m), Err(StatsError::DegenerateVariance));
    }

    #[test]
    fn shape_checks() {
        let one_row = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(cronbach_alpha(&one_row).is_err());
        let one_item = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(cronbach_alpha(&one_item).is_err());
    }
}
