//! Ordinary least squares via Householder QR.
//!
//! The normal equations are never formed: `X = QR`, `β = R⁻¹ Qᵀy`, and the
//! coefficient covariance is `σ̂² R⁻¹ R⁻ᵀ`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::special::{f_sf, t_two_sided_p};
use super::{Matrix, StatsError};

/// Smallest |R_kk| below this fraction of the largest ⇒ rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    /// `None` when the standard error is zero (exact fit).
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub n: usize,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// Overall F statistic; `None` for an intercept-only model or an exact fit.
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    /// Numerator df: number of predictors excluding the intercept.
    pub df_model: usize,
    /// Denominator df: `n − m`.
    pub df_resid: usize,
    pub sigma: f64,
    pub rss: f64,
    pub tss: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn coefficient(&self, label: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.label == label)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    /// Coefficient table as CSV: `term,estimate,std_error,t,p`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,estimate,std_error,t,p\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for c in &self.coefficients {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{}",
                c.label,
                c.estimate,
                c.std_error,
                opt(c.t_stat),
                opt(c.p_value)
            );
        }
        out
    }

    /// Plain-text summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<32} {:>10} {:>10} {:>8} {:>8}", "term", "beta", "se", "t", "p");
        for c in &self.coefficients {
            let t = c.t_stat.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            let p = c.p_value.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<32} {:>10.3} {:>10.3} {:>8} {:>8}",
                c.label, c.estimate, c.std_error, t, p
            );
        }
        let f = self.f_statistic.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        let fp = self.f_p_value.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "n = {}, R² = {:.3}, F({}, {}) = {}, p = {}",
            self.n, self.r_squared, self.df_model, self.df_resid, f, fp
        );
        out
    }
}

pub fn ols(x: &Matrix, y: &[f64]) -> Result<RegressionResult, StatsError> {
    let labels: Vec<String> = (0..x.cols())
        .map(|j| if j == 0 { "intercept".to_owned() } else { format!("x{j}") })
        .collect();
    ols_labeled(x, y, &labels)
}

/// OLS of `y` on `x`, whose first column must be the all-ones intercept.
pub fn ols_labeled(x: &Matrix, y: &[f64], labels: &[String]) -> Result<RegressionResult, StatsError> {
    let (n, m) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(StatsError::DimensionMismatch(format!("X has {n} rows but y has {}", y.len())));
    }
    if labels.len() != m {
        return Err(StatsError::DimensionMismatch(format!("{m} columns but {} labels", labels.len())));
    }
    if m == 0 {
        return Err(StatsError::InvalidInput("design matrix has no columns".into()));
    }
    if n <= m {
        return Err(StatsError::InsufficientObservations { have: n, need: m });
    }
    if (0..n).any(|r| x.get(r, 0) != 1.0) {
        return Err(StatsError::InvalidInput("first column must be the intercept (all ones)".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || (0..n).any(|r| x.row(r).iter().any(|v| !v.is_finite())) {
        return Err(StatsError::InvalidInput("non-finite value in X or y".into()));
    }

    let (r, qty) = householder_qr(x, y);
    let diag: Vec<f64> = (0..m).map(|k| r[k][k].abs()).collect();
    let max_diag = diag.iter().copied().fold(0.0, f64::max);
    if let Some(column) = diag.iter().position(|d| *d < RANK_TOLERANCE * max_diag || *d == 0.0) {
        return Err(StatsError::RankDeficient { column });
    }

    let beta = back_substitute(&r, &qty[..m]);
    let fitted = x.mul_vec(&beta);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let df_resid = n - m;
    let df_model = m - 1;
    let sigma2 = rss / df_resid as f64;

    let r_inv = upper_triangular_inverse(&r);
    let mut coefficients = Vec::with_capacity(m);
    for j in 0..m {
        let var: f64 = (j..m).map(|k| r_inv[j][k] * r_inv[j][k]).sum::<f64>() * sigma2;
        let se = var.sqrt();
        let (t_stat, p_value) = if se > 0.0 {
            let t = beta[j] / se;
            (Some(t), Some(t_two_sided_p(t, df_resid as f64)?))
        } else {
            (None, None)
        };
        coefficients.push(Coefficient {
            label: labels[j].clone(),
            estimate: beta[j],
            std_error: se,
            t_stat,
            p_value,
        });
    }

    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df_resid as f64;
    let (f_statistic, f_p_value) = if df_model > 0 && rss > 0.0 {
        let f = ((tss - rss) / df_model as f64) / sigma2;
        (Some(f), Some(f_sf(f, df_model as f64, df_resid as f64)?))
    } else {
        (None, None)
    };

    Ok(RegressionResult {
        n,
        coefficients,
        r_squared,
        adj_r_squared,
        f_statistic,
        f_p_value,
        df_model,
        df_resid,
        sigma: sigma2.sqrt(),
        rss,
        tss,
        residuals,
    })
}

/// Returns the upper-triangular `R` (as rows, m × m) and `Qᵀy` (length n).
fn householder_qr(x: &Matrix, y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (n, m) = (x.rows(), x.cols());
    let mut cols: Vec<Vec<f64>> = (0..m).map(|j| x.column(j)).collect();
    let mut qty = y.to_vec();

    for k in 0..m {
        let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let v_norm2: f64 = v.iter().map(|e| e * e).sum();
        if v_norm2 == 0.0 {
            continue;
        }
        let reflect = |target: &mut [f64]| {
            let s: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
            let scale = 2.0 * s / v_norm2;
            for (t, vi) in target.iter_mut().zip(&v) {
                *t -= scale * vi;
            }
        };
        for col in cols.iter_mut().skip(k) {
            reflect(&mut col[k..n]);
        }
        reflect(&mut qty[k..n]);
    }

    let r = (0..m)
        .map(|i| (0..m).map(|j| if j >= i { cols[j][i] } else { 0.0 }).collect())
        .collect();
    (r, qty)
}

fn back_substitute(r: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let m = rhs.len();
    let mut out = vec![0.0; m];
    for i in (0..m).rev() {
        let tail: f64 = (i + 1..m).map(|j| r[i][j] * out[j]).sum();
        out[i] = (rhs[i] - tail) / r[i][i];
    }
    out
}

fn upper_triangular_inverse(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = r.len();
    let mut inv = vec![vec![0.0; m]; m];
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        let col = back_substitute(r, &e);
        for i in 0..m {
            inv[i][j] = col[i];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_intercept(xs: &[f64]) -> Matrix {
        Matrix::from_rows(&xs.iter().map(|x| vec![1.0, *x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exact_line() {
        let fit = ols(&with_intercept(&[0.0, 1.0, 2.0]), &[1.0, 2.0, 3.0]).unwrap();
        assert!((fit.coefficients[0].estimate - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1].estimate - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.5, 0.5],
            vec![1.0, 1.5, 1.5],
            vec![1.0, 2.0, 2.0],
            vec![1.0, 3.5, 3.5],
        ])
        .unwrap();
        assert_eq!(ols(&x, &[1.0, 2.0, 2.5, 4.0]), Err(StatsError::RankDeficient { column: 2 }));
    }

    #[test]
    fn too_few_rows() {
        let x = with_intercept(&[1.0, 2.0]);
        assert!(matches!(ols(&x, &[1.0, 2.0]), Err(StatsError::InsufficientObservations { .. })));
    }

    #[test]
    fn requires_intercept_column() {
        let x = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
        assert!(matches!(ols(&x, &[1.0, 2.0, 3.0]), Err(StatsError::InvalidInput(_))));
    }

    #[test]
    fn known_small_regression() {
        // y = 2 + 0.5x with residuals (+0.1, -0.2, +0.1); hand-computed slope 0.5.
        let x = with_intercept(&[1.0, 2.0, 3.0]);
        let y = [2.6, 2.8, 3.6];
        let fit = ols(&x, &y).unwrap();
        assert!((fit.coefficients[1].estimate - 0.5).abs() < 1e-12);
        assert!((fit.coefficients[0].estimate - 2.0).abs() < 1e-12);
        // RSS = 0.06, σ̂² = 0.06, Sxx = 2 ⇒ se(slope) = sqrt(0.03)
        assert!((fit.coefficients[1].std_error - 0.03f64.sqrt()).abs() < 1e-12);
        assert_eq!((fit.df_model, fit.df_resid), (1, 1));
    }

    #[test]
    fn csv_has_header_and_one_row_per_term() {
        let fit = ols(&with_intercept(&[0.0, 1.0, 2.0, 4.0]), &[1.0, 2.1, 2.9, 5.2]).unwrap();
        let csv = fit.to_csv();
        assert!(csv.starts_with("term,estimate,std_error,t,p\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
