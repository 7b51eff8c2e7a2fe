use serde::{Deserialize, Serialize};

use super::StatsError;

/// Mean, sample SD (n−1 denominator), range and count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub mean: f64,
    /// `None` for a single observation.
    pub sd: Option<f64>,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

pub fn describe(values: &[f64]) -> Result<Description, StatsError> {
    if values.is_empty() {
        return Err(StatsError::InsufficientObservations { have: 0, need: 0 });
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (n >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Description { mean, sd, min, max, n })
}

/// Sample variance with n−1 denominator.
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let d = describe(&[3.0, 4.0, 5.0]).unwrap();
        assert_eq!(d.mean, 4.0);
        assert_eq!(d.sd, Some(1.0));
        assert_eq!((d.min, d.max, d.n), (3.0, 5.0, 3));
    }

    #[test]
    fn single_value_has_no_sd() {
        let d = describe(&[7.0]).unwrap();
        assert_eq!(d.mean, 7.0);
        assert_eq!(d.sd, None);
    }

    #[test]
    fn constant_vector_has_zero_sd() {
        assert_eq!(describe(&[2.5; 6]).unwrap().sd, Some(0.0));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(describe(&[]).is_err());
    }
}
