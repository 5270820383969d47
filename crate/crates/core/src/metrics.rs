//! Point-forecast error metrics.

use alloc::format;

use crate::error::{Error, Result};

fn check(y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.is_empty() {
        return Err(Error::Argument("metrics need at least one point".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Argument(format!(
            "truth has {} points, prediction has {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check(y_true, y_pred)?;
    let total: f64 = y_true.iter().zip(y_pred).map(|(t, p)| libm::fabs(t - p)).sum();
    Ok(total / y_true.len() as f64)
}

/// Root mean square error.
pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check(y_true, y_pred)?;
    let total: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(libm::sqrt(total / y_true.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scale {
    Normalized,
    Watts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub scale: Scale,
    pub n_points: usize,
}

impl MetricsReport {
    pub fn compute(y_true: &[f64], y_pred: &[f64], scale: Scale) -> Result<Self> {
        Ok(MetricsReport {
            mae: mae(y_true, y_pred)?,
            rmse: rmse(y_true, y_pred)?,
            scale,
            n_points: y_true.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn worked_values() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
    }

    #[test]
    fn argument_errors() {
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fold_oracle_and_ordering() {
        let mut state = 17u64;
        let mut next = || {
            state = crate::rng::mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
        };
        let t: Vec<f64> = (0..100).map(|_| next()).collect();
        let p: Vec<f64> = (0..100).map(|_| next()).collect();
        let abs_fold = t.iter().zip(&p).fold(0.0, |acc, (a, b)| acc + (a - b).abs()) / 100.0;
        let sq_fold = (t.iter().zip(&p).fold(0.0, |acc, (a, b)| acc + (a - b).powi(2)) / 100.0).sqrt();
        assert!((mae(&t, &p).unwrap() - abs_fold).abs() < 1e-12);
        assert!((rmse(&t, &p).unwrap() - sq_fold).abs() < 1e-12);
        let r = MetricsReport::compute(&t, &p, Scale::Normalized).unwrap();
        assert!(r.rmse >= r.mae);
        assert_eq!(r.n_points, 100);
    }
}
