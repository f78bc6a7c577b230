use serde::Serialize;

use super::FittedModel;
use crate::error::{Error, Result};

/// |g1| above this flags the residuals as skewed.
pub const SKEW_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub row: usize,
    pub fitted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualDiagnostics {
    pub points: Vec<ResidualPoint>,
    /// g1 of the standardized residuals; `None` when their variance is zero.
    pub skewness: Option<f64>,
    pub skew_flag: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Sample skewness g1 = m3 / m2^(3/2); `None` when the values are constant.
pub fn skewness(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 <= (1e-12 * scale).powi(2) {
        return None;
    }
    Some(m3 / m2.powf(1.5))
}

pub fn residual_diagnostics(model: &FittedModel) -> Result<ResidualDiagnostics> {
    let n = model.n_used();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "skewness needs at least 3 residuals, have {n}"
        )));
    }
    let points = model
        .row_index()
        .iter()
        .enumerate()
        .map(|(i, &row)| ResidualPoint {
            row,
            fitted: model.fitted[i],
            residual: model.residuals_std[i],
        })
        .collect();
    let skew = skewness(model.residuals_std.as_slice());
    let note = skew
        .is_none()
        .then(|| "residuals have zero variance; skewness is undefined".to_string());
    Ok(ResidualDiagnostics {
        points,
        skewness: skew,
        skew_flag: skew.is_some_and(|g| g.abs() > SKEW_THRESHOLD),
        note,
    })
}
