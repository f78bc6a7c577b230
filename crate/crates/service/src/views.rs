//! Model check views: predicted against observed, residuals against fitted.

use serde::{Deserialize, Serialize};

use nlstat_core::formula::print_formula;
use nlstat_core::stats::{residual_diagnostics, FittedModel, ResidualDiagnostics};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedPoint {
    pub row: usize,
    pub fitted: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub row: usize,
    pub fitted: f64,
    pub residual: f64,
}

/// Skewness result without the per-row points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub skewness: Option<f64>,
    pub skew_flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl From<&ResidualDiagnostics> for DiagnosticSummary {
    fn from(d: &ResidualDiagnostics) -> Self {
        DiagnosticSummary { skewness: d.skewness, skew_flag: d.skew_flag, note: d.note.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelViews {
    pub formula: String,
    pub family: String,
    pub predicted_vs_observed: Vec<ObservedPoint>,
    /// Standardized residuals.
    pub residuals_vs_fitted: Vec<ResidualPoint>,
    pub diagnostics: DiagnosticSummary,
}

pub fn model_views(model: &FittedModel) -> Result<ModelViews> {
    let diag = residual_diagnostics(model)?;
    let predicted_vs_observed = model
        .row_index()
        .iter()
        .enumerate()
        .map(|(i, &row)| ObservedPoint { row, fitted: model.fitted[i], observed: model.response[i] })
        .collect();
    let residuals_vs_fitted = diag
        .points
        .iter()
        .map(|p| ResidualPoint { row: p.row, fitted: p.fitted, residual: p.residual })
        .collect();
    Ok(ModelViews {
        formula: print_formula(&model.spec),
        family: model.family().to_string(),
        predicted_vs_observed,
        residuals_vs_fitted,
        diagnostics: DiagnosticSummary::from(&diag),
    })
}
