use serde::Serialize;

use super::FittedModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preferred {
    First,
    Second,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub aic_first: Option<f64>,
    pub aic_second: Option<f64>,
    /// aic(second) − aic(first).
    pub delta_aic: Option<f64>,
    pub preferred: Preferred,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Compares two fits of the same response on the same rows by AIC.
pub fn compare_models(a: &FittedModel, b: &FittedModel) -> Result<ModelComparison> {
    if a.spec.response() != b.spec.response() {
        return Err(Error::IncomparableModels(format!(
            "responses differ ('{}' vs '{}')",
            a.spec.response(),
            b.spec.response()
        )));
    }
    if a.row_index() != b.row_index() {
        return Err(Error::IncomparableModels(format!(
            "fitted on different rows ({} vs {} used)",
            a.n_used(),
            b.n_used()
        )));
    }
    let delta = b.aic - a.aic;
    let preferred = if a.aic == b.aic {
        Preferred::Tie
    } else if b.aic < a.aic {
        Preferred::Second
    } else {
        Preferred::First
    };
    Ok(ModelComparison {
        aic_first: finite(a.aic),
        aic_second: finite(b.aic),
        delta_aic: finite(delta),
        preferred,
    })
}
