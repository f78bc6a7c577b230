//! Deterministic model fitting.
//!
//! Gaussian models are fitted by least squares through a QR decomposition.
//! Gamma models use iteratively reweighted least squares on the log link.
//! Log-normal models are least squares on log(y), reported on the original
//! scale with a likelihood that includes the log-transform Jacobian, so AIC
//! is comparable across all three families.

pub mod compare;
pub mod design;
pub mod diagnostics;
mod glm;
mod ols;
pub mod special;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::formula::{Family, ModelSpec};

pub use compare::{compare_models, ModelComparison, Preferred};
pub use design::{build_design, DesignMatrix, Encoding, Setting};
pub use diagnostics::{residual_diagnostics, skewness, ResidualDiagnostics, SKEW_THRESHOLD};
pub use glm::IRLS_MAX_ITER;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Residual sums of squares below `(DEGENERATE_TOL · ‖y‖)²` are treated as
/// an exact fit.
const DEGENERATE_TOL: f64 = 1e-10;

/// Iteration limits and cancellation for iterative fits.
#[derive(Debug, Clone)]
pub struct FitControl {
    pub max_iterations: usize,
    /// Stop when |ΔD| / (|D| + 0.1) falls below this.
    pub tolerance: f64,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for FitControl {
    fn default() -> Self {
        FitControl {
            max_iterations: IRLS_MAX_ITER,
            tolerance: 1e-8,
            cancel: None,
        }
    }
}

impl FitControl {
    pub(crate) fn check_cancelled(&self) -> Result<()> {
        match &self.cancel {
            Some(flag) if flag.load(Ordering::Relaxed) => Err(Error::Cancelled),
            _ => Ok(()),
        }
    }
}

/// A fitted model. Vectors are aligned with `design.rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub design: DesignMatrix,
    /// Observed response (original scale).
    pub response: DVector<f64>,
    pub beta: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    pub linear_predictor: DVector<f64>,
    /// Predicted mean on the response scale.
    pub fitted: DVector<f64>,
    /// `response - fitted`.
    pub residuals_raw: DVector<f64>,
    /// Gaussian: raw / σ̂. LogNormal: log-scale residual / σ̂.
    /// Gamma: deviance residual / √φ̂.
    pub residuals_std: DVector<f64>,
    /// σ̂ for Gaussian and LogNormal (log scale), φ̂ (Pearson) for Gamma.
    pub sigma_or_dispersion: f64,
    pub df_residual: usize,
    pub loglik: f64,
    pub aic: f64,
    pub iterations: usize,
    /// Exact fit: zero residual variance, so standard errors are zero and
    /// the likelihood is unbounded.
    pub degenerate: bool,
}

impl FittedModel {
    pub fn n_used(&self) -> usize {
        self.design.rows.len()
    }

    pub fn row_index(&self) -> &[usize] {
        &self.design.rows
    }

    pub fn family(&self) -> Family {
        self.spec.family()
    }

    /// Number of estimated parameters counted by AIC.
    pub fn n_parameters(&self) -> usize {
        self.beta.len() + 1
    }

    /// Standard error of each coefficient.
    pub fn std_errors(&self) -> DVector<f64> {
        self.cov_beta.diagonal().map(|v| v.max(0.0).sqrt())
    }

    /// Converts a linear-predictor value to the response scale.
    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self.family() {
            Family::Gaussian => eta,
            Family::Gamma => eta.exp(),
            Family::LogNormal => {
                let s = self.sigma_or_dispersion;
                (eta + 0.5 * s * s).exp()
            }
        }
    }
}

fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

/// Ordinary least squares; the family of `spec` is ignored and the model
/// is reported as Gaussian.
pub fn fit_ols(spec: &ModelSpec, design: DesignMatrix, y: DVector<f64>) -> Result<FittedModel> {
    let ls = ols::least_squares(&design.matrix, &y, &design.column_names)?;
    let n = design.n();
    let p = design.p();
    let df = n - p;
    let degenerate = ls.rss.sqrt() <= DEGENERATE_TOL * y.norm();
    let (sigma, cov, residuals_std, loglik) = if degenerate {
        (0.0, DMatrix::zeros(p, p), DVector::zeros(n), f64::INFINITY)
    } else {
        let s2 = ls.rss / df as f64;
        let sigma = s2.sqrt();
        let loglik = -0.5 * n as f64 * (LN_2PI + (ls.rss / n as f64).ln() + 1.0);
        (sigma, ls.scaled_cov(s2), &ls.residuals / sigma, loglik)
    };
    Ok(FittedModel {
        spec: spec.with_family(Family::Gaussian),
        linear_predictor: ls.fitted.clone(),
        fitted: ls.fitted,
        residuals_raw: ls.residuals,
        residuals_std,
        beta: ls.beta,
        cov_beta: cov,
        sigma_or_dispersion: sigma,
        df_residual: df,
        loglik,
        aic: aic(loglik, p + 1),
        iterations: 1,
        degenerate,
        design,
        response: y,
    })
}

/// Fits `design`/`y` under `family`. Gaussian delegates to [`fit_ols`].
pub fn fit_irls(
    spec: &ModelSpec,
    design: DesignMatrix,
    y: DVector<f64>,
    family: Family,
    control: &FitControl,
) -> Result<FittedModel> {
    control.check_cancelled()?;
    if family.requires_positive_response() {
        if let Some(bad) = y.iter().find(|v| **v <= 0.0) {
            return Err(Error::FamilyDomain(format!(
                "the {family} family needs a strictly positive response, found {bad}"
            )));
        }
    }
    match family {
        Family::Gaussian => fit_ols(spec, design, y),
        Family::Gamma => glm::fit_gamma_log(spec, design, y, control),
        Family::LogNormal => fit_lognormal(spec, design, y),
    }
}

fn fit_lognormal(spec: &ModelSpec, design: DesignMatrix, y: DVector<f64>) -> Result<FittedModel> {
    let log_y = y.map(f64::ln);
    let sum_log_y: f64 = log_y.iter().sum();
    let base = fit_ols(spec, design, log_y)?;
    let sigma = base.sigma_or_dispersion;
    let fitted = base.linear_predictor.map(|eta| (eta + 0.5 * sigma * sigma).exp());
    let loglik = base.loglik - sum_log_y;
    let p = base.beta.len();
    Ok(FittedModel {
        spec: spec.with_family(Family::LogNormal),
        residuals_raw: &y - &fitted,
        fitted,
        response: y,
        loglik,
        aic: aic(loglik, p + 1),
        ..base
    })
}

/// Validates, encodes and fits `spec` on `dataset`.
pub fn fit(spec: &ModelSpec, dataset: &Dataset, control: &FitControl) -> Result<FittedModel> {
    let (design, y) = build_design(spec, dataset)?;
    fit_irls(spec, design, y, spec.family(), control)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, Term};
    use std::collections::BTreeMap;

    /// Design with an intercept and the given predictor columns.
    pub(crate) fn raw_design(cols: &[&[f64]]) -> DesignMatrix {
        let n = cols.first().map_or(0, |c| c.len());
        design_with_rows(n, cols)
    }

    pub(crate) fn intercept_design(n: usize) -> DesignMatrix {
        design_with_rows(n, &[])
    }

    fn design_with_rows(n: usize, cols: &[&[f64]]) -> DesignMatrix {
        let mut m = DMatrix::from_element(n, cols.len() + 1, 1.0);
        let mut names = vec!["(Intercept)".to_string()];
        let mut spans = Vec::new();
        let mut enc = BTreeMap::new();
        for (j, c) in cols.iter().enumerate() {
            m.set_column(j + 1, &DVector::from_column_slice(c));
            let name = format!("x{}", j + 1);
            spans.push((Term::main(name.clone()), j + 1..j + 2));
            let mean = c.iter().sum::<f64>() / n as f64;
            enc.insert(name.clone(), Encoding::Continuous { mean, min: 0.0, max: 0.0 });
            names.push(name);
        }
        DesignMatrix {
            matrix: m,
            column_names: names,
            term_spans: spans,
            reference_levels: BTreeMap::new(),
            encodings: enc,
            rows: (0..n).collect(),
        }
    }

    fn spec_for(k: usize) -> ModelSpec {
        ModelSpec::new("y", (1..=k).map(|j| Term::main(format!("x{j}"))), Family::Gaussian).unwrap()
    }

    fn ols(cols: &[&[f64]], y: &[f64]) -> Result<FittedModel> {
        fit_ols(&spec_for(cols.len()), design_with_rows(y.len(), cols), DVector::from_column_slice(y))
    }

    #[test]
    fn exact_line() {
        let m = ols(&[&[1.0, 2.0, 3.0]], &[2.0, 4.0, 6.0]).unwrap();
        assert!(m.beta[0].abs() < 1e-12);
        assert!((m.beta[1] - 2.0).abs() < 1e-12);
        assert!(m.residuals_raw.norm_squared() < 1e-24);
        assert!(m.degenerate);
        assert_eq!(m.cov_beta, DMatrix::zeros(2, 2));
        assert!(m.residuals_std.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn three_point_fixture() {
        // normal equations: [[3,3],[3,5]] β = [7, 10]  ⇒  β = (5/6, 3/2)
        let m = ols(&[&[0.0, 1.0, 2.0]], &[1.0, 2.0, 4.0]).unwrap();
        assert!((m.beta[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((m.beta[1] - 1.5).abs() < 1e-14);
        // RSS = 1/6, df = 1, σ² = 1/6, cov = σ²/6 · [[5,-3],[-3,3]]
        assert!((m.sigma_or_dispersion.powi(2) - 1.0 / 6.0).abs() < 1e-14);
        let expect = DMatrix::from_row_slice(2, 2, &[5.0, -3.0, -3.0, 3.0]) / 36.0;
        assert!((&m.cov_beta - expect).abs().max() < 1e-14);
        assert_eq!(m.df_residual, 1);
        // loglik at MLE variance RSS/n = 1/18
        let ll = -1.5 * (LN_2PI + (1.0f64 / 18.0).ln() + 1.0);
        assert!((m.loglik - ll).abs() < 1e-12);
        assert!((m.aic - (-2.0 * ll + 6.0)).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_is_mean() {
        let m = ols(&[], &[1.0, 2.0, 3.0]).unwrap();
        assert!((m.beta[0] - 2.0).abs() < 1e-14);
        assert!(m.fitted.iter().all(|f| (f - 2.0).abs() < 1e-14));
    }

    #[test]
    fn rank_deficiency_names_the_column() {
        let e = ols(&[&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]], &[1.0, 3.0, 2.0, 5.0]).unwrap_err();
        assert_eq!(e, Error::RankDeficient { column: "x2".into() });
    }

    #[test]
    fn gaussian_irls_is_ols() {
        let d = raw_design(&[&[0.0, 1.0, 2.0, 3.5]]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 4.0, 3.0]);
        let a = fit_ols(&spec_for(1), d.clone(), y.clone()).unwrap();
        let b = fit_irls(&spec_for(1), d, y, Family::Gaussian, &FitControl::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gamma_intercept_only_matches_sample_mean() {
        let y = DVector::from_column_slice(&[1.0, 2.0, 4.0]);
        let m = fit_irls(&spec_for(0), intercept_design(3), y, Family::Gamma, &FitControl::default()).unwrap();
        assert!((m.beta[0].exp() - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.family(), Family::Gamma);
    }

    #[test]
    fn lognormal_constant_response_is_degenerate() {
        let e = std::f64::consts::E;
        let m = fit_irls(
            &spec_for(0),
            intercept_design(3),
            DVector::from_column_slice(&[e, e, e]),
            Family::LogNormal,
            &FitControl::default(),
        )
        .unwrap();
        assert!((m.beta[0] - 1.0).abs() < 1e-15);
        assert_eq!(m.sigma_or_dispersion, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn lognormal_likelihood_includes_jacobian() {
        let x = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let y = [1.2, 2.9, 3.1, 6.0, 8.5, 14.0];
        let d = raw_design(&[&x]);
        let yv = DVector::from_column_slice(&y);
        let ln = fit_irls(&spec_for(1), d.clone(), yv.clone(), Family::LogNormal, &FitControl::default()).unwrap();
        let on_log = fit_ols(&spec_for(1), d, yv.map(f64::ln)).unwrap();
        let jac: f64 = y.iter().map(|v| v.ln()).sum();
        assert!((ln.loglik - (on_log.loglik - jac)).abs() < 1e-12);
        let s = ln.sigma_or_dispersion;
        for i in 0..y.len() {
            assert!((ln.fitted[i] - (on_log.fitted[i] + 0.5 * s * s).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_positive_response_rejected() {
        for fam in [Family::Gamma, Family::LogNormal] {
            let r = fit_irls(
                &spec_for(0),
                intercept_design(3),
                DVector::from_column_slice(&[1.0, 0.0, 2.0]),
                fam,
                &FitControl::default(),
            );
            assert!(matches!(r, Err(Error::FamilyDomain(_))));
        }
    }

    #[test]
    fn cancellation_is_honoured() {
        let control = FitControl {
            cancel: Some(Arc::new(AtomicBool::new(true))),
            ..FitControl::default()
        };
        let r = fit_irls(
            &spec_for(0),
            intercept_design(3),
            DVector::from_column_slice(&[1.0, 2.0, 3.0]),
            Family::Gamma,
            &control,
        );
        assert_eq!(r.unwrap_err(), Error::Cancelled);
    }

    #[test]
    fn fit_from_dataset() {
        let ds = crate::data::load_csv(
            b"y,x\n1.5,0.5\n2.5,1.5\n2.0,2.5\n4.5,3.5\n",
            &crate::data::LoadOptions::default(),
        )
        .unwrap();
        let m = fit(&parse_formula("y ~ x").unwrap(), &ds, &FitControl::default()).unwrap();
        assert_eq!(m.n_used(), 4);
        assert_eq!(m.design.column_names, ["(Intercept)", "x"]);
    }
}
