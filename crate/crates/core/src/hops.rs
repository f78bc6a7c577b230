//! Hypothetical outcome draws: coefficient vectors sampled from the
//! estimated sampling distribution, and the fit curves they imply.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::stats::{Encoding, FittedModel, Setting};

pub const DEFAULT_DRAWS: usize = 100;
pub const GRID_POINTS: usize = 50;
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9), standard normals via rand_distr ziggurat";

const JITTER: f64 = 1e-12;
const NEGATIVE_EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopsDrawSet {
    pub seed: u64,
    pub algorithm: String,
    /// How the covariance was factored: "cholesky", "cholesky+jitter",
    /// "eigen" or "zero".
    pub factorization: String,
    pub coefficient_names: Vec<String>,
    pub beta: Vec<f64>,
    /// One coefficient vector per draw.
    pub draws: Vec<Vec<f64>>,
}

impl HopsDrawSet {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Lower factor L with L·Lᵀ = cov, and the name of the method used.
fn factor(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, &'static str)> {
    let trace = cov.trace();
    if trace == 0.0 && cov.iter().all(|v| *v == 0.0) {
        return Ok((DMatrix::zeros(cov.nrows(), cov.ncols()), "zero"));
    }
    if let Some(ch) = cov.clone().cholesky() {
        return Ok((ch.l(), "cholesky"));
    }
    let eps = JITTER * trace.abs();
    let jittered = cov + DMatrix::identity(cov.nrows(), cov.ncols()) * eps;
    if let Some(ch) = jittered.cholesky() {
        return Ok((ch.l(), "cholesky+jitter"));
    }
    let eig = cov.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -NEGATIVE_EIGEN_TOL * trace.abs() {
        return Err(Error::Covariance(format!(
            "coefficient covariance has eigenvalue {min:e} (trace {trace:e})"
        )));
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok((&eig.eigenvectors * DMatrix::from_diagonal(&root), "eigen"))
}

/// Draws `b` coefficient vectors from N(beta, cov_beta).
pub fn draw_coefficients(model: &FittedModel, b: usize, seed: u64) -> Result<HopsDrawSet> {
    if b == 0 {
        return Err(Error::Domain("the number of draws must be at least 1".into()));
    }
    let (l, method) = factor(&model.cov_beta)?;
    let p = model.beta.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let draws = (0..b)
        .map(|_| {
            let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
            (&model.beta + &l * z).iter().copied().collect()
        })
        .collect();
    Ok(HopsDrawSet {
        seed,
        algorithm: RNG_ALGORITHM.to_string(),
        factorization: method.to_string(),
        coefficient_names: model.design.column_names.clone(),
        beta: model.beta.iter().copied().collect(),
        draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedCurves {
    pub focus_var: String,
    pub grid: Vec<f64>,
    /// Settings of the other covariates, in words.
    pub fixed: Vec<String>,
    /// Curve of the point estimate.
    pub point_estimate: Vec<f64>,
    /// One curve per draw, in draw order.
    pub curves: Vec<Vec<f64>>,
}

/// The first continuous predictor of the model, or, for a model with no
/// continuous predictor, the first continuous column of the dataset.
pub fn default_focus(model: &FittedModel, dataset: &Dataset) -> Option<String> {
    model
        .design
        .encodings
        .iter()
        .find(|(_, e)| matches!(e, Encoding::Continuous { .. }))
        .map(|(name, _)| name.clone())
        .or_else(|| {
            dataset
                .columns()
                .iter()
                .find(|c| c.kind() == ColumnKind::Continuous && c.name() != model.spec.response())
                .map(|c| c.name().to_string())
        })
}

fn grid_over(lo: f64, hi: f64) -> Vec<f64> {
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS)
        .map(|i| if i == GRID_POINTS - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Evaluates every draw over a grid spanning the observed range of
/// `focus_var`; other predictors use the marginal-mean reference settings
/// unless overridden in `fixed`.
///
/// A model with no continuous predictor accepts any continuous column of
/// the dataset as focus; its curves are then constant.
pub fn predict_curves(
    drawset: &HopsDrawSet,
    model: &FittedModel,
    dataset: &Dataset,
    focus_var: &str,
    fixed: &BTreeMap<String, Setting>,
) -> Result<PredictedCurves> {
    let (lo, hi, in_model) = match model.design.encodings.get(focus_var) {
        Some(Encoding::Continuous { min, max, .. }) => (*min, *max, true),
        Some(Encoding::Categorical { .. }) => {
            return Err(Error::Kind(format!("'{focus_var}' is categorical; curves need a continuous variable")))
        }
        None => {
            let has_continuous = model
                .design
                .encodings
                .values()
                .any(|e| matches!(e, Encoding::Continuous { .. }));
            let col = dataset.column(focus_var)?;
            if has_continuous || col.kind() != ColumnKind::Continuous || focus_var == model.spec.response() {
                return Err(Error::NotInModel(focus_var.to_string()));
            }
            let values: Vec<f64> = model.row_index().iter().filter_map(|&r| col.number(r)).collect();
            if values.is_empty() {
                return Err(Error::AllMissing(focus_var.to_string()));
            }
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi, false)
        }
    };
    let grid = grid_over(lo, hi);

    let mut settings = model.design.reference_settings();
    for (k, v) in fixed {
        if k != focus_var {
            settings.insert(k.clone(), v.clone());
        }
    }
    let fixed_words = describe(&settings, model, focus_var);
    let rows = grid
        .iter()
        .map(|&x| {
            if in_model {
                settings.insert(focus_var.to_string(), Setting::Value(x));
            }
            model.design.encode(&settings)
        })
        .collect::<Result<Vec<_>>>()?;
    let x = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());

    let curve = |coef: &[f64]| -> Vec<f64> {
        let eta = &x * DVector::from_column_slice(coef);
        eta.iter().map(|&e| model.inverse_link(e)).collect()
    };
    Ok(PredictedCurves {
        focus_var: focus_var.to_string(),
        point_estimate: curve(model.beta.as_slice()),
        curves: drawset.draws.iter().map(|d| curve(d)).collect(),
        grid,
        fixed: fixed_words,
    })
}

fn describe(settings: &BTreeMap<String, Setting>, model: &FittedModel, focus: &str) -> Vec<String> {
    settings
        .iter()
        .filter(|(k, _)| k.as_str() != focus)
        .map(|(k, s)| match (s, model.design.encodings.get(k)) {
            (Setting::Value(v), _) => format!("{k} = {v}"),
            (Setting::Level(i), Some(Encoding::Categorical { levels })) => format!("{k} = {}", levels[*i]),
            (Setting::Mixture(_), _) => format!("{k} averaged over levels"),
            _ => k.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv, LoadOptions};
    use crate::formula::parse_formula;
    use crate::stats::{fit, FitControl};

    fn load(text: &str) -> Dataset {
        load_csv(text.as_bytes(), &LoadOptions::default()).unwrap()
    }

    fn model(formula: &str, ds: &Dataset) -> FittedModel {
        fit(&parse_formula(formula).unwrap(), ds, &FitControl::default()).unwrap()
    }

    fn simple() -> Dataset {
        load("y,x\n1.5,0.5\n2.25,1.0\n4.5,2.0\n3.75,2.5\n6.0,3.0\n")
    }

    #[test]
    fn same_seed_same_draws() {
        let m = model("y ~ x", &simple());
        let a = draw_coefficients(&m, 50, 7).unwrap();
        let b = draw_coefficients(&m, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.draws, draw_coefficients(&m, 50, 8).unwrap().draws);
        assert_eq!(a.factorization, "cholesky");
    }

    #[test]
    fn zero_covariance_draws_equal_beta() {
        let ds = load("y,x\n2.5,1.25\n4.5,2.25\n6.5,3.25\n8.5,4.25\n");
        let m = model("y ~ x", &ds);
        let d = draw_coefficients(&m, 5, 1).unwrap();
        assert_eq!(d.factorization, "zero");
        for draw in &d.draws {
            assert_eq!(draw.as_slice(), m.beta.as_slice());
        }
        let c = predict_curves(&d, &m, &ds, "x", &BTreeMap::new()).unwrap();
        for curve in &c.curves {
            assert_eq!(curve, &c.point_estimate);
        }
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(factor(&cov), Err(Error::Covariance(_))));
        // rank-one PSD matrix needs the repair path
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (l, _) = factor(&cov).unwrap();
        assert!((&l * l.transpose() - &cov).abs().max() < 1e-10);
    }

    #[test]
    fn grid_midpoint_is_linear_predictor() {
        let ds = simple();
        let m = model("y ~ x", &ds);
        let d = draw_coefficients(&m, 20, 3).unwrap();
        let c = predict_curves(&d, &m, &ds, "x", &BTreeMap::new()).unwrap();
        assert_eq!(c.grid.len(), GRID_POINTS);
        assert_eq!((c.grid[0], c.grid[GRID_POINTS - 1]), (0.5, 3.0));
        for (draw, curve) in d.draws.iter().zip(&c.curves) {
            for (i, x) in c.grid.iter().enumerate() {
                assert!((curve[i] - (draw[0] + draw[1] * x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn intercept_only_curves_are_flat() {
        let ds = simple();
        let m = model("y ~ 1", &ds);
        assert_eq!(default_focus(&m, &ds).as_deref(), Some("x"));
        let d = draw_coefficients(&m, 10, 5).unwrap();
        let c = predict_curves(&d, &m, &ds, "x", &BTreeMap::new()).unwrap();
        for (draw, curve) in d.draws.iter().zip(&c.curves) {
            assert!(curve.iter().all(|v| *v == draw[0]));
        }
    }

    #[test]
    fn focus_must_be_in_model() {
        let ds = load("y,x,z\n1.5,0.5,3.1\n2.25,1.0,0.2\n4.5,2.0,9.9\n3.75,2.5,1.7\n6.0,3.0,4.4\n");
        let m = model("y ~ x", &ds);
        let d = draw_coefficients(&m, 2, 0).unwrap();
        assert_eq!(
            predict_curves(&d, &m, &ds, "z", &BTreeMap::new()).unwrap_err(),
            Error::NotInModel("z".into())
        );
    }

    #[test]
    fn gamma_curves_use_exp() {
        let ds = simple();
        let m = fit(
            &parse_formula("y ~ x").unwrap().with_family(crate::formula::Family::Gamma),
            &ds,
            &FitControl::default(),
        )
        .unwrap();
        let d = draw_coefficients(&m, 3, 9).unwrap();
        let c = predict_curves(&d, &m, &ds, "x", &BTreeMap::new()).unwrap();
        let x0 = c.grid[0];
        assert!((c.curves[0][0] - (d.draws[0][0] + d.draws[0][1] * x0).exp()).abs() < 1e-12);
    }
}
