//! IRLS for the Gamma family with log link.
//!
//! With V(μ) = μ² and g'(μ) = 1/μ the working weights 1/(V·g'²) are all
//! one, so each step is an ordinary least-squares solve of the working
//! response z = η + (y − μ)/μ. The weights are still carried explicitly so
//! the loop reads as the general algorithm.

use nalgebra::DVector;

use super::ols::least_squares;
use super::special::ln_gamma;
use super::{aic, DesignMatrix, DEGENERATE_TOL, FitControl, FittedModel};
use crate::error::{Error, Result};
use crate::formula::{Family, ModelSpec};

pub const IRLS_MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 30;
const MU_FLOOR: f64 = 1e-10;

fn unit_deviance(y: f64, mu: f64) -> f64 {
    2.0 * (-(y / mu).ln() + (y - mu) / mu)
}

fn deviance(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    y.iter().zip(mu.iter()).map(|(&y, &m)| unit_deviance(y, m)).sum()
}

fn working_weights(mu: &DVector<f64>) -> DVector<f64> {
    // 1 / (V(μ) g'(μ)²) with V = μ², g' = 1/μ
    mu.map(|m| 1.0 / (m * m * (1.0 / m).powi(2)))
}

pub(crate) fn fit_gamma_log(
    spec: &ModelSpec,
    design: DesignMatrix,
    y: DVector<f64>,
    control: &FitControl,
) -> Result<FittedModel> {
    let x = &design.matrix;
    let names = &design.column_names;
    let (n, p) = x.shape();

    let mut mu = y.map(|v| v.max(MU_FLOOR));
    let mut eta = mu.map(f64::ln);
    let mut dev_old = deviance(&y, &mu);
    let mut trace = Vec::new();
    let mut beta = DVector::zeros(p);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=control.max_iterations {
        control.check_cancelled()?;
        iterations = iter;
        let w = working_weights(&mu);
        let sw = w.map(f64::sqrt);
        let z = DVector::from_iterator(n, (0..n).map(|i| eta[i] + (y[i] - mu[i]) / mu[i]));
        let mut xw = x.clone();
        for i in 0..n {
            xw.row_mut(i).scale_mut(sw[i]);
        }
        let zw = z.component_mul(&sw);
        let ls = least_squares(&xw, &zw, names)?;

        let mut candidate = ls.beta;
        let mut new_eta = x * &candidate;
        let mut new_mu = new_eta.map(f64::exp);
        let mut dev = deviance(&y, &new_mu);
        let mut halvings = 0;
        while !dev.is_finite() && iter > 1 && halvings < MAX_HALVINGS {
            candidate = (&candidate + &beta) * 0.5;
            new_eta = x * &candidate;
            new_mu = new_eta.map(f64::exp);
            dev = deviance(&y, &new_mu);
            halvings += 1;
        }
        if !dev.is_finite() {
            trace.push(dev);
            return Err(Error::Convergence {
                iterations: iter,
                deviance_trace: trace,
            });
        }
        let step = (&candidate - &beta).amax() / (candidate.amax() + 0.1);
        beta = candidate;
        eta = new_eta;
        mu = new_mu;
        trace.push(dev);
        // Deviance change is quadratic in the coefficient error, so the
        // step size is checked as well.
        if (dev - dev_old).abs() / (dev.abs() + 0.1) < control.tolerance && step < control.tolerance {
            converged = true;
            break;
        }
        dev_old = dev;
    }
    if !converged {
        return Err(Error::Convergence {
            iterations,
            deviance_trace: trace,
        });
    }

    // Covariance from the weighted design at the final μ.
    let sw = working_weights(&mu).map(f64::sqrt);
    let mut xw = x.clone();
    for i in 0..n {
        xw.row_mut(i).scale_mut(sw[i]);
    }
    let ls = least_squares(&xw, &DVector::zeros(n), names)?;

    let df = n - p;
    let dev = deviance(&y, &mu);
    let pearson: f64 = (0..n).map(|i| ((y[i] - mu[i]) / mu[i]).powi(2)).sum::<f64>() / df as f64;
    // Relative residuals (y − μ)/μ are scale free, so √φ̂ is compared directly.
    let degenerate = pearson.sqrt() <= DEGENERATE_TOL;

    let (phi, cov, residuals_std, loglik) = if degenerate {
        (0.0, nalgebra::DMatrix::zeros(p, p), DVector::zeros(n), f64::INFINITY)
    } else {
        let rd = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let d = unit_deviance(y[i], mu[i]).max(0.0).sqrt();
                if y[i] >= mu[i] {
                    d
                } else {
                    -d
                }
            }),
        );
        // Likelihood at shape 1/φ with φ = D/n, the usual GLM convention.
        let phi_ml = dev / n as f64;
        let shape = 1.0 / phi_ml;
        let loglik: f64 = (0..n)
            .map(|i| {
                let scale = mu[i] * phi_ml;
                -ln_gamma(shape) - shape * scale.ln() + (shape - 1.0) * y[i].ln() - y[i] / scale
            })
            .sum();
        (pearson, ls.scaled_cov(pearson), rd / pearson.sqrt(), loglik)
    };

    Ok(FittedModel {
        spec: spec.with_family(Family::Gamma),
        residuals_raw: &y - &mu,
        linear_predictor: eta,
        fitted: mu,
        residuals_std,
        beta,
        cov_beta: cov,
        sigma_or_dispersion: phi,
        df_residual: df,
        loglik,
        aic: aic(loglik, p + 1),
        iterations,
        degenerate,
        design,
        response: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::tests::{intercept_design, raw_design};
    use crate::stats::fit_irls;

    fn spec0() -> ModelSpec {
        ModelSpec::intercept_only("y", Family::Gamma).unwrap()
    }

    /// Newton iteration on the one-parameter Gamma score
    /// Σ (y/μ − 1) = 0 with μ = exp(b); independent of the IRLS path.
    fn newton_intercept(y: &[f64]) -> f64 {
        let mut b = 0.0f64;
        for _ in 0..200 {
            let score: f64 = y.iter().map(|v| v * (-b).exp() - 1.0).sum();
            let hess: f64 = y.iter().map(|v| -v * (-b).exp()).sum();
            b -= score / hess;
        }
        b
    }

    #[test]
    fn intercept_matches_newton_oracle() {
        let y = [1.0, 2.0, 4.0];
        let b = newton_intercept(&y);
        assert!((b.exp() - 7.0 / 3.0).abs() < 1e-13);
        let m = fit_irls(
            &spec0(),
            intercept_design(3),
            DVector::from_column_slice(&y),
            Family::Gamma,
            &FitControl::default(),
        )
        .unwrap();
        assert!((m.beta[0] - b).abs() < 1e-10);
    }

    #[test]
    fn slope_recovered_on_noise_free_log_linear_data() {
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| (0.3 + 0.7 * v).exp()).collect();
        let spec = ModelSpec::new("y", [crate::formula::Term::main("x1")], Family::Gamma).unwrap();
        let m = fit_irls(&spec, raw_design(&[&x]), DVector::from_column_slice(&y), Family::Gamma, &FitControl::default())
            .unwrap();
        assert!((m.beta[0] - 0.3).abs() < 1e-8);
        assert!((m.beta[1] - 0.7).abs() < 1e-8);
        assert!(m.degenerate);
    }

    #[test]
    fn dispersion_and_deviance_residuals() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [1.1, 1.9, 3.4, 4.2, 8.8, 10.5, 21.0];
        let spec = ModelSpec::new("y", [crate::formula::Term::main("x1")], Family::Gamma).unwrap();
        let m = fit_irls(&spec, raw_design(&[&x]), DVector::from_column_slice(&y), Family::Gamma, &FitControl::default())
            .unwrap();
        let mu = &m.fitted;
        let pearson: f64 = (0..7).map(|i| ((y[i] - mu[i]) / mu[i]).powi(2)).sum::<f64>() / 5.0;
        assert!((m.sigma_or_dispersion - pearson).abs() < 1e-14);
        // score equations at the optimum: Xᵀ (y − μ)/μ = 0
        let s0: f64 = (0..7).map(|i| (y[i] - mu[i]) / mu[i]).sum();
        let s1: f64 = (0..7).map(|i| x[i] * (y[i] - mu[i]) / mu[i]).sum();
        assert!(s0.abs() < 1e-9 && s1.abs() < 1e-9, "{s0} {s1}");
        let dev: f64 = (0..7).map(|i| m.residuals_std[i].powi(2) * pearson).sum();
        assert!((dev - deviance(&DVector::from_column_slice(&y), mu)).abs() < 1e-10);
    }

    #[test]
    fn iteration_limit_reports_trace() {
        let y = DVector::from_column_slice(&[1.0, 5.0, 2.0, 9.0]);
        let control = FitControl {
            max_iterations: 1,
            ..FitControl::default()
        };
        match fit_irls(&spec0(), intercept_design(4), y, Family::Gamma, &control) {
            Err(Error::Convergence { iterations, deviance_trace }) => {
                assert_eq!(iterations, 1);
                assert_eq!(deviance_trace.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
