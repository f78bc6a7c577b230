use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use nlstat_core::data::{Column, Dataset};
use nlstat_core::formula::{parse_formula, Family, ModelSpec, Term};
use nlstat_core::hops::draw_coefficients;
use nlstat_core::inference::{bonferroni, pairwise_contrasts};
use nlstat_core::stats::special::t_cdf;
use nlstat_core::stats::{fit, skewness, FitControl, FittedModel};

/// Rows of (x1, x2, y) with enough spread for a full-rank design.
fn regression_rows() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -50.0..50.0f64), 8..40)
}

fn regression_data(rows: &[(f64, f64, f64)]) -> Dataset {
    Dataset::new(
        vec![
            Column::continuous("x1", rows.iter().map(|r| Some(r.0)).collect()),
            Column::continuous("x2", rows.iter().map(|r| Some(r.1)).collect()),
            Column::continuous("y", rows.iter().map(|r| Some(r.2)).collect()),
        ],
        "p.csv",
    )
    .unwrap()
}

fn spec() -> ModelSpec {
    ModelSpec::new("y", [Term::main("x1"), Term::main("x2")], Family::Gaussian).unwrap()
}

fn try_fit(rows: &[(f64, f64, f64)]) -> Option<FittedModel> {
    fit(&spec(), &regression_data(rows), &FitControl::default()).ok()
}

/// 3×3 normal equations solved by Cramer's rule.
fn normal_equation_beta(rows: &[(f64, f64, f64)]) -> [f64; 3] {
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for &(x1, x2, y) in rows {
        let x = [1.0, x1, x2];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += x[i] * x[j];
            }
            b[i] += x[i] * y;
        }
    }
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *o = det(m) / d;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ols_matches_normal_equations(rows in regression_rows()) {
        if let Some(m) = try_fit(&rows) {
            let cond = m.cov_beta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assume!(cond.is_finite() && cond < 1e6);
            let oracle = normal_equation_beta(&rows);
            let scale = oracle.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for (j, o) in oracle.iter().enumerate() {
                prop_assert!((m.beta[j] - o).abs() <= 1e-7 * scale, "{j}: {} vs {o}", m.beta[j]);
            }
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_design(rows in regression_rows()) {
        if let Some(m) = try_fit(&rows) {
            let y_norm = m.response.norm();
            let xtr = m.design.matrix.transpose() * &m.residuals_raw;
            prop_assert!(xtr.amax() <= 1e-8 * y_norm.max(1.0), "{}", xtr.amax());
        }
    }

    #[test]
    fn row_order_does_not_change_the_fit(rows in regression_rows(), rotate in 1usize..7) {
        let mut shuffled = rows.clone();
        shuffled.rotate_left(rotate % rows.len());
        shuffled.reverse();
        if let (Some(a), Some(b)) = (try_fit(&rows), try_fit(&shuffled)) {
            let scale = a.beta.amax().max(1.0);
            prop_assert!((&a.beta - &b.beta).amax() <= 1e-8 * scale);
            prop_assert!((a.sigma_or_dispersion - b.sigma_or_dispersion).abs() <= 1e-8 * a.sigma_or_dispersion.max(1.0));
        }
    }

    #[test]
    fn coefficient_covariance_is_psd(rows in regression_rows()) {
        if let Some(m) = try_fit(&rows) {
            let c = &m.cov_beta;
            prop_assert!((c - c.transpose()).amax() <= 1e-12 * c.amax().max(1e-300));
            let eig = SymmetricEigen::new(c.clone());
            let tol = 1e-10 * c.amax();
            prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -tol), "{:?}", eig.eigenvalues);
        }
    }

    #[test]
    fn contrasts_are_antisymmetric(
        values in prop::collection::vec(0.0..100.0f64, 12..36),
        k in 2usize..5,
    ) {
        let labels: Vec<Option<String>> = (0..values.len()).map(|i| Some(format!("L{}", i % k))).collect();
        let ds = Dataset::new(
            vec![Column::categorical("g", &labels), Column::continuous("y", values.iter().map(|v| Some(v + 0.5)).collect())],
            "c.csv",
        ).unwrap();
        let m = fit(&parse_formula("y ~ g").unwrap(), &ds, &FitControl::default()).unwrap();
        let t = pairwise_contrasts(&m, "g").unwrap();
        prop_assert_eq!(t.rows.len(), k * (k - 1) / 2);
        for r in &t.rows {
            let back = t.find(&r.second, &r.first).unwrap();
            prop_assert_eq!(back.estimate, -r.estimate);
            prop_assert_eq!(back.se, r.se);
            prop_assert_eq!(back.p_raw, r.p_raw);
        }
    }

    #[test]
    fn bonferroni_bounds(p in prop::collection::vec(0.0..=1.0f64, 1..20)) {
        let adj = bonferroni(&p);
        let m = p.len() as f64;
        for (raw, a) in p.iter().zip(&adj) {
            prop_assert_eq!(*a, (m * raw).min(1.0));
            prop_assert!(*a >= *raw && *a <= 1.0);
        }
    }

    #[test]
    fn t_cdf_is_monotone_and_symmetric(a in -30.0..30.0f64, d in 0.0..5.0f64, df in 0.5..200.0f64) {
        let lo = t_cdf(a, df).unwrap();
        let hi = t_cdf(a + d, df).unwrap();
        prop_assert!(lo <= hi + 1e-15);
        prop_assert!((t_cdf(-a, df).unwrap() + lo - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn skewness_flips_with_sign(values in prop::collection::vec(-100.0..100.0f64, 3..50)) {
        let neg: Vec<f64> = values.iter().map(|v| -v).collect();
        match (skewness(&values), skewness(&neg)) {
            (Some(a), Some(b)) => prop_assert!((a + b).abs() <= 1e-9 * a.abs().max(1.0)),
            (None, None) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn hops_draws_depend_only_on_seed(rows in regression_rows(), seed in any::<u64>()) {
        if let Some(m) = try_fit(&rows) {
            let a = draw_coefficients(&m, 5, seed).unwrap();
            let b = draw_coefficients(&m, 5, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
