//! Coefficient tests, marginal-mean contrasts and slope comparisons.
//!
//! All estimates are on the linear-predictor scale of the fitted model.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::formula::{print_formula, Term};
use crate::stats::special::{f_sf, t_quantile, t_two_sided_p};
use crate::stats::{fit, Encoding, FitControl, FittedModel, Setting};

/// Confidence level used for slope intervals.
pub const CONFIDENCE_LEVEL: f64 = 0.95;

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// t statistic and two-sided p-value. A zero standard error yields no
/// statistic and p = 0.
fn t_test(estimate: f64, se: f64, df: f64) -> Result<(Option<f64>, f64)> {
    if se == 0.0 {
        return Ok((None, 0.0));
    }
    let t = estimate / se;
    Ok((Some(t), t_two_sided_p(t, df)?))
}

fn linear_se(c: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    (c.transpose() * cov * c)[(0, 0)].max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t_stat: Option<f64>,
    pub p_value: f64,
}

pub fn coefficient_tests(model: &FittedModel) -> Result<Vec<CoefficientRow>> {
    let se = model.std_errors();
    let df = model.df_residual as f64;
    model
        .design
        .column_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (t_stat, p_value) = t_test(model.beta[j], se[j], df)?;
            Ok(CoefficientRow {
                name: name.clone(),
                estimate: model.beta[j],
                se: se[j],
                t_stat,
                p_value,
            })
        })
        .collect()
}

/// JSON summary of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub formula: String,
    pub response: String,
    pub family: crate::formula::Family,
    pub link: &'static str,
    pub coefficients: Vec<CoefficientRow>,
    pub n_used: usize,
    pub df_residual: usize,
    pub sigma_or_dispersion: f64,
    /// `None` when the likelihood is unbounded (exact fit).
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub iterations: usize,
    pub degenerate: bool,
    pub reference_levels: BTreeMap<String, String>,
}

impl ModelSummary {
    pub fn new(model: &FittedModel) -> Result<Self> {
        Ok(ModelSummary {
            formula: print_formula(&model.spec),
            response: model.spec.response().to_string(),
            family: model.family(),
            link: model.family().link_name(),
            coefficients: coefficient_tests(model)?,
            n_used: model.n_used(),
            df_residual: model.df_residual,
            sigma_or_dispersion: model.sigma_or_dispersion,
            loglik: finite(model.loglik),
            aic: finite(model.aic),
            iterations: model.iterations,
            degenerate: model.degenerate,
            reference_levels: model.design.reference_levels.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    None,
    Bonferroni,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalMean {
    pub level: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastRow {
    /// "first - second".
    pub label: String,
    pub first: String,
    pub second: String,
    pub estimate: f64,
    pub se: f64,
    pub t_stat: Option<f64>,
    pub df: f64,
    pub p_raw: f64,
    pub p_adj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastTable {
    pub group: String,
    pub response: String,
    pub marginal_means: Vec<MarginalMean>,
    pub rows: Vec<ContrastRow>,
    pub adjustment: Adjustment,
    pub context_note: String,
}

impl ContrastTable {
    /// The contrast `a - b`, negating the stored row when it is `b - a`.
    pub fn find(&self, a: &str, b: &str) -> Option<ContrastRow> {
        self.rows.iter().find_map(|r| {
            if r.first == a && r.second == b {
                Some(r.clone())
            } else if r.first == b && r.second == a {
                Some(ContrastRow {
                    label: format!("{a} - {b}"),
                    first: a.to_string(),
                    second: b.to_string(),
                    estimate: -r.estimate,
                    t_stat: r.t_stat.map(|t| -t),
                    ..r.clone()
                })
            } else {
                None
            }
        })
    }
}

/// Bonferroni-adjusted p-values: min(1, m·p).
pub fn bonferroni(p_raw: &[f64]) -> Vec<f64> {
    let m = p_raw.len() as f64;
    p_raw.iter().map(|p| (m * p).min(1.0)).collect()
}

fn describe_settings(model: &FittedModel, skip: &[&str]) -> String {
    let parts: Vec<String> = model
        .design
        .encodings
        .iter()
        .filter(|(name, _)| !skip.contains(&name.as_str()))
        .map(|(name, enc)| match enc {
            Encoding::Continuous { mean, .. } => format!("{name} at its mean {mean:.4}"),
            Encoding::Categorical { levels } => {
                format!("{name} averaged over {} levels with equal weight", levels.len())
            }
        })
        .collect();
    if parts.is_empty() {
        "no other covariates".to_string()
    } else {
        parts.join("; ")
    }
}

fn categorical_levels<'a>(model: &'a FittedModel, group: &str) -> Result<&'a [String]> {
    match model.design.encodings.get(group) {
        None => Err(Error::NotInModel(group.to_string())),
        Some(Encoding::Continuous { .. }) => Err(Error::Kind(format!(
            "'{group}' is continuous; pairwise contrasts need a categorical variable"
        ))),
        Some(Encoding::Categorical { levels }) => Ok(levels),
    }
}

/// All pairwise differences of marginal means of `group`, Bonferroni adjusted.
pub fn pairwise_contrasts(model: &FittedModel, group: &str) -> Result<ContrastTable> {
    if !model.spec.has_main(group) {
        return Err(Error::NotInModel(group.to_string()));
    }
    let levels = categorical_levels(model, group)?;
    let mut settings = model.design.reference_settings();
    let rows: Vec<DVector<f64>> = (0..levels.len())
        .map(|i| {
            settings.insert(group.to_string(), Setting::Level(i));
            model.design.encode(&settings)
        })
        .collect::<Result<_>>()?;
    let cov = &model.cov_beta;
    let marginal_means = levels
        .iter()
        .zip(&rows)
        .map(|(level, c)| MarginalMean {
            level: level.clone(),
            estimate: c.dot(&model.beta),
            se: linear_se(c, cov),
        })
        .collect();

    let df = model.df_residual as f64;
    let mut out = Vec::new();
    for i in 0..levels.len() {
        for j in i + 1..levels.len() {
            let c = &rows[i] - &rows[j];
            let estimate = c.dot(&model.beta);
            let se = linear_se(&c, cov);
            let (t_stat, p_raw) = t_test(estimate, se, df)?;
            out.push(ContrastRow {
                label: format!("{} - {}", levels[i], levels[j]),
                first: levels[i].clone(),
                second: levels[j].clone(),
                estimate,
                se,
                t_stat,
                df,
                p_raw,
                p_adj: p_raw,
            });
        }
    }
    let adjusted = bonferroni(&out.iter().map(|r| r.p_raw).collect::<Vec<_>>());
    for (row, p) in out.iter_mut().zip(adjusted) {
        row.p_adj = p;
    }
    Ok(ContrastTable {
        group: group.to_string(),
        response: model.spec.response().to_string(),
        marginal_means,
        rows: out,
        adjustment: Adjustment::Bonferroni,
        context_note: format!(
            "Marginal means on the {} link scale with {}. Bonferroni adjustment over all pairs.",
            model.family().link_name(),
            describe_settings(model, &[group])
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSlope {
    pub level: String,
    pub slope: f64,
    pub se: f64,
    pub t_stat: Option<f64>,
    pub df: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    T,
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionTest {
    pub kind: StatisticKind,
    /// `None` when the interaction covariance is zero (exact fit).
    pub statistic: Option<f64>,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeComparison {
    pub response: String,
    pub slope_var: String,
    pub group: String,
    pub formula: String,
    /// True when the interaction term was added to the model for this test.
    pub refitted: bool,
    pub slopes: Vec<GroupSlope>,
    pub interaction_test: InteractionTest,
    pub confidence_level: f64,
    pub context_note: String,
}

#[derive(Debug, Clone)]
pub struct SlopeOutcome {
    pub comparison: SlopeComparison,
    /// The model the comparison was computed on, when it differs from the
    /// input model.
    pub refit: Option<FittedModel>,
}

/// Compares the slope of `slope_var` across the levels of `group`, adding
/// the `slope_var:group` interaction and refitting when it is absent.
pub fn slope_by_group(
    model: &FittedModel,
    dataset: &Dataset,
    slope_var: &str,
    group: &str,
    control: &FitControl,
) -> Result<SlopeOutcome> {
    if dataset.column(slope_var)?.kind() != ColumnKind::Continuous {
        return Err(Error::Kind(format!("'{slope_var}' must be continuous to have a slope")));
    }
    if dataset.column(group)?.kind() != ColumnKind::Categorical {
        return Err(Error::Kind(format!("'{group}' must be categorical to define groups")));
    }
    let term = Term::new([slope_var, group])?;
    let refit = if model.spec.has_term(&term) {
        None
    } else {
        Some(fit(&model.spec.with_term(term.clone())?, dataset, control)?)
    };
    let m = refit.as_ref().unwrap_or(model);
    let comparison = compare_slopes(m, slope_var, group, &term, refit.is_some())?;
    Ok(SlopeOutcome { comparison, refit })
}

fn compare_slopes(
    m: &FittedModel,
    slope_var: &str,
    group: &str,
    term: &Term,
    refitted: bool,
) -> Result<SlopeComparison> {
    let levels = categorical_levels(m, group)?;
    let mean = match m.design.encodings.get(slope_var) {
        Some(Encoding::Continuous { mean, .. }) => *mean,
        _ => return Err(Error::NotInModel(slope_var.to_string())),
    };
    let df = m.df_residual as f64;
    let t_crit = t_quantile(0.5 + CONFIDENCE_LEVEL / 2.0, df)?;
    let mut settings = m.design.reference_settings();
    let mut slopes = Vec::with_capacity(levels.len());
    for (i, level) in levels.iter().enumerate() {
        settings.insert(group.to_string(), Setting::Level(i));
        settings.insert(slope_var.to_string(), Setting::Value(mean + 1.0));
        let upper = m.design.encode(&settings)?;
        settings.insert(slope_var.to_string(), Setting::Value(mean));
        let c = upper - m.design.encode(&settings)?;
        let slope = c.dot(&m.beta);
        let se = linear_se(&c, &m.cov_beta);
        let (t_stat, p_value) = t_test(slope, se, df)?;
        slopes.push(GroupSlope {
            level: level.clone(),
            slope,
            se,
            t_stat,
            df,
            p_value,
            ci_lower: slope - t_crit * se,
            ci_upper: slope + t_crit * se,
        });
    }

    let span = m
        .design
        .span(term)
        .ok_or_else(|| Error::NotInModel(term.label()))?;
    let q = span.len();
    let b = m.beta.rows(span.start, q).into_owned();
    let v = m.cov_beta.view((span.start, span.start), (q, q)).into_owned();
    let interaction_test = if q == 1 {
        let (statistic, p_value) = t_test(b[0], v[(0, 0)].max(0.0).sqrt(), df)?;
        InteractionTest { kind: StatisticKind::T, statistic, df1: 1.0, df2: df, p_value }
    } else {
        // Wald F; for Gaussian fits this equals the nested-model F test.
        match v.clone().cholesky() {
            Some(ch) => {
                let f = b.dot(&ch.solve(&b)) / q as f64;
                InteractionTest { kind: StatisticKind::F, statistic: Some(f), df1: q as f64, df2: df, p_value: f_sf(f, q as f64, df)? }
            }
            None if v.iter().all(|x| *x == 0.0) => {
                InteractionTest { kind: StatisticKind::F, statistic: None, df1: q as f64, df2: df, p_value: 0.0 }
            }
            None => {
                return Err(Error::Covariance(format!(
                    "covariance of the {} columns is not positive definite",
                    term.label()
                )))
            }
        }
    };

    Ok(SlopeComparison {
        response: m.spec.response().to_string(),
        slope_var: slope_var.to_string(),
        group: group.to_string(),
        formula: print_formula(&m.spec),
        refitted,
        slopes,
        interaction_test,
        confidence_level: CONFIDENCE_LEVEL,
        context_note: format!(
            "Slopes of {slope_var} per {group} level on the {} link scale with {}.",
            m.family().link_name(),
            describe_settings(m, &[group, slope_var])
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv, Column, LoadOptions};
    use crate::formula::parse_formula;

    fn load(text: &str) -> Dataset {
        load_csv(text.as_bytes(), &LoadOptions::default()).unwrap()
    }

    fn fit_text(formula: &str, ds: &Dataset) -> FittedModel {
        fit(&parse_formula(formula).unwrap(), ds, &FitControl::default()).unwrap()
    }

    #[test]
    fn coefficient_t_matches_hand_computation() {
        // x=[0,1,2], y=[1,2,4]: σ² = 1/6, (XᵀX)⁻¹₁₁ = 1/2, β₁ = 3/2 ⇒ t = 1.5/√(1/12)
        let ds = Dataset::new(
            vec![
                Column::continuous("y", vec![Some(1.0), Some(2.0), Some(4.0)]),
                Column::continuous("x", vec![Some(0.0), Some(1.0), Some(2.0)]),
            ],
            "t",
        )
        .unwrap();
        let rows = coefficient_tests(&fit_text("y ~ x", &ds)).unwrap();
        let t = rows[1].t_stat.unwrap();
        assert!((t - 1.5 / (1.0f64 / 12.0).sqrt()).abs() < 1e-12);
        // df=1: p = 1 − 2·atan(|t|)/π
        let p = 1.0 - 2.0 * t.abs().atan() / std::f64::consts::PI;
        assert!((rows[1].p_value - p).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_reports_zero_p() {
        let ds = load("y,x\n2.5,1.25\n4.5,2.25\n6.5,3.25\n8.5,4.25\n");
        let exact = fit_text("y ~ x", &ds);
        assert!(exact.degenerate);
        for row in coefficient_tests(&exact).unwrap() {
            assert_eq!(row.p_value, 0.0);
            assert_eq!(row.t_stat, None);
        }
    }

    #[test]
    fn zero_estimate_has_p_one() {
        // symmetric data around x̄ gives a slope of exactly zero
        let ds = load("y,x\n1.5,-1.5\n2.5,0.5\n1.5,2.5\n");
        let rows = coefficient_tests(&fit_text("y ~ x", &ds)).unwrap();
        assert!(rows[1].estimate.abs() < 1e-15);
        assert!((rows[1].p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_one_way_matches_pooled_t() {
        let ds = load("y,g\n1,A\n2,A\n3,A\n4,B\n5,B\n6,B\n");
        let table = pairwise_contrasts(&fit_text("y ~ g", &ds), "g").unwrap();
        assert_eq!(table.rows.len(), 1);
        let ba = table.find("B", "A").unwrap();
        assert!((ba.estimate - 3.0).abs() < 1e-12);
        assert!((ba.se - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((ba.t_stat.unwrap() - 3.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(ba.df, 4.0);
        assert_eq!(ba.p_adj, ba.p_raw);
        let ab = table.find("A", "B").unwrap();
        assert_eq!(ab.estimate, -ba.estimate);
        assert_eq!(ab.p_raw, ba.p_raw);
        assert!((table.marginal_means[0].estimate - 2.0).abs() < 1e-12);
        assert!((table.marginal_means[1].estimate - 5.0).abs() < 1e-12);
    }

    #[test]
    fn equal_means_give_zero_contrasts() {
        let ds = load("y,g\n1.5,a\n2.5,a\n1.5,b\n2.5,b\n1.5,c\n2.5,c\n");
        let table = pairwise_contrasts(&fit_text("y ~ g", &ds), "g").unwrap();
        assert_eq!(table.rows.len(), 3);
        for r in &table.rows {
            assert!(r.estimate.abs() < 1e-12);
            assert!((r.p_raw - 1.0).abs() < 1e-9);
            assert_eq!(r.p_adj, 1.0);
        }
    }

    #[test]
    fn contrast_errors() {
        let ds = load("y,g,x\n1.5,a,0.1\n2.5,a,0.7\n1.5,b,1.3\n2.5,b,2.2\n4.5,c,0.4\n");
        let m = fit_text("y ~ x", &ds);
        assert_eq!(pairwise_contrasts(&m, "g").unwrap_err(), Error::NotInModel("g".into()));
        let m = fit_text("y ~ x + g", &ds);
        assert!(matches!(pairwise_contrasts(&m, "x"), Err(Error::Kind(_))));
    }

    #[test]
    fn bonferroni_caps_at_one() {
        assert_eq!(bonferroni(&[0.01, 0.2, 0.5]), vec![0.03, 0.6000000000000001, 1.0]);
    }

    #[test]
    fn identical_slopes_noise_free() {
        let mut text = String::from("y,x,g\n");
        for (i, x) in [0.5, 1.0, 2.0, 3.5, 4.0].iter().enumerate() {
            text += &format!("{},{x},a\n", 1.0 + 2.0 * x);
            text += &format!("{},{},b\n", 3.0 + 2.0 * (x + 0.25 * i as f64), x + 0.25 * i as f64);
        }
        let ds = load(&text);
        let out = slope_by_group(&fit_text("y ~ x", &ds), &ds, "x", "g", &FitControl::default()).unwrap();
        let c = out.comparison;
        assert!(c.refitted);
        assert_eq!(c.formula, "y ~ g + x + g:x");
        assert!((c.slopes[0].slope - 2.0).abs() < 1e-10);
        assert!((c.slopes[1].slope - 2.0).abs() < 1e-10);
        let m = out.refit.unwrap();
        let j = m.design.column_names.iter().position(|n| n == "g=b:x").unwrap();
        assert!(m.beta[j].abs() < 1e-10);
    }

    #[test]
    fn single_column_interaction_f_equals_t_squared() {
        let ds = load(
            "y,x,g\n1.2,0.5,a\n2.9,1.0,a\n5.1,2.0,a\n7.7,3.0,a\n3.3,0.5,b\n3.1,1.0,b\n4.0,2.0,b\n3.8,3.0,b\n",
        );
        let m = fit_text("y ~ x * g", &ds);
        let c = slope_by_group(&m, &ds, "x", "g", &FitControl::default()).unwrap();
        assert!(c.refit.is_none());
        let it = c.comparison.interaction_test;
        assert_eq!(it.kind, StatisticKind::T);
        let t = it.statistic.unwrap();
        let p_f = f_sf(t * t, 1.0, it.df2).unwrap();
        assert!((p_f - it.p_value).abs() < 1e-10);
        // per-group slopes are β_x and β_x + β_{g=b:x}
        let jx = m.design.column_names.iter().position(|n| n == "x").unwrap();
        let jint = m.design.column_names.iter().position(|n| n == "g=b:x").unwrap();
        assert!((c.comparison.slopes[0].slope - m.beta[jx]).abs() < 1e-10);
        assert!((c.comparison.slopes[1].slope - m.beta[jx] - m.beta[jint]).abs() < 1e-10);
        assert!((t - m.beta[jint] / m.cov_beta[(jint, jint)].sqrt()).abs() < 1e-10);
    }

    #[test]
    fn slope_kind_checks() {
        let ds = load("y,x,g\n1.2,0.5,a\n2.9,1.0,a\n5.1,2.0,b\n7.7,3.0,b\n3.3,0.7,c\n");
        let m = fit_text("y ~ x", &ds);
        assert!(matches!(slope_by_group(&m, &ds, "g", "x", &FitControl::default()), Err(Error::Kind(_))));
    }
}
