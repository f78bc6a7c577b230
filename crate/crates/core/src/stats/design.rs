//! Treatment-coded design matrices.
//!
//! Column order is the intercept followed by each term's columns in the
//! spec's canonical term order. A categorical predictor with k observed
//! levels contributes k-1 indicator columns against its lexicographically
//! first observed level. Interaction columns are products of their parents'
//! columns.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{complete_cases, ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::formula::{validate_against, ModelSpec, Term};

/// How one predictor enters a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoding {
    Continuous { mean: f64, min: f64, max: f64 },
    /// `levels[0]` is the reference level.
    Categorical { levels: Vec<String> },
}

/// Value a predictor takes when a design row is built.
#[derive(Debug, Clone, PartialEq)]
pub enum Setting {
    Value(f64),
    /// Index into the observed levels of the predictor.
    Level(usize),
    /// Weight per observed level; averages the linear predictor over levels.
    Mixture(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub term_spans: Vec<(Term, Range<usize>)>,
    pub reference_levels: BTreeMap<String, String>,
    pub encodings: BTreeMap<String, Encoding>,
    /// Dataset rows used, ascending.
    pub rows: Vec<usize>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn span(&self, term: &Term) -> Option<Range<usize>> {
        self.term_spans
            .iter()
            .find(|(t, _)| t == term)
            .map(|(_, r)| r.clone())
    }

    /// The settings used for marginal summaries: continuous predictors at
    /// their mean, categorical predictors averaged with equal weight.
    pub fn reference_settings(&self) -> BTreeMap<String, Setting> {
        self.encodings
            .iter()
            .map(|(name, enc)| {
                let s = match enc {
                    Encoding::Continuous { mean, .. } => Setting::Value(*mean),
                    Encoding::Categorical { levels } => {
                        Setting::Mixture(vec![1.0 / levels.len() as f64; levels.len()])
                    }
                };
                (name.clone(), s)
            })
            .collect()
    }

    /// Builds one design row from per-variable settings.
    pub fn encode(&self, settings: &BTreeMap<String, Setting>) -> Result<DVector<f64>> {
        let mut row = Vec::with_capacity(self.p());
        row.push(1.0);
        for (term, _) in &self.term_spans {
            let mut cols = vec![1.0];
            for v in term.variables() {
                let parts = self.variable_columns(v, settings)?;
                cols = cols
                    .iter()
                    .flat_map(|a| parts.iter().map(move |b| a * b))
                    .collect();
            }
            row.extend(cols);
        }
        Ok(DVector::from_vec(row))
    }

    fn variable_columns(&self, variable: &str, settings: &BTreeMap<String, Setting>) -> Result<Vec<f64>> {
        let enc = self
            .encodings
            .get(variable)
            .ok_or_else(|| Error::NotInModel(variable.to_string()))?;
        let setting = settings
            .get(variable)
            .ok_or_else(|| Error::Domain(format!("no setting given for '{variable}'")))?;
        match (enc, setting) {
            (Encoding::Continuous { .. }, Setting::Value(x)) => Ok(vec![*x]),
            (Encoding::Categorical { levels }, Setting::Level(i)) if *i < levels.len() => {
                Ok((1..levels.len()).map(|j| if j == *i { 1.0 } else { 0.0 }).collect())
            }
            (Encoding::Categorical { levels }, Setting::Mixture(w)) if w.len() == levels.len() => {
                Ok(w[1..].to_vec())
            }
            _ => Err(Error::Kind(format!(
                "setting for '{variable}' does not match how it is encoded"
            ))),
        }
    }
}

fn encoding_columns(name: &str, enc: &Encoding) -> Vec<String> {
    match enc {
        Encoding::Continuous { .. } => vec![name.to_string()],
        Encoding::Categorical { levels } => levels[1..]
            .iter()
            .map(|l| format!("{name}={l}"))
            .collect(),
    }
}

/// Encodes `spec` over the complete cases of `dataset`, returning the
/// design and the response vector.
pub fn build_design(spec: &ModelSpec, dataset: &Dataset) -> Result<(DesignMatrix, DVector<f64>)> {
    validate_against(spec, dataset)?;
    let rows = complete_cases(dataset, &spec.variables())?;

    let mut encodings = BTreeMap::new();
    let mut reference_levels = BTreeMap::new();
    // dataset level code -> observed level index, per categorical
    let mut recode: BTreeMap<String, Vec<Option<usize>>> = BTreeMap::new();
    for v in spec.predictors() {
        let col = dataset.column(&v)?;
        match col.kind() {
            ColumnKind::Continuous => {
                let xs: Vec<f64> = rows.iter().filter_map(|&r| col.number(r)).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
                let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                encodings.insert(v.clone(), Encoding::Continuous { mean, min, max });
            }
            ColumnKind::Categorical => {
                let mut seen = vec![false; col.levels().len()];
                for &r in &rows {
                    if let Some(c) = col.level_code(r) {
                        seen[c] = true;
                    }
                }
                let mut map = vec![None; seen.len()];
                let mut levels = Vec::new();
                for (code, present) in seen.iter().enumerate() {
                    if *present {
                        map[code] = Some(levels.len());
                        levels.push(col.levels()[code].clone());
                    }
                }
                reference_levels.insert(v.clone(), levels[0].clone());
                encodings.insert(v.clone(), Encoding::Categorical { levels });
                recode.insert(v.clone(), map);
            }
        }
    }

    let mut column_names = vec!["(Intercept)".to_string()];
    let mut term_spans = Vec::new();
    for term in spec.terms() {
        let mut names = vec![String::new()];
        for v in term.variables() {
            let parts = encoding_columns(v, &encodings[v]);
            names = names
                .iter()
                .flat_map(|a| {
                    parts.iter().map(move |b| {
                        if a.is_empty() {
                            b.clone()
                        } else {
                            format!("{a}:{b}")
                        }
                    })
                })
                .collect();
        }
        let start = column_names.len();
        column_names.extend(names);
        term_spans.push((term.clone(), start..column_names.len()));
    }

    let p = column_names.len();
    if p >= rows.len() {
        return Err(Error::InsufficientData(format!(
            "{} usable rows for {p} coefficients",
            rows.len()
        )));
    }

    let mut design = DesignMatrix {
        matrix: DMatrix::zeros(rows.len(), p),
        column_names,
        term_spans,
        reference_levels,
        encodings,
        rows: rows.clone(),
    };

    let predictors = spec.predictors();
    let response = dataset.column(spec.response())?;
    let mut y = DVector::zeros(rows.len());
    for (i, &r) in rows.iter().enumerate() {
        let mut settings = BTreeMap::new();
        for v in &predictors {
            let col = dataset.column(v)?;
            let s = match col.kind() {
                ColumnKind::Continuous => Setting::Value(col.number(r).expect("complete case")),
                ColumnKind::Categorical => {
                    let code = col.level_code(r).expect("complete case");
                    Setting::Level(recode[v][code].expect("observed level"))
                }
            };
            settings.insert(v.clone(), s);
        }
        let x = design.encode(&settings)?;
        design.matrix.set_row(i, &x.transpose());
        y[i] = response.number(r).expect("complete case");
    }
    Ok((design, y))
}
