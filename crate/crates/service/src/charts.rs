//! Chart-ready data for one or two variables.
//!
//! Every payload that shows individual rows carries their row indices so a
//! client can link selections across charts.

use serde::{Deserialize, Serialize};

use nlstat_core::data::{Column, ColumnKind, Dataset};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartMode {
    #[default]
    Aggregated,
    Points,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCount {
    pub level: String,
    pub count: usize,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub row: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelMean {
    pub level: String,
    /// `None` when the level has no complete rows.
    pub mean: Option<f64>,
    pub count: usize,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelPoint {
    pub row: usize,
    pub level: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "chart", rename_all = "snake_case")]
pub enum ChartPayload {
    Histogram { variable: String, bins: Vec<Bin>, missing: usize },
    Counts { variable: String, levels: Vec<LevelCount>, missing: usize },
    Scatter { x: String, y: String, points: Vec<Point> },
    Means { category: String, value: String, levels: Vec<LevelMean> },
    Strip { category: String, value: String, points: Vec<LevelPoint> },
}

/// Sturges' rule: ⌊log₂ n⌋ + 1 bins.
pub fn sturges_bins(n: usize) -> usize {
    if n == 0 {
        1
    } else {
        (usize::BITS - 1 - n.leading_zeros()) as usize + 1
    }
}

fn histogram(col: &Column, n_rows: usize) -> ChartPayload {
    let values: Vec<(usize, f64)> = (0..n_rows).filter_map(|r| col.number(r).map(|v| (r, v))).collect();
    let k = sturges_bins(values.len());
    let lo = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if values.is_empty() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / k as f64;
    let mut bins: Vec<Bin> = (0..k)
        .map(|i| Bin {
            lower: lo + width * i as f64,
            upper: if i + 1 == k { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
            rows: Vec::new(),
        })
        .collect();
    for (row, v) in &values {
        let i = (((v - lo) / width).floor() as usize).min(k - 1);
        bins[i].count += 1;
        bins[i].rows.push(*row);
    }
    ChartPayload::Histogram {
        variable: col.name().to_string(),
        bins,
        missing: n_rows - values.len(),
    }
}

fn counts(col: &Column, n_rows: usize) -> ChartPayload {
    let mut levels: Vec<LevelCount> = col
        .levels()
        .iter()
        .map(|l| LevelCount { level: l.clone(), count: 0, rows: Vec::new() })
        .collect();
    let mut missing = 0;
    for r in 0..n_rows {
        match col.level_code(r) {
            Some(i) => {
                levels[i].count += 1;
                levels[i].rows.push(r);
            }
            None => missing += 1,
        }
    }
    ChartPayload::Counts { variable: col.name().to_string(), levels, missing }
}

fn scatter(x: &Column, y: &Column, n_rows: usize) -> ChartPayload {
    let points = (0..n_rows)
        .filter_map(|r| Some(Point { row: r, x: x.number(r)?, y: y.number(r)? }))
        .collect();
    ChartPayload::Scatter { x: x.name().to_string(), y: y.name().to_string(), points }
}

fn by_level(cat: &Column, val: &Column, n_rows: usize, mode: ChartMode) -> ChartPayload {
    let pairs: Vec<(usize, usize, f64)> = (0..n_rows)
        .filter_map(|r| Some((r, cat.level_code(r)?, val.number(r)?)))
        .collect();
    let (category, value) = (cat.name().to_string(), val.name().to_string());
    match mode {
        ChartMode::Points => ChartPayload::Strip {
            category,
            value,
            points: pairs
                .iter()
                .map(|&(row, l, v)| LevelPoint { row, level: cat.levels()[l].clone(), value: v })
                .collect(),
        },
        ChartMode::Aggregated => ChartPayload::Means {
            category,
            value,
            levels: cat
                .levels()
                .iter()
                .enumerate()
                .map(|(i, level)| {
                    let members: Vec<&(usize, usize, f64)> = pairs.iter().filter(|p| p.1 == i).collect();
                    let sum: f64 = members.iter().map(|p| p.2).sum();
                    LevelMean {
                        level: level.clone(),
                        mean: (!members.is_empty()).then(|| sum / members.len() as f64),
                        count: members.len(),
                        rows: members.iter().map(|p| p.0).collect(),
                    }
                })
                .collect(),
        },
    }
}

/// Picks the chart for one or two variables by their kinds.
pub fn chart_data(dataset: &Dataset, variables: &[&str], mode: ChartMode) -> Result<ChartPayload> {
    let cols = variables
        .iter()
        .map(|v| dataset.column(v))
        .collect::<nlstat_core::Result<Vec<_>>>()?;
    let n = dataset.n_rows();
    match cols.as_slice() {
        [c] if c.kind() == ColumnKind::Continuous => Ok(histogram(c, n)),
        [c] => Ok(counts(c, n)),
        [a, b] => match (a.kind(), b.kind()) {
            (ColumnKind::Continuous, ColumnKind::Continuous) => Ok(scatter(a, b, n)),
            (ColumnKind::Categorical, ColumnKind::Continuous) => Ok(by_level(a, b, n, mode)),
            (ColumnKind::Continuous, ColumnKind::Categorical) => Ok(by_level(b, a, n, mode)),
            (ColumnKind::Categorical, ColumnKind::Categorical) => Err(ServiceError::UnsupportedChart(format!(
                "no chart is defined for two categorical variables ('{}', '{}')",
                a.name(),
                b.name()
            ))),
        },
        [] => Err(ServiceError::BadRequest("no variables given for the chart".into())),
        _ => Err(ServiceError::UnsupportedChart(format!(
            "charts take one or two variables, got {}",
            variables.len()
        ))),
    }
}
