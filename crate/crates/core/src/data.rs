//! Delimited-text ingestion and the typed, row-indexed [`Dataset`].
//!
//! Every cell is trimmed. The markers `""`, `NA` and `null` (any case) are
//! missing. A column is continuous when every non-missing cell is a finite
//! number, unless it holds at most [`CATEGORICAL_MAX_LEVELS`] distinct
//! integer values, in which case it is treated as a grouping variable.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric columns with at most this many distinct integer values are
/// categorical.
pub const CATEGORICAL_MAX_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    Continuous(Vec<Option<f64>>),
    /// `codes[i]` indexes into `levels`; levels are sorted lexicographically.
    Categorical {
        codes: Vec<Option<usize>>,
        levels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    values: ColumnValues,
}

impl Column {
    pub fn continuous(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column {
            name: name.into(),
            values: ColumnValues::Continuous(values),
        }
    }

    /// Builds a categorical column from labels; levels are derived and sorted.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, labels: &[Option<S>]) -> Self {
        let levels: Vec<String> = labels
            .iter()
            .flatten()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = labels
            .iter()
            .map(|l| {
                l.as_ref()
                    .map(|s| levels.binary_search_by(|x| x.as_str().cmp(s.as_ref())).unwrap())
            })
            .collect();
        Column {
            name: name.into(),
            values: ColumnValues::Categorical { codes, levels },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        match self.values {
            ColumnValues::Continuous(_) => ColumnKind::Continuous,
            ColumnValues::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn values(&self) -> &ColumnValues {
        &self.values
    }

    pub fn len(&self) -> usize {
        match &self.values {
            ColumnValues::Continuous(v) => v.len(),
            ColumnValues::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorted distinct labels; empty for continuous columns.
    pub fn levels(&self) -> &[String] {
        match &self.values {
            ColumnValues::Continuous(_) => &[],
            ColumnValues::Categorical { levels, .. } => levels,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.values {
            ColumnValues::Continuous(v) => v[row].is_none(),
            ColumnValues::Categorical { codes, .. } => codes[row].is_none(),
        }
    }

    pub fn number(&self, row: usize) -> Option<f64> {
        match &self.values {
            ColumnValues::Continuous(v) => v[row],
            ColumnValues::Categorical { .. } => None,
        }
    }

    pub fn level_code(&self, row: usize) -> Option<usize> {
        match &self.values {
            ColumnValues::Continuous(_) => None,
            ColumnValues::Categorical { codes, .. } => codes[row],
        }
    }

    pub fn label(&self, row: usize) -> Option<&str> {
        match &self.values {
            ColumnValues::Continuous(_) => None,
            ColumnValues::Categorical { codes, levels } => codes[row].map(|c| levels[c].as_str()),
        }
    }

    fn cell_text(&self, row: usize) -> String {
        match &self.values {
            ColumnValues::Continuous(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            ColumnValues::Categorical { codes, levels } => {
                codes[row].map(|c| levels[c].clone()).unwrap_or_default()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Per-column kind overrides; these win over inference.
    pub overrides: BTreeMap<String, ColumnKind>,
    pub source_name: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            has_header: true,
            overrides: BTreeMap::new(),
            source_name: "data.csv".to_string(),
        }
    }
}

/// Immutable, typed table. Row indices are stable for the life of the value.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
    source_name: String,
}

/// Name and kind of one column, plus its levels when categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, source_name: impl Into<String>) -> Result<Self> {
        let n_rows = columns.first().map(Column::len).unwrap_or(0);
        if n_rows == 0 {
            return Err(Error::EmptyData);
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column '{}' has {} values, expected {n_rows}",
                    c.name,
                    c.len()
                )));
            }
            if !seen.insert(c.name.trim().to_string()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
            }
        }
        Ok(Dataset {
            columns,
            n_rows,
            source_name: source_name.into(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.get(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn schema(&self) -> Vec<ColumnSummary> {
        self.columns
            .iter()
            .map(|c| ColumnSummary {
                name: c.name.clone(),
                kind: c.kind(),
                levels: c.levels().to_vec(),
            })
            .collect()
    }

    /// Writes the dataset back as delimited text with a header row.
    pub fn to_csv(&self, delimiter: u8) -> String {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory write");
        for row in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|c| c.cell_text(row)))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

pub fn is_missing_marker(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("null")
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Decides a column's kind from its raw cells.
pub fn infer_kind<S: AsRef<str>>(raw_values: &[S]) -> Result<ColumnKind> {
    let present: Vec<&str> = raw_values
        .iter()
        .map(|s| s.as_ref().trim())
        .filter(|s| !is_missing_marker(s))
        .collect();
    if present.is_empty() {
        return Err(Error::AllMissing(String::new()));
    }
    let mut distinct = HashSet::new();
    let mut all_integer = true;
    for cell in &present {
        match parse_finite(cell) {
            Some(x) => {
                // fold -0.0 into 0.0
                distinct.insert((x + 0.0).to_bits());
                all_integer &= x.fract() == 0.0;
            }
            None => return Ok(ColumnKind::Categorical),
        }
    }
    if all_integer && distinct.len() <= CATEGORICAL_MAX_LEVELS {
        Ok(ColumnKind::Categorical)
    } else {
        Ok(ColumnKind::Continuous)
    }
}

/// Parses delimited text into a [`Dataset`].
pub fn load_csv(bytes: &[u8], options: &LoadOptions) -> Result<Dataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        row: 0,
        message: format!("input is not valid UTF-8: {e}"),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    // Skip blank trailing lines the reader yields as single empty fields.
    while records
        .last()
        .is_some_and(|r| r.len() == 1 && r[0].trim().is_empty())
    {
        records.pop();
    }

    let mut rows = records.iter();
    let (names, first_line): (Vec<String>, usize) = if options.has_header {
        let header = rows.next().ok_or(Error::EmptyData)?;
        (header.iter().map(|h| h.trim().to_string()).collect(), 2)
    } else {
        let width = records.first().map(|r| r.len()).ok_or(Error::EmptyData)?;
        ((1..=width).map(|i| format!("V{i}")).collect(), 1)
    };
    let mut seen = HashSet::new();
    for name in &names {
        if name.is_empty() {
            return Err(Error::Schema("empty column name in header".into()));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{name}'")));
        }
    }
    for name in options.overrides.keys() {
        if !seen.contains(name.as_str()) {
            return Err(Error::UnknownVariable(name.clone()));
        }
    }

    let width = names.len();
    let mut cells: Vec<Vec<&str>> = vec![Vec::new(); width];
    for (offset, rec) in rows.enumerate() {
        if rec.len() != width {
            return Err(Error::Parse {
                row: first_line + offset,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            cells[j].push(cell.trim());
        }
    }
    if cells.first().is_none_or(|c| c.is_empty()) {
        return Err(Error::EmptyData);
    }

    let mut columns = Vec::with_capacity(width);
    for (name, raw) in names.into_iter().zip(cells) {
        let kind = match options.overrides.get(&name) {
            Some(k) => *k,
            None => infer_kind(&raw).map_err(|e| match e {
                Error::AllMissing(_) => Error::AllMissing(name.clone()),
                other => other,
            })?,
        };
        let column = match kind {
            ColumnKind::Continuous => {
                let mut values = Vec::with_capacity(raw.len());
                for (i, cell) in raw.iter().enumerate() {
                    if is_missing_marker(cell) {
                        values.push(None);
                    } else {
                        let x = parse_finite(cell).ok_or_else(|| {
                            Error::Schema(format!(
                                "column '{name}' is declared continuous but row {} holds '{cell}'",
                                first_line + i
                            ))
                        })?;
                        values.push(Some(x));
                    }
                }
                Column::continuous(name, values)
            }
            ColumnKind::Categorical => {
                let labels: Vec<Option<&str>> = raw
                    .iter()
                    .map(|c| (!is_missing_marker(c)).then_some(*c))
                    .collect();
                Column::categorical(name, &labels)
            }
        };
        columns.push(column);
    }
    Dataset::new(columns, options.source_name.clone())
}

/// Ascending indices of rows where every listed variable is present.
pub fn complete_cases<S: AsRef<str>>(dataset: &Dataset, variables: &[S]) -> Result<Vec<usize>> {
    let cols = variables
        .iter()
        .map(|v| dataset.column(v.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..dataset.n_rows())
        .filter(|&r| cols.iter().all(|c| !c.is_missing(r)))
        .collect())
}
