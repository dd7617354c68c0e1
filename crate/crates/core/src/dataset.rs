//! Columnar single-relation datasets loaded from delimited text.
//!
//! Every cell keeps its raw string form (used for grouping and for
//! round-tripping) next to an optional numeric parse (used for aggregation).
//! Nulls are `None` in both views and are never conflated with zero.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Share of non-null cells that must parse as numbers for a column to be numeric.
pub const NUMERIC_SHARE: f64 = 0.95;

const NULL_TOKENS: &[&str] = &["", "na", "n/a", "null", "nan"];
const ID_NAME_TOKENS: &[&str] = &["id", "uuid", "guid", "key", "ssn", "email", "phone", "name"];
const TEMPORAL_NAME_TOKENS: &[&str] = &["year", "date", "month", "day", "time", "timestamp"];
const DATE_FORMATS: &[&str] = &["%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y", "%d.%m.%Y", "%Y-%m"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("input contains no header and no rows")]
    Empty,
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("malformed CSV near row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("invalid type override: {0}")]
    InvalidOverride(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Numeric,
    Text,
    Temporal,
    IdentifierLike,
}

impl DataType {
    /// Text-like for grouping purposes. Temporal attributes group as text.
    pub fn is_textual(self) -> bool {
        matches!(self, DataType::Text | DataType::Temporal)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeMeta {
    pub name: String,
    pub resolved_name: String,
    pub data_type: DataType,
    pub distinct_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    raw: Vec<Option<String>>,
    numeric: Vec<Option<f64>>,
}

impl Column {
    fn from_raw(raw: Vec<Option<String>>) -> Self {
        let numeric = raw.iter().map(|c| c.as_deref().and_then(parse_number)).collect();
        Self { raw, numeric }
    }

    pub fn raw(&self) -> &[Option<String>] {
        &self.raw
    }

    pub fn numeric(&self) -> &[Option<f64>] {
        &self.numeric
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    fn distinct_count(&self) -> usize {
        self.raw.iter().flatten().collect::<HashSet<_>>().len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    attributes: Vec<AttributeMeta>,
    columns: Vec<Column>,
    row_count: usize,
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
        }
    }
}

/// One entry of the type-override sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeOverride {
    pub attribute: String,
    pub data_type: DataType,
}

/// Parses the sidecar, which is either a single override object or an array of them.
pub fn parse_type_overrides(json: &str) -> Result<Vec<TypeOverride>, DatasetError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(TypeOverride),
        Many(Vec<TypeOverride>),
    }
    match serde_json::from_str::<OneOrMany>(json) {
        Ok(OneOrMany::One(o)) => Ok(vec![o]),
        Ok(OneOrMany::Many(v)) => Ok(v),
        Err(e) => Err(DatasetError::InvalidOverride(e.to_string())),
    }
}

/// Reads RFC-4180 delimited text into a typed [`Dataset`].
pub fn load_table<R: Read>(source: R, options: &LoadOptions) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(source);

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::Csv {
            row: i,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }

    let width = records[0].len();
    let (names, body_start) = if options.has_header {
        let names: Vec<String> = records[0].iter().map(|s| s.trim().to_string()).collect();
        (names, 1)
    } else {
        (vec![String::new(); width], 0)
    };

    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); width];
    for (row, rec) in records.iter().enumerate().skip(body_start) {
        if rec.len() != width {
            return Err(DatasetError::Ragged {
                row: row - body_start,
                found: rec.len(),
                expected: width,
            });
        }
        for (col, field) in rec.iter().enumerate() {
            cells[col].push(normalize_cell(field));
        }
    }
    let row_count = records.len() - body_start;

    let names = unique_names(names);
    let columns: Vec<Column> = cells.into_iter().map(Column::from_raw).collect();
    let attributes = names
        .into_iter()
        .zip(&columns)
        .map(|(name, col)| AttributeMeta {
            resolved_name: name.clone(),
            name,
            data_type: DataType::Text,
            distinct_count: col.distinct_count(),
        })
        .collect();

    Ok(infer_attribute_types(Dataset {
        attributes,
        columns,
        row_count,
    }))
}

fn normalize_cell(field: &str) -> Option<String> {
    let trimmed = field.trim();
    if NULL_TOKENS.contains(&trimmed.to_ascii_lowercase().as_str()) {
        None
    } else {
        Some(field.to_string())
    }
}

fn unique_names(names: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    names
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let base = if n.is_empty() { format!("column_{i}") } else { n };
            let mut candidate = base.clone();
            let mut suffix = 2;
            while !seen.insert(candidate.clone()) {
                candidate = format!("{base}_{suffix}");
                suffix += 1;
            }
            candidate
        })
        .collect()
}

/// Parses a numeric cell, stripping currency symbols, thousands separators and
/// a trailing percent sign. `"(1,200)"` is read as an accounting negative.
pub fn parse_number(cell: &str) -> Option<f64> {
    let mut s = cell.trim();
    let mut negative = false;
    if s.starts_with('(') && s.ends_with(')') && s.len() > 2 {
        s = &s[1..s.len() - 1];
        negative = true;
    }
    let cleaned: String = s
        .chars()
        .filter(|c| !matches!(c, '$' | '€' | '£' | '¥' | ',' | '_' | ' ' | '%'))
        .collect();
    if cleaned.is_empty() || !cleaned.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    let v: f64 = cleaned.parse().ok()?;
    if !v.is_finite() {
        return None;
    }
    Some(if negative { -v } else { v })
}

/// Splits an attribute name into lowercase tokens on punctuation and camelCase boundaries.
pub fn name_tokens(name: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for ch in name.chars() {
        if !ch.is_alphanumeric() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if ch.is_uppercase() && prev_lower && !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        prev_lower = ch.is_lowercase() || ch.is_ascii_digit();
        current.extend(ch.to_lowercase());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn looks_like_date(cell: &str) -> bool {
    let s = cell.trim();
    let date_part = s.split(['T', ' ']).next().unwrap_or(s);
    DATE_FORMATS.iter().any(|f| {
        if *f == "%Y-%m" {
            NaiveDate::parse_from_str(&format!("{date_part}-01"), "%Y-%m-%d").is_ok() && date_part.len() == 7
        } else {
            NaiveDate::parse_from_str(date_part, f).is_ok()
        }
    })
}

fn infer_type(meta: &AttributeMeta, column: &Column, row_count: usize) -> DataType {
    let present: Vec<&str> = column.raw.iter().flatten().map(String::as_str).collect();
    if present.is_empty() {
        return DataType::Text;
    }
    let share = |n: usize| n as f64 / present.len() as f64;
    let tokens = name_tokens(&meta.name);

    if share(present.iter().filter(|c| looks_like_date(c)).count()) >= NUMERIC_SHARE {
        return DataType::Temporal;
    }
    let numeric_count = column.numeric.iter().flatten().count();
    let is_numeric = share(numeric_count) >= NUMERIC_SHARE;

    let year_named = tokens.iter().any(|t| TEMPORAL_NAME_TOKENS.contains(&t.as_str()));
    if is_numeric && year_named {
        let all_years = column
            .numeric
            .iter()
            .flatten()
            .all(|v| v.fract() == 0.0 && (1000.0..=2999.0).contains(v));
        if all_years {
            return DataType::Temporal;
        }
    }

    let id_named = tokens
        .last()
        .is_some_and(|t| ID_NAME_TOKENS.contains(&t.as_str()));
    if id_named && row_count > 0 && meta.distinct_count == row_count {
        return DataType::IdentifierLike;
    }
    if is_numeric {
        DataType::Numeric
    } else {
        DataType::Text
    }
}

/// Labels every attribute with one of the four semantic types.
pub fn infer_attribute_types(mut dataset: Dataset) -> Dataset {
    let row_count = dataset.row_count;
    for (meta, column) in dataset.attributes.iter_mut().zip(&dataset.columns) {
        meta.data_type = infer_type(meta, column, row_count);
    }
    dataset
}

impl Dataset {
    pub fn attributes(&self) -> &[AttributeMeta] {
        &self.attributes
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn index_of(&self, name: &str) -> Result<usize, DatasetError> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| DatasetError::UnknownAttribute(name.to_string()))
    }

    pub fn attribute(&self, name: &str) -> Result<&AttributeMeta, DatasetError> {
        Ok(&self.attributes[self.index_of(name)?])
    }

    pub fn column(&self, name: &str) -> Result<&Column, DatasetError> {
        Ok(&self.columns[self.index_of(name)?])
    }

    pub fn column_at(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    /// Replaces the oracle-resolved display name of an attribute.
    pub fn set_resolved_name(&mut self, index: usize, resolved: String) {
        if !resolved.trim().is_empty() {
            self.attributes[index].resolved_name = resolved;
        }
    }

    pub fn apply_type_overrides(&mut self, overrides: &[TypeOverride]) -> Result<(), DatasetError> {
        for o in overrides {
            let idx = self.index_of(&o.attribute)?;
            self.attributes[idx].data_type = o.data_type;
        }
        Ok(())
    }

    /// Serializes back to CSV with a header row; nulls become empty fields.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(self.attributes.iter().map(|a| a.name.as_str()))
            .expect("in-memory write");
        for row in 0..self.row_count {
            writer
                .write_record(self.columns.iter().map(|c| c.raw[row].as_deref().unwrap_or("")))
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush to vec")).expect("utf-8 input")
    }
}

/// Sorted, duplicate-free value combinations of `attrs` present in the data.
/// Rows with a null in any of the attributes are skipped.
pub fn distinct_header_tuples(dataset: &Dataset, attrs: &[&str]) -> Result<Vec<Vec<String>>, DatasetError> {
    let columns = attrs
        .iter()
        .map(|a| dataset.column(a))
        .collect::<Result<Vec<_>, _>>()?;
    let mut tuples = BTreeSet::new();
    'rows: for row in 0..dataset.row_count {
        let mut tuple = Vec::with_capacity(columns.len());
        for col in &columns {
            match &col.raw[row] {
                Some(v) => tuple.push(v.clone()),
                None => continue 'rows,
            }
        }
        tuples.insert(tuple);
    }
    Ok(tuples.into_iter().collect())
}
