//! Canonical pivot specifications and their materialization as grids.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataType, Dataset, DatasetError};

#[derive(Debug, Error)]
pub enum PivotError {
    #[error("aggregate attribute `{0}` cannot also be a grouping attribute")]
    AggregateInGroups(String),
    #[error("a pivot needs at least two distinct grouping attributes, got {0}")]
    Arity(usize),
    #[error("grouping attribute `{0}` listed twice")]
    DuplicateGroup(String),
    #[error("{func} requires a numeric attribute, `{attr}` is {data_type:?}")]
    NonNumeric {
        func: AggFn,
        attr: String,
        data_type: DataType,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AggFn {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFn {
    /// Canonical order of the function domain.
    pub const ALL: [AggFn; 5] = [AggFn::Count, AggFn::Sum, AggFn::Avg, AggFn::Min, AggFn::Max];

    pub fn keyword(self) -> &'static str {
        match self {
            AggFn::Count => "COUNT",
            AggFn::Sum => "SUM",
            AggFn::Avg => "AVG",
            AggFn::Min => "MIN",
            AggFn::Max => "MAX",
        }
    }

    /// Natural-language phrase used in oracle prompts, e.g. "Average".
    pub fn phrase(self) -> &'static str {
        match self {
            AggFn::Count => "Count of",
            AggFn::Sum => "Total",
            AggFn::Avg => "Average",
            AggFn::Min => "Minimum",
            AggFn::Max => "Maximum",
        }
    }

    pub fn needs_numeric(self) -> bool {
        !matches!(self, AggFn::Count)
    }

    pub fn parse(s: &str) -> Option<AggFn> {
        match s.trim().to_ascii_uppercase().as_str() {
            "COUNT" => Some(AggFn::Count),
            "SUM" | "TOTAL" => Some(AggFn::Sum),
            "AVG" | "AVERAGE" | "MEAN" => Some(AggFn::Avg),
            "MIN" | "MINIMUM" => Some(AggFn::Min),
            "MAX" | "MAXIMUM" => Some(AggFn::Max),
            _ => None,
        }
    }
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A pivot query `SELECT F(V) FROM D GROUP BY G` in canonical form.
///
/// Grouping attributes are sorted; the first `ceil(|G|/2)` form the row
/// groups and the rest the column groups. Construction goes through
/// [`canonicalize`] (or deserialization, which calls it), so two specs that
/// differ only in attribute order compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct PivotSpec {
    agg_fn: AggFn,
    agg_attr: String,
    groups: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSpec {
    #[serde(rename = "fn")]
    func: AggFn,
    attr: String,
    groups: Vec<String>,
}

impl TryFrom<RawSpec> for PivotSpec {
    type Error = PivotError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        canonicalize(raw.func, &raw.attr, &raw.groups)
    }
}

impl From<PivotSpec> for RawSpec {
    fn from(spec: PivotSpec) -> Self {
        RawSpec {
            func: spec.agg_fn,
            attr: spec.agg_attr,
            groups: spec.groups,
        }
    }
}

pub fn canonicalize<S: AsRef<str>>(
    agg_fn: AggFn,
    agg_attr: &str,
    groups: &[S],
) -> Result<PivotSpec, PivotError> {
    let mut sorted: Vec<String> = groups.iter().map(|g| g.as_ref().to_string()).collect();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(PivotError::DuplicateGroup(w[0].clone()));
    }
    if sorted.iter().any(|g| g == agg_attr) {
        return Err(PivotError::AggregateInGroups(agg_attr.to_string()));
    }
    if sorted.len() < 2 {
        return Err(PivotError::Arity(sorted.len()));
    }
    Ok(PivotSpec {
        agg_fn,
        agg_attr: agg_attr.to_string(),
        groups: sorted,
    })
}

impl PivotSpec {
    pub fn agg_fn(&self) -> AggFn {
        self.agg_fn
    }

    pub fn agg_attr(&self) -> &str {
        &self.agg_attr
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn row_groups(&self) -> &[String] {
        &self.groups[..self.groups.len().div_ceil(2)]
    }

    pub fn col_groups(&self) -> &[String] {
        &self.groups[self.groups.len().div_ceil(2)..]
    }

    /// Every attribute the spec touches: the aggregate attribute and the groups.
    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.agg_attr.as_str()).chain(self.groups.iter().map(String::as_str))
    }

    pub fn canonical_query(&self) -> String {
        format!(
            "SELECT {}({}) FROM D GROUP BY {}",
            self.agg_fn,
            self.agg_attr,
            self.groups.join(", ")
        )
    }
}

impl fmt::Display for PivotSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_query())
    }
}

impl PartialOrd for PivotSpec {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PivotSpec {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical_query()
            .cmp(&other.canonical_query())
            .then_with(|| self.agg_fn.cmp(&other.agg_fn))
            .then_with(|| self.agg_attr.cmp(&other.agg_attr))
            .then_with(|| self.groups.cmp(&other.groups))
    }
}

pub type HeaderTuple = Vec<String>;

/// A materialized pivot table: `n` row headers by `m` column headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotGrid {
    pub spec: PivotSpec,
    pub row_headers: Vec<HeaderTuple>,
    pub col_headers: Vec<HeaderTuple>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl PivotGrid {
    /// Builds a grid directly from parts; used for crafted grids and tests.
    pub fn from_parts(
        spec: PivotSpec,
        row_headers: Vec<HeaderTuple>,
        col_headers: Vec<HeaderTuple>,
        cells: Vec<Vec<Option<f64>>>,
    ) -> Self {
        assert_eq!(cells.len(), row_headers.len(), "row count mismatch");
        assert!(
            cells.iter().all(|r| r.len() == col_headers.len()),
            "column count mismatch"
        );
        Self {
            spec,
            row_headers,
            col_headers,
            cells,
        }
    }

    pub fn n(&self) -> usize {
        self.row_headers.len()
    }

    pub fn m(&self) -> usize {
        self.col_headers.len()
    }

    pub fn cell_count(&self) -> usize {
        self.n() * self.m()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col]
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.cells
    }

    pub fn columns(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.m())
            .map(|j| self.cells.iter().map(|r| r[j]).collect())
            .collect()
    }

    pub fn non_null_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().flatten().filter_map(|c| *c)
    }

    /// Swaps rows and columns. Applying it twice yields the original grid.
    pub fn transpose(&self) -> PivotGrid {
        PivotGrid {
            spec: self.spec.clone(),
            row_headers: self.col_headers.clone(),
            col_headers: self.row_headers.clone(),
            cells: self.columns(),
        }
    }

    /// Renders the grid as a markdown table.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let corner = self.spec.row_groups().join(" / ");
        let col_title = self.spec.col_groups().join(" / ");
        out.push_str(&format!("| {corner} \\ {col_title} |"));
        for c in &self.col_headers {
            out.push_str(&format!(" {} |", c.join(", ")));
        }
        out.push('\n');
        out.push_str(&"|---".repeat(self.m() + 1));
        out.push_str("|\n");
        for (r, row) in self.row_headers.iter().zip(&self.cells) {
            out.push_str(&format!("| {} |", r.join(", ")));
            for cell in row {
                match cell {
                    Some(v) => out.push_str(&format!(" {} |", format_number(*v))),
                    None => out.push_str(" · |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.4}")
    }
}

#[derive(Default, Clone, Copy)]
struct Accumulator {
    rows: usize,
    values: usize,
    sum: f64,
    min: f64,
    max: f64,
}

impl Accumulator {
    fn push(&mut self, value: Option<f64>) {
        self.rows += 1;
        if let Some(v) = value {
            if self.values == 0 {
                self.min = v;
                self.max = v;
            } else {
                self.min = self.min.min(v);
                self.max = self.max.max(v);
            }
            self.values += 1;
            self.sum += v;
        }
    }

    fn finish(&self, func: AggFn) -> Option<f64> {
        match func {
            AggFn::Count => Some(self.rows as f64),
            _ if self.values == 0 => None,
            AggFn::Sum => Some(self.sum),
            AggFn::Avg => Some(self.sum / self.values as f64),
            AggFn::Min => Some(self.min),
            AggFn::Max => Some(self.max),
        }
    }
}

/// Runs the group-by for `spec` and lays the result out on the canonical grid.
///
/// A row participates when every grouping attribute is non-null and, for
/// value aggregates, the aggregated value is non-null. COUNT counts
/// participating rows. Headers are the distinct tuples among participating
/// rows, so a cell is null exactly when no participating row falls in it.
pub fn materialize(dataset: &Dataset, spec: &PivotSpec) -> Result<PivotGrid, PivotError> {
    let value_meta = dataset.attribute(spec.agg_attr())?;
    if spec.agg_fn().needs_numeric() && value_meta.data_type != DataType::Numeric {
        return Err(PivotError::NonNumeric {
            func: spec.agg_fn(),
            attr: spec.agg_attr().to_string(),
            data_type: value_meta.data_type,
        });
    }
    let values = dataset.column(spec.agg_attr())?.numeric();
    let row_cols = spec
        .row_groups()
        .iter()
        .map(|g| dataset.column(g).map(|c| c.raw()))
        .collect::<Result<Vec<_>, _>>()?;
    let col_cols = spec
        .col_groups()
        .iter()
        .map(|g| dataset.column(g).map(|c| c.raw()))
        .collect::<Result<Vec<_>, _>>()?;

    fn tuple_at<'a>(cols: &[&'a [Option<String>]], row: usize) -> Option<Vec<&'a str>> {
        cols.iter().map(|c| c[row].as_deref()).collect()
    }

    let mut groups: HashMap<(Vec<&str>, Vec<&str>), Accumulator> = HashMap::new();
    let mut row_keys = BTreeSet::new();
    let mut col_keys = BTreeSet::new();
    for (row, &value) in values.iter().enumerate() {
        let (Some(r), Some(c)) = (tuple_at(&row_cols, row), tuple_at(&col_cols, row)) else {
            continue;
        };
        if spec.agg_fn().needs_numeric() && value.is_none() {
            continue;
        }
        row_keys.insert(r.clone());
        col_keys.insert(c.clone());
        groups.entry((r, c)).or_default().push(value);
    }

    let row_index: BTreeMap<&Vec<&str>, usize> = row_keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let col_index: BTreeMap<&Vec<&str>, usize> = col_keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut cells = vec![vec![None; col_keys.len()]; row_keys.len()];
    for ((r, c), acc) in &groups {
        cells[row_index[r]][col_index[c]] = acc.finish(spec.agg_fn());
    }

    let owned = |keys: BTreeSet<Vec<&str>>| -> Vec<HeaderTuple> {
        keys.into_iter()
            .map(|k| k.into_iter().map(str::to_string).collect())
            .collect()
    };
    Ok(PivotGrid {
        spec: spec.clone(),
        row_headers: owned(row_keys),
        col_headers: owned(col_keys),
        cells,
    })
}

/// Display label of a header tuple, e.g. `BS` or `(BS, IT)`.
pub fn header_label(tuple: &[String]) -> String {
    match tuple {
        [single] => single.clone(),
        many => format!("({})", many.join(", ")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_table, LoadOptions};

    fn fixture() -> Dataset {
        let csv = include_str!("../tests/fixtures/employees.csv");
        load_table(csv.as_bytes(), &LoadOptions::default()).unwrap()
    }

    #[test]
    fn canonical_split_of_three_groups() {
        let spec = canonicalize(AggFn::Count, "ID", &["Gender", "Degree", "Department"]).unwrap();
        assert_eq!(spec.groups(), ["Degree", "Department", "Gender"]);
        assert_eq!(spec.row_groups(), ["Degree", "Department"]);
        assert_eq!(spec.col_groups(), ["Gender"]);
        assert_eq!(
            spec.canonical_query(),
            "SELECT COUNT(ID) FROM D GROUP BY Degree, Department, Gender"
        );
    }

    #[test]
    fn canonical_split_of_four_groups() {
        let spec = canonicalize(AggFn::Min, "Age", &["B", "A", "C", "D"]).unwrap();
        assert_eq!(spec.row_groups(), ["A", "B"]);
        assert_eq!(spec.col_groups(), ["C", "D"]);
    }

    #[test]
    fn permutation_invariance() {
        let a = canonicalize(AggFn::Avg, "Salary", &["Department", "Degree"]).unwrap();
        let b = canonicalize(AggFn::Avg, "Salary", &["Degree", "Department"]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(matches!(
            canonicalize(AggFn::Avg, "Salary", &["Salary", "Degree"]),
            Err(PivotError::AggregateInGroups(_))
        ));
        assert!(matches!(
            canonicalize(AggFn::Avg, "Salary", &["Degree"]),
            Err(PivotError::Arity(1))
        ));
        assert!(matches!(
            canonicalize(AggFn::Avg, "Salary", &["Degree", "Degree"]),
            Err(PivotError::DuplicateGroup(_))
        ));
    }

    #[test]
    fn spec_json_shape_and_canonicalizing_deserialize() {
        let spec = canonicalize(AggFn::Avg, "Salary", &["Department", "Degree"]).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"fn":"AVG","attr":"Salary","groups":["Degree","Department"]}"#
        );
        let back: PivotSpec =
            serde_json::from_str(r#"{"fn":"AVG","attr":"Salary","groups":["Department","Degree"]}"#).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<PivotSpec>(
            r#"{"fn":"AVG","attr":"Salary","groups":["Salary","Degree"]}"#
        )
        .is_err());
    }

    #[test]
    fn avg_salary_by_degree_and_department() {
        let d = fixture();
        let spec = canonicalize(AggFn::Avg, "Salary", &["Department", "Degree"]).unwrap();
        let g = materialize(&d, &spec).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.m(), 2);
        let phd = g.row_headers.iter().position(|r| r[0] == "PhD").unwrap();
        let it = g.col_headers.iter().position(|c| c[0] == "IT").unwrap();
        assert_eq!(g.cell(phd, it), Some(900_000.0));
        let t = g.transpose();
        assert_eq!((t.n(), t.m()), (2, 3));
        assert_eq!(t.cell(it, phd), Some(900_000.0));
    }

    #[test]
    fn count_by_three_groups_matches_staffing_table() {
        let d = fixture();
        let spec = canonicalize(AggFn::Count, "ID", &["Gender", "Degree", "Department"]).unwrap();
        let g = materialize(&d, &spec).unwrap();
        assert_eq!((g.n(), g.m()), (6, 2));
        let row = g
            .row_headers
            .iter()
            .position(|r| r == &["PhD".to_string(), "IT".to_string()])
            .unwrap();
        let male = g.col_headers.iter().position(|c| c[0] == "Male").unwrap();
        assert_eq!(g.cell(row, male), Some(10.0));
        let total: f64 = g.non_null_values().sum();
        assert_eq!(total, d.row_count() as f64);
    }

    #[test]
    fn empty_dataset_gives_empty_grid() {
        let d = load_table("a,b,v\n".as_bytes(), &LoadOptions::default()).unwrap();
        let spec = canonicalize(AggFn::Count, "v", &["a", "b"]).unwrap();
        let g = materialize(&d, &spec).unwrap();
        assert_eq!((g.n(), g.m(), g.cell_count()), (0, 0, 0));
    }

    #[test]
    fn value_aggregates_need_numeric() {
        let d = fixture();
        let spec = canonicalize(AggFn::Sum, "Gender", &["Degree", "Department"]).unwrap();
        assert!(matches!(
            materialize(&d, &spec),
            Err(PivotError::NonNumeric { .. })
        ));
        let spec = canonicalize(AggFn::Count, "Gender", &["Degree", "Department"]).unwrap();
        assert!(materialize(&d, &spec).is_ok());
    }

    #[test]
    fn null_cells_only_for_empty_groups() {
        let csv = "a,b,v\nx,p,1\nx,q,2\ny,p,\n,q,5\n";
        let d = load_table(csv.as_bytes(), &LoadOptions::default()).unwrap();
        let spec = canonicalize(AggFn::Avg, "v", &["a", "b"]).unwrap();
        let g = materialize(&d, &spec).unwrap();
        // y only has a null value and the blank `a` row is dropped entirely.
        assert_eq!(g.row_headers, vec![vec!["x".to_string()]]);
        assert_eq!(g.cells, vec![vec![Some(1.0), Some(2.0)]]);
        let count = canonicalize(AggFn::Count, "v", &["a", "b"]).unwrap();
        let g = materialize(&d, &count).unwrap();
        assert_eq!(g.cells, vec![vec![Some(1.0), Some(1.0)], vec![Some(1.0), None]]);
    }

    #[test]
    fn markdown_rendering_marks_nulls() {
        let spec = canonicalize(AggFn::Sum, "v", &["a", "b"]).unwrap();
        let g = PivotGrid::from_parts(
            spec,
            vec![vec!["x".into()]],
            vec![vec!["p".into()], vec!["q".into()]],
            vec![vec![Some(1.5), None]],
        );
        let md = g.to_markdown();
        assert!(md.contains("| x | 1.5000 | · |"), "{md}");
    }
}
