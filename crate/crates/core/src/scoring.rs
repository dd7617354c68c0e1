//! Utility of a single pivot table: insightfulness (significance-gated max of
//! informativeness, trend and surprise) mixed with interpretability (mean of
//! density, semantic validity and conciseness).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::pivot::{header_label, materialize, PivotError, PivotGrid, PivotSpec};
use crate::semantics::{
    assess_unlikelihood, rank_aggregate_functions, significance, Direction, Likert, OracleQuery,
    SemanticOracle,
};

/// Minimum mutually non-null positions for a pair to count in informativeness.
pub const MIN_DISTANCE_POINTS: usize = 2;
/// Minimum mutually non-null positions for a Pearson correlation.
pub const MIN_CORRELATION_POINTS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("invalid scoring parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    /// Minimum |ρ| for a correlation to count.
    pub tau_rho: f64,
    /// Minimum persistent ratio for a ratio trend (≥ 1).
    pub tau_pi: f64,
    /// Standard deviations from the line mean that make a cell an outlier.
    pub tau_outlier: f64,
    /// Cell count where conciseness switches from linear to exponential decay.
    pub tau_c: f64,
    /// Linear decay per cell.
    pub z: f64,
    /// Exponential decay rate beyond `tau_c`.
    pub lambda: f64,
    /// Weight of insightfulness in utility.
    pub alpha: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            tau_rho: 0.5,
            tau_pi: 2.0,
            tau_outlier: 4.0,
            tau_c: 16.0,
            z: 0.03,
            lambda: 0.5,
            alpha: 0.5,
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let check = |ok: bool, name: &'static str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ScoringError::InvalidParam {
                    name,
                    reason: reason.to_string(),
                })
            }
        };
        check(
            (0.0..=1.0).contains(&self.tau_rho),
            "tau_rho",
            "must lie in [0, 1]",
        )?;
        check(self.tau_pi >= 1.0, "tau_pi", "must be at least 1")?;
        check(self.tau_outlier > 0.0, "tau_outlier", "must be positive")?;
        check(
            self.tau_c >= 0.0 && self.tau_c.is_finite(),
            "tau_c",
            "must be a finite non-negative count",
        )?;
        check(self.z > 0.0, "z", "must be positive")?;
        check(self.lambda > 0.0, "lambda", "must be positive")?;
        check(self.z * self.tau_c <= 1.0, "z", "z * tau_c must not exceed 1")?;
        check((0.0..=1.0).contains(&self.alpha), "alpha", "must lie in [0, 1]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub s_sig: f64,
    pub s_inf: f64,
    pub s_cor: f64,
    pub s_ratio: f64,
    pub s_trend: f64,
    pub s_sur: f64,
    pub insightfulness: f64,
    pub s_den: f64,
    pub s_sem: f64,
    pub s_con: f64,
    pub interpretability: f64,
    pub utility: f64,
}

/// Sub-scores from which a [`ScoreCard`] is assembled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubScores {
    pub s_sig: f64,
    pub s_inf: f64,
    pub s_cor: f64,
    pub s_ratio: f64,
    pub s_sur: f64,
    pub s_den: f64,
    pub s_sem: f64,
    pub s_con: f64,
}

impl ScoreCard {
    /// Assembles composites from sub-scores; every emitted card goes through here.
    pub fn compose(sub: SubScores, alpha: f64) -> Self {
        let s_trend = trend_score(sub.s_cor, sub.s_ratio);
        let insightfulness = insightfulness_score(sub.s_sig, sub.s_inf, s_trend, sub.s_sur);
        let interpretability = interpretability_score(sub.s_den, sub.s_sem, sub.s_con);
        Self {
            s_sig: sub.s_sig,
            s_inf: sub.s_inf,
            s_cor: sub.s_cor,
            s_ratio: sub.s_ratio,
            s_trend,
            s_sur: sub.s_sur,
            insightfulness,
            s_den: sub.s_den,
            s_sem: sub.s_sem,
            s_con: sub.s_con,
            interpretability,
            utility: utility_score(insightfulness, interpretability, alpha),
        }
    }

    pub fn values(&self) -> [f64; 12] {
        [
            self.s_sig,
            self.s_inf,
            self.s_cor,
            self.s_ratio,
            self.s_trend,
            self.s_sur,
            self.insightfulness,
            self.s_den,
            self.s_sem,
            self.s_con,
            self.interpretability,
            self.utility,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
}

/// One retained correlation or ratio pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub axis: Axis,
    pub first: String,
    pub second: String,
    /// ρ for correlations, π for ratios.
    pub statistic: f64,
    pub likert: Likert,
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierTerm {
    pub axis: Axis,
    pub line: String,
    pub header: String,
    pub value: f64,
    pub likert: Likert,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Informativeness {
    pub score: f64,
    pub row: f64,
    pub col: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrendComponent {
    pub score: f64,
    pub row: f64,
    pub col: f64,
    pub terms: Vec<PairTerm>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Surprise {
    pub score: f64,
    pub row: f64,
    pub col: f64,
    pub outliers: Vec<OutlierTerm>,
}

/// Intermediates kept for debugging output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreDetail {
    pub informativeness: Informativeness,
    pub correlation: TrendComponent,
    pub ratio: TrendComponent,
    pub surprise: Surprise,
    pub textual_group_share: f64,
    pub pr_agg: f64,
    pub cell_count: usize,
    pub degenerate_grid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPivot {
    pub spec: PivotSpec,
    pub scores: ScoreCard,
    pub details: ScoreDetail,
}

/// One orientation of a grid: its lines (rows or columns), their labels and
/// the labels along each line.
struct Lines {
    axis: Axis,
    lines: Vec<Vec<Option<f64>>>,
    labels: Vec<String>,
    across: Vec<String>,
}

impl Lines {
    fn both(grid: &PivotGrid) -> [Lines; 2] {
        let rows: Vec<String> = grid.row_headers.iter().map(|h| header_label(h)).collect();
        let cols: Vec<String> = grid.col_headers.iter().map(|h| header_label(h)).collect();
        [
            Lines {
                axis: Axis::Row,
                lines: grid.rows().to_vec(),
                labels: rows.clone(),
                across: cols.clone(),
            },
            Lines {
                axis: Axis::Column,
                lines: grid.columns(),
                labels: cols,
                across: rows,
            },
        ]
    }

    fn pair_count(&self) -> usize {
        let n = self.lines.len();
        n * n.saturating_sub(1) / 2
    }
}

fn mutual(a: &[Option<f64>], b: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).unzip()
}

fn aggregate_phrase(spec: &PivotSpec, attr_display: &str) -> String {
    format!("{} {}", spec.agg_fn().phrase(), attr_display)
}

/// Product of the significance of the aggregate attribute and every group.
pub fn significance_score(
    spec: &PivotSpec,
    dataset: &Dataset,
    oracle: &dyn SemanticOracle,
) -> Result<f64, PivotError> {
    let mut product = 1.0;
    for attr in spec.attributes() {
        product *= significance(oracle, dataset.attribute(attr)?);
    }
    Ok(product.clamp(0.0, 1.0))
}

/// Mean pairwise L2 distance between rows (and between columns), normalized
/// by `γ = max(T) − min(T)` times the line length; the larger side wins.
pub fn informativeness_score(grid: &PivotGrid) -> Informativeness {
    let (lo, hi) = grid
        .non_null_values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    let gamma = if lo.is_finite() { hi - lo } else { 0.0 };
    if gamma <= 0.0 || !gamma.is_finite() {
        return Informativeness {
            gamma: gamma.max(0.0),
            ..Default::default()
        };
    }
    let [rows, cols] = Lines::both(grid);
    let side = |lines: &Lines| -> f64 {
        let pairs = lines.pair_count();
        if pairs == 0 {
            return 0.0;
        }
        let width = lines.across.len() as f64;
        let mut total = 0.0;
        for i in 0..lines.lines.len() {
            for j in i + 1..lines.lines.len() {
                let (a, b) = mutual(&lines.lines[i], &lines.lines[j]);
                if a.len() < MIN_DISTANCE_POINTS {
                    continue;
                }
                let dist = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                total += (dist / (gamma * width)).min(1.0);
            }
        }
        total / pairs as f64
    };
    let row = side(&rows);
    let col = side(&cols);
    Informativeness {
        score: row.max(col),
        row,
        col,
        gamma,
    }
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if a.len() < 2 || a.len() != b.len() || constant(a) || constant(b) {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    let denom = (va * vb).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    Some((cov / denom).clamp(-1.0, 1.0))
}

pub fn correlation_trend_score(
    grid: &PivotGrid,
    oracle: &dyn SemanticOracle,
    params: &ScoringParams,
) -> TrendComponent {
    let phrase = aggregate_phrase(&grid.spec, grid.spec.agg_attr());
    correlation_trend_with(grid, oracle, params, &phrase)
}

fn correlation_trend_with(
    grid: &PivotGrid,
    oracle: &dyn SemanticOracle,
    params: &ScoringParams,
    aggregate: &str,
) -> TrendComponent {
    let mut terms = Vec::new();
    let mut sides = [0.0; 2];
    for (side, lines) in Lines::both(grid).iter().enumerate() {
        let pairs = lines.pair_count();
        if pairs == 0 {
            continue;
        }
        let mut total = 0.0;
        for i in 0..lines.lines.len() {
            for j in i + 1..lines.lines.len() {
                let (a, b) = mutual(&lines.lines[i], &lines.lines[j]);
                if a.len() < MIN_CORRELATION_POINTS {
                    continue;
                }
                let Some(rho) = pearson(&a, &b) else { continue };
                if rho.abs() < params.tau_rho {
                    continue;
                }
                let query = OracleQuery::CorrelationUnlikelihood {
                    aggregate: aggregate.to_string(),
                    first: lines.labels[i].clone(),
                    second: lines.labels[j].clone(),
                    direction: if rho >= 0.0 {
                        Direction::Positive
                    } else {
                        Direction::Negative
                    },
                    across: lines.across.clone(),
                };
                let likert = assess_unlikelihood(oracle, &query);
                let contribution = rho.abs() * likert.value();
                total += contribution;
                terms.push(PairTerm {
                    axis: lines.axis,
                    first: lines.labels[i].clone(),
                    second: lines.labels[j].clone(),
                    statistic: rho,
                    likert,
                    contribution,
                });
            }
        }
        sides[side] = (total / pairs as f64).clamp(0.0, 1.0);
    }
    TrendComponent {
        score: sides[0].max(sides[1]),
        row: sides[0],
        col: sides[1],
        terms,
    }
}

/// Smallest element-wise factor by which `a` exceeds `b`. `None` when the
/// null patterns differ, nothing overlaps, or any compared cell is non-positive.
pub fn min_ratio(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let mut min: Option<f64> = None;
    for (x, y) in a.iter().zip(b) {
        match (x, y) {
            (None, None) => continue,
            (Some(x), Some(y)) if *x > 0.0 && *y > 0.0 => {
                let r = x / y;
                min = Some(min.map_or(r, |m| m.min(r)));
            }
            _ => return None,
        }
    }
    min
}

fn round_factor(pi: f64) -> f64 {
    (pi * 100.0).round() / 100.0
}

pub fn ratio_trend_score(
    grid: &PivotGrid,
    oracle: &dyn SemanticOracle,
    params: &ScoringParams,
) -> TrendComponent {
    let phrase = aggregate_phrase(&grid.spec, grid.spec.agg_attr());
    ratio_trend_with(grid, oracle, params, &phrase)
}

fn ratio_trend_with(
    grid: &PivotGrid,
    oracle: &dyn SemanticOracle,
    params: &ScoringParams,
    aggregate: &str,
) -> TrendComponent {
    let mut terms = Vec::new();
    let mut sides = [0.0; 2];
    for (side, lines) in Lines::both(grid).iter().enumerate() {
        let pairs = lines.pair_count();
        if pairs == 0 {
            continue;
        }
        let mut total = 0.0;
        // Ordered pairs: with tau_pi >= 1 at most one direction of a pair passes.
        for i in 0..lines.lines.len() {
            for j in 0..lines.lines.len() {
                if i == j {
                    continue;
                }
                let Some(pi) = min_ratio(&lines.lines[i], &lines.lines[j]) else {
                    continue;
                };
                if pi < params.tau_pi {
                    continue;
                }
                let query = OracleQuery::RatioUnlikelihood {
                    aggregate: aggregate.to_string(),
                    larger: lines.labels[i].clone(),
                    smaller: lines.labels[j].clone(),
                    factor: round_factor(pi),
                    across: lines.across.clone(),
                };
                let likert = assess_unlikelihood(oracle, &query);
                let contribution = (1.0 - 1.0 / pi) * likert.value();
                total += contribution;
                terms.push(PairTerm {
                    axis: lines.axis,
                    first: lines.labels[i].clone(),
                    second: lines.labels[j].clone(),
                    statistic: pi,
                    likert,
                    contribution,
                });
            }
        }
        sides[side] = (total / pairs as f64).clamp(0.0, 1.0);
    }
    TrendComponent {
        score: sides[0].max(sides[1]),
        row: sides[0],
        col: sides[1],
        terms,
    }
}

pub fn trend_score(s_cor: f64, s_ratio: f64) -> f64 {
    s_cor.max(s_ratio)
}

pub fn surprise_score(grid: &PivotGrid, oracle: &dyn SemanticOracle, params: &ScoringParams) -> Surprise {
    let phrase = aggregate_phrase(&grid.spec, grid.spec.agg_attr());
    surprise_with(grid, oracle, params, &phrase)
}

/// Cells at least `tau` population standard deviations from the line mean.
pub fn outlier_positions(line: &[Option<f64>], tau: f64) -> Vec<usize> {
    let present: Vec<(usize, f64)> = line
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if present.len() < 2 || present.iter().all(|(_, v)| *v == present[0].1) {
        return Vec::new();
    }
    let n = present.len() as f64;
    let mean = present.iter().map(|(_, v)| v).sum::<f64>() / n;
    let sigma = (present.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sigma == 0.0 {
        return Vec::new();
    }
    present
        .into_iter()
        .filter(|(_, v)| (v - mean).abs() >= tau * sigma)
        .map(|(i, _)| i)
        .collect()
}

fn surprise_with(
    grid: &PivotGrid,
    oracle: &dyn SemanticOracle,
    params: &ScoringParams,
    aggregate: &str,
) -> Surprise {
    let mut outliers = Vec::new();
    let mut sides = [0.0; 2];
    for (side, lines) in Lines::both(grid).iter().enumerate() {
        if lines.lines.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for (i, line) in lines.lines.iter().enumerate() {
            let positions = outlier_positions(line, params.tau_outlier);
            if positions.is_empty() {
                continue;
            }
            let mut likelihood_sum = 0.0;
            for &c in &positions {
                let value = line[c].expect("outliers are non-null");
                let query = OracleQuery::OutlierUnlikelihood {
                    aggregate: aggregate.to_string(),
                    group: lines.labels[i].clone(),
                    header: lines.across[c].clone(),
                    value,
                    within: lines.across.clone(),
                };
                let likert = assess_unlikelihood(oracle, &query);
                likelihood_sum += likert.value();
                outliers.push(OutlierTerm {
                    axis: lines.axis,
                    line: lines.labels[i].clone(),
                    header: lines.across[c].clone(),
                    value,
                    likert,
                });
            }
            total += 1.0 - likelihood_sum / (positions.len() as f64 + 1.0);
        }
        sides[side] = (total / lines.lines.len() as f64).clamp(0.0, 1.0);
    }
    Surprise {
        score: sides[0].max(sides[1]),
        row: sides[0],
        col: sides[1],
        outliers,
    }
}

pub fn insightfulness_score(s_sig: f64, s_inf: f64, s_trend: f64, s_sur: f64) -> f64 {
    s_sig * s_inf.max(s_trend).max(s_sur)
}

/// Share of non-null cells; an empty grid scores 0.
pub fn density_score(grid: &PivotGrid) -> f64 {
    let total = grid.cell_count();
    if total == 0 {
        return 0.0;
    }
    grid.cells.iter().flatten().filter(|c| c.is_some()).count() as f64 / total as f64
}

/// Textual share of the grouping attributes times `Pr_agg(F, V)`.
pub fn semantic_validity_score(
    spec: &PivotSpec,
    dataset: &Dataset,
    oracle: &dyn SemanticOracle,
) -> Result<(f64, f64, f64), PivotError> {
    let mut textual = 0usize;
    for g in spec.groups() {
        if dataset.attribute(g)?.data_type.is_textual() {
            textual += 1;
        }
    }
    let share = textual as f64 / spec.groups().len() as f64;
    let pr_agg = rank_aggregate_functions(oracle, dataset.attribute(spec.agg_attr())?).pr_agg(spec.agg_fn());
    Ok((share * pr_agg, share, pr_agg))
}

/// Linear decay up to `tau_c` cells, exponential beyond; continuous at `tau_c`.
pub fn conciseness_score(cell_count: usize, params: &ScoringParams) -> f64 {
    let cells = cell_count as f64;
    let score = if cells <= params.tau_c {
        1.0 - params.z * cells
    } else {
        (1.0 - params.z * params.tau_c) * (-params.lambda * (cells - params.tau_c)).exp()
    };
    score.clamp(0.0, 1.0)
}

pub fn interpretability_score(s_den: f64, s_sem: f64, s_con: f64) -> f64 {
    (s_den + s_sem + s_con) / 3.0
}

pub fn utility_score(insightfulness: f64, interpretability: f64, alpha: f64) -> f64 {
    alpha * insightfulness + (1.0 - alpha) * interpretability
}

/// Grid-only sub-scores, shared by [`score_grid`] and the fuzzing harnesses.
pub fn grid_scores(
    grid: &PivotGrid,
    oracle: &dyn SemanticOracle,
    params: &ScoringParams,
    aggregate: &str,
) -> ScoreDetail {
    ScoreDetail {
        informativeness: informativeness_score(grid),
        correlation: correlation_trend_with(grid, oracle, params, aggregate),
        ratio: ratio_trend_with(grid, oracle, params, aggregate),
        surprise: surprise_with(grid, oracle, params, aggregate),
        textual_group_share: 0.0,
        pr_agg: 0.0,
        cell_count: grid.cell_count(),
        degenerate_grid: grid.cell_count() == 0,
    }
}

/// Scores an already-materialized grid against its dataset.
pub fn score_grid(
    dataset: &Dataset,
    grid: &PivotGrid,
    oracle: &dyn SemanticOracle,
    params: &ScoringParams,
) -> Result<ScoredPivot, PivotError> {
    let spec = &grid.spec;
    let display = &dataset.attribute(spec.agg_attr())?.resolved_name;
    let mut details = grid_scores(grid, oracle, params, &aggregate_phrase(spec, display));
    let s_sig = significance_score(spec, dataset, oracle)?;
    let (s_sem, share, pr_agg) = semantic_validity_score(spec, dataset, oracle)?;
    details.textual_group_share = share;
    details.pr_agg = pr_agg;
    let scores = ScoreCard::compose(
        SubScores {
            s_sig,
            s_inf: details.informativeness.score,
            s_cor: details.correlation.score,
            s_ratio: details.ratio.score,
            s_sur: details.surprise.score,
            s_den: density_score(grid),
            s_sem,
            s_con: conciseness_score(grid.cell_count(), params),
        },
        params.alpha,
    );
    Ok(ScoredPivot {
        spec: spec.clone(),
        scores,
        details,
    })
}

/// Materializes `spec` and scores it.
pub fn score_pivot(
    dataset: &Dataset,
    spec: &PivotSpec,
    oracle: &dyn SemanticOracle,
    params: &ScoringParams,
) -> Result<ScoredPivot, PivotError> {
    let grid = materialize(dataset, spec)?;
    score_grid(dataset, &grid, oracle, params)
}
