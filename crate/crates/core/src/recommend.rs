//! Candidate enumeration, scoring, diverse top-k selection and adaptive sessions.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataType, Dataset};
use crate::embedding::{embed_pivot, pairwise_distance, set_diversity, Embedding, EmbeddingProvider};
use crate::pivot::{canonicalize, materialize, AggFn, PivotGrid, PivotSpec};
use crate::scoring::{score_grid, ScoreCard, ScoredPivot, ScoringError, ScoringParams};
use crate::semantics::{
    rank_aggregate_functions, resolve_attribute_names, significance, AggregateRanking, SemanticOracle,
};

/// Largest pool [`brute_force_select`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("theta must lie in [0, 1], got {0}")]
    Theta(f64),
    #[error("g_max must be at least 2, got {0}")]
    GMax(usize),
    #[error("p_agg_min must lie in [0, 1], got {0}")]
    PAggMin(f64),
    #[error("pool_cap must be at least 1")]
    PoolCap,
    #[error("unknown focus attributes: {}", .0.join(", "))]
    UnknownFocus(Vec<String>),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

#[derive(Debug, Error, PartialEq)]
pub enum RecommendError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{size} candidates exceed the pool cap of {cap}; narrow focus_attrs or lower g_max")]
    PoolTooLarge { size: usize, cap: usize },
    #[error("brute force refuses pools larger than {BRUTE_FORCE_LIMIT} (got {0})")]
    BruteForceTooLarge(usize),
    #[error("spec `{0}` was never recommended in this session")]
    UnknownSpec(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendConfig {
    pub k: usize,
    pub theta: f64,
    /// Restricts every attribute of a candidate to this set.
    pub focus_attrs: Option<Vec<String>>,
    pub g_max: usize,
    /// Drop candidates whose aggregate-function plausibility is below this.
    pub p_agg_min: f64,
    /// Drop candidates whose estimated cell count exceeds this; `None` disables.
    pub cell_max: Option<u64>,
    /// Refuse to score more candidates than this; `None` disables.
    pub pool_cap: Option<usize>,
    pub scoring: ScoringParams,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        Self {
            k: 5,
            theta: 0.25,
            focus_attrs: None,
            g_max: 3,
            p_agg_min: 0.4,
            cell_max: Some(256),
            pool_cap: Some(5000),
            scoring: ScoringParams::default(),
        }
    }
}

impl RecommendConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::ZeroK);
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ConfigError::Theta(self.theta));
        }
        if self.g_max < 2 {
            return Err(ConfigError::GMax(self.g_max));
        }
        if !(0.0..=1.0).contains(&self.p_agg_min) {
            return Err(ConfigError::PAggMin(self.p_agg_min));
        }
        if self.pool_cap == Some(0) {
            return Err(ConfigError::PoolCap);
        }
        self.scoring.validate()?;
        Ok(())
    }

    /// Validation including focus attributes against a dataset.
    pub fn validate_for(&self, dataset: &Dataset) -> Result<(), ConfigError> {
        self.validate()?;
        if let Some(focus) = &self.focus_attrs {
            let unknown: Vec<String> = focus
                .iter()
                .filter(|a| dataset.index_of(a).is_err())
                .cloned()
                .collect();
            if !unknown.is_empty() {
                return Err(ConfigError::UnknownFocus(unknown));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeProfile {
    pub name: String,
    pub data_type: DataType,
    pub distinct_count: usize,
    pub significance: f64,
    pub ranking: AggregateRanking,
}

/// Per-dataset oracle answers and statistics gathered before any online request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub attributes: Vec<AttributeProfile>,
}

impl DatasetProfile {
    pub fn build(dataset: &Dataset, oracle: &dyn SemanticOracle) -> Self {
        let attributes = dataset
            .attributes()
            .iter()
            .map(|meta| AttributeProfile {
                name: meta.name.clone(),
                data_type: meta.data_type,
                distinct_count: meta.distinct_count,
                significance: significance(oracle, meta),
                ranking: rank_aggregate_functions(oracle, meta),
            })
            .collect();
        Self { attributes }
    }

    /// Resolves cryptic attribute names, then profiles the dataset. Every
    /// front end prepares datasets through here.
    pub fn prepare(mut dataset: Dataset, oracle: &dyn SemanticOracle) -> (Dataset, Self) {
        resolve_attribute_names(&mut dataset, oracle);
        let profile = Self::build(&dataset, oracle);
        (dataset, profile)
    }

    fn get(&self, name: &str) -> Option<&AttributeProfile> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

fn combinations(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, size, 0, &mut Vec::new(), &mut out);
    out
}

/// Every canonical spec allowed by the config, minus `explored` and pruned
/// specs, in canonical order.
///
/// Pruning drops a spec when any attribute has significance 0, when the
/// aggregate plausibility is below `p_agg_min`, or when the product of group
/// distinct counts exceeds `cell_max`.
pub fn enumerate_candidates(
    profile: &DatasetProfile,
    config: &RecommendConfig,
    explored: &BTreeSet<PivotSpec>,
) -> Vec<PivotSpec> {
    let allowed: Vec<usize> = (0..profile.attributes.len())
        .filter(|&i| {
            config
                .focus_attrs
                .as_ref()
                .is_none_or(|f| f.contains(&profile.attributes[i].name))
        })
        .collect();
    let mut out = BTreeSet::new();
    for &v in &allowed {
        let value = &profile.attributes[v];
        if value.significance == 0.0 {
            continue;
        }
        let groups: Vec<usize> = allowed
            .iter()
            .copied()
            .filter(|&g| g != v && profile.attributes[g].significance > 0.0)
            .collect();
        for func in AggFn::ALL {
            if func.needs_numeric() && value.data_type != DataType::Numeric {
                continue;
            }
            if value.ranking.pr_agg(func) < config.p_agg_min {
                continue;
            }
            for size in 2..=config.g_max.min(groups.len()) {
                for combo in combinations(&groups, size) {
                    if let Some(cap) = config.cell_max {
                        let estimate = combo.iter().fold(1u128, |acc, &g| {
                            acc.saturating_mul(profile.attributes[g].distinct_count as u128)
                        });
                        if estimate > u128::from(cap) {
                            continue;
                        }
                    }
                    let names: Vec<&str> = combo
                        .iter()
                        .map(|&g| profile.attributes[g].name.as_str())
                        .collect();
                    let spec =
                        canonicalize(func, &value.name, &names).expect("enumerated specs are well-formed");
                    if !explored.contains(&spec) {
                        out.insert(spec);
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Whether `spec` would be dropped by the significance prune.
pub fn pruned_by_significance(profile: &DatasetProfile, spec: &PivotSpec) -> bool {
    spec.attributes()
        .any(|a| profile.get(a).is_some_and(|p| p.significance == 0.0))
}

/// A scored, embedded candidate awaiting selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub spec: PivotSpec,
    pub grid: PivotGrid,
    pub scored: ScoredPivot,
    pub embedding: Embedding,
}

impl Draft {
    pub fn utility(&self) -> f64 {
        self.scored.scores.utility
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub spec: PivotSpec,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredPool {
    pub drafts: Vec<Draft>,
    pub failures: Vec<CandidateFailure>,
}

/// Materializes, scores and embeds every spec in parallel. Order follows
/// `specs`; a failing spec is recorded and skipped.
pub fn score_candidates(
    dataset: &Dataset,
    specs: &[PivotSpec],
    oracle: &dyn SemanticOracle,
    embedder: &dyn EmbeddingProvider,
    params: &ScoringParams,
) -> ScoredPool {
    let expected_provider = embedder.provider_id();
    let results: Vec<Result<Draft, CandidateFailure>> = specs
        .par_iter()
        .map(|spec| {
            let fail = |message: String| CandidateFailure {
                spec: spec.clone(),
                message,
            };
            let grid = materialize(dataset, spec).map_err(|e| fail(e.to_string()))?;
            let scored = score_grid(dataset, &grid, oracle, params).map_err(|e| fail(e.to_string()))?;
            let embedding = embed_pivot(embedder, spec, &grid).map_err(|e| fail(e.to_string()))?;
            if embedding.provider_id != expected_provider {
                return Err(fail(format!(
                    "embedding came from `{}` instead of `{expected_provider}`",
                    embedding.provider_id
                )));
            }
            Ok(Draft {
                spec: spec.clone(),
                grid,
                scored,
                embedding,
            })
        })
        .collect();
    let mut pool = ScoredPool::default();
    for r in results {
        match r {
            Ok(d) => pool.drafts.push(d),
            Err(f) => pool.failures.push(f),
        }
    }
    pool
}

/// A chosen subset of a draft pool, as indices in selection order.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub total_utility: f64,
    pub diversity: f64,
    pub exhausted: bool,
}

/// Utility descending, ties by canonical spec ascending.
fn canonical_order(drafts: &[Draft], indices: &mut [usize]) {
    indices.sort_by(|&a, &b| {
        drafts[b]
            .utility()
            .total_cmp(&drafts[a].utility())
            .then_with(|| drafts[a].spec.cmp(&drafts[b].spec))
    });
}

fn distance(a: &Draft, b: &Draft) -> f64 {
    // Incompatible embeddings never make it into a pool; treat them as duplicates.
    pairwise_distance(&a.embedding, &b.embedding).unwrap_or(0.0)
}

fn finish(drafts: &[Draft], mut indices: Vec<usize>, k: usize) -> Selection {
    canonical_order(drafts, &mut indices);
    let total_utility = indices.iter().map(|&i| drafts[i].utility()).sum();
    let chosen: Vec<&Embedding> = indices.iter().map(|&i| &drafts[i].embedding).collect();
    let diversity = set_diversity(&chosen).unwrap_or(0.0);
    Selection {
        exhausted: indices.len() < k,
        indices,
        total_utility,
        diversity,
    }
}

/// Scans drafts by utility and keeps each one at distance ≥ θ from all kept
/// so far, stopping at k.
pub fn greedy_select(drafts: &[Draft], k: usize, theta: f64) -> Selection {
    let mut order: Vec<usize> = (0..drafts.len()).collect();
    canonical_order(drafts, &mut order);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for i in order {
        if chosen.len() >= k {
            break;
        }
        if chosen.iter().all(|&j| distance(&drafts[i], &drafts[j]) >= theta) {
            chosen.push(i);
        }
    }
    finish(drafts, chosen, k)
}

/// Exact optimum by exhaustive subset enumeration. Ties go to the subset whose
/// sorted specs compare smallest.
pub fn brute_force_select(drafts: &[Draft], k: usize, theta: f64) -> Result<Selection, RecommendError> {
    let n = drafts.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(RecommendError::BruteForceTooLarge(n));
    }
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            dist[i][j] = distance(&drafts[i], &drafts[j]);
            dist[j][i] = dist[i][j];
        }
    }
    let mut best: Option<(f64, Vec<&PivotSpec>, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize > k {
            continue;
        }
        let mut members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let feasible = members
            .iter()
            .enumerate()
            .all(|(a, &i)| members[a + 1..].iter().all(|&j| dist[i][j] >= theta));
        if !feasible {
            continue;
        }
        canonical_order(drafts, &mut members);
        let total: f64 = members.iter().map(|&i| drafts[i].utility()).sum();
        let mut key: Vec<&PivotSpec> = members.iter().map(|&i| &drafts[i].spec).collect();
        key.sort();
        let better = match &best {
            None => true,
            Some((t, k2, _)) => total > *t || (total == *t && key < *k2),
        };
        if better {
            best = Some((total, key, members));
        }
    }
    let members = best.map(|(_, _, m)| m).unwrap_or_default();
    Ok(finish(drafts, members, k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub rank: usize,
    pub spec: PivotSpec,
    pub grid: PivotGrid,
    pub scorecard: ScoreCard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub recommendations: Vec<Recommendation>,
    pub diversity: f64,
    pub total_utility: f64,
    pub exhausted: bool,
    pub candidates: usize,
    pub failures: usize,
}

impl Batch {
    /// Canonical JSON bytes shared by every front end.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("batches serialize");
        bytes.push(b'\n');
        bytes
    }

    pub fn specs(&self) -> impl Iterator<Item = &PivotSpec> {
        self.recommendations.iter().map(|r| &r.spec)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# Recommendations\n\ndiversity {:.3}, total utility {:.3}{}\n",
            self.diversity,
            self.total_utility,
            if self.exhausted { ", exhausted" } else { "" }
        );
        for r in &self.recommendations {
            let s = &r.scorecard;
            out.push_str(&format!(
                "\n## {}. {}\n\nutility {:.3} (insightfulness {:.3}, interpretability {:.3})\n\n{}",
                r.rank,
                r.spec.canonical_query(),
                s.utility,
                s.insightfulness,
                s.interpretability,
                r.grid.to_markdown()
            ));
        }
        out
    }
}

/// The full pipeline: enumerate, score, select.
pub fn recommend(
    dataset: &Dataset,
    profile: &DatasetProfile,
    config: &RecommendConfig,
    explored: &BTreeSet<PivotSpec>,
    oracle: &dyn SemanticOracle,
    embedder: &dyn EmbeddingProvider,
) -> Result<Batch, RecommendError> {
    config.validate_for(dataset)?;
    let specs = enumerate_candidates(profile, config, explored);
    if let Some(cap) = config.pool_cap {
        if specs.len() > cap {
            return Err(RecommendError::PoolTooLarge {
                size: specs.len(),
                cap,
            });
        }
    }
    let pool = score_candidates(dataset, &specs, oracle, embedder, &config.scoring);
    let selection = greedy_select(&pool.drafts, config.k, config.theta);
    let recommendations = selection
        .indices
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let d = &pool.drafts[i];
            Recommendation {
                rank: rank + 1,
                spec: d.spec.clone(),
                grid: d.grid.clone(),
                scorecard: d.scored.scores,
            }
        })
        .collect();
    Ok(Batch {
        recommendations,
        diversity: selection.diversity,
        total_utility: selection.total_utility,
        exhausted: selection.exhausted,
        candidates: specs.len(),
        failures: pool.failures.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub spec: PivotSpec,
    pub verdict: Verdict,
    pub at: DateTime<Utc>,
}

/// Adaptive state: every served spec is explored and never served again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub dataset_id: String,
    pub config: RecommendConfig,
    explored: BTreeSet<PivotSpec>,
    history: Vec<FeedbackEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub dataset_id: String,
    pub config: RecommendConfig,
    pub explored: usize,
    pub accepted: Vec<PivotSpec>,
    pub rejected: Vec<PivotSpec>,
}

impl Session {
    pub fn new(id: impl Into<String>, dataset_id: impl Into<String>, config: RecommendConfig) -> Self {
        Self {
            id: id.into(),
            dataset_id: dataset_id.into(),
            config,
            explored: BTreeSet::new(),
            history: Vec::new(),
        }
    }

    pub fn explored(&self) -> &BTreeSet<PivotSpec> {
        &self.explored
    }

    pub fn history(&self) -> &[FeedbackEvent] {
        &self.history
    }

    /// Latest verdict per spec.
    pub fn verdicts(&self) -> BTreeMap<&PivotSpec, Verdict> {
        self.history.iter().map(|e| (&e.spec, e.verdict)).collect()
    }

    fn with_verdict(&self, verdict: Verdict) -> Vec<PivotSpec> {
        self.verdicts()
            .into_iter()
            .filter(|(_, v)| *v == verdict)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn accepted(&self) -> Vec<PivotSpec> {
        self.with_verdict(Verdict::Accepted)
    }

    pub fn rejected(&self) -> Vec<PivotSpec> {
        self.with_verdict(Verdict::Rejected)
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            dataset_id: self.dataset_id.clone(),
            config: self.config.clone(),
            explored: self.explored.len(),
            accepted: self.accepted(),
            rejected: self.rejected(),
        }
    }

    /// Computes the next batch and marks its specs explored.
    pub fn next_batch(
        &mut self,
        dataset: &Dataset,
        profile: &DatasetProfile,
        oracle: &dyn SemanticOracle,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Batch, RecommendError> {
        let batch = recommend(dataset, profile, &self.config, &self.explored, oracle, embedder)?;
        self.explored.extend(batch.specs().cloned());
        Ok(batch)
    }

    /// Records a verdict on a served spec. Repeating the current verdict is a
    /// no-op; a different verdict replaces it.
    pub fn apply_feedback(&mut self, spec: &PivotSpec, verdict: Verdict) -> Result<(), RecommendError> {
        if !self.explored.contains(spec) {
            return Err(RecommendError::UnknownSpec(spec.canonical_query()));
        }
        if self.verdicts().get(spec) == Some(&verdict) {
            return Ok(());
        }
        self.history.push(FeedbackEvent {
            spec: spec.clone(),
            verdict,
            at: Utc::now(),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_table, LoadOptions};
    use crate::embedding::BaselineEmbedder;
    use crate::scoring::{ScoreCard, ScoreDetail, SubScores};
    use crate::semantics::RuleBasedOracle;

    const EMPLOYEES: &str = include_str!("../tests/fixtures/employees.csv");

    fn employees() -> Dataset {
        load_table(EMPLOYEES.as_bytes(), &LoadOptions::default()).unwrap()
    }

    fn draft(name: &str, utility: f64, embedding: &[f64]) -> Draft {
        let spec = canonicalize(AggFn::Count, name, &["G1", "G2"]).unwrap();
        let sub = SubScores {
            s_sig: 1.0,
            s_inf: utility,
            s_cor: 0.0,
            s_ratio: 0.0,
            s_sur: 0.0,
            s_den: utility,
            s_sem: utility,
            s_con: utility,
        };
        Draft {
            grid: PivotGrid::from_parts(spec.clone(), vec![], vec![], vec![]),
            scored: ScoredPivot {
                spec: spec.clone(),
                scores: ScoreCard::compose(sub, 0.5),
                details: ScoreDetail::default(),
            },
            spec,
            embedding: Embedding {
                values: embedding.to_vec(),
                provider_id: "t".into(),
                flagged: false,
            },
        }
    }

    #[test]
    fn config_validation() {
        assert!(RecommendConfig::default().validate().is_ok());
        let bad = RecommendConfig {
            k: 0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::ZeroK));
        let bad = RecommendConfig {
            theta: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RecommendConfig {
            focus_attrs: Some(vec!["Salary".into(), "Bogus".into()]),
            ..Default::default()
        };
        assert_eq!(
            bad.validate_for(&employees()),
            Err(ConfigError::UnknownFocus(vec!["Bogus".into()]))
        );
        let parsed: RecommendConfig = serde_json::from_str(r#"{"k": 3, "theta": 0.3}"#).unwrap();
        assert_eq!(parsed.k, 3);
        assert_eq!(parsed.g_max, 3);
        assert!(serde_json::from_str::<RecommendConfig>(r#"{"kk": 3}"#).is_err());
    }

    #[test]
    fn enumeration_prunes_identifiers_and_respects_focus() {
        let d = employees();
        let profile = DatasetProfile::build(&d, &RuleBasedOracle);
        let config = RecommendConfig {
            g_max: 2,
            ..Default::default()
        };
        let specs = enumerate_candidates(&profile, &config, &BTreeSet::new());
        assert!(!specs.is_empty());
        assert!(specs.iter().all(|s| s.attributes().all(|a| a != "ID")));
        assert!(specs.iter().all(|s| s.groups().len() == 2));
        let salary_grid = canonicalize(AggFn::Avg, "Salary", &["Degree", "Department"]).unwrap();
        assert!(specs.contains(&salary_grid));

        let focus = RecommendConfig {
            focus_attrs: Some(vec!["Salary".into(), "Gender".into(), "Department".into()]),
            ..Default::default()
        };
        let specs = enumerate_candidates(&profile, &focus, &BTreeSet::new());
        assert!(!specs.is_empty());
        let allowed = ["Salary", "Gender", "Department"];
        assert!(specs.iter().all(|s| s.attributes().all(|a| allowed.contains(&a))));

        let explored: BTreeSet<PivotSpec> = [salary_grid.clone()].into();
        let specs = enumerate_candidates(&profile, &config, &explored);
        assert!(!specs.contains(&salary_grid));
    }

    #[test]
    fn greedy_at_zero_theta_is_top_k() {
        let drafts = vec![
            draft("A", 0.9, &[1.0, 0.0]),
            draft("B", 0.8, &[1.0, 0.0]),
            draft("C", 0.7, &[0.0, 1.0]),
        ];
        let s = greedy_select(&drafts, 2, 0.0);
        assert_eq!(s.indices, vec![0, 1]);
        assert!(!s.exhausted);
        let s = greedy_select(&drafts, 2, 0.3);
        assert_eq!(s.indices, vec![0, 2]);
        let s = greedy_select(&drafts, 3, 0.3);
        assert!(s.exhausted);
        assert_eq!(s.indices.len(), 2);
    }

    #[test]
    fn brute_force_skips_duplicate_top_pair() {
        let drafts = vec![
            draft("A", 0.9, &[1.0, 0.0, 0.0]),
            draft("B", 0.85, &[1.0, 0.0, 0.0]),
            draft("C", 0.5, &[0.0, 1.0, 0.0]),
            draft("D", 0.4, &[0.0, 0.0, 1.0]),
        ];
        let s = brute_force_select(&drafts, 2, 0.1).unwrap();
        assert_eq!(s.indices, vec![0, 2]);
        let all = brute_force_select(&drafts, 10, 0.0).unwrap();
        assert_eq!(all.indices.len(), 4);
        let many: Vec<Draft> = (0..21).map(|i| draft(&format!("X{i}"), 0.1, &[1.0])).collect();
        assert_eq!(
            brute_force_select(&many, 2, 0.0),
            Err(RecommendError::BruteForceTooLarge(21))
        );
    }

    #[test]
    fn session_excludes_served_specs() {
        let d = employees();
        let oracle = RuleBasedOracle;
        let profile = DatasetProfile::build(&d, &oracle);
        let embedder = BaselineEmbedder::default();
        let config = RecommendConfig {
            k: 3,
            theta: 0.1,
            g_max: 2,
            ..Default::default()
        };
        let mut session = Session::new("s", "d", config);
        let first = session.next_batch(&d, &profile, &oracle, &embedder).unwrap();
        assert_eq!(first.recommendations.len(), 3);
        assert!(first.diversity >= 0.1);
        let served = first.recommendations[0].spec.clone();
        session.apply_feedback(&served, Verdict::Accepted).unwrap();
        session.apply_feedback(&served, Verdict::Accepted).unwrap();
        assert_eq!(session.history().len(), 1);
        session.apply_feedback(&served, Verdict::Rejected).unwrap();
        assert_eq!(session.accepted(), vec![]);
        assert_eq!(session.rejected(), vec![served.clone()]);
        let second = session.next_batch(&d, &profile, &oracle, &embedder).unwrap();
        assert!(second.specs().all(|s| !first.specs().any(|f| f == s)));
        let never = canonicalize(AggFn::Count, "Age", &["Gender", "Degree", "Department"]).unwrap();
        assert!(matches!(
            session.apply_feedback(&never, Verdict::Accepted),
            Err(RecommendError::UnknownSpec(_))
        ));
    }

    #[test]
    fn pool_cap_is_enforced() {
        let d = employees();
        let profile = DatasetProfile::build(&d, &RuleBasedOracle);
        let config = RecommendConfig {
            pool_cap: Some(1),
            ..Default::default()
        };
        let err = recommend(
            &d,
            &profile,
            &config,
            &BTreeSet::new(),
            &RuleBasedOracle,
            &BaselineEmbedder::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RecommendError::PoolTooLarge { cap: 1, .. }));
    }
}
