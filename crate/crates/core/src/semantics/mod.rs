//! Semantic oracle: every judgment that needs world knowledge (attribute
//! significance, naming, rarity of trends and outliers, sensible aggregate
//! functions) goes through [`SemanticOracle`].
//!
//! Three implementations are provided: [`RuleBasedOracle`] (offline and
//! deterministic), [`RemoteOracle`] (HTTP chat-style endpoint) and
//! [`CachingOracle`] which wraps either and persists answers as JSON lines.

mod cache;
mod prompt;
mod remote;
mod rule_based;

use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeMeta, DataType, Dataset};
use crate::pivot::AggFn;

pub use cache::{CacheEntry, CacheError, CacheMode, CachingOracle};
pub use prompt::render_prompt;
pub use remote::{RemoteConfig, RemoteOracle};
pub use rule_based::RuleBasedOracle;

/// Five-point likelihood scale. Values map inversely: the less likely a
/// pattern, the more it is worth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likert {
    VeryLikely,
    Likely,
    Neutral,
    Unlikely,
    VeryUnlikely,
}

impl Likert {
    pub const ALL: [Likert; 5] = [
        Likert::VeryLikely,
        Likert::Likely,
        Likert::Neutral,
        Likert::Unlikely,
        Likert::VeryUnlikely,
    ];

    pub fn value(self) -> f64 {
        match self {
            Likert::VeryLikely => 0.2,
            Likert::Likely => 0.4,
            Likert::Neutral => 0.6,
            Likert::Unlikely => 0.8,
            Likert::VeryUnlikely => 1.0,
        }
    }

    pub fn phrase(self) -> &'static str {
        match self {
            Likert::VeryLikely => "very likely",
            Likert::Likely => "likely",
            Likert::Neutral => "neutral",
            Likert::Unlikely => "unlikely",
            Likert::VeryUnlikely => "very unlikely",
        }
    }

    /// Finds the first Likert phrase in free text, longest phrases first so
    /// that "very unlikely" is not read as "likely".
    pub fn parse(text: &str) -> Option<Likert> {
        let lower = text.to_lowercase().replace(['_', '-'], " ");
        [
            Likert::VeryUnlikely,
            Likert::VeryLikely,
            Likert::Unlikely,
            Likert::Likely,
            Likert::Neutral,
        ]
        .into_iter()
        .map(|l| (lower.find(l.phrase()), l))
        .filter_map(|(pos, l)| pos.map(|p| (p, l)))
        // Earliest mention wins; at equal offsets the longer phrase came first above.
        .min_by_key(|(p, _)| *p)
        .map(|(_, l)| l)
    }
}

pub fn likert_value(level: Likert) -> f64 {
    level.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn adverb(self) -> &'static str {
        match self {
            Direction::Positive => "positively",
            Direction::Negative => "negatively",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlikelihoodKind {
    Correlation,
    Ratio,
    Outlier,
}

/// A question for the oracle. Each variant carries exactly the context its
/// kind requires.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleQuery {
    Significance {
        attribute: String,
        data_type: DataType,
    },
    AttributeNaming {
        index: usize,
        current_name: String,
        sample: Vec<String>,
        neighbors: Vec<String>,
    },
    CorrelationUnlikelihood {
        aggregate: String,
        first: String,
        second: String,
        direction: Direction,
        across: Vec<String>,
    },
    RatioUnlikelihood {
        aggregate: String,
        larger: String,
        smaller: String,
        factor: f64,
        across: Vec<String>,
    },
    OutlierUnlikelihood {
        aggregate: String,
        group: String,
        header: String,
        value: f64,
        within: Vec<String>,
    },
    AggregateRanking {
        attribute: String,
        data_type: DataType,
    },
}

impl OracleQuery {
    pub fn kind(&self) -> &'static str {
        match self {
            OracleQuery::Significance { .. } => "significance",
            OracleQuery::AttributeNaming { .. } => "attribute_naming",
            OracleQuery::CorrelationUnlikelihood { .. } => "correlation_unlikelihood",
            OracleQuery::RatioUnlikelihood { .. } => "ratio_unlikelihood",
            OracleQuery::OutlierUnlikelihood { .. } => "outlier_unlikelihood",
            OracleQuery::AggregateRanking { .. } => "aggregate_ranking",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Score(f64),
    Name(String),
    Likert(Likert),
    Ranking(Vec<AggFn>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    RuleBased,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub payload: Payload,
    pub provider: Provider,
    #[serde(default)]
    pub cached: bool,
    /// Set when the answer is a fallback or a repaired reply.
    #[serde(default)]
    pub flagged: bool,
}

impl OracleResponse {
    pub fn rule_based(payload: Payload) -> Self {
        Self {
            payload,
            provider: Provider::RuleBased,
            cached: false,
            flagged: false,
        }
    }
}

pub trait SemanticOracle: Send + Sync {
    fn ask(&self, query: &OracleQuery) -> OracleResponse;
}

impl<T: SemanticOracle + ?Sized> SemanticOracle for std::sync::Arc<T> {
    fn ask(&self, query: &OracleQuery) -> OracleResponse {
        (**self).ask(query)
    }
}

impl<T: SemanticOracle + ?Sized> SemanticOracle for &T {
    fn ask(&self, query: &OracleQuery) -> OracleResponse {
        (**self).ask(query)
    }
}

/// Probability in `[0, 1]` that an attribute is worth analysing.
pub fn significance(oracle: &dyn SemanticOracle, attr: &AttributeMeta) -> f64 {
    let query = OracleQuery::Significance {
        attribute: attr.resolved_name.clone(),
        data_type: attr.data_type,
    };
    match oracle.ask(&query).payload {
        Payload::Score(s) if s.is_finite() => s.clamp(0.0, 1.0),
        _ => match RuleBasedOracle.ask(&query).payload {
            Payload::Score(s) => s,
            _ => unreachable!("rule-based significance is a score"),
        },
    }
}

/// Suggests a display name for the column at `index`, passing meaningful
/// names through untouched.
pub fn suggest_attribute_name(
    oracle: &dyn SemanticOracle,
    index: usize,
    current_name: &str,
    sample: &[String],
    neighbors: &[String],
) -> String {
    if !rule_based::is_cryptic_name(current_name) {
        return current_name.to_string();
    }
    let query = OracleQuery::AttributeNaming {
        index,
        current_name: current_name.to_string(),
        sample: sample.to_vec(),
        neighbors: neighbors.to_vec(),
    };
    match oracle.ask(&query).payload {
        Payload::Name(n) if !sanitize_name(&n).is_empty() => sanitize_name(&n),
        _ => format!("column_{index}"),
    }
}

/// Reduces free text to an identifier-safe name: alphanumerics joined by `_`.
pub fn sanitize_name(raw: &str) -> String {
    let first_line = raw.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    first_line
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Fills in `resolved_name` for cryptic or missing attribute names.
pub fn resolve_attribute_names(dataset: &mut Dataset, oracle: &dyn SemanticOracle) {
    const SAMPLE: usize = 8;
    let names: Vec<String> = dataset.attributes().iter().map(|a| a.name.clone()).collect();
    for (i, name) in names.iter().enumerate() {
        if !rule_based::is_cryptic_name(name) {
            continue;
        }
        let sample: Vec<String> = dataset
            .column_at(i)
            .raw()
            .iter()
            .flatten()
            .take(SAMPLE)
            .cloned()
            .collect();
        if sample.is_empty() {
            continue;
        }
        let neighbors: Vec<String> = names
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i && (*j + 2 >= i && *j <= i + 2))
            .map(|(_, n)| n.clone())
            .collect();
        let resolved = suggest_attribute_name(oracle, i, name, &sample, &neighbors);
        dataset.set_resolved_name(i, resolved);
    }
}

/// Asks how unlikely a statistical pattern is. Rule-based answers are neutral.
pub fn assess_unlikelihood(oracle: &dyn SemanticOracle, query: &OracleQuery) -> Likert {
    debug_assert!(matches!(
        query,
        OracleQuery::CorrelationUnlikelihood { .. }
            | OracleQuery::RatioUnlikelihood { .. }
            | OracleQuery::OutlierUnlikelihood { .. }
    ));
    match oracle.ask(query).payload {
        Payload::Likert(l) => l,
        _ => Likert::Neutral,
    }
}

/// Oracle ranking of aggregate functions for one attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateRanking {
    pub order: Vec<AggFn>,
    pub repaired: bool,
}

impl AggregateRanking {
    /// Builds a full permutation from a possibly partial ordering, appending
    /// missing functions in canonical order.
    pub fn repair(order: &[AggFn]) -> Self {
        let mut seen = Vec::with_capacity(5);
        for f in order {
            if !seen.contains(f) {
                seen.push(*f);
            }
        }
        let repaired = seen.len() != 5 || seen.len() != order.len();
        for f in AggFn::ALL {
            if !seen.contains(&f) {
                seen.push(f);
            }
        }
        Self {
            order: seen,
            repaired,
        }
    }

    /// 1.0 for the best function, 0.8 for the next, down to 0.2.
    pub fn pr_agg(&self, func: AggFn) -> f64 {
        let rank = self.order.iter().position(|f| *f == func).unwrap_or(4);
        [1.0, 0.8, 0.6, 0.4, 0.2][rank]
    }
}

pub fn rank_aggregate_functions(oracle: &dyn SemanticOracle, attr: &AttributeMeta) -> AggregateRanking {
    let query = OracleQuery::AggregateRanking {
        attribute: attr.resolved_name.clone(),
        data_type: attr.data_type,
    };
    let response = oracle.ask(&query);
    let order = match response.payload {
        Payload::Ranking(order) => order,
        _ => rule_based::default_ranking(attr.data_type),
    };
    let mut ranking = AggregateRanking::repair(&order);
    ranking.repaired |= response.flagged;
    ranking
}
