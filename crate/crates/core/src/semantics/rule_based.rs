use crate::dataset::{name_tokens, DataType};
use crate::pivot::AggFn;

use super::{Likert, OracleQuery, OracleResponse, Payload, SemanticOracle};

const DENY_TOKENS: &[&str] = &["id", "uuid", "name", "phone", "email", "ssn"];

/// Offline oracle: deny-list significance, type-driven aggregate rankings,
/// neutral rarity for every trend and outlier.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleBasedOracle;

impl SemanticOracle for RuleBasedOracle {
    fn ask(&self, query: &OracleQuery) -> OracleResponse {
        let payload = match query {
            OracleQuery::Significance { attribute, data_type } => {
                let denied = *data_type == DataType::IdentifierLike
                    || name_tokens(attribute)
                        .iter()
                        .any(|t| DENY_TOKENS.contains(&t.as_str()));
                Payload::Score(if denied { 0.0 } else { 1.0 })
            }
            OracleQuery::AttributeNaming {
                index, current_name, ..
            } => {
                if is_cryptic_name(current_name) {
                    Payload::Name(format!("column_{index}"))
                } else {
                    Payload::Name(current_name.clone())
                }
            }
            OracleQuery::CorrelationUnlikelihood { .. }
            | OracleQuery::RatioUnlikelihood { .. }
            | OracleQuery::OutlierUnlikelihood { .. } => Payload::Likert(Likert::Neutral),
            OracleQuery::AggregateRanking { data_type, .. } => Payload::Ranking(default_ranking(*data_type)),
        };
        OracleResponse::rule_based(payload)
    }
}

pub(crate) fn default_ranking(data_type: DataType) -> Vec<AggFn> {
    use AggFn::*;
    match data_type {
        DataType::Numeric => vec![Avg, Sum, Max, Min, Count],
        DataType::IdentifierLike => vec![Count, Max, Min, Avg, Sum],
        DataType::Text | DataType::Temporal => vec![Count, Max, Min, Avg, Sum],
    }
}

/// Empty, placeholder (`column_3`, `Unnamed: 2`, `col 7`) or purely numeric names.
pub(crate) fn is_cryptic_name(name: &str) -> bool {
    let tokens = name_tokens(name);
    if tokens.is_empty() {
        return true;
    }
    let placeholder = ["column", "col", "unnamed", "field", "var", "attr"];
    tokens
        .iter()
        .all(|t| t.chars().all(|c| c.is_ascii_digit()) || placeholder.contains(&t.as_str()))
}
