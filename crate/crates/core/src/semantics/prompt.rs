//! Prompt templates for the remote oracle. Variant 0 is the primary wording;
//! variant 1 is the paraphrase used for the single retry.

use super::OracleQuery;

pub const PARAPHRASES: usize = 2;

const LIKERT_SCALE: &str = "In a five-point scale from very likely to very unlikely";

fn list(items: &[String]) -> String {
    items.join(", ")
}

pub fn render_prompt(query: &OracleQuery, variant: usize) -> String {
    let second = variant % PARAPHRASES == 1;
    match query {
        OracleQuery::Significance { attribute, data_type } => {
            if second {
                format!(
                    "Would a typical analyst find the attribute \"{attribute}\" \
                     (type {data_type:?}) meaningful to group or aggregate by? Reply yes or no."
                )
            } else {
                format!(
                    "Is \"{attribute}\" (type {data_type:?}) a significant attribute with \
                     respect to human interest when summarizing a dataset? Answer yes or no."
                )
            }
        }
        OracleQuery::AttributeNaming {
            index,
            current_name,
            sample,
            neighbors,
        } => {
            let shown = if current_name.is_empty() {
                "no name".to_string()
            } else {
                format!("the name \"{current_name}\"")
            };
            if second {
                format!(
                    "Column {index} has {shown}. Sample values: {}. Nearby columns: {}. \
                     Propose a short, descriptive column name. Reply with the name only.",
                    list(sample),
                    list(neighbors)
                )
            } else {
                format!(
                    "Suggest an appropriate name for a dataset attribute at position {index} \
                     currently given {shown}. Its values include: {}. Neighboring attributes: {}. \
                     Answer with the name only.",
                    list(sample),
                    list(neighbors)
                )
            }
        }
        OracleQuery::CorrelationUnlikelihood {
            aggregate,
            first,
            second: other,
            direction,
            across,
        } => {
            if second {
                format!(
                    "On a scale of very likely, likely, neutral, unlikely, very unlikely: \
                     would you expect the {aggregate} of {first} and of {other} to be {} \
                     correlated across {}?",
                    direction.adverb(),
                    list(across)
                )
            } else {
                format!(
                    "{LIKERT_SCALE}, how likely is it that the {aggregate} for {first} and {other} \
                     are {} correlated across {}?",
                    direction.adverb(),
                    list(across)
                )
            }
        }
        OracleQuery::RatioUnlikelihood {
            aggregate,
            larger,
            smaller,
            factor,
            across,
        } => {
            if second {
                format!(
                    "On a scale of very likely, likely, neutral, unlikely, very unlikely: \
                     would you expect the {aggregate} of {larger} to be at least {factor}x that of \
                     {smaller} for every one of {}?",
                    list(across)
                )
            } else {
                format!(
                    "{LIKERT_SCALE}, how likely is it that the {aggregate} for {larger} is at least \
                     {factor} times the {aggregate} for {smaller} across {}?",
                    list(across)
                )
            }
        }
        OracleQuery::OutlierUnlikelihood {
            aggregate,
            group,
            header,
            value,
            within,
        } => {
            if second {
                format!(
                    "On a scale of very likely, likely, neutral, unlikely, very unlikely: would \
                     you expect the {aggregate} for {group} at {header} to be {value}, standing out \
                     from {}?",
                    list(within)
                )
            } else {
                format!(
                    "{LIKERT_SCALE}, how likely is it that the {aggregate} for {group} and {header} \
                     is {value}, an outlier compared with {}?",
                    list(within)
                )
            }
        }
        OracleQuery::AggregateRanking { attribute, data_type } => {
            if second {
                format!(
                    "Order the functions COUNT, SUM, AVG, MIN, MAX from most to least meaningful \
                     for summarizing \"{attribute}\" (type {data_type:?}). Reply with the five \
                     names in order, comma separated."
                )
            } else {
                format!(
                    "Rank the aggregate functions COUNT, SUM, AVG, MIN, MAX by how meaningful \
                     they are when applied to the attribute \"{attribute}\" (type {data_type:?}). \
                     Answer with a comma-separated list, best first."
                )
            }
        }
    }
}
