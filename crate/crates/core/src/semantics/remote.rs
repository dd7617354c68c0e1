use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::http::JsonClient;
use crate::pivot::AggFn;

use super::prompt::{render_prompt, PARAPHRASES};
use super::{
    sanitize_name, AggregateRanking, Likert, OracleQuery, OracleResponse, Payload, Provider, RuleBasedOracle,
    SemanticOracle,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_in_flight() -> usize {
    4
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_in_flight(),
        }
    }
}

#[derive(Serialize)]
struct PromptRequest<'a> {
    prompt: &'a str,
    kind: &'a str,
}

#[derive(Deserialize)]
struct PromptReply {
    text: String,
}

/// Oracle backed by a chat-completion style endpoint speaking
/// `{"prompt", "kind"}` → `{"text"}`.
///
/// A malformed reply is retried once with a paraphrased prompt. Transport
/// failures and a second malformed reply fall back to the rule-based answer,
/// with the response flagged.
#[derive(Debug)]
pub struct RemoteOracle {
    client: JsonClient,
}

impl RemoteOracle {
    pub fn new(config: &RemoteConfig) -> Self {
        Self {
            client: JsonClient::new(
                &config.endpoint,
                config.token.clone(),
                Duration::from_millis(config.timeout_ms),
                config.max_in_flight,
            ),
        }
    }

    fn fallback(query: &OracleQuery) -> OracleResponse {
        let mut response = RuleBasedOracle.ask(query);
        response.flagged = true;
        response
    }
}

impl SemanticOracle for RemoteOracle {
    fn ask(&self, query: &OracleQuery) -> OracleResponse {
        for variant in 0..PARAPHRASES {
            let prompt = render_prompt(query, variant);
            let request = PromptRequest {
                prompt: &prompt,
                kind: query.kind(),
            };
            let reply: PromptReply = match self.client.post(&request) {
                Ok(reply) => reply,
                Err(_) => return Self::fallback(query),
            };
            if let Some((payload, repaired)) = parse_reply(query, &reply.text) {
                return OracleResponse {
                    payload,
                    provider: Provider::Remote,
                    cached: false,
                    flagged: repaired,
                };
            }
        }
        Self::fallback(query)
    }
}

/// Interprets reply text for the query's kind. The flag reports a repaired
/// (non-permutation) ranking.
pub(crate) fn parse_reply(query: &OracleQuery, text: &str) -> Option<(Payload, bool)> {
    match query {
        OracleQuery::Significance { .. } => {
            let lower = text.trim().to_lowercase();
            let first = lower
                .split(|c: char| !c.is_alphanumeric() && c != '.')
                .map(|w| w.trim_end_matches('.'))
                .find(|w| !w.is_empty())?;
            match first {
                "yes" | "y" | "true" => Some((Payload::Score(1.0), false)),
                "no" | "n" | "false" => Some((Payload::Score(0.0), false)),
                other => other
                    .parse::<f64>()
                    .ok()
                    .filter(|v| (0.0..=1.0).contains(v))
                    .map(|v| (Payload::Score(v), false)),
            }
        }
        OracleQuery::AttributeNaming { .. } => {
            let name = sanitize_name(text);
            (!name.is_empty()).then_some((Payload::Name(name), false))
        }
        OracleQuery::CorrelationUnlikelihood { .. }
        | OracleQuery::RatioUnlikelihood { .. }
        | OracleQuery::OutlierUnlikelihood { .. } => Likert::parse(text).map(|l| (Payload::Likert(l), false)),
        OracleQuery::AggregateRanking { .. } => {
            let named: Vec<AggFn> = text
                .split(|c: char| !c.is_ascii_alphabetic())
                .filter_map(AggFn::parse)
                .collect();
            if named.is_empty() {
                return None;
            }
            let ranking = AggregateRanking::repair(&named);
            Some((Payload::Ranking(ranking.order), ranking.repaired))
        }
    }
}
