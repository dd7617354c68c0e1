use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{OracleQuery, OracleResponse, SemanticOracle};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cache line {line}: query_hash does not match its context")]
    HashMismatch { line: usize },
}

/// One line of the cache file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    #[serde(default)]
    pub query_hash: String,
    pub kind: String,
    pub context: Value,
    pub response: OracleResponse,
}

impl CacheEntry {
    pub fn new(query: &OracleQuery, response: &OracleResponse) -> Self {
        let mut context = serde_json::to_value(query).expect("queries serialize");
        if let Value::Object(map) = &mut context {
            map.remove("kind");
        }
        let mut response = response.clone();
        response.cached = false;
        Self {
            query_hash: query_hash(query),
            kind: query.kind().to_string(),
            context,
            response,
        }
    }

    pub fn query(&self) -> Result<OracleQuery, serde_json::Error> {
        let mut value = self.context.clone();
        if let Value::Object(map) = &mut value {
            map.insert("kind".into(), Value::String(self.kind.clone()));
        }
        serde_json::from_value(value)
    }
}

/// Content address of a query: SHA-256 over its canonical JSON form.
pub fn query_hash(query: &OracleQuery) -> String {
    let canonical = serde_json::to_vec(query).expect("queries serialize");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheMode {
    /// Load existing entries and append every new answer.
    Record,
    /// Load entries; new answers stay in memory only.
    Replay,
}

/// Memoizing wrapper. Identical queries always get identical answers within
/// a run, and a recorded file replays a session deterministically.
pub struct CachingOracle<O> {
    inner: O,
    entries: RwLock<HashMap<String, OracleResponse>>,
    sink: Option<Mutex<File>>,
}

impl<O: SemanticOracle> CachingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            entries: RwLock::new(HashMap::new()),
            sink: None,
        }
    }

    pub fn with_file(inner: O, path: &Path, mode: CacheMode) -> Result<Self, CacheError> {
        let mut oracle = Self::new(inner);
        if path.exists() {
            oracle.load(path)?;
        }
        if mode == CacheMode::Record {
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            oracle.sink = Some(Mutex::new(file));
        }
        Ok(oracle)
    }

    fn load(&mut self, path: &Path) -> Result<(), CacheError> {
        let reader = BufReader::new(File::open(path)?);
        let entries = self.entries.get_mut().expect("cache lock poisoned");
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |e: serde_json::Error| CacheError::Malformed {
                line: i + 1,
                message: e.to_string(),
            };
            let entry: CacheEntry = serde_json::from_str(&line).map_err(malformed)?;
            let query = entry.query().map_err(malformed)?;
            let hash = query_hash(&query);
            if !entry.query_hash.is_empty() && entry.query_hash != hash {
                return Err(CacheError::HashMismatch { line: i + 1 });
            }
            entries.insert(hash, entry.response);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: SemanticOracle> SemanticOracle for CachingOracle<O> {
    fn ask(&self, query: &OracleQuery) -> OracleResponse {
        let hash = query_hash(query);
        if let Some(hit) = self.entries.read().expect("cache lock poisoned").get(&hash) {
            let mut hit = hit.clone();
            hit.cached = true;
            return hit;
        }
        let response = self.inner.ask(query);
        let mut entries = self.entries.write().expect("cache lock poisoned");
        if let Some(raced) = entries.get(&hash) {
            let mut raced = raced.clone();
            raced.cached = true;
            return raced;
        }
        entries.insert(hash, response.clone());
        if let Some(sink) = &self.sink {
            let line =
                serde_json::to_string(&CacheEntry::new(query, &response)).expect("cache entries serialize");
            let mut file = sink.lock().expect("cache sink poisoned");
            // A failed append only loses persistence; the in-memory answer stands.
            let _ = writeln!(file, "{line}");
        }
        response
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DataType;
    use crate::semantics::{Direction, Likert, Payload, Provider, RuleBasedOracle};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl SemanticOracle for Counting {
        fn ask(&self, query: &OracleQuery) -> OracleResponse {
            self.0.fetch_add(1, Ordering::SeqCst);
            RuleBasedOracle.ask(query)
        }
    }

    fn corr() -> OracleQuery {
        OracleQuery::CorrelationUnlikelihood {
            aggregate: "Average Salary".into(),
            first: "BS".into(),
            second: "PhD".into(),
            direction: Direction::Positive,
            across: vec!["IT".into(), "Sales".into()],
        }
    }

    #[test]
    fn memoizes_identical_queries() {
        let oracle = CachingOracle::new(Counting(AtomicUsize::new(0)));
        let a = oracle.ask(&corr());
        let b = oracle.ask(&corr());
        assert!(!a.cached);
        assert!(b.cached);
        assert_eq!(a.payload, b.payload);
        assert_eq!(oracle.inner().0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oracle.jsonl");
        {
            let rec = CachingOracle::with_file(RuleBasedOracle, &path, CacheMode::Record).unwrap();
            rec.ask(&corr());
            rec.ask(&OracleQuery::Significance {
                attribute: "ID".into(),
                data_type: DataType::IdentifierLike,
            });
            rec.ask(&corr());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let line: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(line["kind"], "correlation_unlikelihood");
        assert_eq!(line["context"]["first"], "BS");
        assert!(line["query_hash"].as_str().unwrap().len() == 64);

        let replay =
            CachingOracle::with_file(Counting(AtomicUsize::new(0)), &path, CacheMode::Replay).unwrap();
        assert_eq!(replay.len(), 2);
        let r = replay.ask(&corr());
        assert!(r.cached);
        assert_eq!(r.payload, Payload::Likert(Likert::Neutral));
        assert_eq!(replay.inner().0.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn replayed_fixture_overrides_inner_provider() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        let recorded = OracleResponse {
            payload: Payload::Likert(Likert::VeryUnlikely),
            provider: Provider::Remote,
            cached: false,
            flagged: false,
        };
        let mut entry = CacheEntry::new(&corr(), &recorded);
        entry.query_hash.clear();
        std::fs::write(&path, serde_json::to_string(&entry).unwrap() + "\n").unwrap();
        let oracle = CachingOracle::with_file(RuleBasedOracle, &path, CacheMode::Replay).unwrap();
        let r = oracle.ask(&corr());
        assert_eq!(r.payload, Payload::Likert(Likert::VeryUnlikely));
        assert_eq!(r.provider, Provider::Remote);
    }

    #[test]
    fn rejects_tampered_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut entry = CacheEntry::new(&corr(), &RuleBasedOracle.ask(&corr()));
        entry.query_hash = "0".repeat(64);
        std::fs::write(&path, serde_json::to_string(&entry).unwrap()).unwrap();
        assert!(matches!(
            CachingOracle::with_file(RuleBasedOracle, &path, CacheMode::Replay),
            Err(CacheError::HashMismatch { line: 1 })
        ));
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            CachingOracle::with_file(RuleBasedOracle, &path, CacheMode::Replay),
            Err(CacheError::Malformed { .. })
        ));
    }
}
