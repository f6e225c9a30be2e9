//! Subset scoring for the retrieval market.
//!
//! A score oracle maps a set of document ids to a quality score in `[0, 10]`.
//! The table-backed oracle reads scores from a CSV file; the remote oracle
//! posts the subset to an HTTP judge.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};

pub const MAX_SCORE: f64 = 10.0;

/// Canonical key for a subset: ids sorted and joined with `+`.
///
/// ```
/// use datamarket::markets::subset_key;
/// assert_eq!(subset_key(&["d3", "d1"]), "d1+d3");
/// assert_eq!(subset_key::<&str>(&[]), "");
/// ```
pub fn subset_key<S: AsRef<str>>(ids: &[S]) -> String {
    let mut ids: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    ids.join("+")
}

fn check_score(key: &str, score: f64) -> Result<f64> {
    if (0.0..=MAX_SCORE).contains(&score) {
        Ok(score)
    } else {
        Err(MarketError::invalid(format!(
            "score {score} for subset `{key}` is outside [0, {MAX_SCORE}]"
        )))
    }
}

/// Scores keyed by canonical subset key; the empty key is the no-context baseline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreTable {
    entries: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct TableRow {
    subset: String,
    score: f64,
}

impl ScoreTable {
    /// Build from `(subset key, score)` pairs. Keys are re-canonicalized.
    pub fn new<I, K>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, f64)>,
        K: AsRef<str>,
    {
        let mut table = BTreeMap::new();
        let mut problems = Vec::new();
        for (key, score) in entries {
            let ids: Vec<&str> = key.as_ref().split('+').filter(|s| !s.is_empty()).collect();
            let key = subset_key(&ids);
            if let Err(e) = check_score(&key, score) {
                problems.push(e.to_string());
            }
            if table.insert(key.clone(), score).is_some() {
                problems.push(format!("duplicate entry for subset `{key}`"));
            }
        }
        if problems.is_empty() {
            Ok(ScoreTable { entries: table })
        } else {
            Err(MarketError::Invalid(problems))
        }
    }

    /// Read a `subset,score` CSV.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = csv.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["subset", "score"] {
            return Err(MarketError::invalid(format!(
                "score table header must be `subset,score`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = csv
            .deserialize::<TableRow>()
            .map(|row| row.map(|r| (r.subset, r.score)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["subset", "score"])?;
        for (key, score) in &self.entries {
            writer.write_record([key.as_str(), &score.to_string()])?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| MarketError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.get(key).copied()
    }

    /// All entries as `(ids, score)`, in key order.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<&str>, f64)> {
        self.entries
            .iter()
            .map(|(k, &s)| (k.split('+').filter(|x| !x.is_empty()).collect(), s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Serialize)]
struct JudgeRequest<'a> {
    query: &'a str,
    documents: Vec<&'a str>,
}

#[derive(Deserialize)]
struct JudgeResponse {
    score: f64,
}

/// HTTP judge: `POST {endpoint}/score` with `{"query", "documents"}`.
///
/// Responses are cached per subset so repeated queries are deterministic.
pub struct RemoteJudge {
    endpoint: String,
    query: String,
    agent: ureq::Agent,
    retries: usize,
    cache: Mutex<HashMap<String, f64>>,
}

impl std::fmt::Debug for RemoteJudge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteJudge")
            .field("endpoint", &self.endpoint)
            .field("query", &self.query)
            .field("retries", &self.retries)
            .finish()
    }
}

impl RemoteJudge {
    pub const TIMEOUT: Duration = Duration::from_secs(30);
    pub const RETRIES: usize = 2;

    pub fn new(endpoint: impl Into<String>, query: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Self::TIMEOUT))
            .build()
            .into();
        RemoteJudge {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            query: query.into(),
            agent,
            retries: Self::RETRIES,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Endpoint taken from `JUDGE_ENDPOINT`.
    pub fn from_env(query: impl Into<String>) -> Result<Self> {
        let endpoint = std::env::var("JUDGE_ENDPOINT")
            .map_err(|_| MarketError::invalid("remote oracle requires JUDGE_ENDPOINT to be set"))?;
        Ok(Self::new(endpoint, query))
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    fn request(&self, documents: &[&str]) -> std::result::Result<f64, String> {
        let body = JudgeRequest {
            query: &self.query,
            documents: documents.to_vec(),
        };
        let mut response = self
            .agent
            .post(format!("{}/score", self.endpoint))
            .send_json(&body)
            .map_err(|e| e.to_string())?;
        let parsed: JudgeResponse = response.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(parsed.score)
    }

    pub fn score(&self, ids: &[&str]) -> Result<f64> {
        let key = subset_key(ids);
        if let Some(&s) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(s);
        }
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            match self.request(&sorted) {
                Ok(score) => {
                    let score = check_score(&key, score)?;
                    self.cache
                        .lock()
                        .expect("cache poisoned")
                        .insert(key, score);
                    return Ok(score);
                }
                Err(e) => {
                    log::debug!("judge attempt {} for `{key}` failed: {e}", attempt + 1);
                    last_error = e;
                }
            }
        }
        Err(MarketError::Transport {
            attempts: self.retries + 1,
            message: last_error,
        })
    }
}

/// Source of subset scores.
#[derive(Debug)]
pub enum ScoreOracle {
    Table(ScoreTable),
    Remote(RemoteJudge),
}

impl ScoreOracle {
    /// Score of a subset of document ids; the empty subset is the baseline (0 if untabulated).
    pub fn score_subset(&self, ids: &[&str]) -> Result<f64> {
        match self {
            ScoreOracle::Table(table) => {
                let key = subset_key(ids);
                match table.get(&key) {
                    Some(s) => Ok(s),
                    None if ids.is_empty() => Ok(0.0),
                    None => Err(MarketError::MissingScore(key)),
                }
            }
            ScoreOracle::Remote(judge) => judge.score(ids),
        }
    }

    pub fn table(&self) -> Option<&ScoreTable> {
        match self {
            ScoreOracle::Table(t) => Some(t),
            ScoreOracle::Remote(_) => None,
        }
    }
}

/// Free-function form of [`ScoreOracle::score_subset`].
pub fn score_subset(oracle: &ScoreOracle, ids: &[&str]) -> Result<f64> {
    oracle.score_subset(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_three() -> ScoreOracle {
        ScoreOracle::Table(
            ScoreTable::new([("doc1+doc2", 0.9), ("doc2+doc3", 0.7), ("doc1+doc3", 0.8)]).unwrap(),
        )
    }

    #[test]
    fn pair_lookup_ignores_order() {
        let o = example_three();
        assert_eq!(o.score_subset(&["doc3", "doc1"]).unwrap(), 0.8);
    }

    #[test]
    fn empty_subset_defaults_to_zero() {
        assert_eq!(example_three().score_subset(&[]).unwrap(), 0.0);
        let with_base = ScoreOracle::Table(ScoreTable::new([("", 2.5)]).unwrap());
        assert_eq!(with_base.score_subset(&[]).unwrap(), 2.5);
    }

    #[test]
    fn missing_entry_names_subset() {
        match example_three().score_subset(&["doc2", "doc1", "doc3"]) {
            Err(MarketError::MissingScore(k)) => assert_eq!(k, "doc1+doc2+doc3"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let csv = "subset,score\nd1,0.9\nd2,0.7\n,0\n";
        let table = ScoreTable::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(table.get("d1"), Some(0.9));
        assert_eq!(table.get(""), Some(0.0));
        let again = ScoreTable::from_csv_reader(table.to_csv_string().unwrap().as_bytes()).unwrap();
        assert_eq!(table, again);
    }

    #[test]
    fn csv_rejects_out_of_range_and_bad_header() {
        assert!(ScoreTable::from_csv_reader("subset,score\nd1,11\n".as_bytes()).is_err());
        assert!(ScoreTable::from_csv_reader("docs,value\nd1,1\n".as_bytes()).is_err());
        assert!(ScoreTable::from_csv_reader("subset,score\nd1,1\nd1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn unreachable_judge_reports_attempts() {
        let judge = RemoteJudge::new("http://127.0.0.1:9", "q");
        match judge.score(&["d1"]) {
            Err(MarketError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
    }
}
