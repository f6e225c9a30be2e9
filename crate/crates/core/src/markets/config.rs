//! JSON market files.
//!
//! A market file is an object with a `family` discriminator
//! (`mean_estimation`, `data_mixture` or `retrieval`) and that family's fields
//! in snake case. Retrieval markets carry an `oracle` object whose `kind` is
//! `table` (inline `entries`, or a `path` to a `subset,score` CSV resolved
//! against the market file's directory) or `remote` (`endpoint`, falling back
//! to `JUDGE_ENDPOINT`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data_mixture::DataMixtureMarket;
use super::mean_estimation::MeanEstimationMarket;
use super::oracle::{RemoteJudge, ScoreOracle, ScoreTable};
use super::retrieval::{RetrievalMarket, RetrievalSpec, Valuation};
use super::MarketInstance;
use crate::error::{MarketError, Result};
use crate::model::{CostVector, Market};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    Table {
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        entries: BTreeMap<String, f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
    Remote {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    pub corpus_size: usize,
    /// Defaults to `d1..ds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document_ids: Option<Vec<String>>,
    pub relevance: Vec<f64>,
    pub pool_size: usize,
    pub budget: usize,
    pub true_costs: CostVector,
    #[serde(default)]
    pub valuation: Valuation,
    #[serde(default)]
    pub query: String,
    pub oracle: OracleConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketConfig {
    MeanEstimation {
        buyer_means: Vec<Vec<f64>>,
        seller_means: Vec<Vec<f64>>,
        seller_variances: Vec<f64>,
        true_costs: CostVector,
    },
    DataMixture {
        loss_floor: f64,
        loss_scale: f64,
        effect_vector: Vec<f64>,
        true_costs: CostVector,
    },
    Retrieval(RetrievalConfig),
}

impl MarketConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Read a market file; relative table paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_json(&text)?, base))
    }

    /// Validate and build the market.
    pub fn build(&self, base_dir: &Path) -> Result<MarketInstance> {
        Ok(match self.clone() {
            MarketConfig::MeanEstimation {
                buyer_means,
                seller_means,
                seller_variances,
                true_costs,
            } => MarketInstance::MeanEstimation(MeanEstimationMarket::new(
                buyer_means,
                seller_means,
                seller_variances,
                true_costs,
            )?),
            MarketConfig::DataMixture {
                loss_floor,
                loss_scale,
                effect_vector,
                true_costs,
            } => MarketInstance::DataMixture(DataMixtureMarket::new(
                loss_floor,
                loss_scale,
                effect_vector,
                true_costs,
            )?),
            MarketConfig::Retrieval(cfg) => {
                let ids = cfg
                    .document_ids
                    .unwrap_or_else(|| (1..=cfg.corpus_size).map(|i| format!("d{i}")).collect());
                if ids.len() != cfg.corpus_size {
                    return Err(MarketError::invalid(format!(
                        "corpus_size is {} but {} document ids are given",
                        cfg.corpus_size,
                        ids.len()
                    )));
                }
                let oracle = match cfg.oracle {
                    OracleConfig::Table { entries, path } => match (entries.is_empty(), path) {
                        (_, Some(p)) if !entries.is_empty() => {
                            return Err(MarketError::invalid(format!(
                                "table oracle has both inline entries and path {}",
                                p.display()
                            )))
                        }
                        (_, Some(p)) => {
                            ScoreOracle::Table(ScoreTable::from_csv_path(base_dir.join(p))?)
                        }
                        (_, None) => ScoreOracle::Table(ScoreTable::new(entries)?),
                    },
                    OracleConfig::Remote { endpoint } => ScoreOracle::Remote(match endpoint {
                        Some(e) => RemoteJudge::new(e, cfg.query.clone()),
                        None => RemoteJudge::from_env(cfg.query.clone())?,
                    }),
                };
                MarketInstance::Retrieval(RetrievalMarket::new(
                    RetrievalSpec {
                        document_ids: ids,
                        relevance: cfg.relevance,
                        pool_size: cfg.pool_size,
                        budget: cfg.budget,
                        true_costs: cfg.true_costs,
                        valuation: cfg.valuation,
                        query: cfg.query,
                    },
                    oracle,
                )?)
            }
        })
    }

    /// Config describing an existing market; table oracles are written inline.
    pub fn describe(market: &MarketInstance) -> Self {
        match market {
            MarketInstance::MeanEstimation(m) => MarketConfig::MeanEstimation {
                buyer_means: m.buyer_means().to_vec(),
                seller_means: m.seller_means().to_vec(),
                seller_variances: m.seller_variances().to_vec(),
                true_costs: m.true_costs().clone(),
            },
            MarketInstance::DataMixture(m) => MarketConfig::DataMixture {
                loss_floor: m.loss_floor(),
                loss_scale: m.loss_scale(),
                effect_vector: m.effect_vector().to_vec(),
                true_costs: m.true_costs().clone(),
            },
            MarketInstance::Retrieval(m) => MarketConfig::Retrieval(RetrievalConfig {
                corpus_size: m.corpus_size(),
                document_ids: Some(m.document_ids().to_vec()),
                relevance: m.relevance().to_vec(),
                pool_size: m.pool_size(),
                budget: m.budget(),
                true_costs: m.true_costs().clone(),
                valuation: m.valuation(),
                query: m.query().to_string(),
                oracle: match m.oracle() {
                    ScoreOracle::Table(t) => OracleConfig::Table {
                        entries: t.entries().map(|(ids, s)| (ids.join("+"), s)).collect(),
                        path: None,
                    },
                    ScoreOracle::Remote(j) => OracleConfig::Remote {
                        endpoint: Some(j.endpoint().to_string()),
                    },
                },
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
      "family": "retrieval",
      "corpus_size": 2,
      "relevance": [0.9, 0.8],
      "pool_size": 2,
      "budget": 1,
      "true_costs": [0.1, 0.05],
      "oracle": {"kind": "table", "entries": {"d1": 0.9, "d2": 0.7}}
    }"#;

    #[test]
    fn retrieval_config_builds() {
        let cfg = MarketConfig::from_json(EXAMPLE).unwrap();
        let m = cfg.build(Path::new(".")).unwrap();
        assert_eq!(m.players().sellers(), 2);
    }

    #[test]
    fn describe_then_build_is_identity() {
        let m = MarketInstance::MeanEstimation(MeanEstimationMarket::random(2, 3, 2, 1).unwrap());
        let cfg = MarketConfig::describe(&m);
        let json = cfg.to_json().unwrap();
        let back = MarketConfig::from_json(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn unknown_family_is_rejected() {
        assert!(MarketConfig::from_json(r#"{"family": "auction"}"#).is_err());
    }

    #[test]
    fn invalid_fields_are_all_reported() {
        let cfg = MarketConfig::from_json(
            r#"{"family": "data_mixture", "loss_floor": 1, "loss_scale": -1,
                "effect_vector": [], "true_costs": [1]}"#,
        )
        .unwrap();
        match cfg.build(Path::new(".")) {
            Err(MarketError::Invalid(p)) => assert!(p.len() >= 3, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }
}
