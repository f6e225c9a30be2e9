//! Retrieval-augmented generation as a market for documents.
//!
//! A retriever ranks the corpus by relevance and keeps the top `n` documents
//! (the pool); the mechanism then chooses at most `k` of them for the context
//! window. Every corpus document is a seller. Performance of a selection is
//! its judge score minus the no-context baseline, and sharing is `f_j = w_j`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{ScoreOracle, ScoreTable, MAX_SCORE};
use crate::allocation::{solve_discrete, solve_menu, MenuEntry};
use crate::error::{MarketError, Result};
use crate::model::{Allocation, CostVector, Domain, Market, PlayerIds};

/// How a selection is valued.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valuation {
    /// A selection is worth the sum of its members' singleton gains.
    #[default]
    Independent,
    /// A selection is worth its own tabulated score; only tabulated subsets
    /// (or, for a remote judge, every subset of the pool) can be chosen.
    Joint,
}

/// Indices of the `pool_size` most relevant documents, descending, ties to the lower index.
pub fn retrieve_pool(relevance: &[f64], pool_size: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..relevance.len()).collect();
    order.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]));
    order.truncate(pool_size);
    order
}

#[derive(Clone, Debug)]
pub struct RetrievalMarket {
    document_ids: Vec<String>,
    relevance: Vec<f64>,
    pool_size: usize,
    budget: usize,
    true_costs: CostVector,
    oracle: Arc<ScoreOracle>,
    valuation: Valuation,
    query: String,
    players: PlayerIds,
    pool: Vec<usize>,
    baseline: f64,
    gains: Vec<f64>,
    menu: Vec<MenuEntry>,
}

/// Fields of a retrieval market before validation.
#[derive(Clone, Debug)]
pub struct RetrievalSpec {
    pub document_ids: Vec<String>,
    pub relevance: Vec<f64>,
    pub pool_size: usize,
    pub budget: usize,
    pub true_costs: CostVector,
    pub valuation: Valuation,
    pub query: String,
}

impl RetrievalMarket {
    pub fn new(spec: RetrievalSpec, oracle: ScoreOracle) -> Result<Self> {
        let RetrievalSpec {
            document_ids,
            relevance,
            pool_size,
            budget,
            true_costs,
            valuation,
            query,
        } = spec;
        let s = document_ids.len();
        let mut problems = Vec::new();
        if relevance.len() != s {
            problems.push(format!(
                "{} relevance scores for {s} documents",
                relevance.len()
            ));
        }
        if relevance.iter().any(|r| !r.is_finite()) {
            problems.push("relevance must be finite".to_string());
        }
        if true_costs.len() != s {
            problems.push(format!("{} true costs for {s} documents", true_costs.len()));
        }
        if true_costs.as_slice().iter().any(|c| !c.is_finite()) {
            problems.push("true costs must be finite".to_string());
        }
        if budget == 0 {
            problems.push("budget k must be >= 1".to_string());
        }
        if !(budget <= pool_size && pool_size <= s) {
            problems.push(format!(
                "need k <= n <= s, got k = {budget}, n = {pool_size}, s = {s}"
            ));
        }
        let mut sorted_ids = document_ids.clone();
        sorted_ids.sort();
        sorted_ids.dedup();
        if sorted_ids.len() != s {
            problems.push("document ids must be unique".to_string());
        }
        if document_ids
            .iter()
            .any(|id| id.is_empty() || id.contains('+'))
        {
            problems.push("document ids must be nonempty and must not contain `+`".to_string());
        }
        if !problems.is_empty() {
            return Err(MarketError::Invalid(problems));
        }
        let players = PlayerIds::new(1, s)?;
        let pool = retrieve_pool(&relevance, pool_size);
        let baseline = oracle.score_subset(&[])?;

        let mut gains = vec![0.0; s];
        let mut menu = Vec::new();
        match valuation {
            Valuation::Independent => {
                let mut missing = Vec::new();
                for &j in &pool {
                    match oracle.score_subset(&[document_ids[j].as_str()]) {
                        Ok(score) => gains[j] = score - baseline,
                        Err(MarketError::MissingScore(key)) => missing.push(key),
                        Err(e) => return Err(e),
                    }
                }
                if !missing.is_empty() {
                    return Err(MarketError::Invalid(
                        missing
                            .into_iter()
                            .map(|k| format!("independent valuation needs a score for `{k}`"))
                            .collect(),
                    ));
                }
            }
            Valuation::Joint => {
                menu = build_menu(&oracle, &document_ids, &pool, budget, baseline)?;
            }
        }
        Ok(RetrievalMarket {
            document_ids,
            relevance,
            pool_size,
            budget,
            true_costs,
            oracle: Arc::new(oracle),
            valuation,
            query,
            players,
            pool,
            baseline,
            gains,
            menu,
        })
    }

    /// Random independent-valuation market over `d1..ds`.
    ///
    /// Draw order from ChaCha8: relevance `Uniform[0, 1)` per document, then
    /// singleton scores `Uniform[0, 10)`, then costs `0.5 * Uniform[0, 10)`.
    /// The baseline score is 0.
    pub fn random(corpus_size: usize, pool_size: usize, budget: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (1..=corpus_size).map(|i| format!("d{i}")).collect();
        let relevance = (0..corpus_size).map(|_| rng.random::<f64>()).collect();
        let scores: Vec<f64> = (0..corpus_size)
            .map(|_| rng.random_range(0.0..10.0))
            .collect();
        let costs = (0..corpus_size)
            .map(|_| 0.5 * rng.random_range(0.0..10.0))
            .collect();
        let table = ScoreTable::new(ids.iter().cloned().zip(scores))?;
        Self::new(
            RetrievalSpec {
                document_ids: ids,
                relevance,
                pool_size,
                budget,
                true_costs: CostVector::new(costs)?,
                valuation: Valuation::Independent,
                query: String::new(),
            },
            ScoreOracle::Table(table),
        )
    }

    pub fn document_ids(&self) -> &[String] {
        &self.document_ids
    }

    pub fn relevance(&self) -> &[f64] {
        &self.relevance
    }

    pub fn corpus_size(&self) -> usize {
        self.document_ids.len()
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn valuation(&self) -> Valuation {
        self.valuation
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn oracle(&self) -> &ScoreOracle {
        &self.oracle
    }

    /// Retrieved candidates, most relevant first.
    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    /// Score of the empty context.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    /// Singleton gains `s_j - baseline` (zero outside the pool); independent valuation only.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Selectable subsets with their values; joint valuation only.
    pub fn menu(&self) -> &[MenuEntry] {
        &self.menu
    }

    /// Largest value any feasible selection can reach.
    pub fn max_value(&self) -> f64 {
        match self.valuation {
            Valuation::Independent => {
                let mut g: Vec<f64> = self.pool.iter().map(|&j| self.gains[j].max(0.0)).collect();
                g.sort_by(|a, b| b.total_cmp(a));
                g.iter().take(self.budget).sum()
            }
            Valuation::Joint => self.menu.iter().map(|e| e.value).fold(0.0, f64::max),
        }
    }

    fn pool_costs(&self, costs: &CostVector) -> CostVector {
        let mut in_pool = vec![false; self.corpus_size()];
        for &j in &self.pool {
            in_pool[j] = true;
        }
        costs.restricted_to(&in_pool)
    }
}

fn build_menu(
    oracle: &ScoreOracle,
    ids: &[String],
    pool: &[usize],
    budget: usize,
    baseline: f64,
) -> Result<Vec<MenuEntry>> {
    let position = |id: &str| ids.iter().position(|x| x == id);
    let mut menu = Vec::new();
    match oracle {
        ScoreOracle::Table(table) => {
            for (members, score) in table.entries() {
                if members.is_empty() || members.len() > budget {
                    continue;
                }
                let idx: Option<Vec<usize>> = members.iter().map(|m| position(m)).collect();
                let Some(mut idx) = idx else { continue };
                if idx.iter().all(|j| pool.contains(j)) {
                    idx.sort_unstable();
                    menu.push(MenuEntry {
                        members: idx,
                        value: score - baseline,
                    });
                }
            }
        }
        ScoreOracle::Remote(_) => {
            let mut sorted_pool = pool.to_vec();
            sorted_pool.sort_unstable();
            let n = sorted_pool.len();
            if n > 20 {
                return Err(MarketError::SizeRefused {
                    sellers: n,
                    limit: 20,
                });
            }
            for mask in 1u32..(1 << n) {
                if mask.count_ones() as usize > budget {
                    continue;
                }
                let members: Vec<usize> = (0..n)
                    .filter(|b| mask >> b & 1 == 1)
                    .map(|b| sorted_pool[b])
                    .collect();
                let names: Vec<&str> = members.iter().map(|&j| ids[j].as_str()).collect();
                let value = oracle.score_subset(&names)? - baseline;
                menu.push(MenuEntry { members, value });
            }
        }
    }
    Ok(menu)
}

impl Market for RetrievalMarket {
    fn players(&self) -> PlayerIds {
        self.players
    }

    fn domain(&self) -> Domain {
        Domain::Discrete
    }

    fn true_costs(&self) -> &CostVector {
        &self.true_costs
    }

    fn performance(&self, _buyer: usize, allocation: &Allocation) -> Result<f64> {
        let selected = allocation.selection();
        match self.valuation {
            Valuation::Independent => Ok(selected
                .iter()
                .zip(&self.gains)
                .filter(|(s, _)| **s)
                .map(|(_, g)| g)
                .sum()),
            Valuation::Joint => {
                if !selected.iter().any(|&s| s) {
                    return Ok(0.0);
                }
                let names: Vec<&str> = selected
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s)
                    .map(|(j, _)| self.document_ids[j].as_str())
                    .collect();
                Ok(self.oracle.score_subset(&names)? - self.baseline)
            }
        }
    }

    fn sharing(&self, seller: usize, allocation: &Allocation) -> f64 {
        allocation.get(0, seller)
    }

    /// The judge's maximum score less the baseline.
    fn standalone_loss(&self, _buyer: usize) -> f64 {
        MAX_SCORE - self.baseline
    }

    fn solve(&self, costs: &CostVector) -> Result<Allocation> {
        if costs.len() != self.corpus_size() {
            return Err(MarketError::ShapeMismatch {
                expected: format!("{} costs", self.corpus_size()),
                found: format!("{} costs", costs.len()),
            });
        }
        let costs = self.pool_costs(costs);
        match self.valuation {
            Valuation::Independent => solve_discrete(&self.gains, &costs, self.budget),
            Valuation::Joint => solve_menu(&self.menu, &costs, self.budget),
        }
    }
}
