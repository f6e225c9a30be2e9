//! The three market families and their configuration format.

mod config;
mod data_mixture;
mod mean_estimation;
mod oracle;
mod retrieval;

pub use config::{MarketConfig, OracleConfig, RetrievalConfig};
pub use data_mixture::DataMixtureMarket;
pub use mean_estimation::{build_random_mean_market, MeanEstimationMarket};
pub use oracle::{score_subset, subset_key, RemoteJudge, ScoreOracle, ScoreTable, MAX_SCORE};
pub use retrieval::{retrieve_pool, RetrievalMarket, RetrievalSpec, Valuation};

use crate::allocation::SmoothMarket;
use crate::error::Result;
use crate::model::{Allocation, CostVector, Domain, Market, PlayerIds};

/// Any of the concrete market families.
#[derive(Clone, Debug)]
pub enum MarketInstance {
    MeanEstimation(MeanEstimationMarket),
    DataMixture(DataMixtureMarket),
    Retrieval(RetrievalMarket),
}

impl MarketInstance {
    fn inner(&self) -> &dyn Market {
        match self {
            MarketInstance::MeanEstimation(m) => m,
            MarketInstance::DataMixture(m) => m,
            MarketInstance::Retrieval(m) => m,
        }
    }

    /// Differentiable view, for the gradient solver; `None` for discrete markets.
    pub fn as_smooth(&self) -> Option<&dyn SmoothMarket> {
        match self {
            MarketInstance::MeanEstimation(m) => Some(m),
            MarketInstance::DataMixture(m) => Some(m),
            MarketInstance::Retrieval(_) => None,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            MarketInstance::MeanEstimation(_) => "mean_estimation",
            MarketInstance::DataMixture(_) => "data_mixture",
            MarketInstance::Retrieval(_) => "retrieval",
        }
    }
}

impl Market for MarketInstance {
    fn players(&self) -> PlayerIds {
        self.inner().players()
    }

    fn domain(&self) -> Domain {
        self.inner().domain()
    }

    fn true_costs(&self) -> &CostVector {
        self.inner().true_costs()
    }

    fn performance(&self, buyer: usize, allocation: &Allocation) -> Result<f64> {
        self.inner().performance(buyer, allocation)
    }

    fn sharing(&self, seller: usize, allocation: &Allocation) -> f64 {
        self.inner().sharing(seller, allocation)
    }

    fn standalone_loss(&self, buyer: usize) -> f64 {
        self.inner().standalone_loss(buyer)
    }

    fn solve(&self, costs: &CostVector) -> Result<Allocation> {
        self.inner().solve(costs)
    }

    fn solve_subset(&self, coalition: &[bool], costs: &CostVector) -> Result<Allocation> {
        self.inner().solve_subset(coalition, costs)
    }
}
