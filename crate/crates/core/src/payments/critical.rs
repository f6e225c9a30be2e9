//! Critical costs and the Myerson payment in discrete markets.
//!
//! With a 0/1 allocation, `f_j(u)` is a step that drops from 1 to 0 at the
//! critical cost `c_bar_j`, so the Myerson payment collapses to
//! `c_hat_j + (c_bar_j - c_hat_j) = c_bar_j` for a selected seller.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble, Outcome, SellerPayment};
use crate::error::{MarketError, Result};
use crate::model::{CostVector, Domain, Market, PaymentResult, PaymentRule};

/// Width of the final bisection bracket.
pub const CRITICAL_COST_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalCost {
    pub seller: usize,
    /// `None` when the seller is not selected even at zero cost.
    pub value: Option<f64>,
}

fn require_discrete<M: Market + ?Sized>(market: &M, operation: &'static str) -> Result<()> {
    if market.domain() == Domain::Discrete {
        Ok(())
    } else {
        Err(MarketError::UnsupportedDomain {
            operation,
            domain: market.domain().to_string(),
        })
    }
}

/// Highest report at which seller `j` is still selected, others fixed at `costs`.
///
/// Bisection on `[0, U]` where `U` is the total standalone loss (the largest
/// value any selection can have), doubled until `j` drops out.
pub fn critical_cost<M: Market + ?Sized>(
    market: &M,
    seller: usize,
    costs: &CostVector,
) -> Result<CriticalCost> {
    require_discrete(market, "critical_cost")?;
    let selected = |u: f64| -> Result<bool> {
        Ok(market.sharing(seller, &market.solve(&costs.with_cost(seller, u))?) > 0.0)
    };
    if !selected(0.0)? {
        return Ok(CriticalCost {
            seller,
            value: None,
        });
    }
    let players = market.players();
    let mut hi: f64 = (0..players.buyers())
        .map(|i| market.standalone_loss(i))
        .sum::<f64>()
        .max(1.0);
    while selected(hi)? {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(MarketError::invalid(format!(
                "seller {seller} stays selected at every cost"
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > CRITICAL_COST_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if selected(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalCost {
        seller,
        value: Some(0.5 * (lo + hi)),
    })
}

pub(super) fn myerson_discrete_one<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    seller: usize,
    outcome: &Outcome,
) -> Result<f64> {
    if outcome.sharing[seller] == 0.0 {
        return Ok(0.0);
    }
    Ok(critical_cost(market, seller, costs)?.value.unwrap_or(0.0))
}

/// Pay each selected seller its critical cost; unselected sellers get 0.
pub fn myerson_discrete<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
) -> Result<PaymentResult> {
    require_discrete(market, "myerson_discrete")?;
    let outcome = Outcome::solve(market, costs)?;
    let payments = (0..market.players().sellers())
        .into_par_iter()
        .map(|j| myerson_discrete_one(market, costs, j, &outcome).map(SellerPayment::exact))
        .collect::<Result<Vec<_>>>()?;
    assemble(
        market,
        PaymentRule::Myerson,
        costs,
        outcome.allocation,
        &payments,
    )
}
