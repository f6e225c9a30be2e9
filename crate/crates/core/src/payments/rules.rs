//! Direct, leave-one-out and VCG payments, and the column-zeroing VCG bound.

use rayon::prelude::*;

use super::{assemble, Outcome, SellerPayment};
use crate::error::Result;
use crate::model::{total_performance, CostVector, Market, PaymentResult, PaymentRule};

pub(super) fn direct_one(costs: &CostVector, seller: usize, outcome: &Outcome) -> f64 {
    let f = outcome.sharing[seller];
    if f == 0.0 {
        0.0
    } else {
        costs.get(seller) * f
    }
}

pub(super) fn loo_one<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    seller: usize,
    outcome: &Outcome,
) -> Result<f64> {
    if outcome.sharing[seller] == 0.0 {
        return Ok(0.0);
    }
    let without = market.solve(&costs.without(seller))?;
    Ok(outcome.total_value - total_performance(market, &without)?)
}

pub(super) fn vcg_one<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    seller: usize,
    outcome: &Outcome,
) -> Result<f64> {
    if outcome.sharing[seller] == 0.0 {
        return Ok(0.0);
    }
    let without = Outcome::solve(market, &costs.without(seller))?;
    Ok(outcome.welfare_excluding(costs, Some(seller))
        - without.welfare_excluding(costs, Some(seller)))
}

fn per_seller<M, F>(
    market: &M,
    rule: PaymentRule,
    costs: &CostVector,
    one: F,
) -> Result<PaymentResult>
where
    M: Market + ?Sized,
    F: Fn(usize, &Outcome) -> Result<f64> + Sync,
{
    let outcome = Outcome::solve(market, costs)?;
    let payments = (0..market.players().sellers())
        .into_par_iter()
        .map(|j| one(j, &outcome).map(SellerPayment::exact))
        .collect::<Result<Vec<_>>>()?;
    assemble(market, rule, costs, outcome.allocation, &payments)
}

/// `P_j = c_hat_j f_j(W*(c_hat))`: reimburse the reported cost.
pub fn direct_payment<M: Market + ?Sized>(market: &M, costs: &CostVector) -> Result<PaymentResult> {
    per_seller(market, PaymentRule::Direct, costs, |j, o| {
        Ok(direct_one(costs, j, o))
    })
}

/// `P_j = sum_i v_i(W*(c_hat)) - sum_i v_i(W*(inf, c_hat_-j))`.
///
/// ```
/// use datamarket::markets::{RetrievalMarket, RetrievalSpec, ScoreOracle, ScoreTable, Valuation};
/// use datamarket::model::{CostVector, Market};
/// use datamarket::payments::loo_payment;
///
/// let table = ScoreTable::new([("d1", 0.9), ("d2", 0.7)]).unwrap();
/// let market = RetrievalMarket::new(
///     RetrievalSpec {
///         document_ids: vec!["d1".into(), "d2".into()],
///         relevance: vec![1.0, 0.5],
///         pool_size: 2,
///         budget: 1,
///         true_costs: CostVector::new(vec![0.1, 0.05]).unwrap(),
///         valuation: Valuation::Independent,
///         query: String::new(),
///     },
///     ScoreOracle::Table(table),
/// )
/// .unwrap();
/// let p = loo_payment(&market, market.true_costs()).unwrap();
/// assert!((p.seller_payments[0] - 0.2).abs() < 1e-12);
/// assert_eq!(p.seller_payments[1], 0.0);
/// ```
pub fn loo_payment<M: Market + ?Sized>(market: &M, costs: &CostVector) -> Result<PaymentResult> {
    per_seller(market, PaymentRule::Loo, costs, |j, o| {
        loo_one(market, costs, j, o)
    })
}

/// Externality payment: the welfare of everyone but `j` with `j` present,
/// minus the same welfare when `j` is absent, both at reported costs.
pub fn vcg_payment<M: Market + ?Sized>(market: &M, costs: &CostVector) -> Result<PaymentResult> {
    per_seller(market, PaymentRule::Vcg, costs, |j, o| {
        vcg_one(market, costs, j, o)
    })
}

/// `sum_i v_i(W*(c)) - v_i(W*^{-j}(c))` with column `j` zeroed and nothing re-solved.
pub fn vcg_upper_bound<M: Market + ?Sized>(market: &M, costs: &CostVector) -> Result<Vec<f64>> {
    let outcome = Outcome::solve(market, costs)?;
    (0..market.players().sellers())
        .into_par_iter()
        .map(|j| {
            if outcome.sharing[j] == 0.0 {
                return Ok(0.0);
            }
            let zeroed = outcome.allocation.with_column_zeroed(j);
            Ok(outcome.total_value - total_performance(market, &zeroed)?)
        })
        .collect()
}
