//! Payment rules from buyers to sellers.
//!
//! Every rule is evaluated on a reported cost profile `c_hat`: the market is
//! cleared at `W*(c_hat)` and each seller receives `P_j`. Utilities in the
//! returned [`PaymentResult`] use the market's true costs, so
//! `u_j = P_j - c_j f_j(W*(c_hat))`.

mod critical;
mod myerson;
mod probes;
mod redistribution;
mod rules;
mod shapley;

pub use critical::{critical_cost, myerson_discrete, CriticalCost, CRITICAL_COST_TOLERANCE};
pub use myerson::{myerson_integral, myerson_payment, IntegratorSettings, TailIntegral};
pub use probes::{buyer_probe, coalition_probe, Probe, PROBE_LIMIT};
pub use redistribution::{redistribute, redistribution_shares};
pub use rules::{direct_payment, loo_payment, vcg_payment, vcg_upper_bound};
pub use shapley::{
    coalition_values, excluded_coalition_values, shapley_from_values, shapley_payment,
    shapley_seller_payment, ShapleyMode, EXACT_SHAPLEY_LIMIT,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::social_welfare;
use crate::error::Result;
use crate::model::{
    sharing_vector, total_performance, Allocation, CostVector, Domain, Market, PaymentResult,
    PaymentRule,
};

/// The cleared market at one cost profile.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub allocation: Allocation,
    /// `sum_i v_i(W)`.
    pub total_value: f64,
    pub sharing: Vec<f64>,
}

impl Outcome {
    pub fn solve<M: Market + ?Sized>(market: &M, costs: &CostVector) -> Result<Self> {
        Self::of(market, market.solve(costs)?)
    }

    pub fn of<M: Market + ?Sized>(market: &M, allocation: Allocation) -> Result<Self> {
        Ok(Outcome {
            total_value: total_performance(market, &allocation)?,
            sharing: sharing_vector(market, &allocation),
            allocation,
        })
    }

    /// `sum_i v_i - sum_{k != skip} c_k f_k`, ignoring sellers that share nothing.
    pub fn welfare_excluding(&self, costs: &CostVector, skip: Option<usize>) -> f64 {
        let cost: f64 = self
            .sharing
            .iter()
            .enumerate()
            .filter(|&(k, f)| Some(k) != skip && *f != 0.0)
            .map(|(k, f)| costs.get(k) * f)
            .sum();
        self.total_value - cost
    }
}

/// One seller's payment with its numerical uncertainty.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SellerPayment {
    pub value: f64,
    /// Quadrature error or Shapley standard error; 0 for exact rules.
    pub error: f64,
    /// The Myerson integrand had not decayed at the integration cap.
    pub truncated: bool,
}

impl SellerPayment {
    pub fn exact(value: f64) -> Self {
        SellerPayment {
            value,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PaymentOptions {
    pub shapley: ShapleyMode,
    pub integrator: IntegratorSettings,
}

/// Payment owed to seller `j` under `rule` at reported costs `costs`.
///
/// `outcome` must be `Outcome::solve(market, costs)`. Shapley payments here
/// use exact enumeration (or sampling per `options`) for this seller alone.
pub fn seller_payment<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    costs: &CostVector,
    seller: usize,
    outcome: &Outcome,
    options: &PaymentOptions,
) -> Result<SellerPayment> {
    match rule {
        PaymentRule::Direct => Ok(SellerPayment::exact(rules::direct_one(
            costs, seller, outcome,
        ))),
        PaymentRule::Loo => {
            rules::loo_one(market, costs, seller, outcome).map(SellerPayment::exact)
        }
        PaymentRule::Vcg => {
            rules::vcg_one(market, costs, seller, outcome).map(SellerPayment::exact)
        }
        PaymentRule::Myerson if market.domain() == Domain::Discrete => {
            critical::myerson_discrete_one(market, costs, seller, outcome).map(SellerPayment::exact)
        }
        PaymentRule::Myerson => {
            myerson::myerson_one(market, costs, seller, outcome, &options.integrator)
        }
        PaymentRule::Shapley => {
            shapley::shapley_seller_payment(market, costs, seller, None, options.shapley)
        }
    }
}

/// Payments to every seller under `rule`, with utilities at true costs.
///
/// Discrete markets use the critical-cost form of the Myerson rule.
pub fn pay<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    costs: &CostVector,
    options: &PaymentOptions,
) -> Result<PaymentResult> {
    let outcome = Outcome::solve(market, costs)?;
    let sellers = market.players().sellers();
    let payments: Vec<SellerPayment> = match rule {
        PaymentRule::Shapley => shapley::shapley_all(market, costs, options.shapley)?,
        _ => (0..sellers)
            .into_par_iter()
            .map(|j| seller_payment(market, rule, costs, j, &outcome, options))
            .collect::<Result<Vec<_>>>()?,
    };
    assemble(market, rule, costs, outcome.allocation, &payments)
}

/// Package payments into a [`PaymentResult`] evaluated at true costs.
pub fn assemble<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    costs: &CostVector,
    allocation: Allocation,
    payments: &[SellerPayment],
) -> Result<PaymentResult> {
    let welfare = social_welfare(market, &allocation, market.true_costs())?;
    let seller_payments: Vec<f64> = payments.iter().map(|p| p.value).collect();
    let seller_utilities = seller_payments
        .iter()
        .zip(&welfare.per_seller_cost)
        .map(|(p, c)| p - c)
        .collect();
    let needs_errors = matches!(rule, PaymentRule::Myerson | PaymentRule::Shapley)
        && payments.iter().any(|p| p.error != 0.0);
    Ok(PaymentResult {
        rule,
        reported_costs: costs.clone(),
        seller_payments,
        buyer_charges: None,
        seller_utilities,
        buyer_utilities: welfare.per_buyer_value.clone(),
        budget_gap: None,
        error_estimates: needs_errors.then(|| payments.iter().map(|p| p.error).collect()),
        truncated: payments
            .iter()
            .enumerate()
            .filter(|(_, p)| p.truncated)
            .map(|(j, _)| j)
            .collect(),
        welfare,
        allocation,
    })
}
