//! Incentive and efficiency audit of payment rules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{grid_step, GridSpec};
use super::sweep::{best_response_index, sweep_records, SellerGrid, SweepRecord};
use crate::error::{MarketError, Result};
use crate::model::{Domain, Market, PaymentRule};
use crate::payments::{buyer_probe, pay, redistribute, Outcome, PaymentOptions, Probe};

/// Utilities at or above `-IR_TOLERANCE` count as individually rational.
pub const IR_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub grid: GridSpec,
    pub payments: PaymentOptions,
}

/// Result of auditing one rule on one market.
///
/// `poa` is a ratio of social costs, `SC(W*(best response)) / SC(W*(c))`,
/// so it is at least one; the worst single deviating seller is reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub seed: Option<u64>,
    pub rule: PaymentRule,
    pub true_costs: Vec<f64>,
    /// Each seller's utility-maximizing report with all others truthful.
    pub best_responses: Vec<f64>,
    /// `|best response - c_j|` is within one grid step.
    pub truthful: Vec<bool>,
    pub payments_at_truth: Vec<f64>,
    pub seller_utilities_at_truth: Vec<f64>,
    pub seller_ir: Vec<bool>,
    /// Buyer IR after redistributing payments; `None` when the split is degenerate.
    pub buyer_ir: Option<Vec<bool>>,
    pub buyer_utilities: Option<Vec<f64>>,
    /// Curvature of each buyer's value at the optimum, for multi-buyer continuous markets.
    pub buyer_probe: Option<Probe>,
    /// Charges minus payments after redistribution.
    pub budget_gap: Option<f64>,
    pub poa: f64,
    /// The seller whose deviation attains `poa`.
    pub poa_seller: usize,
    /// Whether each seller still shares data (`f_j > 0`) at its own best response.
    pub served_at_best_response: Vec<bool>,
}

/// Sweeps for every seller under one rule.
#[derive(Clone, Debug)]
pub struct RuleSweeps {
    pub rule: PaymentRule,
    pub records: Vec<Vec<SweepRecord>>,
    pub best_indices: Vec<usize>,
}

fn prepare<M: Market + ?Sized>(market: &M, grid: &GridSpec) -> Result<Vec<SellerGrid>> {
    let truth = market.true_costs();
    (0..market.players().sellers())
        .map(|j| SellerGrid::new(market, j, grid.points_for(truth.get(j))?))
        .collect()
}

fn rule_sweeps<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    grids: &[SellerGrid],
    options: &PaymentOptions,
) -> Result<RuleSweeps> {
    let truth = market.true_costs();
    let records = grids
        .par_iter()
        .map(|sg| sweep_records(market, rule, sg, options))
        .collect::<Result<Vec<_>>>()?;
    let best_indices = records
        .iter()
        .enumerate()
        .map(|(j, r)| best_response_index(r, truth.get(j)))
        .collect();
    Ok(RuleSweeps {
        rule,
        records,
        best_indices,
    })
}

fn poa_from(sweeps: &RuleSweeps, truthful_sc: f64) -> (f64, usize) {
    sweeps
        .records
        .iter()
        .zip(&sweeps.best_indices)
        .map(|(r, &k)| {
            let sc = r[k].social_cost;
            if truthful_sc == 0.0 {
                if sc == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                sc / truthful_sc
            }
        })
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(best, who), (j, p)| {
            if p > best {
                (p, j)
            } else {
                (best, who)
            }
        })
}

fn truthful_social_cost<M: Market + ?Sized>(market: &M) -> Result<f64> {
    let truth = market.true_costs();
    let standalone: f64 = (0..market.players().buyers())
        .map(|i| market.standalone_loss(i))
        .sum();
    Ok(standalone - Outcome::solve(market, truth)?.welfare_excluding(truth, None))
}

/// Worst-case ratio of social cost under one seller's best response to the
/// truthful social cost.
pub fn price_of_anarchy<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    grid: &GridSpec,
    options: &PaymentOptions,
) -> Result<f64> {
    let grids = prepare(market, grid)?;
    let sweeps = rule_sweeps(market, rule, &grids, options)?;
    Ok(poa_from(&sweeps, truthful_social_cost(market)?).0)
}

/// Audit each rule: best responses, truthfulness, IR, budget balance and PoA.
pub fn mechanism_audit<M: Market + ?Sized>(
    market: &M,
    rules: &[PaymentRule],
    options: &AuditOptions,
    seed: Option<u64>,
) -> Result<Vec<AuditVerdict>> {
    Ok(mechanism_audit_with_sweeps(market, rules, options, seed)?
        .into_iter()
        .map(|(v, _)| v)
        .collect())
}

/// [`mechanism_audit`] that also returns the underlying sweeps.
pub fn mechanism_audit_with_sweeps<M: Market + ?Sized>(
    market: &M,
    rules: &[PaymentRule],
    options: &AuditOptions,
    seed: Option<u64>,
) -> Result<Vec<(AuditVerdict, RuleSweeps)>> {
    let truth = market.true_costs();
    let players = market.players();
    let grids = prepare(market, &options.grid)?;
    let truthful_sc = truthful_social_cost(market)?;
    let continuous_multi = market.domain() != Domain::Discrete && players.buyers() > 1;
    let probe = if continuous_multi {
        Some(buyer_probe(market, truth)?)
    } else {
        None
    };
    rules
        .iter()
        .map(|&rule| {
            let sweeps = rule_sweeps(market, rule, &grids, &options.payments)?;
            let best_responses: Vec<f64> = sweeps
                .records
                .iter()
                .zip(&sweeps.best_indices)
                .map(|(r, &k)| r[k].reported_cost)
                .collect();
            let truthful = grids
                .iter()
                .zip(&best_responses)
                .map(|(sg, &br)| {
                    let c = truth.get(sg.seller);
                    let at = sg.grid.partition_point(|&x| x < c).min(sg.grid.len() - 1);
                    (br - c).abs() <= grid_step(&sg.grid, at) * (1.0 + 1e-12)
                })
                .collect();
            let at_truth = pay(market, rule, truth, &options.payments)?;
            let seller_ir = at_truth
                .seller_utilities
                .iter()
                .map(|u| *u >= -IR_TOLERANCE)
                .collect();
            let (buyer_ir, buyer_utilities, budget_gap) =
                match redistribute(market, truth, &at_truth.seller_payments) {
                    Ok(charges) => {
                        let charged = at_truth.clone().with_buyer_charges(charges);
                        (
                            Some(charged.buyer_utilities.iter().map(|u| *u >= -IR_TOLERANCE).collect()),
                            Some(charged.buyer_utilities),
                            charged.budget_gap,
                        )
                    }
                    Err(MarketError::DegenerateRedistribution { seller, payment }) => {
                        log::info!("no redistribution: seller {seller} is paid {payment} with zero marginal value");
                        (None, None, None)
                    }
                    Err(e) => return Err(e),
                };
            let (poa, poa_seller) = poa_from(&sweeps, truthful_sc);
            let served_at_best_response = sweeps
                .records
                .iter()
                .zip(&sweeps.best_indices)
                .map(|(r, &k)| r[k].sharing > 0.0)
                .collect();
            let verdict = AuditVerdict {
                seed,
                rule,
                true_costs: truth.as_slice().to_vec(),
                best_responses,
                truthful,
                payments_at_truth: at_truth.seller_payments.clone(),
                seller_utilities_at_truth: at_truth.seller_utilities.clone(),
                seller_ir,
                buyer_ir,
                buyer_utilities,
                buyer_probe: probe,
                budget_gap,
                poa,
                poa_seller,
                served_at_best_response,
            };
            Ok((verdict, sweeps))
        })
        .collect()
}
