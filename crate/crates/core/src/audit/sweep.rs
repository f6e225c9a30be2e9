//! Unilateral misreport sweeps.
//!
//! Seller `j` reports each grid point while every other seller reports its
//! true cost. Payments use the reported profile; utilities and social cost
//! use true costs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::check_grid;
use crate::error::{MarketError, Result};
use crate::model::{CostVector, Domain, Market, PaymentRule};
use crate::payments::{
    critical_cost, excluded_coalition_values, myerson_integral, seller_payment,
    shapley_seller_payment, Outcome, PaymentOptions, ShapleyMode,
};
use crate::quadrature::integrate;

/// One grid point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub reported_cost: f64,
    pub payment: f64,
    pub utility: f64,
    pub social_cost: f64,
    /// `f_j` at the cleared allocation.
    pub sharing: f64,
    /// `sum_{k != j} f_k`.
    pub other_sharing: f64,
}

/// Column names of [`SweepRecord`] in CSV order.
pub const SWEEP_COLUMNS: [&str; 6] = [
    "reported_cost",
    "payment",
    "utility",
    "social_cost",
    "sharing",
    "other_sharing",
];

/// The cleared market at every grid point for one seller; shared by all rules.
#[derive(Clone, Debug)]
pub struct SellerGrid {
    pub seller: usize,
    pub grid: Vec<f64>,
    pub outcomes: Vec<Outcome>,
    /// The market with seller `j` absent.
    pub without: Outcome,
}

fn at_point<T>(point: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| MarketError::AtGridPoint {
        point,
        source: Box::new(e),
    })
}

impl SellerGrid {
    pub fn new<M: Market + ?Sized>(market: &M, seller: usize, grid: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        let sellers = market.players().sellers();
        if seller >= sellers {
            return Err(MarketError::invalid(format!(
                "seller {seller} out of range (market has {sellers})"
            )));
        }
        let truth = market.true_costs();
        let outcomes = grid
            .par_iter()
            .map(|&x| at_point(x, Outcome::solve(market, &truth.with_cost(seller, x))))
            .collect::<Result<Vec<_>>>()?;
        let without = Outcome::solve(market, &truth.without(seller))?;
        Ok(SellerGrid {
            seller,
            grid,
            outcomes,
            without,
        })
    }

    fn costs_at(&self, truth: &CostVector, index: usize) -> CostVector {
        truth.with_cost(self.seller, self.grid[index])
    }
}

/// Payments along the grid for `rule`.
fn payments<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    sg: &SellerGrid,
    options: &PaymentOptions,
) -> Result<Vec<f64>> {
    let truth = market.true_costs();
    let j = sg.seller;
    let n = sg.grid.len();
    match rule {
        PaymentRule::Loo => Ok(sg
            .outcomes
            .iter()
            .map(|o| {
                if o.sharing[j] == 0.0 {
                    0.0
                } else {
                    o.total_value - sg.without.total_value
                }
            })
            .collect()),
        PaymentRule::Vcg => Ok((0..n)
            .map(|k| {
                let o = &sg.outcomes[k];
                if o.sharing[j] == 0.0 {
                    return 0.0;
                }
                let costs = sg.costs_at(truth, k);
                o.welfare_excluding(&costs, Some(j)) - sg.without.welfare_excluding(&costs, Some(j))
            })
            .collect()),
        PaymentRule::Shapley => {
            let excluded = match options.shapley {
                ShapleyMode::Exact => Some(excluded_coalition_values(market, truth, j)?),
                ShapleyMode::Sampled { .. } => None,
            };
            (0..n)
                .map(|k| {
                    at_point(
                        sg.grid[k],
                        shapley_seller_payment(
                            market,
                            &sg.costs_at(truth, k),
                            j,
                            excluded.as_deref(),
                            options.shapley,
                        )
                        .map(|p| p.value),
                    )
                })
                .collect()
        }
        PaymentRule::Myerson if market.domain() == Domain::Discrete => {
            // others' reports are fixed, so the threshold is the same at every point
            let threshold = critical_cost(market, j, truth)?.value.unwrap_or(0.0);
            Ok(sg
                .outcomes
                .iter()
                .map(|o| if o.sharing[j] > 0.0 { threshold } else { 0.0 })
                .collect())
        }
        PaymentRule::Myerson => myerson_along_grid(market, sg, options),
        PaymentRule::Direct => (0..n)
            .map(|k| {
                seller_payment(
                    market,
                    rule,
                    &sg.costs_at(truth, k),
                    j,
                    &sg.outcomes[k],
                    options,
                )
                .map(|p| p.value)
            })
            .collect(),
    }
}

/// `x f(x) + int_x^inf f` at every grid point, reusing the integral between
/// neighbouring points.
fn myerson_along_grid<M: Market + ?Sized>(
    market: &M,
    sg: &SellerGrid,
    options: &PaymentOptions,
) -> Result<Vec<f64>> {
    let settings = &options.integrator;
    settings.validate()?;
    let truth = market.true_costs();
    let j = sg.seller;
    let n = sg.grid.len();
    let f =
        |u: f64| -> Result<f64> { Ok(market.sharing(j, &market.solve(&truth.with_cost(j, u))?)) };
    let top = sg.grid[n - 1];
    let cap = settings
        .max_upper_limit
        .unwrap_or_else(|| 1e6 * truth.max_finite().max(top));
    let tail = myerson_integral(
        f,
        top,
        Some(sg.outcomes[n - 1].sharing[j]),
        truth.max_finite().max(top),
        cap,
        settings,
    )?;
    let pieces = (0..n - 1)
        .into_par_iter()
        .map(|k| {
            if sg.outcomes[k].sharing[j] == 0.0 {
                return Ok(0.0);
            }
            let floor = settings.relative_tolerance * 1e-2 * tail.value.abs();
            at_point(
                sg.grid[k],
                integrate(
                    f,
                    sg.grid[k],
                    sg.grid[k + 1],
                    settings.relative_tolerance,
                    floor,
                    settings.max_subdivisions,
                )
                .map(|q| q.value),
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut integral = vec![0.0; n];
    integral[n - 1] = tail.value;
    for k in (0..n - 1).rev() {
        integral[k] = integral[k + 1] + pieces[k];
    }
    Ok((0..n)
        .map(|k| {
            let fk = sg.outcomes[k].sharing[j];
            if fk == 0.0 {
                0.0
            } else {
                sg.grid[k] * fk + integral[k]
            }
        })
        .collect())
}

/// Sweep records for `rule` over a prepared grid.
pub fn sweep_records<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    sg: &SellerGrid,
    options: &PaymentOptions,
) -> Result<Vec<SweepRecord>> {
    let truth = market.true_costs();
    let j = sg.seller;
    let players = market.players();
    let standalone: f64 = (0..players.buyers())
        .map(|i| market.standalone_loss(i))
        .sum();
    let paid = payments(market, rule, sg, options)?;
    Ok(sg
        .outcomes
        .iter()
        .zip(&sg.grid)
        .zip(paid)
        .map(|((o, &x), payment)| {
            let f = o.sharing[j];
            let own_cost = if f == 0.0 { 0.0 } else { truth.get(j) * f };
            SweepRecord {
                reported_cost: x,
                payment,
                utility: payment - own_cost,
                social_cost: standalone - o.welfare_excluding(truth, None),
                sharing: f,
                other_sharing: o
                    .sharing
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, s)| s)
                    .sum(),
            }
        })
        .collect())
}

/// One record per grid point with seller `j` reporting that point and all
/// others truthful.
pub fn misreport_sweep<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    seller: usize,
    grid: &[f64],
    options: &PaymentOptions,
) -> Result<Vec<SweepRecord>> {
    let sg = SellerGrid::new(market, seller, grid.to_vec())?;
    sweep_records(market, rule, &sg, options)
}

/// Index of the utility maximizer; near-ties go to the point closest to `truth`.
pub fn best_response_index(records: &[SweepRecord], truth: f64) -> usize {
    let best = records
        .iter()
        .map(|r| r.utility)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * best.abs().max(1.0);
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.utility >= best - tol)
        .min_by(|(_, a), (_, b)| {
            (a.reported_cost - truth)
                .abs()
                .total_cmp(&(b.reported_cost - truth).abs())
        })
        .map(|(k, _)| k)
        .expect("sweep has at least one record")
}

/// The reported cost maximizing seller `j`'s utility over `grid`.
pub fn best_response<M: Market + ?Sized>(
    market: &M,
    rule: PaymentRule,
    seller: usize,
    grid: &[f64],
    options: &PaymentOptions,
) -> Result<f64> {
    let records = misreport_sweep(market, rule, seller, grid, options)?;
    Ok(records[best_response_index(&records, market.true_costs().get(seller))].reported_cost)
}
