//! Splitting seller payments among buyers.
//!
//! Buyer `i` pays seller `j` the share
//! `eta_ij = [v_i(W*) - v_i(W*^-j)] / sum_k [v_k(W*) - v_k(W*^-j)]`
//! of `P_j`, where `W*^-j` is the optimum with column `j` zeroed. The shares
//! of each seller sum to one, so charges balance payments exactly.

use nalgebra::DMatrix;

use crate::error::{MarketError, Result};
use crate::model::{CostVector, Market};

/// The matrix `eta` (buyers by sellers) at the optimum for `costs`.
///
/// Columns with a zero denominator are left at zero. A single buyer always
/// gets `eta = 1`.
pub fn redistribution_shares<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
) -> Result<DMatrix<f64>> {
    let players = market.players();
    let (buyers, sellers) = (players.buyers(), players.sellers());
    if buyers == 1 {
        return Ok(DMatrix::from_element(1, sellers, 1.0));
    }
    let optimum = market.solve(costs)?;
    let full = (0..buyers)
        .map(|i| market.performance(i, &optimum))
        .collect::<Result<Vec<f64>>>()?;
    let mut eta = DMatrix::zeros(buyers, sellers);
    for j in 0..sellers {
        let zeroed = optimum.with_column_zeroed(j);
        let mut numerators = Vec::with_capacity(buyers);
        for (i, v) in full.iter().enumerate() {
            numerators.push(v - market.performance(i, &zeroed)?);
        }
        let denominator: f64 = numerators.iter().sum();
        if denominator != 0.0 {
            for (i, n) in numerators.iter().enumerate() {
                eta[(i, j)] = n / denominator;
            }
        }
    }
    Ok(eta)
}

/// Per-buyer charges `P_i = sum_j eta_ij P_j`.
///
/// ```
/// use datamarket::markets::MeanEstimationMarket;
/// use datamarket::model::Market;
/// use datamarket::payments::{redistribute, vcg_payment};
///
/// let m = MeanEstimationMarket::random(3, 4, 2, 11).unwrap();
/// let paid = vcg_payment(&m, m.true_costs()).unwrap().seller_payments;
/// let charges = redistribute(&m, m.true_costs(), &paid).unwrap();
/// let gap = charges.iter().sum::<f64>() - paid.iter().sum::<f64>();
/// assert!(gap.abs() <= 1e-12 * paid.iter().map(|p| p.abs()).sum::<f64>().max(1.0));
/// ```
pub fn redistribute<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    seller_payments: &[f64],
) -> Result<Vec<f64>> {
    let players = market.players();
    if seller_payments.len() != players.sellers() {
        return Err(MarketError::ShapeMismatch {
            expected: format!("{} seller payments", players.sellers()),
            found: format!("{}", seller_payments.len()),
        });
    }
    let eta = redistribution_shares(market, costs)?;
    for (j, &p) in seller_payments.iter().enumerate() {
        if p != 0.0 && eta.column(j).iter().all(|&e| e == 0.0) {
            return Err(MarketError::DegenerateRedistribution {
                seller: j,
                payment: p,
            });
        }
    }
    Ok((0..players.buyers())
        .map(|i| {
            seller_payments
                .iter()
                .enumerate()
                .map(|(j, p)| eta[(i, j)] * p)
                .sum()
        })
        .collect())
}
