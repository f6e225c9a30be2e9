//! Exhaustive diminishing-returns checks over seller subsets.
//!
//! A set function `g` is subadditive in the diminishing-returns sense when
//! `g(T + j) - g(T) >= g(T + j + k) - g(T + k)` for every `T` and `j, k`
//! outside it. Checks are exhaustive and therefore limited to small markets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shapley::coalition_values;
use crate::error::Result;
use crate::model::{CostVector, Market};

/// Largest seller count probed exhaustively.
pub const PROBE_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// Both sub- and superadditive: marginal contributions never change.
    Additive,
    Subadditive,
    Superadditive,
    Mixed,
    /// Too many sellers to enumerate.
    Inconclusive,
}

impl Probe {
    /// LOO never exceeds Shapley under this verdict.
    pub fn implies_loo_below_shapley(self) -> bool {
        matches!(self, Probe::Additive | Probe::Subadditive)
    }

    /// LOO never falls below Shapley under this verdict.
    pub fn implies_loo_above_shapley(self) -> bool {
        matches!(self, Probe::Additive | Probe::Superadditive)
    }
}

/// `(diminishing, increasing)` returns over a full table of subset values.
fn curvature(values: &[f64], sellers: usize) -> (bool, bool) {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let (mut sub, mut sup) = (true, true);
    for mask in 0..values.len() {
        for j in 0..sellers {
            let bj = 1 << j;
            if mask & bj != 0 {
                continue;
            }
            for k in j + 1..sellers {
                let bk = 1 << k;
                if mask & bk != 0 {
                    continue;
                }
                let d =
                    values[mask | bj] + values[mask | bk] - values[mask] - values[mask | bj | bk];
                sub &= d >= -tol;
                sup &= d <= tol;
            }
            if !sub && !sup {
                return (false, false);
            }
        }
    }
    (sub, sup)
}

fn verdict(sub: bool, sup: bool) -> Probe {
    match (sub, sup) {
        (true, true) => Probe::Additive,
        (true, false) => Probe::Subadditive,
        (false, true) => Probe::Superadditive,
        (false, false) => Probe::Mixed,
    }
}

/// Curvature of the coalition value `V(pi) = sum_i v_i(W*(pi))`, re-optimized per coalition.
pub fn coalition_probe<M: Market + ?Sized>(market: &M, costs: &CostVector) -> Result<Probe> {
    let sellers = market.players().sellers();
    if sellers > PROBE_LIMIT {
        return Ok(Probe::Inconclusive);
    }
    let values = coalition_values(market, costs)?;
    let (sub, sup) = curvature(&values, sellers);
    Ok(verdict(sub, sup))
}

/// Curvature of each buyer's value over subsets of the optimum's columns.
///
/// `Subadditive` means every `g_i(T) = v_i(W*(c) restricted to T)` is
/// nondecreasing and has diminishing returns, which is what makes the
/// redistributed charges individually rational.
pub fn buyer_probe<M: Market + ?Sized>(market: &M, costs: &CostVector) -> Result<Probe> {
    let players = market.players();
    let sellers = players.sellers();
    if sellers > PROBE_LIMIT {
        return Ok(Probe::Inconclusive);
    }
    let optimum = market.solve(costs)?;
    let (mut sub, mut sup) = (true, true);
    for i in 0..players.buyers() {
        let values = (0..1usize << sellers)
            .into_par_iter()
            .map(|mask| {
                let keep: Vec<bool> = (0..sellers).map(|j| mask >> j & 1 == 1).collect();
                market.performance(i, &optimum.with_columns(&keep))
            })
            .collect::<Result<Vec<f64>>>()?;
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let monotone = (0..values.len()).all(|mask| {
            (0..sellers).all(|j| {
                mask & (1 << j) != 0 || values[mask | (1 << j)] >= values[mask] - 1e-9 * scale
            })
        });
        let (s, p) = curvature(&values, sellers);
        sub &= s && monotone;
        sup &= p;
    }
    Ok(verdict(sub, sup))
}
