//! Data Shapley payments.
//!
//! The value of a coalition `pi` of sellers is `sum_i v_i(W')` where `W'`
//! maximizes reported welfare over `pi` alone. Exact mode enumerates all
//! `2^|S|` coalitions; sampled mode averages marginal contributions over
//! random seller orders.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble, Outcome, SellerPayment};
use crate::error::{MarketError, Result};
use crate::model::{total_performance, CostVector, Market, PaymentResult, PaymentRule};

/// Largest market for which exact enumeration is attempted.
pub const EXACT_SHAPLEY_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShapleyMode {
    #[default]
    Exact,
    /// Permutation sampling. Permutation `p` is drawn from a ChaCha8 generator
    /// seeded with `seed` on stream `p`, so the estimate does not depend on
    /// how work is scheduled.
    Sampled { permutations: usize, seed: u64 },
}

fn check_size(sellers: usize) -> Result<()> {
    if sellers > EXACT_SHAPLEY_LIMIT {
        Err(MarketError::SizeRefused {
            sellers,
            limit: EXACT_SHAPLEY_LIMIT,
        })
    } else {
        Ok(())
    }
}

fn mask_members(mask: usize, sellers: usize) -> Vec<bool> {
    (0..sellers).map(|j| mask >> j & 1 == 1).collect()
}

fn coalition_value<M: Market + ?Sized>(market: &M, costs: &CostVector, mask: usize) -> Result<f64> {
    if mask == 0 {
        return Ok(0.0);
    }
    let sellers = market.players().sellers();
    let allocation = market.solve_subset(&mask_members(mask, sellers), costs)?;
    total_performance(market, &allocation)
}

/// `V(pi)` for every coalition, indexed by bitmask (bit `j` set when seller `j` is in).
pub fn coalition_values<M: Market + ?Sized>(market: &M, costs: &CostVector) -> Result<Vec<f64>> {
    let sellers = market.players().sellers();
    check_size(sellers)?;
    (0..1usize << sellers)
        .into_par_iter()
        .map(|mask| coalition_value(market, costs, mask))
        .collect()
}

/// `1 / (n C(n-1, s))` for `s = 0..n`.
fn weights(n: usize) -> Vec<f64> {
    let mut binom = vec![1.0f64; n];
    for s in 1..n {
        binom[s] = binom[s - 1] * (n - s) as f64 / s as f64;
    }
    binom.iter().map(|b| 1.0 / (n as f64 * b)).collect()
}

/// Exact Shapley value of seller `j` from a full table of coalition values.
pub fn shapley_from_values(values: &[f64], sellers: usize, seller: usize) -> f64 {
    let w = weights(sellers);
    let bit = 1usize << seller;
    (0..1usize << sellers)
        .filter(|mask| mask & bit == 0)
        .map(|mask| w[mask.count_ones() as usize] * (values[mask | bit] - values[mask]))
        .sum()
}

fn permutation(sellers: usize, seed: u64, index: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut order: Vec<usize> = (0..sellers).collect();
    order.shuffle(&mut rng);
    order
}

fn mean_and_standard_error(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn check_permutations(permutations: usize) -> Result<()> {
    if permutations == 0 {
        Err(MarketError::invalid(
            "sampled Shapley needs at least one permutation",
        ))
    } else {
        Ok(())
    }
}

/// Marginal contributions of every seller along each sampled order.
fn sampled_marginals<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    permutations: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let sellers = market.players().sellers();
    (0..permutations)
        .into_par_iter()
        .map(|p| {
            let order = permutation(sellers, seed, p);
            let mut marginals = vec![0.0; sellers];
            let mut members = vec![false; sellers];
            let mut previous = 0.0;
            for &j in &order {
                members[j] = true;
                let value = total_performance(market, &market.solve_subset(&members, costs)?)?;
                marginals[j] = value - previous;
                previous = value;
            }
            Ok(marginals)
        })
        .collect()
}

pub(super) fn shapley_all<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    mode: ShapleyMode,
) -> Result<Vec<SellerPayment>> {
    let sellers = market.players().sellers();
    match mode {
        ShapleyMode::Exact => {
            let values = coalition_values(market, costs)?;
            Ok((0..sellers)
                .map(|j| SellerPayment::exact(shapley_from_values(&values, sellers, j)))
                .collect())
        }
        ShapleyMode::Sampled { permutations, seed } => {
            check_permutations(permutations)?;
            let marginals = sampled_marginals(market, costs, permutations, seed)?;
            Ok((0..sellers)
                .map(|j| {
                    let column: Vec<f64> = marginals.iter().map(|m| m[j]).collect();
                    let (value, error) = mean_and_standard_error(&column);
                    SellerPayment {
                        value,
                        error,
                        truncated: false,
                    }
                })
                .collect())
        }
    }
}

/// Shapley payment of one seller.
///
/// `excluded`, when given, holds `V(pi)` for every coalition without `j`
/// (indexed by bitmask); those values do not depend on `j`'s report and can
/// be reused across a misreport sweep.
pub fn shapley_seller_payment<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    seller: usize,
    excluded: Option<&[f64]>,
    mode: ShapleyMode,
) -> Result<SellerPayment> {
    let sellers = market.players().sellers();
    match mode {
        ShapleyMode::Exact => {
            check_size(sellers)?;
            let bit = 1usize << seller;
            let owned;
            let without = match excluded {
                Some(v) => v,
                None => {
                    owned = excluded_coalition_values(market, costs, seller)?;
                    &owned
                }
            };
            let w = weights(sellers);
            let terms = (0..1usize << sellers)
                .into_par_iter()
                .filter(|mask| mask & bit == 0)
                .map(|mask| {
                    let with = coalition_value(market, costs, mask | bit)?;
                    Ok(w[mask.count_ones() as usize] * (with - without[mask]))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SellerPayment::exact(terms.iter().sum()))
        }
        ShapleyMode::Sampled { permutations, seed } => {
            check_permutations(permutations)?;
            let samples = (0..permutations)
                .into_par_iter()
                .map(|p| {
                    let order = permutation(sellers, seed, p);
                    let position = order.iter().position(|&k| k == seller).expect("in order");
                    let mut members = vec![false; sellers];
                    for &k in &order[..position] {
                        members[k] = true;
                    }
                    let before = if position == 0 {
                        0.0
                    } else {
                        total_performance(market, &market.solve_subset(&members, costs)?)?
                    };
                    members[seller] = true;
                    let after = total_performance(market, &market.solve_subset(&members, costs)?)?;
                    Ok(after - before)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (value, error) = mean_and_standard_error(&samples);
            Ok(SellerPayment {
                value,
                error,
                truncated: false,
            })
        }
    }
}

/// `V(pi)` for coalitions without `seller`; entries for masks containing it are NaN.
pub fn excluded_coalition_values<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    seller: usize,
) -> Result<Vec<f64>> {
    let sellers = market.players().sellers();
    check_size(sellers)?;
    let bit = 1usize << seller;
    (0..1usize << sellers)
        .into_par_iter()
        .map(|mask| {
            if mask & bit != 0 {
                Ok(f64::NAN)
            } else {
                coalition_value(market, costs, mask)
            }
        })
        .collect()
}

/// Shapley payments to every seller at reported costs `costs`.
pub fn shapley_payment<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    mode: ShapleyMode,
) -> Result<PaymentResult> {
    let outcome = Outcome::solve(market, costs)?;
    let payments = shapley_all(market, costs, mode)?;
    assemble(
        market,
        PaymentRule::Shapley,
        costs,
        outcome.allocation,
        &payments,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_over_orders() {
        // sum_s C(n-1, s) w(s) = 1
        let n = 7;
        let w = weights(n);
        let mut binom = 1.0;
        let mut total = 0.0;
        for (s, ws) in w.iter().enumerate() {
            total += binom * ws;
            binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
        }
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn additive_game_pays_own_value() {
        let n = 4;
        let own = [1.0, 2.0, 3.0, 4.0];
        let values: Vec<f64> = (0..1usize << n)
            .map(|m| (0..n).filter(|j| m >> j & 1 == 1).map(|j| own[j]).sum())
            .collect();
        for j in 0..n {
            assert!((shapley_from_values(&values, n, j) - own[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn permutations_are_reproducible_per_stream() {
        assert_eq!(permutation(6, 3, 2), permutation(6, 3, 2));
        assert_ne!(permutation(8, 3, 0), permutation(8, 3, 1));
    }
}
