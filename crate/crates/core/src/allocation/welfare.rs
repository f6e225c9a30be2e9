use crate::error::Result;
use crate::model::{Allocation, CostVector, Market, WelfareReport};

/// Buyer values, seller sharing, `SW = sum v_i - sum c_j f_j` and the matching
/// social cost `SC = sum l_i(0) - SW` for one allocation.
///
/// Absent sellers (infinite cost) must have zero sharing and contribute no cost.
pub fn social_welfare<M: Market + ?Sized>(
    market: &M,
    allocation: &Allocation,
    costs: &CostVector,
) -> Result<WelfareReport> {
    let players = market.players();
    allocation.check_shape(players)?;
    let per_buyer_value = (0..players.buyers())
        .map(|i| market.performance(i, allocation))
        .collect::<Result<Vec<f64>>>()?;
    let per_seller_sharing: Vec<f64> = (0..players.sellers())
        .map(|j| market.sharing(j, allocation))
        .collect();
    let per_seller_cost: Vec<f64> = per_seller_sharing
        .iter()
        .enumerate()
        .map(|(j, f)| if *f == 0.0 { 0.0 } else { costs.get(j) * f })
        .collect();
    let social_welfare = per_buyer_value.iter().sum::<f64>() - per_seller_cost.iter().sum::<f64>();
    let standalone: f64 = (0..players.buyers())
        .map(|i| market.standalone_loss(i))
        .sum();
    Ok(WelfareReport {
        per_buyer_value,
        per_seller_sharing,
        per_seller_cost,
        social_welfare,
        social_cost: standalone - social_welfare,
    })
}
