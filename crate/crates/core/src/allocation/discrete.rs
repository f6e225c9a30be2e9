//! Cost-aware reranking for the retrieval market.
//!
//! Two valuation models are supported. Under independent scoring each
//! candidate contributes its own score, so the best selection of at most `k`
//! candidates is the `k` largest positive welfares `phi_i = s_i - c_i`.
//! Under joint scoring the valuation of a subset is looked up as a whole and
//! the best entry of a finite menu is chosen.

use crate::error::{MarketError, Result};
use crate::model::{Allocation, CostVector};

/// Select at most `k` candidates maximizing `sum (s_i - c_i)`.
///
/// Only strictly positive welfare is selected. Equal welfare breaks toward
/// the lower candidate index. An empty pool yields an empty selection.
pub fn solve_discrete(scores: &[f64], costs: &CostVector, k: usize) -> Result<Allocation> {
    if k == 0 {
        return Err(MarketError::invalid("retrieval budget k must be >= 1"));
    }
    if scores.len() != costs.len() {
        return Err(MarketError::ShapeMismatch {
            expected: format!("{} costs", scores.len()),
            found: format!("{} costs", costs.len()),
        });
    }
    let mut ranked: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s - costs.get(i)))
        .filter(|(_, phi)| *phi > 0.0)
        .collect();
    // stable sort keeps lower indices first among equal welfare
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut selected = vec![false; scores.len()];
    for (i, _) in ranked.into_iter().take(k) {
        selected[i] = true;
    }
    Ok(Allocation::from_selection(&selected))
}

/// One priced option of a joint-valuation menu: a candidate subset and its value.
#[derive(Clone, Debug, PartialEq)]
pub struct MenuEntry {
    pub members: Vec<usize>,
    pub value: f64,
}

/// Best menu entry of size at most `k`, or the empty selection.
///
/// Welfare is `value - sum of member costs`; the empty selection has welfare
/// 0 and wins ties, then smaller subsets, then lexicographically smaller ones.
pub fn solve_menu(menu: &[MenuEntry], costs: &CostVector, k: usize) -> Result<Allocation> {
    if k == 0 {
        return Err(MarketError::invalid("retrieval budget k must be >= 1"));
    }
    let mut best: (f64, &[usize]) = (0.0, &[]);
    for entry in menu {
        if entry.members.is_empty() || entry.members.len() > k {
            continue;
        }
        if let Some(&m) = entry.members.iter().find(|&&m| m >= costs.len()) {
            return Err(MarketError::invalid(format!(
                "menu references candidate {m} outside the pool of {}",
                costs.len()
            )));
        }
        let welfare = entry.value - entry.members.iter().map(|&m| costs.get(m)).sum::<f64>();
        let better = welfare > best.0
            || (welfare == best.0
                && (entry.members.len(), entry.members.as_slice()) < (best.1.len(), best.1)
                && !best.1.is_empty());
        if better {
            best = (welfare, &entry.members);
        }
    }
    let mut selected = vec![false; costs.len()];
    for &m in best.1 {
        selected[m] = true;
    }
    Ok(Allocation::from_selection(&selected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs(v: &[f64]) -> CostVector {
        CostVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn low_cost_example_picks_top_document() {
        let w = solve_discrete(&[0.9, 0.7], &costs(&[0.1, 0.05]), 1).unwrap();
        assert_eq!(w.selection(), vec![true, false]);
    }

    #[test]
    fn high_cost_example_still_picks_top_document() {
        // phi = 0.6 vs 0.5
        let w = solve_discrete(&[0.9, 0.7], &costs(&[0.3, 0.2]), 1).unwrap();
        assert_eq!(w.selection(), vec![true, false]);
    }

    #[test]
    fn negative_welfare_selects_nothing() {
        let w = solve_discrete(&[0.1, 0.2], &costs(&[0.5, 0.5]), 2).unwrap();
        assert_eq!(w.selection(), vec![false, false]);
    }

    #[test]
    fn zero_welfare_is_not_selected() {
        let w = solve_discrete(&[0.5], &costs(&[0.5]), 1).unwrap();
        assert_eq!(w.selection(), vec![false]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let w = solve_discrete(&[1.0, 1.0, 1.0], &costs(&[0.5, 0.5, 0.5]), 2).unwrap();
        assert_eq!(w.selection(), vec![true, true, false]);
    }

    #[test]
    fn empty_pool_is_empty_selection() {
        let w = solve_discrete(&[], &costs(&[]), 3).unwrap();
        assert_eq!(w.sellers(), 0);
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(solve_discrete(&[1.0], &costs(&[0.0]), 0).is_err());
    }

    #[test]
    fn absent_candidate_is_never_selected() {
        let w = solve_discrete(&[5.0, 1.0], &costs(&[f64::INFINITY, 0.1]), 1).unwrap();
        assert_eq!(w.selection(), vec![false, true]);
    }

    #[test]
    fn menu_picks_best_pair() {
        let menu = vec![
            MenuEntry {
                members: vec![0, 1],
                value: 0.9,
            },
            MenuEntry {
                members: vec![1, 2],
                value: 0.7,
            },
            MenuEntry {
                members: vec![0, 2],
                value: 0.8,
            },
        ];
        let w = solve_menu(&menu, &costs(&[0.1, 0.05, 0.1]), 2).unwrap();
        assert_eq!(w.selection(), vec![true, true, false]);
        let w = solve_menu(&menu, &costs(&[f64::INFINITY, 0.05, 0.1]), 2).unwrap();
        assert_eq!(w.selection(), vec![false, true, true]);
    }

    #[test]
    fn menu_prefers_empty_on_ties() {
        let menu = vec![MenuEntry {
            members: vec![0],
            value: 0.5,
        }];
        let w = solve_menu(&menu, &costs(&[0.5]), 1).unwrap();
        assert_eq!(w.selection(), vec![false]);
    }
}
