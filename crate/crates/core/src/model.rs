//! Shared domain types and the contract every market fulfills.
//!
//! A market owns the buyers' performance functions `v_i`, the sellers'
//! sharing magnitudes `f_j` and the sellers' true unit costs. Everything
//! downstream (payments, audits) talks to markets only through [`Market`].
//!
//! An absent seller is encoded as an infinite reported cost rather than by
//! shrinking matrices, so seller indices stay stable across leave-one-out,
//! VCG and Shapley computations.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MarketError, Result};

/// Sizes of the buyer and seller index sets.
///
/// Buyers are `0..buyers` and sellers are `0..sellers`; the two live in
/// separate namespaces so they are disjoint by construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerIds {
    buyers: usize,
    sellers: usize,
}

impl PlayerIds {
    pub fn new(buyers: usize, sellers: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if buyers == 0 {
            problems.push("a market needs at least one buyer".to_string());
        }
        if sellers == 0 {
            problems.push("a market needs at least one seller".to_string());
        }
        if problems.is_empty() {
            Ok(PlayerIds { buyers, sellers })
        } else {
            Err(MarketError::Invalid(problems))
        }
    }

    pub fn buyers(&self) -> usize {
        self.buyers
    }

    pub fn sellers(&self) -> usize {
        self.sellers
    }
}

/// Per-seller unit costs, true or reported.
///
/// Entries are nonnegative; `f64::INFINITY` marks a seller as absent.
/// In JSON an absent seller is written as `null`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let problems: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_nan() || **c < 0.0)
            .map(|(j, c)| format!("cost of seller {j} must be >= 0, got {c}"))
            .collect();
        if problems.is_empty() {
            Ok(CostVector(values))
        } else {
            Err(MarketError::Invalid(problems))
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, seller: usize) -> f64 {
        self.0[seller]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_present(&self, seller: usize) -> bool {
        self.0[seller].is_finite()
    }

    /// Copy with seller `j`'s cost replaced.
    pub fn with_cost(&self, seller: usize, cost: f64) -> Self {
        debug_assert!(!(cost < 0.0) && !cost.is_nan());
        let mut values = self.0.clone();
        values[seller] = cost;
        CostVector(values)
    }

    /// Copy with seller `j` removed from the market.
    pub fn without(&self, seller: usize) -> Self {
        self.with_cost(seller, f64::INFINITY)
    }

    /// Copy where every seller outside `coalition` is absent.
    pub fn restricted_to(&self, coalition: &[bool]) -> Self {
        CostVector(
            self.0
                .iter()
                .zip(coalition)
                .map(|(&c, &member)| if member { c } else { f64::INFINITY })
                .collect(),
        )
    }

    /// Largest finite entry, or 0 when every seller is absent.
    pub fn max_finite(&self) -> f64 {
        self.0
            .iter()
            .copied()
            .filter(|c| c.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn present(&self) -> Vec<bool> {
        self.0.iter().map(|c| c.is_finite()).collect()
    }
}

impl Serialize for CostVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<Option<f64>> = self
            .0
            .iter()
            .map(|&c| if c.is_finite() { Some(c) } else { None })
            .collect();
        entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CostVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let entries: Vec<Option<f64>> = Vec::deserialize(deserializer)?;
        let values = entries
            .into_iter()
            .map(|c| c.unwrap_or(f64::INFINITY))
            .collect();
        CostVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// Information-exchange matrix `W`, shape `|B| x |S|`.
///
/// Discrete markets use a single row of 0/1 entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation(DMatrix<f64>);

impl Allocation {
    pub fn zeros(buyers: usize, sellers: usize) -> Self {
        Allocation(DMatrix::zeros(buyers, sellers))
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().all(|w| w.is_finite()) {
            Ok(Allocation(matrix))
        } else {
            Err(MarketError::invalid("allocation entries must be finite"))
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let buyers = rows.len();
        let sellers = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != sellers) {
            return Err(MarketError::invalid("allocation rows have unequal lengths"));
        }
        Self::from_matrix(DMatrix::from_fn(buyers, sellers, |i, j| rows[i][j]))
    }

    /// Single-row 0/1 allocation from a selection mask.
    pub fn from_selection(selected: &[bool]) -> Self {
        Allocation(DMatrix::from_fn(1, selected.len(), |_, j| {
            if selected[j] {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn buyers(&self) -> usize {
        self.0.nrows()
    }

    pub fn sellers(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, buyer: usize, seller: usize) -> f64 {
        self.0[(buyer, seller)]
    }

    /// The allocation with seller `j`'s column set to zero, all else unchanged.
    pub fn with_column_zeroed(&self, seller: usize) -> Self {
        let mut m = self.0.clone();
        m.column_mut(seller).fill(0.0);
        Allocation(m)
    }

    /// Keep only the columns in `keep`, zeroing the rest.
    pub fn with_columns(&self, keep: &[bool]) -> Self {
        let mut m = self.0.clone();
        for (j, &k) in keep.iter().enumerate() {
            if !k {
                m.column_mut(j).fill(0.0);
            }
        }
        Allocation(m)
    }

    /// Selected sellers of a single-row discrete allocation.
    pub fn selection(&self) -> Vec<bool> {
        (0..self.sellers())
            .map(|j| self.0.column(j).iter().any(|&w| w != 0.0))
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub(crate) fn check_shape(&self, players: PlayerIds) -> Result<()> {
        if self.buyers() != players.buyers() || self.sellers() != players.sellers() {
            return Err(MarketError::ShapeMismatch {
                expected: format!("{}x{}", players.buyers(), players.sellers()),
                found: format!("{}x{}", self.buyers(), self.sellers()),
            });
        }
        Ok(())
    }
}

impl Serialize for Allocation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Allocation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        Allocation::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Buyer values, seller sharing and the resulting welfare of one allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub per_buyer_value: Vec<f64>,
    pub per_seller_sharing: Vec<f64>,
    pub per_seller_cost: Vec<f64>,
    pub social_welfare: f64,
    pub social_cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaymentRule {
    Direct,
    Loo,
    Shapley,
    Myerson,
    Vcg,
}

impl PaymentRule {
    pub const ALL: [PaymentRule; 5] = [
        PaymentRule::Direct,
        PaymentRule::Loo,
        PaymentRule::Shapley,
        PaymentRule::Myerson,
        PaymentRule::Vcg,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PaymentRule::Direct => "direct",
            PaymentRule::Loo => "loo",
            PaymentRule::Shapley => "shapley",
            PaymentRule::Myerson => "myerson",
            PaymentRule::Vcg => "vcg",
        }
    }
}

impl fmt::Display for PaymentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PaymentRule {
    type Err = MarketError;

    fn from_str(s: &str) -> Result<Self> {
        PaymentRule::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                MarketError::invalid(format!(
                    "unknown payment rule `{s}` (expected direct, loo, shapley, myerson or vcg)"
                ))
            })
    }
}

/// Outcome of one payment rule on one reported cost profile.
///
/// Utilities are evaluated against the market's true costs; `welfare` is the
/// report of the allocation chosen for the reported costs, also at true costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaymentResult {
    pub rule: PaymentRule,
    pub reported_costs: CostVector,
    pub allocation: Allocation,
    pub seller_payments: Vec<f64>,
    pub buyer_charges: Option<Vec<f64>>,
    pub seller_utilities: Vec<f64>,
    pub buyer_utilities: Vec<f64>,
    /// Total charges minus total payments; `None` until charges are assigned.
    pub budget_gap: Option<f64>,
    pub welfare: WelfareReport,
    /// Per-seller numerical error (quadrature error or Shapley standard error).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_estimates: Option<Vec<f64>>,
    /// Sellers whose Myerson integrand had not decayed at the integration cap.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truncated: Vec<usize>,
}

impl PaymentResult {
    /// Attach buyer charges and refresh buyer utilities and the budget gap.
    pub fn with_buyer_charges(mut self, charges: Vec<f64>) -> Self {
        self.buyer_utilities = self
            .welfare
            .per_buyer_value
            .iter()
            .zip(&charges)
            .map(|(v, p)| v - p)
            .collect();
        self.budget_gap =
            Some(charges.iter().sum::<f64>() - self.seller_payments.iter().sum::<f64>());
        self.buyer_charges = Some(charges);
        self
    }
}

/// Shape of the feasible allocation set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Unconstrained,
    SimplexConstrained,
    Discrete,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Unconstrained => "unconstrained",
            Domain::SimplexConstrained => "simplex-constrained",
            Domain::Discrete => "discrete",
        })
    }
}

/// What the mechanism needs from a market.
///
/// `solve` maximizes reported social welfare `sum_i v_i(W) - sum_j c_j f_j(W)`.
/// Sellers with infinite reported cost must come back with a zero column.
pub trait Market: Send + Sync {
    fn players(&self) -> PlayerIds;

    fn domain(&self) -> Domain;

    fn true_costs(&self) -> &CostVector;

    /// Buyer `i`'s improvement over its standalone loss; zero at `W = 0`.
    fn performance(&self, buyer: usize, allocation: &Allocation) -> Result<f64>;

    /// Seller `j`'s sharing magnitude `f_j(W) >= 0`.
    fn sharing(&self, seller: usize, allocation: &Allocation) -> f64;

    /// Buyer `i`'s loss before buying anything; `loss = standalone - performance`.
    fn standalone_loss(&self, buyer: usize) -> f64;

    fn solve(&self, costs: &CostVector) -> Result<Allocation>;

    /// Welfare-maximizing allocation over the sellers in `coalition` only.
    fn solve_subset(&self, coalition: &[bool], costs: &CostVector) -> Result<Allocation> {
        self.solve(&costs.restricted_to(coalition))
    }
}

/// Sum of buyer performances.
pub fn total_performance<M: Market + ?Sized>(market: &M, allocation: &Allocation) -> Result<f64> {
    (0..market.players().buyers())
        .map(|i| market.performance(i, allocation))
        .sum()
}

pub fn sharing_vector<M: Market + ?Sized>(market: &M, allocation: &Allocation) -> Vec<f64> {
    (0..market.players().sellers())
        .map(|j| market.sharing(j, allocation))
        .collect()
}

/// `sum_i v_i(W) - sum_{k != skip} c_k f_k(W)`, skipping absent sellers.
pub fn welfare_excluding<M: Market + ?Sized>(
    market: &M,
    allocation: &Allocation,
    costs: &CostVector,
    skip: Option<usize>,
) -> Result<f64> {
    let value = total_performance(market, allocation)?;
    let cost: f64 = (0..market.players().sellers())
        .filter(|&k| Some(k) != skip && costs.is_present(k))
        .map(|k| costs.get(k) * market.sharing(k, allocation))
        .sum();
    Ok(value - cost)
}

/// Summary of what a market provides, checked against the contract.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarketContract {
    pub domain: Domain,
    pub buyers: usize,
    pub sellers: usize,
}

/// Check that a market honours the contract on its own true costs.
///
/// Verifies: zero allocation has zero performance, the optimum at true costs
/// has finite nonnegative sharing, and every seller vanishes when its cost is
/// set to infinity.
pub fn market_contract<M: Market + ?Sized>(market: &M) -> Result<MarketContract> {
    let players = market.players();
    let costs = market.true_costs();
    let mut problems = Vec::new();
    if costs.len() != players.sellers() {
        problems.push(format!(
            "true cost vector has {} entries for {} sellers",
            costs.len(),
            players.sellers()
        ));
        return Err(MarketError::Invalid(problems));
    }
    let zero = Allocation::zeros(players.buyers(), players.sellers());
    for i in 0..players.buyers() {
        let v = market.performance(i, &zero)?;
        if v.abs() > 1e-12 {
            problems.push(format!(
                "buyer {i} has performance {v} at the zero allocation"
            ));
        }
    }
    let optimum = market.solve(costs)?;
    optimum.check_shape(players)?;
    for j in 0..players.sellers() {
        let f = market.sharing(j, &optimum);
        if !f.is_finite() || f < 0.0 {
            problems.push(format!("seller {j} has sharing {f} at the optimum"));
        }
        let absent = market.solve(&costs.without(j))?;
        let f_absent = market.sharing(j, &absent);
        if f_absent != 0.0 {
            problems.push(format!("seller {j} still shares {f_absent} when absent"));
        }
    }
    if problems.is_empty() {
        Ok(MarketContract {
            domain: market.domain(),
            buyers: players.buyers(),
            sellers: players.sellers(),
        })
    } else {
        Err(MarketError::Invalid(problems))
    }
}
