//! A single buyer choosing pretraining mixture proportions.
//!
//! Validation loss follows `L(w) = b + k exp(sum_j t_j w_j)` with `w` on the
//! probability simplex; performance is `L(0) - L(w) = k (1 - exp(t . w))` and
//! sharing is `f_j = w_j^2`.
//!
//! The optimum is found from the KKT system rather than by iterating: for a
//! fixed exponent `z = t . w` the stationarity conditions
//! `k t_j e^z + 2 c_j w_j = lambda` (for `w_j > 0`) give a water-filling
//! solution in `lambda`, and the consistency residual `t . w(z) - z` is
//! strictly decreasing in `z`, so `z` is found by bisection. This stays exact
//! when one seller's cost is pushed to extreme values, where gradient methods
//! become badly conditioned.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocation::{solve_numeric, SmoothMarket, SolverSettings};
use crate::error::{MarketError, Result};
use crate::model::{Allocation, CostVector, Domain, Market, PlayerIds};

#[derive(Clone, Debug)]
pub struct DataMixtureMarket {
    loss_floor: f64,
    loss_scale: f64,
    effect_vector: Vec<f64>,
    true_costs: CostVector,
    players: PlayerIds,
}

impl DataMixtureMarket {
    pub fn new(
        loss_floor: f64,
        loss_scale: f64,
        effect_vector: Vec<f64>,
        true_costs: CostVector,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if !loss_floor.is_finite() {
            problems.push("loss_floor must be finite".to_string());
        }
        if !(loss_scale > 0.0) || !loss_scale.is_finite() {
            problems.push(format!("loss_scale must be positive, got {loss_scale}"));
        }
        if effect_vector.is_empty() {
            problems.push("a market needs at least one seller".to_string());
        }
        if effect_vector.iter().any(|t| !t.is_finite()) {
            problems.push("effect_vector must be finite".to_string());
        }
        if true_costs.len() != effect_vector.len() {
            problems.push(format!(
                "{} true costs for {} sellers",
                true_costs.len(),
                effect_vector.len()
            ));
        }
        if true_costs.as_slice().iter().any(|c| !c.is_finite()) {
            problems.push("true costs must be finite".to_string());
        }
        if !problems.is_empty() {
            return Err(MarketError::Invalid(problems));
        }
        let players = PlayerIds::new(1, effect_vector.len())?;
        Ok(DataMixtureMarket {
            loss_floor,
            loss_scale,
            effect_vector,
            true_costs,
            players,
        })
    }

    /// Random instance from a ChaCha8 stream seeded with `seed`.
    ///
    /// Draw order: `b ~ Uniform[1, 2)`, `k ~ Uniform[0.5, 2)`, then per seller
    /// `t_j ~ Uniform[-2, -0.1)`, then costs `Uniform[1, 10]`.
    pub fn random(sellers: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = rng.random_range(1.0..2.0);
        let k = rng.random_range(0.5..2.0);
        let t = (0..sellers).map(|_| rng.random_range(-2.0..-0.1)).collect();
        let costs = (0..sellers).map(|_| rng.random_range(1.0..=10.0)).collect();
        Self::new(b, k, t, CostVector::new(costs)?)
    }

    pub fn loss_floor(&self) -> f64 {
        self.loss_floor
    }

    pub fn loss_scale(&self) -> f64 {
        self.loss_scale
    }

    pub fn effect_vector(&self) -> &[f64] {
        &self.effect_vector
    }

    /// `L(w) = b + k exp(t . w)`.
    pub fn loss(&self, weights: &[f64]) -> f64 {
        self.loss_floor + self.loss_scale * self.exponent(weights).exp()
    }

    fn exponent(&self, weights: &[f64]) -> f64 {
        self.effect_vector
            .iter()
            .zip(weights)
            .map(|(t, w)| t * w)
            .sum()
    }

    /// Water-filling weights for a fixed exponent `z`.
    fn weights_at(&self, z: f64, active: &[usize], costs: &CostVector) -> Vec<f64> {
        let scale = self.loss_scale * z.exp();
        let mut order: Vec<(f64, f64)> = active
            .iter()
            .map(|&j| (scale * self.effect_vector[j], 0.5 / costs.get(j)))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut inv_sum, mut weighted_sum) = (0.0, 0.0);
        let mut lambda = 0.0;
        for (m, &(level, inv)) in order.iter().enumerate() {
            inv_sum += inv;
            weighted_sum += level * inv;
            lambda = (1.0 + weighted_sum) / inv_sum;
            if m + 1 == order.len() || lambda <= order[m + 1].0 {
                break;
            }
        }
        let mut w = vec![0.0; self.effect_vector.len()];
        for &j in active {
            let level = scale * self.effect_vector[j];
            w[j] = ((lambda - level) * 0.5 / costs.get(j)).max(0.0);
        }
        w
    }

    fn solve_kkt(&self, active: &[usize], costs: &CostVector) -> Vec<f64> {
        let (mut lo, mut hi) = active
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, &j| {
                let t = self.effect_vector[j];
                (acc.0.min(t), acc.1.max(t))
            });
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let w = self.weights_at(mid, active, costs);
            if self.exponent(&w) - mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.weights_at(0.5 * (lo + hi), active, costs)
    }
}

impl Market for DataMixtureMarket {
    fn players(&self) -> PlayerIds {
        self.players
    }

    fn domain(&self) -> Domain {
        Domain::SimplexConstrained
    }

    fn true_costs(&self) -> &CostVector {
        &self.true_costs
    }

    fn performance(&self, _buyer: usize, allocation: &Allocation) -> Result<f64> {
        let w: Vec<f64> = allocation.matrix().row(0).iter().copied().collect();
        Ok(-self.loss_scale * self.exponent(&w).exp_m1())
    }

    fn sharing(&self, seller: usize, allocation: &Allocation) -> f64 {
        allocation.get(0, seller).powi(2)
    }

    fn standalone_loss(&self, _buyer: usize) -> f64 {
        self.loss_floor + self.loss_scale
    }

    /// Optimal mixture; no present seller means nothing is bought.
    fn solve(&self, costs: &CostVector) -> Result<Allocation> {
        let sellers = self.effect_vector.len();
        if costs.len() != sellers {
            return Err(MarketError::ShapeMismatch {
                expected: format!("{sellers} costs"),
                found: format!("{} costs", costs.len()),
            });
        }
        let active: Vec<usize> = (0..sellers).filter(|&j| costs.is_present(j)).collect();
        if active.is_empty() {
            return Ok(Allocation::zeros(1, sellers));
        }
        if active.iter().any(|&j| costs.get(j) == 0.0) {
            // free data makes the problem non-strictly convex; no water-filling form
            return solve_numeric(self, costs, &SolverSettings::default());
        }
        let w = self.solve_kkt(&active, costs);
        Allocation::from_rows(&[w])
    }
}

impl SmoothMarket for DataMixtureMarket {
    fn performance_gradient(&self, _buyer: usize, allocation: &Allocation) -> DVector<f64> {
        let w: Vec<f64> = allocation.matrix().row(0).iter().copied().collect();
        let e = self.exponent(&w).exp();
        DVector::from_iterator(
            self.effect_vector.len(),
            self.effect_vector.iter().map(|t| -self.loss_scale * t * e),
        )
    }

    fn sharing_gradient(&self, seller: usize, allocation: &Allocation) -> DVector<f64> {
        DVector::from_element(1, 2.0 * allocation.get(0, seller))
    }
}
