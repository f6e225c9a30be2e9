//! Buyers estimate their means by weighting sellers' unbiased local estimates.
//!
//! Buyer `i`'s loss is the expected squared error of `sum_j w_ij mu_hat_j`
//! against `mu_i`, which expands to
//! `W_i (C + V) W_i^T - 2 W_i B_i^T + mu_i^T mu_i`; its performance is the drop
//! from the standalone loss `mu_i^T mu_i`. Sharing is `f_j = sum_i w_ij^2`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::allocation::{MeanEstimationSolver, SmoothMarket};
use crate::error::{MarketError, Result};
use crate::model::{Allocation, CostVector, Domain, Market, PlayerIds};

#[derive(Clone, Debug)]
pub struct MeanEstimationMarket {
    buyer_means: Vec<Vec<f64>>,
    seller_means: Vec<Vec<f64>>,
    seller_variances: Vec<f64>,
    true_costs: CostVector,
    players: PlayerIds,
    solver: MeanEstimationSolver,
    buyer_norms: Vec<f64>,
}

fn gram(rows_a: &[Vec<f64>], rows_b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows_a.len(), rows_b.len(), |i, j| {
        rows_a[i].iter().zip(&rows_b[j]).map(|(x, y)| x * y).sum()
    })
}

impl MeanEstimationMarket {
    pub fn new(
        buyer_means: Vec<Vec<f64>>,
        seller_means: Vec<Vec<f64>>,
        seller_variances: Vec<f64>,
        true_costs: CostVector,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        let dim = buyer_means.first().map_or(0, Vec::len);
        if dim == 0 {
            problems.push("means must have dimension >= 1".to_string());
        }
        for (i, mu) in buyer_means.iter().enumerate() {
            if mu.len() != dim {
                problems.push(format!(
                    "buyer {i} mean has dimension {} (expected {dim})",
                    mu.len()
                ));
            }
        }
        for (j, mu) in seller_means.iter().enumerate() {
            if mu.len() != dim {
                problems.push(format!(
                    "seller {j} mean has dimension {} (expected {dim})",
                    mu.len()
                ));
            }
        }
        if buyer_means
            .iter()
            .chain(&seller_means)
            .flatten()
            .any(|x| !x.is_finite())
        {
            problems.push("means must be finite".to_string());
        }
        if seller_variances.len() != seller_means.len() {
            problems.push(format!(
                "{} variances for {} sellers",
                seller_variances.len(),
                seller_means.len()
            ));
        }
        if seller_variances
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            problems.push("seller variances must be finite and >= 0".to_string());
        }
        if true_costs.len() != seller_means.len() {
            problems.push(format!(
                "{} true costs for {} sellers",
                true_costs.len(),
                seller_means.len()
            ));
        }
        if true_costs.as_slice().iter().any(|c| !c.is_finite()) {
            problems.push("true costs must be finite".to_string());
        }
        let players = match PlayerIds::new(buyer_means.len(), seller_means.len()) {
            Ok(p) => Some(p),
            Err(MarketError::Invalid(p)) => {
                problems.extend(p);
                None
            }
            Err(e) => return Err(e),
        };
        if !problems.is_empty() {
            return Err(MarketError::Invalid(problems));
        }
        let cross = gram(&buyer_means, &seller_means);
        let seller_gram = gram(&seller_means, &seller_means);
        let solver = MeanEstimationSolver::new(cross, &seller_gram, &seller_variances)?;
        let buyer_norms = buyer_means
            .iter()
            .map(|mu| mu.iter().map(|x| x * x).sum())
            .collect();
        Ok(MeanEstimationMarket {
            buyer_means,
            seller_means,
            seller_variances,
            true_costs,
            players: players.expect("validated"),
            solver,
            buyer_norms,
        })
    }

    /// Random instance drawn from a ChaCha8 stream seeded with `seed`.
    ///
    /// Draw order: buyer means then seller means (row-major, each coordinate
    /// `Normal(1, 1)`), then seller variances `Uniform[0, 1)`, then true costs
    /// `Uniform[1, 10]`.
    pub fn random(buyers: usize, sellers: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(MarketError::invalid("dimension must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(1.0, 1.0).expect("valid normal");
        let mut draw_means = |count: usize| -> Vec<Vec<f64>> {
            (0..count)
                .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
                .collect()
        };
        let buyer_means = draw_means(buyers);
        let seller_means = draw_means(sellers);
        let variances = (0..sellers).map(|_| rng.random::<f64>()).collect();
        let costs = (0..sellers).map(|_| rng.random_range(1.0..=10.0)).collect();
        Self::new(
            buyer_means,
            seller_means,
            variances,
            CostVector::new(costs)?,
        )
    }

    pub fn buyer_means(&self) -> &[Vec<f64>] {
        &self.buyer_means
    }

    pub fn seller_means(&self) -> &[Vec<f64>] {
        &self.seller_means
    }

    pub fn seller_variances(&self) -> &[f64] {
        &self.seller_variances
    }

    /// `B = [<mu_i, mu_j>]`, buyers by sellers.
    pub fn cross(&self) -> &DMatrix<f64> {
        self.solver.cross()
    }

    /// `C = [<mu_j, mu_k>]` over sellers.
    pub fn seller_gram(&self) -> DMatrix<f64> {
        gram(&self.seller_means, &self.seller_means)
    }

    /// `mu_i^T mu_i`, the loss of buying nothing.
    pub fn buyer_norms(&self) -> &[f64] {
        &self.buyer_norms
    }

    pub fn solver(&self) -> &MeanEstimationSolver {
        &self.solver
    }
}

/// Random mean-estimation market; sizes default to 5 buyers, 10 sellers, d = 3
/// in the CLI.
pub fn build_random_mean_market(
    buyers: usize,
    sellers: usize,
    dim: usize,
    seed: u64,
) -> Result<MeanEstimationMarket> {
    MeanEstimationMarket::random(buyers, sellers, dim, seed)
}

impl Market for MeanEstimationMarket {
    fn players(&self) -> PlayerIds {
        self.players
    }

    fn domain(&self) -> Domain {
        Domain::Unconstrained
    }

    fn true_costs(&self) -> &CostVector {
        &self.true_costs
    }

    fn performance(&self, buyer: usize, allocation: &Allocation) -> Result<f64> {
        let w = allocation.matrix().row(buyer);
        let linear = w.dot(&self.solver.cross().row(buyer));
        let quadratic = (&w * self.solver.gram()).dot(&w);
        Ok(2.0 * linear - quadratic)
    }

    fn sharing(&self, seller: usize, allocation: &Allocation) -> f64 {
        allocation.matrix().column(seller).norm_squared()
    }

    fn standalone_loss(&self, buyer: usize) -> f64 {
        self.buyer_norms[buyer]
    }

    fn solve(&self, costs: &CostVector) -> Result<Allocation> {
        self.solver.solve(costs)
    }
}

impl SmoothMarket for MeanEstimationMarket {
    fn performance_gradient(&self, buyer: usize, allocation: &Allocation) -> DVector<f64> {
        let w = allocation.matrix().row(buyer).transpose();
        let b = self.solver.cross().row(buyer).transpose();
        2.0 * b - 2.0 * (self.solver.gram() * w)
    }

    fn sharing_gradient(&self, seller: usize, allocation: &Allocation) -> DVector<f64> {
        2.0 * allocation.matrix().column(seller).into_owned()
    }
}
