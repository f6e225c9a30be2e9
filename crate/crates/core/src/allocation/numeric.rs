//! Projected gradient ascent on reported social welfare.
//!
//! Works for any market that can differentiate its performance and sharing
//! functions. Unconstrained markets use the identity projection; simplex
//! markets project each row onto the probability simplex over the sellers
//! that are present. Absent sellers are pinned at zero.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::model::{Allocation, CostVector, Domain, Market};

/// A market whose `v_i` and `f_j` are differentiable in `W`.
pub trait SmoothMarket: Market {
    /// Gradient of `v_i` with respect to row `i` of `W`.
    fn performance_gradient(&self, buyer: usize, allocation: &Allocation) -> DVector<f64>;

    /// Gradient of `f_j` with respect to column `j` of `W`.
    fn sharing_gradient(&self, seller: usize, allocation: &Allocation) -> DVector<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Fixed(f64),
    Backtracking,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Bound on the projected-gradient (KKT) residual, max norm.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub step_rule: StepRule,
    /// Seeds the starting point.
    pub random_seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            gradient_tolerance: 1e-8,
            max_iterations: 10_000,
            step_rule: StepRule::Backtracking,
            random_seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.gradient_tolerance > 0.0) {
            problems.push("gradient_tolerance must be > 0".to_string());
        }
        if self.max_iterations == 0 {
            problems.push("max_iterations must be >= 1".to_string());
        }
        if let StepRule::Fixed(step) = self.step_rule {
            if !(step > 0.0) {
                problems.push("fixed step must be > 0".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(MarketError::Invalid(problems))
        }
    }
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = 1}`.
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (idx, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (idx + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn project(domain: Domain, w: &mut DMatrix<f64>, active: &[bool]) {
    for (j, &a) in active.iter().enumerate() {
        if !a {
            w.column_mut(j).fill(0.0);
        }
    }
    if domain == Domain::SimplexConstrained {
        let cols: Vec<usize> = (0..active.len()).filter(|&j| active[j]).collect();
        for i in 0..w.nrows() {
            let row: Vec<f64> = cols.iter().map(|&j| w[(i, j)]).collect();
            for (p, x) in project_onto_simplex(&row).into_iter().enumerate() {
                w[(i, cols[p])] = x;
            }
        }
    }
}

fn welfare_gradient<M: SmoothMarket + ?Sized>(
    market: &M,
    allocation: &Allocation,
    costs: &CostVector,
) -> DMatrix<f64> {
    let players = market.players();
    let mut grad = DMatrix::zeros(players.buyers(), players.sellers());
    for i in 0..players.buyers() {
        let g = market.performance_gradient(i, allocation);
        for j in 0..players.sellers() {
            grad[(i, j)] += g[j];
        }
    }
    for j in 0..players.sellers() {
        if !costs.is_present(j) {
            continue;
        }
        let g = market.sharing_gradient(j, allocation);
        let c = costs.get(j);
        for i in 0..players.buyers() {
            grad[(i, j)] -= c * g[i];
        }
    }
    grad
}

fn starting_point(domain: Domain, buyers: usize, active: &[bool], seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::from_fn(buyers, active.len(), |_, _| match domain {
        Domain::SimplexConstrained => rng.random::<f64>() + 0.5,
        _ => 0.0,
    });
    if domain == Domain::SimplexConstrained {
        for i in 0..buyers {
            let total: f64 = (0..active.len())
                .filter(|&j| active[j])
                .map(|j| w[(i, j)])
                .sum();
            for j in 0..active.len() {
                w[(i, j)] = if active[j] { w[(i, j)] / total } else { 0.0 };
            }
        }
    }
    w
}

/// Maximize reported social welfare by projected gradient ascent.
///
/// Returns once the projected-gradient residual
/// `max |W - P(W + grad SW(W))|` drops below `settings.gradient_tolerance`.
pub fn solve_numeric<M: SmoothMarket + ?Sized>(
    market: &M,
    costs: &CostVector,
    settings: &SolverSettings,
) -> Result<Allocation> {
    settings.validate()?;
    let domain = market.domain();
    if domain == Domain::Discrete {
        return Err(MarketError::UnsupportedDomain {
            operation: "solve_numeric",
            domain: domain.to_string(),
        });
    }
    let players = market.players();
    if costs.len() != players.sellers() {
        return Err(MarketError::ShapeMismatch {
            expected: format!("{} costs", players.sellers()),
            found: format!("{} costs", costs.len()),
        });
    }
    let active = costs.present();
    if !active.iter().any(|&a| a) {
        return Ok(Allocation::zeros(players.buyers(), players.sellers()));
    }

    let gradient = |w: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        Ok(welfare_gradient(
            market,
            &Allocation::from_matrix(w.clone())?,
            costs,
        ))
    };

    let mut w = starting_point(domain, players.buyers(), &active, settings.random_seed);
    let mut grad = gradient(&w)?;
    let mut step = match settings.step_rule {
        StepRule::Fixed(s) => s,
        StepRule::Backtracking => 1.0,
    };
    let mut residual = f64::INFINITY;
    for _ in 0..settings.max_iterations {
        let mut unit = &w + &grad;
        project(domain, &mut unit, &active);
        residual = (&unit - &w).amax();
        if residual <= settings.gradient_tolerance {
            return Allocation::from_matrix(w);
        }

        let (next, next_grad) = match settings.step_rule {
            StepRule::Fixed(s) => {
                let mut next = &w + &grad * s;
                project(domain, &mut next, &active);
                let g = gradient(&next)?;
                (next, g)
            }
            // Accept when the curvature along the step is at most 1/step. This
            // is the sufficient-ascent test written with gradients, which
            // stays accurate when objective differences fall below roundoff.
            StepRule::Backtracking => loop {
                let mut next = &w + &grad * step;
                project(domain, &mut next, &active);
                let delta = &next - &w;
                let g = gradient(&next)?;
                let curvature = -(&g - &grad).dot(&delta);
                if curvature <= delta.norm_squared() / step {
                    step *= 2.0;
                    break (next, g);
                }
                step *= 0.5;
                if step < 1e-20 {
                    return Err(MarketError::NotConverged {
                        iterations: settings.max_iterations,
                        residual,
                    });
                }
            },
        };
        w = next;
        grad = next_grad;
    }
    Err(MarketError::NotConverged {
        iterations: settings.max_iterations,
        residual,
    })
}
