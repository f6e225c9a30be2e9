//! Closed-form optimum of the mean-estimation market.
//!
//! With `B = [<mu_i, mu_j>]`, `C = [<mu_j, mu_k>]`, `V = diag(sigma_j^2)` and
//! `A = diag(c_j)`, the reported-welfare maximizer is `W = B (C + V + A)^-1`.
//! Absent sellers are dropped from the linear system and get a zero column.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{MarketError, Result};
use crate::model::{Allocation, CostVector};

/// Smallest admissible ratio between the extreme Cholesky pivots, squared.
const MIN_RECIPROCAL_CONDITION: f64 = 1e-13;

/// Cached `B` and `C + V` so repeated solves only add `diag(c)`.
#[derive(Clone, Debug)]
pub struct MeanEstimationSolver {
    cross: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl MeanEstimationSolver {
    pub fn new(cross: DMatrix<f64>, seller_gram: &DMatrix<f64>, variances: &[f64]) -> Result<Self> {
        let sellers = cross.ncols();
        let mut problems = Vec::new();
        if seller_gram.nrows() != sellers || seller_gram.ncols() != sellers {
            problems.push(format!(
                "C must be {sellers}x{sellers}, got {}x{}",
                seller_gram.nrows(),
                seller_gram.ncols()
            ));
        }
        if variances.len() != sellers {
            problems.push(format!(
                "V must have {sellers} entries, got {}",
                variances.len()
            ));
        }
        if let Some(v) = variances.iter().find(|v| !(**v >= 0.0)) {
            problems.push(format!("variances must be nonnegative, got {v}"));
        }
        if !problems.is_empty() {
            return Err(MarketError::Invalid(problems));
        }
        let asym = (seller_gram - seller_gram.transpose()).amax();
        if asym > 1e-9 * seller_gram.amax().max(1.0) {
            return Err(MarketError::invalid(format!(
                "C must be symmetric (max asymmetry {asym:e})"
            )));
        }
        let mut gram = seller_gram.clone();
        for (j, v) in variances.iter().enumerate() {
            gram[(j, j)] += v;
        }
        Ok(MeanEstimationSolver { cross, gram })
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// `C + V`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn solve(&self, costs: &CostVector) -> Result<Allocation> {
        let (buyers, sellers) = self.cross.shape();
        if costs.len() != sellers {
            return Err(MarketError::ShapeMismatch {
                expected: format!("{sellers} costs"),
                found: format!("{} costs", costs.len()),
            });
        }
        let active: Vec<usize> = (0..sellers).filter(|&j| costs.is_present(j)).collect();
        let mut w = DMatrix::zeros(buyers, sellers);
        if active.is_empty() {
            return Allocation::from_matrix(w);
        }
        let n = active.len();
        let system = DMatrix::from_fn(n, n, |p, q| {
            let g = self.gram[(active[p], active[q])];
            if p == q {
                g + costs.get(active[p])
            } else {
                g
            }
        });
        let chol = Cholesky::new(system).ok_or_else(|| {
            MarketError::SingularSystem(format!(
                "C+V+A over sellers {active:?} is not positive definite"
            ))
        })?;
        let pivots: DVector<f64> = chol.l_dirty().diagonal();
        let (lo, hi) = (pivots.min(), pivots.max());
        if (lo / hi).powi(2) < MIN_RECIPROCAL_CONDITION {
            return Err(MarketError::SingularSystem(format!(
                "C+V+A over sellers {active:?} is ill-conditioned (pivot ratio {:e})",
                lo / hi
            )));
        }
        let rhs = DMatrix::from_fn(n, buyers, |p, i| self.cross[(i, active[p])]);
        let solution = chol.solve(&rhs);
        for (p, &j) in active.iter().enumerate() {
            for i in 0..buyers {
                w[(i, j)] = solution[(p, i)];
            }
        }
        Allocation::from_matrix(w)
    }
}

/// One-shot `W = B (C + V + A)^-1` with `A = diag(costs)`.
pub fn solve_mean_estimation(
    cross: &DMatrix<f64>,
    seller_gram: &DMatrix<f64>,
    variances: &[f64],
    costs: &CostVector,
) -> Result<Allocation> {
    MeanEstimationSolver::new(cross.clone(), seller_gram, variances)?.solve(costs)
}
