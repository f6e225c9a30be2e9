use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

impl std::str::FromStr for Spacing {
    type Err = MarketError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Spacing::Log),
            "linear" => Ok(Spacing::Linear),
            other => Err(MarketError::invalid(format!(
                "unknown grid spacing `{other}` (expected log or linear)"
            ))),
        }
    }
}

/// Reported-cost grid for a misreport sweep.
///
/// With `relative` set, `low` and `high` are multiples of the seller's true
/// cost. `include_truth` inserts the true cost itself so that a truthful
/// best response can be hit exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub low: f64,
    pub high: f64,
    pub relative: bool,
    pub points: usize,
    pub spacing: Spacing,
    pub include_truth: bool,
}

impl Default for GridSpec {
    /// 100 log-spaced points over `[c_j / 10, 10 c_j]`, plus `c_j`.
    fn default() -> Self {
        GridSpec {
            low: 0.1,
            high: 10.0,
            relative: true,
            points: 100,
            spacing: Spacing::Log,
            include_truth: true,
        }
    }
}

impl GridSpec {
    pub fn absolute(low: f64, high: f64, points: usize, spacing: Spacing) -> Self {
        GridSpec {
            low,
            high,
            relative: false,
            points,
            spacing,
            include_truth: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.low > 0.0 && self.low.is_finite()) {
            problems.push(format!("grid low must be > 0, got {}", self.low));
        }
        if !(self.high > self.low && self.high.is_finite()) {
            problems.push(format!("grid high must exceed low, got {}", self.high));
        }
        if self.points < 2 {
            problems.push(format!("grid needs at least 2 points, got {}", self.points));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(MarketError::Invalid(problems))
        }
    }

    /// Ascending grid for a seller whose true cost is `truth`.
    ///
    /// ```
    /// use datamarket::audit::GridSpec;
    /// let g = GridSpec::default().points_for(5.0).unwrap();
    /// assert_eq!(g.len(), 101);
    /// assert!(g.contains(&5.0));
    /// assert!((g[0] - 0.5).abs() < 1e-12 && (g[100] - 50.0).abs() < 1e-9);
    /// ```
    pub fn points_for(&self, truth: f64) -> Result<Vec<f64>> {
        self.validate()?;
        let (low, high) = if self.relative {
            if !(truth > 0.0 && truth.is_finite()) {
                return Err(MarketError::invalid(format!(
                    "a relative grid needs a positive true cost, got {truth}"
                )));
            }
            (self.low * truth, self.high * truth)
        } else {
            (self.low, self.high)
        };
        let last = (self.points - 1) as f64;
        let mut grid: Vec<f64> = (0..self.points)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Log => low * (high / low).powf(t),
                    Spacing::Linear => low + (high - low) * t,
                }
            })
            .collect();
        grid[0] = low;
        grid[self.points - 1] = high;
        if self.include_truth && truth >= low && truth <= high && !grid.contains(&truth) {
            let at = grid.partition_point(|&x| x < truth);
            grid.insert(at, truth);
        }
        Ok(grid)
    }
}

/// Check a user-supplied grid: strictly ascending and positive.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(MarketError::invalid("grid is empty"));
    }
    if grid.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(MarketError::invalid("grid points must be finite and > 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MarketError::invalid("grid must be strictly ascending"));
    }
    Ok(())
}

/// Largest gap between `grid[index]` and its neighbours.
pub fn grid_step(grid: &[f64], index: usize) -> f64 {
    let left = index.checked_sub(1).map(|k| grid[index] - grid[k]);
    let right = grid.get(index + 1).map(|x| x - grid[index]);
    left.into_iter().chain(right).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_grid_is_even() {
        let g = GridSpec::absolute(1.0, 3.0, 5, Spacing::Linear)
            .points_for(10.0)
            .unwrap();
        assert_eq!(g, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn truth_outside_absolute_grid_is_not_inserted() {
        let g = GridSpec::absolute(1.0, 2.0, 3, Spacing::Log)
            .points_for(5.0)
            .unwrap();
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn invalid_grids_list_every_problem() {
        let bad = GridSpec {
            low: -1.0,
            high: -2.0,
            points: 1,
            ..GridSpec::default()
        };
        assert!(matches!(bad.validate(), Err(MarketError::Invalid(p)) if p.len() == 3));
        assert!(check_grid(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn step_uses_wider_neighbour() {
        let g = [1.0, 2.0, 4.0];
        assert_eq!(grid_step(&g, 1), 2.0);
        assert_eq!(grid_step(&g, 0), 1.0);
    }
}
