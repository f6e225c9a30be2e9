//! Welfare-maximizing allocation solvers.

pub mod closed_form;
pub mod discrete;
pub mod numeric;
mod welfare;

pub use closed_form::{solve_mean_estimation, MeanEstimationSolver};
pub use discrete::{solve_discrete, solve_menu, MenuEntry};
pub use numeric::{project_onto_simplex, solve_numeric, SmoothMarket, SolverSettings, StepRule};
pub use welfare::social_welfare;
