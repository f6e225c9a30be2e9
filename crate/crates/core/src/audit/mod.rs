//! Misreport sweeps, best responses, price of anarchy and mechanism audits.

mod grid;
mod sweep;
mod verdict;

pub use grid::{check_grid, grid_step, GridSpec, Spacing};
pub use sweep::{
    best_response, best_response_index, misreport_sweep, sweep_records, SellerGrid, SweepRecord,
    SWEEP_COLUMNS,
};
pub use verdict::{
    mechanism_audit, mechanism_audit_with_sweeps, price_of_anarchy, AuditOptions, AuditVerdict,
    RuleSweeps, IR_TOLERANCE,
};
