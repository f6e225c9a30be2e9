pub mod allocation;
pub mod audit;
pub mod error;
pub mod markets;
pub mod model;
pub mod payments;
pub mod quadrature;

pub use error::{MarketError, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/markets.md")]
pub mod markets_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/allocation.md")]
pub mod allocation_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/payments.md")]
pub mod payments_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/truthful.md")]
pub mod truthful_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/redistribution.md")]
pub mod redistribution_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/audit.md")]
pub mod audit_guide {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli_guide {}
