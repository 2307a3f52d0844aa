//! Law-invariant risk measures on Orlicz spaces: norms, Expected Shortfall
//! and Kusuoka mixtures, finite-space duality, conditional expectations on
//! partitions, and probes for the Fatou property.

pub mod distributions;
pub mod duality;
pub mod error;
pub mod harness;
pub mod io;
pub mod orlicz;
pub mod partitions;
pub mod quadrature;
pub mod risk;

pub use distributions::{AtomicRV, QuantileRV};
pub use error::{Error, Result};
pub use orlicz::OrliczFunction;
pub use partitions::Partition;
