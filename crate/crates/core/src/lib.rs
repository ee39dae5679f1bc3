//! Exact and certified numerics for units of the real cyclotomic fields
//! `Q(2cos(2π/2^{n+2}))`: minimal traces of relative units, enumeration of
//! short log-lattice vectors, a nested min-max bound, and indivisibility
//! certificates for class numbers.

pub mod approx;
pub mod cli;
pub mod embeddings;
pub mod indiv;
pub mod lattice;
pub mod minmax;
pub mod report;
pub mod selftest;
pub mod ring;
pub mod units;

pub use approx::ApproxReal;
pub use embeddings::Precision;
pub use ring::{Level, RingElement};
