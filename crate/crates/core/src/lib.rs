//! Value at Risk and Conditional Value at Risk by Monte Carlo simulation,
//! driven by pluggable randomness sources.
//!
//! * [`bits`] and [`normal`] turn raw bits into uniform and standard-normal
//!   variates by inverse transform sampling.
//! * [`source`] acquires bits from seeded generators, remote entropy
//!   services, QPU measurement records and persisted [`pool`]s.
//! * [`randtest`] certifies a source with a uniformity, independence and
//!   entropy battery.
//! * [`market`] turns price history into calibrated moments.
//! * [`risk`] estimates VaR/CVaR historically or by simulation, and runs
//!   repeated-estimation precision studies.

pub mod bits;
pub mod market;
pub mod normal;
pub mod pool;
pub mod randtest;
pub mod risk;
pub mod source;

#[cfg(test)]
#[path = "../tests/support/oracle.rs"]
mod oracle;
