//! Stochastic kinetics of m-ary random matching.
//!
//! The crate covers both sides of the mean-field picture:
//!
//! * the macroscopic law `μ_t` of the quadratic Cauchy problem
//!   `dμ_t/dt = μ_t^{∘m} − μ_t`, written as a convex combination over ordered
//!   m-ary interaction trees (an extended Wild sum), evaluated either by
//!   Monte Carlo ([`wildsum`]) or exactly on finite state spaces;
//! * the microscopic N-agent system with Poisson meetings of uniform
//!   m-subsets ([`particle`]) and the backward history graph of a tagged
//!   agent.
//!
//! [`trees`] and [`branching`] hold the combinatorics and the laws of the
//! interaction count, [`kernels`] the interaction rules, and [`econo`] the
//! kinetic wealth-exchange application with its exponential rate.
//!
//! The crate is `no_std` and only needs `alloc`. Parallel drivers plug in
//! through [`exec::Executor`]; results never depend on the executor because
//! every sample or replica draws from its own indexed random substream.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod branching;
pub mod econo;
mod error;
pub mod exec;
pub mod kernels;
pub mod particle;
pub mod rng;
pub mod stats;
pub mod trees;
pub mod wildsum;

pub use error::{Error, Result};
