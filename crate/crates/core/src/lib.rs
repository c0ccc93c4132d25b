//! Stochastic Bregman primal-dual splitting for convex-concave saddle problems
//! `min_x max_mu f(x) + g(x) + <Tx, mu> - h*(mu) - l*(mu)`.
//!
//! The crate provides the linear operators ([`linalg`]), Bregman geometry and
//! proximal maps ([`bregman`]), batch gradient oracles ([`oracle`]), the
//! iteration itself with its diagnostics ([`solver`]), two ready-made problem
//! families ([`problems`]) and the experiment driver used by the binary
//! ([`cli`]).

pub mod bregman;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod problems;
pub mod solver;

pub use error::{Error, Result};
