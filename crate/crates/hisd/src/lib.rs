//! High-index saddle dynamics (HiSD) toolkit.
//!
//! Searches index-k saddle points of an energy landscape by evolving a state
//! together with a frame of k orthonormal directions spanning the unstable
//! subspace. Three explicit Euler schemes are implemented (the Gram-Schmidt
//! scheme, the Lagrange-multiplier scheme and the sphere-constrained scheme)
//! next to a convergence laboratory that measures first-order error tables,
//! pointwise scheme differences, and the residuals of the recovered
//! continuous dynamics.
//!
//! Entry points: [`model::EnergyModel`] for landscapes, [`scheme::run`] for
//! a single search, and the [`lab`] module for the experiment drivers. The
//! `hisd` binary exposes the same drivers behind JSON experiment configs.

pub mod cli;
pub mod config;
pub mod error;
pub mod lab;
pub mod manifold;
pub mod model;
pub mod report;
pub mod scheme;

pub use error::{HisdError, Result};
pub use manifold::Frame;
pub use model::{DimerParams, EnergyModel};
pub use scheme::{SaddleState, Scheme, SchemeConfig, Trajectory};
