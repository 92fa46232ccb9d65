//! Gradient clipping and normalized gradient methods under relaxed
//! smoothness, with analytic worst-case objectives, a deep linear
//! network with exact Kronecker-structured Hessian blocks, local
//! smoothness estimation, and an iteration-complexity harness that
//! compares measured first-hitting times against theoretical bounds.

pub mod config;
pub mod deep_linear;
pub mod error;
pub mod harness;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod smoothness;
pub mod util;

pub use error::{Error, Result};
pub use objective::{Objective, SmoothnessConstants};
