//! Transactive dispatch toolkit for electrified railways: per-ACC
//! multi-period dispatch via iterative price negotiation, energy-optimal
//! train trajectory planning, and a coordinator that interleaves both
//! until the traction schedule and the prices agree.

pub mod coordinator;
pub mod dispatch;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod io;
pub mod model;
pub mod train;

pub use error::{Error, Result};
