//! Power allocation for downlink multicarrier NOMA.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: system and cluster types plus SINR, rate and EE evaluation.
//! - [`cluster`]: closed forms for a single subchannel (minimum power,
//!   budget-parameterised optimal split, maximum-rate caps, admission control).
//! - [`sumrate`]: the virtual-OMA transform and bisection water-filling.
//! - [`energy`]: Dinkelbach energy-efficiency maximisation with
//!   subgradient and log-barrier inner solvers.
//! - [`sim`]: channel generation, user clustering and the Monte-Carlo driver.
//!
//! Units are SI throughout (W, Hz, bit/s, CNR in 1/W). Conversions from
//! dB/dBm live in [`units`] and are applied once at configuration time.

pub mod cluster;
pub mod energy;
pub mod error;
pub mod model;
pub mod sim;
pub mod sumrate;
pub mod units;

pub use error::{NomaError, Result};
pub use model::{ClusterSpec, PowerAllocation, SolveReport, SolveStatus, SystemParams};
