//! Monte-Carlo study of SC-NOMA, FD-NOMA and FDMA.

pub mod channel;
pub mod clustering;
pub mod monte_carlo;

pub use channel::{generate_realization, ChannelModel, Realization};
pub use clustering::cluster_users;
pub use monte_carlo::{run_monte_carlo, MetricsRow, Objective, ScenarioConfig, Scheme};
