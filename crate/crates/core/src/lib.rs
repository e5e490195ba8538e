//! Conditional (branching) Monte Carlo estimation of the time-t probability
//! mass function of stochastic reaction networks.

pub mod cli;
pub mod estimate;
pub mod infer;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod simulate;
pub mod validate;
