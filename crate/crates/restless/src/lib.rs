//! Command-line tooling, file formats and Monte Carlo experiments for
//! finite-horizon restless bandits built on `restless-core`.

pub mod cli;
pub mod experiment;
pub mod format;
pub mod io;
pub mod montecarlo;
