//! Finite-horizon restless bandits with many exchangeable arms.
//!
//! The crate is `no_std` (it needs `alloc`) and covers the algorithmic side:
//!
//! * [`model`]: single-arm MDP instances, budgets, count states and
//!   diffusion statistics.
//! * [`lp`] and [`relaxation`]: a dense-inverse revised simplex and the
//!   occupation-measure linear relaxation built on top of it;
//!   [`decomposition`] solves large relaxations by column generation.
//! * [`occupancy`]: fluid categories, non-degeneracy checks, the search for
//!   a non-degenerate optimal measure and fluid limits of index policies.
//! * [`priority`]: Lagrangian Q-factors and priority scores.
//! * [`policy`]: fluid-priority, budget-relaxed, index, RAC, UCB and
//!   Thompson-sampling allocation rules.
//! * [`sim`]: single-replication kernels (count-based and per-arm).
//! * [`oracle`]: exact joint dynamic programming for tiny `N`.
//! * [`zoo`]: the experimental problem generators and test fixtures.
//!
//! Periods are 0-based throughout (`t ∈ 0..horizon`).
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod belief;
pub mod decomposition;
pub mod lp;
mod math;
pub mod model;
pub mod occupancy;
pub mod oracle;
pub mod policy;
pub mod priority;
pub mod relaxation;
pub mod rng;
pub mod sim;
pub mod zoo;

pub use belief::Posterior;
pub use model::{
    period_budget, validate_model, AllocationPlan, ArmModel, CountState, DiffusionStat, Kernel,
    KernelBuilder, ModelError,
};
pub use occupancy::{CategoryPartition, DegeneracyReport};
pub use policy::{AllocationRule, Policy, PolicyError};
pub use priority::{PriorityScheme, StateScores};
pub use relaxation::{OccupationMeasure, RelaxationError};
