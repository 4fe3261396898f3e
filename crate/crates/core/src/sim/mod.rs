//! Synthetic worlds and Monte Carlo checks of the PAC guarantees.

pub mod experiments;
pub mod finite;
pub mod mc;
pub mod theorems;
pub mod world;

pub use finite::FiniteDistribution;
pub use mc::{clopper_pearson, derive_seed, mc_verify, pac_trial, PacTrial, ViolationSummary};
pub use theorems::{theorem_suite, SuiteConfig, SuiteWorld, TheoremReport, TheoremRow};
pub use world::{gen_world, WorldConfig};
