//! Kernel machines for regression and classification when some responses
//! are missing at random.
//!
//! The crate provides complete-case, inverse-probability-weighted, and
//! doubly-robust kernel ridge estimators, the propensity and outcome models
//! they depend on, a simulator for the benchmark settings, and a harness that
//! runs the full Monte Carlo comparison.

pub mod bench;
pub mod data;
pub mod error;
pub mod glm;
pub mod kernels;
pub mod machines;
pub mod numerics;
pub mod outcome;
pub mod propensity;
pub mod simulate;

pub use data::{Dataset, CsvSchema};
pub use error::{Error, Result};
pub use glm::Link;
pub use kernels::KernelSpec;
pub use machines::{KernelMachine, MachineKind};
pub use numerics::Matrix;
pub use outcome::{BasisSpec, OutcomeFit, Task};
pub use propensity::PropensityFit;
pub use simulate::SettingSpec;
