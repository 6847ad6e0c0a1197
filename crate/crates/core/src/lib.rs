//! Feature and region selection for additive-kernel SVMs.
//!
//! - [`feature_select`] learns per-bin weights of an additive kernel by
//!   maximizing the normalized margin, a convex problem solved by
//!   reduced-gradient descent over the SVM dual objective.
//! - [`region_select`] learns per-instance weights inside positive bags from
//!   bag labels alone, with the same alternating scheme.
//!
//! Both rest on [`kernels`] (χ², intersection and linear per-bin kernels),
//! [`qp`] (the SVM dual solver) and [`simplex`] (reduced-gradient steps and
//! line search). [`data`] and [`eval`] provide file formats, synthetic
//! generators and ranking metrics; [`cli`] is the command-line front end.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod feature_select;
pub mod kernels;
pub mod qp;
pub mod region_select;
pub mod simplex;

pub use error::{Error, Result};
pub use feature_select::{FeatureSelectModel, FeatureSelectOptions};
pub use kernels::{Histogram, KernelKind};
pub use qp::{DualSolution, SolverOptions};
pub use region_select::{Bag, BagScoreMode, RegionSelectModel, RegionSelectOptions};
