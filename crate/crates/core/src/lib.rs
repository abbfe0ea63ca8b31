//! Regularization paths for sparse, structured generalized linear models by
//! split linearized Bregman iteration.
//!
//! A single run produces, at every recorded step, a dense predictor
//! `beta_pre` and its projection `beta_les` onto the sparsity pattern of an
//! auxiliary variable tied to `D beta_pre`, where `D` stacks the identity and
//! a graph difference operator. `beta_les` is sparse, piecewise constant on the
//! graph and optionally nonnegative; `beta_pre` is free to pick up additional
//! signal that does not fit that structure.
//!
//! ```no_run
//! use gsplit::prelude::*;
//!
//! let signal = preset_grid_signal();
//! let spec = Preset::Grid9.spec(7);
//! let data = simulate(&spec, &signal.beta_star, 0)?;
//! let op = SplitOperator::new(VoxelGraph::full(&[9, 9])?, 1.0)?;
//! let mut hyper = Hyperparams::new(80.0, 2.0, 2000);
//! hyper.nonneg = true;
//! let path = run_path(&data, GlmFamily::Logistic, &op, &hyper, &StopRule::FixedIters)?;
//! println!("{} points", path.points.len());
//! # Ok::<(), gsplit::Error>(())
//! ```

pub mod baseline;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod glm;
pub mod io;
pub mod lattice;
pub mod parallel;
pub mod projection;
pub mod simgen;
pub mod solver;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::baseline::{fista_l1_logistic, fista_path, Fista, FistaOptions, LambdaGrid};
    pub use crate::error::{Error, Result};
    pub use crate::eval::{
        classify_metrics, cross_validate, mdc, support_auc, FoldPlan, GridPoint, Metrics,
    };
    pub use crate::glm::{Dataset, GlmFamily, LinearPredictor};
    pub use crate::lattice::{build_lattice, connected_components, Connectivity, SplitOperator, VoxelGraph};
    pub use crate::parallel::Execution;
    pub use crate::projection::{decompose, project_lesion, DecomposeRule, Decomposition, Support};
    pub use crate::simgen::{preset_grid_signal, preset_table1_signal, simulate, Preset, SimSpec};
    pub use crate::solver::{
        entry_order, run_path, Hyperparams, ModelState, RegularizationPath, Solver, StepSize,
        StopRule,
    };
}
