//! Least-squares B-spline fitting by progressive iterative approximation
//! (LSPIA), in its per-control weighted form and its uniform step-size form,
//! together with a dense oracle for checking where the iteration converges
//! when the normal matrix `AᵀA` is singular.

pub mod basis;
pub mod error;
pub mod fitting;
pub mod io;
pub mod oracle;
pub mod points;
pub mod solver;
pub mod synth;

pub use basis::{basis_eval, evaluate_form, unified_basis_eval, BasisSpace, KnotVector, ParamPoint};
pub use error::{Error, Result};
pub use fitting::{
    assemble, build_groups, parameterize, CollocationMatrix, DataSet, EmptyGroupPolicy, FitProblem, ParamMode,
};
pub use points::PointMatrix;
pub use solver::{fit, Alpha, FitResult, InitialControls, SolverConfig, StepForm, Termination, Variant};
