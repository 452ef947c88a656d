//! Age of Information for energy-harvesting status-update queues.
//!
//! A single source sends updates through an M/M/1-style server that spends one unit of
//! harvested energy per service. Three service disciplines (`LcfsNp`, `LcfsPs`, `LcfsPw`)
//! and two harvesting modes (`WhenEmpty`, `Anytime`) give six models. Each model is a
//! stochastic hybrid system; [`solver`] solves it numerically for moments and the MGF of
//! the age, [`closed_form`] evaluates the known formulas and [`sim`] estimates the same
//! quantities by discrete-event simulation.
//!
//! ```
//! use ehaoi::{build_model, closed_form, solver, Discipline, EhMode, SystemParams};
//!
//! let p = SystemParams::from_utilization(1.0, 1.0, 1.0, 1).unwrap();
//! let model = build_model(p, Discipline::LcfsNp, EhMode::WhenEmpty);
//! let mean = solver::aoi_moment(&model, 1).unwrap();
//! let exact = closed_form::moments_closed(&p, Discipline::LcfsNp, EhMode::WhenEmpty, 1).unwrap();
//! assert!((mean - 3.0).abs() < 1e-12);
//! assert!((exact.value - 3.0).abs() < 1e-12);
//! ```

pub mod closed_form;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod solver;
pub mod verify;

pub use closed_form::{
    compute_aux, limits_beta_inf, mgf_closed, moments_closed, AuxFactors, BranchTag, ClosedFormError,
    ClosedFormResult,
};
pub use model::{build_model, validate_model, Discipline, EhMode, Finding, ParamError, ShsModel, SystemParams};
pub use sim::{replicate, simulate, Estimate, SimConfig, SimError, SimResult};
pub use solver::{aoi_moment, mgf, mgf_curve, solve, MgfCurve, MgfSample, SolveResult, SolverError};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}
    #[doc = include_str!("../../../book/src/solver.md")]
    pub mod solver {}
    #[doc = include_str!("../../../book/src/closed_forms.md")]
    pub mod closed_forms {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
