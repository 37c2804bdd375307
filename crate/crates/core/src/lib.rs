//! Matching pursuit and its relatives over finite dictionaries, plus the
//! numerical machinery to build and certify a dictionary on which plain
//! matching pursuit converges no faster than n^(−α), α ≈ 0.182.
//!
//! Pipeline: [`constants`] → [`integral_equation`] → [`phi`] →
//! [`adversarial`] → [`greedy`] → [`analysis`].

pub mod adversarial;
pub mod analysis;
pub mod constants;
pub mod error;
pub mod greedy;
pub mod grid;
pub mod integral_equation;
pub mod linalg;
pub mod phi;
pub mod quad;
pub mod report;
pub mod roots;

pub use adversarial::{build, verify, AdversarialInstance, ConstructionParams, Target, VerificationReport, VerifyOptions};
pub use analysis::{check_bounds, compare, fit_decay, BoundReport, RateFit};
pub use constants::{bundle, solve_beta_star, solve_gamma, tau_star, ClosedFormBundle, OperatingPoint, RateConstants};
pub use error::{Error, Result};
pub use greedy::{run, select_atom, Algorithm, Dictionary, GreedyTrace, Selection, Step};
pub use grid::{Extension, GridFunction};
pub use linalg::CoeffVector;
pub use phi::{build_phi, check_conditions, ConditionMode, ConditionReport, PhiProfile};
pub use report::Report;
