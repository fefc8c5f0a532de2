//! Numerical toolkit for flows on 3-manifolds given in a global frame:
//! splittings and expansion rates, bi-contact structures and Liouville
//! pairs built from them, and the contact/Reeb diagnostics around them.

pub mod calculus;
pub mod contact;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod frame;
pub mod lattice;
pub mod liouville;
pub mod ode;
pub mod rates;
pub mod splitting;
pub mod zoo;

pub use error::{LabError, Result};
pub use field::{OneForm, Point, ScalarField, TwoForm, VecField};
pub use frame::{FrameModel, Metric, ModelKind};
