//! Mirror Prox and higher-order Mirror Prox for monotone variational
//! inequalities and convex-concave saddle-point problems.
//!
//! The main entry points are [`mirror_prox::mp_run`] (first-order
//! baseline), [`homp::homp_p2_run`] (explicit second-order method with a
//! binary-searched step) and [`homp::homp_general_run`] (any order, with a
//! Newton oracle for the implicit step). [`diagnostics`] holds the merit,
//! gap and monitor functions used to check runs, and [`problems`] the
//! seeded benchmark problems.

pub mod diagnostics;
pub mod error;
pub mod gamma_search;
pub mod geometry;
pub mod homp;
pub mod linalg;
pub mod mirror_prox;
pub mod problems;
pub mod report;
pub mod vectorfield;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use report::{averaged_output, Branch, IterateRecord, SolverReport};
