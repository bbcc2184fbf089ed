//! Solver library for multi-objective risk-averse two-stage stochastic programs.
//!
//! The central object is the *upper image*: the closure of all risk vectors
//! `z ∈ R(Cx + Qy)` attainable by feasible first/second-stage decisions
//! `(x, y)`, where `R` is a multivariate convex risk measure (CVaR or
//! entropic) ordered by a polyhedral cone `C ⊇ ℝ^J₊`. The library computes
//! ε-accurate inner and outer polyhedral approximations of this set with two
//! outer-approximation (Benson-type) algorithms:
//!
//! - **primal**: refines an outer polyhedron by solving, at each vertex `v`,
//!   the minimum-step problem `P2(v)` (how far along the diagonal must `v`
//!   move to enter the upper image) and cutting with the supporting halfspace
//!   obtained from its dual weight `γ`;
//! - **dual**: refines a polyhedral outer approximation of the geometric dual
//!   (lower image) by solving weighted-sum problems `P1(w)` at its vertices.
//!
//! Both scalarizations can be solved either **directly** (one monolithic LP
//! for CVaR, a cutting-plane solve for the entropic measure) or by a
//! scenario-decomposed **bundle** backend that maximizes the nonanticipative
//! Lagrangian dual with a proximal bundle method and recovers primal
//! solutions from the master QP multipliers.
//!
//! Module layout:
//!
//! - [`model`] — problem data, validation, portfolio instance generator, file I/O
//! - [`opt_kernel`] — dense LP (revised simplex), regularized QP (dual
//!   active set), and Kelley cutting-plane solvers, all with dual extraction
//! - [`polyhedra`] — H/V-representations, incremental double description,
//!   cones and dual cones
//! - [`risk`] — CVaR and entropic risk measures: membership, penalties,
//!   subgradients, scalarization
//! - [`scalarization`] — direct (non-decomposed) backends for `P1(w)`/`P2(v)`
//! - [`bundle`] — scenario-decomposed dual bundle methods with primal recovery
//! - [`benson`] — the primal/dual approximation loops and sandwich verification
//! - [`cli`] — command-line front end (generate / solve / verify / export)

#![allow(clippy::too_many_arguments)]
#![allow(clippy::needless_range_loop)]

pub mod benson;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod model;
pub mod opt_kernel;
pub mod polyhedra;
pub mod risk;
pub mod scalarization;

pub use error::{Error, Result};
