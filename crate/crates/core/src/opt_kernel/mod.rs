//! Self-contained convex solvers with dual extraction.
//!
//! Three kernels, all dense and sized for desk-scale problems
//! (a few hundred rows, `J ≤ 3`, `I ≤ 500`):
//!
//! - [`lp`]: two-phase revised simplex with a dense basis inverse,
//!   Dantzig pricing with a Bland anti-cycling fallback, periodic
//!   refactorization, and exact dual/reduced-cost extraction from a final
//!   refactorized basis.
//! - [`qp`]: strictly concave regularized QP (proximal bundle masters) solved
//!   by a dual active-set method on the KKT system; variables without a
//!   proximal term get a tiny curvature shim and the result is polished by
//!   one exact KKT solve on the final active set, so the reported
//!   multipliers satisfy the unperturbed optimality system.
//! - [`kelley`]: cutting-plane method for oracle-defined convex programs,
//!   stabilized only by its bounding box.
//!
//! Solver invocations are pure functions of their inputs.

pub mod kelley;
pub mod lp;
pub mod qp;

pub use kelley::{solve_kelley, KelleyResult, OracleProgram};
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus, RowKind};
pub use qp::{solve_qp, QpSolution, RegularizedQP, SparseCon};
