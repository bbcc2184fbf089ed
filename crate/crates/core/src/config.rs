//! Central numeric tolerances.
//!
//! Every module reads its tolerances from [`Tolerances`] so that the knobs
//! live in one place. The defaults are the values the test suite pins.

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Scaled KKT residual accepted by the LP solver.
    pub lp_kkt: f64,
    /// Pivot budget multiplier: the simplex gives up after
    /// `lp_pivot_base + lp_pivot_per_dim * (rows + cols)` pivots.
    pub lp_pivot_base: usize,
    pub lp_pivot_per_dim: usize,
    /// KKT residual accepted by the QP solver (duals included).
    pub qp_kkt: f64,
    /// Kelley cutting-plane convergence tolerance (objective gap +
    /// constraint violation).
    pub kelley_tol: f64,
    /// Kelley iteration budget.
    pub kelley_max_iters: usize,
    /// Geometric classification tolerance: a point within this distance of a
    /// hyperplane counts as "on" it; vertices closer than this are merged.
    pub geometry: f64,
    /// Membership slack for risk-measure boundary tests.
    pub membership: f64,
    /// Absolute tolerance of the entry-step bisection.
    pub entry_alpha: f64,
    /// Lower clamp applied to measure components before entropic
    /// log-evaluation.
    pub mass_clamp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lp_kkt: 1e-8,
            lp_pivot_base: 10_000,
            lp_pivot_per_dim: 50,
            qp_kkt: 1e-7,
            kelley_tol: 1e-6,
            kelley_max_iters: 2_000,
            geometry: 1e-9,
            membership: 1e-7,
            entry_alpha: 1e-9,
            mass_clamp: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn default_static() -> &'static Tolerances {
        static DEFAULT: Tolerances = Tolerances {
            lp_kkt: 1e-8,
            lp_pivot_base: 10_000,
            lp_pivot_per_dim: 50,
            qp_kkt: 1e-7,
            kelley_tol: 1e-6,
            kelley_max_iters: 2_000,
            geometry: 1e-9,
            membership: 1e-7,
            entry_alpha: 1e-9,
            mass_clamp: 1e-12,
        };
        &DEFAULT
    }
}
