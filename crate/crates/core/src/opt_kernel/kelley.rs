//! Cutting-plane (outer linearization) solver for oracle-defined convex
//! programs over a box:
//!
//! ```text
//!     min  f(x)
//!     s.t. g_k(x) ≤ 0                 (convex, given by value/subgradient oracles)
//!          aᵀx = b,  aᵀx ≤ b          (native linear rows, kept in the master)
//!          lo ≤ x ≤ hi                (finite box — the only stabilization)
//! ```
//!
//! Each iteration solves a master LP in `(x, t)` built from the accumulated
//! supporting hyperplanes of `f` and the `g_k`, evaluates the oracles at the
//! master argmin, and adds the new cuts. The master value is a monotone
//! lower bound; the best oracle value at a feasible iterate is the upper
//! bound. Long-inactive cuts are dropped to keep the master small. An
//! infeasible master is a certificate that the linearized (hence the true)
//! constraint system has no solution in the box.

use super::lp::{solve_lp, LinearProgram, LpStatus, RowKind};
use crate::config::Tolerances;
use crate::error::{Error, Result};

/// Value and subgradient of a convex function at a point.
pub type Oracle<'a> = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a>;

pub struct OracleProgram<'a> {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Oracle<'a>,
    pub constraints: Vec<Oracle<'a>>,
    /// Native rows `coeffs·x = rhs`.
    pub linear_eq: Vec<(Vec<(usize, f64)>, f64)>,
    /// Native rows `coeffs·x ≤ rhs`.
    pub linear_le: Vec<(Vec<(usize, f64)>, f64)>,
}

impl<'a> OracleProgram<'a> {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, objective: Oracle<'a>) -> Self {
        OracleProgram {
            lower,
            upper,
            objective,
            constraints: Vec::new(),
            linear_eq: Vec::new(),
            linear_le: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone)]
pub struct KelleyResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Final master value; `value − lower_bound` bounds the suboptimality.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-constraint sums of the final master's cut duals; the aggregated
    /// multiplier of constraint `k` in the linearized optimality system.
    pub constraint_duals: Vec<f64>,
}

struct StoredCut {
    /// Master row: for objective cuts `t − gᵀx ≥ v − gᵀx̂`,
    /// for constraint cuts `−gᵀx ≥ v − gᵀx̂`.
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
    /// `None` for objective cuts, `Some(k)` for cuts of constraint `k`.
    source: Option<usize>,
    idle: usize,
}

impl StoredCut {
    fn is_objective(&self) -> bool {
        self.source.is_none()
    }
}

/// Maximum consecutive masters a cut may stay slack before deletion.
const CUT_IDLE_LIMIT: usize = 30;

pub fn solve_kelley(p: &OracleProgram, tol: &Tolerances) -> Result<KelleyResult> {
    let n = p.num_vars();
    if p.upper.len() != n {
        return Err(Error::Kelley("box bounds have mismatched lengths".into()));
    }
    for j in 0..n {
        if !p.lower[j].is_finite() || !p.upper[j].is_finite() || p.lower[j] > p.upper[j] {
            return Err(Error::Kelley(format!(
                "variable {j} needs a finite, ordered box (got [{}, {}])",
                p.lower[j], p.upper[j]
            )));
        }
    }

    let x0: Vec<f64> = (0..n).map(|j| 0.5 * (p.lower[j] + p.upper[j])).collect();
    let mut cuts: Vec<StoredCut> = Vec::new();
    add_point_cuts(p, &x0, &mut cuts);

    let mut best_x: Option<Vec<f64>> = None;
    let mut best_val = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut last_constraint_duals = vec![0.0; p.constraints.len()];
    let feas_tol = tol.kelley_tol;

    if constraint_violation(p, &x0) <= feas_tol {
        best_val = (p.objective)(&x0).0;
        best_x = Some(x0.clone());
    }

    for iter in 1..=tol.kelley_max_iters {
        // Master LP in (x_0..x_{n-1}, t).
        let mut lp = LinearProgram::new(n + 1);
        for j in 0..n {
            lp.set_lower(j, p.lower[j]);
            lp.add_row(vec![(j, -1.0)], RowKind::Ge, -p.upper[j]);
        }
        lp.set_free(n);
        lp.set_objective(n, 1.0);
        for (coeffs, rhs) in &p.linear_eq {
            lp.add_row(coeffs.clone(), RowKind::Eq, *rhs);
        }
        for (coeffs, rhs) in &p.linear_le {
            let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(j, a)| (j, -a)).collect();
            lp.add_row(neg, RowKind::Ge, -rhs);
        }
        let first_cut_row = lp.rows.len();
        for cut in &cuts {
            let mut coeffs = cut.coeffs.clone();
            if cut.is_objective() {
                coeffs.push((n, 1.0));
            }
            lp.add_row(coeffs, RowKind::Ge, cut.rhs);
        }

        let sol = solve_lp(&lp);
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Err(Error::Kelley(
                    "constraint system is infeasible within the box".into(),
                ));
            }
            other => {
                return Err(Error::Kelley(format!("master solve failed: {other:?}")));
            }
        }
        // Cuts only ever tighten the master, so its value is a monotone
        // lower bound; the max guards against simplex jitter.
        lower = lower.max(sol.value);

        let mut agg_duals = vec![0.0; p.constraints.len()];
        for (k, cut) in cuts.iter().enumerate() {
            if let Some(c) = cut.source {
                agg_duals[c] += sol.row_duals[first_cut_row + k];
            }
        }
        last_constraint_duals = agg_duals;

        let xh = &sol.x[..n];
        let scale = 1.0 + best_val.abs().min(lower.abs());
        let viol = constraint_violation(p, xh);
        let fval = (p.objective)(xh).0;
        if viol <= feas_tol && fval < best_val {
            best_val = fval;
            best_x = Some(xh.to_vec());
        }
        if best_val - lower <= tol.kelley_tol * scale {
            if let Some(x) = best_x {
                return Ok(KelleyResult {
                    x,
                    value: best_val,
                    lower_bound: lower,
                    iterations: iter,
                    converged: true,
                    constraint_duals: last_constraint_duals,
                });
            }
        }
        // Also converged when the current iterate itself closes the gap but
        // is only feasible to within the tolerance.
        if viol <= feas_tol && fval - lower <= tol.kelley_tol * (1.0 + fval.abs()) {
            return Ok(KelleyResult {
                x: xh.to_vec(),
                value: fval,
                lower_bound: lower,
                iterations: iter,
                converged: true,
                constraint_duals: last_constraint_duals,
            });
        }

        // Cut management: age out rows that stayed slack.
        for (k, cut) in cuts.iter_mut().enumerate() {
            let row = &lp.rows[first_cut_row + k];
            let lhs: f64 = row
                .coeffs
                .iter()
                .map(|&(j, a)| a * sol.x[j])
                .sum::<f64>();
            if lhs - row.rhs > 1e-7 * scale {
                cut.idle += 1;
            } else {
                cut.idle = 0;
            }
        }
        cuts.retain(|c| c.idle < CUT_IDLE_LIMIT);

        add_point_cuts(p, xh, &mut cuts);
    }

    match best_x {
        Some(x) => Ok(KelleyResult {
            x,
            value: best_val,
            lower_bound: lower,
            iterations: tol.kelley_max_iters,
            converged: false,
            constraint_duals: last_constraint_duals,
        }),
        None => Err(Error::Kelley(
            "iteration budget exhausted without a feasible iterate".into(),
        )),
    }
}

fn constraint_violation(p: &OracleProgram, x: &[f64]) -> f64 {
    let mut v: f64 = 0.0;
    for g in &p.constraints {
        v = v.max(g(x).0);
    }
    for (coeffs, rhs) in &p.linear_le {
        v = v.max(coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - rhs);
    }
    for (coeffs, rhs) in &p.linear_eq {
        v = v.max((coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - rhs).abs());
    }
    v
}

fn add_point_cuts(p: &OracleProgram, x: &[f64], cuts: &mut Vec<StoredCut>) {
    let n = p.num_vars();
    let (fv, fg) = (p.objective)(x);
    let gx: f64 = (0..n).map(|j| fg[j] * x[j]).sum();
    cuts.push(StoredCut {
        coeffs: (0..n).map(|j| (j, -fg[j])).collect(),
        rhs: fv - gx,
        source: None,
        idle: 0,
    });
    for (k, g) in p.constraints.iter().enumerate() {
        let (gv, gg) = g(x);
        let ggx: f64 = (0..n).map(|j| gg[j] * x[j]).sum();
        cuts.push(StoredCut {
            coeffs: (0..n).map(|j| (j, -gg[j])).collect(),
            rhs: gv - ggx,
            source: Some(k),
            idle: 0,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn quadratic_on_box() {
        // min x² on [−1, 1] → 0 at x = 0
        let p = OracleProgram::new(
            vec![-1.0],
            vec![1.0],
            Box::new(|x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]])),
        );
        let r = solve_kelley(&p, &tols()).unwrap();
        assert!(r.converged);
        assert!(r.value.abs() < 1e-5, "value {}", r.value);
        assert!(r.x[0].abs() < 1e-2, "x {}", r.x[0]);
        assert!(r.lower_bound <= r.value + 1e-12);
    }

    #[test]
    fn smooth_exponential() {
        // min eˣ − x on [−2, 2] → minimum 1 at x = 0
        let p = OracleProgram::new(
            vec![-2.0],
            vec![2.0],
            Box::new(|x: &[f64]| (x[0].exp() - x[0], vec![x[0].exp() - 1.0])),
        );
        let r = solve_kelley(&p, &tols()).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.0).abs() < 1e-5, "value {}", r.value);
    }

    #[test]
    fn infeasible_linear_row() {
        // x ≤ −5 contradicts the box [0, 1].
        let mut p = OracleProgram::new(
            vec![0.0],
            vec![1.0],
            Box::new(|x: &[f64]| (x[0], vec![1.0])),
        );
        p.linear_le.push((vec![(0, 1.0)], -5.0));
        let err = solve_kelley(&p, &tols()).unwrap_err();
        assert!(err.to_string().contains("infeasible"), "{err}");
    }

    #[test]
    fn convex_constraint_and_equality() {
        // min x + y s.t. x² + y² ≤ 1, x = y on [−2,2]² → x = y = −1/√2.
        let mut p = OracleProgram::new(
            vec![-2.0, -2.0],
            vec![2.0, 2.0],
            Box::new(|x: &[f64]| (x[0] + x[1], vec![1.0, 1.0])),
        );
        p.constraints.push(Box::new(|x: &[f64]| {
            (
                x[0] * x[0] + x[1] * x[1] - 1.0,
                vec![2.0 * x[0], 2.0 * x[1]],
            )
        }));
        p.linear_eq.push((vec![(0, 1.0), (1, -1.0)], 0.0));
        let r = solve_kelley(&p, &tols()).unwrap();
        let s = -(0.5f64).sqrt();
        assert!(r.converged);
        assert!((r.value - 2.0 * s).abs() < 1e-4, "value {}", r.value);
        assert!((r.x[0] - s).abs() < 1e-3 && (r.x[1] - s).abs() < 1e-3);
        // Aggregated multiplier of the ball constraint: stationarity gives
        // (1,1) = λ·(√2, √2), so λ = 1/√2.
        let lam = r.constraint_duals[0];
        assert!((lam - 0.5f64.sqrt()).abs() < 1e-2, "lambda {lam}");
    }
}
