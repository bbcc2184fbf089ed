//! Dense revised simplex with dual extraction.
//!
//! Problems are stated as
//!
//! ```text
//!     min  cᵀv
//!     s.t. eᵢᵀv  = fᵢ          (equality rows)
//!          gᵢᵀv ≥ hᵢ           (inequality rows)
//!          vⱼ ≥ lⱼ or vⱼ free   (per-variable lower bound)
//! ```
//!
//! Internally the problem is shifted/split to standard form
//! `min cᵀx, Ax = b, x ≥ 0, b ≥ 0` and solved by a two-phase revised
//! simplex that keeps a dense basis inverse, updated by eta pivots and
//! refactorized periodically. Duals and reduced costs are recomputed from a
//! final from-scratch factorization of the optimal basis so that the
//! reported multipliers are as accurate as the basis itself, independent of
//! accumulated pivot error.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `coeffs · v = rhs`
    Eq,
    /// `coeffs · v ≥ rhs`
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    /// Sparse coefficients `(variable index, value)`.
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// LP in the row form documented at module level.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    /// `Some(l)` for `v ≥ l` (the default is `Some(0.0)`), `None` for a free
    /// variable.
    pub lower: Vec<Option<f64>>,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![Some(0.0); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_objective(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    /// Mark variable `j` as free (unbounded below).
    pub fn set_free(&mut self, j: usize) {
        self.lower[j] = None;
    }

    pub fn set_lower(&mut self, j: usize, l: f64) {
        self.lower[j] = Some(l);
    }

    /// Append a row; returns its index (dual multipliers are reported in row
    /// order).
    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> usize {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars()));
        self.rows.push(Row { coeffs, kind, rhs });
        self.rows.len() - 1
    }

    /// Largest absolute magnitude in the problem data, used for scaling
    /// tolerances.
    pub fn data_scale(&self) -> f64 {
        let mut s: f64 = 0.0;
        for &c in &self.objective {
            s = s.max(c.abs());
        }
        for r in &self.rows {
            s = s.max(r.rhs.abs());
            for &(_, a) in &r.coeffs {
                s = s.max(a.abs());
            }
        }
        s
    }

    /// Plain-text dump for external cross-checking: one line per objective
    /// entry, bound and row.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "lp vars {} rows {}", self.num_vars(), self.rows.len()).unwrap();
        for (j, c) in self.objective.iter().enumerate() {
            let b = match self.lower[j] {
                Some(l) => format!("{l}"),
                None => "free".to_string(),
            };
            writeln!(out, "var {j} cost {c} lower {b}").unwrap();
        }
        for (i, r) in self.rows.iter().enumerate() {
            let k = if r.kind == RowKind::Eq { "=" } else { ">=" };
            write!(out, "row {i}").unwrap();
            for (j, a) in &r.coeffs {
                write!(out, " {a}*v{j}").unwrap();
            }
            writeln!(out, " {k} {}", r.rhs).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted without reaching optimality.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point in the original variables (meaningful at `Optimal`).
    pub x: Vec<f64>,
    pub value: f64,
    /// One multiplier per row, in row order. Equality duals are free;
    /// inequality duals are ≥ 0 at optimality.
    pub row_duals: Vec<f64>,
    /// `c − Aᵀy` per original variable; ≥ 0 for lower-bounded variables and
    /// ≈ 0 for free variables at optimality.
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    fn status_only(status: LpStatus, n: usize, m: usize, pivots: usize) -> Self {
        LpSolution {
            status,
            x: vec![0.0; n],
            value: 0.0,
            row_duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            pivots,
        }
    }

    /// Worst scaled KKT residual (primal + dual feasibility, complementary
    /// slackness, duality gap). Only meaningful at `Optimal`.
    pub fn kkt_residual(&self, lp: &LinearProgram) -> f64 {
        let scale = 1.0 + lp.data_scale();
        let mut worst: f64 = 0.0;
        // Primal feasibility and complementary slackness on rows.
        for (i, r) in lp.rows.iter().enumerate() {
            let act: f64 = r.coeffs.iter().map(|&(j, a)| a * self.x[j]).sum();
            let slack = act - r.rhs;
            match r.kind {
                RowKind::Eq => worst = worst.max(slack.abs()),
                RowKind::Ge => {
                    worst = worst.max((-slack).max(0.0));
                    worst = worst.max((-self.row_duals[i]).max(0.0));
                    worst = worst.max((self.row_duals[i] * slack).abs());
                }
            }
        }
        // Dual feasibility / stationarity on variables.
        let mut r_chk = lp.objective.clone();
        for (i, r) in lp.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                r_chk[j] -= a * self.row_duals[i];
            }
        }
        for j in 0..lp.num_vars() {
            worst = worst.max((r_chk[j] - self.reduced_costs[j]).abs());
            match lp.lower[j] {
                Some(l) => {
                    worst = worst.max((l - self.x[j]).max(0.0));
                    worst = worst.max((-self.reduced_costs[j]).max(0.0));
                    worst = worst.max((self.reduced_costs[j] * (self.x[j] - l)).abs());
                }
                None => worst = worst.max(self.reduced_costs[j].abs()),
            }
        }
        worst / scale
    }
}

/// How each original variable maps into standard-form columns.
#[derive(Clone)]
enum VarMap {
    /// `v = x[col] + shift`
    Shifted { col: usize, shift: f64 },
    /// `v = x[pos] − x[neg]`
    Split { pos: usize, neg: usize },
}

/// Standard-form data: `min cᵀx, Ax = b, x ≥ 0` with `b ≥ 0`.
#[derive(Clone)]
struct Standard {
    m: usize,
    /// Structural + surplus columns, stored sparse by column.
    cols: Vec<Vec<(usize, f64)>>,
    c: Vec<f64>,
    b: Vec<f64>,
    var_map: Vec<VarMap>,
    /// Sign applied to each row to make `b ≥ 0` (multiplies the dual back).
    row_sign: Vec<f64>,
    /// Constant added to the standard objective to recover the original one.
    obj_shift: f64,
}

fn to_standard(lp: &LinearProgram) -> Standard {
    let n = lp.num_vars();
    let m = lp.rows.len();
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    let mut var_map = Vec::with_capacity(n);
    let mut col_of_var: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut obj_shift = 0.0;
    for j in 0..n {
        match lp.lower[j] {
            Some(shift) => {
                let col = cols.len();
                cols.push(Vec::new());
                c.push(lp.objective[j]);
                obj_shift += lp.objective[j] * shift;
                var_map.push(VarMap::Shifted { col, shift });
                col_of_var.push((col, None));
            }
            None => {
                let pos = cols.len();
                cols.push(Vec::new());
                cols.push(Vec::new());
                c.push(lp.objective[j]);
                c.push(-lp.objective[j]);
                var_map.push(VarMap::Split { pos, neg: pos + 1 });
                col_of_var.push((pos, Some(pos + 1)));
            }
        }
    }
    let mut b = vec![0.0; m];
    let mut row_sign = vec![1.0; m];
    // Row rhs after the variable shift.
    for (i, r) in lp.rows.iter().enumerate() {
        let mut rhs = r.rhs;
        for &(j, a) in &r.coeffs {
            if let Some(shift) = lp.lower[j] {
                rhs -= a * shift;
            }
        }
        b[i] = rhs;
    }
    // Surplus columns for ≥ rows, then sign normalization.
    let mut surplus_col = vec![usize::MAX; m];
    for (i, r) in lp.rows.iter().enumerate() {
        if r.kind == RowKind::Ge {
            surplus_col[i] = cols.len();
            cols.push(Vec::new());
            c.push(0.0);
        }
    }
    for i in 0..m {
        if b[i] < 0.0 {
            row_sign[i] = -1.0;
            b[i] = -b[i];
        }
    }
    for (i, r) in lp.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            let v = a * row_sign[i];
            if v == 0.0 {
                continue;
            }
            let (pos, neg) = col_of_var[j];
            cols[pos].push((i, v));
            if let Some(neg) = neg {
                cols[neg].push((i, -v));
            }
        }
        if surplus_col[i] != usize::MAX {
            cols[surplus_col[i]].push((i, -row_sign[i]));
        }
    }
    Standard {
        m,
        cols,
        c,
        b,
        var_map,
        row_sign,
        obj_shift,
    }
}

/// Revised simplex working state. Columns `0..n_struct` are the standard-form
/// columns; `n_struct..n_struct+m` are the phase-1 artificials (column
/// `n_struct + i` is `+eᵢ`).
struct Simplex<'a> {
    std: &'a Standard,
    n_struct: usize,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Dense row-major basis inverse, m×m.
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    budget: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    Budget,
}

impl<'a> Simplex<'a> {
    fn new(std: &'a Standard, budget: usize) -> Self {
        let m = std.m;
        let n_struct = std.cols.len();
        let mut in_basis = vec![false; n_struct + m];
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            basis.push(n_struct + i);
            in_basis[n_struct + i] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Simplex {
            std,
            n_struct,
            basis,
            in_basis,
            binv,
            xb: std.b.clone(),
            pivots: 0,
            budget,
        }
    }

    /// Start from a known basis (columns must form an invertible matrix).
    fn with_basis(std: &'a Standard, budget: usize, basis: Vec<usize>) -> Result<Self> {
        let mut sx = Simplex::new(std, budget);
        for &j in &sx.basis {
            sx.in_basis[j] = false;
        }
        for &j in &basis {
            sx.in_basis[j] = true;
        }
        sx.basis = basis;
        sx.refactorize()?;
        Ok(sx)
    }

    fn column(&self, j: usize) -> ColRef<'_> {
        if j < self.n_struct {
            ColRef::Sparse(&self.std.cols[j])
        } else {
            ColRef::Unit(j - self.n_struct)
        }
    }

    /// `B⁻¹ · A_j`
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.std.m;
        let mut d = vec![0.0; m];
        match self.column(j) {
            ColRef::Unit(i) => {
                for r in 0..m {
                    d[r] = self.binv[r * m + i];
                }
            }
            ColRef::Sparse(col) => {
                for &(i, a) in col {
                    for r in 0..m {
                        d[r] += a * self.binv[r * m + i];
                    }
                }
            }
        }
        d
    }

    /// `yᵀ = c_Bᵀ B⁻¹` for the given cost vector (artificials cost
    /// `art_cost`).
    fn duals(&self, c: &[f64], art_cost: f64) -> Vec<f64> {
        let m = self.std.m;
        let mut y = vec![0.0; m];
        for (r, &bj) in self.basis.iter().enumerate() {
            let cb = if bj < self.n_struct { c[bj] } else { art_cost };
            if cb == 0.0 {
                continue;
            }
            for i in 0..m {
                y[i] += cb * self.binv[r * m + i];
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], c: &[f64], art_cost: f64) -> f64 {
        match self.column(j) {
            ColRef::Unit(i) => art_cost - y[i],
            ColRef::Sparse(col) => {
                let mut r = c[j];
                for &(i, a) in col {
                    r -= y[i] * a;
                }
                r
            }
        }
    }

    fn refactorize(&mut self) -> Result<()> {
        let m = self.std.m;
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            match self.column(j) {
                ColRef::Unit(i) => bmat[(i, k)] = 1.0,
                ColRef::Sparse(col) => {
                    for &(i, a) in col {
                        bmat[(i, k)] = a;
                    }
                }
            }
        }
        let inv = bmat
            .try_inverse()
            .ok_or_else(|| Error::Lp("singular basis during refactorization".into()))?;
        for r in 0..m {
            for i in 0..m {
                self.binv[r * m + i] = inv[(r, i)];
            }
        }
        let mut xb = vec![0.0; m];
        for r in 0..m {
            for i in 0..m {
                xb[r] += self.binv[r * m + i] * self.std.b[i];
            }
        }
        self.xb = xb;
        Ok(())
    }

    fn pivot(&mut self, enter: usize, leave_pos: usize, d: &[f64]) {
        let m = self.std.m;
        let dr = d[leave_pos];
        let step = self.xb[leave_pos] / dr;
        for r in 0..m {
            if r != leave_pos {
                self.xb[r] -= step * d[r];
                if self.xb[r] < 0.0 {
                    self.xb[r] = 0.0; // degeneracy snap
                }
            }
        }
        self.xb[leave_pos] = step;
        // Eta update of the basis inverse.
        let (head, base) = (leave_pos * m, m);
        for i in 0..m {
            self.binv[head + i] /= dr;
        }
        for r in 0..base {
            if r == leave_pos {
                continue;
            }
            let f = d[r];
            if f == 0.0 {
                continue;
            }
            for i in 0..m {
                self.binv[r * m + i] -= f * self.binv[head + i];
            }
        }
        self.in_basis[self.basis[leave_pos]] = false;
        self.in_basis[enter] = true;
        self.basis[leave_pos] = enter;
        self.pivots += 1;
        if self.pivots % 128 == 0 {
            let _ = self.refactorize();
        }
    }

    /// Run one simplex phase: minimize `c` (artificials cost `art_cost`);
    /// artificials may enter only when `allow_art` is true (never in phase 2).
    fn run_phase(&mut self, c: &[f64], art_cost: f64, allow_art: bool, scale: f64) -> PhaseOutcome {
        let m = self.std.m;
        let tol_in = 1e-9 * (1.0 + scale);
        let tol_piv = 1e-9;
        let mut stall = 0usize;
        let mut bland = false;
        let mut last_obj = f64::INFINITY;
        // Columns found numerically unusable (no safe pivot element) since
        // the last successful pivot.
        let mut banned = vec![false; self.n_struct + m];
        // Smallest pivot magnitude we let into the basis; anything below
        // drifts the eta-updated inverse toward singularity.
        let min_piv = 1e-7;
        let ratio_test = |sx: &Simplex<'_>, d: &[f64], bland: bool| -> usize {
            let mut leave = usize::MAX;
            let mut best_ratio = f64::INFINITY;
            // Ties broken toward the largest pivot element for stability,
            // then smallest basis index (Bland-compatible).
            for r in 0..m {
                if d[r] > tol_piv {
                    let ratio = sx.xb[r] / d[r];
                    let better = ratio < best_ratio - 1e-12
                        || (ratio < best_ratio + 1e-12
                            && (leave == usize::MAX
                                || (bland && sx.basis[r] < sx.basis[leave])
                                || (!bland && d[r] > d[leave])));
                    if better {
                        best_ratio = ratio;
                        leave = r;
                    }
                }
            }
            leave
        };
        loop {
            if self.pivots >= self.budget {
                return PhaseOutcome::Budget;
            }
            let y = self.duals(c, art_cost);
            // Pricing.
            let mut enter = usize::MAX;
            let mut best = -tol_in;
            let ncols = if allow_art { self.n_struct + m } else { self.n_struct };
            for j in 0..ncols {
                if self.in_basis[j] || banned[j] {
                    continue;
                }
                let r = self.reduced_cost(j, &y, c, art_cost);
                if bland {
                    if r < -tol_in {
                        enter = j;
                        break;
                    }
                } else if r < best {
                    best = r;
                    enter = j;
                }
            }
            if enter == usize::MAX {
                return PhaseOutcome::Optimal;
            }
            let mut d = self.ftran(enter);
            let mut leave = ratio_test(self, &d, bland);
            // Guard against pivots that are artifacts of inverse drift:
            // rebuild the inverse once and retry before trusting a missing
            // or tiny pivot element.
            if leave == usize::MAX || d[leave].abs() < min_piv {
                if self.refactorize().is_ok() {
                    d = self.ftran(enter);
                    leave = ratio_test(self, &d, bland);
                }
            }
            if leave == usize::MAX {
                // Re-verify with the freshly rebuilt inverse: a column that
                // is numerically dependent on the basis can show a phantom
                // negative reduced cost and no blocking row at once.
                let y2 = self.duals(c, art_cost);
                if self.reduced_cost(enter, &y2, c, art_cost) >= -tol_in {
                    banned[enter] = true;
                    continue;
                }
                return PhaseOutcome::Unbounded;
            }
            if d[leave].abs() < min_piv {
                // The column is numerically dependent on the basis; leave
                // it out until the basis changes.
                banned[enter] = true;
                continue;
            }
            self.pivot(enter, leave, &d);
            banned.fill(false);
            // Stall heuristic: switch to Bland's rule after a run of pivots
            // with no objective progress.
            let obj: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .map(|(&j, &x)| x * if j < self.n_struct { c[j] } else { art_cost })
                .sum();
            if obj > last_obj - 1e-12 * (1.0 + scale) {
                stall += 1;
                if stall > 50 {
                    bland = true;
                }
                // A zero-progress run this long is degenerate cycling; give
                // up early so the caller can retry with a perturbed rhs.
                if stall > 2 * m + 500 {
                    return PhaseOutcome::Budget;
                }
            } else {
                stall = 0;
            }
            last_obj = obj;
        }
    }
}

enum ColRef<'a> {
    Sparse(&'a [(usize, f64)]),
    Unit(usize),
}

/// Solve `lp` with default tolerances.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    solve_lp_with(lp, Tolerances::default_static())
}

/// Two-phase simplex on standard-form data. `Err` carries the terminal
/// status plus the pivots spent.
fn optimize<'a>(
    std: &'a Standard,
    scale: f64,
    budget: usize,
) -> std::result::Result<Simplex<'a>, (LpStatus, usize)> {
    let mut sx = Simplex::new(std, budget);

    // Phase 1: drive out the artificial basis (structural costs zero,
    // artificials cost one).
    let phase1_c = vec![0.0; std.c.len()];
    match sx.run_phase(&phase1_c, 1.0, true, scale) {
        PhaseOutcome::Budget => return Err((LpStatus::Stalled, sx.pivots)),
        PhaseOutcome::Unbounded => unreachable!("phase 1 objective is bounded below by 0"),
        PhaseOutcome::Optimal => {}
    }
    let phase1: f64 = sx
        .basis
        .iter()
        .zip(&sx.xb)
        .map(|(&j, &x)| if j >= sx.n_struct { x } else { 0.0 })
        .sum();
    if phase1 > 1e-7 * (1.0 + scale) {
        return Err((LpStatus::Infeasible, sx.pivots));
    }
    // Pivot residual artificials out of the basis where possible; rows where
    // no structural pivot exists are redundant and keep their artificial at
    // level zero.
    for r in 0..std.m {
        if sx.basis[r] < sx.n_struct {
            continue;
        }
        let mut found = None;
        for j in 0..sx.n_struct {
            if sx.in_basis[j] {
                continue;
            }
            let mut drj = 0.0;
            for &(i, a) in &std.cols[j] {
                drj += a * sx.binv[r * std.m + i];
            }
            if drj.abs() > 1e-7 {
                found = Some(j);
                break;
            }
        }
        if let Some(j) = found {
            let d = sx.ftran(j);
            sx.pivot(j, r, &d);
        }
    }

    // Phase 2.
    match sx.run_phase(&std.c, 0.0, false, scale) {
        PhaseOutcome::Optimal => Ok(sx),
        PhaseOutcome::Unbounded => Err((LpStatus::Unbounded, sx.pivots)),
        PhaseOutcome::Budget => Err((LpStatus::Stalled, sx.pivots)),
    }
}

pub fn solve_lp_with(lp: &LinearProgram, tol: &Tolerances) -> LpSolution {
    let n = lp.num_vars();
    let m = lp.rows.len();
    let std = to_standard(lp);
    let scale = lp.data_scale();
    let budget = tol.lp_pivot_base + tol.lp_pivot_per_dim * (m + std.cols.len());

    let mut sx = match optimize(&std, scale, budget) {
        Ok(sx) => sx,
        Err((LpStatus::Stalled, _)) => {
            // Heavily degenerate instances can cycle the pivot budget away
            // on zero-length steps. Break the ties with a deterministic
            // positive rhs perturbation — the basis matrix is unchanged, so
            // an optimal basis of the perturbed problem transfers back to
            // the original rhs exactly, leaving at most a short phase-2
            // cleanup.
            let mut perturbed = std.clone();
            for (i, b) in perturbed.b.iter_mut().enumerate() {
                let h = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let u = ((h >> 40) as f64) / (1u64 << 24) as f64;
                *b += 1e-9 * (1.0 + *b) * (0.5 + 0.5 * u);
            }
            let dbg = std::env::var("VOPT_LP_DEBUG").is_ok();
            let transferred = match optimize(&perturbed, scale, budget) {
                Ok(sxp) => match Simplex::with_basis(&std, budget, sxp.basis) {
                    Ok(mut sx) => {
                        for v in sx.xb.iter_mut() {
                            if *v < 0.0 {
                                *v = 0.0;
                            }
                        }
                        match sx.run_phase(&std.c, 0.0, false, scale) {
                            PhaseOutcome::Optimal => Some(sx),
                            o => {
                                if dbg {
                                    eprintln!(
                                        "fallback cleanup phase2 failed: {}",
                                        match o {
                                            PhaseOutcome::Unbounded => "unbounded",
                                            _ => "budget",
                                        }
                                    );
                                }
                                None
                            }
                        }
                    }
                    Err(e) => {
                        if dbg {
                            eprintln!("fallback basis transfer failed: {e}");
                        }
                        None
                    }
                },
                Err((st, piv)) => {
                    if dbg {
                        eprintln!("fallback perturbed optimize failed: {st:?} after {piv} pivots");
                    }
                    None
                }
            };
            match transferred {
                Some(sx) => sx,
                None => return LpSolution::status_only(LpStatus::Stalled, n, m, budget),
            }
        }
        Err((status, pivots)) => return LpSolution::status_only(status, n, m, pivots),
    };
    let status = LpStatus::Optimal;

    // Final refactorization for accurate primal/dual values.
    if sx.refactorize().is_err() {
        if std::env::var("VOPT_LP_DEBUG").is_ok() {
            eprintln!("final refactorization singular after {} pivots", sx.pivots);
        }
        return LpSolution::status_only(LpStatus::Stalled, n, m, sx.pivots);
    }
    let y_std = sx.duals(&std.c, 0.0);
    let mut x_std = vec![0.0; sx.n_struct];
    for (r, &j) in sx.basis.iter().enumerate() {
        if j < sx.n_struct {
            x_std[j] = sx.xb[r];
        }
    }
    let mut x = vec![0.0; n];
    for (v, map) in std.var_map.iter().enumerate() {
        x[v] = match *map {
            VarMap::Shifted { col, shift } => x_std[col] + shift,
            VarMap::Split { pos, neg } => x_std[pos] - x_std[neg],
        };
    }
    let mut row_duals = vec![0.0; m];
    for i in 0..m {
        row_duals[i] = y_std[i] * std.row_sign[i];
    }
    // Clip tiny negative inequality duals left by finite tolerances.
    for (i, r) in lp.rows.iter().enumerate() {
        if r.kind == RowKind::Ge && row_duals[i] < 0.0 && row_duals[i] > -1e-7 * (1.0 + scale) {
            row_duals[i] = 0.0;
        }
    }
    let mut reduced = lp.objective.clone();
    for (i, r) in lp.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            reduced[j] -= a * row_duals[i];
        }
    }
    let value = std
        .var_map
        .iter()
        .enumerate()
        .map(|(v, _)| lp.objective[v] * x[v])
        .sum::<f64>();
    let _ = std.obj_shift; // folded into `value` via the recovered x
    LpSolution {
        status,
        x,
        value,
        row_duals,
        reduced_costs: reduced,
        pivots: sx.pivots,
    }
}
