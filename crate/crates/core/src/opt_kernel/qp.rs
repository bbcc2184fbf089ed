//! Regularized master QPs with dual extraction.
//!
//! Problems are stated in maximization form:
//!
//! ```text
//!     max  cᵀu − Σ_j ϱ_j (u_j − ū_j)²
//!     s.t. aᵀu  = b   (equality rows)
//!          aᵀu ≤ b   (inequality rows)
//! ```
//!
//! where `ϱ_j > 0` on the proximal variable blocks and `ϱ_j = 0` on
//! epigraph-style variables (the `ϑ`/`η` of the bundle masters) that are
//! bounded above by cut rows only.
//!
//! The solver is a dual active-set method (Goldfarb–Idnani): it starts from
//! the unconstrained maximizer and adds the most violated constraint at a
//! time, maintaining a QR factorization of the active normals in the metric
//! of the Hessian. Strict concavity is required, so the `ϱ = 0` variables
//! receive a tiny curvature shim centered at `ū`; the shim error is removed
//! afterwards by one exact KKT solve on the final active set ("polish"),
//! which also produces multipliers satisfying the *unperturbed* stationarity
//! system. Reported duals `y` satisfy, at optimality,
//!
//! ```text
//!     c_j − 2ϱ_j(u_j − ū_j) = Σ_k a_kj y_k,    y ≥ 0 on inequality rows.
//! ```

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Sparse linear constraint `coeffs · u (= or ≤) rhs`.
#[derive(Debug, Clone)]
pub struct SparseCon {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseCon {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        SparseCon { coeffs, rhs }
    }

    fn dot(&self, u: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * u[j]).sum()
    }

    fn norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|&(_, a)| a * a)
            .sum::<f64>()
            .sqrt()
            .max(1e-30)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RegularizedQP {
    /// Linear objective coefficients `c`.
    pub linear: Vec<f64>,
    /// Proximal weights `ϱ_j ≥ 0`; zero marks an epigraph variable.
    pub prox_weight: Vec<f64>,
    /// Proximal centers `ū` (also used as shim centers for `ϱ_j = 0`).
    pub center: Vec<f64>,
    pub eq: Vec<SparseCon>,
    pub le: Vec<SparseCon>,
}

impl RegularizedQP {
    pub fn new(n: usize) -> Self {
        RegularizedQP {
            linear: vec![0.0; n],
            prox_weight: vec![0.0; n],
            center: vec![0.0; n],
            eq: Vec::new(),
            le: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn data_scale(&self) -> f64 {
        let mut s: f64 = 0.0;
        for v in self
            .linear
            .iter()
            .chain(&self.prox_weight)
            .chain(&self.center)
        {
            s = s.max(v.abs());
        }
        for c in self.eq.iter().chain(&self.le) {
            s = s.max(c.rhs.abs());
            for &(_, a) in &c.coeffs {
                s = s.max(a.abs());
            }
        }
        s
    }

    pub fn objective_at(&self, u: &[f64]) -> f64 {
        let mut v = 0.0;
        for j in 0..self.num_vars() {
            let d = u[j] - self.center[j];
            v += self.linear[j] * u[j] - self.prox_weight[j] * d * d;
        }
        v
    }

    /// Plain-text dump for external cross-checking.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(
            out,
            "qp vars {} eq {} le {}",
            self.num_vars(),
            self.eq.len(),
            self.le.len()
        )
        .unwrap();
        for j in 0..self.num_vars() {
            writeln!(
                out,
                "var {j} linear {} prox {} center {}",
                self.linear[j], self.prox_weight[j], self.center[j]
            )
            .unwrap();
        }
        for (tag, cons) in [("eq", &self.eq), ("le", &self.le)] {
            for (i, c) in cons.iter().enumerate() {
                write!(out, "{tag} {i}").unwrap();
                for (j, a) in &c.coeffs {
                    write!(out, " {a}*u{j}").unwrap();
                }
                writeln!(out, " {}", c.rhs).unwrap();
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u: Vec<f64>,
    pub value: f64,
    pub eq_duals: Vec<f64>,
    /// ≥ 0 at optimality, one per `le` row.
    pub le_duals: Vec<f64>,
    pub iterations: usize,
    /// Whether the exact KKT polish on the final active set succeeded.
    pub polished: bool,
}

impl QpSolution {
    /// Worst scaled KKT residual of the (unperturbed) problem.
    pub fn kkt_residual(&self, qp: &RegularizedQP) -> f64 {
        let scale = 1.0 + qp.data_scale();
        let n = qp.num_vars();
        let mut grad: Vec<f64> = (0..n)
            .map(|j| qp.linear[j] - 2.0 * qp.prox_weight[j] * (self.u[j] - qp.center[j]))
            .collect();
        let mut worst: f64 = 0.0;
        for (i, c) in qp.eq.iter().enumerate() {
            worst = worst.max((c.dot(&self.u) - c.rhs).abs());
            for &(j, a) in &c.coeffs {
                grad[j] -= a * self.eq_duals[i];
            }
        }
        for (i, c) in qp.le.iter().enumerate() {
            let slack = c.dot(&self.u) - c.rhs;
            worst = worst.max(slack.max(0.0));
            worst = worst.max((-self.le_duals[i]).max(0.0));
            worst = worst.max((self.le_duals[i] * slack).abs());
            for &(j, a) in &c.coeffs {
                grad[j] -= a * self.le_duals[i];
            }
        }
        for g in &grad {
            worst = worst.max(g.abs());
        }
        worst / scale
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Relative curvature shim for variables without a proximal term.
const SHIM: f64 = 1e-9;

pub fn solve_qp(qp: &RegularizedQP) -> Result<QpSolution> {
    let n = qp.num_vars();
    let meq = qp.eq.len();
    let q = meq + qp.le.len();
    let scale = 1.0 + qp.data_scale();

    // Minimization form: min ½ uᵀ H u + cᵀu with diagonal H.
    let max_prox = qp.prox_weight.iter().cloned().fold(0.0f64, f64::max);
    let shim = SHIM * (1.0 + max_prox);
    let hdiag: Vec<f64> = qp
        .prox_weight
        .iter()
        .map(|&r| if r > 0.0 { 2.0 * r } else { 2.0 * shim })
        .collect();
    let cmin: Vec<f64> = (0..n)
        .map(|j| -(qp.linear[j] + hdiag[j] * qp.center[j]))
        .collect();

    // Combined constraint list: equalities first.
    let cons: Vec<&SparseCon> = qp.eq.iter().chain(qp.le.iter()).collect();
    let norms: Vec<f64> = cons.iter().map(|c| c.norm()).collect();

    // Unconstrained minimizer and the inverse Cholesky factor J = L⁻ᵀ
    // (diagonal H, so J starts diagonal). J is stored by rows; rows
    // `0..nact` span the active-normal subspace.
    let mut sol: Vec<f64> = (0..n).map(|j| -cmin[j] / hdiag[j]).collect();
    let mut jmat = vec![0.0; n * n];
    for j in 0..n {
        jmat[j * n + j] = 1.0 / hdiag[j].sqrt();
    }
    let mut rmat: Vec<f64> = Vec::new(); // packed upper-triangular, column-major
    let mut iact: Vec<usize> = Vec::new();
    let mut direc: Vec<f64> = Vec::new();
    let mut uv: Vec<f64> = Vec::new();

    let mut dv = vec![0.0; n];
    let mut zv = vec![0.0; n];
    let mut rv = vec![0.0; n.min(q).max(1)];
    let viol_tol = 1e-11 * scale;
    let max_outer = 10 * q + 100;
    let mut iterations = 0usize;

    loop {
        // Most violated constraint (equalities may violate either way).
        let mut iadd = usize::MAX;
        let mut max_violation = viol_tol;
        for (i, c) in cons.iter().enumerate() {
            if iact.contains(&i) {
                continue;
            }
            let sv = c.rhs - c.dot(&sol);
            let v = if i < meq { sv.abs() } else { -sv };
            let v = v / norms[i];
            if v > max_violation {
                max_violation = v;
                iadd = i;
            }
        }
        if iadd == usize::MAX {
            break;
        }
        iterations += 1;
        if iterations > max_outer {
            return Err(Error::Qp(
                "active-set iteration budget exhausted".to_string(),
            ));
        }

        let cadd = cons[iadd];
        let mut slack = cadd.rhs - cadd.dot(&sol);
        let dir = slack.signum();
        let mut u_new = 0.0;

        loop {
            // dv = Jᵀ ñ where ñ = dir · (constraint normal).
            for i in 0..n {
                let row = &jmat[i * n..(i + 1) * n];
                dv[i] = dir * cadd.coeffs.iter().map(|&(j, a)| a * row[j]).sum::<f64>();
            }
            // Primal step direction from the null-space rows.
            zv.fill(0.0);
            let nact = iact.len();
            for i in nact..n {
                axpy(dv[i], &jmat[i * n..(i + 1) * n], &mut zv);
            }
            // Dual step direction r = R⁻¹ d₁.
            rv[..nact].clone_from_slice(&dv[..nact]);
            for i in (0..nact).rev() {
                let start = i * (i + 1) / 2;
                rv[i] /= rmat[start + i];
                let (head, tail) = rv.split_at_mut(i);
                axpy(-tail[0], &rmat[start..start + i], head);
            }
            // Longest dual-feasible step before an inequality multiplier hits
            // zero.
            let mut idel = usize::MAX;
            let mut t1 = f64::INFINITY;
            for k in 0..nact {
                if iact[k] >= meq && rv[k] > 0.0 {
                    let t = uv[k] / rv[k];
                    if t < t1 {
                        t1 = t;
                        idel = k;
                    }
                }
            }
            // Step to zero the entering slack.
            let znorm2 = dot(&zv, &zv);
            let t2 = if znorm2.abs() <= f64::EPSILON * scale * scale {
                f64::INFINITY
            } else {
                let ztn: f64 = cadd.coeffs.iter().map(|&(j, a)| a * zv[j]).sum();
                slack / ztn
            };
            if !t1.is_finite() && !t2.is_finite() {
                return Err(Error::Qp("infeasible constraint system".to_string()));
            }
            let partial = t2 > t1;
            let step = if partial { t1 } else { t2 };

            axpy(step, &zv, &mut sol);
            for k in 0..nact {
                uv[k] -= step * rv[k];
            }
            u_new += step;

            if !partial {
                break;
            }
            // Drop constraint idel and retry the full step.
            qr_delete(idel, &mut jmat, &mut rmat, n, nact);
            uv.remove(idel);
            iact.remove(idel);
            direc.remove(idel);
            slack = cadd.rhs - cadd.dot(&sol);
        }

        // Admit the constraint into the active set.
        uv.push(u_new);
        iact.push(iadd);
        direc.push(dir);
        qr_insert(iact.len(), &mut dv, &mut jmat, n);
        let nact = iact.len();
        let start = nact * (nact - 1) / 2;
        rmat.resize(start + nact, 0.0);
        rmat[start..start + nact].clone_from_slice(&dv[..nact]);
    }

    // Signed multipliers: stationarity is H u + c = Σ u_k (dir_k a_k), so the
    // multiplier on the stored normal a_k is λ_k = −dir_k u_k for our
    // convention c_max − H(u−ū) = Aᵀy.
    let mut eq_duals = vec![0.0; meq];
    let mut le_duals = vec![0.0; qp.le.len()];
    for (k, &i) in iact.iter().enumerate() {
        let lam = -direc[k] * uv[k];
        if i < meq {
            eq_duals[i] = lam;
        } else {
            le_duals[i - meq] = lam.max(0.0);
        }
    }

    let out = QpSolution {
        value: qp.objective_at(&sol),
        u: sol,
        eq_duals,
        le_duals,
        iterations,
        polished: false,
    };

    if let Some(polished) = polish(qp, &iact, meq, &out) {
        if polished.kkt_residual(qp) <= out.kkt_residual(qp) {
            return Ok(polished);
        }
    }
    Ok(out)
}

/// One exact KKT solve on the final active set: removes the curvature shim
/// on ϱ = 0 variables and tightens the multipliers. Returns `None` when the
/// reduced system is singular or the candidate violates feasibility or dual
/// signs beyond tolerance.
fn polish(qp: &RegularizedQP, iact: &[usize], meq: usize, gi: &QpSolution) -> Option<QpSolution> {
    let n = qp.num_vars();
    let scale = 1.0 + qp.data_scale();
    let tol = 1e-8 * scale;
    let lin_vars: Vec<usize> = (0..n).filter(|&j| qp.prox_weight[j] == 0.0).collect();
    let lin_pos: Vec<Option<usize>> = {
        let mut v = vec![None; n];
        for (k, &j) in lin_vars.iter().enumerate() {
            v[j] = Some(k);
        }
        v
    };
    let cons: Vec<&SparseCon> = qp.eq.iter().chain(qp.le.iter()).collect();
    let qa = iact.len();
    let nl = lin_vars.len();
    let dim = qa + nl;
    if dim == 0 {
        let mut u = vec![0.0; n];
        for j in 0..n {
            if qp.prox_weight[j] == 0.0 {
                return None; // unbounded without active rows
            }
            u[j] = qp.center[j] + qp.linear[j] / (2.0 * qp.prox_weight[j]);
        }
        return Some(QpSolution {
            value: qp.objective_at(&u),
            u,
            eq_duals: vec![0.0; qp.eq.len()],
            le_duals: vec![0.0; qp.le.len()],
            iterations: gi.iterations,
            polished: true,
        });
    }

    // Unknowns: y (active multipliers, our sign convention) then u_lin.
    // Prox variables are eliminated: u_p = ū_p + (c_p − (Aᵀy)_p) / (2ϱ_p).
    // System rows: active constraints (qa), then stationarity of the linear
    // variables (nl): (Aᵀy)_lin = c_lin.
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (r, &ci) in iact.iter().enumerate() {
        let c = cons[ci];
        let mut b = c.rhs;
        for &(j, a) in &c.coeffs {
            if let Some(k) = lin_pos[j] {
                mat[(r, qa + k)] += a;
            } else {
                let h = 2.0 * qp.prox_weight[j];
                b -= a * (qp.center[j] + qp.linear[j] / h);
                // coefficient of y on the eliminated u_p: −a_rj a_sj / h
                for (s, &ci2) in iact.iter().enumerate() {
                    for &(j2, a2) in &cons[ci2].coeffs {
                        if j2 == j {
                            mat[(r, s)] -= a * a2 / h;
                        }
                    }
                }
            }
        }
        rhs[r] = b;
    }
    for (k, &j) in lin_vars.iter().enumerate() {
        for (s, &ci2) in iact.iter().enumerate() {
            for &(j2, a2) in &cons[ci2].coeffs {
                if j2 == j {
                    mat[(qa + k, s)] += a2;
                }
            }
        }
        rhs[qa + k] = qp.linear[j];
    }
    let lu = mat.lu();
    let sol = lu.solve(&rhs)?;

    let mut u = vec![0.0; n];
    for j in 0..n {
        if lin_pos[j].is_none() {
            let h = 2.0 * qp.prox_weight[j];
            let mut aty = 0.0;
            for (s, &ci2) in iact.iter().enumerate() {
                for &(j2, a2) in &cons[ci2].coeffs {
                    if j2 == j {
                        aty += a2 * sol[s];
                    }
                }
            }
            u[j] = qp.center[j] + (qp.linear[j] - aty) / h;
        }
    }
    for (k, &j) in lin_vars.iter().enumerate() {
        u[j] = sol[qa + k];
    }

    let mut eq_duals = vec![0.0; qp.eq.len()];
    let mut le_duals = vec![0.0; qp.le.len()];
    for (s, &ci) in iact.iter().enumerate() {
        if ci < meq {
            eq_duals[ci] = sol[s];
        } else {
            if sol[s] < -tol {
                return None; // wrong multiplier sign: degenerate active set
            }
            le_duals[ci - meq] = sol[s].max(0.0);
        }
    }
    // Inactive feasibility check.
    for (i, c) in qp.le.iter().enumerate() {
        if c.dot(&u) - c.rhs > tol && !iact.contains(&(meq + i)) {
            return None;
        }
    }
    Some(QpSolution {
        value: qp.objective_at(&u),
        u,
        eq_duals,
        le_duals,
        iterations: gi.iterations,
        polished: true,
    })
}

/// Givens-rotate rows `r..n` of `jmat` so that the components of `vec`
/// beyond the `r`-th vanish (1-based `r`), keeping J orthogonal in the
/// Hessian metric.
fn qr_insert(r: usize, vec: &mut [f64], jmat: &mut [f64], n: usize) {
    for i in (r..n).rev() {
        if vec[i] == 0.0 {
            continue;
        }
        let (a, b) = (vec[i - 1], vec[i]);
        let (top, bottom) = jmat.split_at_mut(i * n);
        let row_prev = &mut top[(i - 1) * n..];
        let row_cur = &mut bottom[..n];
        if a == 0.0 {
            vec[i - 1] = b;
            row_prev.swap_with_slice(row_cur);
        } else {
            let h = a.hypot(b).copysign(a);
            let gc = a / h;
            let gs = b / h;
            let nu = b / (a + h);
            vec[i - 1] = h;
            for (p, c) in row_prev.iter_mut().zip(row_cur.iter_mut()) {
                let t = gc * *p + gs * *c;
                *c = nu * (*p + t) - *c;
                *p = t;
            }
        }
    }
}

/// Remove active constraint `col` (0-based) from the packed R factor and
/// restore triangularity, applying the same rotations to the rows of `jmat`.
fn qr_delete(col: usize, jmat: &mut [f64], rmat: &mut Vec<f64>, n: usize, nact: usize) {
    for i in (col + 1)..nact {
        let di = i * (i + 1) / 2;
        let l = di + i;
        let (a, b) = (rmat[l - 1], rmat[l]);
        if b != 0.0 {
            let (top, bottom) = jmat.split_at_mut(i * n);
            let row_prev = &mut top[(i - 1) * n..];
            let row_cur = &mut bottom[..n];
            if a == 0.0 {
                let mut ind = l;
                for j in (i + 1)..=nact {
                    rmat.swap(ind - 1, ind);
                    ind += j;
                }
                row_prev.swap_with_slice(row_cur);
            } else {
                let h = a.hypot(b).copysign(a);
                let gc = a / h;
                let gs = b / h;
                let nu = b / (a + h);
                let mut ind = l;
                for j in (i + 1)..=nact {
                    let t = gc * rmat[ind - 1] + gs * rmat[ind];
                    rmat[ind] = nu * (rmat[ind - 1] + t) - rmat[ind];
                    rmat[ind - 1] = t;
                    ind += j;
                }
                for (p, c) in row_prev.iter_mut().zip(row_cur.iter_mut()) {
                    let t = gc * *p + gs * *c;
                    *c = nu * (*p + t) - *c;
                    *p = t;
                }
            }
        }
        // Shift column i into slot i−1 of the packed R.
        let prev_start = (i - 1) * i / 2;
        for k in 0..i {
            rmat[prev_start + k] = rmat[di + k];
        }
    }
    rmat.truncate((nact - 1) * nact / 2);
}
