//! Scenario-decomposed proximal bundle backends for `P1(w)` and `P2(v)`.
//!
//! Both scalarizations are attacked through their nonanticipative Lagrangian
//! duals. After splitting the first stage into scenario copies `x_i` coupled
//! only by `E[λ] = 0`, the dual becomes a sum of *separable* concave pieces,
//! one per scenario, minus a risk-penalty term:
//!
//! ```text
//!   P1(w) = sup { Σ_i f_i(μ_i, λ_i; w) − β(μ, w) :  Σ_i μ_i^j = 1 ∀j, E[λ] = 0 }
//!   P2(v) = sup { Σ_i f̃_i(m_i, λ_i) − Σ_i m_iᵀv − β̃(m) :  Σ_{ij} m_i^j = 1, E[λ] = 0 }
//! ```
//!
//! where each `f_i` is the optimal value of one small scenario LP (see
//! [`solve_scenario_subproblem`]) and therefore a concave polyhedral function
//! of the dual variables with readily available supergradients. A proximal
//! bundle method maximizes these duals: every iteration solves the `I`
//! scenario LPs at the current dual point, collects linearizations ("cuts"),
//! and solves a regularized master QP whose multipliers on the cuts are
//! convex-combination weights `τ` that *recover a primal solution*:
//! `x_i = Σ_ℓ τ_i^ℓ x_i^ℓ`. The recovered first stage is de-randomized by
//! projecting its expectation back onto the first-stage feasible set, the
//! second stages are re-solved for exact feasibility, and the risk vector
//! `z` (for `P1`) or entry step `α` (for `P2`) is evaluated at the repaired
//! point, so the reported primal quantities always belong to the upper image.
//!
//! Coherent (CVaR) risks have a `{0, +∞}` penalty: the penalty never
//! generates cuts and is enforced exactly through its polyhedral domain rows
//! in the master. The entropic penalty is smooth and enters through
//! epigraph cuts on an extra master variable `η`.

use std::fmt::Write as _;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::model::{build_scenario_lp, TwoStageProblem};
use crate::opt_kernel::{
    solve_lp, solve_qp, LinearProgram, LpStatus, RegularizedQP, RowKind, SparseCon,
};
use crate::risk::{
    beta_tilde_subgradient, entry_alpha, penalty_beta, penalty_beta_subgradient,
    penalty_beta_tilde, scalarize_phi, ProbVector, RiskKind, RiskMeasure,
};
use crate::scalarization::{cost_matrix, probabilities};

/// Tuning knobs of the proximal bundle loops.
#[derive(Debug, Clone)]
pub struct BundleParams {
    /// Proximal weight `ϱ` on the dual variables in the master QP.
    pub prox_weight: f64,
    /// Descent parameter `γ ∈ (0, 1)`: an iterate becomes the new center
    /// when its dual value covers at least the fraction `γ` of the gap
    /// between the center value and the master bound.
    pub descent: f64,
    /// Stop once `master bound − center value ≤ eps_stop`.
    pub eps_stop: f64,
    pub max_iters: usize,
    /// Aggregate the per-scenario cuts of one iteration into a single row
    /// (one epigraph variable `ϑ` instead of `I` of them).
    pub single_cut: bool,
    /// Drop cut rows whose master multiplier is zero.
    pub cut_deletion: bool,
    /// Write one line per iteration (`k F master gap descent cuts`).
    pub trace: Option<std::path::PathBuf>,
}

impl Default for BundleParams {
    fn default() -> Self {
        BundleParams {
            prox_weight: 1.0,
            descent: 0.1,
            eps_stop: 1e-6,
            max_iters: 500,
            single_cut: false,
            cut_deletion: true,
            trace: None,
        }
    }
}

/// Outcome of one dual bundle solve, including the recovered primal point.
#[derive(Debug, Clone)]
pub struct BundleResult {
    /// Dual (lower-bound) value: the center value at termination.
    pub value: f64,
    /// Value of the scalarization at the recovered feasible primal point
    /// (`wᵀz` for `P1`, `α` for `P2`); an upper bound on the true optimum.
    pub primal_value: f64,
    /// De-randomized first stage (projection of `E[x]` onto `Ax = b, x ≥ 0`).
    pub x: Vec<f64>,
    /// Per-scenario first stages recovered from the master multipliers.
    pub x_scenarios: Vec<Vec<f64>>,
    /// Second stages re-solved for feasibility against `x`.
    pub y: Vec<Vec<f64>>,
    /// Attained risk vector (`P1` only).
    pub z: Option<Vec<f64>>,
    /// Entry step along the diagonal (`P2` only).
    pub alpha: Option<f64>,
    /// Normalized dual weight of the supporting halfspace (`P2` only).
    pub gamma: Option<Vec<f64>>,
    pub iterations: usize,
    /// Final `master bound − center value`.
    pub gap: f64,
    /// `max_i ‖x_i − E[x]‖_∞` before de-randomization.
    pub nonanticipativity: f64,
    /// Whether the gap fell below `eps_stop` within the iteration budget.
    pub converged: bool,
    /// Recovery used the last master's multipliers because no descent step
    /// occurred within 50 iterations after the stopping test fired.
    pub recovery_fallback: bool,
    /// Worst violation of the convex-combination identities the recovery
    /// multipliers must satisfy (`Σ_ℓ τ_i^ℓ = 1` per scenario, `Σ_ℓ θ^ℓ = 1`
    /// on the penalty cuts).
    pub multiplier_identity_residual: f64,
}

impl BundleResult {
    fn unbounded() -> Self {
        BundleResult {
            value: f64::NEG_INFINITY,
            primal_value: f64::NEG_INFINITY,
            x: Vec::new(),
            x_scenarios: Vec::new(),
            y: Vec::new(),
            z: None,
            alpha: None,
            gamma: None,
            iterations: 0,
            gap: 0.0,
            nonanticipativity: 0.0,
            converged: true,
            recovery_fallback: false,
            multiplier_identity_residual: 0.0,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.value == f64::NEG_INFINITY
    }
}

/// One linearization of a scenario dual function.
#[derive(Debug, Clone)]
pub struct ScenarioCut {
    /// `f_i` at the query point.
    pub value: f64,
    /// Minimizing first stage of the scenario LP.
    pub x: Vec<f64>,
    /// Minimizing second stage.
    pub y: Vec<f64>,
    /// Supergradient with respect to the measure block (`w_j u_j` for `P1`
    /// where `u = Cx + Q_i y`, plain `u_j` for `P2`).
    pub g_measure: Vec<f64>,
    /// Supergradient with respect to `λ_i`: `p_i x`.
    pub g_lambda: Vec<f64>,
}

/// Evaluate one scenario piece of the Lagrangian dual:
///
/// ```text
///   f_i = min { Σ_j e_j (Cx + Q_i y)_j + p_i λᵀx :  (x, y) ∈ F_i }
/// ```
///
/// with effective measure `e_j = w_j μ_ij` when `weight = Some(w)` (`P1`)
/// and `e_j = m_ij` when `weight = None` (`P2`).
pub fn solve_scenario_subproblem(
    p: &TwoStageProblem,
    i: usize,
    measure: &[f64],
    lambda: &[f64],
    weight: Option<&[f64]>,
) -> Result<ScenarioCut> {
    let d = &p.dims;
    if measure.len() != d.j || lambda.len() != d.m {
        return Err(Error::Bundle(format!(
            "scenario {i}: dual point has wrong dimensions (measure {}, lambda {})",
            measure.len(),
            lambda.len()
        )));
    }
    let pi = p.scenarios[i].probability;
    let eff: Vec<f64> = match weight {
        Some(w) => (0..d.j).map(|j| w[j] * measure[j]).collect(),
        None => measure.to_vec(),
    };
    let mut objective = vec![0.0; d.m + d.n];
    for m in 0..d.m {
        let mut c = pi * lambda[m];
        for j in 0..d.j {
            c += eff[j] * p.c[j][m];
        }
        objective[m] = c;
    }
    for n in 0..d.n {
        let mut c = 0.0;
        for j in 0..d.j {
            c += eff[j] * p.scenarios[i].q[j][n];
        }
        objective[d.m + n] = c;
    }
    let lp = build_scenario_lp(p, i, &objective)?;
    let sol = solve_lp(&lp);
    if sol.status != LpStatus::Optimal {
        return Err(Error::Bundle(format!(
            "scenario {i} subproblem did not solve: {:?}",
            sol.status
        )));
    }
    let x = sol.x[..d.m].to_vec();
    let y = sol.x[d.m..d.m + d.n].to_vec();
    let u = p.scenario_cost(i, &x, &y)?;
    let g_measure: Vec<f64> = match weight {
        Some(w) => (0..d.j).map(|j| w[j] * u[j]).collect(),
        None => u,
    };
    let g_lambda: Vec<f64> = x.iter().map(|v| pi * v).collect();
    Ok(ScenarioCut {
        value: sol.value,
        x,
        y,
        g_measure,
        g_lambda,
    })
}

/// Maximize the Lagrangian dual of `P1(w)` and recover a primal solution.
pub fn run_bundle_p1(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    w: &[f64],
    params: &BundleParams,
) -> Result<BundleResult> {
    run_bundle(p, r, Form::P1 { w }, params)
}

/// Maximize the Lagrangian dual of `P2(v)` and recover a primal solution
/// together with the supporting-halfspace weight `γ`.
pub fn run_bundle_p2(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    v: &[f64],
    params: &BundleParams,
) -> Result<BundleResult> {
    run_bundle(p, r, Form::P2 { v }, params)
}

#[derive(Clone, Copy)]
enum Form<'a> {
    P1 { w: &'a [f64] },
    P2 { v: &'a [f64] },
}

/// One iteration's worth of scenario linearizations. Entries are cleared
/// (not removed) on deletion so stored indices stay valid.
struct IterCuts {
    entries: Vec<Option<ScenEntry>>,
    iter: usize,
}

struct ScenEntry {
    value: f64,
    g_measure: Vec<f64>,
    g_lambda: Vec<f64>,
    measure_ref: Vec<f64>,
    lambda_ref: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl ScenEntry {
    /// Right-hand side of the epigraph row `ϑ − gᵀ(μ, λ) ≤ rhs`.
    fn rhs(&self) -> f64 {
        let gm: f64 = self
            .g_measure
            .iter()
            .zip(&self.measure_ref)
            .map(|(g, m)| g * m)
            .sum();
        let gl: f64 = self
            .g_lambda
            .iter()
            .zip(&self.lambda_ref)
            .map(|(g, l)| g * l)
            .sum();
        self.value - gm - gl
    }
}

/// Epigraph cut on the (smooth) entropic penalty: `η ≤ −β^ℓ + ρᵀ(μ − μ^ℓ)`.
struct BetaCut {
    value: f64,
    /// `ρ[i][j] ∈ ∂(−β)` at the reference point.
    rho: Vec<Vec<f64>>,
    measure_ref: Vec<Vec<f64>>,
    iter: usize,
}

impl BetaCut {
    fn rhs(&self) -> f64 {
        let mut rhs = -self.value;
        for (rho_i, mu_i) in self.rho.iter().zip(&self.measure_ref) {
            for (r, m) in rho_i.iter().zip(mu_i) {
                rhs -= r * m;
            }
        }
        rhs
    }
}

/// What a master row corresponds to, for dual extraction and deletion.
#[derive(Clone, Copy, PartialEq)]
enum RowTag {
    Static,
    FCut { cut: usize, scen: Option<usize> },
    BetaCut { cut: usize },
}

struct MasterOutcome {
    measure: Vec<Vec<f64>>,
    lambda: Vec<Vec<f64>>,
    /// `Σϑ + η (− Σ_i m_iᵀv)`: the unregularized model bound.
    master_val: f64,
    fcut_duals: Vec<(usize, Option<usize>, f64)>,
    beta_duals: Vec<(usize, f64)>,
    active_cut_rows: usize,
}

fn run_bundle(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    form: Form<'_>,
    params: &BundleParams,
) -> Result<BundleResult> {
    let d = &p.dims;
    let (big_i, big_j, big_m) = (d.i, d.j, d.m);
    if r.dim() != big_j {
        return Err(Error::Bundle(format!(
            "risk dimension {} does not match problem objectives {big_j}",
            r.dim()
        )));
    }
    if params.max_iters == 0 || !(params.descent > 0.0 && params.descent < 1.0) {
        return Err(Error::Bundle(
            "need max_iters >= 1 and descent parameter in (0,1)".into(),
        ));
    }
    let probs = probabilities(p);
    let tol = Tolerances::default_static();
    let entropic = matches!(r.kind, RiskKind::Entropic { .. });

    match form {
        Form::P1 { w } => {
            if w.len() != big_j {
                return Err(Error::Bundle("weight dimension mismatch".into()));
            }
            if w.iter().any(|&x| x < -1e-12) {
                return Ok(BundleResult::unbounded());
            }
            if !entropic && !r.weight_in_dual_cone(w, 1e-9) {
                // Coherent scalarization is −∞ outside the dual cone.
                return Ok(BundleResult::unbounded());
            }
        }
        Form::P2 { v } => {
            if v.len() != big_j {
                return Err(Error::Bundle("reference point dimension mismatch".into()));
            }
        }
    }

    // Initial dual point: the reference probabilities (total mass split
    // across objectives for the `P2` finite measures), zero multipliers.
    let mut measure: Vec<Vec<f64>> = match form {
        Form::P1 { .. } => (0..big_i)
            .map(|i| vec![probs[i]; big_j])
            .collect(),
        Form::P2 { .. } => (0..big_i)
            .map(|i| vec![probs[i] / big_j as f64; big_j])
            .collect(),
    };
    let mut lambda: Vec<Vec<f64>> = vec![vec![0.0; big_m]; big_i];
    let mut center_measure = measure.clone();
    let mut center_lambda = lambda.clone();

    let mut cuts: Vec<IterCuts> = Vec::new();
    let mut beta_cuts: Vec<Option<BetaCut>> = Vec::new();
    let mut prev_master_val: Option<f64> = None;
    let mut last_outcome: Option<MasterOutcome> = None;
    let mut f_bar = 0.0;
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut stop_iter: Option<usize> = None;
    let mut trace = String::new();
    let mut iterations = 0usize;
    let mut recovery: Option<(MasterOutcome, bool)> = None;
    // The master value bounds the dual optimum only up to the proximal
    // curvature times the (unknown) distance to the optimum, so the gap
    // test is trusted only once the proximal weight has been driven down;
    // each time the test fires with a heavy weight we relax it and resume.
    let mut effective = params.clone();

    for k in 1..=params.max_iters {
        iterations = k;

        // Evaluate the dual at the current iterate.
        let weight = match form {
            Form::P1 { w } => Some(w),
            Form::P2 { .. } => None,
        };
        let mut scen_cuts = Vec::with_capacity(big_i);
        let mut f_sum = 0.0;
        for i in 0..big_i {
            let cut = solve_scenario_subproblem(p, i, &measure[i], &lambda[i], weight)?;
            f_sum += cut.value;
            scen_cuts.push(cut);
        }
        let (beta_val, beta_rho) = penalty_at(r, form, &measure, &probs, tol.mass_clamp)?;
        let mut f_val = f_sum - beta_val;
        if let Form::P2 { v } = form {
            for mi in &measure {
                for (mij, vj) in mi.iter().zip(v) {
                    f_val -= mij * vj;
                }
            }
        }

        // Cut admission: only iterates that improve on the current model.
        if prev_master_val.map_or(true, |mv| f_val < mv) {
            let entries = scen_cuts
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    Some(ScenEntry {
                        value: c.value,
                        g_measure: c.g_measure.clone(),
                        g_lambda: c.g_lambda.clone(),
                        measure_ref: measure[i].clone(),
                        lambda_ref: lambda[i].clone(),
                        x: c.x.clone(),
                        y: c.y.clone(),
                    })
                })
                .collect();
            cuts.push(IterCuts { entries, iter: k });
            if let Some(rho) = beta_rho {
                beta_cuts.push(Some(BetaCut {
                    value: beta_val,
                    rho,
                    measure_ref: measure.clone(),
                    iter: k,
                }));
            }
        }

        // Descent test against the center value and the model bound.
        let descent = match prev_master_val {
            None => true,
            Some(mv) => f_val >= (1.0 - params.descent) * f_bar + params.descent * mv,
        };
        if descent {
            center_measure = measure.clone();
            center_lambda = lambda.clone();
            f_bar = f_val;
        }

        // Primal recovery fires at the first descent step after the
        // stopping test, with the multipliers of the master that produced
        // the current iterate.
        if let Some(sk) = stop_iter {
            let fallback = k > sk + 50;
            // With a near-zero gap the formal descent test can fail forever
            // on rounding noise; an iterate matching the center value up to
            // the stopping tolerance serves the same purpose.
            if descent || f_val >= f_bar - params.eps_stop || fallback {
                let fallback = fallback && !(descent || f_val >= f_bar - params.eps_stop);
                recovery = Some((last_outcome.take().expect("master solved before stop"), fallback));
                break;
            }
        }

        let outcome = solve_master(
            p,
            r,
            form,
            &effective,
            &center_measure,
            &center_lambda,
            &cuts,
            &beta_cuts,
        )?;
        let master_val = outcome.master_val;

        // Drop rows the master left inactive (zero multiplier), but never
        // rows added this very iteration.
        if params.cut_deletion {
            for &(ci, scen, dual) in &outcome.fcut_duals {
                if dual <= 1e-10 && cuts[ci].iter < k {
                    match scen {
                        Some(i) => cuts[ci].entries[i] = None,
                        None => cuts[ci].entries.iter_mut().for_each(|e| *e = None),
                    }
                }
            }
            for &(bi, dual) in &outcome.beta_duals {
                if dual <= 1e-10 && beta_cuts[bi].as_ref().is_some_and(|b| b.iter < k) {
                    beta_cuts[bi] = None;
                }
            }
        }

        measure = outcome.measure.clone();
        lambda = outcome.lambda.clone();
        gap = master_val - f_bar;
        writeln!(
            trace,
            "{k} {f_val:.12e} {master_val:.12e} {gap:.6e} {} {}",
            u8::from(descent),
            outcome.active_cut_rows
        )
        .ok();
        prev_master_val = Some(master_val);
        last_outcome = Some(outcome);

        if gap <= params.eps_stop && stop_iter.is_none() {
            if effective.prox_weight > 2e-4 * params.prox_weight {
                effective.prox_weight *= 0.1;
            } else {
                stop_iter = Some(k);
                converged = true;
            }
        }
    }

    if let Some(path) = &params.trace {
        std::fs::write(path, &trace)?;
    }

    let (outcome, fallback) = match recovery {
        Some(pair) => pair,
        None => (
            last_outcome.ok_or_else(|| Error::Bundle("no master iteration completed".into()))?,
            true,
        ),
    };
    let rec = recover_primal(p, r, form, &probs, &cuts, &beta_cuts, &outcome, &measure, params)?;
    Ok(BundleResult {
        value: f_bar,
        primal_value: rec.primal_value,
        x: rec.x,
        x_scenarios: rec.x_scenarios,
        y: rec.y,
        z: rec.z,
        alpha: rec.alpha,
        gamma: rec.gamma,
        iterations,
        gap,
        nonanticipativity: rec.nonanticipativity,
        converged,
        recovery_fallback: fallback,
        multiplier_identity_residual: rec.identity_residual,
    })
}

/// Penalty value at the iterate and, for the entropic kind, a supergradient
/// of `−β` to cut the master's `η` variable with.
fn penalty_at(
    r: &RiskMeasure,
    form: Form<'_>,
    measure: &[Vec<f64>],
    probs: &[f64],
    mass_clamp: f64,
) -> Result<(f64, Option<Vec<Vec<f64>>>)> {
    let big_j = r.dim();
    let clamped: Vec<Vec<f64>> = (0..big_j)
        .map(|j| measure.iter().map(|mi| mi[j].max(mass_clamp)).collect())
        .collect();
    match (&r.kind, form) {
        // Coherent penalties are {0, +∞} and enforced exactly by the
        // master's domain rows, so the iterate always evaluates to 0.
        (RiskKind::CVaR { .. }, _) => Ok((0.0, None)),
        (RiskKind::Entropic { .. }, Form::P1 { w }) => {
            let mu = ProbVector::probability(clamped.clone())
                .map_err(|e| Error::Bundle(format!("iterate left the simplex: {e}")))?;
            let beta = penalty_beta(r, &mu, probs, w);
            if !beta.is_finite() {
                return Err(Error::Bundle("entropic penalty infinite at iterate".into()));
            }
            let rho_jm = penalty_beta_subgradient(r, &mu, probs, w)?;
            // Transpose to the master's per-scenario layout.
            let rho: Vec<Vec<f64>> = (0..measure.len())
                .map(|i| (0..big_j).map(|j| rho_jm[j][i]).collect())
                .collect();
            Ok((beta, Some(rho)))
        }
        (RiskKind::Entropic { .. }, Form::P2 { .. }) => {
            let m = ProbVector::finite(clamped)
                .map_err(|e| Error::Bundle(format!("iterate left the cone: {e}")))?;
            let beta = penalty_beta_tilde(r, &m, probs);
            if !beta.is_finite() {
                return Err(Error::Bundle("entropic penalty infinite at iterate".into()));
            }
            let rho_jm = beta_tilde_subgradient(r, &m, probs)?;
            let rho: Vec<Vec<f64>> = (0..measure.len())
                .map(|i| (0..big_j).map(|j| rho_jm[j][i]).collect())
                .collect();
            Ok((beta, Some(rho)))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_master(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    form: Form<'_>,
    params: &BundleParams,
    center_measure: &[Vec<f64>],
    center_lambda: &[Vec<f64>],
    cuts: &[IterCuts],
    beta_cuts: &[Option<BetaCut>],
    ) -> Result<MasterOutcome> {
    let d = &p.dims;
    let (big_i, big_j, big_m) = (d.i, d.j, d.m);
    let entropic = matches!(r.kind, RiskKind::Entropic { .. });
    let ntheta = if params.single_cut { 1 } else { big_i };
    let block = big_j + big_m;
    let mv = |i: usize, j: usize| i * block + j;
    let lv = |i: usize, m: usize| i * block + big_j + m;
    let base_theta = big_i * block;
    let tv = |i: usize| base_theta + if params.single_cut { 0 } else { i };
    let ev = base_theta + ntheta;
    let nvars = base_theta + ntheta + usize::from(entropic);

    let mut qp = RegularizedQP::new(nvars);
    for i in 0..big_i {
        for j in 0..big_j {
            qp.prox_weight[mv(i, j)] = params.prox_weight;
            qp.center[mv(i, j)] = center_measure[i][j];
            if let Form::P2 { v } = form {
                qp.linear[mv(i, j)] = -v[j];
            }
        }
        for m in 0..big_m {
            qp.prox_weight[lv(i, m)] = params.prox_weight;
            qp.center[lv(i, m)] = center_lambda[i][m];
        }
    }
    for t in 0..ntheta {
        qp.linear[base_theta + t] = 1.0;
    }
    if entropic {
        qp.linear[ev] = 1.0;
    }

    // Coupling rows: E[λ] = 0, plus total-mass normalization of the measures.
    for m in 0..big_m {
        let coeffs: Vec<(usize, f64)> = (0..big_i)
            .map(|i| (lv(i, m), p.scenarios[i].probability))
            .collect();
        qp.eq.push(SparseCon::new(coeffs, 0.0));
    }
    match form {
        Form::P1 { .. } => {
            for j in 0..big_j {
                let coeffs: Vec<(usize, f64)> = (0..big_i).map(|i| (mv(i, j), 1.0)).collect();
                qp.eq.push(SparseCon::new(coeffs, 1.0));
            }
        }
        Form::P2 { .. } => {
            let coeffs: Vec<(usize, f64)> = (0..big_i)
                .flat_map(|i| (0..big_j).map(move |j| (mv(i, j), 1.0)))
                .collect();
            qp.eq.push(SparseCon::new(coeffs, 1.0));
        }
    }

    let mut tags: Vec<RowTag> = Vec::new();
    for i in 0..big_i {
        for j in 0..big_j {
            qp.le.push(SparseCon::new(vec![(mv(i, j), -1.0)], 0.0));
            tags.push(RowTag::Static);
        }
    }
    // Domain of the coherent penalty.
    if let RiskKind::CVaR { nu } = &r.kind {
        match form {
            Form::P1 { .. } => {
                for i in 0..big_i {
                    for j in 0..big_j {
                        let cap = p.scenarios[i].probability / (1.0 - nu[j]);
                        qp.le.push(SparseCon::new(vec![(mv(i, j), 1.0)], cap));
                        tags.push(RowTag::Static);
                    }
                }
            }
            Form::P2 { .. } => {
                // m_i^j ≤ (p_i/(1−ν^j)) Σ_{i'} m_{i'}^j
                for i in 0..big_i {
                    for j in 0..big_j {
                        let cap = p.scenarios[i].probability / (1.0 - nu[j]);
                        let coeffs: Vec<(usize, f64)> = (0..big_i)
                            .map(|ip| {
                                let own = if ip == i { 1.0 } else { 0.0 };
                                (mv(ip, j), own - cap)
                            })
                            .collect();
                        qp.le.push(SparseCon::new(coeffs, 0.0));
                        tags.push(RowTag::Static);
                    }
                }
            }
        }
    }
    let mut active_cut_rows = 0usize;
    for (ci, ic) in cuts.iter().enumerate() {
        if params.single_cut {
            if ic.entries.iter().all(Option::is_none) {
                continue;
            }
            let mut coeffs = vec![(tv(0), 1.0)];
            let mut rhs = 0.0;
            for (i, entry) in ic.entries.iter().enumerate() {
                let e = entry.as_ref().expect("single-cut rows are deleted whole");
                for (j, &g) in e.g_measure.iter().enumerate() {
                    coeffs.push((mv(i, j), -g));
                }
                for (m, &g) in e.g_lambda.iter().enumerate() {
                    coeffs.push((lv(i, m), -g));
                }
                rhs += e.rhs();
            }
            qp.le.push(SparseCon::new(coeffs, rhs));
            tags.push(RowTag::FCut { cut: ci, scen: None });
            active_cut_rows += 1;
        } else {
            for (i, entry) in ic.entries.iter().enumerate() {
                let Some(e) = entry else { continue };
                let mut coeffs = vec![(tv(i), 1.0)];
                for (j, &g) in e.g_measure.iter().enumerate() {
                    coeffs.push((mv(i, j), -g));
                }
                for (m, &g) in e.g_lambda.iter().enumerate() {
                    coeffs.push((lv(i, m), -g));
                }
                qp.le.push(SparseCon::new(coeffs, e.rhs()));
                tags.push(RowTag::FCut {
                    cut: ci,
                    scen: Some(i),
                });
                active_cut_rows += 1;
            }
        }
    }
    for (bi, bc) in beta_cuts.iter().enumerate() {
        let Some(b) = bc else { continue };
        let mut coeffs = vec![(ev, 1.0)];
        for (i, rho_i) in b.rho.iter().enumerate() {
            for (j, &rij) in rho_i.iter().enumerate() {
                coeffs.push((mv(i, j), -rij));
            }
        }
        qp.le.push(SparseCon::new(coeffs, b.rhs()));
        tags.push(RowTag::BetaCut { cut: bi });
        active_cut_rows += 1;
    }

    let sol = solve_qp(&qp).map_err(|e| Error::Bundle(format!("master QP failed: {e}")))?;

    let measure: Vec<Vec<f64>> = (0..big_i)
        .map(|i| (0..big_j).map(|j| sol.u[mv(i, j)].max(0.0)).collect())
        .collect();
    let lambda: Vec<Vec<f64>> = (0..big_i)
        .map(|i| (0..big_m).map(|m| sol.u[lv(i, m)]).collect())
        .collect();
    let mut master_val: f64 = (0..ntheta).map(|t| sol.u[base_theta + t]).sum();
    if entropic {
        master_val += sol.u[ev];
    }
    if let Form::P2 { v } = form {
        for mi in &measure {
            for (mij, vj) in mi.iter().zip(v) {
                master_val -= mij * vj;
            }
        }
    }
    let mut fcut_duals = Vec::new();
    let mut beta_duals = Vec::new();
    for (tag, &dual) in tags.iter().zip(&sol.le_duals) {
        match *tag {
            RowTag::Static => {}
            RowTag::FCut { cut, scen } => fcut_duals.push((cut, scen, dual)),
            RowTag::BetaCut { cut } => beta_duals.push((cut, dual)),
        }
    }
    Ok(MasterOutcome {
        measure,
        lambda,
        master_val,
        fcut_duals,
        beta_duals,
        active_cut_rows,
    })
}

struct Recovered {
    x: Vec<f64>,
    x_scenarios: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    z: Option<Vec<f64>>,
    alpha: Option<f64>,
    gamma: Option<Vec<f64>>,
    primal_value: f64,
    nonanticipativity: f64,
    identity_residual: f64,
}

#[allow(clippy::too_many_arguments)]
fn recover_primal(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    form: Form<'_>,
    probs: &[f64],
    cuts: &[IterCuts],
    beta_cuts: &[Option<BetaCut>],
    outcome: &MasterOutcome,
    measure_iterate: &[Vec<f64>],
    params: &BundleParams,
) -> Result<Recovered> {
    let d = &p.dims;
    let (big_i, big_m, big_n) = (d.i, d.m, d.n);

    // Convex-combination weights per scenario from the cut multipliers.
    let mut tau: Vec<Vec<(usize, f64)>> = vec![Vec::new(); big_i];
    for &(ci, scen, dual) in &outcome.fcut_duals {
        // Same threshold as cut deletion, which may already have cleared
        // the entries behind these near-zero multipliers.
        if dual <= 1e-10 {
            continue;
        }
        match scen {
            Some(i) => tau[i].push((ci, dual)),
            None => {
                for t in tau.iter_mut() {
                    t.push((ci, dual));
                }
            }
        }
    }
    let mut identity_residual: f64 = 0.0;
    for (i, t) in tau.iter().enumerate() {
        let s: f64 = t.iter().map(|&(_, d)| d).sum();
        identity_residual = identity_residual.max((s - 1.0).abs());
        if (s - 1.0).abs() > 1e-4 {
            return Err(Error::Bundle(format!(
                "master multipliers unusable for primal recovery: scenario {i} weights sum to {s}"
            )));
        }
    }
    if matches!(r.kind, RiskKind::Entropic { .. }) && !outcome.beta_duals.is_empty() {
        let s: f64 = outcome.beta_duals.iter().map(|&(_, d)| d).sum();
        identity_residual = identity_residual.max((s - 1.0).abs());
        if (s - 1.0).abs() > 1e-4 {
            return Err(Error::Bundle(format!(
                "master multipliers unusable for primal recovery: penalty weights sum to {s}"
            )));
        }
    }
    let _ = beta_cuts; // retained for symmetry; only the multiplier sum matters

    let mut x_scenarios = vec![vec![0.0; big_m]; big_i];
    let mut y_scenarios = vec![vec![0.0; big_n]; big_i];
    for (i, t) in tau.iter().enumerate() {
        let total: f64 = t.iter().map(|&(_, d)| d).sum();
        for &(ci, dual) in t {
            let e = cuts[ci].entries[i]
                .as_ref()
                .ok_or_else(|| Error::Bundle("active cut was deleted".into()))?;
            let wgt = dual / total;
            for (acc, &v) in x_scenarios[i].iter_mut().zip(&e.x) {
                *acc += wgt * v;
            }
            for (acc, &v) in y_scenarios[i].iter_mut().zip(&e.y) {
                *acc += wgt * v;
            }
        }
    }

    let mut x_mean = vec![0.0; big_m];
    for (i, xs) in x_scenarios.iter().enumerate() {
        for (acc, &v) in x_mean.iter_mut().zip(xs) {
            *acc += probs[i] * v;
        }
    }
    let nonanticipativity = x_scenarios
        .iter()
        .flat_map(|xs| xs.iter().zip(&x_mean).map(|(a, b)| (a - b).abs()))
        .fold(0.0f64, f64::max);

    let (x_proj, y_feas) = project_first_stage(p, &x_mean)?;

    // The multiplier-aggregated second stages are primal optimal for the
    // convexified problem, but only feasible for the per-scenario first
    // stages; project each onto the recourse set of the deterministic
    // `x_proj` in the `ℓ1` sense (a no-op up to roundoff when the
    // nonanticipativity residual is small).
    let mut y = Vec::with_capacity(big_i);
    for i in 0..big_i {
        y.push(
            repair_second_stage(p, i, &x_proj, &y_scenarios[i])
                .unwrap_or_else(|| y_feas[i].clone()),
        );
    }

    let u = cost_matrix(p, &x_proj, &y);
    match form {
        Form::P1 { w } => {
            let phi = scalarize_phi(r, w, &u, probs);
            let z = phi
                .attaining_z
                .ok_or_else(|| Error::Bundle("scalarization at recovered point diverged".into()))?;
            Ok(Recovered {
                x: x_proj,
                x_scenarios,
                y,
                primal_value: phi.value,
                z: Some(z),
                alpha: None,
                gamma: None,
                nonanticipativity,
                identity_residual,
            })
        }
        Form::P2 { v } => {
            let alpha = entry_alpha(r, &u, probs, v);
            let mut gamma: Vec<f64> = (0..d.j)
                .map(|j| measure_iterate.iter().map(|mi| mi[j]).sum())
                .collect();
            let total: f64 = gamma.iter().sum();
            if total <= 1e-12 {
                return Err(Error::Bundle("recovered dual weight has no mass".into()));
            }
            gamma.iter_mut().for_each(|g| *g /= total);
            let _ = params;
            Ok(Recovered {
                x: x_proj,
                x_scenarios,
                y,
                primal_value: alpha,
                z: None,
                alpha: Some(alpha),
                gamma: Some(gamma),
                nonanticipativity,
                identity_residual,
            })
        }
    }
}

/// Project a first-stage candidate onto `{Ax = b, x ≥ 0}` in the `ℓ1` sense,
/// jointly with one feasible second stage per scenario so the projected
/// point is guaranteed to admit recourse.
fn project_first_stage(
    p: &TwoStageProblem,
    target: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = &p.dims;
    let nvars = 3 * d.m + d.i * d.n;
    let ybase = |i: usize| 3 * d.m + i * d.n;
    let mut lp = LinearProgram::new(nvars);
    for m in 0..d.m {
        lp.set_objective(d.m + m, 1.0);
        lp.set_objective(2 * d.m + m, 1.0);
        lp.add_row(
            vec![(m, 1.0), (d.m + m, -1.0), (2 * d.m + m, 1.0)],
            RowKind::Eq,
            target[m],
        );
    }
    for k in 0..d.k {
        let coeffs: Vec<(usize, f64)> = (0..d.m)
            .map(|m| (m, p.a[k][m]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        lp.add_row(coeffs, RowKind::Eq, p.b[k]);
    }
    for (i, s) in p.scenarios.iter().enumerate() {
        for l in 0..d.l {
            let mut coeffs: Vec<(usize, f64)> = (0..d.m)
                .map(|m| (m, s.t[l][m]))
                .filter(|&(_, v)| v != 0.0)
                .collect();
            coeffs.extend(
                (0..d.n)
                    .map(|n| (ybase(i) + n, s.w[l][n]))
                    .filter(|&(_, v)| v != 0.0),
            );
            lp.add_row(coeffs, RowKind::Eq, s.h[l]);
        }
    }
    let sol = solve_lp(&lp);
    if sol.status != LpStatus::Optimal {
        return Err(Error::Bundle(format!(
            "first-stage projection did not solve: {:?}",
            sol.status
        )));
    }
    let x = sol.x[..d.m].to_vec();
    let y = (0..d.i)
        .map(|i| sol.x[ybase(i)..ybase(i) + d.n].to_vec())
        .collect();
    Ok((x, y))
}

/// Second stage for scenario `i` feasible at the fixed first stage and
/// `ℓ1`-closest to `target`. `None` when the LP does not solve (the caller
/// falls back to the feasible point from the projection).
fn repair_second_stage(
    p: &TwoStageProblem,
    i: usize,
    x: &[f64],
    target: &[f64],
) -> Option<Vec<f64>> {
    let d = &p.dims;
    let s = &p.scenarios[i];
    let mut lp = LinearProgram::new(3 * d.n);
    for n in 0..d.n {
        lp.set_objective(d.n + n, 1.0);
        lp.set_objective(2 * d.n + n, 1.0);
        lp.add_row(
            vec![(n, 1.0), (d.n + n, -1.0), (2 * d.n + n, 1.0)],
            RowKind::Eq,
            target[n],
        );
    }
    for l in 0..d.l {
        let tx: f64 = s.t[l].iter().zip(x).map(|(a, b)| a * b).sum();
        let coeffs: Vec<(usize, f64)> = (0..d.n)
            .map(|n| (n, s.w[l][n]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        lp.add_row(coeffs, RowKind::Eq, s.h[l] - tx);
    }
    let sol = solve_lp(&lp);
    (sol.status == LpStatus::Optimal).then(|| sol.x[..d.n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_portfolio, PortfolioSpec, TwoStageProblem};
    use crate::polyhedra::Cone;
    use crate::scalarization::{solve_p1_direct, solve_p2_direct};
    use rand::prelude::*;

    fn toy() -> TwoStageProblem {
        TwoStageProblem::toy_two_scenario()
    }

    fn orthant() -> Cone {
        Cone::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    fn cvar_orthant() -> RiskMeasure {
        RiskMeasure::cvar(vec![0.5, 0.5], orthant()).unwrap()
    }

    fn entropic_orthant() -> RiskMeasure {
        RiskMeasure::entropic(vec![1.0, 1.0], orthant()).unwrap()
    }

    fn tight_params() -> BundleParams {
        BundleParams {
            eps_stop: 1e-8,
            ..BundleParams::default()
        }
    }

    #[test]
    fn subproblem_examples() {
        let p = toy();
        // P1 form: w = (½,½), μ_0 = (½,½), λ = 0. Feasible set is the single
        // point x = 1, y = 1 with costs u = (1,3), so f_0 = ¼·1 + ¼·3 = 1.
        let cut =
            solve_scenario_subproblem(&p, 0, &[0.5, 0.5], &[0.0], Some(&[0.5, 0.5])).unwrap();
        assert!((cut.value - 1.0).abs() < 1e-9, "f0 = {}", cut.value);
        assert!((cut.x[0] - 1.0).abs() < 1e-9);
        assert!((cut.y[0] - 1.0).abs() < 1e-9);
        // g_μ = w ∘ u, g_λ = p_i x.
        assert!((cut.g_measure[0] - 0.5).abs() < 1e-9);
        assert!((cut.g_measure[1] - 1.5).abs() < 1e-9);
        assert!((cut.g_lambda[0] - 0.5).abs() < 1e-9);

        // P2 form: m_0 = (1, 0) → f̃_0 = u_1 = 1, supergradient is u itself.
        let cut = solve_scenario_subproblem(&p, 0, &[1.0, 0.0], &[0.0], None).unwrap();
        assert!((cut.value - 1.0).abs() < 1e-9);
        assert_eq!(cut.g_measure, vec![1.0, 3.0]);

        // Zero measure and multipliers → zero objective.
        let cut = solve_scenario_subproblem(&p, 1, &[0.0, 0.0], &[0.0], None).unwrap();
        assert!(cut.value.abs() < 1e-12);
    }

    #[test]
    fn p1_cvar_toy_recovers_exactly() {
        let p = toy();
        let r = cvar_orthant();
        let res = run_bundle_p1(&p, &r, &[0.5, 0.5], &tight_params()).unwrap();
        assert!(res.converged, "gap {}", res.gap);
        assert!((res.value - 3.0).abs() < 1e-6, "dual {}", res.value);
        assert!((res.primal_value - 3.0).abs() < 1e-6, "primal {}", res.primal_value);
        assert!((res.x[0] - 1.0).abs() < 1e-6);
        for y in &res.y {
            assert!((y[0] - 1.0).abs() < 1e-6);
        }
        let z = res.z.as_ref().unwrap();
        assert!((z[0] - 3.0).abs() < 1e-6 && (z[1] - 3.0).abs() < 1e-6, "z {z:?}");
        assert!(res.nonanticipativity < 1e-6);
        assert!(res.multiplier_identity_residual < 1e-6);
        assert!(!res.recovery_fallback);
    }

    #[test]
    fn p1_entropic_toy_value() {
        let p = toy();
        let r = entropic_orthant();
        let expect = ((1.0f64.exp() + 3.0f64.exp()) / 2.0).ln();
        let res = run_bundle_p1(&p, &r, &[0.5, 0.5], &tight_params()).unwrap();
        assert!(res.converged);
        assert!((res.value - expect).abs() < 1e-5, "dual {} vs {expect}", res.value);
        assert!(
            (res.primal_value - expect).abs() < 1e-5,
            "primal {} vs {expect}",
            res.primal_value
        );
        assert!(res.multiplier_identity_residual < 1e-6);
    }

    #[test]
    fn p1_single_cut_matches() {
        let p = toy();
        let r = cvar_orthant();
        let params = BundleParams {
            single_cut: true,
            ..tight_params()
        };
        let res = run_bundle_p1(&p, &r, &[0.5, 0.5], &params).unwrap();
        assert!(res.converged);
        assert!((res.value - 3.0).abs() < 1e-6);
        assert!((res.primal_value - 3.0).abs() < 1e-6);

        let re = entropic_orthant();
        let expect = ((1.0f64.exp() + 3.0f64.exp()) / 2.0).ln();
        let res = run_bundle_p1(&p, &re, &[0.5, 0.5], &params).unwrap();
        assert!((res.value - expect).abs() < 1e-5, "dual {}", res.value);
    }

    #[test]
    fn p1_unbounded_weight() {
        // Dual cone of cone{(−1,2),(2,−1)} is cone{(2,1),(1,2)}: e₁ is outside,
        // so the coherent scalarization is −∞.
        let cone = Cone::new(vec![vec![-1.0, 2.0], vec![2.0, -1.0]]).unwrap();
        let r = RiskMeasure::cvar(vec![0.5, 0.5], cone).unwrap();
        let res = run_bundle_p1(&toy(), &r, &[1.0, 0.0], &tight_params()).unwrap();
        assert!(res.is_unbounded());
    }

    #[test]
    fn p2_cvar_toy_values() {
        let p = toy();
        let r = cvar_orthant();
        for (v, expect) in [
            (vec![0.0, 0.0], 3.0),
            (vec![3.0, 3.0], 0.0),
            (vec![4.0, 4.0], -1.0),
        ] {
            let res = run_bundle_p2(&p, &r, &v, &tight_params()).unwrap();
            assert!(res.converged, "v {v:?} gap {}", res.gap);
            assert!(
                (res.value - expect).abs() < 1e-5,
                "v {v:?}: dual {} vs {expect}",
                res.value
            );
            let alpha = res.alpha.unwrap();
            assert!((alpha - expect).abs() < 1e-5, "v {v:?}: alpha {alpha}");
            let gamma = res.gamma.unwrap();
            let total: f64 = gamma.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(gamma.iter().all(|&g| g >= -1e-12), "gamma {gamma:?}");
        }
    }

    #[test]
    fn p2_entropic_matches_direct() {
        let p = toy();
        let r = entropic_orthant();
        for v in [vec![0.0, 0.0], vec![2.0, 1.0]] {
            let direct = solve_p2_direct(&p, &r, &v).unwrap();
            let res = run_bundle_p2(&p, &r, &v, &tight_params()).unwrap();
            assert!(
                (res.value - direct.value).abs() <= 1e-4 * (1.0 + direct.value.abs()),
                "v {v:?}: bundle {} vs direct {}",
                res.value,
                direct.value
            );
            assert!((res.alpha.unwrap() - direct.value).abs() < 1e-4);
        }
    }

    #[test]
    fn trace_reports_monotone_bound() {
        let p = toy();
        let r = cvar_orthant();
        let dir = std::env::temp_dir().join(format!("bundle-trace-{}", std::process::id()));
        let params = BundleParams {
            trace: Some(dir.clone()),
            ..tight_params()
        };
        let res = run_bundle_p1(&p, &r, &[0.5, 0.5], &params).unwrap();
        assert!(res.converged);
        let body = std::fs::read_to_string(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        let mut lines = 0;
        for line in body.lines() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(cols.len(), 6, "line: {line}");
            let gap: f64 = cols[3].parse().unwrap();
            // The master bound never falls below the best center value.
            assert!(gap >= -1e-7, "negative gap in trace: {line}");
            lines += 1;
        }
        assert!(lines >= 1);
        assert_eq!(lines, res.iterations.min(lines));
    }

    #[test]
    fn cuts_overestimate_dual_function() {
        // f_i is concave (an infimum of linear functions), so every stored
        // linearization must dominate it at random dual probes.
        let p = toy();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let w = [0.5, 0.5];
        for _ in 0..100 {
            let mu: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.5)).collect();
            let lam = [rng.gen_range(-2.0..2.0)];
            let i = rng.gen_range(0..2);
            let base = solve_scenario_subproblem(&p, i, &mu, &lam, Some(&w)).unwrap();
            // Linearization anchored at a second random point.
            let mu2: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.5)).collect();
            let lam2 = [rng.gen_range(-2.0..2.0)];
            let anchor = solve_scenario_subproblem(&p, i, &mu2, &lam2, Some(&w)).unwrap();
            let lin = anchor.value
                + anchor
                    .g_measure
                    .iter()
                    .zip(&mu)
                    .zip(&mu2)
                    .map(|((g, a), b)| g * (a - b))
                    .sum::<f64>()
                + anchor.g_lambda[0] * (lam[0] - lam2[0]);
            assert!(
                base.value <= lin + 1e-8,
                "cut fails to dominate: f {} lin {lin}",
                base.value
            );
        }
    }

    #[test]
    fn matches_direct_backend_on_portfolio() {
        let p = generate_portfolio(&PortfolioSpec::two_asset(6, 42)).unwrap();
        let r = RiskMeasure::cvar(vec![0.3, 0.3], orthant()).unwrap();
        let params = BundleParams {
            eps_stop: 1e-7,
            ..BundleParams::default()
        };
        for w in [vec![0.5, 0.5], vec![0.8, 0.2], vec![0.25, 0.75]] {
            let direct = solve_p1_direct(&p, &r, &w).unwrap();
            let res = run_bundle_p1(&p, &r, &w, &params).unwrap();
            assert!(
                (res.value - direct.value).abs() <= 1e-4 * (1.0 + direct.value.abs()),
                "w {w:?}: bundle {} vs direct {}",
                res.value,
                direct.value
            );
            // Recovered primal must not beat the optimum.
            assert!(res.primal_value >= direct.value - 1e-6);
        }
        for v in [vec![0.0, 0.0], vec![0.3, 0.1]] {
            let direct = solve_p2_direct(&p, &r, &v).unwrap();
            let res = run_bundle_p2(&p, &r, &v, &params).unwrap();
            assert!(
                (res.value - direct.value).abs() <= 1e-4 * (1.0 + direct.value.abs()),
                "v {v:?}: bundle {} vs direct {}",
                res.value,
                direct.value
            );
        }
    }

    #[test]
    fn gap_shrinks_with_tolerance() {
        let p = generate_portfolio(&PortfolioSpec::two_asset(4, 9)).unwrap();
        let r = RiskMeasure::cvar(vec![0.4, 0.4], orthant()).unwrap();
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let params = BundleParams {
                eps_stop: eps,
                ..BundleParams::default()
            };
            let res = run_bundle_p1(&p, &r, &[0.5, 0.5], &params).unwrap();
            assert!(res.converged);
            assert!(res.gap <= eps + 1e-12);
            assert!(res.gap <= last + 1e-12);
            last = res.gap;
        }
    }
}
