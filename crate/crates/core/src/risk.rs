//! Multivariate convex risk measures: multivariate CVaR and multivariate
//! entropic risk.
//!
//! A risk measure `R` maps a J-dimensional random cost vector `u` (given by
//! its `I` realizations and probabilities `p`) to the upper-closed set of
//! acceptable compensation vectors `z ∈ ℝ^J`:
//!
//! - CVaR:     `z ∈ R(u) ⇔ z − (CVaR_{ν^j}(u^j))_j ∈ C`
//! - entropic: `z ∈ R(u) ⇔ E[U(u − z)] ∈ C`, `U^j(x) = (1 − e^{δ^j x})/δ^j`
//!
//! where `C` is a polyhedral ordering cone with `ℝ^J₊ ⊆ C ≠ ℝ^J` (the
//! orthant containment is essential: it makes the acceptance sets upper and
//! convex, and keeps every `C⁺` generator nonnegative). The
//! module exposes the penalty functions `β(μ, w)` (probability measures) and
//! `β̃(m)` (finite measures), the entropic subgradient oracle used by the
//! bundle masters, the scalarization `φ_w(u) = inf_{z ∈ R(u)} wᵀz`, and the
//! bisection entry step `α_min = inf {α : v + α𝟏 ∈ R(u)}`.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::opt_kernel::{solve_kelley, OracleProgram};
use crate::polyhedra::{dual_cone, Cone};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RiskKind {
    CVaR { nu: Vec<f64> },
    Entropic { delta: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct RiskMeasure {
    pub kind: RiskKind,
    pub cone: Cone,
    dual_generators: Vec<Vec<f64>>,
}

impl RiskMeasure {
    pub fn new(kind: RiskKind, cone: Cone) -> Result<Self> {
        let j = match &kind {
            RiskKind::CVaR { nu } => {
                if nu.iter().any(|&v| v <= 0.0 || v >= 1.0) {
                    return Err(Error::InvalidRisk("nu components must lie in (0,1)".into()));
                }
                nu.len()
            }
            RiskKind::Entropic { delta } => {
                if delta.iter().any(|&d| d <= 0.0) {
                    return Err(Error::InvalidRisk(
                        "delta components must be positive".into(),
                    ));
                }
                delta.len()
            }
        };
        if cone.dim() != j {
            return Err(Error::InvalidRisk(format!(
                "cone dimension {} does not match risk dimension {j}",
                cone.dim()
            )));
        }
        if !cone.contains_orthant(1e-8) {
            return Err(Error::InvalidRisk(
                "ordering cone must contain the nonnegative orthant".into(),
            ));
        }
        let dual = dual_cone(&cone).map_err(|_| Error::InvalidRisk("C must be proper".into()))?;
        Ok(RiskMeasure {
            kind,
            cone,
            dual_generators: dual.generators,
        })
    }

    pub fn cvar(nu: Vec<f64>, cone: Cone) -> Result<Self> {
        RiskMeasure::new(RiskKind::CVaR { nu }, cone)
    }

    pub fn entropic(delta: Vec<f64>, cone: Cone) -> Result<Self> {
        RiskMeasure::new(RiskKind::Entropic { delta }, cone)
    }

    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    /// Generators of the positive dual cone `C⁺`.
    pub fn dual_generators(&self) -> &[Vec<f64>] {
        &self.dual_generators
    }

    /// `w ∈ C⁺` ⇔ `wᵀg ≥ 0` for every generator of `C`.
    pub fn weight_in_dual_cone(&self, w: &[f64], tol: f64) -> bool {
        let scale = 1.0 + inf_norm(w);
        self.cone
            .generators
            .iter()
            .all(|g| dot(w, g) >= -tol * scale)
    }
}

/// Serializable risk configuration block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RiskConfig {
    Cvar {
        nu: Vec<f64>,
        #[serde(default)]
        cone_generators: Option<Vec<Vec<f64>>>,
    },
    Entropic {
        delta: Vec<f64>,
        #[serde(default)]
        cone_generators: Option<Vec<Vec<f64>>>,
    },
}

impl RiskConfig {
    pub fn build(&self) -> Result<RiskMeasure> {
        let (kind, gens, j) = match self {
            RiskConfig::Cvar {
                nu,
                cone_generators,
            } => (
                RiskKind::CVaR { nu: nu.clone() },
                cone_generators.clone(),
                nu.len(),
            ),
            RiskConfig::Entropic {
                delta,
                cone_generators,
            } => (
                RiskKind::Entropic {
                    delta: delta.clone(),
                },
                cone_generators.clone(),
                delta.len(),
            ),
        };
        let cone = match gens {
            Some(g) if !g.is_empty() => Cone::new(g)?,
            _ => Cone::orthant(j),
        };
        RiskMeasure::new(kind, cone)
    }
}

/// Per-objective per-scenario weights: a vector of `J` measures over the
/// `I` scenarios. `normalized = true` marks probability measures
/// (row sums exactly 1); `false` marks general finite measures.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    pub weights: Vec<Vec<f64>>,
    pub normalized: bool,
}

impl ProbVector {
    /// Probability-measure variant; rows renormalized to sum exactly 1.
    pub fn probability(weights: Vec<Vec<f64>>) -> Result<Self> {
        let mut weights = weights;
        for (j, row) in weights.iter_mut().enumerate() {
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidRisk(format!("measure {j} has negative mass")));
            }
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidRisk(format!("measure {j} has zero mass")));
            }
            if (s - 1.0).abs() > 1e-12 {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        Ok(ProbVector {
            weights,
            normalized: true,
        })
    }

    /// Finite-measure variant (no normalization).
    pub fn finite(weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.iter().flatten().any(|&v| v < 0.0) {
            return Err(Error::InvalidRisk(
                "finite measure has negative mass".into(),
            ));
        }
        Ok(ProbVector {
            weights,
            normalized: false,
        })
    }

    /// Column masses `γ^j = Σ_i m^j_i`.
    pub fn masses(&self) -> Vec<f64> {
        self.weights.iter().map(|r| r.iter().sum()).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `log Σ_i p_i e^{x_i}` computed stably.
fn log_mean_exp(x: &[f64], p: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x
        .iter()
        .zip(p)
        .map(|(&xi, &pi)| pi * (xi - m).exp())
        .sum::<f64>()
        .ln()
}

/// Componentwise multivariate CVaR by the sorted-tail formula: average of
/// the worst `1 − ν^j` probability mass of coordinate `j`.
pub fn cvar_vector(u: &[Vec<f64>], p: &[f64], nu: &[f64]) -> Vec<f64> {
    nu.iter()
        .zip(u)
        .map(|(&nu_j, row)| {
            let tail = 1.0 - nu_j;
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
            let mut remaining = tail;
            let mut acc = 0.0;
            for &i in &idx {
                if remaining <= 0.0 {
                    break;
                }
                let take = remaining.min(p[i]);
                acc += take * row[i];
                remaining -= take;
            }
            acc / tail
        })
        .collect()
}

/// `E[U(u − z)]` for the entropic utility vector.
fn expected_utility(u: &[Vec<f64>], p: &[f64], delta: &[f64], z: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(delta)
        .zip(z)
        .map(|((row, &d), &zj)| {
            let mean: f64 = row
                .iter()
                .zip(p)
                .map(|(&uij, &pi)| pi * (d * (uij - zj)).exp())
                .sum();
            (1.0 - mean) / d
        })
        .collect()
}

/// `z ∈ R(u)`?
pub fn membership(r: &RiskMeasure, u: &[Vec<f64>], p: &[f64], z: &[f64]) -> bool {
    let diff = match &r.kind {
        RiskKind::CVaR { nu } => {
            let q = cvar_vector(u, p, nu);
            z.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<f64>>()
        }
        RiskKind::Entropic { delta } => expected_utility(u, p, delta, z),
    };
    let scale = 1.0 + inf_norm(&diff) + inf_norm(z);
    r.dual_generators
        .iter()
        .all(|s| dot(s, &diff) >= -1e-9 * scale)
}

/// Infimum of `Σ_j (s_j − w_j log s_j)/δ_j` over `s ∈ C⁺`, parameterized as
/// `s = Σ_k η_k g_k`, `η ≥ 0`, and minimized by projected Newton with a
/// cutting-plane fallback. Returns the value and a minimizer `s*`; `None`
/// encodes `+∞` (some `w_j > 0` has `s_j = 0` on all of `C⁺`).
fn inner_inf(delta: &[f64], w: &[f64], gens: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    let j_dim = delta.len();
    let k = gens.len();
    if w.iter().all(|&v| v <= 0.0) {
        return Some((0.0, vec![0.0; j_dim]));
    }
    for j in 0..j_dim {
        if w[j] > 0.0 && !gens.iter().any(|g| g[j] > 1e-12) {
            return None;
        }
    }
    let s_of = |eta: &[f64]| -> Vec<f64> {
        (0..j_dim)
            .map(|j| gens.iter().zip(eta).map(|(g, &e)| g[j] * e).sum())
            .collect()
    };
    let value = |s: &[f64]| -> f64 {
        (0..j_dim)
            .map(|j| {
                let log_term = if w[j] > 0.0 { w[j] * s[j].ln() } else { 0.0 };
                (s[j] - log_term) / delta[j]
            })
            .sum()
    };
    let in_domain = |s: &[f64]| -> bool { (0..j_dim).all(|j| w[j] <= 0.0 || s[j] > 0.0) };

    // Scaled all-generators start point.
    let s0 = s_of(&vec![1.0; k]);
    let num: f64 = (0..j_dim).map(|j| w[j] / delta[j]).sum();
    let den: f64 = (0..j_dim).map(|j| s0[j] / delta[j]).sum();
    let mut eta = vec![(num / den).max(1e-9); k];

    let mut f = value(&s_of(&eta));
    for _ in 0..200 {
        let s = s_of(&eta);
        let grad: Vec<f64> = (0..k)
            .map(|kk| {
                (0..j_dim)
                    .map(|j| {
                        let ratio = if w[j] > 0.0 { w[j] / s[j] } else { 0.0 };
                        gens[kk][j] * (1.0 - ratio) / delta[j]
                    })
                    .sum()
            })
            .collect();
        let free: Vec<usize> = (0..k)
            .filter(|&kk| eta[kk] > 1e-12 || grad[kk] < 0.0)
            .collect();
        let pg = free
            .iter()
            .map(|&kk| grad[kk].abs())
            .fold(0.0f64, f64::max);
        if pg <= 1e-12 * (1.0 + f.abs()) {
            break;
        }
        let nf = free.len();
        if nf == 0 {
            break;
        }
        let mut h = nalgebra::DMatrix::<f64>::zeros(nf, nf);
        for j in 0..j_dim {
            if w[j] <= 0.0 {
                continue;
            }
            let c = w[j] / (s[j] * s[j] * delta[j]);
            for (a, &ka) in free.iter().enumerate() {
                for (b, &kb) in free.iter().enumerate() {
                    h[(a, b)] += c * gens[ka][j] * gens[kb][j];
                }
            }
        }
        let ridge = 1e-12 * (1.0 + h.trace());
        for a in 0..nf {
            h[(a, a)] += ridge;
        }
        let gf = nalgebra::DVector::<f64>::from_iterator(nf, free.iter().map(|&kk| -grad[kk]));
        let dir = h.lu().solve(&gf).unwrap_or_else(|| gf.clone());
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let mut trial = eta.clone();
            for (a, &kk) in free.iter().enumerate() {
                trial[kk] = (eta[kk] + step * dir[a]).max(0.0);
            }
            let st = s_of(&trial);
            if in_domain(&st) {
                let ft = value(&st);
                if ft < f - 1e-16 * (1.0 + f.abs()) {
                    eta = trial;
                    f = ft;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }

    // Cutting-plane fallback if the projected gradient stayed large.
    let s = s_of(&eta);
    let stuck = (0..k)
        .map(|kk| {
            let g: f64 = (0..j_dim)
                .map(|j| {
                    let ratio = if w[j] > 0.0 {
                        w[j] / s[j].max(1e-300)
                    } else {
                        0.0
                    };
                    gens[kk][j] * (1.0 - ratio) / delta[j]
                })
                .sum();
            if eta[kk] > 1e-12 || g < 0.0 {
                g.abs()
            } else {
                0.0
            }
        })
        .fold(0.0f64, f64::max)
        > 1e-6 * (1.0 + f.abs());
    if stuck {
        let bound = 10.0 * (1.0 + eta.iter().sum::<f64>());
        let tol = Tolerances::default();
        let clamp = tol.mass_clamp;
        let delta_o = delta.to_vec();
        let w_o = w.to_vec();
        let gens_o = gens.to_vec();
        let prog = OracleProgram::new(
            vec![0.0; k],
            vec![bound; k],
            Box::new(move |e: &[f64]| {
                let s: Vec<f64> = (0..j_dim)
                    .map(|j| {
                        gens_o
                            .iter()
                            .zip(e)
                            .map(|(g, &ek)| g[j] * ek)
                            .sum::<f64>()
                            .max(clamp)
                    })
                    .collect();
                let v: f64 = (0..j_dim)
                    .map(|j| {
                        let lt = if w_o[j] > 0.0 { w_o[j] * s[j].ln() } else { 0.0 };
                        (s[j] - lt) / delta_o[j]
                    })
                    .sum();
                let g: Vec<f64> = (0..k)
                    .map(|kk| {
                        (0..j_dim)
                            .map(|j| {
                                let ratio = if w_o[j] > 0.0 { w_o[j] / s[j] } else { 0.0 };
                                gens_o[kk][j] * (1.0 - ratio) / delta_o[j]
                            })
                            .sum()
                    })
                    .collect();
                (v, g)
            }),
        );
        if let Ok(res) = solve_kelley(&prog, &tol) {
            if res.value < f {
                return Some((res.value, s_of(&res.x)));
            }
        }
    }
    Some((f, s))
}

/// `H(q‖p) = Σ_i q_i log(q_i/p_i)` with `0 log 0 = 0`.
fn relative_entropy(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| if qi > 0.0 { qi * (qi / pi).ln() } else { 0.0 })
        .sum()
}

/// Minimal penalty `β(μ, w)` of the dual representation
/// `φ_w(u) = sup_μ (wᵀE^μ[u] − β(μ, w))`. Extended-real: `+∞` encoded as
/// `f64::INFINITY`.
pub fn penalty_beta(r: &RiskMeasure, mu: &ProbVector, p: &[f64], w: &[f64]) -> f64 {
    debug_assert!(mu.normalized);
    match &r.kind {
        RiskKind::CVaR { nu } => {
            if !r.weight_in_dual_cone(w, 1e-9) {
                return f64::INFINITY;
            }
            for (j, row) in mu.weights.iter().enumerate() {
                for (i, &mji) in row.iter().enumerate() {
                    if mji > p[i] / (1.0 - nu[j]) + 1e-12 {
                        return f64::INFINITY;
                    }
                }
            }
            0.0
        }
        RiskKind::Entropic { delta } => {
            let mut total = 0.0;
            for (j, row) in mu.weights.iter().enumerate() {
                if w[j] <= 0.0 {
                    continue; // w log w → 0
                }
                total += (w[j] / delta[j]) * (relative_entropy(row, p) - 1.0 + w[j].ln());
            }
            match inner_inf(delta, w, &r.dual_generators) {
                Some((v, _)) => total + v,
                None => f64::INFINITY,
            }
        }
    }
}

/// One element of `∂(−β)(μ, w)` with respect to the probability weights,
/// for the entropic risk: `ρ^j_i = −(w^j/δ^j)(1 + log(μ^j_i/p_i))`. The
/// inner infimum over the dual cone does not depend on `μ`, so it drops out.
/// Returned as `ρ[j][i]`.
pub fn penalty_beta_subgradient(
    r: &RiskMeasure,
    mu: &ProbVector,
    p: &[f64],
    w: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let delta = match &r.kind {
        RiskKind::CVaR { .. } => {
            return Err(Error::InvalidRisk(
                "coherent case has no penalty cut: use domain constraints instead".into(),
            ))
        }
        RiskKind::Entropic { delta } => delta,
    };
    if mu.weights.iter().flatten().any(|&v| v <= 0.0) {
        return Err(Error::InvalidRisk(
            "subgradient requires strictly positive mass: clamp mu >= 1e-12 first".into(),
        ));
    }
    Ok(mu
        .weights
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .zip(p)
                .map(|(&mji, &pi)| {
                    if w[j] <= 0.0 {
                        0.0
                    } else {
                        -(w[j] / delta[j]) * (1.0 + (mji / pi).ln())
                    }
                })
                .collect()
        })
        .collect())
}

/// Penalty `β̃(m)` over unnormalized finite measures, used by the
/// reference-variable bundle method.
pub fn penalty_beta_tilde(r: &RiskMeasure, m: &ProbVector, p: &[f64]) -> f64 {
    match &r.kind {
        RiskKind::CVaR { nu } => {
            for (j, row) in m.weights.iter().enumerate() {
                let mass: f64 = row.iter().sum();
                for (i, &mji) in row.iter().enumerate() {
                    if mji > p[i] * mass / (1.0 - nu[j]) + 1e-12 {
                        return f64::INFINITY;
                    }
                }
            }
            0.0
        }
        RiskKind::Entropic { delta } => {
            let gamma = m.masses();
            let mut total = 0.0;
            for (j, row) in m.weights.iter().enumerate() {
                total += (relative_entropy(row, p) - gamma[j]) / delta[j];
            }
            match inner_inf(delta, &gamma, &r.dual_generators) {
                Some((v, _)) => total + v,
                None => f64::INFINITY,
            }
        }
    }
}

/// One element of `∂(−β̃)(m)` for the entropic risk:
/// `ρ^j_i = −(1/δ^j) log(m^j_i/(p_i s*^j))` with `s*` the inner minimizer.
pub fn beta_tilde_subgradient(r: &RiskMeasure, m: &ProbVector, p: &[f64]) -> Result<Vec<Vec<f64>>> {
    let delta = match &r.kind {
        RiskKind::CVaR { .. } => {
            return Err(Error::InvalidRisk(
                "coherent case has no penalty cut: use domain constraints instead".into(),
            ))
        }
        RiskKind::Entropic { delta } => delta,
    };
    if m.weights.iter().flatten().any(|&v| v <= 0.0) {
        return Err(Error::InvalidRisk(
            "subgradient requires strictly positive mass: clamp m >= 1e-12 first".into(),
        ));
    }
    let gamma = m.masses();
    let (_, s_star) = inner_inf(delta, &gamma, &r.dual_generators)
        .ok_or_else(|| Error::InvalidRisk("penalty is identically infinite".into()))?;
    Ok(m.weights
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .zip(p)
                .map(|(&mji, &pi)| -(mji / (pi * s_star[j])).ln() / delta[j])
                .collect()
        })
        .collect())
}

/// Scalarization result: value `φ_w(u)` (possibly `−∞`) and an attaining
/// boundary point when the value is finite.
#[derive(Debug, Clone)]
pub struct PhiResult {
    pub value: f64,
    pub attaining_z: Option<Vec<f64>>,
}

/// `φ_w(u) = inf_{z ∈ R(u)} wᵀz`.
///
/// CVaR: `wᵀ·cvar_vector(u)` when `w ∈ C⁺`, else `−∞`. Entropic: the closed
/// form below (validated in tests against direct minimization of `wᵀz` over
/// the membership set):
///
/// ```text
/// φ_w(u) = Σ_j (w_j/δ_j)(log E e^{δ_j u^j} + 1 − log w_j)
///          − inf_{s∈C⁺} Σ_j (s_j − w_j log s_j)/δ_j
/// ```
pub fn scalarize_phi(r: &RiskMeasure, w: &[f64], u: &[Vec<f64>], p: &[f64]) -> PhiResult {
    match &r.kind {
        RiskKind::CVaR { nu } => {
            if !r.weight_in_dual_cone(w, 1e-9) {
                return PhiResult {
                    value: f64::NEG_INFINITY,
                    attaining_z: None,
                };
            }
            let q = cvar_vector(u, p, nu);
            PhiResult {
                value: dot(w, &q),
                attaining_z: Some(q),
            }
        }
        RiskKind::Entropic { delta } => {
            // `R(u)` recedes in `C`, so the scalarization is `−∞` whenever
            // some cone direction has negative weight.
            if !r.weight_in_dual_cone(w, 1e-9) {
                return PhiResult {
                    value: f64::NEG_INFINITY,
                    attaining_z: None,
                };
            }
            let inner = match inner_inf(delta, w, &r.dual_generators) {
                Some((v, _)) => v,
                None => {
                    return PhiResult {
                        value: f64::NEG_INFINITY,
                        attaining_z: None,
                    }
                }
            };
            let mut value = -inner;
            for j in 0..r.dim() {
                if w[j] <= 0.0 {
                    continue;
                }
                let scaled: Vec<f64> = u[j].iter().map(|&x| delta[j] * x).collect();
                value += (w[j] / delta[j]) * (log_mean_exp(&scaled, p) + 1.0 - w[j].ln());
            }
            let z = if is_orthant(&r.cone) {
                // Componentwise boundary point; attains φ_w for C = ℝ^J₊.
                Some(
                    (0..r.dim())
                        .map(|j| {
                            let scaled: Vec<f64> = u[j].iter().map(|&x| delta[j] * x).collect();
                            log_mean_exp(&scaled, p) / delta[j]
                        })
                        .collect(),
                )
            } else {
                scalarize_phi_via_membership(r, w, u, p).ok().map(|(_, z)| z)
            };
            PhiResult {
                value,
                attaining_z: z,
            }
        }
    }
}

fn is_orthant(c: &Cone) -> bool {
    let d = c.dim();
    c.generators.len() == d
        && (0..d).all(|j| {
            c.generators
                .iter()
                .any(|g| g[j] > 0.0 && g.iter().enumerate().all(|(k, &v)| k == j || v == 0.0))
        })
}

/// Direct minimization of `wᵀz` over the entropic membership set with a
/// cutting-plane solver; the reference implementation the closed form is
/// checked against, and the attaining-z provider for general cones.
pub fn scalarize_phi_via_membership(
    r: &RiskMeasure,
    w: &[f64],
    u: &[Vec<f64>],
    p: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let delta = match &r.kind {
        RiskKind::Entropic { delta } => delta.clone(),
        RiskKind::CVaR { .. } => {
            return Err(Error::Scalarization(
                "membership minimization path is for the entropic kind".into(),
            ))
        }
    };
    let j_dim = r.dim();
    let p_min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    // Componentwise orthant boundary: an always-feasible anchor.
    let z0: Vec<f64> = (0..j_dim)
        .map(|j| {
            let scaled: Vec<f64> = u[j].iter().map(|&x| delta[j] * x).collect();
            log_mean_exp(&scaled, p) / delta[j]
        })
        .collect();
    // Lower bounds: on the boundary, s_kᵀE[U(u−z)] = 0 for some generator
    // with s_kj > 0 caps how negative E_j (hence how small z_j) can be.
    let mut lo = vec![0.0; j_dim];
    let mut hi = vec![0.0; j_dim];
    for j in 0..j_dim {
        let mut cap: f64 = 0.0;
        for s in r.dual_generators() {
            if s[j] <= 1e-9 {
                continue;
            }
            let others: f64 = (0..j_dim)
                .filter(|&jj| jj != j)
                .map(|jj| s[jj] / delta[jj])
                .sum();
            cap = cap.max(others / s[j]);
        }
        let u_min = u[j].iter().cloned().fold(f64::INFINITY, f64::min);
        lo[j] = u_min - ((1.0 + delta[j] * cap) / p_min).ln() / delta[j] - 1.0;
    }
    let wz0 = dot(w, &z0);
    let wlo = dot(w, &lo);
    let wmax = inf_norm(w);
    for j in 0..j_dim {
        hi[j] = if w[j] > 1e-9 * wmax {
            (wz0 - (wlo - w[j] * lo[j])) / w[j] + 1.0
        } else {
            z0[j] + 20.0 / delta[j] + 1.0
        };
        hi[j] = hi[j].max(z0[j] + 1e-6);
        lo[j] = lo[j].min(z0[j] - 1e-6);
    }
    let w_o = w.to_vec();
    let mut prog = OracleProgram::new(
        lo,
        hi,
        Box::new(move |z: &[f64]| (dot(&w_o, z), w_o.clone())),
    );
    for s in r.dual_generators() {
        let s = s.clone();
        let delta = delta.clone();
        let u = u.to_vec();
        let p = p.to_vec();
        prog.constraints.push(Box::new(move |z: &[f64]| {
            // g(z) = −sᵀE[U(u−z)] ≤ 0, convex with gradient
            // ∂g/∂z_j = −s_j E[e^{δ_j(u_j−z_j)}].
            let mut val = 0.0;
            let mut grad = vec![0.0; z.len()];
            for j in 0..z.len() {
                if s[j] == 0.0 {
                    continue;
                }
                let mean: f64 = u[j]
                    .iter()
                    .zip(&p)
                    .map(|(&uij, &pi)| pi * (delta[j] * (uij - z[j])).exp())
                    .sum();
                val -= s[j] * (1.0 - mean) / delta[j];
                grad[j] = -s[j] * mean;
            }
            (val, grad)
        }));
    }
    let res = solve_kelley(&prog, Tolerances::default_static())?;
    Ok((res.value, res.x))
}

/// Smallest `α` with `v + α𝟏 ∈ R(u)`: exponential bracketing followed by
/// bisection to the configured absolute tolerance.
pub fn entry_alpha(r: &RiskMeasure, u: &[Vec<f64>], p: &[f64], v: &[f64]) -> f64 {
    let tol = Tolerances::default_static().entry_alpha;
    let shifted = |alpha: f64| -> Vec<f64> { v.iter().map(|&vj| vj + alpha).collect() };
    let member = |alpha: f64| membership(r, u, p, &shifted(alpha));
    let scale = 1.0
        + inf_norm(v)
        + u.iter().map(|row| inf_norm(row)).fold(0.0f64, f64::max);
    let (mut lo, mut hi);
    if member(0.0) {
        hi = 0.0;
        let mut step = scale;
        loop {
            lo = hi - step;
            if !member(lo) {
                break;
            }
            hi = lo;
            step *= 2.0;
        }
    } else {
        lo = 0.0;
        let mut step = scale;
        loop {
            hi = lo + step;
            if member(hi) {
                break;
            }
            lo = hi;
            step *= 2.0;
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if member(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
