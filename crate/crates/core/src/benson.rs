//! Outer-approximation (Benson-type) loops for the vector problem, in a
//! primal and a dual variant, plus construction and verification of the
//! final polyhedral sandwich.
//!
//! The **primal** loop maintains an outer polyhedron `P^k ⊇ P` (the upper
//! image). At each round it enumerates the vertices of `P^k`; for a vertex
//! `v` it solves the entry problem `P2(v)` for the minimal step `α` with
//! `v + α𝟏 ∈ P` and the dual weight `γ` of the supporting halfspace
//! `γᵀz ≥ γᵀ(v + α𝟏)`. Vertices with `α ≤ ε` are within tolerance; the
//! first vertex beyond tolerance contributes its supporting halfspace as a
//! cut. Every solve also yields a weak minimizer `(x, y, v + α𝟏)` for the
//! inner approximation and a maximizer `γ` for the geometric dual.
//!
//! The **dual** loop runs the same scheme on the lower image
//! `D = {(w^1..w^{J−1}, p) : w ∈ Δ, p ≤ P1(w)}` of the geometric dual
//! problem, refining an outer polyhedron of `D` with cuts derived from
//! optimal points of the weighted-sum problem `P1(w)` (ordering cone
//! `K = cone{e_J}`).
//!
//! Both loops return the four polyhedra
//!
//! ```text
//!   P_in  = conv{z ∈ Z̄} + ℝ^J₊          ⊆ P ⊆  P_out = ∩_{w ∈ W̄} {wᵀz ≥ P1(w)}
//!   D_in  = conv{(w, P1(w))} − K         ⊆ D ⊆  D_out = ∩_{z ∈ Z̄} {(z^J−z^1,…,1)ᵀd ≤ z^J}
//! ```
//!
//! whose ε-tightness is checked by [`verify_sandwich`].
//!
//! Scalarizations run on the direct backend, the bundle backend, or `auto`
//! (bundle once the scenario count exceeds [`AUTO_BUNDLE_THRESHOLD`]). With
//! the bundle backend, outer offsets use the dual (lower-bound) values and
//! inner points use the recovered feasible primal points, so both sides of
//! the sandwich stay valid up to the bundle's own primal–dual gap.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bundle::{run_bundle_p1, run_bundle_p2, BundleParams};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::model::TwoStageProblem;
use crate::polyhedra::{vrep_to_halfspaces, Halfspace, Polyhedron, VRep};
use crate::risk::RiskMeasure;
use crate::scalarization::{
    solve_p1_direct, solve_p2_direct, validate_supporting_halfspace, Backend,
};

/// Scenario count beyond which `Backend::Auto` switches to the bundle.
pub const AUTO_BUNDLE_THRESHOLD: usize = 100;

/// Which approximation loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Primal,
    Dual,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Primal => "primal",
            Algorithm::Dual => "dual",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primal" => Ok(Algorithm::Primal),
            "dual" => Ok(Algorithm::Dual),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected primal|dual)"
            ))),
        }
    }
}

/// Options of one vector solve.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub backend: Backend,
    pub bundle: BundleParams,
    /// Safety budget on refinement cuts.
    pub max_cuts: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            epsilon: 1e-2,
            algorithm: Algorithm::Primal,
            backend: Backend::Auto,
            bundle: BundleParams::default(),
            max_cuts: 500,
        }
    }
}

/// One weak minimizer: feasible decisions and the attained risk vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakSolutionPoint {
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

/// A polyhedron in both representations.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PolyDescription {
    pub vertices: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
    pub halfspaces: Vec<Halfspace>,
}

/// The four output polyhedra sandwiching the upper and lower images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Approximations {
    pub inner: PolyDescription,
    pub outer: PolyDescription,
    pub dual_inner: PolyDescription,
    pub dual_outer: PolyDescription,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub p1_solves: usize,
    pub p2_solves: usize,
    pub cuts: usize,
    pub vertex_passes: usize,
    pub wall_time_ms: u128,
}

/// Result of one approximation run.
#[derive(Debug, Clone)]
pub struct VectorSolveResult {
    /// Finite weak ε-solution `Z̄`.
    pub solution_points: Vec<WeakSolutionPoint>,
    /// Finite ε-solution `W̄` of the geometric dual, with the (lower-bound)
    /// scalarization values used for the outer offsets.
    pub weights: Vec<Vec<f64>>,
    pub weight_values: Vec<f64>,
    pub approx: Approximations,
    pub stats: SolveStats,
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub backend: Backend,
}

/// Run the selected approximation loop.
pub fn solve_vector_problem(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    opts: &SolveOptions,
) -> Result<VectorSolveResult> {
    if r.dim() != p.dims.j {
        return Err(Error::Benson(format!(
            "risk dimension {} does not match problem objectives {}",
            r.dim(),
            p.dims.j
        )));
    }
    if !(opts.epsilon > 0.0) {
        return Err(Error::Benson("epsilon must be positive".into()));
    }
    match opts.algorithm {
        Algorithm::Primal => primal_benson(p, r, opts),
        Algorithm::Dual => dual_benson(p, r, opts),
    }
}

fn effective_backend(opts: &SolveOptions, p: &TwoStageProblem) -> Backend {
    match opts.backend {
        Backend::Auto => {
            if p.dims.i > AUTO_BUNDLE_THRESHOLD {
                Backend::Bundle
            } else {
                Backend::Direct
            }
        }
        b => b,
    }
}

/// A `P1(w)` solve normalized across backends. `value` is a valid lower
/// bound on `P1(w)` (exact for the direct backend) and the point, when
/// present, is feasible.
struct P1Outcome {
    value: f64,
    point: Option<WeakSolutionPoint>,
}

fn solve_p1(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    w: &[f64],
    backend: Backend,
    opts: &SolveOptions,
    stats: &mut SolveStats,
) -> Result<P1Outcome> {
    stats.p1_solves += 1;
    match backend {
        Backend::Direct => {
            let res = solve_p1_direct(p, r, w)?;
            if res.value == f64::NEG_INFINITY {
                return Ok(P1Outcome {
                    value: f64::NEG_INFINITY,
                    point: None,
                });
            }
            let z = res
                .z
                .ok_or_else(|| Error::Benson("direct backend returned no risk vector".into()))?;
            Ok(P1Outcome {
                value: res.value,
                point: Some(WeakSolutionPoint {
                    x: res.x,
                    y: res.y,
                    z,
                }),
            })
        }
        _ => {
            let res = run_bundle_p1(p, r, w, &opts.bundle)?;
            if res.is_unbounded() {
                return Ok(P1Outcome {
                    value: f64::NEG_INFINITY,
                    point: None,
                });
            }
            let z = res
                .z
                .ok_or_else(|| Error::Benson("bundle recovery returned no risk vector".into()))?;
            Ok(P1Outcome {
                value: res.value.min(res.primal_value),
                point: Some(WeakSolutionPoint {
                    x: res.x,
                    y: res.y,
                    z,
                }),
            })
        }
    }
}

struct P2Outcome {
    alpha: f64,
    gamma: Vec<f64>,
    point: WeakSolutionPoint,
}

fn solve_p2(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    v: &[f64],
    backend: Backend,
    opts: &SolveOptions,
    stats: &mut SolveStats,
    sample_points: &[WeakSolutionPoint],
) -> Result<P2Outcome> {
    stats.p2_solves += 1;
    let direct = |stats: &mut SolveStats| -> Result<P2Outcome> {
        let _ = stats;
        let res = solve_p2_direct(p, r, v)?;
        let alpha = res
            .alpha
            .ok_or_else(|| Error::Benson("entry problem returned no step length".into()))?;
        let gamma = res
            .gamma
            .ok_or_else(|| Error::Benson("entry problem returned no dual weight".into()))?;
        let z: Vec<f64> = v.iter().map(|vj| vj + alpha).collect();
        Ok(P2Outcome {
            alpha,
            gamma,
            point: WeakSolutionPoint {
                x: res.x,
                y: res.y,
                z,
            },
        })
    };
    match backend {
        Backend::Direct => direct(stats),
        _ => {
            let res = run_bundle_p2(p, r, v, &opts.bundle)?;
            let alpha = res
                .alpha
                .ok_or_else(|| Error::Benson("bundle recovery returned no step length".into()))?;
            let gamma = res
                .gamma
                .ok_or_else(|| Error::Benson("bundle recovery returned no dual weight".into()))?;
            // The recovered weight must support the upper image at
            // `v + α𝟏`; cross-check against the collected feasible points
            // and fall back to the direct backend when it does not.
            let zs: Vec<Vec<f64>> = sample_points.iter().map(|s| s.z.clone()).collect();
            if !validate_supporting_halfspace(&gamma, v, alpha, &zs) {
                return direct(stats);
            }
            let z: Vec<f64> = v.iter().map(|vj| vj + alpha).collect();
            Ok(P2Outcome {
                alpha,
                gamma,
                point: WeakSolutionPoint {
                    x: res.x,
                    y: res.y,
                    z,
                },
            })
        }
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = 1.0
        + a.iter()
            .chain(b)
            .fold(0.0f64, |m, v| m.max(v.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn primal_benson(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    opts: &SolveOptions,
) -> Result<VectorSolveResult> {
    let start = Instant::now();
    let big_j = p.dims.j;
    let backend = effective_backend(opts, p);
    let mut stats = SolveStats::default();
    let mut points: Vec<WeakSolutionPoint> = Vec::new();
    let mut weights: Vec<Vec<f64>> = Vec::new();
    let mut weight_values: Vec<f64> = Vec::new();

    // Initial outer approximation: supporting halfspaces in the coordinate
    // directions. Directions outside the dual of the ordering cone have
    // value −∞ (no supporting halfspace); the normalized dual-cone
    // generators are added so the initial polyhedron still has vertices.
    let mut directions: Vec<Vec<f64>> = (0..big_j)
        .map(|j| {
            let mut e = vec![0.0; big_j];
            e[j] = 1.0;
            e
        })
        .collect();
    if !(0..big_j).all(|j| r.weight_in_dual_cone(&directions[j], 1e-9)) {
        for g in r.dual_generators() {
            let total: f64 = g.iter().sum();
            if total > 1e-12 {
                directions.push(g.iter().map(|v| v / total).collect());
            }
        }
    }
    let mut outer = Polyhedron::full_space(big_j);
    for w in &directions {
        let out = solve_p1(p, r, w, backend, opts, &mut stats)?;
        if out.value == f64::NEG_INFINITY {
            continue;
        }
        outer = outer.add_halfspace(Halfspace::new(w.clone(), out.value));
        weights.push(w.clone());
        weight_values.push(out.value);
        if let Some(pt) = out.point {
            points.push(pt);
        }
    }
    if weights.is_empty() {
        return Err(Error::Benson(
            "no initial direction yields a finite scalarization".into(),
        ));
    }

    // Refinement loop: cut the first vertex farther than ε from the image.
    let mut done_vertices: Vec<Vec<f64>> = Vec::new();
    let vertex_tol = 1e-9;
    loop {
        stats.vertex_passes += 1;
        let vrep = outer
            .dual_description()
            .map_err(|e| Error::Benson(format!("outer approximation degenerated: {e}")))?;
        if vrep.vertices.is_empty() {
            return Err(Error::Benson(
                "outer approximation has no vertices (image unbounded in a weight direction)"
                    .into(),
            ));
        }
        let mut cut: Option<Halfspace> = None;
        for v in &vrep.vertices {
            if done_vertices.iter().any(|d| close(d, v, vertex_tol)) {
                continue;
            }
            let out = solve_p2(p, r, v, backend, opts, &mut stats, &points)?;
            points.push(out.point.clone());
            let offset: f64 = out
                .gamma
                .iter()
                .zip(v)
                .map(|(g, vj)| g * (vj + out.alpha))
                .sum();
            weights.push(out.gamma.clone());
            weight_values.push(offset);
            if out.alpha > opts.epsilon {
                cut = Some(Halfspace::new(out.gamma.clone(), offset));
                break;
            }
            done_vertices.push(v.clone());
        }
        match cut {
            Some(h) => {
                outer = outer.add_halfspace(h);
                stats.cuts += 1;
                if stats.cuts > opts.max_cuts {
                    return Err(Error::Benson(format!(
                        "cut budget exhausted ({} cuts) without reaching epsilon {}",
                        stats.cuts, opts.epsilon
                    )));
                }
            }
            None => break,
        }
    }

    let approx = build_approximations(&r.cone, &points, &weights, &weight_values)?;
    stats.wall_time_ms = start.elapsed().as_millis();
    Ok(VectorSolveResult {
        solution_points: points,
        weights,
        weight_values,
        approx,
        stats,
        epsilon: opts.epsilon,
        algorithm: Algorithm::Primal,
        backend,
    })
}

fn dual_benson(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    opts: &SolveOptions,
) -> Result<VectorSolveResult> {
    let start = Instant::now();
    let big_j = p.dims.j;
    let backend = effective_backend(opts, p);
    let mut stats = SolveStats::default();
    let mut points: Vec<WeakSolutionPoint> = Vec::new();
    let mut weights: Vec<Vec<f64>> = Vec::new();
    let mut weight_values: Vec<f64> = Vec::new();

    let eta = vec![1.0 / big_j as f64; big_j];
    let first = solve_p1(p, r, &eta, backend, opts, &mut stats)?;
    if first.value == f64::NEG_INFINITY {
        return Err(Error::Benson(
            "scalarization at the barycentric weight is unbounded".into(),
        ));
    }
    points.push(
        first
            .point
            .ok_or_else(|| Error::Benson("no feasible point at the barycentric weight".into()))?,
    );
    weights.push(eta.clone());
    weight_values.push(first.value);

    // D^0 in the `d = (w^1..w^{J−1}, p)` coordinates: the simplex box plus
    // the supporting halfspace of the barycentric solve,
    // `(z^J−z^1,…,z^J−z^{J−1},1)ᵀd ≤ z^J` (which also bounds `d^J` above).
    // Using a valid supporting halfspace here (instead of a level bound)
    // keeps the final outer polyhedron a superset of `D_out`, so the ε
    // guarantee at its vertices extends to all of `D_out` by convexity.
    let mut outer = Polyhedron::full_space(big_j);
    for j in 0..big_j - 1 {
        let mut n = vec![0.0; big_j];
        n[j] = 1.0;
        outer = outer.add_halfspace(Halfspace::new(n, 0.0));
    }
    let mut n = vec![-1.0; big_j];
    n[big_j - 1] = 0.0;
    outer = outer.add_halfspace(Halfspace::new(n, -1.0));
    {
        let z = &points[0].z;
        let zj = z[big_j - 1];
        let mut normal: Vec<f64> = (0..big_j - 1).map(|j| z[j] - zj).collect();
        normal.push(-1.0);
        outer = outer.add_halfspace(Halfspace::new(normal, -zj));
    }

    let mut done_vertices: Vec<Vec<f64>> = Vec::new();
    let vertex_tol = 1e-9;
    loop {
        stats.vertex_passes += 1;
        let vrep = outer
            .dual_description()
            .map_err(|e| Error::Benson(format!("dual outer approximation degenerated: {e}")))?;
        let mut cut: Option<Halfspace> = None;
        for t in &vrep.vertices {
            if done_vertices.iter().any(|d| close(d, t, vertex_tol)) {
                continue;
            }
            // Recover the simplex weight behind the dual point.
            let mut w: Vec<f64> = t[..big_j - 1].iter().map(|v| v.max(0.0)).collect();
            let tail: f64 = 1.0 - w.iter().sum::<f64>();
            w.push(tail.max(0.0));
            let total: f64 = w.iter().sum();
            if total <= 1e-12 {
                done_vertices.push(t.clone());
                continue;
            }
            w.iter_mut().for_each(|x| *x /= total);

            let out = solve_p1(p, r, &w, backend, opts, &mut stats)?;
            if out.value == f64::NEG_INFINITY {
                // The weight lies outside the dual of the ordering cone:
                // exclude it with the violated cone-domain inequality
                // (gᵀw ≥ 0 expressed in the `d` coordinates).
                let g = r
                    .cone
                    .generators
                    .iter()
                    .min_by(|a, b| {
                        let da: f64 = a.iter().zip(&w).map(|(x, y)| x * y).sum();
                        let db: f64 = b.iter().zip(&w).map(|(x, y)| x * y).sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .ok_or_else(|| Error::Benson("ordering cone has no generators".into()))?;
                let viol: f64 = g.iter().zip(&w).map(|(x, y)| x * y).sum();
                if viol >= -1e-12 {
                    return Err(Error::Benson(
                        "unbounded scalarization with no violated domain inequality".into(),
                    ));
                }
                let gj = g[big_j - 1];
                let mut normal: Vec<f64> = (0..big_j - 1).map(|j| g[j] - gj).collect();
                normal.push(0.0);
                cut = Some(Halfspace::new(normal, -gj));
                break;
            }
            let pt = out
                .point
                .ok_or_else(|| Error::Benson("no feasible point for a finite weight".into()))?;
            let z = pt.z.clone();
            points.push(pt);
            // Cut decision uses the primal value `wᵀz` so the generated
            // halfspace is guaranteed to separate the vertex.
            let wz: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
            let gap = t[big_j - 1] - wz;
            if w.iter().all(|&x| x > 0.0) || gap <= opts.epsilon {
                weights.push(w.clone());
                weight_values.push(out.value);
            }
            if gap > opts.epsilon {
                // Supporting halfspace of the lower image:
                // (z^J−z^1, …, z^J−z^{J−1}, 1)ᵀ d ≤ z^J.
                let zj = z[big_j - 1];
                let mut normal: Vec<f64> = (0..big_j - 1).map(|j| z[j] - zj).collect();
                normal.push(-1.0);
                cut = Some(Halfspace::new(normal, -zj));
                break;
            }
            done_vertices.push(t.clone());
        }
        match cut {
            Some(h) => {
                outer = outer.add_halfspace(h);
                stats.cuts += 1;
                if stats.cuts > opts.max_cuts {
                    return Err(Error::Benson(format!(
                        "cut budget exhausted ({} cuts) without reaching epsilon {}",
                        stats.cuts, opts.epsilon
                    )));
                }
            }
            None => break,
        }
    }

    let approx = build_approximations(&r.cone, &points, &weights, &weight_values)?;
    stats.wall_time_ms = start.elapsed().as_millis();
    Ok(VectorSolveResult {
        solution_points: points,
        weights,
        weight_values,
        approx,
        stats,
        epsilon: opts.epsilon,
        algorithm: Algorithm::Dual,
        backend,
    })
}

/// Minimal H- and V-representations from a raw V-description.
fn describe_from_vrep(raw: VRep) -> Result<PolyDescription> {
    let dim = raw
        .vertices
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::Benson("no points collected".into()))?;
    let halfspaces = vrep_to_halfspaces(&raw)?;
    let poly = Polyhedron::from_halfspaces(dim, halfspaces.clone());
    let minimal = poly.dual_description()?;
    Ok(PolyDescription {
        vertices: minimal.vertices,
        rays: minimal.rays,
        halfspaces,
    })
}

fn describe_from_halfspaces(dim: usize, halfspaces: Vec<Halfspace>) -> Result<PolyDescription> {
    let poly = Polyhedron::from_halfspaces(dim, halfspaces.clone());
    let vrep = poly.dual_description()?;
    Ok(PolyDescription {
        vertices: vrep.vertices,
        rays: vrep.rays,
        halfspaces,
    })
}

/// Assemble the four sandwich polyhedra from the collected weak minimizers
/// `Z̄` and dual weights `W̄` (with their scalarization values). The upper
/// image recedes in the ordering cone, so `P_in = conv{z} + C` and `D_out`
/// is restricted to weights in the dual cone (`gᵀw ≥ 0` per generator `g`).
pub fn build_approximations(
    cone: &crate::polyhedra::Cone,
    points: &[WeakSolutionPoint],
    weights: &[Vec<f64>],
    weight_values: &[f64],
) -> Result<Approximations> {
    let dim = cone.dim();
    if points.is_empty() || weights.is_empty() {
        return Err(Error::Benson("empty solution sets".into()));
    }
    let dedup_tol = 1e-9;

    // P_in = conv{z} + ℝ^J₊.
    let mut zs: Vec<Vec<f64>> = Vec::new();
    for pt in points {
        if !zs.iter().any(|e| close(e, &pt.z, dedup_tol)) {
            zs.push(pt.z.clone());
        }
    }
    let cone_rays: Vec<Vec<f64>> = cone
        .generators
        .iter()
        .filter_map(|g| {
            let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (norm > 1e-12).then(|| g.iter().map(|v| v / norm).collect())
        })
        .collect();
    let inner = describe_from_vrep(VRep {
        vertices: zs.clone(),
        rays: cone_rays,
    })?;

    // P_out = ∩ {wᵀz ≥ value}.
    let mut outer_halfspaces: Vec<Halfspace> = Vec::new();
    for (w, &val) in weights.iter().zip(weight_values) {
        if !val.is_finite() {
            continue;
        }
        let h = Halfspace::new(w.clone(), val);
        if !outer_halfspaces
            .iter()
            .any(|e| close(&e.normal, &h.normal, dedup_tol) && (e.offset - h.offset).abs() <= 1e-9)
        {
            outer_halfspaces.push(h);
        }
    }
    let outer = describe_from_halfspaces(dim, outer_halfspaces)?;

    // D_in = conv{(w^1..w^{J−1}, value)} − K.
    let mut dual_points: Vec<Vec<f64>> = Vec::new();
    for (w, &val) in weights.iter().zip(weight_values) {
        if !val.is_finite() {
            continue;
        }
        let mut d: Vec<f64> = w[..dim - 1].to_vec();
        d.push(val);
        if !dual_points.iter().any(|e| close(e, &d, dedup_tol)) {
            dual_points.push(d);
        }
    }
    let mut down = vec![0.0; dim];
    down[dim - 1] = -1.0;
    let dual_inner = describe_from_vrep(VRep {
        vertices: dual_points,
        rays: vec![down],
    })?;

    // D_out = simplex box ∩ {(z^J−z^1,…,1)ᵀd ≤ z^J} over all collected z.
    let mut dual_outer_halfspaces: Vec<Halfspace> = Vec::new();
    for j in 0..dim - 1 {
        let mut n = vec![0.0; dim];
        n[j] = 1.0;
        dual_outer_halfspaces.push(Halfspace::new(n, 0.0));
    }
    let mut n = vec![-1.0; dim];
    n[dim - 1] = 0.0;
    dual_outer_halfspaces.push(Halfspace::new(n, -1.0));
    // The lower image only has points for weights in the dual cone:
    // `gᵀw ≥ 0` for every generator `g` of the ordering cone, in the
    // `d = (w^1..w^{J−1}, p)` coordinates with `w^J = 1 − Σ_{j<J} w^j`.
    for g in &cone.generators {
        let gj = g[dim - 1];
        let mut normal: Vec<f64> = (0..dim - 1).map(|j| g[j] - gj).collect();
        normal.push(0.0);
        if normal.iter().any(|v| v.abs() > 1e-12) {
            dual_outer_halfspaces.push(Halfspace::new(normal, -gj));
        }
    }
    for z in &zs {
        let zj = z[dim - 1];
        let mut normal: Vec<f64> = (0..dim - 1).map(|j| z[j] - zj).collect();
        normal.push(-1.0);
        if normal.iter().any(|v| v.abs() > 1e-12) {
            let h = Halfspace::new(normal, -zj);
            if !dual_outer_halfspaces
                .iter()
                .any(|e| close(&e.normal, &h.normal, dedup_tol) && (e.offset - h.offset).abs() <= 1e-9)
            {
                dual_outer_halfspaces.push(h);
            }
        }
    }
    let dual_outer = describe_from_halfspaces(dim, dual_outer_halfspaces)?;

    Ok(Approximations {
        inner,
        outer,
        dual_inner,
        dual_outer,
    })
}

/// Result of the four containment checks between the sandwich polyhedra.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `P_in ⊆ P_out`.
    pub inner_in_outer: bool,
    /// `P_out + ε𝟏 ⊆ P_in`.
    pub outer_shifted_in_inner: bool,
    /// `D_in ⊆ D_out`.
    pub dual_inner_in_outer: bool,
    /// `D_out − ε e_J ⊆ D_in`.
    pub dual_outer_shifted_in_inner: bool,
    /// Worst signed halfspace slack per check (negative = violation beyond
    /// tolerance).
    pub worst_margins: [f64; 4],
    pub epsilon: f64,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.inner_in_outer
            && self.outer_shifted_in_inner
            && self.dual_inner_in_outer
            && self.dual_outer_shifted_in_inner
    }
}

/// Worst slack of `shifted vertices of `a`` against the halfspaces of `b`,
/// plus ray containment (`normalᵀ ray ≥ 0`).
fn containment_margin(a: &PolyDescription, b: &PolyDescription, shift: &[f64]) -> f64 {
    let mut worst = f64::INFINITY;
    for v in &a.vertices {
        let s: Vec<f64> = v.iter().zip(shift).map(|(x, d)| x + d).collect();
        for h in &b.halfspaces {
            worst = worst.min(h.slack(&s));
        }
    }
    for ray in &a.rays {
        for h in &b.halfspaces {
            let d: f64 = h.normal.iter().zip(ray).map(|(n, r)| n * r).sum();
            worst = worst.min(d);
        }
    }
    worst
}

/// Check the ε-sandwich: the inner polyhedra must sit inside the outer
/// ones, and the outer ones shifted by ε along the relevant direction must
/// sit inside the inner ones.
pub fn verify_sandwich(approx: &Approximations, epsilon: f64) -> SandwichReport {
    let tol = Tolerances::default_static();
    let dim = approx
        .inner
        .vertices
        .first()
        .map(|v| v.len())
        .unwrap_or(0);
    let scale = 1.0
        + approx
            .inner
            .vertices
            .iter()
            .chain(&approx.outer.vertices)
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let slack = tol.geometry * 100.0 * scale;

    let zero = vec![0.0; dim];
    let up = vec![epsilon; dim];
    let mut down = vec![0.0; dim];
    if dim > 0 {
        down[dim - 1] = -epsilon;
    }

    let m1 = containment_margin(&approx.inner, &approx.outer, &zero);
    let m2 = containment_margin(&approx.outer, &approx.inner, &up);
    let m3 = containment_margin(&approx.dual_inner, &approx.dual_outer, &zero);
    let m4 = containment_margin(&approx.dual_outer, &approx.dual_inner, &down);
    SandwichReport {
        inner_in_outer: m1 >= -slack,
        outer_shifted_in_inner: m2 >= -slack,
        dual_inner_in_outer: m3 >= -slack,
        dual_outer_shifted_in_inner: m4 >= -slack,
        worst_margins: [m1, m2, m3, m4],
        epsilon,
    }
}
