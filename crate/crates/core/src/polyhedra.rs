//! Polyhedra in H-representation with incremental vertex/ray enumeration.
//!
//! A [`Polyhedron`] is an intersection of halfspaces `normalᵀz ≥ offset` in
//! ℝ^J (J ∈ {2, 3} in practice). The V-representation is maintained by the
//! double description method on the homogenization cone in ℝ^{J+1}: the
//! polyhedron `{z : aᵢᵀz ≥ bᵢ}` corresponds to the cone
//! `{(t, z) : t ≥ 0, −bᵢ t + aᵢᵀz ≥ 0}`, whose extreme rays with `t > 0`
//! are the vertices (scaled to `t = 1`) and with `t = 0` the recession
//! directions. Halfspaces are inserted one at a time, which is exactly the
//! access pattern of the outer-approximation loops; each insertion splits
//! the current ray list along the new hyperplane using the standard
//! combinatorial adjacency test.
//!
//! The module also provides the ordering-cone type [`Cone`] with its
//! positive dual, conversion from a V-representation back to halfspaces (via
//! the polar cone), and a brute-force vertex enumerator used as a test
//! oracle.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::opt_kernel::{solve_lp, LinearProgram, LpStatus, RowKind};

/// `normalᵀ z ≥ offset`, stored normalized to `‖normal‖∞ = 1`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        let scale = normal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(scale > 0.0, "halfspace normal must be nonzero");
        Halfspace {
            normal: normal.iter().map(|v| v / scale).collect(),
            offset: offset / scale,
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        dot(&self.normal, z) >= self.offset - tol
    }

    /// Signed slack `normalᵀz − offset` (negative outside).
    pub fn slack(&self, z: &[f64]) -> f64 {
        dot(&self.normal, z) - self.offset
    }
}

/// Complete V-representation: `conv(vertices) + cone(rays)`.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct VRep {
    pub vertices: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn normalize_inf(v: &mut [f64]) {
    let s = inf_norm(v);
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}

/// Growable bitset over inserted-halfspace indices.
#[derive(Debug, Clone, PartialEq)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn empty() -> Self {
        BitSet(Vec::new())
    }

    fn set(&mut self, i: usize, val: bool) {
        let w = i / 64;
        if w >= self.0.len() {
            self.0.resize(w + 1, 0);
        }
        if val {
            self.0[w] |= 1 << (i % 64);
        } else {
            self.0[w] &= !(1 << (i % 64));
        }
    }

    fn intersection(&self, other: &BitSet) -> BitSet {
        let n = self.0.len().min(other.0.len());
        BitSet((0..n).map(|i| self.0[i] & other.0[i]).collect())
    }

    /// `self ⊇ other`
    fn contains_all(&self, other: &BitSet) -> bool {
        for (i, &w) in other.0.iter().enumerate() {
            let s = self.0.get(i).copied().unwrap_or(0);
            if w & !s != 0 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
struct Ray {
    v: Vec<f64>,
    active: BitSet,
}

/// Double-description state for a cone `{x : nᵢᵀx ≥ 0}`.
#[derive(Debug, Clone)]
struct ConeDD {
    dim: usize,
    normals: Vec<Vec<f64>>,
    lineality: Vec<Vec<f64>>,
    rays: Vec<Ray>,
    tol: f64,
}

impl ConeDD {
    fn full(dim: usize, tol: f64) -> Self {
        let lineality = (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect();
        ConeDD {
            dim,
            normals: Vec::new(),
            lineality,
            rays: Vec::new(),
            tol,
        }
    }

    fn recompute_active(&self, v: &[f64]) -> BitSet {
        let mut b = BitSet::empty();
        for (i, n) in self.normals.iter().enumerate() {
            b.set(i, dot(n, v).abs() <= self.tol);
        }
        b
    }

    /// Insert `a·x ≥ 0`.
    fn insert(&mut self, a: Vec<f64>) {
        debug_assert_eq!(a.len(), self.dim);
        let mut a = a;
        normalize_inf(&mut a);
        let k = self.normals.len();

        // Lineality reduction: if some lineality vector leaves the new
        // hyperplane, it becomes a ray and the rest of the description is
        // shifted into the hyperplane.
        let mut best: Option<(usize, f64)> = None;
        for (i, l) in self.lineality.iter().enumerate() {
            let d = dot(&a, l);
            if d.abs() > self.tol && best.map_or(true, |(_, bd)| d.abs() > bd.abs()) {
                best = Some((i, d));
            }
        }
        if let Some((i, d)) = best {
            let mut lstar = self.lineality.swap_remove(i);
            if d < 0.0 {
                for x in lstar.iter_mut() {
                    *x = -*x;
                }
            }
            let dstar = d.abs();
            for l in self.lineality.iter_mut() {
                let c = dot(&a, l) / dstar;
                for (lj, sj) in l.iter_mut().zip(&lstar) {
                    *lj -= c * sj;
                }
                normalize_inf(l);
            }
            for r in self.rays.iter_mut() {
                let c = dot(&a, &r.v) / dstar;
                for (rj, sj) in r.v.iter_mut().zip(&lstar) {
                    *rj -= c * sj;
                }
                normalize_inf(&mut r.v);
                r.active.set(k, true);
            }
            normalize_inf(&mut lstar);
            // The former lineality vector is active on every previous
            // constraint and strictly inside the new one.
            let mut active = BitSet::empty();
            for j in 0..k {
                active.set(j, true);
            }
            self.rays.push(Ray { v: lstar, active });
            self.normals.push(a);
            return;
        }

        // Split step: classify rays against the new hyperplane.
        let dots: Vec<f64> = self.rays.iter().map(|r| dot(&a, &r.v)).collect();
        let mut new_rays: Vec<Ray> = Vec::new();
        for (pi, p) in self.rays.iter().enumerate() {
            if dots[pi] <= self.tol {
                continue;
            }
            for (ni, nr) in self.rays.iter().enumerate() {
                if dots[ni] >= -self.tol {
                    continue;
                }
                if !self.adjacent(pi, ni) {
                    continue;
                }
                let mut v: Vec<f64> = p
                    .v
                    .iter()
                    .zip(&nr.v)
                    .map(|(pv, nv)| dots[pi] * nv - dots[ni] * pv)
                    .collect();
                normalize_inf(&mut v);
                if inf_norm(&v) == 0.0 {
                    continue;
                }
                let active = self.recompute_active(&v);
                new_rays.push(Ray { v, active });
            }
        }
        let tol = self.tol;
        let mut kept: Vec<Ray> = self
            .rays
            .drain(..)
            .zip(&dots)
            .filter(|(_, &d)| d >= -tol)
            .map(|(mut r, &d)| {
                r.active.set(k, d.abs() <= tol);
                r
            })
            .collect();
        self.normals.push(a);
        for mut r in new_rays {
            r.active.set(k, true);
            if !kept.iter().any(|e| same_direction(&e.v, &r.v, tol)) {
                kept.push(r);
            }
        }
        self.rays = kept;
    }

    /// Combinatorial adjacency: no third ray's active set contains the
    /// common active set of the pair.
    fn adjacent(&self, i: usize, j: usize) -> bool {
        let common = self.rays[i].active.intersection(&self.rays[j].active);
        for (m, r) in self.rays.iter().enumerate() {
            if m != i && m != j && r.active.contains_all(&common) {
                return false;
            }
        }
        true
    }
}

fn same_direction(a: &[f64], b: &[f64], tol: f64) -> bool {
    // Both inputs are ∞-normalized.
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 10.0 * tol)
}

/// Intersection of halfspaces with an incrementally maintained
/// V-representation. Values are immutable; [`Polyhedron::add_halfspace`]
/// returns a new value.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    dim: usize,
    halfspaces: Vec<Halfspace>,
    cone: ConeDD,
}

impl Polyhedron {
    /// The whole space ℝ^dim (homogenization constraint `t ≥ 0` only).
    pub fn full_space(dim: usize) -> Self {
        let tol = Tolerances::default_static().geometry;
        let mut cone = ConeDD::full(dim + 1, tol);
        let mut t_row = vec![0.0; dim + 1];
        t_row[0] = 1.0;
        cone.insert(t_row);
        Polyhedron {
            dim,
            halfspaces: Vec::new(),
            cone,
        }
    }

    pub fn from_halfspaces(dim: usize, halfspaces: Vec<Halfspace>) -> Self {
        let mut p = Polyhedron::full_space(dim);
        for h in halfspaces {
            p = p.add_halfspace(h);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn add_halfspace(&self, h: Halfspace) -> Polyhedron {
        let mut next = self.clone();
        let mut row = Vec::with_capacity(self.dim + 1);
        row.push(-h.offset);
        row.extend_from_slice(&h.normal);
        next.cone.insert(row);
        next.halfspaces.push(h);
        next
    }

    pub fn is_empty(&self) -> bool {
        !self
            .cone
            .rays
            .iter()
            .any(|r| r.v[0] > self.cone.tol)
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.contains(z, tol))
    }

    /// Complete V-representation. Lines (if any remain) are reported as
    /// opposite ray pairs.
    pub fn dual_description(&self) -> Result<VRep> {
        if self.halfspaces.is_empty() && self.cone.lineality.len() == self.dim {
            return Err(Error::Polyhedron(
                "dual description requires at least one halfspace".into(),
            ));
        }
        if self.is_empty() {
            return Err(Error::Polyhedron("polyhedron is empty".into()));
        }
        let tol = self.cone.tol;
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        let mut rays: Vec<Vec<f64>> = Vec::new();
        for r in &self.cone.rays {
            let t = r.v[0];
            if t > tol {
                let v: Vec<f64> = r.v[1..].iter().map(|x| x / t).collect();
                if !vertices.iter().any(|e| close(e, &v, 100.0 * tol)) {
                    vertices.push(v);
                }
            } else {
                let mut d = r.v[1..].to_vec();
                normalize_inf(&mut d);
                if inf_norm(&d) > 0.0 && !rays.iter().any(|e| same_direction(e, &d, tol)) {
                    rays.push(d);
                }
            }
        }
        for l in &self.cone.lineality {
            for sign in [1.0, -1.0] {
                let mut d: Vec<f64> = l[1..].iter().map(|x| sign * x).collect();
                normalize_inf(&mut d);
                if inf_norm(&d) > 0.0 && !rays.iter().any(|e| same_direction(e, &d, tol)) {
                    rays.push(d);
                }
            }
        }
        vertices.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rays.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(VRep { vertices, rays })
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = 1.0 + inf_norm(a).max(inf_norm(b));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

/// Free-function aliases matching the operation names used elsewhere.
pub fn dual_description(poly: &Polyhedron) -> Result<VRep> {
    poly.dual_description()
}

pub fn add_halfspace(poly: &Polyhedron, h: Halfspace) -> Polyhedron {
    poly.add_halfspace(h)
}

/// Halfspace description of `conv(vertices) + cone(rays)` via the polar
/// cone: the facets of the polyhedron are the extreme rays `(b, a)` of
/// `{(b, a) : aᵀv ≥ b ∀v, aᵀr ≥ 0 ∀r}`. Remaining lineality becomes an
/// opposite pair of halfspaces (an equality).
pub fn vrep_to_halfspaces(vrep: &VRep) -> Result<Vec<Halfspace>> {
    let dim = vrep
        .vertices
        .first()
        .or(vrep.rays.first())
        .ok_or_else(|| Error::Polyhedron("empty V-representation".into()))?
        .len();
    let tol = Tolerances::default_static().geometry;
    let mut cone = ConeDD::full(dim + 1, tol);
    for v in &vrep.vertices {
        let mut row = Vec::with_capacity(dim + 1);
        row.push(-1.0);
        row.extend_from_slice(v);
        cone.insert(row);
    }
    for r in &vrep.rays {
        let mut row = Vec::with_capacity(dim + 1);
        row.push(0.0);
        row.extend_from_slice(r);
        cone.insert(row);
    }
    let mut out = Vec::new();
    for ray in &cone.rays {
        let normal = ray.v[1..].to_vec();
        if inf_norm(&normal) <= tol {
            continue; // the trivial facet b ≤ 0
        }
        out.push(Halfspace::new(normal, ray.v[0]));
    }
    for l in &cone.lineality {
        let normal = l[1..].to_vec();
        if inf_norm(&normal) <= tol {
            continue;
        }
        out.push(Halfspace::new(normal.clone(), l[0]));
        out.push(Halfspace::new(
            normal.iter().map(|x| -x).collect(),
            -l[0],
        ));
    }
    if out.is_empty() {
        return Err(Error::Polyhedron(
            "V-representation spans the whole space".into(),
        ));
    }
    Ok(out)
}

/// Finitely generated cone `cone(generators)`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Cone {
    pub generators: Vec<Vec<f64>>,
}

impl Cone {
    pub fn new(generators: Vec<Vec<f64>>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Polyhedron("cone needs at least one generator".into()));
        }
        let dim = generators[0].len();
        for g in &generators {
            if g.len() != dim {
                return Err(Error::Polyhedron("generator dimensions differ".into()));
            }
            if inf_norm(g) == 0.0 {
                return Err(Error::Polyhedron("zero generator".into()));
            }
        }
        Ok(Cone { generators })
    }

    pub fn orthant(dim: usize) -> Self {
        Cone {
            generators: (0..dim)
                .map(|i| {
                    let mut e = vec![0.0; dim];
                    e[i] = 1.0;
                    e
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.generators[0].len()
    }

    /// Conic-combination membership, decided by LP feasibility.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        let k = self.generators.len();
        let mut lp = LinearProgram::new(k + 2 * self.dim());
        // Σ λ_i g_i + s⁺ − s⁻ = v, minimize 𝟏ᵀ(s⁺ + s⁻)
        for j in 0..self.dim() {
            let mut coeffs: Vec<(usize, f64)> =
                (0..k).map(|i| (i, self.generators[i][j])).collect();
            coeffs.push((k + j, 1.0));
            coeffs.push((k + self.dim() + j, -1.0));
            lp.add_row(coeffs, RowKind::Eq, v[j]);
        }
        for j in 0..2 * self.dim() {
            lp.set_objective(k + j, 1.0);
        }
        let sol = solve_lp(&lp);
        sol.status == LpStatus::Optimal && sol.value <= tol * (1.0 + inf_norm(v))
    }

    /// Whether `cone(generators) ⊇ ℝ^J₊` (required of ordering cones).
    pub fn contains_orthant(&self, tol: f64) -> bool {
        (0..self.dim()).all(|j| {
            let mut e = vec![0.0; self.dim()];
            e[j] = 1.0;
            self.contains(&e, tol)
        })
    }
}

/// Positive dual cone `C⁺ = {w : wᵀz ≥ 0 ∀z ∈ C}`, computed by double
/// description on the halfspaces `gᵀw ≥ 0`.
pub fn dual_cone(c: &Cone) -> Result<Cone> {
    let dim = c.dim();
    let tol = Tolerances::default_static().geometry;
    let mut dd = ConeDD::full(dim, tol);
    for g in &c.generators {
        dd.insert(g.clone());
    }
    let mut generators: Vec<Vec<f64>> = Vec::new();
    for r in &dd.rays {
        if inf_norm(&r.v) > 0.0 && !generators.iter().any(|e| same_direction(e, &r.v, tol)) {
            generators.push(r.v.clone());
        }
    }
    for l in &dd.lineality {
        for sign in [1.0, -1.0] {
            let d: Vec<f64> = l.iter().map(|x| sign * x).collect();
            if !generators.iter().any(|e| same_direction(e, &d, tol)) {
                generators.push(d);
            }
        }
    }
    if generators.is_empty() {
        return Err(Error::Polyhedron("C must be proper".into()));
    }
    generators.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Cone { generators })
}

/// Brute-force vertex enumeration: solve every J×J subsystem of active
/// hyperplanes and keep the feasible solutions. Reference oracle for
/// [`dual_description`]; exponential in the halfspace count.
pub fn enumerate_vertices_brute_force(dim: usize, halfspaces: &[Halfspace]) -> Vec<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};
    let n = halfspaces.len();
    let tol = 1e-7;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; dim];
    fn rec(
        halfspaces: &[Halfspace],
        dim: usize,
        n: usize,
        start: usize,
        depth: usize,
        idx: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
        tol: f64,
    ) {
        if depth == dim {
            let a = DMatrix::<f64>::from_fn(dim, dim, |r, c| halfspaces[idx[r]].normal[c]);
            let b = DVector::<f64>::from_fn(dim, |r, _| halfspaces[idx[r]].offset);
            if let Some(x) = a.lu().solve(&b) {
                let cand: Vec<f64> = x.iter().copied().collect();
                if cand.iter().all(|v| v.is_finite() && v.abs() < 1e9)
                    && halfspaces.iter().all(|h| h.contains(&cand, tol))
                    && !out.iter().any(|e| close(e, &cand, tol))
                {
                    out.push(cand);
                }
            }
            return;
        }
        for i in start..n {
            idx[depth] = i;
            rec(halfspaces, dim, n, i + 1, depth + 1, idx, out, tol);
        }
    }
    rec(halfspaces, dim, n, 0, 0, &mut idx, &mut out, tol);
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// Brute-force recession-direction enumeration: null directions of every
/// (J−1)-subset of normals, filtered by feasibility of the recession cone.
pub fn enumerate_rays_brute_force(dim: usize, halfspaces: &[Halfspace]) -> Vec<Vec<f64>> {
    use nalgebra::DMatrix;
    let n = halfspaces.len();
    let tol = 1e-7;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut consider = |d: Vec<f64>| {
        let mut d = d;
        normalize_inf(&mut d);
        if inf_norm(&d) == 0.0 {
            return;
        }
        if halfspaces.iter().all(|h| dot(&h.normal, &d) >= -tol)
            && !out.iter().any(|e| same_direction(e, &d, tol))
        {
            out.push(d);
        }
    };
    if dim == 2 {
        for h in halfspaces {
            consider(vec![h.normal[1], -h.normal[0]]);
            consider(vec![-h.normal[1], h.normal[0]]);
        }
    } else if dim == 3 {
        for i in 0..n {
            for j in (i + 1)..n {
                let a = &halfspaces[i].normal;
                let b = &halfspaces[j].normal;
                let cx = vec![
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ];
                consider(cx.clone());
                consider(cx.iter().map(|v| -v).collect());
            }
        }
        // Degenerate single-plane case (fewer than 2 independent normals).
        if n == 1 {
            let a = &halfspaces[0].normal;
            let m = DMatrix::<f64>::from_row_slice(1, 3, a);
            let svd = m.svd(false, true);
            if let Some(vt) = svd.v_t.as_ref() {
                for r in 1..3 {
                    let d: Vec<f64> = vt.row(r).iter().copied().collect();
                    consider(d.clone());
                    consider(d.iter().map(|v| -v).collect());
                }
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}
