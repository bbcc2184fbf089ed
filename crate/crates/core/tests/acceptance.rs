//! Acceptance gate: eight end-to-end checks, one per release criterion.
//! Each test prints a single `PASS`/`FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`) and asserts the same
//! condition, so the suite is green exactly when every line says `PASS`.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use vopt_risk::benson::{
    solve_vector_problem, verify_sandwich, Algorithm, SolveOptions, VectorSolveResult,
};
use vopt_risk::bundle::{run_bundle_p1, run_bundle_p2, BundleParams};
use vopt_risk::model::{generate_portfolio, PortfolioSpec, TwoStageProblem};
use vopt_risk::opt_kernel::lp::{solve_lp, LinearProgram, LpStatus, RowKind};
use vopt_risk::opt_kernel::qp::{solve_qp, RegularizedQP, SparseCon};
use vopt_risk::polyhedra::{
    enumerate_rays_brute_force, enumerate_vertices_brute_force, Cone, Halfspace, Polyhedron,
};
use vopt_risk::risk::{
    beta_tilde_subgradient, cvar_vector, penalty_beta, penalty_beta_tilde, scalarize_phi,
    ProbVector, RiskMeasure,
};
use vopt_risk::scalarization::{solve_p1_direct, solve_p2_direct};

fn report(name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "acceptance {name} failed: {detail}");
}

fn simplex_weight(rng: &mut ChaCha12Rng, j: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..j).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn opts(epsilon: f64, algorithm: Algorithm) -> SolveOptions {
    SolveOptions {
        epsilon,
        algorithm,
        ..SolveOptions::default()
    }
}

fn desk_cvar_50() -> (TwoStageProblem, RiskMeasure) {
    let p = generate_portfolio(&PortfolioSpec::two_asset(50, 1234)).unwrap();
    let r = RiskMeasure::cvar(vec![0.3, 0.3], Cone::orthant(2)).unwrap();
    (p, r)
}

/// 1. Exactness on the forced-solution two-scenario instance: every
/// algorithm/backend combination recovers the single vertex `(3, 3)` and
/// weighted-sum values of exactly 3, within 1e-6, in under five seconds.
#[test]
fn criterion_1_tiny_instance_exactness() {
    let start = Instant::now();
    let p = TwoStageProblem::toy_two_scenario();
    let r = RiskMeasure::cvar(vec![0.5, 0.5], Cone::orthant(2)).unwrap();

    let mut ok = true;
    let mut detail = String::new();
    for algorithm in [Algorithm::Primal, Algorithm::Dual] {
        for backend in [
            vopt_risk::scalarization::Backend::Direct,
            vopt_risk::scalarization::Backend::Bundle,
        ] {
            let mut o = opts(1e-4, algorithm);
            o.backend = backend;
            let res = solve_vector_problem(&p, &r, &o).unwrap();
            let verts = &res.approx.outer.vertices;
            let vertex_ok = verts.len() == 1
                && (verts[0][0] - 3.0).abs() < 1e-6
                && (verts[0][1] - 3.0).abs() < 1e-6;
            if !vertex_ok {
                ok = false;
                detail = format!("{algorithm:?}/{backend:?} vertices {verts:?}");
            }
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for k in 0..20 {
        let w = simplex_weight(&mut rng, 2);
        let direct = solve_p1_direct(&p, &r, &w).unwrap().value;
        let bundle = run_bundle_p1(&p, &r, &w, &BundleParams::default()).unwrap();
        if (direct - 3.0).abs() >= 1e-6 || (bundle.value - 3.0).abs() >= 1e-6 {
            ok = false;
            detail = format!("weight {k}: direct {direct}, bundle {}", bundle.value);
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 5.0 {
        ok = false;
        detail = format!("runtime {elapsed:.1}s >= 5s");
    }
    if detail.is_empty() {
        detail = format!("vertex (3,3) and 20 weighted sums exact, {elapsed:.2}s");
    }
    report("1 tiny-instance exactness", ok, &detail);
}

/// 2. Backend equivalence: decomposed-dual and direct scalarizations agree
/// to 1e-4 relative on generated portfolio instances with 10, 50, and 100
/// scenarios, three seeds each, for 20 weights and 10 reference points;
/// the whole sweep finishes inside ten minutes.
#[test]
fn criterion_2_backend_equivalence() {
    let start = Instant::now();
    let r = RiskMeasure::cvar(vec![0.3, 0.3], Cone::orthant(2)).unwrap();
    let params = BundleParams::default();

    let mut worst_p1: f64 = 0.0;
    let mut worst_p2: f64 = 0.0;
    let mut ok = true;
    let mut detail = String::new();
    for &scenarios in &[10usize, 50, 100] {
        for seed in [3u64, 5, 8] {
            let p = generate_portfolio(&PortfolioSpec::two_asset(scenarios, seed)).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xACCE);
            let mut anchor = None;
            for k in 0..20 {
                let w = simplex_weight(&mut rng, 2);
                let direct = solve_p1_direct(&p, &r, &w).unwrap();
                let bundle = run_bundle_p1(&p, &r, &w, &params).unwrap();
                let err = (bundle.value - direct.value).abs() / (1.0 + direct.value.abs());
                worst_p1 = worst_p1.max(err);
                if err > 1e-4 {
                    ok = false;
                    detail = format!("I={scenarios} seed={seed} weight {k}: rel err {err:.2e}");
                }
                if anchor.is_none() {
                    anchor = direct.z;
                }
            }
            let anchor = anchor.unwrap();
            for k in 0..10 {
                let v: Vec<f64> = anchor
                    .iter()
                    .map(|z| z - rng.gen_range(0.05..0.5))
                    .collect();
                let direct = solve_p2_direct(&p, &r, &v).unwrap();
                let bundle = run_bundle_p2(&p, &r, &v, &params).unwrap();
                let err = (bundle.value - direct.value).abs() / (1.0 + direct.value.abs());
                worst_p2 = worst_p2.max(err);
                if err > 1e-4 {
                    ok = false;
                    detail = format!("I={scenarios} seed={seed} point {k}: rel err {err:.2e}");
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 600.0 {
        ok = false;
        detail = format!("runtime {elapsed:.0}s >= 600s");
    }
    if detail.is_empty() {
        detail = format!(
            "worst rel err P1 {worst_p1:.2e}, P2 {worst_p2:.2e}, {elapsed:.0}s"
        );
    }
    report("2 backend equivalence", ok, &detail);
}

/// 3. Recovery convergence on the fixed 50-scenario CVaR instance: at the
/// tightest stopping gap the nonanticipativity residual and the recovered
/// objective error are below 1e-3, and residuals do not grow (beyond a
/// factor-3 noise allowance) as the stopping gap tightens.
#[test]
fn criterion_3_recovery_convergence() {
    let (p, r) = desk_cvar_50();
    let w = [0.5, 0.5];
    let direct = solve_p1_direct(&p, &r, &w).unwrap().value;

    let mut residuals = Vec::new();
    let mut final_obj_err = f64::NAN;
    for &eps_stop in &[1e-3, 1e-4, 1e-5, 1e-6] {
        let params = BundleParams {
            eps_stop,
            ..BundleParams::default()
        };
        let res = run_bundle_p1(&p, &r, &w, &params).unwrap();
        residuals.push(res.nonanticipativity);
        if eps_stop == 1e-6 {
            final_obj_err = (res.primal_value - direct).abs();
        }
    }
    let final_res = *residuals.last().unwrap();
    let monotone = residuals
        .windows(2)
        .all(|pair| pair[1] <= 3.0 * pair[0] + 1e-12);
    let ok = final_res <= 1e-3 && final_obj_err <= 1e-3 && monotone;
    report(
        "3 recovery convergence",
        ok,
        &format!(
            "residuals {residuals:?}, objective err {final_obj_err:.2e}, monotone {monotone}"
        ),
    );
}

/// 4. Supporting-weight recovery: the decomposed dual value at the
/// recovered weight is within ten stopping gaps of the direct entry-step
/// value at ten reference points of the 50-scenario instance.
#[test]
fn criterion_4_gamma_recovery() {
    let (p, r) = desk_cvar_50();
    let eps_stop = 1e-6;
    let params = BundleParams {
        eps_stop,
        ..BundleParams::default()
    };
    let anchor = solve_p1_direct(&p, &r, &[0.5, 0.5]).unwrap().z.unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut gamma_ok = true;
    for _ in 0..10 {
        let v: Vec<f64> = anchor
            .iter()
            .map(|z| z - rng.gen_range(0.05..0.5))
            .collect();
        let direct = solve_p2_direct(&p, &r, &v).unwrap();
        let bundle = run_bundle_p2(&p, &r, &v, &params).unwrap();
        worst = worst.max((bundle.value - direct.value).abs());
        let g = bundle.gamma.as_deref().unwrap_or(&[]);
        if g.len() != 2 || g.iter().any(|&x| x < -1e-9) {
            gamma_ok = false;
        }
    }
    let ok = worst <= 10.0 * eps_stop && gamma_ok;
    report(
        "4 supporting-weight recovery",
        ok,
        &format!("worst |dual − direct| {worst:.2e} vs budget {:.0e}", 10.0 * eps_stop),
    );
}

/// 5. Sandwich certificates: the inner/outer containment checks pass on
/// the tiny instance (all four algorithm/backend combinations), a CVaR
/// portfolio instance, and an entropic two-asset instance with a
/// non-orthant ordering cone at ε ∈ {0.1, 0.05}; the dual loop must finish
/// on the entropic instance (the primal loop may fall back to the direct
/// backend internally).
#[test]
fn criterion_5_sandwich_everywhere() {
    let mut checked = 0usize;
    let mut ok = true;
    let mut detail = String::new();
    let mut check = |label: &str, res: &VectorSolveResult| {
        let rep = verify_sandwich(&res.approx, res.epsilon);
        checked += 1;
        if !rep.passed() {
            ok = false;
            detail = format!("{label}: margins {:?}", rep.worst_margins);
        }
    };

    let toy = TwoStageProblem::toy_two_scenario();
    let rc = RiskMeasure::cvar(vec![0.5, 0.5], Cone::orthant(2)).unwrap();
    for algorithm in [Algorithm::Primal, Algorithm::Dual] {
        for backend in [
            vopt_risk::scalarization::Backend::Direct,
            vopt_risk::scalarization::Backend::Bundle,
        ] {
            let mut o = opts(1e-4, algorithm);
            o.backend = backend;
            let res = solve_vector_problem(&toy, &rc, &o).unwrap();
            check(&format!("toy {algorithm:?}/{backend:?}"), &res);
        }
    }

    let p = generate_portfolio(&PortfolioSpec::two_asset(10, 3)).unwrap();
    let r = RiskMeasure::cvar(vec![0.3, 0.3], Cone::orthant(2)).unwrap();
    for algorithm in [Algorithm::Primal, Algorithm::Dual] {
        let res = solve_vector_problem(&p, &r, &opts(1e-2, algorithm)).unwrap();
        check(&format!("portfolio {algorithm:?}"), &res);
    }

    let pe = generate_portfolio(&PortfolioSpec::two_asset(8, 21)).unwrap();
    let cone = Cone::new(vec![vec![-1.0, 2.0], vec![2.0, -1.0]]).unwrap();
    let re = RiskMeasure::entropic(vec![0.1, 0.1], cone).unwrap();
    for &eps in &[0.1, 0.05] {
        for algorithm in [Algorithm::Dual, Algorithm::Primal] {
            let res = solve_vector_problem(&pe, &re, &opts(eps, algorithm)).unwrap();
            check(&format!("entropic skewed-cone {algorithm:?} ε={eps}"), &res);
        }
    }

    if detail.is_empty() {
        detail = format!("{checked} solves certified");
    }
    report("5 sandwich certificates", ok, &detail);
}

/// 6. Refinement trends: on a fixed-seed two-asset CVaR instance, the
/// final outer vertex count and the total scalarization-solve count are
/// nondecreasing as ε shrinks through 1e-2, 1e-3, 1e-4.
#[test]
fn criterion_6_refinement_trends() {
    let p = generate_portfolio(&PortfolioSpec::two_asset(6, 11)).unwrap();
    let r = RiskMeasure::cvar(vec![0.3, 0.3], Cone::orthant(2)).unwrap();
    let mut counts = Vec::new();
    for &eps in &[1e-2, 1e-3, 1e-4] {
        let res = solve_vector_problem(&p, &r, &opts(eps, Algorithm::Primal)).unwrap();
        counts.push((
            res.stats.p1_solves + res.stats.p2_solves,
            res.approx.outer.vertices.len(),
        ));
    }
    let ok = counts.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
    report(
        "6 refinement trends",
        ok,
        &format!("(solves, vertices) per ε: {counts:?}"),
    );
}

/// 7. Kernel oracles: simplex strong duality on 200 random LPs, KKT
/// residuals on 100 random proximal masters, double-description vertex
/// enumeration against the brute-force basis oracle on 200 random 2D/3D
/// polyhedra, and the finite-measure penalty gradient against central
/// finite differences at 100 random interior points.
#[test]
fn criterion_7_kernel_oracles() {
    let mut rng = ChaCha12Rng::seed_from_u64(2024);

    // Random feasible bounded LPs: x ≥ 0, positive costs, rows anchored at
    // a known feasible point.
    let mut worst_lp: f64 = 0.0;
    for trial in 0..200 {
        let n = rng.gen_range(2..6);
        let m = rng.gen_range(1..5);
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let mut lp = LinearProgram::new(n);
        for j in 0..n {
            lp.set_objective(j, rng.gen_range(0.1..2.0));
        }
        for _ in 0..m {
            let coeffs: Vec<(usize, f64)> =
                (0..n).map(|j| (j, rng.gen_range(-1.0..2.0))).collect();
            let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
            lp.add_row(coeffs, RowKind::Ge, act - rng.gen_range(0.0..1.0));
        }
        let sol = solve_lp(&lp);
        assert_eq!(sol.status, LpStatus::Optimal, "trial {trial}");
        // Strong duality: with zero lower bounds the dual value is λᵀrhs.
        let dual_value: f64 = sol
            .row_duals
            .iter()
            .zip(&lp.rows)
            .map(|(l, row)| l * row.rhs)
            .sum();
        let scale = 1.0 + sol.value.abs();
        worst_lp = worst_lp
            .max((sol.value - dual_value).abs() / scale)
            .max(sol.kkt_residual(&lp));
    }

    // Random proximal masters: maximize ϑ − Σ ϱ_j (u_j − ū_j)² subject to
    // cutting planes ϑ ≤ f^ℓ + g^ℓᵀu.
    let mut worst_qp: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..8);
        let cuts = rng.gen_range(2..10);
        let mut qp = RegularizedQP::new(n + 1);
        for j in 0..n {
            qp.prox_weight[j] = rng.gen_range(0.5..2.0);
            qp.center[j] = rng.gen_range(-1.0..1.0);
        }
        qp.linear[n] = 1.0;
        for _ in 0..cuts {
            let mut coeffs: Vec<(usize, f64)> =
                (0..n).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
            coeffs.push((n, 1.0));
            qp.le.push(SparseCon::new(coeffs, rng.gen_range(-1.0..1.0)));
        }
        let sol = solve_qp(&qp).unwrap();
        worst_qp = worst_qp.max(sol.kkt_residual(&qp));
    }

    // Vertex enumeration versus the brute-force active-set oracle.
    let mut worst_match = true;
    for trial in 0..200 {
        let dim = if trial % 2 == 0 { 2 } else { 3 };
        let m = rng.gen_range(dim + 1..dim + 6);
        let mut hs = Vec::new();
        for _ in 0..m {
            let normal: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if normal.iter().map(|v| v * v).sum::<f64>() < 1e-4 {
                continue;
            }
            hs.push(Halfspace::new(normal, -rng.gen_range(0.2..1.5)));
        }
        // Bounding box keeps both enumerations finite.
        for j in 0..dim {
            let mut lo = vec![0.0; dim];
            lo[j] = 1.0;
            hs.push(Halfspace::new(lo.clone(), -5.0));
            lo[j] = -1.0;
            hs.push(Halfspace::new(lo, -5.0));
        }
        let vrep = Polyhedron::from_halfspaces(dim, hs.clone())
            .dual_description()
            .unwrap();
        let brute = enumerate_vertices_brute_force(dim, &hs);
        let rays = enumerate_rays_brute_force(dim, &hs);
        let close = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6)
        };
        let same = vrep.vertices.len() == brute.len()
            && vrep
                .vertices
                .iter()
                .all(|v| brute.iter().any(|b| close(v, b)))
            && vrep.rays.is_empty()
            && rays.is_empty();
        if !same {
            worst_match = false;
        }
    }

    // Finite-measure penalty gradient versus central differences.
    let p = vec![0.25; 4];
    let r = RiskMeasure::entropic(vec![0.8, 1.5], Cone::orthant(2)).unwrap();
    let mut worst_grad: f64 = 0.0;
    for _ in 0..100 {
        let m = ProbVector::finite(
            (0..2)
                .map(|_| (0..4).map(|_| rng.gen_range(0.05..1.2)).collect())
                .collect(),
        )
        .unwrap();
        let grad = beta_tilde_subgradient(&r, &m, &p).unwrap();
        let h = 1e-5;
        for j in 0..2 {
            for i in 0..4 {
                let mut up = m.clone();
                up.weights[j][i] += h;
                let mut dn = m.clone();
                dn.weights[j][i] -= h;
                let fd = (penalty_beta_tilde(&r, &up, &p) - penalty_beta_tilde(&r, &dn, &p))
                    / (2.0 * h);
                // `beta_tilde_subgradient` returns an element of `∂(−β̃)`.
                let rel = (-grad[j][i] - fd).abs() / (1.0 + fd.abs());
                worst_grad = worst_grad.max(rel);
            }
        }
    }

    let ok = worst_lp <= 1e-8 && worst_qp <= 1e-7 && worst_match && worst_grad <= 1e-5;
    report(
        "7 kernel oracles",
        ok,
        &format!(
            "LP duality {worst_lp:.1e}, QP KKT {worst_qp:.1e}, vertex match {worst_match}, gradient {worst_grad:.1e}"
        ),
    );
}

/// 8. Risk-measure axioms, 1000 randomized trials each: translativity,
/// monotonicity, CVaR positive homogeneity, and the finite-measure /
/// probability-measure penalty conversion identities.
#[test]
fn criterion_8_risk_axioms() {
    let mut rng = ChaCha12Rng::seed_from_u64(515);
    let i = 3usize;
    let p = vec![1.0 / i as f64; i];
    let cone = Cone::orthant(2);
    let rc = RiskMeasure::cvar(vec![0.4, 0.6], cone.clone()).unwrap();
    let re = RiskMeasure::entropic(vec![0.7, 1.3], cone).unwrap();

    let mut worst_trans: f64 = 0.0;
    let mut worst_mono: f64 = 0.0;
    let mut worst_hom: f64 = 0.0;
    let mut worst_conv: f64 = 0.0;
    for trial in 0..1000 {
        let u: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..i).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let w = simplex_weight(&mut rng, 2);
        let r = if trial % 2 == 0 { &rc } else { &re };

        // Translativity: adding the deterministic vector t shifts the
        // scalarization by wᵀt.
        let t: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted: Vec<Vec<f64>> = u
            .iter()
            .zip(&t)
            .map(|(row, &tj)| row.iter().map(|x| x + tj).collect())
            .collect();
        let base = scalarize_phi(r, &w, &u, &p).value;
        let moved = scalarize_phi(r, &w, &shifted, &p).value;
        let wt: f64 = w.iter().zip(&t).map(|(a, b)| a * b).sum();
        worst_trans = worst_trans.max((moved - base - wt).abs());

        // Monotonicity: componentwise larger costs give a larger value.
        let bigger: Vec<Vec<f64>> = u
            .iter()
            .map(|row| row.iter().map(|x| x + rng.gen_range(0.0..1.0)).collect())
            .collect();
        let up = scalarize_phi(r, &w, &bigger, &p).value;
        worst_mono = worst_mono.max((base - up).max(0.0));

        // Positive homogeneity of CVaR.
        let lam = rng.gen_range(0.1..3.0);
        let scaled: Vec<Vec<f64>> = u
            .iter()
            .map(|row| row.iter().map(|x| lam * x).collect())
            .collect();
        let q = cvar_vector(&u, &p, &[0.4, 0.6]);
        let ql = cvar_vector(&scaled, &p, &[0.4, 0.6]);
        for j in 0..2 {
            worst_hom = worst_hom.max((ql[j] - lam * q[j]).abs() / (1.0 + q[j].abs()));
        }

        // Conversion identity: β̃ at m = γ ∘ μ equals β(μ, γ), and the
        // masses of m recover γ exactly.
        let mu = ProbVector::probability(
            (0..2)
                .map(|_| (0..i).map(|_| rng.gen_range(0.05..1.0)).collect())
                .collect(),
        )
        .unwrap();
        let gamma = [rng.gen_range(0.1..1.5), rng.gen_range(0.1..1.5)];
        let m = ProbVector::finite(
            mu.weights
                .iter()
                .zip(&gamma)
                .map(|(row, &g)| row.iter().map(|&v| g * v).collect())
                .collect(),
        )
        .unwrap();
        let bt = penalty_beta_tilde(r, &m, &p);
        let bb = penalty_beta(r, &mu, &p, &gamma);
        if bb.is_finite() {
            worst_conv = worst_conv.max((bt - bb).abs() / (1.0 + bb.abs()));
        } else if bt.is_finite() {
            worst_conv = f64::INFINITY;
        }
        for (mass, &g) in m.masses().iter().zip(&gamma) {
            worst_conv = worst_conv.max((mass - g).abs());
        }
    }

    let ok = worst_trans <= 1e-9
        && worst_mono <= 1e-9
        && worst_hom <= 1e-9
        && worst_conv <= 1e-8;
    report(
        "8 risk-measure axioms",
        ok,
        &format!(
            "translativity {worst_trans:.1e}, monotonicity {worst_mono:.1e}, homogeneity {worst_hom:.1e}, conversion {worst_conv:.1e}"
        ),
    );
}
