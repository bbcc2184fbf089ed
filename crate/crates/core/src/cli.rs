//! Command-line front end: instance generation, solving, verification, and
//! export of geometry.
//!
//! All four subcommands read one JSON config file; the flags mirror config
//! keys and win over them. `solve` writes a result file with the collected
//! solution sets, all four approximations in both representations, and the
//! sandwich report; `verify` re-checks a result file from the instance and
//! result files alone (membership of every solution point, scalarization
//! values at every stored weight, sandwich containments); `export` renders
//! 2-objective results as SVG and 3-objective results as OFF meshes.
//!
//! Exit status is 0 iff the command succeeded and, for `solve`/`verify`,
//! all sandwich checks passed at the recorded ε.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benson::{
    solve_vector_problem, Approximations, PolyDescription, SandwichReport, SolveOptions,
    SolveStats, VectorSolveResult, WeakSolutionPoint,
};
use crate::benson::verify_sandwich;
use crate::bundle::BundleParams;
use crate::error::{Error, Result};
use crate::export::{render_dual_sandwich_svg, render_off, render_sandwich_svg};
use crate::model::{
    generate_portfolio, load_instance, save_instance, to_json, validate, PortfolioSpec,
    TwoStageProblem,
};
use crate::polyhedra::{Halfspace, VRep};
use crate::risk::{membership, RiskConfig, RiskMeasure};
use crate::scalarization::{cost_matrix, probabilities, solve_p1_direct};

#[derive(Parser)]
#[command(
    name = "vopt-risk",
    version,
    about = "Polyhedral inner/outer approximation of upper images of \
             risk-averse multi-objective two-stage stochastic programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a portfolio instance file from the config's portfolio block.
    Generate(CommonArgs),
    /// Solve an instance and write the result file.
    Solve(CommonArgs),
    /// Re-check a result file independently of how it was produced.
    Verify(CommonArgs),
    /// Render a result file as SVG (2 objectives) or OFF (3 objectives).
    Export(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration; flags below override its keys.
    #[arg(long)]
    config: PathBuf,
    /// Approximation tolerance ε.
    #[arg(long)]
    epsilon: Option<f64>,
    /// primal | dual
    #[arg(long)]
    algorithm: Option<String>,
    /// direct | bundle | auto
    #[arg(long)]
    backend: Option<String>,
    /// Worker threads (accepted for compatibility; the canonical solve path
    /// is sequential).
    #[arg(long)]
    threads: Option<usize>,
    /// Write one line per bundle iteration to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

/// JSON run configuration. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Instance file path (input of `solve`/`verify`, output of `generate`).
    pub instance: Option<PathBuf>,
    /// Result file path (output of `solve`, input of `verify`/`export`).
    pub output: Option<PathBuf>,
    pub risk: Option<RiskConfig>,
    pub epsilon: Option<f64>,
    pub algorithm: Option<String>,
    pub backend: Option<String>,
    pub bundle: Option<BundleOverrides>,
    pub max_cuts: Option<usize>,
    pub portfolio: Option<PortfolioSpec>,
    /// Overrides the portfolio block's seed.
    pub rng_seed: Option<u64>,
    pub plot: Option<bool>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleOverrides {
    pub prox_weight: Option<f64>,
    pub descent: Option<f64>,
    pub eps_stop: Option<f64>,
    pub max_iters: Option<usize>,
    pub single_cut: Option<bool>,
    pub cut_deletion: Option<bool>,
}

/// A polyhedron in the result file: V- and H-representations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rep {
    #[serde(rename = "V")]
    pub v: VRep,
    #[serde(rename = "H")]
    pub h: Vec<Halfspace>,
}

impl From<&PolyDescription> for Rep {
    fn from(d: &PolyDescription) -> Self {
        Rep {
            v: VRep {
                vertices: d.vertices.clone(),
                rays: d.rays.clone(),
            },
            h: d.halfspaces.clone(),
        }
    }
}

impl From<&Rep> for PolyDescription {
    fn from(r: &Rep) -> Self {
        PolyDescription {
            vertices: r.v.vertices.clone(),
            rays: r.v.rays.clone(),
            halfspaces: r.h.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightEntry {
    pub w: Vec<f64>,
    #[serde(rename = "P1")]
    pub p1: f64,
}

/// The `solve` artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub instance_hash: String,
    pub epsilon: f64,
    pub algorithm: String,
    pub backend: String,
    #[serde(rename = "Z")]
    pub z: Vec<WeakSolutionPoint>,
    #[serde(rename = "W")]
    pub w: Vec<WeightEntry>,
    #[serde(rename = "P_in")]
    pub p_in: Rep,
    #[serde(rename = "P_out")]
    pub p_out: Rep,
    #[serde(rename = "D_in")]
    pub d_in: Rep,
    #[serde(rename = "D_out")]
    pub d_out: Rep,
    pub stats: SolveStats,
    pub sandwich: SandwichReport,
    /// Set when the run completed but the sandwich checks did not pass.
    pub flagged: bool,
}

pub fn instance_hash(p: &TwoStageProblem) -> Result<String> {
    let canon = to_json(p)?;
    let mut h = Sha256::new();
    h.update(canon.as_bytes());
    Ok(format!("{:x}", h.finalize()))
}

fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))
}

fn merge(args: &CommonArgs, mut cfg: FileConfig) -> Result<FileConfig> {
    if let Some(e) = args.epsilon {
        cfg.epsilon = Some(e);
    }
    if let Some(a) = &args.algorithm {
        cfg.algorithm = Some(a.clone());
    }
    if let Some(b) = &args.backend {
        cfg.backend = Some(b.clone());
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
    }
    Ok(cfg)
}

fn solve_options(cfg: &FileConfig, trace: Option<&PathBuf>) -> Result<SolveOptions> {
    let mut opts = SolveOptions::default();
    if let Some(e) = cfg.epsilon {
        opts.epsilon = e;
    }
    if let Some(a) = &cfg.algorithm {
        opts.algorithm = a.parse()?;
    }
    if let Some(b) = &cfg.backend {
        opts.backend = b.parse()?;
    }
    if let Some(m) = cfg.max_cuts {
        opts.max_cuts = m;
    }
    let mut bp = BundleParams::default();
    if let Some(o) = &cfg.bundle {
        if let Some(v) = o.prox_weight {
            bp.prox_weight = v;
        }
        if let Some(v) = o.descent {
            bp.descent = v;
        }
        if let Some(v) = o.eps_stop {
            bp.eps_stop = v;
        }
        if let Some(v) = o.max_iters {
            bp.max_iters = v;
        }
        if let Some(v) = o.single_cut {
            bp.single_cut = v;
        }
        if let Some(v) = o.cut_deletion {
            bp.cut_deletion = v;
        }
    }
    bp.trace = trace.cloned();
    opts.bundle = bp;
    Ok(opts)
}

fn require<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T> {
    field
        .as_ref()
        .ok_or_else(|| Error::Config(format!("config key '{name}' is required here")))
}

/// Build the `solve` artifact from a finished run.
pub fn result_file(p: &TwoStageProblem, res: &VectorSolveResult) -> Result<ResultFile> {
    let report = verify_sandwich(&res.approx, res.epsilon);
    Ok(ResultFile {
        instance_hash: instance_hash(p)?,
        epsilon: res.epsilon,
        algorithm: res.algorithm.to_string(),
        backend: res.backend.to_string(),
        z: res.solution_points.clone(),
        w: res
            .weights
            .iter()
            .zip(&res.weight_values)
            .map(|(w, &p1)| WeightEntry { w: w.clone(), p1 })
            .collect(),
        p_in: (&res.approx.inner).into(),
        p_out: (&res.approx.outer).into(),
        d_in: (&res.approx.dual_inner).into(),
        d_out: (&res.approx.dual_outer).into(),
        stats: res.stats.clone(),
        flagged: !report.passed(),
        sandwich: report,
    })
}

fn cmd_generate(cfg: &FileConfig) -> Result<i32> {
    let mut spec: PortfolioSpec = require(&cfg.portfolio, "portfolio")?.clone();
    if let Some(seed) = cfg.rng_seed {
        spec.rng_seed = seed;
    }
    let out = require(&cfg.instance, "instance")?;
    let p = generate_portfolio(&spec)?;
    let report = validate(&p);
    if !report.is_valid() {
        return Err(Error::Config(format!(
            "generated instance failed validation: {:?}",
            report.violations
        )));
    }
    save_instance(&p, out)?;
    println!(
        "wrote instance {} (J={} K={} L={} M={} N={} I={})",
        out.display(),
        p.dims.j,
        p.dims.k,
        p.dims.l,
        p.dims.m,
        p.dims.n,
        p.dims.i
    );
    Ok(0)
}

fn cmd_solve(cfg: &FileConfig, trace: Option<&PathBuf>) -> Result<i32> {
    let instance = require(&cfg.instance, "instance")?;
    let out = require(&cfg.output, "output")?;
    let risk = require(&cfg.risk, "risk")?.build()?;
    let opts = solve_options(cfg, trace)?;
    let p = load_instance(instance)?;
    let res = solve_vector_problem(&p, &risk, &opts)?;
    let file = result_file(&p, &res)?;
    std::fs::write(out, serde_json::to_string_pretty(&file)?)?;
    println!(
        "solved {}: {} algorithm, {} backend, epsilon {}",
        instance.display(),
        file.algorithm,
        file.backend,
        file.epsilon
    );
    println!(
        "  {} solution points, {} weights, {} cuts, {} P1 + {} P2 solves, {} ms",
        file.z.len(),
        file.w.len(),
        file.stats.cuts,
        file.stats.p1_solves,
        file.stats.p2_solves,
        file.stats.wall_time_ms
    );
    print_report(&file.sandwich);
    println!("wrote result {}", out.display());
    Ok(if file.flagged { 1 } else { 0 })
}

fn print_report(r: &SandwichReport) {
    let line = |name: &str, ok: bool, margin: f64| {
        println!(
            "  {name}: {} (worst margin {margin:.3e})",
            if ok { "ok" } else { "VIOLATED" }
        );
    };
    line("inner within outer", r.inner_in_outer, r.worst_margins[0]);
    line(
        "outer + eps*1 within inner",
        r.outer_shifted_in_inner,
        r.worst_margins[1],
    );
    line(
        "dual inner within dual outer",
        r.dual_inner_in_outer,
        r.worst_margins[2],
    );
    line(
        "dual outer - eps*e_J within dual inner",
        r.dual_outer_shifted_in_inner,
        r.worst_margins[3],
    );
}

fn load_result(path: &Path) -> Result<ResultFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read result {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad result file: {e}")))
}

/// Independent re-check of a result file. Returns the list of failed checks.
pub fn verify_result(
    p: &TwoStageProblem,
    r: &RiskMeasure,
    file: &ResultFile,
) -> Result<Vec<String>> {
    let mut failures = Vec::new();
    let probs = probabilities(p);
    let scale = 1.0
        + file
            .z
            .iter()
            .flat_map(|pt| &pt.z)
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-6 * scale;

    // (i) the result matches the instance.
    if instance_hash(p)? != file.instance_hash {
        failures.push("(i) instance hash mismatch".into());
    }

    // (ii) every stored solution point is feasible for its own decisions:
    // z ∈ R(Cx + Qy).
    for (k, pt) in file.z.iter().enumerate() {
        let u = cost_matrix(p, &pt.x, &pt.y);
        if !membership(r, &u, &probs, &pt.z) {
            failures.push(format!("(ii) point {k}: z outside R(u) at its decisions"));
        }
    }

    // (iii) stored scalarization values are valid lower bounds of P1(w)
    // (and equal for the direct backend).
    let direct = file.backend == "direct";
    for (k, e) in file.w.iter().enumerate() {
        let total: f64 = e.w.iter().sum();
        if total <= 1e-12 {
            failures.push(format!("(iii) weight {k} has no mass"));
            continue;
        }
        let wn: Vec<f64> = e.w.iter().map(|x| x / total).collect();
        let exact = solve_p1_direct(p, r, &wn)?.value * total;
        if e.p1 > exact + tol {
            failures.push(format!(
                "(iii) weight {k}: stored value {} exceeds P1 {exact}",
                e.p1
            ));
        } else if direct && (e.p1 - exact).abs() > tol {
            failures.push(format!(
                "(iii) weight {k}: stored value {} differs from P1 {exact}",
                e.p1
            ));
        }
    }

    // (iv) sandwich containments of the stored polyhedra at the stored ε,
    // plus consistency of the stored points with the outer approximation.
    let approx = Approximations {
        inner: (&file.p_in).into(),
        outer: (&file.p_out).into(),
        dual_inner: (&file.d_in).into(),
        dual_outer: (&file.d_out).into(),
    };
    let report = verify_sandwich(&approx, file.epsilon);
    if !report.passed() {
        failures.push(format!(
            "(iv) sandwich checks failed, margins {:?}",
            report.worst_margins
        ));
    }
    for (k, pt) in file.z.iter().enumerate() {
        if !approx
            .outer
            .halfspaces
            .iter()
            .all(|h| h.contains(&pt.z, tol))
        {
            failures.push(format!("(iv) point {k}: z outside the outer approximation"));
        }
    }
    Ok(failures)
}

fn cmd_verify(cfg: &FileConfig) -> Result<i32> {
    let instance = require(&cfg.instance, "instance")?;
    let out = require(&cfg.output, "output")?;
    let risk = require(&cfg.risk, "risk")?.build()?;
    let p = load_instance(instance)?;
    let file = load_result(out)?;
    let failures = verify_result(&p, &risk, &file)?;
    print_report(&file.sandwich);
    if failures.is_empty() {
        println!(
            "verified {} against {}: all checks passed",
            out.display(),
            instance.display()
        );
        Ok(0)
    } else {
        for f in &failures {
            println!("FAILED {f}");
        }
        Ok(1)
    }
}

fn cmd_export(cfg: &FileConfig) -> Result<i32> {
    let out = require(&cfg.output, "output")?;
    let file = load_result(out)?;
    let approx = Approximations {
        inner: (&file.p_in).into(),
        outer: (&file.p_out).into(),
        dual_inner: (&file.d_in).into(),
        dual_outer: (&file.d_out).into(),
    };
    let dim = approx
        .inner
        .vertices
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::Format("result has no inner vertices".into()))?;
    let stem = out.with_extension("");
    let stem = stem.to_string_lossy();
    match dim {
        2 => {
            let zs: Vec<Vec<f64>> = file.z.iter().map(|pt| pt.z.clone()).collect();
            let primal = PathBuf::from(format!("{stem}_primal.svg"));
            std::fs::write(&primal, render_sandwich_svg(&approx, &zs)?)?;
            let dual = PathBuf::from(format!("{stem}_dual.svg"));
            std::fs::write(&dual, render_dual_sandwich_svg(&approx)?)?;
            println!("wrote {} and {}", primal.display(), dual.display());
        }
        3 => {
            for (name, desc) in [
                ("p_in", &approx.inner),
                ("p_out", &approx.outer),
                ("d_in", &approx.dual_inner),
                ("d_out", &approx.dual_outer),
            ] {
                let path = PathBuf::from(format!("{stem}_{name}.off"));
                std::fs::write(&path, render_off(desc)?)?;
                println!("wrote {}", path.display());
            }
        }
        other => {
            return Err(Error::Format(format!(
                "export supports 2 or 3 objectives, result has {other}"
            )))
        }
    }
    Ok(0)
}

/// Parse argv, run the selected command, and return the process exit code.
/// Failures print a machine-readable JSON error record to stderr.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, fn(&FileConfig, Option<&PathBuf>) -> Result<i32>) =
        match &cli.command {
            Command::Generate(a) => (a, |c, _| cmd_generate(c)),
            Command::Solve(a) => (a, cmd_solve),
            Command::Verify(a) => (a, |c, _| cmd_verify(c)),
            Command::Export(a) => (a, |c, _| cmd_export(c)),
        };
    let outcome = load_config(&args.config)
        .and_then(|cfg| merge(args, cfg))
        .and_then(|cfg| run(&cfg, args.trace.as_ref()));
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string() })
            );
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TwoStageProblem;
    use crate::polyhedra::Cone;
    use crate::scalarization::Backend;

    fn toy_risk() -> RiskMeasure {
        RiskMeasure::cvar(vec![0.5, 0.5], Cone::orthant(2)).unwrap()
    }

    fn toy_result() -> (TwoStageProblem, ResultFile) {
        let p = TwoStageProblem::toy_two_scenario();
        let opts = SolveOptions {
            epsilon: 1e-4,
            backend: Backend::Direct,
            ..SolveOptions::default()
        };
        let res = solve_vector_problem(&p, &toy_risk(), &opts).unwrap();
        let file = result_file(&p, &res).unwrap();
        (p, file)
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<FileConfig>("{\"nope\": 1}").unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn result_roundtrips_and_verifies() {
        let (p, file) = toy_result();
        assert!(!file.flagged);
        let text = serde_json::to_string(&file).unwrap();
        let back: ResultFile = serde_json::from_str(&text).unwrap();
        let failures = verify_result(&p, &toy_risk(), &back).unwrap();
        assert!(failures.is_empty(), "{failures:?}");
    }

    #[test]
    fn verify_catches_tampered_point() {
        let (p, mut file) = toy_result();
        file.z[0].z[0] -= 0.5;
        let failures = verify_result(&p, &toy_risk(), &file).unwrap();
        assert!(
            failures.iter().any(|f| f.starts_with("(ii)"))
                || failures.iter().any(|f| f.starts_with("(iv)")),
            "{failures:?}"
        );
    }

    #[test]
    fn verify_catches_wrong_instance() {
        let (_, file) = toy_result();
        let mut other = TwoStageProblem::toy_two_scenario();
        other.b[0] += 1.0;
        let failures = verify_result(&other, &toy_risk(), &file).unwrap();
        assert!(failures.iter().any(|f| f.starts_with("(i)")), "{failures:?}");
    }

    #[test]
    fn verify_catches_inflated_weight_value() {
        let (p, mut file) = toy_result();
        file.w[0].p1 += 0.5;
        let failures = verify_result(&p, &toy_risk(), &file).unwrap();
        assert!(
            failures.iter().any(|f| f.starts_with("(iii)")),
            "{failures:?}"
        );
    }
}
