//! Two-stage stochastic program data, validation, the portfolio instance
//! generator, and instance persistence.
//!
//! A [`TwoStageProblem`] is
//!
//! ```text
//!     first stage:   A x = b,  x ≥ 0                     (x ∈ ℝ^M)
//!     scenario i:    T_i x + W_i y_i = h_i,  y_i ≥ 0     (y_i ∈ ℝ^N)
//!     cost vector:   u_i = C x + Q_i y_i ∈ ℝ^J
//! ```
//!
//! over a finite probability space with `I ≥ 2` scenarios. The per-scenario
//! feasible region `𝓕_i = {(x, y) : A x = b, T_i x + W_i y = h_i, x, y ≥ 0}`
//! must be nonempty and bounded; [`validate`] checks this by minimizing and
//! maximizing every coordinate with the LP kernel.

use crate::error::{Error, Result};
use crate::opt_kernel::{solve_lp, LinearProgram, LpStatus, RowKind};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "I")]
    pub i: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(rename = "p")]
    pub probability: f64,
    /// L×M
    #[serde(rename = "T")]
    pub t: Matrix,
    /// L×N
    #[serde(rename = "W")]
    pub w: Matrix,
    /// L
    pub h: Vec<f64>,
    /// J×N second-stage cost selector
    #[serde(rename = "Q")]
    pub q: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageProblem {
    pub dims: Dims,
    /// K×M
    #[serde(rename = "A")]
    pub a: Matrix,
    pub b: Vec<f64>,
    /// J×M deterministic first-stage cost
    #[serde(rename = "C")]
    pub c: Matrix,
    pub scenarios: Vec<Scenario>,
}

impl TwoStageProblem {
    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Cost realization `u_i = C x + Q_i y` for scenario `i`.
    pub fn scenario_cost(&self, i: usize, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let sc = self
            .scenarios
            .get(i)
            .ok_or(Error::IndexOutOfRange {
                index: i,
                limit: self.scenarios.len(),
            })?;
        Ok((0..self.dims.j)
            .map(|r| {
                let cx: f64 = self.c[r].iter().zip(x).map(|(c, v)| c * v).sum();
                let qy: f64 = sc.q[r].iter().zip(y).map(|(q, v)| q * v).sum();
                cx + qy
            })
            .collect())
    }

    /// Two-scenario toy instance with a fully forced solution chain:
    /// `x = 1 ⇒ y_i = 1`, cost realizations `u_1 = (1,3)`, `u_2 = (3,1)`.
    pub fn toy_two_scenario() -> TwoStageProblem {
        TwoStageProblem {
            dims: Dims {
                j: 2,
                k: 1,
                l: 1,
                m: 1,
                n: 1,
                i: 2,
            },
            a: vec![vec![1.0]],
            b: vec![1.0],
            c: vec![vec![0.0], vec![0.0]],
            scenarios: vec![
                Scenario {
                    probability: 0.5,
                    t: vec![vec![1.0]],
                    w: vec![vec![-1.0]],
                    h: vec![0.0],
                    q: vec![vec![1.0], vec![3.0]],
                },
                Scenario {
                    probability: 0.5,
                    t: vec![vec![1.0]],
                    w: vec![vec![-1.0]],
                    h: vec![0.0],
                    q: vec![vec![3.0], vec![1.0]],
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn matrix_dims_ok(m: &Matrix, rows: usize, cols: usize) -> bool {
    m.len() == rows && m.iter().all(|r| r.len() == cols)
}

/// Structural and feasibility validation. Boundedness/nonemptiness of every
/// `𝓕_i` is decided by `2(M+N)` LP solves per scenario.
pub fn validate(p: &TwoStageProblem) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let d = &p.dims;
    if p.scenarios.len() != d.i {
        rep.violations.push(format!(
            "scenario count {} differs from declared I = {}",
            p.scenarios.len(),
            d.i
        ));
    }
    if p.scenarios.len() < 2 {
        rep.violations.push("I >= 2 required".into());
    }
    if !matrix_dims_ok(&p.a, d.k, d.m) {
        rep.violations.push("A is not K x M".into());
    }
    if p.b.len() != d.k {
        rep.violations.push("b is not length K".into());
    }
    if !matrix_dims_ok(&p.c, d.j, d.m) {
        rep.violations.push("C is not J x M".into());
    }
    for (i, s) in p.scenarios.iter().enumerate() {
        if !matrix_dims_ok(&s.t, d.l, d.m) {
            rep.violations.push(format!("scenario {i}: T is not L x M"));
        }
        if !matrix_dims_ok(&s.w, d.l, d.n) {
            rep.violations.push(format!("scenario {i}: W is not L x N"));
        }
        if s.h.len() != d.l {
            rep.violations.push(format!("scenario {i}: h is not length L"));
        }
        if !matrix_dims_ok(&s.q, d.j, d.n) {
            rep.violations.push(format!("scenario {i}: Q is not J x N"));
        }
        if s.probability <= 0.0 {
            rep.violations
                .push(format!("scenario {i}: probability {} <= 0", s.probability));
        }
    }
    if !rep.is_valid() {
        return rep; // dimension errors make the LP checks meaningless
    }
    let psum: f64 = p.scenarios.iter().map(|s| s.probability).sum();
    if (psum - 1.0).abs() > 1e-12 {
        rep.violations
            .push(format!("probability sum {psum} != 1"));
    }
    for i in 0..p.scenarios.len() {
        let nvars = d.m + d.n;
        let mut empty = false;
        for coord in 0..nvars {
            for sign in [1.0, -1.0] {
                let mut obj = vec![0.0; nvars];
                obj[coord] = sign;
                let lp = build_scenario_lp(p, i, &obj).expect("index in range");
                let sol = solve_lp(&lp);
                match sol.status {
                    LpStatus::Optimal => {}
                    LpStatus::Infeasible => {
                        rep.violations
                            .push(format!("scenario {i}: feasible region is empty"));
                        empty = true;
                    }
                    LpStatus::Unbounded => {
                        rep.violations.push(format!(
                            "scenario {i}: feasible region unbounded in coordinate {coord}"
                        ));
                    }
                    LpStatus::Stalled => {
                        rep.violations
                            .push(format!("scenario {i}: LP check stalled"));
                    }
                }
                if empty {
                    break;
                }
            }
            if empty {
                break;
            }
        }
    }
    rep
}

/// `min objᵀ(x, y)  s.t.  A x = b, T_i x + W_i y = h_i, x ≥ 0, y ≥ 0`.
pub fn build_scenario_lp(
    p: &TwoStageProblem,
    i: usize,
    objective: &[f64],
) -> Result<LinearProgram> {
    let s = p.scenarios.get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        limit: p.scenarios.len(),
    })?;
    let d = &p.dims;
    let nvars = d.m + d.n;
    debug_assert_eq!(objective.len(), nvars);
    let mut lp = LinearProgram::new(nvars);
    for (j, &c) in objective.iter().enumerate() {
        lp.set_objective(j, c);
    }
    for k in 0..d.k {
        let coeffs: Vec<(usize, f64)> = (0..d.m)
            .map(|j| (j, p.a[k][j]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        lp.add_row(coeffs, RowKind::Eq, p.b[k]);
    }
    for l in 0..d.l {
        let mut coeffs: Vec<(usize, f64)> = (0..d.m)
            .map(|j| (j, s.t[l][j]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        coeffs.extend(
            (0..d.n)
                .map(|j| (d.m + j, s.w[l][j]))
                .filter(|&(_, v)| v != 0.0),
        );
        lp.add_row(coeffs, RowKind::Eq, s.h[l]);
    }
    Ok(lp)
}

/// Portfolio instance description: `J` assets, an initial capital converted
/// through first-stage exchange costs `θ^{1j}`, per-scenario returns
/// `r^j ~ U[range]` and transaction costs `π^{jk} ~ U[range]` (diagonal
/// fixed to 1). The second stage rebalances through the cost matrix and the
/// risk applies to `−y` (negative terminal positions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    pub assets: usize,
    pub scenarios: usize,
    pub capital: f64,
    /// J×J first-stage exchange costs (row 1 builds the budget row).
    pub theta: Matrix,
    /// Per-asset return ranges `[lo, hi)`.
    pub return_ranges: Vec<(f64, f64)>,
    /// J×J transaction-cost ranges; diagonal must be the degenerate (1, 1).
    pub cost_ranges: Vec<Vec<(f64, f64)>>,
    pub rng_seed: u64,
}

impl PortfolioSpec {
    /// Two-asset defaults: θ^{12} = 1.0815, r¹ ~ U[−0.1, 0.2],
    /// r² ~ U[−0.05, 0.1], π¹² ~ U[1, 1.1], π²¹ ~ U[0.9, 1].
    pub fn two_asset(scenarios: usize, rng_seed: u64) -> Self {
        PortfolioSpec {
            assets: 2,
            scenarios,
            capital: 1.0,
            theta: vec![vec![1.0, 1.0815], vec![1.0815, 1.0]],
            return_ranges: vec![(-0.1, 0.2), (-0.05, 0.1)],
            cost_ranges: vec![
                vec![(1.0, 1.0), (1.0, 1.1)],
                vec![(0.9, 1.0), (1.0, 1.0)],
            ],
            rng_seed,
        }
    }

    /// Three-asset defaults: additionally θ^{13} = 0.9094,
    /// r³ ~ U[−0.15, 0.3], π¹³ ~ U[0.9, 1], π³¹ ~ U[1, 1.1],
    /// π²³ ~ U[0.8, 1], π³² ~ U[1, 1.2].
    pub fn three_asset(scenarios: usize, rng_seed: u64) -> Self {
        PortfolioSpec {
            assets: 3,
            scenarios,
            capital: 1.0,
            theta: vec![
                vec![1.0, 1.0815, 0.9094],
                vec![1.0815, 1.0, 1.0],
                vec![0.9094, 1.0, 1.0],
            ],
            return_ranges: vec![(-0.1, 0.2), (-0.05, 0.1), (-0.15, 0.3)],
            cost_ranges: vec![
                vec![(1.0, 1.0), (1.0, 1.1), (0.9, 1.0)],
                vec![(0.9, 1.0), (1.0, 1.0), (0.8, 1.0)],
                vec![(1.0, 1.1), (1.0, 1.2), (1.0, 1.0)],
            ],
            rng_seed,
        }
    }

    fn check(&self) -> Result<()> {
        let j = self.assets;
        if !(2..=3).contains(&j) {
            return Err(Error::InvalidProblem("assets must be 2 or 3".into()));
        }
        if self.scenarios < 2 {
            return Err(Error::InvalidProblem("I >= 2 required".into()));
        }
        if self.capital <= 0.0 {
            return Err(Error::InvalidProblem("capital must be positive".into()));
        }
        if !matrix_dims_ok(&self.theta, j, j)
            || self.theta.iter().flatten().any(|&v| v <= 0.0)
        {
            return Err(Error::InvalidProblem(
                "theta must be J x J with positive entries".into(),
            ));
        }
        if self.return_ranges.len() != j
            || self.return_ranges.iter().any(|&(lo, hi)| lo >= hi)
        {
            return Err(Error::InvalidProblem(
                "return ranges must be J nonempty intervals".into(),
            ));
        }
        if self.cost_ranges.len() != j {
            return Err(Error::InvalidProblem("cost ranges must be J x J".into()));
        }
        for (r, row) in self.cost_ranges.iter().enumerate() {
            if row.len() != j {
                return Err(Error::InvalidProblem("cost ranges must be J x J".into()));
            }
            for (c, &(lo, hi)) in row.iter().enumerate() {
                if r == c {
                    if (lo, hi) != (1.0, 1.0) {
                        return Err(Error::InvalidProblem(
                            "diagonal transaction costs must be fixed to 1".into(),
                        ));
                    }
                } else if lo >= hi {
                    return Err(Error::InvalidProblem(
                        "off-diagonal cost ranges must be nonempty intervals".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-field PRNG stream so each random field is independently reproducible.
fn field_rng(seed: u64, field: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(field);
    rng
}

/// Deterministic portfolio instance. Column order of the second-stage block:
/// the J² rebalancing amounts `q^{jk}` (row-major in (j, k)) followed by the
/// J terminal positions `y^j`. Scenario probabilities are uniform `1/I`.
pub fn generate_portfolio(spec: &PortfolioSpec) -> Result<TwoStageProblem> {
    spec.check()?;
    let j = spec.assets;
    let i_count = spec.scenarios;
    let m = j;
    let n = j * j + j;
    let l = 2 * j;

    // Draw all returns and costs up front, one stream per field.
    let mut returns = vec![vec![0.0; i_count]; j];
    for a in 0..j {
        let mut rng = field_rng(spec.rng_seed, 100 + a as u64);
        let (lo, hi) = spec.return_ranges[a];
        for v in returns[a].iter_mut() {
            *v = rng.gen_range(lo..hi);
        }
    }
    let mut costs = vec![vec![vec![1.0; i_count]; j]; j];
    for r in 0..j {
        for c in 0..j {
            if r == c {
                continue;
            }
            let mut rng = field_rng(spec.rng_seed, 200 + (r * j + c) as u64);
            let (lo, hi) = spec.cost_ranges[r][c];
            for v in costs[r][c].iter_mut() {
                *v = rng.gen_range(lo..hi);
            }
        }
    }

    let scenarios: Vec<Scenario> = (0..i_count)
        .map(|i| {
            let mut t = vec![vec![0.0; m]; l];
            let mut w = vec![vec![0.0; n]; l];
            // rows 0..J: (1 + r^a) x^a = Σ_k π^{ak} q^{ak}
            for a in 0..j {
                t[a][a] = 1.0 + returns[a][i];
                for k in 0..j {
                    w[a][a * j + k] = -costs[a][k][i];
                }
            }
            // rows J..2J: y^a = Σ_k q^{ka}
            for a in 0..j {
                w[j + a][j * j + a] = 1.0;
                for k in 0..j {
                    w[j + a][k * j + a] -= 1.0;
                }
            }
            let mut q = vec![vec![0.0; n]; j];
            for a in 0..j {
                q[a][j * j + a] = -1.0;
            }
            Scenario {
                probability: 1.0 / i_count as f64,
                t,
                w,
                h: vec![0.0; l],
                q,
            }
        })
        .collect();

    Ok(TwoStageProblem {
        dims: Dims {
            j,
            k: 1,
            l,
            m,
            n,
            i: i_count,
        },
        a: vec![spec.theta[0].clone()],
        b: vec![spec.capital],
        c: vec![vec![0.0; m]; j],
        scenarios,
    })
}

const INSTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    version: u32,
    #[serde(flatten)]
    problem: TwoStageProblem,
}

pub fn to_json(p: &TwoStageProblem) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile {
        version: INSTANCE_FORMAT_VERSION,
        problem: p.clone(),
    })?)
}

pub fn from_json(s: &str) -> Result<TwoStageProblem> {
    let f: InstanceFile = serde_json::from_str(s)?;
    if f.version != INSTANCE_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported instance format version {} (expected {})",
            f.version, INSTANCE_FORMAT_VERSION
        )));
    }
    if f.problem.scenarios.len() < 2 {
        return Err(Error::Format("I >= 2 required".into()));
    }
    Ok(f.problem)
}

pub fn save_instance(p: &TwoStageProblem, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_json(p)?)?;
    Ok(())
}

pub fn load_instance(path: &std::path::Path) -> Result<TwoStageProblem> {
    from_json(&std::fs::read_to_string(path)?)
}

/// Serialize then parse; the identity on validated problems.
pub fn io_roundtrip(p: &TwoStageProblem) -> Result<TwoStageProblem> {
    from_json(&to_json(p)?)
}
