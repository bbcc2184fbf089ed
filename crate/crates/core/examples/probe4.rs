use rand::Rng; use rand::SeedableRng; use rand_chacha::ChaCha12Rng;
use vopt_risk::model::{generate_portfolio, PortfolioSpec};
use vopt_risk::polyhedra::Cone;
use vopt_risk::risk::RiskMeasure;
use vopt_risk::scalarization::{solve_p1_direct, solve_p2_direct};
use vopt_risk::bundle::{run_bundle_p1, run_bundle_p2, BundleParams};
use std::time::Instant;

fn main() {
    let r = RiskMeasure::cvar(vec![0.3, 0.3], Cone::orthant(2)).unwrap();
    let params = BundleParams::default();
    let t0 = Instant::now();
    for &scen in &[10usize, 50, 100] {
        for seed in [3u64, 5, 8] {
            let p = generate_portfolio(&PortfolioSpec::two_asset(scen, seed)).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xACCE);
            let t = Instant::now();
            let mut worst1: f64 = 0.0; let mut worst2: f64 = 0.0;
            let mut anchor = None;
            for k in 0..20 {
                let raw: Vec<f64> = (0..2).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = raw.iter().sum();
                let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
                let tk = Instant::now();
                match solve_p1_direct(&p, &r, &w) {
                    Ok(res) => {
                        if anchor.is_none() { anchor = res.z.clone(); }
                        let td = tk.elapsed().as_secs_f64();
                        let b = run_bundle_p1(&p, &r, &w, &params).unwrap();
                        eprintln!("  P1 I={scen} seed={seed} k={k} direct {td:.2}s bundle {:.2}s iters={}", tk.elapsed().as_secs_f64() - td, b.iterations);
                        worst1 = worst1.max((b.value - res.value).abs() / (1.0 + res.value.abs()));
                    }
                    Err(e) => println!("P1 I={scen} seed={seed} k={k}: {e}"),
                }
            }
            let anchor = anchor.unwrap();
            for k in 0..10 {
                let v: Vec<f64> = anchor.iter().map(|z| z - rng.gen_range(0.05..0.5)).collect();
                match solve_p2_direct(&p, &r, &v) {
                    Ok(res) => {
                        let b = run_bundle_p2(&p, &r, &v, &params).unwrap();
                        worst2 = worst2.max((b.value - res.value).abs() / (1.0 + res.value.abs()));
                    }
                    Err(e) => println!("P2 I={scen} seed={seed} k={k}: {e}"),
                }
            }
            println!("I={scen} seed={seed} {:.1}s worstP1={worst1:.2e} worstP2={worst2:.2e}", t.elapsed().as_secs_f64());
        }
    }
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
