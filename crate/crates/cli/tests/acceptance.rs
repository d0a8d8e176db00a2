//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

use suballoc::dynamics::to_singular_coords;
use suballoc::{
    build_consensus_transform, integrate_to_times, solve_equilibrium, solve_equilibrium_newton,
    solve_equilibrium_phi, solve_kkt, spectral_diagnostics, IntegratorOptions, NetworkState,
    Quadratic, ResourceProblem, SingularSystem, SuboptimalSystem, WeightedDigraph,
};
use suballoc_cli::commands::{self, Context, EquilibriumChoice};
use suballoc_cli::config::{AlgorithmSpec, ExperimentConfig};

const X_STAR: [f64; 3] = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
const MU_STAR: f64 = -1.0 / 6.0;
const GRID: [f64; 5] = [0.2, 0.1, 0.05, 0.02, 0.01];

type Check = Result<String, String>;

fn bundled(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::load(&path).expect("bundled config loads")
}

fn with_eps(mut cfg: ExperimentConfig, eps: f64) -> ExperimentConfig {
    cfg.algorithm = AlgorithmSpec::Suboptimal { eps };
    cfg
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn run_cmd(
    cfg: &ExperimentConfig,
    f: impl FnOnce(&Context) -> Result<commands::Outcome, suballoc_cli::CliError>,
) -> Result<Value, String> {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let ctx = Context::new(cfg, dir.path(), 0).map_err(|e| e.to_string())?;
    f(&ctx).map(|o| o.report).map_err(|e| e.to_string())
}

fn closed_form(eps: f64) -> ([f64; 3], [f64; 3]) {
    let c = eps / (6.0 * (4.0 * eps * eps + 9.0 * eps + 6.0));
    let dx = [4.0 * eps + 9.0, -8.0 * eps - 12.0, 4.0 * eps + 3.0];
    let dl = [-(4.0 * eps + 9.0), 2.0 * eps + 3.0, -(4.0 * eps + 3.0)];
    (
        std::array::from_fn(|i| X_STAR[i] + c * dx[i]),
        std::array::from_fn(|i| MU_STAR + c * dl[i]),
    )
}

fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * rng.random_range(0.3..2.0)
}

fn random_quadratic_problem(rng: &mut impl Rng, n_agents: usize, n: usize) -> ResourceProblem {
    let items = (0..n_agents)
        .map(|_| {
            let q = random_spd(rng, n);
            let r = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let b = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            (Quadratic::new(q, r, 0.0).unwrap(), b)
        })
        .collect();
    ResourceProblem::from_costs(items).unwrap()
}

/// Union of weighted cycles, so in-degree equals out-degree. The first cycle
/// spans every node when `spanning`.
fn random_balanced_graph(rng: &mut impl Rng, n: usize, spanning: bool) -> WeightedDigraph {
    let mut w = DMatrix::zeros(n, n);
    for c in 0..rng.random_range(1..=3) {
        let mut nodes: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            nodes.swap(i, rng.random_range(0..=i));
        }
        let len = if c == 0 && spanning { n } else { rng.random_range(2..=n.max(2)).min(n) };
        if len < 2 {
            continue;
        }
        let weight = rng.random_range(0.2..3.0);
        for k in 0..len {
            w[(nodes[(k + 1) % len], nodes[k])] += weight;
        }
    }
    WeightedDigraph::new(w).unwrap()
}

fn random_digraph(rng: &mut impl Rng, n: usize) -> WeightedDigraph {
    let density = rng.random_range(0.15..0.9);
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i != j && rng.random_bool(density) {
            rng.random_range(0.1..2.0)
        } else {
            0.0
        }
    });
    WeightedDigraph::new(w).unwrap()
}

fn ac1() -> Check {
    let rep = run_cmd(&bundled("three_agent.json"), commands::solve)?;
    let dx = max_abs_diff(&floats(&rep["x_star"]), &X_STAR);
    let dmu = (floats(&rep["mu_star"])[0] - MU_STAR).abs();
    let msg = format!("max |x - x*| = {dx:.2e}, |mu - mu*| = {dmu:.2e}");
    if dx < 1e-9 && dmu < 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac2() -> Check {
    let mut worst: f64 = 0.0;
    for eps in [1.0, 0.1, 0.01] {
        let cfg = bundled("three_agent.json");
        let rep = run_cmd(&cfg, |c| commands::equilibrium(c, Some(eps), EquilibriumChoice::Newton))?;
        let (x, l) = closed_form(eps);
        worst = worst
            .max(max_abs_diff(&floats(&rep["x_bar"]), &x))
            .max(max_abs_diff(&floats(&rep["lambda_bar"]), &l));
    }
    let msg = format!("worst component error over eps in {{1, 0.1, 0.01}} = {worst:.2e}");
    if worst < 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    let problems = 25;
    for _ in 0..problems {
        let n_agents = rng.random_range(2..=8);
        let n = rng.random_range(1..=3);
        let p = random_quadratic_problem(&mut rng, n_agents, n);
        let l = random_balanced_graph(&mut rng, n_agents, true).laplacian();
        for eps in [0.5, 0.1, 0.02] {
            let eq = solve_equilibrium(&p, &l, eps).map_err(|e| e.to_string())?;
            let r = p.constraint_residual(&eq.x_bar).map_err(|e| e.to_string())?;
            worst = worst.max(r.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
            solved += 1;
        }
    }
    let msg = format!("{problems} problems, {solved} equilibria, worst |sum x - d| = {worst:.2e}");
    if worst < 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn refined(grid: &[f64]) -> Vec<f64> {
    let mut out = vec![grid[0]];
    for w in grid.windows(2) {
        out.push((w[0] * w[1]).sqrt());
        out.push(w[1]);
    }
    out
}

fn ac4() -> Check {
    let cfg = bundled("three_agent.json");
    let coarse = run_cmd(&cfg, |c| commands::sweep(c, &GRID, None))?;
    let fine = run_cmd(&cfg, |c| commands::sweep(c, &refined(&GRID), None))?;
    let slope = num(&coarse["loglog_slope"]);
    let (g1, g2) = (num(&coarse["gamma1_hat"]), num(&fine["gamma1_hat"]));
    let drift = (g2 - g1).abs() / g1;
    let msg = format!("slope = {slope:.4}, gamma1_hat {g1:.5} -> {g2:.5} (change {:.2}%)", 100.0 * drift);
    if (0.9..=1.1).contains(&slope) && drift <= 0.2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac5() -> Check {
    let mut worst: f64 = 0.0;
    for eps in [1.0, 0.1, 0.01] {
        let cfg = bundled("three_agent_exact.json");
        let rep = run_cmd(&cfg, |c| commands::equilibrium(c, Some(eps), EquilibriumChoice::Newton))?;
        worst = worst.max(num(&rep["x_gap"]));
    }
    let msg = format!("b = x*: worst |x_bar - x*| = {worst:.2e}");
    if worst < 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac6() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for eps in [1.0, 0.1, 0.01] {
        let cfg = with_eps(bundled("three_agent.json"), eps);
        let t_end = cfg.integrator.t_end.unwrap_or(f64::NAN);
        let rep = run_cmd(&cfg, commands::simulate)?;
        let (v0, vf, up) = (num(&rep["v_initial"]), num(&rep["v_final"]), num(&rep["max_uptick"]));
        let fit = &rep["rate_fit"];
        let (rate, r2) = (num(&fit["rate"]), num(&fit["r_squared"]));
        ok &= t_end <= 200.0 && vf < 1e-8 && up < 1e-8 * (1.0 + v0) && rate < 0.0 && r2 > 0.99;
        lines.push(format!(
            "eps={eps}: t={t_end} V={vf:.1e} uptick={up:.1e} rate={rate:.3} R2={r2:.4}"
        ));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac7() -> Check {
    let cfg = bundled("three_agent.json");
    let a = run_cmd(&cfg, |c| commands::compare(c, Some(0.1), None, None))?;
    let b = run_cmd(&cfg, |c| commands::compare(c, Some(0.05), None, None))?;
    let ratio = num(&a["sup_x_mu_dev"]) / num(&b["sup_x_mu_dev"]);
    let (ta, tb) = (num(&a["sup_theta_tail"]), num(&b["sup_theta_tail"]));
    let msg = format!("dev ratio = {ratio:.3}, theta tail {ta:.3e} -> {tb:.3e}");
    if (2.0 / 3.0..=6.0).contains(&ratio) && tb < ta {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac8() -> Check {
    let mut worst: f64 = 0.0;
    let mut iterations = Vec::new();
    let mut check = |p: &ResourceProblem, l: &suballoc::Laplacian, eps: f64| -> Result<(), String> {
        let kkt = solve_kkt(p).map_err(|e| e.to_string())?;
        let newton = solve_equilibrium_newton(p, l, eps, None).map_err(|e| e.to_string())?;
        let phi = solve_equilibrium_phi(p, l, eps, &kkt, 1e-12, 500).map_err(|e| e.to_string())?;
        worst = worst
            .max(max_abs_diff(&newton.x_bar, &phi.x_bar))
            .max(max_abs_diff(&newton.lambda_bar, &phi.lambda_bar));
        iterations.push(phi.iterations);
        Ok(())
    };
    let r = bundled("three_agent.json").resolve().map_err(|e| e.to_string())?;
    check(&r.problem, &r.graph.laplacian(), 0.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let n_agents = rng.random_range(2..=6);
        let n = rng.random_range(1..=3);
        let p = random_quadratic_problem(&mut rng, n_agents, n);
        let l = random_balanced_graph(&mut rng, n_agents, true).laplacian();
        check(&p, &l, rng.random_range(0.02..1.0))?;
    }
    let all_one = iterations.iter().all(|&k| k == 1);
    let msg = format!("11 problems, worst Newton/Phi gap = {worst:.2e}, Phi iterations {iterations:?}");
    if worst < 1e-8 && all_one {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let graphs = 200;
    let mut balance_disagree = 0;
    let mut balanced_seen = 0;
    for k in 0..graphs {
        let n = rng.random_range(2..=8);
        // Half are balanced by construction so both outcomes are exercised.
        let spanning = rng.random_bool(0.5);
        let g = if k % 2 == 0 { random_digraph(&mut rng, n) } else { random_balanced_graph(&mut rng, n, spanning) };
        let d = spectral_diagnostics(&g);
        balanced_seen += usize::from(g.is_weight_balanced());
        if g.is_weight_balanced() != d.symmetric_part_psd() {
            balance_disagree += 1;
        }
    }
    // The connectivity equivalence is checked where it is guaranteed:
    // on weight-balanced digraphs. On arbitrary digraphs only the forward
    // implication is valid, since a rooted spanning tree already gives a
    // simple zero eigenvalue.
    let mut conn_disagree = 0;
    let mut connected_seen = 0;
    for _ in 0..graphs {
        let n = rng.random_range(2..=8);
        let spanning = rng.random_bool(0.5);
        let g = random_balanced_graph(&mut rng, n, spanning);
        connected_seen += usize::from(g.is_strongly_connected());
        if g.is_strongly_connected() != spectral_diagnostics(&g).zero_is_simple() {
            conn_disagree += 1;
        }
    }
    let mut implication_broken = 0;
    for _ in 0..graphs {
        let n = rng.random_range(2..=8);
        let g = random_digraph(&mut rng, n);
        if g.is_strongly_connected() && !spectral_diagnostics(&g).zero_is_simple() {
            implication_broken += 1;
        }
    }
    let msg = format!(
        "balance: {balance_disagree}/{graphs} disagreements ({balanced_seen} balanced); \
         connectivity on balanced graphs: {conn_disagree}/{graphs} ({connected_seen} connected); \
         connected => simple zero broken {implication_broken}/{graphs}"
    );
    let covered = balanced_seen > 0 && balanced_seen < graphs && connected_seen > 0 && connected_seen < graphs;
    if balance_disagree == 0 && conn_disagree == 0 && implication_broken == 0 && covered {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac10() -> Check {
    let r = bundled("three_agent.json").resolve().map_err(|e| e.to_string())?;
    let (p, l) = (&r.problem, r.graph.laplacian());
    let tr = build_consensus_transform(3).map_err(|e| e.to_string())?;
    let eps = 0.1;
    let opts = IntegratorOptions { rel_tol: 1e-9, abs_tol: 1e-11, ..IntegratorOptions::for_eps(eps, 20.0) };
    let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.05).collect();
    let s0 = NetworkState::reference_start(p);
    let sub = SuboptimalSystem::new(p, &l, eps).map_err(|e| e.to_string())?;
    let a = integrate_to_times(&sub, &s0.to_flat(), &times, &opts, &[]).map_err(|e| e.to_string())?;
    let z0 = to_singular_coords(&s0, &tr).map_err(|e| e.to_string())?.to_flat();
    let sing = SingularSystem::new(p, &l, &tr, eps).map_err(|e| e.to_string())?;
    let b = integrate_to_times(&sing, &z0, &times, &opts, &[]).map_err(|e| e.to_string())?;
    let tol = 10.0 * opts.rel_tol;
    let worst = a
        .states
        .iter()
        .zip(&b.states)
        .flat_map(|(sa, sb)| (0..3).map(move |k| (sa[k] - sb[k]).abs() / (1.0 + sa[k].abs())))
        .fold(0.0, f64::max);
    let msg = format!("{} samples, worst scaled x difference = {worst:.2e} (bound {tol:.0e})", times.len());
    if worst < tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, Duration, fn() -> Check); 10] = [
        ("AC1", "KKT reproduction", Duration::from_secs(1), ac1),
        ("AC2", "equilibrium closed form", Duration::from_secs(3), ac2),
        ("AC3", "constraint exactness", Duration::from_secs(10), ac3),
        ("AC4", "linear sub-optimality scaling", Duration::from_secs(5), ac4),
        ("AC5", "exact case b = x*", Duration::from_secs(1), ac5),
        ("AC6", "convergence and Lyapunov decay", Duration::from_secs(30), ac6),
        ("AC7", "singular-perturbation closeness", Duration::from_secs(10), ac7),
        ("AC8", "solver cross-validation", Duration::from_secs(5), ac8),
        ("AC9", "structural predicates", Duration::from_secs(5), ac9),
        ("AC10", "representation equivalence", Duration::from_secs(5), ac10),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(m) if took <= budget => (true, m),
            Ok(m) => (false, format!("{m}; over time budget")),
            Err(m) => (false, m),
        };
        failed += usize::from(!pass);
        println!(
            "[{}] {id} {name}: {detail} ({:.3}s / {}s)",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
