//! The six commands. Each returns a JSON report that is also written to
//! `<command>.json` in the output directory, plus any CSV files.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use suballoc::analysis::{
    epsilon_sweep_parallel, fit_exponential_rate, trajectory_deviation, LyapunovSeries,
};
use suballoc::dynamics::{NetworkState, PiConfig, PiSystem, PrimalDualSystem, SuboptimalSystem};
use suballoc::equilibrium::{
    solve_equilibrium_linear, solve_equilibrium_newton, solve_equilibrium_phi, solve_kkt,
    suboptimality_gap, Equilibrium,
};
use suballoc::graph::{build_consensus_transform, spectral_diagnostics, ConsensusTransform};
use suballoc::integrate::{integrate, integrate_until_converged, ConvergenceCriterion, Monitor, OdeSystem, StopReason};
use suballoc::linalg;
use suballoc::problem::{estimate_strong_convexity, ResourceProblem};

use crate::config::{AlgorithmSpec, ExperimentConfig, InitialSpec, Resolved};
use crate::error::CliError;
use crate::output::{numbered, OutputDir};

pub const DEFAULT_SWEEP_GRID: [f64; 5] = [0.2, 0.1, 0.05, 0.02, 0.01];
pub const DEFAULT_COMPARE_HORIZON: f64 = 20.0;
pub const CERTIFICATE_SAMPLES: usize = 2000;
pub const PHI_TOL: f64 = 1e-12;
pub const PHI_MAX_ITER: usize = 500;
/// Trailing share of the Lyapunov samples used for the rate fit.
pub const FIT_WINDOW: f64 = 0.5;

/// What a finished command hands back to the caller.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: serde_json::Value,
    pub files: Vec<crate::output::FileRecord>,
}

pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub resolved: Resolved,
    pub out: &'a Path,
    pub seed: u64,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a ExperimentConfig, out: &'a Path, seed: u64) -> Result<Self, CliError> {
        Ok(Self { resolved: config.resolve()?, config, out, seed })
    }

    fn problem(&self) -> &ResourceProblem {
        &self.resolved.problem
    }

    fn finish<T: Serialize>(
        &self,
        command: &str,
        mut dir: OutputDir,
        report: &T,
    ) -> Result<Outcome, CliError> {
        let report = serde_json::to_value(report)?;
        dir.write_json(&format!("{}.json", command.replace('-', "_")), &report)?;
        let files = dir.write_manifest(command, self.seed, self.config, report.clone())?;
        Ok(Outcome { report, files })
    }

    fn eps_or_config(&self, eps: Option<f64>) -> Result<f64, CliError> {
        let eps = eps.or(self.config.algorithm.eps()).ok_or_else(|| {
            CliError::Validation("no eps given: pass --eps or use a suboptimal algorithm config".into())
        })?;
        if eps > 0.0 && eps.is_finite() {
            Ok(eps)
        } else {
            Err(CliError::Validation(format!("eps={eps} must be positive and finite")))
        }
    }
}

#[derive(Serialize)]
struct GraphReport {
    nodes: usize,
    edges: usize,
    in_degrees: Vec<f64>,
    out_degrees: Vec<f64>,
    weight_balanced: bool,
    strongly_connected: bool,
    zero_eigenvalue_multiplicity: usize,
    zero_eigenvalue_simple: bool,
    min_symmetric_eigenvalue: f64,
    symmetric_part_psd: bool,
    column_sums_zero: bool,
    assumption_holds: bool,
}

pub fn check_graph(ctx: &Context) -> Result<Outcome, CliError> {
    let g = &ctx.resolved.graph;
    let d = spectral_diagnostics(g);
    let report = GraphReport {
        nodes: g.n_nodes(),
        edges: g.edges().len(),
        in_degrees: g.in_degrees(),
        out_degrees: g.out_degrees(),
        weight_balanced: g.is_weight_balanced(),
        strongly_connected: g.is_strongly_connected(),
        zero_eigenvalue_multiplicity: d.zero_eigenvalue_multiplicity,
        zero_eigenvalue_simple: d.zero_is_simple(),
        min_symmetric_eigenvalue: d.min_symmetric_eigenvalue,
        symmetric_part_psd: d.symmetric_part_psd(),
        column_sums_zero: d.column_sums_zero,
        assumption_holds: g.is_weight_balanced() && g.is_strongly_connected(),
    };
    let holds = report.assumption_holds;
    let outcome = ctx.finish("check-graph", OutputDir::create(ctx.out)?, &report)?;
    if holds {
        Ok(outcome)
    } else {
        Err(CliError::Assumption(format!(
            "graph is not weight-balanced and strongly connected (balanced: {}, strongly connected: {})",
            report.weight_balanced, report.strongly_connected
        )))
    }
}

#[derive(Serialize)]
struct Certificate {
    seed: u64,
    samples: usize,
    /// Smallest `f(x* + v) − f(x*)` over random feasible directions `v`.
    min_cost_increase: f64,
    certified: bool,
}

#[derive(Serialize)]
struct SolveReport {
    x_star: Vec<f64>,
    mu_star: Vec<f64>,
    residual: f64,
    iterations: usize,
    total_cost: f64,
    strong_convexity_estimate: f64,
    certificate: Certificate,
}

/// Random feasible directions: agent blocks that sum to zero per coordinate,
/// with magnitudes spread over three decades.
fn feasible_direction(rng: &mut ChaCha8Rng, n: usize, n_agents: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-3.0..0.0));
    let mut v: Vec<f64> = (0..n * n_agents).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
    for c in 0..n {
        let mean = (0..n_agents).map(|i| v[i * n + c]).sum::<f64>() / n_agents as f64;
        for i in 0..n_agents {
            v[i * n + c] -= mean;
        }
    }
    v
}

pub fn solve(ctx: &Context) -> Result<Outcome, CliError> {
    let p = ctx.problem();
    let kkt = solve_kkt(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let base = p.total_cost(&kkt.x_star)?;
    let mut min_increase = f64::INFINITY;
    let mut samples = Vec::with_capacity(8);
    for k in 0..CERTIFICATE_SAMPLES {
        let v = feasible_direction(&mut rng, p.n(), p.n_agents());
        let y = linalg::add(&kkt.x_star, &v);
        min_increase = min_increase.min(p.total_cost(&y)? - base);
        if k < 8 {
            samples.push(y);
        }
    }
    samples.push(kkt.x_star.clone());
    let report = SolveReport {
        strong_convexity_estimate: estimate_strong_convexity(p, &samples)?,
        total_cost: base,
        certificate: Certificate {
            seed: ctx.seed,
            samples: CERTIFICATE_SAMPLES,
            min_cost_increase: min_increase,
            certified: min_increase >= -1e-12 * (1.0 + base.abs()),
        },
        x_star: kkt.x_star,
        mu_star: kkt.mu_star,
        residual: kkt.kkt_residual,
        iterations: kkt.iterations,
    };
    ctx.finish("solve", OutputDir::create(ctx.out)?, &report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumChoice {
    Newton,
    Phi,
    ClosedForm,
}

#[derive(Serialize)]
struct EquilibriumReport {
    eps: f64,
    method: String,
    iterations: usize,
    contraction_ratio: Option<f64>,
    x_bar: Vec<f64>,
    lambda_bar: Vec<f64>,
    residual: f64,
    x_star: Vec<f64>,
    mu_star: Vec<f64>,
    x_gap: f64,
    lambda_gap: f64,
    constraint_residual: f64,
}

pub fn equilibrium(ctx: &Context, eps: Option<f64>, method: EquilibriumChoice) -> Result<Outcome, CliError> {
    let eps = ctx.eps_or_config(eps)?;
    let p = ctx.problem();
    let l = ctx.resolved.graph.laplacian();
    l.require_balanced_connected()?;
    let kkt = solve_kkt(p)?;
    let eq = match method {
        EquilibriumChoice::Newton => solve_equilibrium_newton(p, &l, eps, None)?,
        EquilibriumChoice::Phi => solve_equilibrium_phi(p, &l, eps, &kkt, PHI_TOL, PHI_MAX_ITER)?,
        EquilibriumChoice::ClosedForm => solve_equilibrium_linear(p, &l, eps)?,
    };
    let gap = suboptimality_gap(&eq, &kkt);
    let report = EquilibriumReport {
        eps,
        method: eq.method.to_string(),
        iterations: eq.iterations,
        contraction_ratio: eq.contraction_ratio,
        constraint_residual: linalg::norm_inf(&p.constraint_residual(&eq.x_bar)?),
        x_bar: eq.x_bar,
        lambda_bar: eq.lambda_bar,
        residual: eq.residual,
        x_star: kkt.x_star,
        mu_star: kkt.mu_star,
        x_gap: gap.x_gap,
        lambda_gap: gap.lambda_gap,
    };
    ctx.finish("equilibrium", OutputDir::create(ctx.out)?, &report)
}

fn initial_network_state(cfg: &ExperimentConfig, p: &ResourceProblem) -> NetworkState {
    let nn = p.dim_total();
    match &cfg.initial {
        InitialSpec::Zeros => NetworkState { x: vec![0.0; nn], lambda: vec![0.0; nn] },
        InitialSpec::BStart => NetworkState::reference_start(p),
        InitialSpec::Explicit { x, lambda, .. } => NetworkState {
            x: x.clone(),
            lambda: lambda.clone().unwrap_or_else(|| vec![0.0; nn]),
        },
    }
}

/// Flat initial state in the layout of the configured algorithm.
pub fn initial_state(cfg: &ExperimentConfig, p: &ResourceProblem) -> Vec<f64> {
    let nn = p.dim_total();
    let s = initial_network_state(cfg, p);
    match (&cfg.algorithm, &cfg.initial) {
        (AlgorithmSpec::Suboptimal { .. }, _) => s.to_flat(),
        (AlgorithmSpec::Pi { .. }, InitialSpec::Explicit { z: Some(z), .. }) => [s.to_flat(), z.clone()].concat(),
        (AlgorithmSpec::Pi { .. }, _) => [s.to_flat(), vec![0.0; nn]].concat(),
        (AlgorithmSpec::PrimalDual { .. }, InitialSpec::Explicit { mu: Some(mu), .. }) => {
            [s.x, mu.clone()].concat()
        }
        (AlgorithmSpec::PrimalDual { .. }, _) => [s.x, vec![0.0; p.n()]].concat(),
    }
}

#[derive(Serialize)]
struct RateReport {
    rate: f64,
    r_squared: f64,
    window: (f64, f64),
    samples: usize,
    converging: bool,
}

#[derive(Serialize)]
struct SimulateReport {
    algorithm: &'static str,
    eps: Option<f64>,
    samples: usize,
    final_time: f64,
    stop: &'static str,
    accepted_steps: usize,
    rejected_steps: usize,
    final_x: Vec<f64>,
    /// What `V` measures distance to.
    reference: &'static str,
    reference_x: Option<Vec<f64>>,
    v_initial: Option<f64>,
    v_final: Option<f64>,
    max_uptick: Option<f64>,
    rate_fit: Option<RateReport>,
    rate_fit_note: Option<String>,
    final_constraint_residual: f64,
    final_theta_norm: Option<f64>,
    columns: Vec<String>,
}

pub fn simulate(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.config;
    let p = ctx.problem();
    let l = ctx.resolved.graph.laplacian();
    let nn = p.dim_total();
    let n = p.n();
    let n_agents = p.n_agents();
    let y0 = initial_state(cfg, p);

    let (sys, reference, ref_name): (Box<dyn OdeSystem + '_>, Option<Vec<f64>>, &'static str) =
        match &cfg.algorithm {
            AlgorithmSpec::Suboptimal { eps } => {
                let reference = suballoc::solve_equilibrium(p, &l, *eps)
                    .ok()
                    .map(|eq: Equilibrium| eq.state().to_flat());
                (Box::new(SuboptimalSystem::new(p, &l, *eps)?), reference, "equilibrium (x_bar, lambda_bar)")
            }
            AlgorithmSpec::Pi { k_p, k_i } => {
                let kkt = solve_kkt(p)?;
                let reference = Some([kkt.x_star, kkt.lambda_star].concat());
                let sys = PiSystem::new(p, &l, PiConfig::new(*k_p, *k_i)?)?;
                (Box::new(sys), reference, "optimum (x_star, 1 (x) mu_star)")
            }
            AlgorithmSpec::PrimalDual { gain } => {
                let kkt = solve_kkt(p)?;
                let reference = Some([kkt.x_star, kkt.mu_star].concat());
                let sys = PrimalDualSystem::with_gain(p, gain.unwrap_or(1.0))?;
                (Box::new(sys), reference, "optimum (x_star, mu_star)")
            }
        };
    let stiffness = cfg.algorithm.eps().unwrap_or(1.0);
    let opts = ctx.config.integrator_options(stiffness)?;

    let ref_len = reference.as_ref().map_or(0, Vec::len);
    let v_monitor = Monitor::new("V", |y: &[f64]| match &reference {
        Some(r) => linalg::dist(&y[..ref_len], r).powi(2),
        None => f64::NAN,
    });
    let residual_monitor = Monitor::new("constraint_residual", |y: &[f64]| {
        let s = linalg::block_sum(&y[..nn], n);
        linalg::dist(&s, p.d())
    });
    let transform: Option<ConsensusTransform> = match cfg.algorithm {
        AlgorithmSpec::PrimalDual { .. } => None,
        _ if n_agents >= 2 => Some(build_consensus_transform(n_agents)?),
        _ => None,
    };
    let mut monitors = vec![v_monitor, residual_monitor];
    if let Some(tr) = &transform {
        monitors.push(Monitor::new("theta_norm", move |y: &[f64]| {
            let w = tr.forward(n, &y[nn..2 * nn]);
            linalg::norm(&w[n..])
        }));
    }

    let traj = match cfg.integrator.converge_tol {
        Some(tol) => integrate_until_converged(
            sys.as_ref(),
            &y0,
            &ConvergenceCriterion { state_tol: tol, t_max: opts.t_end },
            &opts,
            &monitors,
        )?,
        None => integrate(sys.as_ref(), &y0, &opts, &monitors)?,
    };

    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", nn));
    match cfg.algorithm {
        AlgorithmSpec::Suboptimal { .. } => header.extend(numbered("lambda", nn)),
        AlgorithmSpec::Pi { .. } => {
            header.extend(numbered("lambda", nn));
            header.extend(numbered("z", nn));
        }
        AlgorithmSpec::PrimalDual { .. } => header.extend(numbered("mu", n)),
    }
    header.extend(traj.monitors.iter().map(|m| m.name.clone()));
    let rows = (0..traj.len()).map(|k| {
        let mut row = Vec::with_capacity(header.len());
        row.push(traj.times[k]);
        row.extend_from_slice(&traj.states[k]);
        row.extend(traj.monitors.iter().map(|m| m.values[k]));
        row
    });
    let mut dir = OutputDir::create(ctx.out)?;
    dir.write_csv(&cfg.output.trajectory, &header, rows)?;

    let v = traj.monitor("V").expect("V monitor").to_vec();
    let have_v = reference.is_some();
    let series = LyapunovSeries::from_values(traj.times.clone(), v.clone())?;
    let (rate_fit, rate_fit_note) = if have_v {
        match fit_exponential_rate(&series, FIT_WINDOW) {
            Ok(f) => (
                Some(RateReport {
                    rate: f.rate,
                    r_squared: f.r_squared,
                    window: f.window,
                    samples: f.samples,
                    converging: f.converging,
                }),
                None,
            ),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("no equilibrium available for V: graph is not weight-balanced and strongly connected".into()))
    };
    let last = |name: &str| traj.monitor(name).and_then(|s| s.last().copied());
    let report = SimulateReport {
        algorithm: cfg.algorithm.name(),
        eps: cfg.algorithm.eps(),
        samples: traj.len(),
        final_time: traj.final_time(),
        stop: match traj.stop {
            StopReason::Horizon => "horizon",
            StopReason::Converged => "converged",
            StopReason::TimeLimit => "time-limit",
        },
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
        final_x: traj.final_state()[..nn].to_vec(),
        reference: ref_name,
        reference_x: reference.as_ref().map(|r| r[..nn].to_vec()),
        v_initial: have_v.then(|| v[0]),
        v_final: have_v.then(|| v[v.len() - 1]),
        max_uptick: have_v.then_some(series.max_uptick),
        rate_fit,
        rate_fit_note,
        final_constraint_residual: last("constraint_residual").unwrap_or(f64::NAN),
        final_theta_norm: last("theta_norm"),
        columns: header,
    };
    ctx.finish("simulate", dir, &report)
}

#[derive(Serialize)]
struct SweepJson {
    eps_grid: Vec<f64>,
    x_gaps: Vec<Option<f64>>,
    lambda_gaps: Vec<Option<f64>>,
    constraint_residuals: Vec<Option<f64>>,
    failures: Vec<Option<String>>,
    loglog_slope: Option<f64>,
    lambda_loglog_slope: Option<f64>,
    gamma1_hat: f64,
    gamma2_hat: f64,
    exact: bool,
    x_star: Vec<f64>,
    workers: Option<usize>,
}

fn finite(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

pub fn sweep(ctx: &Context, eps_grid: &[f64], workers: Option<usize>) -> Result<Outcome, CliError> {
    if eps_grid.is_empty() {
        return Err(CliError::Validation("eps grid is empty".into()));
    }
    let p = ctx.problem();
    let l = ctx.resolved.graph.laplacian();
    let r = epsilon_sweep_parallel(p, &l, eps_grid, workers)?;
    let mut dir = OutputDir::create(ctx.out)?;
    let header = ["eps", "x_gap", "lambda_gap"].map(String::from);
    let rows = (0..r.eps_grid.len()).map(|k| vec![r.eps_grid[k], r.x_gaps[k], r.lambda_gaps[k]]);
    dir.write_csv("sweep.csv", &header, rows)?;
    let report = SweepJson {
        x_gaps: finite(&r.x_gaps),
        lambda_gaps: finite(&r.lambda_gaps),
        constraint_residuals: finite(&r.constraint_residuals),
        failures: r.failures.clone(),
        loglog_slope: r.loglog_slope,
        lambda_loglog_slope: r.lambda_loglog_slope,
        gamma1_hat: r.gamma1_hat,
        gamma2_hat: r.gamma2_hat,
        exact: r.exact,
        x_star: r.kkt.x_star.clone(),
        eps_grid: r.eps_grid.clone(),
        workers,
    };
    let outcome = ctx.finish("sweep", dir, &report)?;
    if r.all_succeeded() {
        Ok(outcome)
    } else {
        let failed = r.failures.iter().filter(|f| f.is_some()).count();
        Err(CliError::Numerical(format!(
            "{failed} of {} eps values failed; see sweep.json",
            r.eps_grid.len()
        )))
    }
}

#[derive(Serialize)]
struct CompareReport {
    eps: f64,
    horizon: f64,
    boundary_cutoff: f64,
    sup_x_mu_dev: f64,
    sup_theta_tail: f64,
    samples: usize,
    reduced_model_gain: f64,
}

pub fn compare(
    ctx: &Context,
    eps: Option<f64>,
    horizon: Option<f64>,
    boundary_cutoff: Option<f64>,
) -> Result<Outcome, CliError> {
    let eps = ctx.eps_or_config(eps)?;
    let p = ctx.problem();
    let l = ctx.resolved.graph.laplacian();
    let n = p.n();
    let nn = p.dim_total();
    let n_agents = p.n_agents();
    let tr = build_consensus_transform(n_agents)?;
    let s0 = initial_network_state(ctx.config, p);
    let r = trajectory_deviation(
        p,
        &l,
        &tr,
        eps,
        &s0,
        horizon.unwrap_or(DEFAULT_COMPARE_HORIZON),
        boundary_cutoff,
    )?;

    let mut dir = OutputDir::create(ctx.out)?;
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", nn));
    header.extend(numbered("mu", n));
    let mut full_header = header.clone();
    full_header.push("theta_norm".into());
    let full_rows = r.full.times.iter().zip(&r.full.states).map(|(t, s)| {
        let w = tr.forward(n, &s[nn..]);
        let mut row = vec![*t];
        row.extend_from_slice(&s[..nn]);
        row.extend_from_slice(&w[..n]);
        row.push(linalg::norm(&w[n..]));
        row
    });
    dir.write_csv("compare_full.csv", &full_header, full_rows)?;
    let reduced_rows = r.reduced.times.iter().zip(&r.reduced.states).map(|(t, s)| {
        let mut row = vec![*t];
        row.extend_from_slice(s);
        row
    });
    dir.write_csv("compare_reduced.csv", &header, reduced_rows)?;
    let report = CompareReport {
        eps,
        horizon: r.horizon,
        boundary_cutoff: r.boundary_cutoff,
        sup_x_mu_dev: r.sup_x_mu_dev,
        sup_theta_tail: r.sup_theta_tail,
        samples: r.full.len(),
        reduced_model_gain: 1.0 / n_agents as f64,
    };
    ctx.finish("compare", dir, &report)
}
