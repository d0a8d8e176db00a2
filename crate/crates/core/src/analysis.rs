//! Lyapunov monitoring, exponential-rate fits, ε-sweeps of the equilibrium
//! gap and deviation from the quasi-steady-state model.

use std::num::NonZeroUsize;
use std::thread;

use crate::dynamics::{NetworkState, PrimalDualSystem, SuboptimalSystem};
use crate::equilibrium::{solve_equilibrium, solve_kkt, suboptimality_gap, Equilibrium, KktSolution};
use crate::error::{dim_check, Error, Result};
use crate::graph::{ConsensusTransform, Laplacian};
use crate::integrate::{integrate, integrate_to_times, IntegratorOptions, Trajectory};
use crate::linalg;
use crate::problem::ResourceProblem;

/// Samples at or below this are excluded from rate fits.
pub const FIT_FLOOR: f64 = 1e-14;
pub const MIN_FIT_SAMPLES: usize = 10;
/// Gaps below this are treated as exactly zero in a sweep.
pub const EXACT_GAP_TOL: f64 = 1e-9;
/// Fitted rates above `−RATE_TOL` are reported as not converging.
pub const RATE_TOL: f64 = 1e-9;
/// Boundary-layer cutoff in units of ε.
pub const DEFAULT_CUTOFF_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest positive increment between consecutive samples, or 0.
    pub max_uptick: f64,
}

impl LyapunovSeries {
    pub fn from_values(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        dim_check("Lyapunov values", times.len(), values.len())?;
        let max_uptick = values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(Self { times, values, max_uptick })
    }

    pub fn initial(&self) -> Option<f64> {
        self.values.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// `‖x − x̄‖² + ‖λ − λ̄‖²` for a flat `[x, λ]` state.
pub fn lyapunov_value(state: &[f64], eq: &Equilibrium) -> f64 {
    let nn = eq.x_bar.len();
    let (x, lambda) = state.split_at(nn);
    let dx = linalg::dist(x, &eq.x_bar);
    let dl = linalg::dist(lambda, &eq.lambda_bar);
    dx * dx + dl * dl
}

pub fn lyapunov_trace(traj: &Trajectory, eq: &Equilibrium) -> Result<LyapunovSeries> {
    let dim = 2 * eq.x_bar.len();
    dim_check("equilibrium lambda", eq.x_bar.len(), eq.lambda_bar.len())?;
    let mut values = Vec::with_capacity(traj.len());
    for s in &traj.states {
        dim_check("trajectory state", dim, s.len())?;
        values.push(lyapunov_value(s, eq));
    }
    LyapunovSeries::from_values(traj.times.clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Slope of `ln V` against `t`.
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub converging: bool,
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2.clamp(0.0, 1.0))
}

/// Fits `ln V ≈ a + rate·t` over the trailing `window_fraction` of the samples
/// that lie above [`FIT_FLOOR`].
pub fn fit_exponential_rate(series: &LyapunovSeries, window_fraction: f64) -> Result<RateFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "window_fraction={window_fraction} must lie in (0, 1]"
        )));
    }
    dim_check("Lyapunov values", series.times.len(), series.values.len())?;
    let usable: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(_, v)| **v > FIT_FLOOR && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if usable.is_empty() && !series.values.is_empty() {
        return Err(Error::AlreadyConverged);
    }
    let take = ((usable.len() as f64) * window_fraction).ceil() as usize;
    let window = &usable[usable.len() - take.min(usable.len())..];
    if window.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_FIT_SAMPLES, found: window.len() });
    }
    let (ts, lv): (Vec<f64>, Vec<f64>) = window.iter().copied().unzip();
    let (rate, _, r_squared) = linear_fit(&ts, &lv);
    Ok(RateFit {
        rate,
        r_squared,
        window: (ts[0], ts[ts.len() - 1]),
        samples: ts.len(),
        converging: rate < -RATE_TOL,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub eps_grid: Vec<f64>,
    /// `NaN` where the solve failed.
    pub x_gaps: Vec<f64>,
    pub lambda_gaps: Vec<f64>,
    /// Largest `|(1ᵀ⊗I)x̄ − d|` component.
    pub constraint_residuals: Vec<f64>,
    pub failures: Vec<Option<String>>,
    /// Slope of `ln x_gap` against `ln ε`; `None` in the exact case or with
    /// fewer than two usable points.
    pub loglog_slope: Option<f64>,
    pub lambda_loglog_slope: Option<f64>,
    pub gamma1_hat: f64,
    pub gamma2_hat: f64,
    /// Every gap is below [`EXACT_GAP_TOL`].
    pub exact: bool,
    pub kkt: KktSolution,
}

impl SweepReport {
    pub fn all_succeeded(&self) -> bool {
        self.failures.iter().all(Option::is_none)
    }
}

struct SweepPoint {
    x_gap: f64,
    lambda_gap: f64,
    constraint_residual: f64,
    failure: Option<String>,
}

fn sweep_point(p: &ResourceProblem, l: &Laplacian, kkt: &KktSolution, eps: f64) -> SweepPoint {
    let solved = solve_equilibrium(p, l, eps)
        .and_then(|eq| p.constraint_residual(&eq.x_bar).map(|r| (eq, r)));
    match solved {
        Ok((eq, r)) => {
            let gap = suboptimality_gap(&eq, kkt);
            SweepPoint {
                x_gap: gap.x_gap,
                lambda_gap: gap.lambda_gap,
                constraint_residual: linalg::norm_inf(&r),
                failure: None,
            }
        }
        Err(e) => SweepPoint {
            x_gap: f64::NAN,
            lambda_gap: f64::NAN,
            constraint_residual: f64::NAN,
            failure: Some(e.to_string()),
        },
    }
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "eps grid needs at least 3 values, got {}",
            eps_grid.len()
        )));
    }
    if eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter("eps grid values must be positive".into()));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("eps grid must be strictly decreasing".into()));
    }
    Ok(())
}

fn loglog(eps: &[f64], gaps: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(gaps)
        .filter(|(_, g)| **g > 0.0 && g.is_finite())
        .map(|(e, g)| (e.ln(), g.ln()))
        .unzip();
    (xs.len() >= 2).then(|| linear_fit(&xs, &ys).0)
}

fn assemble(eps_grid: &[f64], kkt: KktSolution, points: Vec<SweepPoint>) -> SweepReport {
    let x_gaps: Vec<f64> = points.iter().map(|p| p.x_gap).collect();
    let lambda_gaps: Vec<f64> = points.iter().map(|p| p.lambda_gap).collect();
    let ok = |g: &f64| g.is_finite();
    let exact = x_gaps.iter().any(ok)
        && x_gaps.iter().chain(&lambda_gaps).filter(|g| ok(g)).all(|g| *g < EXACT_GAP_TOL);
    let gamma = |gaps: &[f64]| {
        eps_grid
            .iter()
            .zip(gaps)
            .filter(|(_, g)| ok(g))
            .map(|(e, g)| g / e)
            .fold(0.0, f64::max)
    };
    SweepReport {
        eps_grid: eps_grid.to_vec(),
        loglog_slope: if exact { None } else { loglog(eps_grid, &x_gaps) },
        lambda_loglog_slope: if exact { None } else { loglog(eps_grid, &lambda_gaps) },
        gamma1_hat: gamma(&x_gaps),
        gamma2_hat: gamma(&lambda_gaps),
        constraint_residuals: points.iter().map(|p| p.constraint_residual).collect(),
        failures: points.into_iter().map(|p| p.failure).collect(),
        x_gaps,
        lambda_gaps,
        exact,
        kkt,
    }
}

/// Solves the equilibrium at every ε of a strictly decreasing grid and
/// reports gaps to the optimum. Per-ε solver failures are recorded in
/// `failures` rather than aborting the sweep.
pub fn epsilon_sweep(p: &ResourceProblem, l: &Laplacian, eps_grid: &[f64]) -> Result<SweepReport> {
    check_grid(eps_grid)?;
    dim_check("graph node count vs agent count", p.n_agents(), l.n_nodes())?;
    l.require_balanced_connected()?;
    let kkt = solve_kkt(p)?;
    let points = eps_grid.iter().map(|&e| sweep_point(p, l, &kkt, e)).collect();
    Ok(assemble(eps_grid, kkt, points))
}

/// [`epsilon_sweep`] with the per-ε solves spread over at most `workers`
/// threads (default: available parallelism). Results are identical.
pub fn epsilon_sweep_parallel(
    p: &ResourceProblem,
    l: &Laplacian,
    eps_grid: &[f64],
    workers: Option<usize>,
) -> Result<SweepReport> {
    check_grid(eps_grid)?;
    dim_check("graph node count vs agent count", p.n_agents(), l.n_nodes())?;
    l.require_balanced_connected()?;
    if workers == Some(0) {
        return Err(Error::InvalidParameter("worker count must be positive".into()));
    }
    let kkt = solve_kkt(p)?;
    let workers = workers
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, NonZeroUsize::get))
        .min(eps_grid.len());
    let chunk = eps_grid.len().div_ceil(workers);
    let kkt_ref = &kkt;
    let points: Vec<SweepPoint> = thread::scope(|s| {
        let handles: Vec<_> = eps_grid
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter().map(|&e| sweep_point(p, l, kkt_ref, e)).collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    Ok(assemble(eps_grid, kkt, points))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub eps: f64,
    pub horizon: f64,
    pub boundary_cutoff: f64,
    /// sup over the grid of `‖(x, μ) − (x̃, μ̃)‖`.
    pub sup_x_mu_dev: f64,
    /// sup over grid times `t ≥ boundary_cutoff` of `‖θ‖`.
    pub sup_theta_tail: f64,
    /// ε-dynamics sampled on the shared grid, flat `[x, λ]`.
    pub full: Trajectory,
    /// Quasi-steady-state model on the shared grid, flat `[x, μ]`.
    pub reduced: Trajectory,
}

/// Integrator settings used by [`trajectory_deviation`].
pub fn deviation_options(eps: f64, horizon: f64) -> IntegratorOptions {
    IntegratorOptions { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegratorOptions::for_eps(eps, horizon) }
}

/// Integrates the ε-dynamics from `s0` and the quasi-steady-state model from
/// `(x(0), mean λ(0))` on a shared grid and measures how far apart they get.
/// `boundary_cutoff` defaults to `20ε`.
pub fn trajectory_deviation(
    p: &ResourceProblem,
    l: &Laplacian,
    tr: &ConsensusTransform,
    eps: f64,
    s0: &NetworkState,
    horizon: f64,
    boundary_cutoff: Option<f64>,
) -> Result<DeviationReport> {
    trajectory_deviation_with(p, l, tr, eps, s0, horizon, boundary_cutoff, &deviation_options(eps, horizon))
}

#[allow(clippy::too_many_arguments)]
pub fn trajectory_deviation_with(
    p: &ResourceProblem,
    l: &Laplacian,
    tr: &ConsensusTransform,
    eps: f64,
    s0: &NetworkState,
    horizon: f64,
    boundary_cutoff: Option<f64>,
    opts: &IntegratorOptions,
) -> Result<DeviationReport> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon={horizon} must be positive")));
    }
    let cutoff = boundary_cutoff.unwrap_or(DEFAULT_CUTOFF_FACTOR * eps);
    if !(cutoff >= 0.0 && cutoff <= horizon) {
        return Err(Error::InvalidParameter(format!(
            "boundary cutoff {cutoff} must lie in [0, horizon={horizon}]"
        )));
    }
    let n = p.n();
    let nn = p.dim_total();
    dim_check("transform size", p.n_agents(), tr.n_nodes())?;
    dim_check("initial x", nn, s0.x.len())?;
    dim_check("initial lambda", nn, s0.lambda.len())?;
    let full_sys = SuboptimalSystem::new(p, l, eps)?;
    let reduced_sys = PrimalDualSystem::quasi_steady_state(p);

    let mu0 = tr.forward(n, &s0.lambda)[..n].to_vec();
    let r0 = [s0.x.as_slice(), mu0.as_slice()].concat();
    let opts = IntegratorOptions { t_end: horizon, ..opts.clone() };

    let coarse = integrate(&reduced_sys, &r0, &IntegratorOptions { record_every: 1, ..opts.clone() }, &[])?;
    let mut grid = coarse.times;
    if let Err(pos) = grid.binary_search_by(|t| t.total_cmp(&cutoff)) {
        grid.insert(pos, cutoff);
    }
    let reduced = integrate_to_times(&reduced_sys, &r0, &grid, &opts, &[])?;
    let full = integrate_to_times(&full_sys, &s0.to_flat(), &grid, &opts, &[])?;

    let mut sup_x_mu_dev: f64 = 0.0;
    let mut sup_theta_tail: f64 = 0.0;
    for ((t, fs), rs) in full.times.iter().zip(&full.states).zip(&reduced.states) {
        let (x, lambda) = fs.split_at(nn);
        let w = tr.forward(n, lambda);
        let (mu, theta) = w.split_at(n);
        let dx = linalg::dist(x, &rs[..nn]);
        let dmu = linalg::dist(mu, &rs[nn..]);
        sup_x_mu_dev = sup_x_mu_dev.max(dx.hypot(dmu));
        if *t >= cutoff {
            sup_theta_tail = sup_theta_tail.max(linalg::norm(theta));
        }
    }
    Ok(DeviationReport {
        eps,
        horizon,
        boundary_cutoff: cutoff,
        sup_x_mu_dev,
        sup_theta_tail,
        full,
        reduced,
    })
}
