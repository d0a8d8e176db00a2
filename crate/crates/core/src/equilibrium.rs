//! Optimality and equilibrium solvers.
//!
//! The KKT system of the allocation problem is
//! `∇f(x*) + 1⊗μ* = 0`, `(1ᵀ⊗I)x* = d`. The ε-dynamics rest at the unique
//! `(x̄, λ̄)` with `∇f(x̄) + λ̄ = 0` and `(L⊗I)λ̄ = ε(x̄ − b)`. The latter is
//! solved either by damped Newton on the full system, by a single linear
//! solve for quadratic costs, or by iterating the fixed-point map
//! `Φ(z) = (εI + (L⊗I)H)⁻¹(ε(b − x*) + (L⊗I)r(z))` around `x*`.

use std::fmt;

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::linalg::{self, kron_identity};
use crate::dynamics::NetworkState;
use crate::problem::ResourceProblem;

pub const KKT_TOL: f64 = 1e-11;
pub const EQUILIBRIUM_TOL: f64 = 1e-11;
pub const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    /// `μ*` replicated over the agents.
    pub lambda_star: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumMethod {
    Newton,
    PhiIteration,
    ClosedFormQuadratic,
}

impl EquilibriumMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Newton => "newton",
            Self::PhiIteration => "phi-iteration",
            Self::ClosedFormQuadratic => "closed-form-quadratic",
        }
    }
}

impl fmt::Display for EquilibriumMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub eps: f64,
    pub x_bar: Vec<f64>,
    pub lambda_bar: Vec<f64>,
    /// Norm of the stacked equilibrium equations at `(x̄, λ̄)`.
    pub residual: f64,
    pub method: EquilibriumMethod,
    pub iterations: usize,
    /// Largest observed `‖Δz_{k+1}‖ / ‖Δz_k‖` (fixed-point iteration only).
    pub contraction_ratio: Option<f64>,
}

impl Equilibrium {
    pub fn state(&self) -> NetworkState {
        NetworkState { x: self.x_bar.clone(), lambda: self.lambda_bar.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub eps: f64,
    pub x_gap: f64,
    pub lambda_gap: f64,
}

struct NewtonOutcome {
    point: Vec<f64>,
    iterations: usize,
}

fn lu_solve(lu: &LU<f64, Dyn, Dyn>, rhs: &[f64], what: &str) -> Result<Vec<f64>> {
    lu.solve(&DVector::from_column_slice(rhs))
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .map(|v| v.as_slice().to_vec())
        .ok_or_else(|| Error::Singular(what.to_string()))
}

fn factorize(m: DMatrix<f64>, what: &str) -> Result<LU<f64, Dyn, Dyn>> {
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    let lu = m.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |a, p| a.min(p.abs()));
    if min_pivot <= 1e-13 * scale {
        return Err(Error::Singular(format!("{what} (smallest pivot {min_pivot:e})")));
    }
    Ok(lu)
}

/// Damped Newton: full steps are halved until the residual norm decreases.
fn damped_newton(
    residual: impl Fn(&[f64]) -> Vec<f64>,
    jacobian: impl Fn(&[f64]) -> DMatrix<f64>,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
    what: &str,
) -> Result<NewtonOutcome> {
    let mut point = start;
    let mut f = residual(&point);
    let mut norm = linalg::norm(&f);
    for iter in 0..max_iter {
        if norm < tol {
            return Ok(NewtonOutcome { point, iterations: iter });
        }
        let lu = factorize(jacobian(&point), what)?;
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = lu_solve(&lu, &neg, what)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = point.iter().zip(&step).map(|(p, s)| p + alpha * s).collect();
            let f_trial = residual(&trial);
            let n_trial = linalg::norm(&f_trial);
            if n_trial.is_finite() && n_trial < norm {
                point = trial;
                f = f_trial;
                norm = n_trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no decrease is possible: accept if we are at round-off level
            let scale = 1.0 + linalg::norm_inf(&point);
            if norm < 1e3 * tol * scale {
                return Ok(NewtonOutcome { point, iterations: iter + 1 });
            }
            return Err(Error::NonConvergence { iterations: iter + 1, residual: norm });
        }
    }
    if norm < tol {
        Ok(NewtonOutcome { point, iterations: max_iter })
    } else {
        Err(Error::NonConvergence { iterations: max_iter, residual: norm })
    }
}

fn kkt_residual(p: &ResourceProblem, x: &[f64], mu: &[f64]) -> Vec<f64> {
    let n = p.n();
    let mut out = vec![0.0; x.len() + n];
    let (stat, feas) = out.split_at_mut(x.len());
    p.gradient_into(x, stat);
    for block in stat.chunks_exact_mut(n) {
        for (s, m) in block.iter_mut().zip(mu) {
            *s += m;
        }
    }
    let sum = linalg::block_sum(x, n);
    for ((f, s), d) in feas.iter_mut().zip(sum).zip(p.d()) {
        *f = s - d;
    }
    out
}

fn kkt_matrix(p: &ResourceProblem, hess: DMatrix<f64>) -> DMatrix<f64> {
    let n = p.n();
    let nn = p.dim_total();
    let mut k = DMatrix::zeros(nn + n, nn + n);
    k.view_mut((0, 0), (nn, nn)).copy_from(&hess);
    for i in 0..p.n_agents() {
        for c in 0..n {
            k[(i * n + c, nn + c)] = 1.0;
            k[(nn + c, i * n + c)] = 1.0;
        }
    }
    k
}

/// Solves the KKT conditions of the allocation problem.
///
/// Quadratic problems are solved with one linear KKT solve; general costs use
/// damped Newton from `x = b`, `μ = −mean_i ∇f_i(b_i)`.
pub fn solve_kkt(p: &ResourceProblem) -> Result<KktSolution> {
    let n = p.n();
    let nn = p.dim_total();
    let b = p.b_stacked();
    let hess_at = |x: &[f64]| p.total_hessian(x).expect("stacked length");

    let (x, mu, iterations) = if p.is_quadratic() {
        let k = kkt_matrix(p, hess_at(&b));
        let lu = factorize(k, "KKT matrix is singular; the problem is degenerate")?;
        let zero = vec![0.0; nn + n];
        let neg: Vec<f64> = kkt_residual(p, &zero[..nn], &zero[nn..]).iter().map(|v| -v).collect();
        let sol = lu_solve(&lu, &neg, "KKT matrix is singular; the problem is degenerate")?;
        (sol[..nn].to_vec(), sol[nn..].to_vec(), 1)
    } else {
        let g = p.total_gradient(&b)?;
        let mut mu0 = linalg::block_sum(&g, n);
        mu0.iter_mut().for_each(|m| *m = -*m / p.n_agents() as f64);
        let start = [b.as_slice(), mu0.as_slice()].concat();
        let out = damped_newton(
            |z| kkt_residual(p, &z[..nn], &z[nn..]),
            |z| kkt_matrix(p, hess_at(&z[..nn])),
            start,
            KKT_TOL,
            NEWTON_MAX_ITER,
            "KKT Jacobian is singular; the problem is degenerate",
        )?;
        (out.point[..nn].to_vec(), out.point[nn..].to_vec(), out.iterations)
    };
    let kkt_residual = linalg::norm(&kkt_residual(p, &x, &mu));
    Ok(KktSolution {
        lambda_star: linalg::replicate(&mu, p.n_agents()),
        x_star: x,
        mu_star: mu,
        kkt_residual,
        iterations,
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps={eps} must be positive and finite")))
    }
}

fn check_sizes(p: &ResourceProblem, l: &Laplacian) -> Result<()> {
    crate::error::dim_check("graph node count vs agent count", p.n_agents(), l.n_nodes())
}

/// Stacked equilibrium equations `[∇f(x) + λ ; −ε(x − b) + (L⊗I)λ]`.
fn equilibrium_residual(p: &ResourceProblem, l: &Laplacian, b: &[f64], eps: f64, z: &[f64]) -> Vec<f64> {
    let nn = p.dim_total();
    let (x, lambda) = z.split_at(nn);
    let mut out = vec![0.0; 2 * nn];
    let (first, second) = out.split_at_mut(nn);
    p.gradient_into(x, first);
    for (f, l) in first.iter_mut().zip(lambda) {
        *f += l;
    }
    l.apply_into(p.n(), lambda, second);
    for ((s, xi), bi) in second.iter_mut().zip(x).zip(b) {
        *s -= eps * (xi - bi);
    }
    out
}

fn equilibrium_jacobian(p: &ResourceProblem, big_l: &DMatrix<f64>, eps: f64, x: &[f64]) -> DMatrix<f64> {
    let nn = p.dim_total();
    let mut j = DMatrix::zeros(2 * nn, 2 * nn);
    j.view_mut((0, 0), (nn, nn)).copy_from(&p.total_hessian(x).expect("stacked length"));
    j.view_mut((nn, nn), (nn, nn)).copy_from(big_l);
    for k in 0..nn {
        j[(k, nn + k)] = 1.0;
        j[(nn + k, k)] = -eps;
    }
    j
}

fn finish(
    p: &ResourceProblem,
    l: &Laplacian,
    eps: f64,
    x_bar: Vec<f64>,
    lambda_bar: Vec<f64>,
    method: EquilibriumMethod,
    iterations: usize,
    contraction_ratio: Option<f64>,
) -> Equilibrium {
    let z = [x_bar.as_slice(), lambda_bar.as_slice()].concat();
    let residual = linalg::norm(&equilibrium_residual(p, l, &p.b_stacked(), eps, &z));
    Equilibrium { eps, x_bar, lambda_bar, residual, method, iterations, contraction_ratio }
}

/// Damped Newton on the equilibrium equations, starting from `guess` or the
/// KKT point. Refuses graphs that are not weight-balanced and strongly connected.
pub fn solve_equilibrium_newton(
    p: &ResourceProblem,
    l: &Laplacian,
    eps: f64,
    guess: Option<&NetworkState>,
) -> Result<Equilibrium> {
    check_eps(eps)?;
    check_sizes(p, l)?;
    l.require_balanced_connected()?;
    let nn = p.dim_total();
    let start = match guess {
        Some(g) => {
            crate::error::dim_check("guess x", nn, g.x.len())?;
            crate::error::dim_check("guess lambda", nn, g.lambda.len())?;
            g.to_flat()
        }
        None => {
            let kkt = solve_kkt(p)?;
            [kkt.x_star, kkt.lambda_star].concat()
        }
    };
    let b = p.b_stacked();
    let big_l = kron_identity(l.matrix(), p.n());
    let out = damped_newton(
        |z| equilibrium_residual(p, l, &b, eps, z),
        |z| equilibrium_jacobian(p, &big_l, eps, &z[..nn]),
        start,
        EQUILIBRIUM_TOL,
        NEWTON_MAX_ITER,
        "equilibrium Jacobian is singular",
    )?;
    let (x, lambda) = out.point.split_at(nn);
    Ok(finish(p, l, eps, x.to_vec(), lambda.to_vec(), EquilibriumMethod::Newton, out.iterations, None))
}

/// For quadratic costs the equilibrium equations are linear; solves them once.
/// A singular system means the equilibrium is not unique.
pub fn solve_equilibrium_linear(p: &ResourceProblem, l: &Laplacian, eps: f64) -> Result<Equilibrium> {
    check_eps(eps)?;
    check_sizes(p, l)?;
    if !p.is_quadratic() {
        return Err(Error::InvalidParameter(
            "closed-form equilibrium requires quadratic costs".into(),
        ));
    }
    let nn = p.dim_total();
    let b = p.b_stacked();
    let big_l = kron_identity(l.matrix(), p.n());
    let j = equilibrium_jacobian(p, &big_l, eps, &b);
    let lu = factorize(j, "equilibrium system is singular; equilibrium is not unique")?;
    let zero = vec![0.0; 2 * nn];
    let neg: Vec<f64> = equilibrium_residual(p, l, &b, eps, &zero).iter().map(|v| -v).collect();
    let sol = lu_solve(&lu, &neg, "equilibrium system is singular")?;
    let (x, lambda) = sol.split_at(nn);
    Ok(finish(p, l, eps, x.to_vec(), lambda.to_vec(), EquilibriumMethod::ClosedFormQuadratic, 1, None))
}

/// Solves for the equilibrium after checking the graph assumption: one linear
/// solve for quadratic costs, damped Newton otherwise.
pub fn solve_equilibrium(p: &ResourceProblem, l: &Laplacian, eps: f64) -> Result<Equilibrium> {
    check_eps(eps)?;
    check_sizes(p, l)?;
    l.require_balanced_connected()?;
    if p.is_quadratic() {
        solve_equilibrium_linear(p, l, eps)
    } else {
        solve_equilibrium_newton(p, l, eps, None)
    }
}

/// The fixed-point map around the optimum, with `H = ∇²f(x*)` and the
/// factorization of `εI + (L⊗I)H` computed once.
pub struct PhiMap<'a> {
    p: &'a ResourceProblem,
    l: &'a Laplacian,
    x_star: Vec<f64>,
    grad_star: Vec<f64>,
    hess: DMatrix<f64>,
    forcing: Vec<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl<'a> PhiMap<'a> {
    pub fn new(p: &'a ResourceProblem, l: &'a Laplacian, eps: f64, kkt: &KktSolution) -> Result<Self> {
        check_eps(eps)?;
        check_sizes(p, l)?;
        crate::error::dim_check("x_star", p.dim_total(), kkt.x_star.len())?;
        let nn = p.dim_total();
        let hess = p.total_hessian(&kkt.x_star)?;
        let big_l = kron_identity(l.matrix(), p.n());
        let m = DMatrix::identity(nn, nn) * eps + &big_l * &hess;
        let lu = factorize(
            m,
            "εI + (L⊗I)H is singular; eps is outside the valid range or the graph is unbalanced",
        )?;
        let forcing = p
            .b_stacked()
            .iter()
            .zip(&kkt.x_star)
            .map(|(b, x)| eps * (b - x))
            .collect();
        Ok(Self {
            p,
            l,
            grad_star: p.total_gradient(&kkt.x_star)?,
            x_star: kkt.x_star.clone(),
            hess,
            forcing,
            lu,
        })
    }

    /// Second-order Taylor remainder `r(z) = ∇f(x*) + Hz − ∇f(x* + z)`.
    pub fn remainder(&self, z: &[f64]) -> Vec<f64> {
        let x = linalg::add(&self.x_star, z);
        let g = self.p.total_gradient(&x).expect("stacked length");
        let hz = &self.hess * DVector::from_column_slice(z);
        (0..z.len()).map(|k| self.grad_star[k] + hz[k] - g[k]).collect()
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        crate::error::dim_check("z", self.x_star.len(), z.len())?;
        let lr = self.l.apply(self.p.n(), &self.remainder(z));
        let rhs = linalg::add(&self.forcing, &lr);
        lu_solve(&self.lu, &rhs, "εI + (L⊗I)H is singular")
    }
}

/// One application of the fixed-point map `Φ(z, ε)`.
pub fn phi_map(
    p: &ResourceProblem,
    l: &Laplacian,
    eps: f64,
    kkt: &KktSolution,
    z: &[f64],
) -> Result<Vec<f64>> {
    PhiMap::new(p, l, eps, kkt)?.apply(z)
}

/// Iterates `z ← Φ(z)` from `z = 0` until successive iterates differ by less
/// than `tol`. `iterations` counts the updates needed to reach the accepted
/// iterate, so a constant map (quadratic costs) reports one.
pub fn solve_equilibrium_phi(
    p: &ResourceProblem,
    l: &Laplacian,
    eps: f64,
    kkt: &KktSolution,
    tol: f64,
    max_iter: usize,
) -> Result<Equilibrium> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol={tol} must be positive")));
    }
    let map = PhiMap::new(p, l, eps, kkt)?;
    let mut z = vec![0.0; p.dim_total()];
    let mut prev_step: Option<f64> = None;
    let mut worst_ratio: f64 = 0.0;
    let mut expanding = 0;
    for k in 1..=max_iter {
        let next = map.apply(&z)?;
        let step = linalg::dist(&next, &z);
        if let Some(prev) = prev_step.filter(|p| *p > 0.0) {
            let ratio = step / prev;
            worst_ratio = worst_ratio.max(ratio);
            expanding = if ratio >= 1.0 { expanding + 1 } else { 0 };
            if expanding >= 3 {
                return Err(Error::NonContraction { eps, ratio });
            }
        }
        z = next;
        if step < tol {
            let x_bar = linalg::add(&kkt.x_star, &z);
            let lambda_bar: Vec<f64> = p.total_gradient(&x_bar)?.iter().map(|g| -g).collect();
            return Ok(finish(
                p,
                l,
                eps,
                x_bar,
                lambda_bar,
                EquilibriumMethod::PhiIteration,
                k - 1,
                Some(worst_ratio),
            ));
        }
        prev_step = Some(step);
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: prev_step.unwrap_or(f64::NAN) })
}

pub fn suboptimality_gap(eq: &Equilibrium, kkt: &KktSolution) -> GapReport {
    GapReport {
        eps: eq.eps,
        x_gap: linalg::dist(&eq.x_bar, &kkt.x_star),
        lambda_gap: linalg::dist(&eq.lambda_bar, &kkt.lambda_star),
    }
}
