//! Local cost functions and the resource allocation problem
//! `min Σ f_i(x_i)  s.t.  Σ x_i = d = Σ b_i`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_check, Error, Result};

/// A twice differentiable local cost `f: ℝⁿ → ℝ` with analytic derivatives.
///
/// Implementations must be reentrant: evaluation never mutates shared state.
pub trait CostFunction: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` into `out`.
    fn grad_into(&self, x: &[f64], out: &mut [f64]);

    fn hess(&self, x: &[f64]) -> DMatrix<f64>;

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_into(x, &mut out);
        out
    }

    /// Exposes the quadratic coefficients when the cost is exactly quadratic.
    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
}

/// `f(x) = ½ xᵀQx + rᵀx + c` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    q: DMatrix<f64>,
    r: DVector<f64>,
    c: f64,
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, r: DVector<f64>, c: f64) -> Result<Self> {
        let n = q.nrows();
        if n == 0 || q.ncols() != n {
            return Err(Error::InvalidDimension(format!(
                "Q must be square and nonempty, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        dim_check("linear term r", n, r.len())?;
        if q.iter().chain(r.iter()).any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::InvalidParameter("quadratic coefficients must be finite".into()));
        }
        let scale = q.abs().max().max(1.0);
        if (&q - q.transpose()).abs().max() > 1e-10 * scale {
            return Err(Error::InvalidParameter("Q must be symmetric".into()));
        }
        let min_eig = q.clone().symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Q must be positive definite (smallest eigenvalue {min_eig})"
            )));
        }
        Ok(Self { q, r, c })
    }

    /// `f(x) = (a/2)‖x‖²`.
    pub fn isotropic(n: usize, a: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n) * a, DVector::zeros(n), 0.0)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            DVector::zeros(n),
            0.0,
        )
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

impl CostFunction for Quadratic {
    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.q * &x)) + self.r.dot(&x) + self.c
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.r[i];
            for j in 0..n {
                acc += self.q[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }

    fn hess(&self, _x: &[f64]) -> DMatrix<f64> {
        self.q.clone()
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
}

/// One agent: its private cost and reference allocation `b_i`.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cost: Arc<dyn CostFunction>,
    pub b: Vec<f64>,
}

/// The allocation problem. `d` is always derived as `Σ b_i`.
#[derive(Debug, Clone)]
pub struct ResourceProblem {
    n: usize,
    agents: Vec<Agent>,
    d: Vec<f64>,
}

impl ResourceProblem {
    pub fn new(agents: Vec<Agent>) -> Result<Self> {
        let Some(first) = agents.first() else {
            return Err(Error::InvalidDimension("problem needs at least one agent".into()));
        };
        let n = first.cost.dim();
        if n == 0 {
            return Err(Error::InvalidDimension("decision dimension must be positive".into()));
        }
        for (i, a) in agents.iter().enumerate() {
            dim_check(&format!("agent {i} cost dimension"), n, a.cost.dim())?;
            dim_check(&format!("agent {i} reference b"), n, a.b.len())?;
            if a.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("agent {i} has non-finite b")));
            }
        }
        let mut d = vec![0.0; n];
        for a in &agents {
            for (dk, bk) in d.iter_mut().zip(&a.b) {
                *dk += bk;
            }
        }
        Ok(Self { n, agents, d })
    }

    /// Convenience constructor from `(cost, b)` pairs.
    pub fn from_costs<C: CostFunction + 'static>(items: Vec<(C, Vec<f64>)>) -> Result<Self> {
        Self::new(
            items
                .into_iter()
                .map(|(c, b)| Agent { cost: Arc::new(c), b })
                .collect(),
        )
    }

    /// Returns a copy with every reference allocation replaced.
    pub fn with_references(&self, b_stacked: &[f64]) -> Result<Self> {
        dim_check("stacked b", self.dim_total(), b_stacked.len())?;
        let agents = self
            .agents
            .iter()
            .zip(b_stacked.chunks_exact(self.n))
            .map(|(a, b)| Agent { cost: a.cost.clone(), b: b.to_vec() })
            .collect();
        Self::new(agents)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// `nN`, the length of stacked vectors.
    pub fn dim_total(&self) -> usize {
        self.n * self.agents.len()
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn b_stacked(&self) -> Vec<f64> {
        self.agents.iter().flat_map(|a| a.b.iter().copied()).collect()
    }

    pub fn is_quadratic(&self) -> bool {
        self.agents.iter().all(|a| a.cost.as_quadratic().is_some())
    }

    fn check_stacked(&self, x: &[f64]) -> Result<()> {
        dim_check("stacked x", self.dim_total(), x.len())
    }

    pub fn total_cost(&self, x: &[f64]) -> Result<f64> {
        self.check_stacked(x)?;
        Ok(self
            .agents
            .iter()
            .zip(x.chunks_exact(self.n))
            .map(|(a, xi)| a.cost.eval(xi))
            .sum())
    }

    pub fn total_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_stacked(x)?;
        let mut out = vec![0.0; x.len()];
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked stacked gradient for hot loops; lengths must be `nN`.
    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for ((a, xi), gi) in self
            .agents
            .iter()
            .zip(x.chunks_exact(self.n))
            .zip(out.chunks_exact_mut(self.n))
        {
            a.cost.grad_into(xi, gi);
        }
    }

    /// Block-diagonal Hessian of the stacked cost.
    pub fn total_hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_stacked(x)?;
        let n = self.n;
        let mut h = DMatrix::zeros(x.len(), x.len());
        for (i, (a, xi)) in self.agents.iter().zip(x.chunks_exact(n)).enumerate() {
            h.view_mut((i * n, i * n), (n, n)).copy_from(&a.cost.hess(xi));
        }
        Ok(h)
    }

    /// Residual of the allocation constraint, `Σ x_i − d`.
    pub fn constraint_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_stacked(x)?;
        let mut s = crate::linalg::block_sum(x, self.n);
        for (sk, dk) in s.iter_mut().zip(&self.d) {
            *sk -= dk;
        }
        Ok(s)
    }
}

/// Largest coordinate-wise gap between the analytic gradient and a central
/// difference with step `h`.
pub fn check_gradient(f: &dyn CostFunction, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("step h={h} must be positive")));
    }
    dim_check("point", f.dim(), x.len())?;
    let g = f.grad(x);
    let mut probe = x.to_vec();
    let mut worst = 0.0_f64;
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let fp = f.eval(&probe);
        probe[k] = x[k] - h;
        let fm = f.eval(&probe);
        probe[k] = x[k];
        worst = worst.max((g[k] - (fp - fm) / (2.0 * h)).abs());
    }
    Ok(worst)
}

/// Minimum over the samples of the smallest eigenvalue of the stacked Hessian.
pub fn estimate_strong_convexity(p: &ResourceProblem, sample_points: &[Vec<f64>]) -> Result<f64> {
    if sample_points.is_empty() {
        return Err(Error::InvalidParameter("need at least one sample point".into()));
    }
    let n = p.n();
    let mut c0 = f64::INFINITY;
    for x in sample_points {
        p.check_stacked(x)?;
        for (a, xi) in p.agents().iter().zip(x.chunks_exact(n)) {
            let h = a.cost.hess(xi);
            let sym = (&h + h.transpose()) * 0.5;
            c0 = c0.min(sym.symmetric_eigenvalues().min());
        }
    }
    Ok(c0)
}
