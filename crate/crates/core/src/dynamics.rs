//! Vector fields of the three allocation algorithms and the change to
//! consensus/disagreement coordinates.
//!
//! * sub-optimal ε-dynamics: `ẋ = −∇f(x) − λ`, `λ̇ = −(1/ε)(L⊗I)λ + (x − b)`
//! * PI baseline with auxiliary state `z`
//! * centralized primal-dual: `ẋ = −∇f(x) − (1⊗I)μ`, `μ̇ = g·((1ᵀ⊗I)x − d)`
//!
//! Each field comes as a checked function on typed states and as an
//! [`OdeSystem`] over a flat state vector for the integrator.

use nalgebra::DMatrix;

use crate::error::{dim_check, Error, Result};
use crate::graph::{ConsensusTransform, Laplacian};
use crate::integrate::OdeSystem;
use crate::linalg;
use crate::problem::ResourceProblem;

/// Stacked primal and multiplier vectors, both of length `nN`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl NetworkState {
    /// `x = b`, `λ = 0`.
    pub fn reference_start(p: &ResourceProblem) -> Self {
        Self { x: p.b_stacked(), lambda: vec![0.0; p.dim_total()] }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        [self.x.as_slice(), self.lambda.as_slice()].concat()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let half = flat.len() / 2;
        Self { x: flat[..half].to_vec(), lambda: flat[half..].to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiState {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z: Vec<f64>,
}

impl PiState {
    pub fn to_flat(&self) -> Vec<f64> {
        [self.x.as_slice(), self.lambda.as_slice(), self.z.as_slice()].concat()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let third = flat.len() / 3;
        Self {
            x: flat[..third].to_vec(),
            lambda: flat[third..2 * third].to_vec(),
            z: flat[2 * third..].to_vec(),
        }
    }
}

/// Proportional and integral consensus gains of the PI baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiConfig {
    pub k_p: f64,
    pub k_i: f64,
}

impl PiConfig {
    pub fn new(k_p: f64, k_i: f64) -> Result<Self> {
        if k_p > 0.0 && k_i > 0.0 && k_p.is_finite() && k_i.is_finite() {
            Ok(Self { k_p, k_i })
        } else {
            Err(Error::InvalidParameter(format!("PI gains must be positive, got k_p={k_p}, k_i={k_i}")))
        }
    }
}

impl Default for PiConfig {
    fn default() -> Self {
        Self { k_p: 1.0, k_i: 1.0 }
    }
}

/// State of the centralized primal-dual model: `x ∈ ℝ^{nN}`, `μ ∈ ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
}

impl ReducedState {
    pub fn to_flat(&self) -> Vec<f64> {
        [self.x.as_slice(), self.mu.as_slice()].concat()
    }

    pub fn from_flat(flat: &[f64], n: usize) -> Self {
        let split = flat.len() - n;
        Self { x: flat[..split].to_vec(), mu: flat[split..].to_vec() }
    }
}

/// Sub-optimal dynamics in `(x, μ, θ)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularState {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
}

impl SingularState {
    pub fn to_flat(&self) -> Vec<f64> {
        [self.x.as_slice(), self.mu.as_slice(), self.theta.as_slice()].concat()
    }

    /// Splits a flat vector for `N` agents of dimension `n`.
    pub fn from_flat(flat: &[f64], n: usize, n_agents: usize) -> Self {
        let nn = n * n_agents;
        Self {
            x: flat[..nn].to_vec(),
            mu: flat[nn..nn + n].to_vec(),
            theta: flat[nn + n..].to_vec(),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps={eps} must be positive and finite")))
    }
}

fn check_graph(p: &ResourceProblem, l: &Laplacian) -> Result<()> {
    dim_check("graph node count vs agent count", p.n_agents(), l.n_nodes())
}

/// Derivative of the sub-optimal ε-dynamics.
pub fn suboptimal_rhs(
    p: &ResourceProblem,
    l: &Laplacian,
    s: &NetworkState,
    eps: f64,
) -> Result<NetworkState> {
    check_eps(eps)?;
    check_graph(p, l)?;
    dim_check("x", p.dim_total(), s.x.len())?;
    dim_check("lambda", p.dim_total(), s.lambda.len())?;
    let sys = SuboptimalSystem::new(p, l, eps)?;
    let mut dy = vec![0.0; 2 * p.dim_total()];
    sys.rhs(0.0, &s.to_flat(), &mut dy);
    Ok(NetworkState::from_flat(&dy))
}

/// Derivative of the PI baseline.
pub fn pi_rhs(p: &ResourceProblem, l: &Laplacian, s: &PiState, cfg: &PiConfig) -> Result<PiState> {
    check_graph(p, l)?;
    for (name, v) in [("x", &s.x), ("lambda", &s.lambda), ("z", &s.z)] {
        dim_check(name, p.dim_total(), v.len())?;
    }
    let sys = PiSystem::new(p, l, *cfg)?;
    let mut dy = vec![0.0; 3 * p.dim_total()];
    sys.rhs(0.0, &s.to_flat(), &mut dy);
    Ok(PiState::from_flat(&dy))
}

/// Derivative of the centralized primal-dual model with unit dual gain.
pub fn primal_dual_rhs(p: &ResourceProblem, s: &ReducedState) -> Result<ReducedState> {
    primal_dual_rhs_with_gain(p, s, 1.0)
}

/// Primal-dual derivative with `μ̇ = gain · ((1ᵀ⊗I)x − d)`.
pub fn primal_dual_rhs_with_gain(
    p: &ResourceProblem,
    s: &ReducedState,
    gain: f64,
) -> Result<ReducedState> {
    dim_check("x", p.dim_total(), s.x.len())?;
    dim_check("mu", p.n(), s.mu.len())?;
    let sys = PrimalDualSystem::with_gain(p, gain)?;
    let mut dy = vec![0.0; p.dim_total() + p.n()];
    sys.rhs(0.0, &s.to_flat(), &mut dy);
    Ok(ReducedState::from_flat(&dy, p.n()))
}

fn block_dim(tr: &ConsensusTransform, len: usize) -> Result<usize> {
    let nodes = tr.n_nodes();
    if len == 0 || len % nodes != 0 {
        return Err(Error::InvalidDimension(format!(
            "stacked length {len} is not a multiple of {nodes} nodes"
        )));
    }
    Ok(len / nodes)
}

/// `(μ, θ) = (T ⊗ I_n) λ`; `x` is carried through unchanged.
pub fn to_singular_coords(s: &NetworkState, tr: &ConsensusTransform) -> Result<SingularState> {
    let n = block_dim(tr, s.lambda.len())?;
    dim_check("x", s.lambda.len(), s.x.len())?;
    let w = tr.forward(n, &s.lambda);
    Ok(SingularState { x: s.x.clone(), mu: w[..n].to_vec(), theta: w[n..].to_vec() })
}

/// `λ = (T⁻¹ ⊗ I_n)(μ, θ) = 1⊗μ + (M₂⊗I)θ`.
pub fn from_singular_coords(s: &SingularState, tr: &ConsensusTransform) -> Result<NetworkState> {
    let n = s.mu.len();
    if n == 0 {
        return Err(Error::InvalidDimension("mu must be nonempty".into()));
    }
    dim_check("theta", n * (tr.n_nodes() - 1), s.theta.len())?;
    dim_check("x", n * tr.n_nodes(), s.x.len())?;
    let w = [s.mu.as_slice(), s.theta.as_slice()].concat();
    Ok(NetworkState { x: s.x.clone(), lambda: tr.inverse(n, &w) })
}

/// Derivative of the sub-optimal dynamics written in `(x, μ, θ)` coordinates.
pub fn singular_rhs(
    p: &ResourceProblem,
    l: &Laplacian,
    tr: &ConsensusTransform,
    s: &SingularState,
    eps: f64,
) -> Result<SingularState> {
    let sys = SingularSystem::new(p, l, tr, eps)?;
    dim_check("x", p.dim_total(), s.x.len())?;
    dim_check("mu", p.n(), s.mu.len())?;
    dim_check("theta", p.n() * (p.n_agents() - 1), s.theta.len())?;
    let mut dy = vec![0.0; sys.dim()];
    sys.rhs(0.0, &s.to_flat(), &mut dy);
    Ok(SingularState::from_flat(&dy, p.n(), p.n_agents()))
}

/// Flat layout `[x, λ]`.
#[derive(Debug, Clone)]
pub struct SuboptimalSystem<'a> {
    p: &'a ResourceProblem,
    l: &'a Laplacian,
    b: Vec<f64>,
    eps: f64,
}

impl<'a> SuboptimalSystem<'a> {
    pub fn new(p: &'a ResourceProblem, l: &'a Laplacian, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        check_graph(p, l)?;
        Ok(Self { p, l, b: p.b_stacked(), eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

impl OdeSystem for SuboptimalSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.p.dim_total()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let nn = self.p.dim_total();
        let (x, lambda) = y.split_at(nn);
        let (dx, dl) = dy.split_at_mut(nn);
        self.p.gradient_into(x, dx);
        for (d, l) in dx.iter_mut().zip(lambda) {
            *d = -*d - l;
        }
        self.l.apply_into(self.p.n(), lambda, dl);
        let inv = 1.0 / self.eps;
        for ((d, xi), bi) in dl.iter_mut().zip(x).zip(&self.b) {
            *d = -inv * *d + (xi - bi);
        }
    }

    fn stiffness_scale(&self) -> Option<f64> {
        Some(self.eps)
    }
}

/// Flat layout `[x, λ, z]`.
#[derive(Debug, Clone)]
pub struct PiSystem<'a> {
    p: &'a ResourceProblem,
    l: &'a Laplacian,
    b: Vec<f64>,
    cfg: PiConfig,
}

impl<'a> PiSystem<'a> {
    pub fn new(p: &'a ResourceProblem, l: &'a Laplacian, cfg: PiConfig) -> Result<Self> {
        check_graph(p, l)?;
        PiConfig::new(cfg.k_p, cfg.k_i)?;
        Ok(Self { p, l, b: p.b_stacked(), cfg })
    }
}

impl OdeSystem for PiSystem<'_> {
    fn dim(&self) -> usize {
        3 * self.p.dim_total()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let nn = self.p.dim_total();
        let n = self.p.n();
        let (x, rest) = y.split_at(nn);
        let (lambda, z) = rest.split_at(nn);
        let (dx, drest) = dy.split_at_mut(nn);
        let (dl, dz) = drest.split_at_mut(nn);
        self.p.gradient_into(x, dx);
        for (d, l) in dx.iter_mut().zip(lambda) {
            *d = -*d - l;
        }
        self.l.apply_into(n, lambda, dz);
        let lz = self.l.apply(n, z);
        for i in 0..nn {
            dl[i] = -self.cfg.k_p * dz[i] - self.cfg.k_i * lz[i] + x[i] - self.b[i];
        }
    }
}

/// Flat layout `[x, μ]`.
#[derive(Debug, Clone)]
pub struct PrimalDualSystem<'a> {
    p: &'a ResourceProblem,
    gain: f64,
}

impl<'a> PrimalDualSystem<'a> {
    /// The centralized primal-dual algorithm, `μ̇ = (1ᵀ⊗I)x − d`.
    pub fn centralized(p: &'a ResourceProblem) -> Self {
        Self { p, gain: 1.0 }
    }

    /// The slow subsystem of the ε-dynamics on the manifold `θ = 0`.
    /// With μ the agent average of λ this is `μ̇ = (1/N)((1ᵀ⊗I)x − d)`.
    pub fn quasi_steady_state(p: &'a ResourceProblem) -> Self {
        Self { p, gain: 1.0 / p.n_agents() as f64 }
    }

    pub fn with_gain(p: &'a ResourceProblem, gain: f64) -> Result<Self> {
        if gain > 0.0 && gain.is_finite() {
            Ok(Self { p, gain })
        } else {
            Err(Error::InvalidParameter(format!("dual gain {gain} must be positive")))
        }
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }
}

impl OdeSystem for PrimalDualSystem<'_> {
    fn dim(&self) -> usize {
        self.p.dim_total() + self.p.n()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let nn = self.p.dim_total();
        let n = self.p.n();
        let (x, mu) = y.split_at(nn);
        let (dx, dmu) = dy.split_at_mut(nn);
        self.p.gradient_into(x, dx);
        for block in dx.chunks_exact_mut(n) {
            for (d, m) in block.iter_mut().zip(mu) {
                *d = -*d - m;
            }
        }
        let sum = linalg::block_sum(x, n);
        for ((d, s), dk) in dmu.iter_mut().zip(sum).zip(self.p.d()) {
            *d = self.gain * (s - dk);
        }
    }
}

/// Flat layout `[x, μ, θ]`.
///
/// `ẋ = −∇f(x) − 1⊗μ − (M₂⊗I)θ`,
/// `μ̇ = (1/N)((1ᵀ⊗I)x − d) − (1/(Nε))(1ᵀLM₂⊗I)θ`,
/// `θ̇ = −(1/ε)(M₁ᵀLM₂⊗I)θ + (M₁ᵀ⊗I)(x − b)`.
/// The `1ᵀLM₂` coupling vanishes on weight-balanced graphs.
#[derive(Debug, Clone)]
pub struct SingularSystem<'a> {
    p: &'a ResourceProblem,
    tr: &'a ConsensusTransform,
    b: Vec<f64>,
    eps: f64,
    fast: DMatrix<f64>,
    drift: DMatrix<f64>,
}

impl<'a> SingularSystem<'a> {
    pub fn new(
        p: &'a ResourceProblem,
        l: &'a Laplacian,
        tr: &'a ConsensusTransform,
        eps: f64,
    ) -> Result<Self> {
        check_eps(eps)?;
        check_graph(p, l)?;
        dim_check("transform size", p.n_agents(), tr.n_nodes())?;
        let lm2 = l.matrix() * &tr.m2;
        let fast = tr.m1.transpose() * &lm2;
        let drift = DMatrix::from_element(1, p.n_agents(), 1.0) * lm2;
        Ok(Self { p, tr, b: p.b_stacked(), eps, fast, drift })
    }

    /// `M₁ᵀLM₂`, whose eigenvalues set the boundary-layer decay rate.
    pub fn fast_matrix(&self) -> &DMatrix<f64> {
        &self.fast
    }
}

impl OdeSystem for SingularSystem<'_> {
    fn dim(&self) -> usize {
        self.p.dim_total() + self.p.n() * self.p.n_agents()
    }

    fn stiffness_scale(&self) -> Option<f64> {
        Some(self.eps)
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.p.n();
        let big_n = self.p.n_agents();
        let nn = self.p.dim_total();
        let (x, rest) = y.split_at(nn);
        let (mu, theta) = rest.split_at(n);
        let (dx, drest) = dy.split_at_mut(nn);
        let (dmu, dtheta) = drest.split_at_mut(n);

        let lambda = {
            let mut l = linalg::kron_identity_apply(&self.tr.m2, n, theta);
            for block in l.chunks_exact_mut(n) {
                for (v, m) in block.iter_mut().zip(mu) {
                    *v += m;
                }
            }
            l
        };
        self.p.gradient_into(x, dx);
        for (d, l) in dx.iter_mut().zip(&lambda) {
            *d = -*d - l;
        }

        let inv = 1.0 / self.eps;
        let inv_n = 1.0 / big_n as f64;
        let sum = linalg::block_sum(x, n);
        let coupling = linalg::kron_identity_apply(&self.drift, n, theta);
        for k in 0..n {
            dmu[k] = inv_n * (sum[k] - self.p.d()[k]) - inv * inv_n * coupling[k];
        }

        let x_minus_b = linalg::sub(x, &self.b);
        let forcing = linalg::kron_identity_apply_transpose(&self.tr.m1, n, &x_minus_b);
        let decay = linalg::kron_identity_apply(&self.fast, n, theta);
        for ((d, dec), f) in dtheta.iter_mut().zip(&decay).zip(&forcing) {
            *d = -inv * dec + f;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_consensus_transform, WeightedDigraph};
    use crate::problem::Quadratic;

    fn setup() -> (ResourceProblem, Laplacian) {
        let p = ResourceProblem::from_costs(vec![
            (Quadratic::isotropic(1, 1.0).unwrap(), vec![1.0 / 3.0]),
            (Quadratic::isotropic(1, 0.25).unwrap(), vec![1.0 / 3.0]),
            (Quadratic::isotropic(1, 1.0).unwrap(), vec![1.0 / 3.0]),
        ])
        .unwrap();
        let g = WeightedDigraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        (p, g.laplacian())
    }

    #[test]
    fn suboptimal_rhs_hand_value() {
        let (p, l) = setup();
        let s = NetworkState::reference_start(&p);
        let d = suboptimal_rhs(&p, &l, &s, 0.1).unwrap();
        let expected = [-1.0 / 3.0, -1.0 / 12.0, -1.0 / 3.0];
        for (a, e) in d.x.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!(d.lambda.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn consensual_multiplier_leaves_only_residual() {
        let (p, l) = setup();
        let s = NetworkState { x: vec![0.2, 0.5, 0.9], lambda: vec![-0.7; 3] };
        let d = suboptimal_rhs(&p, &l, &s, 0.01).unwrap();
        for ((dl, x), b) in d.lambda.iter().zip(&s.x).zip(p.b_stacked()) {
            assert!((dl - (x - b)).abs() < 1e-14);
        }
    }

    #[test]
    fn suboptimal_rhs_rejects_bad_eps_and_dims() {
        let (p, l) = setup();
        let s = NetworkState::reference_start(&p);
        assert!(suboptimal_rhs(&p, &l, &s, 0.0).is_err());
        assert!(suboptimal_rhs(&p, &l, &s, -1.0).is_err());
        let short = NetworkState { x: vec![0.0; 2], lambda: vec![0.0; 3] };
        assert!(suboptimal_rhs(&p, &l, &short, 0.1).is_err());
        let l2 = WeightedDigraph::directed_cycle(4, 1.0).unwrap().laplacian();
        assert!(suboptimal_rhs(&p, &l2, &s, 0.1).is_err());
    }

    #[test]
    fn pi_rhs_origin_and_consensus() {
        let zero_b = ResourceProblem::from_costs(vec![
            (Quadratic::isotropic(2, 1.0).unwrap(), vec![0.0, 0.0]),
            (Quadratic::isotropic(2, 3.0).unwrap(), vec![0.0, 0.0]),
        ])
        .unwrap();
        let l = WeightedDigraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap().laplacian();
        let origin = PiState { x: vec![0.0; 4], lambda: vec![0.0; 4], z: vec![0.0; 4] };
        let d = pi_rhs(&zero_b, &l, &origin, &PiConfig::default()).unwrap();
        assert!(d.to_flat().iter().all(|v| *v == 0.0));

        let (p, l) = setup();
        let s = PiState { x: vec![0.1, 0.2, 0.3], lambda: vec![0.4; 3], z: vec![-1.5; 3] };
        let d = pi_rhs(&p, &l, &s, &PiConfig::new(2.0, 0.5).unwrap()).unwrap();
        for (k, b) in p.b_stacked().iter().enumerate() {
            assert!((d.lambda[k] - (s.x[k] - b)).abs() < 1e-15);
            assert_eq!(d.z[k], 0.0);
        }
        assert!(PiConfig::new(0.0, 1.0).is_err());
    }

    #[test]
    fn primal_dual_examples() {
        let (p, _) = setup();
        let at_opt = ReducedState { x: vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], mu: vec![-1.0 / 6.0] };
        let d = primal_dual_rhs(&p, &at_opt).unwrap();
        assert!(d.to_flat().iter().all(|v| v.abs() < 1e-15));

        let s = ReducedState { x: vec![1.0 / 3.0; 3], mu: vec![0.0] };
        let d = primal_dual_rhs(&p, &s).unwrap();
        let expected = [-1.0 / 3.0, -1.0 / 12.0, -1.0 / 3.0];
        for (a, e) in d.x.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!(d.mu[0].abs() < 1e-15);

        let s = ReducedState { x: vec![0.5, 0.25, 2.0], mu: vec![0.3] };
        let d = primal_dual_rhs(&p, &s).unwrap();
        assert!((d.mu[0] - p.constraint_residual(&s.x).unwrap()[0]).abs() < 1e-15);
        assert!(primal_dual_rhs(&p, &ReducedState { x: vec![0.0; 3], mu: vec![] }).is_err());
    }

    #[test]
    fn singular_coordinates_of_consensus_and_mean() {
        let tr = build_consensus_transform(3).unwrap();
        let s = NetworkState { x: vec![0.0; 3], lambda: vec![2.5; 3] };
        let ss = to_singular_coords(&s, &tr).unwrap();
        assert!((ss.mu[0] - 2.5).abs() < 1e-15);
        assert!(ss.theta.iter().all(|t| t.abs() < 1e-15));

        let s = NetworkState { x: vec![0.0; 3], lambda: vec![0.3, -1.1, 2.0] };
        let ss = to_singular_coords(&s, &tr).unwrap();
        assert!((ss.mu[0] - (0.3 - 1.1 + 2.0) / 3.0).abs() < 1e-15);
        let back = from_singular_coords(&ss, &tr).unwrap();
        assert!(linalg::dist(&back.lambda, &s.lambda) < 1e-10);
    }

    #[test]
    fn theta_zero_maps_to_replicated_mu() {
        let tr = build_consensus_transform(4).unwrap();
        let ss = SingularState { x: vec![0.0; 8], mu: vec![1.5, -2.0], theta: vec![0.0; 6] };
        let s = from_singular_coords(&ss, &tr).unwrap();
        assert_eq!(s.lambda, linalg::replicate(&[1.5, -2.0], 4));
        let bad = SingularState { x: vec![0.0; 8], mu: vec![1.5, -2.0], theta: vec![0.0; 5] };
        assert!(from_singular_coords(&bad, &tr).is_err());
    }

    #[test]
    fn singular_rhs_on_manifold_matches_reduced_model() {
        let (p, l) = setup();
        let tr = build_consensus_transform(3).unwrap();
        let ss = SingularState { x: vec![0.4, 0.1, 0.7], mu: vec![-0.2], theta: vec![0.0, 0.0] };
        let d = singular_rhs(&p, &l, &tr, &ss, 0.1).unwrap();
        let reduced = primal_dual_rhs_with_gain(
            &p,
            &ReducedState { x: ss.x.clone(), mu: ss.mu.clone() },
            1.0 / 3.0,
        )
        .unwrap();
        assert!(linalg::dist(&d.x, &reduced.x) < 1e-15);
        assert!(linalg::dist(&d.mu, &reduced.mu) < 1e-15);
        assert!(singular_rhs(&p, &l, &tr, &ss, 0.0).is_err());
    }
}
