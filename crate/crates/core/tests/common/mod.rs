#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use suballoc::problem::{CostFunction, Quadratic, ResourceProblem};
use suballoc::{Laplacian, WeightedDigraph};

pub const X_STAR: [f64; 3] = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
pub const MU_STAR: f64 = -1.0 / 6.0;

/// Three scalar agents with curvatures 1, 1/4, 1 sharing d = 1 over the
/// directed 3-cycle 1→2→3→1.
pub fn three_agent() -> (ResourceProblem, Laplacian) {
    let p = ResourceProblem::from_costs(vec![
        (Quadratic::isotropic(1, 1.0).unwrap(), vec![1.0 / 3.0]),
        (Quadratic::isotropic(1, 0.25).unwrap(), vec![1.0 / 3.0]),
        (Quadratic::isotropic(1, 1.0).unwrap(), vec![1.0 / 3.0]),
    ])
    .unwrap();
    let g = WeightedDigraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
    (p, g.laplacian())
}

fn closed_form_scale(eps: f64) -> f64 {
    eps / (6.0 * (4.0 * eps * eps + 9.0 * eps + 6.0))
}

/// Hand-derived equilibrium allocation of [`three_agent`].
pub fn closed_form_x(eps: f64) -> [f64; 3] {
    let c = closed_form_scale(eps);
    let dev = [4.0 * eps + 9.0, -8.0 * eps - 12.0, 4.0 * eps + 3.0];
    std::array::from_fn(|i| X_STAR[i] + c * dev[i])
}

pub fn closed_form_lambda(eps: f64) -> [f64; 3] {
    let c = closed_form_scale(eps);
    let dev = [-(4.0 * eps + 9.0), 2.0 * eps + 3.0, -(4.0 * eps + 3.0)];
    std::array::from_fn(|i| MU_STAR + c * dev[i])
}

/// Union of random weighted cycles: always weight-balanced. With
/// `spanning` the first cycle visits every node, so the graph is strongly
/// connected.
pub fn random_balanced_graph(rng: &mut impl Rng, n: usize, spanning: bool) -> WeightedDigraph {
    let mut w = DMatrix::zeros(n, n);
    let n_cycles = rng.random_range(1..=3);
    for c in 0..n_cycles {
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
            let from = nodes[k];
            let to = nodes[(k + 1) % len];
            w[(to, from)] += weight;
        }
    }
    WeightedDigraph::new(w).unwrap()
}

/// Arbitrary random digraph with edge probability `density`.
pub fn random_digraph(rng: &mut impl Rng, n: usize, density: f64) -> WeightedDigraph {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(density) {
                w[(i, j)] = rng.random_range(0.1..2.0);
            }
        }
    }
    WeightedDigraph::new(w).unwrap()
}

pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * rng.random_range(0.3..2.0)
}

pub fn random_quadratic_problem(rng: &mut impl Rng, n_agents: usize, n: usize) -> ResourceProblem {
    let items = (0..n_agents)
        .map(|_| {
            let q = random_spd(rng, n);
            let r = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let b = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            (Quadratic::new(q, r, rng.random_range(-1.0..1.0)).unwrap(), b)
        })
        .collect();
    ResourceProblem::from_costs(items).unwrap()
}

fn quadratics(p: &ResourceProblem) -> Vec<(DMatrix<f64>, DVector<f64>)> {
    p.agents()
        .iter()
        .map(|a| {
            let q = a.cost.as_quadratic().expect("quadratic agent");
            (q.q().clone(), q.r().clone())
        })
        .collect()
}

/// Optimum of a quadratic problem by eliminating `x_i = −Q_i⁻¹(r_i + μ)`.
pub fn quadratic_kkt_oracle(p: &ResourceProblem) -> (Vec<f64>, Vec<f64>) {
    let n = p.n();
    let qs = quadratics(p);
    let mut s = DMatrix::zeros(n, n);
    let mut sr = DVector::zeros(n);
    for (q, r) in &qs {
        let qi = q.clone().try_inverse().unwrap();
        sr += &qi * r;
        s += qi;
    }
    let d = DVector::from_column_slice(p.d());
    let mu = -s.try_inverse().unwrap() * (d + sr);
    let mut x = Vec::new();
    for (q, r) in &qs {
        let xi = -q.clone().try_inverse().unwrap() * (r + &mu);
        x.extend(xi.iter());
    }
    (x, mu.as_slice().to_vec())
}

/// Equilibrium of a quadratic problem after eliminating `λ = −(Qx + r)`:
/// `(εI + (L⊗I)Q) x = εb − (L⊗I) r`.
pub fn quadratic_equilibrium_oracle(
    p: &ResourceProblem,
    l: &Laplacian,
    eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = p.n();
    let nn = p.dim_total();
    let qs = quadratics(p);
    let mut q = DMatrix::zeros(nn, nn);
    let mut r = DVector::zeros(nn);
    for (i, (qi, ri)) in qs.iter().enumerate() {
        q.view_mut((i * n, i * n), (n, n)).copy_from(qi);
        r.rows_mut(i * n, n).copy_from(ri);
    }
    let big_l = l.matrix().kronecker(&DMatrix::<f64>::identity(n, n));
    let a = DMatrix::identity(nn, nn) * eps + &big_l * &q;
    let rhs = DVector::from_vec(p.b_stacked()) * eps - &big_l * &r;
    let x = a.lu().solve(&rhs).unwrap();
    let lambda = -(&q * &x + r);
    (x.as_slice().to_vec(), lambda.as_slice().to_vec())
}

/// `Σ_k ½ a_k x_k² + ¼ c x_k⁴ + s_k x_k`: strongly convex with modulus
/// `min a_k`, Hessian not constant.
#[derive(Debug, Clone)]
pub struct Quartic {
    pub a: Vec<f64>,
    pub c: f64,
    pub s: Vec<f64>,
}

impl CostFunction for Quartic {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (0..x.len())
            .map(|k| 0.5 * self.a[k] * x[k] * x[k] + 0.25 * self.c * x[k].powi(4) + self.s[k] * x[k])
            .sum()
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..x.len() {
            out[k] = self.a[k] * x[k] + self.c * x[k].powi(3) + self.s[k];
        }
    }

    fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(x.len(), |k, _| self.a[k] + 3.0 * self.c * x[k] * x[k]))
    }
}

pub fn random_quartic_problem(rng: &mut impl Rng, n_agents: usize, n: usize) -> ResourceProblem {
    let items = (0..n_agents)
        .map(|_| {
            let cost = Quartic {
                a: (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
                c: rng.random_range(0.05..0.5),
                s: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
            };
            let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            (cost, b)
        })
        .collect();
    ResourceProblem::from_costs(items).unwrap()
}

/// Samples random feasible directions (agent blocks summing to zero) and
/// returns the smallest cost increase seen from `x`.
pub fn monte_carlo_min_increase(p: &ResourceProblem, x: &[f64], rng: &mut impl Rng, samples: usize) -> f64 {
    let n = p.n();
    let n_agents = p.n_agents();
    let base = p.total_cost(x).unwrap();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let scale = 10f64.powf(rng.random_range(-3.0..0.0));
        let mut dir: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        for c in 0..n {
            let mean = (0..n_agents).map(|i| dir[i * n + c]).sum::<f64>() / n_agents as f64;
            for i in 0..n_agents {
                dir[i * n + c] -= mean;
            }
        }
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + b).collect();
        worst = worst.min(p.total_cost(&y).unwrap() - base);
    }
    worst
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}
