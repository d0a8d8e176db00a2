//! Small dense helpers shared by the solver modules.
//!
//! Stacked vectors are laid out agent-major: block `i` occupies
//! `v[i * n..(i + 1) * n]`.

use nalgebra::DMatrix;

/// Computes `(M ⊗ I_n) v` block-wise without forming the Kronecker product.
///
/// `v` must have length `m.ncols() * n`; the result has length `m.nrows() * n`.
pub fn kron_identity_apply(m: &DMatrix<f64>, n: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows() * n];
    kron_identity_apply_into(m, n, v, &mut out);
    out
}

/// In-place variant of [`kron_identity_apply`]; `out` is overwritten.
pub fn kron_identity_apply_into(m: &DMatrix<f64>, n: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(v.len(), m.ncols() * n);
    debug_assert_eq!(out.len(), m.nrows() * n);
    out.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..m.nrows() {
        let dst = &mut out[i * n..(i + 1) * n];
        for j in 0..m.ncols() {
            let a = m[(i, j)];
            if a == 0.0 {
                continue;
            }
            let src = &v[j * n..(j + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }
}

/// Computes `(Mᵀ ⊗ I_n) v` block-wise.
pub fn kron_identity_apply_transpose(m: &DMatrix<f64>, n: usize, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(v.len(), m.nrows() * n);
    let mut out = vec![0.0; m.ncols() * n];
    for j in 0..m.ncols() {
        let dst = &mut out[j * n..(j + 1) * n];
        for i in 0..m.nrows() {
            let a = m[(i, j)];
            if a == 0.0 {
                continue;
            }
            for (d, s) in dst.iter_mut().zip(&v[i * n..(i + 1) * n]) {
                *d += a * s;
            }
        }
    }
    out
}

/// Materializes `M ⊗ I_n`. Only used to assemble Jacobians for dense solves.
pub(crate) fn kron_identity(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows() * n, m.ncols() * n);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let a = m[(i, j)];
            if a != 0.0 {
                for k in 0..n {
                    out[(i * n + k, j * n + k)] = a;
                }
            }
        }
    }
    out
}

/// Sums the `N` blocks of a stacked vector: `(1ᵀ_N ⊗ I_n) v`.
pub fn block_sum(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for block in v.chunks_exact(n) {
        for (o, b) in out.iter_mut().zip(block) {
            *o += b;
        }
    }
    out
}

/// Replicates an `n`-vector over `count` blocks: `(1_N ⊗ I_n) μ`.
pub fn replicate(mu: &[f64], count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(mu.len() * count);
    for _ in 0..count {
        out.extend_from_slice(mu);
    }
    out
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}
