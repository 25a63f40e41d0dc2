//! Random problem generators and small reference computations shared by the integration tests.
//! Linear algebra here goes straight through nalgebra so the checks do not lean on the
//! library's own helpers.

#![allow(dead_code)]

use ciptrace::gp::build_covariance;
use ciptrace::{KernelSpec, NoiseMechanism, SecretSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut TestRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

pub fn gaussian_matrix(rng: &mut TestRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut TestRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// B Bᵀ / rank with B n×rank; singular when rank < n.
pub fn random_psd(rng: &mut TestRng, n: usize, rank: usize) -> DMatrix<f64> {
    if rank == 0 {
        return DMatrix::zeros(n, n);
    }
    let b = gaussian_matrix(rng, n, rank);
    let m = &b * b.transpose() / rank as f64;
    (&m + m.transpose()) * 0.5
}

pub fn random_spd(rng: &mut TestRng, n: usize) -> DMatrix<f64> {
    random_psd(rng, n, n + 2) + DMatrix::identity(n, n) * 0.05
}

pub fn random_kernel(rng: &mut TestRng) -> KernelSpec {
    if rng.random_bool(0.6) {
        KernelSpec::rbf(log_uniform(rng, 0.3, 12.0)).unwrap()
    } else {
        KernelSpec::periodic(log_uniform(rng, 0.3, 3.0), rng.random_range(4.0..30.0)).unwrap()
    }
}

/// A kernel prior most of the time, otherwise a dense random covariance.
pub fn random_prior(rng: &mut TestRng, n: usize) -> DMatrix<f64> {
    if rng.random_bool(0.75) {
        build_covariance(&random_kernel(rng), n).unwrap()
    } else {
        random_spd(rng, n)
    }
}

/// Distinct indices from 0..n, in random order.
pub fn random_indices(rng: &mut TestRng, n: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        all.swap(i, j);
    }
    all.truncate(k);
    all
}

/// Basic, basic-point (two coordinates at one time) or compound secret over n ≥ 3 points.
pub fn random_secret(rng: &mut TestRng, n: usize) -> SecretSet {
    let r = log_uniform(rng, 0.2, 3.0);
    match rng.random_range(0..3) {
        0 => SecretSet::basic(rng.random_range(0..n), r, n).unwrap(),
        1 => SecretSet::basic_point(random_indices(rng, n, 2), r, n).unwrap(),
        _ => {
            let k = rng.random_range(2..=3.min(n - 1));
            SecretSet::compound(random_indices(rng, n, k), r, n).unwrap()
        }
    }
}

/// Structured mechanism with a random σ_s² and a random, possibly singular, remainder block.
pub fn random_mechanism(rng: &mut TestRng, secret: &SecretSet) -> NoiseMechanism {
    let m = secret.n() - secret.len();
    let rank = rng.random_range(0..=m);
    let scale = rng.random_range(0.0..3.0);
    let rem = random_psd(rng, m, rank) * scale;
    let sigma = log_uniform(rng, 0.05, 5.0);
    NoiseMechanism::from_blocks(secret.n(), secret.indices(), sigma, &rem).unwrap()
}

pub fn eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).min()
}

pub fn max_eig(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).max()
}

/// Top eigenpair of a symmetric matrix.
pub fn top_eigenvector(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let e = ((m + m.transpose()) * 0.5).symmetric_eigen();
    let k = e.eigenvalues.imax();
    (e.eigenvalues[k], e.eigenvectors.column(k).into_owned())
}

pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn others(idx: &[usize], n: usize) -> Vec<usize> {
    (0..n).filter(|i| !idx.contains(i)).collect()
}

/// Σ_eff = Aᵀ (Σ_{u|s} + Σ^(g)_uu)⁻¹ A with A = Σ_us Σ_ss⁻¹, by plain LU inverses.
pub fn reference_sigma_eff(prior: &DMatrix<f64>, noise: &DMatrix<f64>, secret: &[usize]) -> DMatrix<f64> {
    let n = prior.nrows();
    let rem = others(secret, n);
    let ss_inv = select(prior, secret, secret).try_inverse().unwrap();
    let us = select(prior, &rem, secret);
    let a = &us * &ss_inv;
    let cond = select(prior, &rem, &rem) - &a * us.transpose();
    let inner = cond + select(noise, &rem, &rem);
    let e = a.transpose() * inner.try_inverse().unwrap() * &a;
    (&e + e.transpose()) * 0.5
}

/// A random point in the closed ball of radius r in dimension d; one in four lands on the sphere
/// (pulled in by 1e−12 so the pair survives rounding when offset from a base point).
pub fn ball_point(rng: &mut TestRng, d: usize, r: f64) -> DVector<f64> {
    let v = gaussian_vector(rng, d);
    let dir = &v / v.norm();
    let rad = if rng.random_bool(0.25) { r * (1.0 - 1e-12) } else { r * rng.random::<f64>().powf(1.0 / d as f64) };
    dir * rad
}

/// A discriminative pair for `secret`: every per-time difference lies in the r-ball.
pub fn random_pair(rng: &mut TestRng, secret: &SecretSet) -> (DVector<f64>, DVector<f64>) {
    let k = secret.len();
    let s_j = gaussian_vector(rng, k) * 2.0;
    let mut s_i = s_j.clone();
    for group in secret.time_groups() {
        let d = ball_point(rng, group.len(), secret.radius());
        for (a, &p) in group.iter().enumerate() {
            s_i[p] += d[a];
        }
    }
    (s_i, s_j)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
