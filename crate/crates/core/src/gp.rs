//! Gaussian-process priors over index-time traces: kernels, conditionals, Renyi divergences
//! and seeded sampling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_order, invalid, Error, Result};
use crate::linalg;

pub const DEFAULT_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    Rbf,
    Periodic { period: f64 },
}

/// Stationary covariance function over (possibly fractional) time indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub l_eff: f64,
    pub variance: f64,
    pub jitter: f64,
}

impl KernelSpec {
    pub fn rbf(l_eff: f64) -> Result<Self> {
        Self::new(KernelFamily::Rbf, l_eff, 1.0, DEFAULT_JITTER)
    }

    pub fn periodic(l_eff: f64, period: f64) -> Result<Self> {
        Self::new(KernelFamily::Periodic { period }, l_eff, 1.0, DEFAULT_JITTER)
    }

    pub fn new(family: KernelFamily, l_eff: f64, variance: f64, jitter: f64) -> Result<Self> {
        if !(l_eff.is_finite() && l_eff > 0.0) {
            return Err(invalid(format!("lengthscale must be positive, got {l_eff}")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(invalid(format!("variance must be positive, got {variance}")));
        }
        if !(jitter.is_finite() && jitter >= 0.0) {
            return Err(invalid(format!("jitter must be nonnegative, got {jitter}")));
        }
        if let KernelFamily::Periodic { period } = family {
            if !(period.is_finite() && period > 0.0) {
                return Err(invalid(format!("period must be positive, got {period}")));
            }
        }
        Ok(Self { family, l_eff, variance, jitter })
    }

    pub fn with_lengthscale(&self, l_eff: f64) -> Result<Self> {
        Self::new(self.family, l_eff, self.variance, self.jitter)
    }

    pub fn with_jitter(&self, jitter: f64) -> Result<Self> {
        Self::new(self.family, self.l_eff, self.variance, jitter)
    }

    /// Kernel value between two time positions, without jitter.
    pub fn eval_at(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        let l2 = self.l_eff * self.l_eff;
        let r = match self.family {
            KernelFamily::Rbf => (-d * d / (2.0 * l2)).exp(),
            KernelFamily::Periodic { period } => {
                let s = (PI * d / period).sin();
                (-2.0 * s * s / l2).exp()
            }
        };
        self.variance * r
    }

    /// Covariance over arbitrary time positions, jitter on the diagonal.
    pub fn covariance_at(&self, positions: &[f64]) -> DMatrix<f64> {
        let n = positions.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| self.eval_at(positions[i], positions[j]));
        for i in 0..n {
            k[(i, i)] += self.jitter;
        }
        k
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Periodic { .. } => "periodic",
        }
    }
}

/// Compact descriptor, e.g. `rbf(l_eff=6,variance=1,jitter=1e-8)`.
impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            KernelFamily::Rbf => write!(
                f,
                "rbf(l_eff={},variance={},jitter={:e})",
                self.l_eff, self.variance, self.jitter
            ),
            KernelFamily::Periodic { period } => write!(
                f,
                "periodic(l_eff={},period={},variance={},jitter={:e})",
                self.l_eff, period, self.variance, self.jitter
            ),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("kernel descriptor `{s}`"));
        let open = s.find('(').ok_or_else(bad)?;
        let body = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let mut l_eff = None;
        let mut period = None;
        let mut variance = 1.0;
        let mut jitter = DEFAULT_JITTER;
        for kv in body.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            match k.trim() {
                "l_eff" => l_eff = Some(v),
                "period" => period = Some(v),
                "variance" => variance = v,
                "jitter" => jitter = v,
                _ => return Err(bad()),
            }
        }
        let l_eff = l_eff.ok_or_else(bad)?;
        let family = match &s[..open] {
            "rbf" => KernelFamily::Rbf,
            "periodic" => KernelFamily::Periodic { period: period.ok_or_else(bad)? },
            _ => return Err(bad()),
        };
        Self::new(family, l_eff, variance, jitter)
    }
}

/// Kernel value between integer time indices `i` and `j`; jitter is excluded.
pub fn kernel_eval(spec: &KernelSpec, i: usize, j: usize) -> f64 {
    spec.eval_at(i as f64, j as f64)
}

/// n×n prior covariance over indices `0..n` with jitter added to the diagonal.
pub fn build_covariance(spec: &KernelSpec, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(invalid("trace length must be positive"));
    }
    let pos: Vec<f64> = (0..n).map(|i| i as f64).collect();
    Ok(spec.covariance_at(&pos))
}

/// Multivariate normal with a symmetric PSD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Mvn {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Mvn {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        linalg::check_square(&cov, mean.len())?;
        if !linalg::all_finite(&cov) || mean.iter().any(|x| !x.is_finite()) {
            return Err(invalid("distribution parameters must be finite"));
        }
        if !linalg::is_symmetric(&cov, 1e-12) {
            return Err(invalid("covariance is not symmetric"));
        }
        let scale = cov.amax().max(1.0);
        if mean.len() > 0 && linalg::min_eigenvalue(&cov) < -1e-9 * scale {
            return Err(invalid("covariance is not positive semidefinite"));
        }
        Ok(Self { mean, cov })
    }

    pub fn zero_mean(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        Self::new(DVector::zeros(n), cov)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Mean-free part of conditioning a covariance on a subset of coordinates.
#[derive(Debug, Clone)]
pub struct ConditionalBlocks {
    pub secret: Vec<usize>,
    pub remainder: Vec<usize>,
    /// A = Σ_us Σ_ss⁻¹
    pub regression: DMatrix<f64>,
    /// Σ_{u|s} = Σ_uu − A Σ_su
    pub cond_cov: DMatrix<f64>,
}

pub fn conditional_blocks(cov: &DMatrix<f64>, secret: &[usize]) -> Result<ConditionalBlocks> {
    let n = cov.nrows();
    linalg::check_square(cov, n)?;
    validate_index_set(secret, n)?;
    let remainder = linalg::complement(secret, n);
    if remainder.is_empty() {
        return Err(invalid("conditioning set must leave at least one coordinate"));
    }
    let s_ss = linalg::submatrix(cov, secret, secret);
    let s_su = linalg::submatrix(cov, secret, &remainder);
    let s_uu = linalg::submatrix(cov, &remainder, &remainder);
    let chol = linalg::cholesky(&s_ss, "secret block of the prior covariance")?;
    // A^T = Σ_ss⁻¹ Σ_su
    let regression = chol.solve(&s_su).transpose();
    let cond_cov = linalg::symmetrize(&(s_uu - &regression * &s_su));
    Ok(ConditionalBlocks { secret: secret.to_vec(), remainder, regression, cond_cov })
}

fn validate_index_set(idx: &[usize], n: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(invalid("conditioning set is empty"));
    }
    let mut seen = vec![false; n];
    for &i in idx {
        if i >= n {
            return Err(invalid(format!("index {i} out of range for dimension {n}")));
        }
        if seen[i] {
            return Err(invalid(format!("index {i} repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Law of the remaining coordinates given the secret coordinates.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub regression: DMatrix<f64>,
    pub remainder: Vec<usize>,
}

pub fn gaussian_conditional(
    dist: &Mvn,
    secret_indices: &[usize],
    x_s: &DVector<f64>,
) -> Result<ConditionalGaussian> {
    if x_s.len() != secret_indices.len() {
        return Err(Error::DimensionMismatch { expected: secret_indices.len(), found: x_s.len() });
    }
    let blocks = conditional_blocks(&dist.cov, secret_indices)?;
    let mu_s = linalg::subvector(&dist.mean, secret_indices);
    let mu_u = linalg::subvector(&dist.mean, &blocks.remainder);
    let mean = mu_u + &blocks.regression * (x_s - mu_s);
    Ok(ConditionalGaussian {
        mean,
        cov: blocks.cond_cov,
        regression: blocks.regression,
        remainder: blocks.remainder,
    })
}

/// Order-λ Renyi divergence between two Gaussians sharing covariance `cov`.
pub fn renyi_mean_shift(
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    cov: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    check_order(lambda)?;
    if mu2.len() != mu1.len() {
        return Err(Error::DimensionMismatch { expected: mu1.len(), found: mu2.len() });
    }
    linalg::check_square(cov, mu1.len())?;
    let chol = linalg::cholesky(cov, "shared covariance")?;
    let d = mu1 - mu2;
    let w = chol.solve(&d);
    Ok(0.5 * lambda * d.dot(&w))
}

/// Order-λ Renyi divergence D(p ‖ q) between Gaussians; infinite when
/// λΣ_q + (1−λ)Σ_p is not positive definite.
pub fn renyi_general_gaussian(p: &Mvn, q: &Mvn, lambda: f64) -> Result<f64> {
    check_order(lambda)?;
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    if p.cov == q.cov {
        return renyi_mean_shift(&p.mean, &q.mean, &p.cov, lambda);
    }
    let cp = linalg::cholesky(&p.cov, "first covariance")?;
    let cq = linalg::cholesky(&q.cov, "second covariance")?;
    let mixed = &q.cov * lambda + &p.cov * (1.0 - lambda);
    let Some(cl) = nalgebra::Cholesky::new(linalg::symmetrize(&mixed)) else {
        return Ok(f64::INFINITY);
    };
    let d = &p.mean - &q.mean;
    let quad = d.dot(&cl.solve(&d));
    let log_ratio =
        linalg::logdet(&cl) - (1.0 - lambda) * linalg::logdet(&cp) - lambda * linalg::logdet(&cq);
    let v = 0.5 * lambda * quad - log_ratio / (2.0 * (lambda - 1.0));
    // roundoff can push an exact zero slightly negative
    Ok(v.max(0.0))
}

/// `count` seeded draws from `dist`.
pub fn sample_mvn(dist: &Mvn, seed: u64, count: usize) -> Vec<DVector<f64>> {
    let factor = linalg::psd_factor(&dist.cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dist.dim();
    (0..count)
        .map(|_| {
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            &dist.mean + &factor * z
        })
        .collect()
}
