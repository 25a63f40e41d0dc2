//! Bayesian adversary with a GP prior: posterior covariance of the trace given a release and
//! the resulting uncertainty intervals on the secret.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::gp::{build_covariance, KernelSpec};
use crate::linalg::{self, format_real};
use crate::mechanism::UtilityBudget;
use crate::secrets::{SecretKind, SecretSet};

/// Σ_{x|z} = (Σ⁻¹ + Σ^(g)⁻¹)⁻¹, evaluated as Σ (Σ + Σ^(g))⁻¹ Σ^(g).
///
/// The product form is the same matrix whenever both inverses exist and is also the limit
/// when Σ^(g) is singular: coordinates released without noise get zero posterior variance.
pub fn posterior_covariance(prior_cov: &DMatrix<f64>, mech_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = prior_cov.nrows();
    linalg::check_square(prior_cov, n)?;
    linalg::check_square(mech_cov, n)?;
    let total = prior_cov + mech_cov;
    let ch = linalg::cholesky(&total, "prior plus noise covariance")?;
    let post = prior_cov * ch.solve(mech_cov);
    Ok(linalg::symmetrize(&post))
}

/// What an interval is reported for.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Secret(SecretSet),
    /// Every index is its own basic secret; intervals are averaged.
    AllBasic { n: usize },
}

impl Target {
    pub fn n(&self) -> usize {
        match self {
            Target::Secret(s) => s.n(),
            Target::AllBasic { n } => *n,
        }
    }
}

fn two_sd(v: f64) -> f64 {
    2.0 * v.max(0.0).sqrt()
}

/// 2σ posterior width on the secret: the mean of 2√(diagonal) over the indices of a basic
/// secret, or 2√(smallest eigenvalue) of the secret block of a compound one.
pub fn uncertainty_interval(post_cov: &DMatrix<f64>, secret: &SecretSet) -> Result<f64> {
    linalg::check_square(post_cov, secret.n())?;
    let idx = secret.indices();
    Ok(match secret.kind() {
        SecretKind::Basic => idx.iter().map(|&i| two_sd(post_cov[(i, i)])).sum::<f64>() / idx.len() as f64,
        SecretKind::Compound => two_sd(linalg::min_eigenvalue(&linalg::submatrix(post_cov, idx, idx))),
    })
}

pub fn target_interval(post_cov: &DMatrix<f64>, target: &Target) -> Result<f64> {
    match target {
        Target::Secret(s) => uncertainty_interval(post_cov, s),
        Target::AllBasic { n } => {
            linalg::check_square(post_cov, *n)?;
            Ok((0..*n).map(|i| two_sd(post_cov[(i, i)])).sum::<f64>() / *n as f64)
        }
    }
}

/// Interval when the mechanism was designed against `assumed` but the adversary uses the prior
/// with lengthscale scaled by each factor.
pub fn misspecification_sweep<F>(
    assumed: &KernelSpec,
    true_scale_factors: &[f64],
    mut mech_designer: F,
    target: &Target,
    budget: &UtilityBudget,
) -> Result<Vec<(f64, f64)>>
where
    F: FnMut(&DMatrix<f64>, &Target, &UtilityBudget) -> Result<DMatrix<f64>>,
{
    let n = target.n();
    if budget.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: budget.n });
    }
    if true_scale_factors.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
        return Err(invalid("scale factors must be positive"));
    }
    let assumed_cov = build_covariance(assumed, n)?;
    let mech = mech_designer(&assumed_cov, target, budget)?;
    true_scale_factors
        .iter()
        .map(|&c| {
            let truth = if c == 1.0 {
                assumed_cov.clone()
            } else {
                build_covariance(&assumed.with_lengthscale(c * assumed.l_eff)?, n)?
            };
            let post = posterior_covariance(&truth, &mech)?;
            Ok((c, target_interval(&post, target)?))
        })
        .collect()
}

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub l_eff: f64,
    pub mechanism: String,
    pub true_scale: f64,
    pub mse: f64,
    pub interval: f64,
    pub epsilon_bound: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["l_eff", "mechanism_name", "mse", "interval", "true_scale", "epsilon_bound"])?;
    for r in rows {
        cw.write_record([
            format_real(r.l_eff),
            r.mechanism.clone(),
            format_real(r.mse),
            format_real(r.interval),
            format_real(r.true_scale),
            format_real(r.epsilon_bound),
        ])?;
    }
    cw.flush()?;
    Ok(())
}
