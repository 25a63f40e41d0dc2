//! Privacy-loss computations: exact CIP losses of Gaussian mechanisms, the eigenvalue bound,
//! prior-posterior conversion, composition, misspecification and independent dimensions.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_order, invalid, Error, Result};
use crate::gp::{conditional_blocks, renyi_general_gaussian, renyi_mean_shift, Mvn};
use crate::linalg::{self, format_real};
use crate::mechanism::NoiseMechanism;
use crate::secrets::{delta_ball_radius, SecretSet};

/// Certified ε(λ) for one secret, with the pieces it is assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyReport {
    pub epsilon: f64,
    pub lambda: f64,
    pub radius: f64,
    pub unique_times: usize,
    /// 1/σ_s²
    pub direct_term: f64,
    /// largest eigenvalue of Σ_eff
    pub alpha_star: f64,
    pub mse: f64,
}

impl PrivacyReport {
    pub fn new(
        lambda: f64,
        radius: f64,
        unique_times: usize,
        direct_term: f64,
        alpha_star: f64,
        mse: f64,
    ) -> Result<Self> {
        check_order(lambda)?;
        if !(direct_term > 0.0 && direct_term.is_finite()) {
            return Err(invalid("direct term 1/sigma_s^2 must be positive and finite"));
        }
        if !(alpha_star >= 0.0) || !(radius > 0.0) || unique_times == 0 {
            return Err(invalid("report components out of range"));
        }
        let epsilon = Self::formula(lambda, radius, unique_times, direct_term, alpha_star);
        Ok(Self { epsilon, lambda, radius, unique_times, direct_term, alpha_star, mse })
    }

    fn formula(lambda: f64, r: f64, s: usize, direct: f64, alpha: f64) -> f64 {
        0.5 * lambda * s as f64 * r * r * (direct + alpha)
    }

    /// ε evaluated again from the stored components.
    pub fn recompute(&self) -> f64 {
        Self::formula(self.lambda, self.radius, self.unique_times, self.direct_term, self.alpha_star)
    }

    pub fn sigma_s_sq(&self) -> f64 {
        1.0 / self.direct_term
    }

    /// Flat key/value record.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("epsilon".into(), format_real(self.epsilon)),
            ("lambda".into(), format_real(self.lambda)),
            ("r".into(), format_real(self.radius)),
            ("S".into(), self.unique_times.to_string()),
            ("sigma_s_sq".into(), format_real(self.sigma_s_sq())),
            ("alpha_star".into(), format_real(self.alpha_star)),
            ("mse".into(), format_real(self.mse)),
        ]
    }

    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(k, _)| k.as_ref() == key)
                .map(|(_, v)| v.as_ref())
                .ok_or_else(|| Error::Parse(format!("report is missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            let v = get(key)?;
            v.parse().map_err(|_| Error::Parse(format!("report field {key}: `{v}`")))
        };
        let s: usize = get("S")?.parse().map_err(|_| Error::Parse("report field S".into()))?;
        let sigma = num("sigma_s_sq")?;
        let mut rep =
            Self::new(num("lambda")?, num("r")?, s, 1.0 / sigma, num("alpha_star")?, num("mse")?)?;
        let stored = num("epsilon")?;
        if (stored - rep.epsilon).abs() > 1e-9 * stored.abs().max(1.0) {
            return Err(Error::Parse(format!(
                "report epsilon {stored} disagrees with its components ({})",
                rep.epsilon
            )));
        }
        rep.epsilon = stored;
        Ok(rep)
    }
}

impl fmt::Display for PrivacyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

/// (ε′, δ) statement derived from an ε(λ) guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConversion {
    pub epsilon: f64,
    pub lambda: f64,
    pub epsilon_prime: f64,
    pub delta: f64,
}

impl GapConversion {
    /// Bound on how much posterior odds may exceed prior odds.
    pub fn odds_multiplier(&self) -> f64 {
        self.epsilon_prime.exp()
    }
}

pub fn prior_posterior_gap(epsilon: f64, lambda: f64, delta: f64) -> Result<GapConversion> {
    check_order(lambda)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(epsilon >= 0.0) {
        return Err(invalid(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let epsilon_prime = epsilon + (1.0 / delta).ln() / (lambda - 1.0);
    Ok(GapConversion { epsilon, lambda, epsilon_prime, delta })
}

fn check_secret(prior_cov: &DMatrix<f64>, secret: &SecretSet) -> Result<()> {
    linalg::check_square(prior_cov, secret.n())
}

fn check_mechanism(mech: &NoiseMechanism, secret: &SecretSet) -> Result<()> {
    if mech.n() != secret.n() {
        return Err(Error::DimensionMismatch { expected: secret.n(), found: mech.n() });
    }
    let mut a = mech.secret_indices().to_vec();
    let mut b = secret.indices().to_vec();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err(invalid("mechanism was built for a different secret set"));
    }
    Ok(())
}

/// Σ_eff = Aᵀ (Σ_{u|s} + Σ^(g)_uu)⁻¹ A, with A = Σ_us Σ_ss⁻¹.
pub fn sigma_eff(
    prior_cov: &DMatrix<f64>,
    mech: &NoiseMechanism,
    secret: &SecretSet,
) -> Result<DMatrix<f64>> {
    check_secret(prior_cov, secret)?;
    check_mechanism(mech, secret)?;
    let blocks = conditional_blocks(prior_cov, secret.indices())?;
    let inner = &blocks.cond_cov + linalg::submatrix(mech.cov(), &blocks.remainder, &blocks.remainder);
    let chol = linalg::cholesky(&inner, "conditional covariance plus remainder noise")?;
    let y = chol.l().solve_lower_triangular(&blocks.regression).expect("positive diagonal");
    Ok(y.transpose() * y)
}

/// ε ≤ (λ/2)·S·r²·(1/σ_s² + α*).
pub fn cip_bound(
    prior_cov: &DMatrix<f64>,
    mech: &NoiseMechanism,
    secret: &SecretSet,
    lambda: f64,
) -> Result<PrivacyReport> {
    check_order(lambda)?;
    if mech.sigma_s_sq() <= 0.0 {
        return Err(invalid("zero secret noise gives unbounded direct loss"));
    }
    let eff = sigma_eff(prior_cov, mech, secret)?;
    let alpha = linalg::max_eigenvalue(&eff).max(0.0);
    PrivacyReport::new(
        lambda,
        secret.radius(),
        secret.unique_times(),
        1.0 / mech.sigma_s_sq(),
        alpha,
        mech.mse(),
    )
}

/// Divergence between the release distributions under two hypotheses on the secret, computed
/// as the direct per-coordinate loss plus the divergence of the remainder-release conditionals.
pub fn exact_cip_loss(
    prior_cov: &DMatrix<f64>,
    mech: &NoiseMechanism,
    secret: &SecretSet,
    s_i: &DVector<f64>,
    s_j: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    check_order(lambda)?;
    check_secret(prior_cov, secret)?;
    check_mechanism(mech, secret)?;
    check_pair(secret, s_i, s_j)?;
    if mech.sigma_s_sq() <= 0.0 {
        return Err(invalid("zero secret noise gives unbounded direct loss"));
    }
    let d = s_i - s_j;
    let direct = 0.5 * lambda * d.norm_squared() / mech.sigma_s_sq();
    let blocks = conditional_blocks(prior_cov, secret.indices())?;
    let inner = &blocks.cond_cov + linalg::submatrix(mech.cov(), &blocks.remainder, &blocks.remainder);
    let mu_i = &blocks.regression * s_i;
    let mu_j = &blocks.regression * s_j;
    Ok(direct + renyi_mean_shift(&mu_i, &mu_j, &inner, lambda)?)
}

fn check_pair(secret: &SecretSet, s_i: &DVector<f64>, s_j: &DVector<f64>) -> Result<()> {
    for v in [s_i, s_j] {
        if v.len() != secret.len() {
            return Err(Error::DimensionMismatch { expected: secret.len(), found: v.len() });
        }
    }
    Ok(())
}

/// Mean map and covariance of the full release Z given X_S = s, for any noise covariance:
/// Z | s ~ N(Ã s, N) with Ã = [I; A] in secret-then-remainder order and
/// N = Σ^(g) + blockdiag(0, Σ_{u|s}).
struct ReleaseConditional {
    a_tilde: DMatrix<f64>,
    cov: DMatrix<f64>,
}

fn release_conditional(
    prior_cov: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    secret: &SecretSet,
) -> Result<ReleaseConditional> {
    check_secret(prior_cov, secret)?;
    linalg::check_square(noise_cov, secret.n())?;
    let blocks = conditional_blocks(prior_cov, secret.indices())?;
    let k = secret.len();
    let order: Vec<usize> = secret.indices().iter().chain(&blocks.remainder).copied().collect();
    let mut cov = linalg::submatrix(noise_cov, &order, &order);
    let m = blocks.remainder.len();
    let mut lower = cov.view_mut((k, k), (m, m));
    lower += &blocks.cond_cov;
    let mut a_tilde = DMatrix::zeros(k + m, k);
    a_tilde.view_mut((0, 0), (k, k)).fill_with_identity();
    a_tilde.view_mut((k, 0), (m, k)).copy_from(&blocks.regression);
    Ok(ReleaseConditional { a_tilde, cov: linalg::symmetrize(&cov) })
}

/// Exact loss for an arbitrary (not necessarily block-structured) noise covariance.
pub fn exact_release_loss(
    prior_cov: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    secret: &SecretSet,
    s_i: &DVector<f64>,
    s_j: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    check_order(lambda)?;
    check_pair(secret, s_i, s_j)?;
    let rc = release_conditional(prior_cov, noise_cov, secret)?;
    renyi_mean_shift(&(&rc.a_tilde * s_i), &(&rc.a_tilde * s_j), &rc.cov, lambda)
}

/// (λ/2)·S·r²·λmax(Ãᵀ N⁻¹ Ã): certified ε(λ) for an arbitrary noise covariance.
///
/// For block-structured mechanisms Ãᵀ N⁻¹ Ã = I/σ_s² + Σ_eff and this coincides with
/// [`cip_bound`]. It is what certifies each secret under a merged covariance.
pub fn certified_epsilon(
    prior_cov: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    secret: &SecretSet,
    lambda: f64,
) -> Result<f64> {
    check_order(lambda)?;
    let rc = release_conditional(prior_cov, noise_cov, secret)?;
    let chol = linalg::cholesky(&rc.cov, "release covariance given the secret")?;
    let y = chol.l().solve_lower_triangular(&rc.a_tilde).expect("positive diagonal");
    let info = y.transpose() * y;
    let r = delta_ball_radius(secret);
    Ok(0.5 * lambda * r * r * linalg::max_eigenvalue(&info).max(0.0))
}

/// Bound for a secret in X when a second trace X̂ is released as well.
///
/// `joint_prior_cov` covers (X, X̂) in that order; the noise on the pair is
/// blockdiag(Σ^(g), Σ̂^(g)).
pub fn compose_bound(
    joint_prior_cov: &DMatrix<f64>,
    mech: &NoiseMechanism,
    mech2: &DMatrix<f64>,
    secret: &SecretSet,
    lambda: f64,
) -> Result<PrivacyReport> {
    let n = mech.n();
    let m = mech2.nrows();
    linalg::check_square(mech2, m)?;
    linalg::check_square(joint_prior_cov, n + m)?;
    check_mechanism(mech, secret)?;
    let mut joint = DMatrix::zeros(n + m, n + m);
    joint.view_mut((0, 0), (n, n)).copy_from(mech.cov());
    joint.view_mut((n, n), (m, m)).copy_from(&linalg::symmetrize(mech2));
    let joint_mech = NoiseMechanism::new(joint, mech.secret_indices().to_vec(), mech.sigma_s_sq())?;
    let times: Vec<f64> = {
        let groups = secret.time_groups();
        let mut t = vec![0.0; secret.len()];
        for (g, members) in groups.iter().enumerate() {
            for &p in members {
                t[p] = g as f64;
            }
        }
        t
    };
    let joint_secret =
        SecretSet::new(secret.indices().to_vec(), &times, secret.radius(), n + m)?;
    cip_bound(joint_prior_cov, &joint_mech, &joint_secret, lambda)
}

fn conditional_at(cov: &DMatrix<f64>, secret: &SecretSet, s: &DVector<f64>) -> Result<Mvn> {
    let b = conditional_blocks(cov, secret.indices())?;
    Mvn::new(&b.regression * s, b.cond_cov)
}

fn max_directed(p: &Mvn, q: &Mvn, lambda: f64) -> Result<f64> {
    let a = renyi_general_gaussian(p, q, lambda)?;
    let b = renyi_general_gaussian(q, p, lambda)?;
    Ok(a.max(b))
}

/// Larger of the two directed order-λ divergences between the conditionals of the non-secret
/// coordinates given X_S = s_i under two zero-mean priors.
pub fn misspec_delta(
    prior_p_cov: &DMatrix<f64>,
    prior_q_cov: &DMatrix<f64>,
    secret: &SecretSet,
    s_i: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    check_order(lambda)?;
    check_secret(prior_p_cov, secret)?;
    check_secret(prior_q_cov, secret)?;
    check_pair(secret, s_i, s_i)?;
    let p = conditional_at(prior_p_cov, secret, s_i)?;
    let q = conditional_at(prior_q_cov, secret, s_i)?;
    max_directed(&p, &q, lambda)
}

/// Same comparison after the mechanism: conditionals of the release Z given X_S = s_i.
///
/// By data processing this never exceeds [`misspec_delta`], and it stays finite when the
/// jitter-level conditional covariances of smooth priors make the latter infinite.
pub fn misspec_delta_released(
    prior_p_cov: &DMatrix<f64>,
    prior_q_cov: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    secret: &SecretSet,
    s_i: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    check_order(lambda)?;
    check_pair(secret, s_i, s_i)?;
    let rp = release_conditional(prior_p_cov, noise_cov, secret)?;
    let rq = release_conditional(prior_q_cov, noise_cov, secret)?;
    let p = Mvn::new(&rp.a_tilde * s_i, rp.cov)?;
    let q = Mvn::new(&rq.a_tilde * s_i, rq.cov)?;
    max_directed(&p, &q, lambda)
}

/// Maximum of `delta_at` over a finite grid of secret values.
pub fn max_over_grid(
    grid: &[DVector<f64>],
    mut delta_at: impl FnMut(&DVector<f64>) -> Result<f64>,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("empty secret-value grid"));
    }
    let mut best = 0.0f64;
    for s in grid {
        best = best.max(delta_at(s)?);
    }
    Ok(best)
}

/// ε′(λ) = ((λ−½)/(λ−1))·Δ(2λ) + Δ(4λ−3) + ((2λ−3/2)/(2λ−2))·ε(4λ−2).
pub fn misspec_bound(
    epsilon_fn: impl Fn(f64) -> f64,
    delta_fn: impl Fn(f64) -> f64,
    lambda: f64,
) -> Result<f64> {
    check_order(lambda)?;
    let d1 = delta_fn(2.0 * lambda);
    let d2 = delta_fn(4.0 * lambda - 3.0);
    let e = epsilon_fn(4.0 * lambda - 2.0);
    for v in [d1, d2, e] {
        if v.is_nan() || v < 0.0 {
            return Err(invalid(format!("divergence inputs must be nonnegative, got {v}")));
        }
        if v.is_infinite() {
            return Ok(f64::INFINITY);
        }
    }
    let c1 = (lambda - 0.5) / (lambda - 1.0);
    let c3 = (2.0 * lambda - 1.5) / (2.0 * lambda - 2.0);
    Ok(c1 * d1 + d2 + c3 * e)
}

/// Combines per-dimension reports of independent dimensions: the α* values add.
pub fn combine_independent_dims(per_dim_reports: &[PrivacyReport]) -> Result<PrivacyReport> {
    let first = per_dim_reports.first().ok_or_else(|| invalid("no per-dimension reports"))?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    let mut alpha = 0.0;
    let mut mse = 0.0;
    for r in per_dim_reports {
        if !close(r.lambda, first.lambda)
            || !close(r.radius, first.radius)
            || r.unique_times != first.unique_times
            || !close(r.direct_term, first.direct_term)
        {
            return Err(invalid("per-dimension reports disagree on lambda, r, S or sigma_s^2"));
        }
        alpha += r.alpha_star;
        mse += r.mse;
    }
    PrivacyReport::new(first.lambda, first.radius, first.unique_times, first.direct_term, alpha, mse)
}
