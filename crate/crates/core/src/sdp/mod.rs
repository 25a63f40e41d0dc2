//! Mechanism design by semidefinite programming.
//!
//! * [`solve_sdp_a`]: best structured mechanism for one secret under a trace budget.
//! * [`solve_sdp_b`]: smallest-trace covariance dominating a family of mechanisms.
//! * [`multiple_secrets`]: one SDP_A per secret, merged by SDP_B.
//!
//! All programs run on a built-in primal-dual interior-point method. [`SdpBackend`] is the seam
//! for plugging in an external solver.

mod conic;
mod sdp_a;
mod sdp_b;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::loss::certified_epsilon;
use crate::mechanism::{NoiseMechanism, UtilityBudget};
use crate::secrets::SecretSet;

pub use sdp_a::SdpAProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the duality gap is at most `gap_tol · max(1, |objective|)`.
    pub gap_tol: f64,
    /// Cap on Newton steps per solve.
    pub max_iterations: usize,
    /// Tolerance used when auditing constraint satisfaction.
    pub feasibility_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-6, max_iterations: 200, feasibility_tol: 1e-7 }
    }
}

/// Which SDP_A objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdpAObjective {
    /// Minimize λmax(I/σ_s² + Σ_eff), the quantity the certified bound is built from.
    #[default]
    Exact,
    /// Maximize λmin(Ã⁻ B̃⁻¹ Ã⁻ᵀ), the linear surrogate built on the left pseudo-inverse.
    PseudoInverse,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub mechanism: NoiseMechanism,
    /// 1 / λmax(I/σ_s² + Σ_eff) at the returned mechanism.
    pub beta_star: f64,
    /// λmin(Ã⁻ B̃⁻¹ Ã⁻ᵀ) at the returned mechanism. Its distance to `beta_star` measures how
    /// far the surrogate is from the true objective.
    pub pinv_objective: f64,
    pub status: SolverStatus,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn surrogate_gap(&self) -> f64 {
        self.beta_star - self.pinv_objective
    }
}

#[derive(Debug, Clone)]
pub struct SdpBSolution {
    pub cov: DMatrix<f64>,
    pub status: SolverStatus,
    pub duality_gap: f64,
    pub iterations: usize,
}

/// Seam for alternative SDP solvers.
pub trait SdpBackend {
    fn solve_sdp_a(
        &self,
        prior_cov: &DMatrix<f64>,
        secret: &SecretSet,
        budget: &UtilityBudget,
    ) -> Result<SdpSolution>;

    fn solve_sdp_b(&self, family: &[DMatrix<f64>]) -> Result<SdpBSolution>;
}

/// The built-in dense interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinSolver {
    pub options: SolverOptions,
    pub objective: SdpAObjective,
}

impl SdpBackend for BuiltinSolver {
    fn solve_sdp_a(
        &self,
        prior_cov: &DMatrix<f64>,
        secret: &SecretSet,
        budget: &UtilityBudget,
    ) -> Result<SdpSolution> {
        SdpAProblem::new(prior_cov, secret, budget)?.solve(self.objective, &self.options)
    }

    fn solve_sdp_b(&self, family: &[DMatrix<f64>]) -> Result<SdpBSolution> {
        sdp_b::solve(family, &self.options)
    }
}

/// SDP_A with the built-in solver and default settings.
pub fn solve_sdp_a(
    prior_cov: &DMatrix<f64>,
    secret: &SecretSet,
    budget: &UtilityBudget,
) -> Result<SdpSolution> {
    BuiltinSolver::default().solve_sdp_a(prior_cov, secret, budget)
}

/// SDP_B with the built-in solver and default settings.
pub fn solve_sdp_b(family: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    Ok(BuiltinSolver::default().solve_sdp_b(family)?.cov)
}

/// True iff λmin(a − b) ≥ −tol.
pub fn psd_dominates(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<bool> {
    linalg::check_square(a, a.nrows())?;
    linalg::check_square(b, a.nrows())?;
    Ok(linalg::min_eigenvalue(&(a - b)) >= -tol)
}

/// How the trace budget is shared among the secrets of [`multiple_secrets`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetMode {
    /// Each per-secret design gets the full per-point budget o_t.
    PerSecret,
    /// Each per-secret design gets o_t / N.
    SplitTotal,
}

#[derive(Debug, Clone)]
pub struct MultipleSecretsSolution {
    /// Merged noise covariance.
    pub cov: DMatrix<f64>,
    pub per_secret: Vec<SdpSolution>,
    pub merge: SdpBSolution,
}

impl MultipleSecretsSolution {
    /// Smallest eigenvalue of (merged − per-secret mechanism), over all secrets.
    pub fn min_dominance_margin(&self) -> f64 {
        self.per_secret
            .iter()
            .map(|s| linalg::min_eigenvalue(&(&self.cov - s.mechanism.cov())))
            .fold(f64::INFINITY, f64::min)
    }

    /// Certified ε for each secret under the merged covariance.
    pub fn merged_epsilons(
        &self,
        prior_cov: &DMatrix<f64>,
        secrets: &[SecretSet],
        lambda: f64,
    ) -> Result<Vec<f64>> {
        secrets.iter().map(|s| certified_epsilon(prior_cov, &self.cov, s, lambda)).collect()
    }
}

/// Designs one mechanism per secret and merges them into one covariance that dominates all.
pub fn multiple_secrets(
    prior_cov: &DMatrix<f64>,
    secrets: &[SecretSet],
    o_t: f64,
) -> Result<MultipleSecretsSolution> {
    multiple_secrets_with(&BuiltinSolver::default(), prior_cov, secrets, o_t, BudgetMode::PerSecret)
}

pub fn multiple_secrets_with<B: SdpBackend>(
    backend: &B,
    prior_cov: &DMatrix<f64>,
    secrets: &[SecretSet],
    o_t: f64,
    mode: BudgetMode,
) -> Result<MultipleSecretsSolution> {
    let first = secrets.first().ok_or_else(|| invalid("no secrets given"))?;
    let n = first.n();
    if secrets.iter().any(|s| s.n() != n) {
        return Err(invalid("secrets refer to traces of different lengths"));
    }
    let per = match mode {
        BudgetMode::PerSecret => o_t,
        BudgetMode::SplitTotal => o_t / secrets.len() as f64,
    };
    let budget = UtilityBudget::new(per, n)?;
    let per_secret = secrets
        .iter()
        .map(|s| backend.solve_sdp_a(prior_cov, s, &budget))
        .collect::<Result<Vec<_>>>()?;
    let family: Vec<DMatrix<f64>> = per_secret.iter().map(|s| s.mechanism.cov().clone()).collect();
    let merge = backend.solve_sdp_b(&family)?;
    if !linalg::all_finite(&merge.cov) {
        return Err(Error::Solver("merged covariance is not finite".into()));
    }
    Ok(MultipleSecretsSolution { cov: merge.cov.clone(), per_secret, merge })
}
