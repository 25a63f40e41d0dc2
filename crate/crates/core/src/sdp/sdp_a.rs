//! Single-secret mechanism design.
//!
//! The certified loss is proportional to λmax(I/σ_s² + Aᵀ(Σ_{u|s} + X)⁻¹A) where X = Σ^(g)_uu.
//! The exact program minimizes it through Schur complements (p bounds 1/τ, q bounds the rest):
//!
//! ```text
//! minimize p + q  s.t.  [[q·I, Aᵀ], [A, Σ_{u|s} + X]] ⪰ 0,   [[p, 1], [1, τ]] ⪰ 0,
//!                       X ⪰ 0,   k·τ + tr X ≤ n·o_t
//! ```
//!
//! with σ_s² = τ. The surrogate program instead maximizes the minimum eigenvalue of
//! Ã⁻ B̃⁻¹ Ã⁻ᵀ = τ·P_sP_sᵀ + P_u(Σ_{u|s} + X)P_uᵀ, which is linear in (τ, X).

use nalgebra::{DMatrix, DVector};

use super::conic::{Cone, ConicProblem, Point, XMap};
use super::{SdpAObjective, SdpSolution, SolverOptions, SolverStatus};
use crate::error::{Error, Result};
use crate::gp::conditional_blocks;
use crate::linalg;
use crate::mechanism::{NoiseMechanism, UtilityBudget};
use crate::secrets::SecretSet;

/// Regression operators at or below this magnitude are treated as exactly zero.
const DEGENERATE_A: f64 = 1e-12;

/// Derived quantities of one design problem.
pub struct SdpAProblem {
    pub n: usize,
    pub secret: SecretSet,
    pub budget: UtilityBudget,
    /// A = Σ_us Σ_ss⁻¹
    pub a: DMatrix<f64>,
    /// Σ_{u|s}
    pub cond_cov: DMatrix<f64>,
}

impl SdpAProblem {
    pub fn new(prior_cov: &DMatrix<f64>, secret: &SecretSet, budget: &UtilityBudget) -> Result<Self> {
        linalg::check_square(prior_cov, secret.n())?;
        if budget.n != secret.n() {
            return Err(Error::DimensionMismatch { expected: secret.n(), found: budget.n });
        }
        let blocks = conditional_blocks(prior_cov, secret.indices())?;
        Ok(Self {
            n: secret.n(),
            secret: secret.clone(),
            budget: *budget,
            a: blocks.regression,
            cond_cov: blocks.cond_cov,
        })
    }

    fn k(&self) -> usize {
        self.secret.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.a.amax() <= DEGENERATE_A
    }

    /// Numerical column rank of A.
    pub fn regression_rank(&self) -> usize {
        let sv = self.a.clone().singular_values();
        let top = sv.max();
        sv.iter().filter(|&&x| x > 1e-10 * top.max(f64::MIN_POSITIVE)).count()
    }

    /// λmax(I/τ + Aᵀ(Σ_{u|s} + X)⁻¹A), the quantity the bound scales with.
    pub fn exact_objective(&self, tau: f64, x: &DMatrix<f64>) -> Result<f64> {
        let inner = &self.cond_cov + x;
        let ch = linalg::cholesky(&inner, "conditional covariance plus remainder noise")?;
        let y = ch.l().solve_lower_triangular(&self.a).expect("positive diagonal");
        let eff = y.transpose() * y;
        Ok(1.0 / tau + linalg::max_eigenvalue(&eff).max(0.0))
    }

    /// (P_s, P_u): the two column blocks of the left pseudo-inverse of Ã = [I; A].
    fn pinv_blocks(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let k = self.k();
        let gram = DMatrix::identity(k, k) + self.a.transpose() * &self.a;
        let ch = linalg::cholesky(&gram, "I + AᵀA")?;
        let ps = linalg::symmetrize(&ch.inverse());
        let pu = &ps * self.a.transpose();
        Ok((ps, pu))
    }

    /// λmin(Ã⁻ B̃⁻¹ Ã⁻ᵀ) at (τ, X).
    pub fn pinv_objective(&self, tau: f64, x: &DMatrix<f64>) -> Result<f64> {
        let (ps, pu) = self.pinv_blocks()?;
        let lmat = &ps * ps.transpose() * tau + &pu * (&self.cond_cov + x) * pu.transpose();
        Ok(linalg::min_eigenvalue(&lmat))
    }

    pub fn solve(&self, objective: SdpAObjective, opts: &SolverOptions) -> Result<SdpSolution> {
        let k = self.k();
        let m = self.n - k;
        let b = self.budget.total();
        if self.is_degenerate() {
            // nothing to infer from the remainder: only the direct term matters
            let x = DMatrix::zeros(m, m);
            return self.finish(b / k as f64, x, SolverStatus::Optimal, 0.0, 0);
        }
        let (prob, start) = match objective {
            SdpAObjective::Exact => exact_program(self),
            SdpAObjective::PseudoInverse => {
                let rank = self.regression_rank();
                if rank < k {
                    return Err(Error::RankDeficient { rank, required: k });
                }
                pinv_program(self)?
            }
        };
        let r = prob.solve(start, opts);
        let (tau, status, gap, iterations) = (r.point.z[TAU], r.status, r.gap, r.iterations);
        let x = linalg::symmetrize(&r.point.x);
        // spend any leftover budget: more noise never raises the loss
        let used = k as f64 * tau + x.trace();
        let scale = if used > 0.0 { b / used } else { 1.0 };
        let scale = scale.max(1.0);
        self.finish(tau * scale, x * scale, status, gap, iterations)
    }

    fn finish(
        &self,
        tau: f64,
        x: DMatrix<f64>,
        status: SolverStatus,
        gap: f64,
        iterations: usize,
    ) -> Result<SdpSolution> {
        if !(tau > 0.0) || !linalg::all_finite(&x) {
            return Err(Error::Solver("design solver produced a non-finite iterate".into()));
        }
        let t = self.exact_objective(tau, &x)?;
        let pinv = self.pinv_objective(tau, &x)?;
        let mechanism = NoiseMechanism::from_blocks(self.n, self.secret.indices(), tau, &x)?;
        tracing::debug!(
            target: "ciptrace::sdp",
            problem = "sdp_a",
            status = ?status,
            iterations,
            gap,
            beta_star = 1.0 / t,
            pinv_objective = pinv,
            "solve finished"
        );
        Ok(SdpSolution {
            mechanism,
            beta_star: 1.0 / t,
            pinv_objective: pinv,
            status,
            duality_gap: gap,
            iterations,
        })
    }
}

/// Cones of the exact program over X and z = (τ, p, q).
fn exact_program(p: &SdpAProblem) -> (ConicProblem, Point) {
    let (k, m) = (p.k(), p.n - p.k());
    let b = p.budget.total();
    let mut g0 = DMatrix::zeros(k + m, k + m);
    g0.view_mut((0, k), (k, m)).copy_from(&p.a.transpose());
    g0.view_mut((k, 0), (m, k)).copy_from(&p.a);
    g0.view_mut((k, k), (m, m)).copy_from(&p.cond_cov);
    let mut embed = DMatrix::zeros(k + m, m);
    embed.view_mut((k, 0), (m, m)).fill_with_identity();
    let mut q_dir = DMatrix::zeros(k + m, k + m);
    q_dir.view_mut((0, 0), (k, k)).fill_with_identity();
    let unit = |i: usize, j: usize| DMatrix::from_fn(2, 2, |a, c| if (a, c) == (i, j) { 1.0 } else { 0.0 });
    let cones = vec![
        Cone { constant: g0, x_map: XMap::Congruence(embed), z_maps: vec![(Q, q_dir)] },
        Cone {
            constant: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            x_map: XMap::None,
            z_maps: vec![(P, unit(0, 0)), (TAU, unit(1, 1))],
        },
        Cone { constant: DMatrix::zeros(m, m), x_map: XMap::Identity, z_maps: vec![] },
        Cone {
            constant: DMatrix::from_element(1, 1, b),
            x_map: XMap::Trace(-1.0),
            z_maps: vec![(TAU, DMatrix::from_element(1, 1, -(k as f64)))],
        },
    ];
    let prob = ConicProblem {
        m,
        nz: 3,
        c_x: DMatrix::zeros(m, m),
        c_z: DVector::from_vec(vec![0.0, 1.0, 1.0]),
        cones,
    };
    let gamma = b / (2.0 * (m + k) as f64);
    let x = DMatrix::identity(m, m) * gamma;
    let eff = p.exact_objective(1.0, &x).expect("Σ_{u|s} + γI is positive definite") - 1.0;
    let start = Point { x, z: DVector::from_vec(vec![gamma, 1.0 / gamma + 1.0, eff + 1.0]) };
    (prob, start)
}

// scalar coordinates of the exact program
const TAU: usize = 0;
const P: usize = 1;
/// bound on λmax(Σ_eff)
const Q: usize = 2;

/// Cones of the surrogate program over X and z = (τ, β):
/// maximize β subject to τ·P_sP_sᵀ + P_u(Σ_{u|s} + X)P_uᵀ − β·I ⪰ 0.
fn pinv_program(p: &SdpAProblem) -> Result<(ConicProblem, Point)> {
    let (k, m) = (p.k(), p.n - p.k());
    let b = p.budget.total();
    let (ps, pu) = p.pinv_blocks()?;
    let mm = &ps * ps.transpose();
    let l0 = linalg::symmetrize(&(&pu * &p.cond_cov * pu.transpose()));
    let cones = vec![
        Cone {
            constant: l0,
            x_map: XMap::Congruence(pu.clone()),
            z_maps: vec![(0, mm.clone()), (1, -DMatrix::identity(k, k))],
        },
        Cone { constant: DMatrix::zeros(1, 1), x_map: XMap::None, z_maps: vec![(0, DMatrix::identity(1, 1))] },
        Cone { constant: DMatrix::zeros(m, m), x_map: XMap::Identity, z_maps: vec![] },
        Cone {
            constant: DMatrix::from_element(1, 1, b),
            x_map: XMap::Trace(-1.0),
            z_maps: vec![(0, DMatrix::from_element(1, 1, -(k as f64)))],
        },
    ];
    let prob = ConicProblem {
        m,
        nz: 2,
        c_x: DMatrix::zeros(m, m),
        c_z: DVector::from_vec(vec![0.0, -1.0]),
        cones,
    };
    let gamma = b / (2.0 * (m + k) as f64);
    let x = DMatrix::identity(m, m) * gamma;
    let l = &mm * gamma + &pu * (&p.cond_cov + &x) * pu.transpose();
    let beta = linalg::min_eigenvalue(&l) - 1.0;
    Ok((prob, Point { x, z: DVector::from_vec(vec![gamma, beta]) }))
}
