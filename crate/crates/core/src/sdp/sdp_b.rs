//! Smallest-trace covariance dominating a family: minimize tr Σ subject to Σ − F_i ⪰ 0.

use nalgebra::{DMatrix, DVector};

use super::conic::{Cone, ConicProblem, Point, XMap};
use super::{SdpBSolution, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::linalg;

pub(crate) fn solve(family: &[DMatrix<f64>], opts: &SolverOptions) -> Result<SdpBSolution> {
    let first = family.first().ok_or_else(|| invalid("SDP_B needs at least one covariance"))?;
    let n = first.nrows();
    for f in family {
        linalg::check_square(f, n)?;
        if !linalg::all_finite(f) {
            return Err(invalid("family member has non-finite entries"));
        }
    }
    let members: Vec<DMatrix<f64>> = family.iter().map(linalg::symmetrize).collect();
    let prob = ConicProblem {
        m: n,
        nz: 0,
        c_x: DMatrix::identity(n, n),
        c_z: DVector::zeros(0),
        cones: members.iter().map(|f| Cone { constant: -f, x_map: XMap::Identity, z_maps: Vec::new() }).collect(),
    };
    let top = members.iter().map(linalg::max_eigenvalue).fold(f64::NEG_INFINITY, f64::max);
    let start = Point { x: DMatrix::identity(n, n) * (top.max(0.0) + 1.0), z: DVector::zeros(0) };
    let r = prob.solve(start, opts);
    let sigma = linalg::symmetrize(&r.point.x);
    // the sum of the members is always feasible; keep it if the iterate is no better
    let sum = members.iter().fold(DMatrix::zeros(n, n), |acc, f| acc + f);
    let cov = if sum.trace() <= sigma.trace() { sum } else { sigma };
    if !linalg::all_finite(&cov) {
        return Err(Error::Solver("merge solver produced a non-finite iterate".into()));
    }
    tracing::debug!(
        target: "ciptrace::sdp",
        problem = "sdp_b",
        status = ?r.status,
        iterations = r.iterations,
        gap = r.gap,
        trace = cov.trace(),
        "solve finished"
    );
    Ok(SdpBSolution { cov, status: r.status, duality_gap: r.gap, iterations: r.iterations })
}
