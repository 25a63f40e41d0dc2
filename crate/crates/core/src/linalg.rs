//! Dense symmetric linear algebra helpers shared by the solvers and the loss code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Average a square matrix with its transpose.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetry check relative to the largest entry.
pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn check_square(m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
    }
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.ncols() });
    }
    Ok(())
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    symmetrize(m).symmetric_eigen()
}

/// Eigenvalues of the symmetric part, ascending.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Ratio of extreme eigenvalue magnitudes; infinite when the matrix is not positive definite.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let ev = eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite {
        context: context.to_string(),
        condition: condition_estimate(m),
    })
}

pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, context)?.inverse()))
}

pub fn logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Indices in `0..n` not listed in `idx`, ascending.
pub fn complement(idx: &[usize], n: usize) -> Vec<usize> {
    let mut mask = vec![false; n];
    for &i in idx {
        if i < n {
            mask[i] = true;
        }
    }
    (0..n).filter(|&i| !mask[i]).collect()
}

/// A factor `F` with `F Fᵀ = m` for symmetric PSD `m`; tiny negative eigenvalues are clamped.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = Cholesky::new(symmetrize(m)) {
        return ch.unpack();
    }
    let eig = sym_eigen(m);
    let mut f = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// `f(m)` applied through the eigendecomposition of the symmetric part.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let v = &eig.eigenvectors;
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    let mut vd = v.clone();
    for (j, &s) in d.iter().enumerate() {
        vd.column_mut(j).scale_mut(s);
    }
    symmetrize(&(vd * v.transpose()))
}

/// Shortest decimal that parses back to `x` exactly, in exponent form outside [1e-4, 1e15).
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

const BLOCK: usize = 64;

/// Lower Cholesky factor computed block by block so the trailing updates run through GEMM.
///
/// Used for the large Newton systems where the unblocked factorization dominates runtime.
pub struct BlockedCholesky {
    l: DMatrix<f64>,
}

impl BlockedCholesky {
    pub fn new(mut a: DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        let mut k = 0;
        while k < n {
            let b = BLOCK.min(n - k);
            // diagonal block
            for j in k..k + b {
                let mut d = a[(j, j)];
                for p in k..j {
                    d -= a[(j, p)] * a[(j, p)];
                }
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                let d = d.sqrt();
                a[(j, j)] = d;
                for i in j + 1..k + b {
                    let mut s = a[(i, j)];
                    for p in k..j {
                        s -= a[(i, p)] * a[(j, p)];
                    }
                    a[(i, j)] = s / d;
                }
            }
            let rest = n - k - b;
            if rest > 0 {
                // panel: L21 = A21 L11^{-T}
                let l11 = a.view((k, k), (b, b)).lower_triangle();
                let a21t = a.view((k + b, k), (rest, b)).transpose();
                let l21t = l11.solve_lower_triangular(&a21t)?;
                let l21 = l21t.transpose();
                a.view_mut((k + b, k), (rest, b)).copy_from(&l21);
                let mut a22 = a.view_mut((k + b, k + b), (rest, rest));
                a22.gemm(-1.0, &l21, &l21t, 1.0);
            }
            k += b;
        }
        Some(Self { l: a.lower_triangle() })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.l.solve_lower_triangular(b).expect("factor has a positive diagonal");
        self.l.tr_solve_lower_triangular(&y).expect("factor has a positive diagonal")
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }
}
