use nalgebra::{DMatrix, Dyn, SymmetricEigen};

use super::spectrum::{SolverMeta, Spectrum};
use crate::{Error, Result};

/// Largest matrix accepted by the dense oracle.
pub const DENSE_MAX: usize = 600;

fn check(matrix: &DMatrix<f64>) -> Result<()> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::invalid("dense matrix is not square"));
    }
    if n == 0 || n > DENSE_MAX {
        return Err(Error::invalid(format!("dense size {n} outside 1..={DENSE_MAX}")));
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            defect = defect.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    let tol = 1e-12;
    if defect > tol * scale {
        return Err(Error::Asymmetric { defect: defect / scale, tol });
    }
    Ok(())
}

/// `symmetric_eigen` polished by cyclic Jacobi sweeps on `Q^T M Q`. The QR
/// pass alone can leave eigenvectors with residuals far above rounding (seen
/// at 1e-9 on Lanczos matrices holding a converged, localized pair); the
/// nearly diagonal remainder converges quadratically under Jacobi.
pub(crate) fn refined_symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    let n = m.nrows();
    let first = m.clone().symmetric_eigen();
    let mut q = first.eigenvectors;
    let mut b = q.transpose() * m * &q;
    for _ in 0..8 {
        let mut rotated = false;
        for p in 0..n {
            for r in p + 1..n {
                let apr = 0.5 * (b[(p, r)] + b[(r, p)]);
                if apr.abs() <= 1e-300
                    || apr.abs() <= f64::EPSILON * 1e-2 * (b[(p, p)] * b[(r, r)]).abs().sqrt()
                {
                    continue;
                }
                rotated = true;
                let theta = (b[(r, r)] - b[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (b[(k, p)], b[(k, r)]);
                    b[(k, p)] = c * x - s * y;
                    b[(k, r)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (b[(p, k)], b[(r, k)]);
                    b[(p, k)] = c * x - s * y;
                    b[(r, k)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (q[(k, p)], q[(k, r)]);
                    q[(k, p)] = c * x - s * y;
                    q[(k, r)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let eigenvalues = nalgebra::DVector::from_fn(n, |i, _| b[(i, i)]);
    SymmetricEigen { eigenvectors: q, eigenvalues }
}

/// All eigenvalues of a dense symmetric matrix (Householder reduction followed
/// by implicit QR), with residuals from the computed eigenvectors.
pub fn dense_sym_eigen(matrix: &DMatrix<f64>) -> Result<Spectrum> {
    let mut s = dense_sym_eigenpairs(matrix)?;
    s.vectors = None;
    Ok(s)
}

/// As [`dense_sym_eigen`] but keeps the unit eigenvectors.
pub fn dense_sym_eigenpairs(matrix: &DMatrix<f64>) -> Result<Spectrum> {
    check(matrix)?;
    let sym = (matrix + matrix.transpose()) * 0.5;
    let eig = refined_symmetric_eigen(&sym);
    let pairs = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let v = eig.eigenvectors.column(j).into_owned();
            let r = (&sym * &v - &v * lambda).norm();
            (lambda, r, Some(v.iter().copied().collect::<Vec<f64>>()))
        })
        .collect();
    let meta = SolverMeta {
        solver: "dense-symmetric",
        grid: format!("n={}", matrix.nrows()),
        converged: true,
        ..Default::default()
    };
    Ok(Spectrum::from_pairs(pairs, 0.0, meta))
}
