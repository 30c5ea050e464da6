use super::operator::RealOperator;
use super::spectrum::{SolverMeta, Spectrum};
use crate::{Error, Result};

/// Relative symmetry defect tolerated when a stencil is declared
/// self-adjoint in its weighted inner product.
const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric tridiagonal operator, possibly self-adjoint only in a diagonal
/// weighted inner product `<u, v> = sum_i w_i u_i v_i * spacing`.
///
/// The stored form is the operator `A = W^{-1} K` with `K` symmetric. The
/// reduced matrix `W^{1/2} A W^{-1/2}` is symmetric and is what every solver
/// sees; eigenvectors are mapped back and normalized in the weighted norm.
#[derive(Clone, Debug)]
pub struct Tridiag {
    diag: Vec<f64>,
    upper: Vec<f64>,
    weights: Option<Vec<f64>>,
    spacing: f64,
    red_diag: Vec<f64>,
    red_off: Vec<f64>,
}

impl Tridiag {
    /// Plain symmetric tridiagonal matrix.
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        Self::weighted(diag, offdiag, None)
    }

    /// Operator rows `(Au)_i = e_{i-1} u_{i-1} / w_i + d_i u_i + e_i u_{i+1} / w_i`
    /// where `offdiag` holds the symmetric couplings `e_i` of `K = W A`.
    pub fn weighted(diag: Vec<f64>, offdiag: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        let n = diag.len();
        if n < 2 {
            return Err(Error::invalid(format!("tridiagonal size {n} < 2")));
        }
        if offdiag.len() != n - 1 {
            return Err(Error::invalid(format!(
                "off-diagonal length {} != {}",
                offdiag.len(),
                n - 1
            )));
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(Error::invalid("weight length mismatch"));
            }
            if let Some(bad) = w.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::invalid(format!("non-positive weight {bad}")));
            }
        }
        if diag.iter().chain(offdiag.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite matrix entry"));
        }
        let red_off = match &weights {
            None => offdiag.clone(),
            Some(w) => offdiag
                .iter()
                .enumerate()
                .map(|(i, e)| e / (w[i] * w[i + 1]).sqrt())
                .collect(),
        };
        let upper = match &weights {
            None => offdiag,
            Some(w) => offdiag.iter().enumerate().map(|(i, e)| e / w[i]).collect(),
        };
        Ok(Tridiag {
            red_diag: diag.clone(),
            diag,
            upper,
            weights,
            spacing: 1.0,
            red_off,
        })
    }

    /// Build from finite-difference stencil rows and verify that the rows are
    /// symmetric in the weighted inner product, `w_i upper_i = w_{i+1} lower_{i+1}`.
    ///
    /// `lower[i]` couples row `i + 1` to node `i`; `upper[i]` couples row `i`
    /// to node `i + 1`.
    pub fn from_stencil(
        lower: &[f64],
        diag: Vec<f64>,
        upper: &[f64],
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = diag.len();
        if lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(Error::invalid("stencil length mismatch"));
        }
        let w = |i: usize| weights.as_ref().map_or(1.0, |w| w[i]);
        let mut sym = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let a = w(i) * upper[i];
            let b = w(i + 1) * lower[i];
            let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            let defect = (a - b).abs() / scale;
            if defect > SYMMETRY_TOL {
                return Err(Error::Asymmetric { defect, tol: SYMMETRY_TOL });
            }
            sym.push(0.5 * (a + b));
        }
        Self::weighted(diag, sym, weights)
    }

    /// Set the quadrature spacing used when normalizing eigenvectors.
    pub fn with_spacing(mut self, spacing: f64) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Couplings `(Au)_i` receives from `u_{i+1}`.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Symmetric standard form `(diag, offdiag)`.
    pub fn reduced(&self) -> (&[f64], &[f64]) {
        (&self.red_diag, &self.red_off)
    }

    /// Gershgorin interval of the reduced matrix.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.red_off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.red_off[i].abs() } else { 0.0 };
            lo = lo.min(self.red_diag[i] - r);
            hi = hi.max(self.red_diag[i] + r);
        }
        (lo, hi)
    }

    /// Infinity norm of the reduced matrix.
    pub fn norm_inf(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Apply the operator `A` (not the reduced form) to a nodal vector.
    pub fn apply_operator(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            if i > 0 {
                let lower = match &self.weights {
                    None => self.upper[i - 1],
                    Some(w) => self.upper[i - 1] * w[i - 1] / w[i],
                };
                s += lower * x[i - 1];
            }
            y[i] = s;
        }
        y
    }

    /// Weighted norm `sqrt(sum w_i v_i^2 * spacing)`.
    pub fn weighted_norm(&self, v: &[f64]) -> f64 {
        let s: f64 = v.iter().enumerate().map(|(i, x)| self.weight(i) * x * x).sum();
        (s * self.spacing).sqrt()
    }

    fn from_reduced_vector(&self, y: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = match &self.weights {
            None => y.to_vec(),
            Some(w) => y.iter().zip(w).map(|(a, b)| a / b.sqrt()).collect(),
        };
        let norm = self.weighted_norm(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }

    pub fn to_dense_reduced(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.red_diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.red_off[i];
                m[(i + 1, i)] = self.red_off[i];
            }
        }
        m
    }
}

impl RealOperator for Tridiag {
    fn dim(&self) -> usize {
        self.len()
    }

    /// Applies the reduced symmetric matrix.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.red_diag[i] * x[i];
            if i > 0 {
                s += self.red_off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.red_off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }
}

/// Negative pivots of the LDL^T factorization of `T - shift`, or `None` when a
/// pivot is exactly zero.
fn count_pivots(d: &[f64], e: &[f64], shift: f64) -> Option<usize> {
    let mut count = 0;
    let mut q = d[0] - shift;
    for i in 0..d.len() {
        if i > 0 {
            q = d[i] - shift - e[i - 1] * e[i - 1] / q;
        }
        if q == 0.0 {
            return None;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    Some(count)
}

fn ulp(x: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        return f64::MIN_POSITIVE;
    }
    f64::from_bits(a.to_bits() + 1) - a
}

/// Number of eigenvalues of `t` strictly below `e`.
///
/// A pivot that is exactly zero means the shift sits on an eigenvalue of a
/// leading block; the shift is then nudged upward by `n` ulps, at most three
/// times.
pub fn sturm_count(t: &Tridiag, e: f64) -> Result<usize> {
    let (d, off) = t.reduced();
    count_reduced(d, off, e)
}

fn count_reduced(d: &[f64], off: &[f64], e: f64) -> Result<usize> {
    if e == f64::NEG_INFINITY {
        return Ok(0);
    }
    if e == f64::INFINITY {
        return Ok(d.len());
    }
    let mut shift = e;
    for _ in 0..=3 {
        if let Some(c) = count_pivots(d, off, shift) {
            return Ok(c);
        }
        shift += d.len() as f64 * ulp(shift);
    }
    Err(Error::ShiftHitsEigenvalue { shift: e })
}

/// The `k` smallest eigenvalues by bisection, each bracketed to width
/// `<= tol` (or to adjacent floats). Residuals are the bracket half-widths.
pub fn tridiag_eigenvalues(t: &Tridiag, k: usize, tol: f64) -> Result<Spectrum> {
    let n = t.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("requested {k} eigenvalues of a {n}x{n} matrix")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let (d, off) = t.reduced();
    let (glo, ghi) = t.gershgorin();
    let pad = 1e-12 * glo.abs().max(ghi.abs()).max(1.0);
    let (glo, ghi) = (glo - pad, ghi + pad);

    // (point, count below point) samples, reused to tighten later brackets.
    let mut samples: Vec<(f64, usize)> = vec![(glo, 0), (ghi, n)];
    let mut pairs = Vec::with_capacity(k);
    let mut iterations = 0;
    for j in 0..k {
        let mut a = glo;
        let mut b = ghi;
        for &(x, c) in &samples {
            if c <= j && x > a {
                a = x;
            }
            if c > j && x < b {
                b = x;
            }
        }
        while b - a > tol {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let c = count_reduced(d, off, mid)?;
            iterations += 1;
            samples.push((mid, c));
            if c > j {
                b = mid;
            } else {
                a = mid;
            }
        }
        pairs.push((0.5 * (a + b), 0.5 * (b - a), None));
    }
    let meta = SolverMeta {
        solver: "tridiag-bisection",
        grid: format!("n={n}"),
        converged: true,
        iterations,
        ..Default::default()
    };
    // Dedup only merges exact multiplicities (decoupled blocks).
    Ok(Spectrum::from_pairs(pairs, 0.0, meta))
}

/// Banded LU of `T - shift` with partial pivoting (LAPACK `gttrf` layout).
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swap: Vec<bool>,
}

impl TridiagLu {
    fn factor(diag: &[f64], off: &[f64], shift: f64, floor: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|x| x - shift).collect();
        let mut dl = off.to_vec();
        let mut du = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swap = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = floor;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swap[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = floor;
        }
        for x in d.iter_mut() {
            if x.abs() < floor {
                *x = if *x < 0.0 { -floor } else { floor };
            }
        }
        TridiagLu { dl, d, du, du2, swap }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swap[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.dl[i] * b[i];
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn reduced_residual(t: &Tridiag, y: &[f64], lambda: f64) -> f64 {
    let mut ay = vec![0.0; y.len()];
    t.apply(y, &mut ay);
    ay.iter()
        .zip(y)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

const MAX_SWEEPS: usize = 8;

fn inverse_iteration(t: &Tridiag, lambda: f64, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (d, off) = t.reduced();
    let n = d.len();
    let norm = t.norm_inf().max(f64::MIN_POSITIVE);
    let lu = TridiagLu::factor(d, off, lambda, f64::EPSILON * norm);
    let target = 1e-8 * norm;
    // Deterministic start with no special symmetry.
    let mut y: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * ((i as f64) * 0.731).sin()).collect();
    normalize(&mut y);
    for sweep in 0..MAX_SWEEPS {
        lu.solve(&mut y);
        for _ in 0..2 {
            for p in previous {
                let dot: f64 = p.iter().zip(&y).map(|(a, b)| a * b).sum();
                y.iter_mut().zip(p).for_each(|(a, b)| *a -= dot * b);
            }
        }
        normalize(&mut y);
        if sweep >= 1 && reduced_residual(t, &y, lambda) <= target {
            return Ok(y);
        }
    }
    Err(Error::NotConverged {
        solver: "inverse-iteration",
        detail: format!("eigenvector at {lambda} after {MAX_SWEEPS} sweeps"),
    })
}

fn fix_sign(v: &mut [f64]) {
    let imax = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if v[imax] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigenvector for an eigenvalue `lambda` by inverse iteration. The result is
/// normalized in the weighted norm and its largest entry is positive.
pub fn tridiag_eigenvector(t: &Tridiag, lambda: f64) -> Result<Vec<f64>> {
    let mut y = inverse_iteration(t, lambda, &[])?;
    fix_sign(&mut y);
    Ok(t.from_reduced_vector(&y))
}

/// Eigenvectors for a list of ascending eigenvalues; members of a cluster
/// (relative gap below 1e-10 of the matrix norm) are reorthogonalized against
/// each other.
pub fn tridiag_eigenvectors(t: &Tridiag, lambdas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let cluster_gap = 1e-10 * t.norm_inf();
    let mut reduced: Vec<Vec<f64>> = Vec::with_capacity(lambdas.len());
    let mut cluster_start = 0;
    for (i, &lambda) in lambdas.iter().enumerate() {
        if i > 0 && (lambda - lambdas[i - 1]).abs() > cluster_gap {
            cluster_start = i;
        }
        let y = inverse_iteration(t, lambda, &reduced[cluster_start..i])?;
        reduced.push(y);
    }
    Ok(reduced
        .into_iter()
        .map(|mut y| {
            fix_sign(&mut y);
            t.from_reduced_vector(&y)
        })
        .collect())
}

/// `k` smallest eigenpairs: bisection values, inverse-iteration vectors and
/// the true residuals `||Av - lambda v||_W / ||v||_W`.
pub fn tridiag_eigenpairs(t: &Tridiag, k: usize, tol: f64) -> Result<Spectrum> {
    let values = tridiag_eigenvalues(t, k, tol)?;
    let mut lambdas = Vec::with_capacity(k);
    for (v, m) in values.eigenvalues.iter().zip(&values.multiplicities) {
        lambdas.extend(std::iter::repeat(*v).take(*m));
    }
    let vectors = tridiag_eigenvectors(t, &lambdas)?;
    let pairs = lambdas
        .iter()
        .zip(vectors)
        .map(|(&lambda, v)| {
            let av = t.apply_operator(&v);
            let r: Vec<f64> = av.iter().zip(&v).map(|(a, b)| a - lambda * b).collect();
            let res = t.weighted_norm(&r) / t.weighted_norm(&v);
            (lambda, res, Some(v))
        })
        .collect();
    let mut meta = values.meta;
    meta.solver = "tridiag-bisection+inverse-iteration";
    Ok(Spectrum::from_pairs(pairs, 0.0, meta))
}
