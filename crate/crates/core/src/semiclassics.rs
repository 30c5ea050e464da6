//! Semiclassical sweeps and asymptotic fits, harmonic and Born–Oppenheimer
//! predictions, quantized-Hessian levels and residual bounds.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::eigencore::{
    hermitian_embed, lanczos, tridiag_eigenvalues, ComplexOperator, LanczosOptions, RealOperator, Spectrum,
    Tridiag,
};
use crate::operators1d::{build_custom, Grid1D};
use crate::{csv_writer, fmt17, Error, Result};

/// `V0 + (2n - 1) h sqrt(V2 / 2)`: the n-th level of `-h^2 d^2 + V` near a
/// non-degenerate minimum with `V(s0) = V0`, `V''(s0) = V2`.
pub fn harmonic_prediction(v0: f64, v2: f64, n: usize, h: f64) -> Result<f64> {
    if !(v2 > 0.0) {
        return Err(Error::invalid(format!("harmonic prediction needs V2 > 0, got {v2}")));
    }
    if n == 0 {
        return Err(Error::invalid("level index starts at 1"));
    }
    Ok(v0 + (2 * n - 1) as f64 * h * (v2 / 2.0).sqrt())
}

/// What an h-sweep builder hands back.
pub enum SweepOperator {
    Tri(Tridiag),
    Real(Box<dyn RealOperator + Send>),
    Complex(Box<dyn ComplexOperator + Send>),
}

/// `n`-th (1-based, distinct) eigenvalue and its residual.
pub fn nth_eigenvalue(op: &SweepOperator, n: usize, opts: &LanczosOptions) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("level index starts at 1"));
    }
    let pick = |s: Spectrum| -> Result<(f64, f64)> {
        if s.len() < n {
            return Err(Error::NotConverged {
                solver: "sweep",
                detail: format!("only {} distinct eigenvalues resolved, wanted {n}", s.len()),
            });
        }
        Ok((s.eigenvalues[n - 1], s.residuals[n - 1]))
    };
    match op {
        SweepOperator::Tri(t) => pick(tridiag_eigenvalues(t, n, 1e-13)?),
        SweepOperator::Real(a) => {
            let s = lanczos(a.as_ref(), &LanczosOptions { k: n, ..opts.clone() })?.require_converged()?;
            pick(s)
        }
        SweepOperator::Complex(a) => {
            let emb = hermitian_embed(a.as_ref());
            let mut k = n;
            loop {
                let s = lanczos(&emb, &LanczosOptions { k, ..opts.clone() })?.require_converged()?;
                if s.len() >= n || k >= 20 {
                    return pick(s);
                }
                k = (k + n - s.len()).min(20);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepEntry {
    pub h: f64,
    pub n: usize,
    pub value: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Default)]
pub struct HSweep {
    pub entries: Vec<SweepEntry>,
}

impl HSweep {
    pub fn hs(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.h).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    /// Rows `h,n,value,residual`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["h", "n", "value", "residual"])?;
        for e in &self.entries {
            out.write_record([fmt17(e.h), e.n.to_string(), fmt17(e.value), fmt17(e.residual)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Solve the `n`-th eigenvalue of `builder(h)` for every `h`. The builder
/// owns the resolution policy (its grid should follow the model's natural
/// length at each `h`).
pub fn h_sweep(
    builder: &(dyn Fn(f64) -> Result<SweepOperator> + Sync),
    hs: &[f64],
    n: usize,
    opts: &LanczosOptions,
) -> Result<HSweep> {
    if hs.len() < 3 {
        return Err(Error::invalid("a sweep needs at least 3 values of h"));
    }
    if hs.windows(2).any(|w| !(w[1] < w[0])) || hs.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::invalid("sweep values of h must be positive and strictly decreasing"));
    }
    let entries = hs
        .par_iter()
        .map(|&h| {
            let (value, residual) = nth_eigenvalue(&builder(h)?, n, opts)?;
            Ok(SweepEntry { h, n, value, residual })
        })
        .collect::<Result<_>>()?;
    Ok(HSweep { entries })
}

/// Least-squares fit of `lambda(h) ~ sum_j c_j h^{e_j}`.
#[derive(Clone, Debug)]
pub struct AsymptoticFit {
    pub exponents: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub rms: f64,
    pub hs: Vec<f64>,
    /// Ratio of extreme singular values of the design matrix.
    pub condition: f64,
    /// `d log(lambda - c_0) / d log h` from the two smallest `h`.
    pub slope: f64,
}

impl AsymptoticFit {
    /// Rows `exponent,coefficient` followed by diagnostic rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["exponent", "coefficient"])?;
        for (e, c) in self.exponents.iter().zip(&self.coefficients) {
            out.write_record([fmt17(*e), fmt17(*c)])?;
        }
        out.write_record(["rms".to_string(), fmt17(self.rms)])?;
        out.write_record(["condition".to_string(), fmt17(self.condition)])?;
        out.write_record(["slope".to_string(), fmt17(self.slope)])?;
        out.flush()?;
        Ok(())
    }
}

pub const MAX_CONDITION: f64 = 1e12;

/// Ordinary least squares on caller-supplied exponents (expected to contain
/// 0 for the slope diagnostic).
pub fn fit_expansion(sweep: &HSweep, exponents: &[f64]) -> Result<AsymptoticFit> {
    fit_points(&sweep.hs(), &sweep.values(), exponents)
}

pub fn fit_points(hs: &[f64], values: &[f64], exponents: &[f64]) -> Result<AsymptoticFit> {
    let (m, p) = (hs.len(), exponents.len());
    if p == 0 || m < p + 1 {
        return Err(Error::invalid(format!("{m} samples cannot fit {p} exponents (need at least p + 1)")));
    }
    let x = DMatrix::from_fn(m, p, |i, j| hs[i].powf(exponents[j]));
    let y = DVector::from_column_slice(values);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned(condition));
    }
    let c = svd.solve(&y, 0.0).map_err(|e| Error::invalid(e.to_string()))?;
    let r = &x * &c - &y;
    let rms = (r.norm_squared() / m as f64).sqrt();
    let coefficients: Vec<f64> = c.iter().copied().collect();
    let c0 = exponents.iter().position(|&e| e == 0.0).map_or(0.0, |j| coefficients[j]);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| hs[a].total_cmp(&hs[b]));
    let (a, b) = (order[0], order[1]);
    let slope = ((values[a] - c0) / (values[b] - c0)).abs().ln() / (hs[a] / hs[b]).ln();
    Ok(AsymptoticFit { exponents: exponents.to_vec(), coefficients, rms, hs: hs.to_vec(), condition, slope })
}

/// Tabulated fiber ground energies and the effective operator built from
/// them.
pub struct BoReduction {
    pub s: Vec<f64>,
    pub nu: Vec<f64>,
    pub effective: Tridiag,
}

/// Born–Oppenheimer reduction: `nu(s)` from `fiber(s)` at every node of
/// `s_grid`, then `-h^2 d_s^2 + nu(s)` on the same grid.
pub fn bo_reduce(fiber: &(dyn Fn(f64) -> Result<Tridiag> + Sync), s_grid: &Grid1D, h: f64) -> Result<BoReduction> {
    if !(h > 0.0) {
        return Err(Error::invalid("bo_reduce needs h > 0"));
    }
    let s = s_grid.nodes();
    let nu: Vec<f64> = s
        .par_iter()
        .map(|&si| {
            let t = fiber(si).map_err(|e| Error::invalid(format!("fiber at s = {si}: {e}")))?;
            let spec = tridiag_eigenvalues(&t, 1, 1e-13)
                .map_err(|e| Error::invalid(format!("fiber at s = {si}: {e}")))?;
            Ok(spec.lowest())
        })
        .collect::<Result<_>>()?;
    let (s0, ds) = (s[0], s_grid.spacing());
    let table = nu.clone();
    let v = move |x: f64| table[(((x - s0) / ds).round().max(0.0) as usize).min(table.len() - 1)];
    let effective = build_custom(&v, None, None, h * h, s_grid)?;
    Ok(BoReduction { s, nu, effective })
}

/// n-th eigenvalue of the Weyl quantization of
/// `(H11 s^2 + 2 H12 s xi + H22 xi^2) / 2`: `(2n - 1) sqrt(det H) / 2`.
pub fn quantized_hessian_levels(hess: [[f64; 2]; 2], n: usize) -> Result<f64> {
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
    if !(det > 0.0 && hess[0][0] > 0.0) {
        return Err(Error::invalid(format!("Hessian not positive definite (det {det}, H11 {})", hess[0][0])));
    }
    if n == 0 {
        return Err(Error::invalid("level index starts at 1"));
    }
    Ok((2 * n - 1) as f64 * 0.5 * det.sqrt())
}

/// Centered-difference Hessian with step `step` and one Richardson halving.
pub fn numerical_hessian(f: &dyn Fn(f64, f64) -> Result<f64>, x: f64, y: f64, step: f64) -> Result<[[f64; 2]; 2]> {
    let f0 = f(x, y)?;
    let at = |d: f64| -> Result<[f64; 3]> {
        let fxx = (f(x + d, y)? - 2.0 * f0 + f(x - d, y)?) / (d * d);
        let fyy = (f(x, y + d)? - 2.0 * f0 + f(x, y - d)?) / (d * d);
        let fxy = (f(x + d, y + d)? - f(x + d, y - d)? - f(x - d, y + d)? + f(x - d, y - d)?) / (4.0 * d * d);
        Ok([fxx, fxy, fyy])
    };
    let (c, fine) = (at(step)?, at(0.5 * step)?);
    let r = |j: usize| (4.0 * fine[j] - c[j]) / 3.0;
    Ok([[r(0), r(1)], [r(1), r(2)]])
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||(A - mu) psi|| / ||psi||`; the spectrum of `A` has a point within this
/// distance of `mu`.
pub fn residual_distance(op: &dyn RealOperator, mu: f64, psi: &[f64]) -> Result<f64> {
    let n = op.dim();
    if psi.len() != n {
        return Err(Error::invalid("vector length differs from operator dimension"));
    }
    let np = norm(psi);
    if np == 0.0 {
        return Err(Error::invalid("residual_distance needs a nonzero vector"));
    }
    let mut y = vec![0.0; n];
    op.apply(psi, &mut y);
    let r: Vec<f64> = y.iter().zip(psi).map(|(a, b)| a - mu * b).collect();
    Ok(norm(&r) / np)
}

/// Complex version of [`residual_distance`].
pub fn residual_distance_complex(op: &dyn ComplexOperator, mu: f64, psi: &[Complex64]) -> Result<f64> {
    let n = op.dim();
    if psi.len() != n {
        return Err(Error::invalid("vector length differs from operator dimension"));
    }
    let np = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if np == 0.0 {
        return Err(Error::invalid("residual_distance needs a nonzero vector"));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    op.apply(psi, &mut y);
    let r = y.iter().zip(psi).map(|(a, b)| (a - b * mu).norm_sqr()).sum::<f64>().sqrt();
    Ok(r / np)
}

/// [`residual_distance`] for a weighted tridiagonal operator with nodal
/// vectors, measured in its weighted norm.
pub fn residual_distance_weighted(t: &Tridiag, mu: f64, psi: &[f64]) -> Result<f64> {
    if psi.len() != t.len() {
        return Err(Error::invalid("vector length differs from operator dimension"));
    }
    let np = t.weighted_norm(psi);
    if np == 0.0 {
        return Err(Error::invalid("residual_distance needs a nonzero vector"));
    }
    let y = t.apply_operator(psi);
    let r: Vec<f64> = y.iter().zip(psi).map(|(a, b)| a - mu * b).collect();
    Ok(t.weighted_norm(&r) / np)
}
