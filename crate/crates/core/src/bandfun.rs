//! Band functions: sampling, minimization, Feynman–Hellmann identities, the
//! de Gennes constants, broken-Montgomery surfaces and the scaled Montgomery
//! band.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::brent::BrentOpt;
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;

use crate::eigencore::{tridiag_eigenpairs, tridiag_eigenvalues, Tridiag};
use crate::operators1d::{build_montgomery, richardson, FiberDomain, Grid1D, Model1D};
use crate::{csv_writer, fmt17, Error, Result};

const EIG_TOL: f64 = 1e-13;

/// Relative spread below which a sampled band is reported as flat.
pub const FLAT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub struct BandOptions {
    /// Grid nodes per solve.
    pub n: usize,
    /// Combine each value with a refined solve (Richardson).
    pub extrapolate: bool,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions { n: 2000, extrapolate: true }
    }
}

pub type ModelMaker = Arc<dyn Fn(f64) -> Model1D + Send + Sync>;

/// One-parameter family of fiber operators.
#[derive(Clone)]
pub enum BandFamily {
    DeGennes,
    Montgomery { k: u32 },
    MontgomeryHalf { k: u32 },
    /// Broken-Montgomery fiber at fixed `x`, parametrized by `xi`.
    BrokenFiber { x: f64, domain: FiberDomain },
    /// Any family; `grid` fixes the discretization for every parameter.
    Custom { name: String, make: ModelMaker, grid: Option<Grid1D> },
}

impl BandFamily {
    pub fn model(&self, p: f64) -> Model1D {
        match self {
            BandFamily::DeGennes => Model1D::DeGennes { zeta: p },
            BandFamily::Montgomery { k } => Model1D::Montgomery { k: *k, zeta: p },
            BandFamily::MontgomeryHalf { k } => Model1D::MontgomeryHalf { k: *k, zeta: p },
            BandFamily::BrokenFiber { x, domain } => Model1D::BrokenMontFiber { x: *x, xi: p, domain: *domain },
            BandFamily::Custom { make, .. } => make(p),
        }
    }

    pub fn name(&self) -> String {
        match self {
            BandFamily::DeGennes => "degennes".into(),
            BandFamily::Montgomery { k } => format!("montgomery:{k}"),
            BandFamily::MontgomeryHalf { k } => format!("montgomery-half:{k}"),
            BandFamily::BrokenFiber { x, domain } => format!("broken:{domain:?}:x={x}"),
            BandFamily::Custom { name, .. } => name.clone(),
        }
    }

    /// Grid used for a single parameter value (the box follows the
    /// parameter).
    pub fn grid_at(&self, p: f64, n: usize) -> Result<Grid1D> {
        match self {
            BandFamily::Custom { grid: Some(g), .. } => Ok(*g),
            _ => self.model(p).default_grid(n),
        }
    }

    /// One grid wide enough for every parameter in `[lo, hi]`.
    pub fn grid_for_range(&self, lo: f64, hi: f64, n: usize) -> Result<Grid1D> {
        let mut best = self.grid_at(lo, n)?;
        for p in [0.5 * (lo + hi), hi] {
            let g = self.grid_at(p, n)?;
            if g.b - g.a > best.b - best.a {
                best = g;
            }
        }
        Ok(best)
    }
}

/// Lowest eigenvalue at `p` on a fixed grid, with an error bar from the
/// bisection brackets.
pub fn band_value_on(family: &BandFamily, p: f64, grid: &Grid1D, opts: &BandOptions) -> Result<(f64, f64)> {
    let model = family.model(p);
    let coarse = tridiag_eigenvalues(&model.build(grid)?, 1, EIG_TOL)?;
    if !opts.extrapolate {
        return Ok((coarse.lowest(), coarse.residuals[0]));
    }
    let ratio = model.refinement_ratio();
    let fine = tridiag_eigenvalues(&model.build(&grid.refine(ratio))?, 1, EIG_TOL)?;
    let r2 = (ratio * ratio) as f64;
    Ok((
        richardson(coarse.lowest(), fine.lowest(), ratio),
        (r2 * fine.residuals[0] + coarse.residuals[0]) / (r2 - 1.0),
    ))
}

/// Lowest eigenvalue at `p` on the grid the truncation policy picks for `p`.
pub fn band_value(family: &BandFamily, p: f64, opts: &BandOptions) -> Result<(f64, f64)> {
    band_value_on(family, p, &family.grid_at(p, opts.n)?, opts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimizer {
    pub arg: f64,
    pub value: f64,
    /// Width of the final bracket around `arg`.
    pub bracket: f64,
    pub flat: bool,
    pub evaluations: usize,
}

#[derive(Clone, Debug, Default)]
pub struct BandSample {
    pub params: Vec<f64>,
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub minimizer: Option<Minimizer>,
}

impl BandSample {
    pub fn argmin_index(&self) -> usize {
        (0..self.values.len()).min_by(|&i, &j| self.values[i].total_cmp(&self.values[j])).unwrap_or(0)
    }

    /// Rows `param,value,residual`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["param", "value", "residual"])?;
        for i in 0..self.params.len() {
            out.write_record([fmt17(self.params[i]), fmt17(self.values[i]), fmt17(self.residuals[i])])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Lowest eigenvalue at `npts` equally spaced parameters in `[lo, hi]`.
pub fn band_sample(family: &BandFamily, lo: f64, hi: f64, npts: usize, opts: &BandOptions) -> Result<BandSample> {
    if npts < 9 {
        return Err(Error::invalid(format!("band sampling needs at least 9 points, got {npts}")));
    }
    if !(hi > lo) {
        return Err(Error::invalid("band range must satisfy lo < hi"));
    }
    let params = linspace(lo, hi, npts);
    let vals: Vec<(f64, f64)> = params.par_iter().map(|&p| band_value(family, p, opts)).collect::<Result<_>>()?;
    Ok(BandSample {
        params,
        values: vals.iter().map(|v| v.0).collect(),
        residuals: vals.iter().map(|v| v.1).collect(),
        minimizer: None,
    })
}

struct Scalar<'a>(&'a (dyn Fn(f64) -> Result<f64> + Sync));

impl CostFunction for Scalar<'_> {
    type Param = f64;
    type Output = f64;
    fn cost(&self, p: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(*p)?)
    }
}

fn solver_error(e: argmin::core::Error) -> Error {
    match e.downcast::<Error>() {
        Ok(inner) => inner,
        Err(e) => Error::NotConverged { solver: "argmin", detail: e.to_string() },
    }
}

/// Brent minimization of a scalar function on `[a, b]`; returns
/// `(arg, value, bracket, evaluations)`.
pub fn brent_minimize(
    f: &(dyn Fn(f64) -> Result<f64> + Sync),
    a: f64,
    b: f64,
    tol: f64,
) -> Result<(f64, f64, f64, usize)> {
    let eps = f64::EPSILON.sqrt();
    let t = tol / 8.0;
    let res = Executor::new(Scalar(f), BrentOpt::new(a, b).set_tolerance(eps, t))
        .configure(|s| s.max_iters(500))
        .run()
        .map_err(solver_error)?;
    let state = res.state();
    if state.get_termination_status() != &TerminationStatus::Terminated(TerminationReason::SolverConverged) {
        return Err(Error::NotConverged { solver: "brent", detail: format!("{:?}", state.get_termination_status()) });
    }
    let arg = *state.get_best_param().ok_or_else(|| Error::invalid("brent returned no point"))?;
    Ok((arg, state.get_best_cost(), 4.0 * (eps * arg.abs() + t), state.get_iter() as usize + 1))
}

/// Minimize the band over `[lo, hi]`: a 9-point scan locates the basin, then
/// Brent refines on one grid shared by every evaluation.
pub fn band_minimize(family: &BandFamily, lo: f64, hi: f64, tol: f64, opts: &BandOptions) -> Result<Minimizer> {
    if !(hi > lo) || !(tol > 0.0) {
        return Err(Error::invalid("band_minimize needs lo < hi and tol > 0"));
    }
    let grid = family.grid_for_range(lo, hi, opts.n)?;
    let f = |p: f64| band_value_on(family, p, &grid, opts).map(|v| v.0);
    let xs = linspace(lo, hi, 9);
    let vs: Vec<f64> = xs.par_iter().map(|&p| f(p)).collect::<Result<_>>()?;
    let (vmin, vmax) = vs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if vmax - vmin <= FLAT_TOL * vmin.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        return Ok(Minimizer { arg: mid, value: f(mid)?, bracket: hi - lo, flat: true, evaluations: 10 });
    }
    let i = (0..9).min_by(|&i, &j| vs[i].total_cmp(&vs[j])).unwrap();
    if i == 0 || i == 8 {
        return Err(Error::NoBracket(format!(
            "{}: smallest sample at the bracket end {} (value {})",
            family.name(),
            xs[i],
            vs[i]
        )));
    }
    let (arg, value, bracket, evals) = brent_minimize(&f, xs[i - 1], xs[i + 1], tol)?;
    Ok(Minimizer { arg, value, bracket, flat: false, evaluations: evals + 9 })
}

/// `sum_i w_i dV(t_i) v_i^2 dx`: the exact parameter derivative of the
/// discrete eigenvalue when `dV` is the derivative of the potential.
pub fn feynman_hellmann_slope(t: &Tridiag, nodes: &[f64], v: &[f64], dv: impl Fn(f64) -> f64) -> f64 {
    nodes.iter().enumerate().map(|(i, &x)| t.weight(i) * dv(x) * v[i] * v[i]).sum::<f64>() * t.spacing()
}

/// Derivatives of the band from centered differences with one Richardson
/// halving of the step.
fn band_derivatives(f: &dyn Fn(f64) -> Result<f64>, p: f64, delta: f64) -> Result<(f64, f64)> {
    let v0 = f(p)?;
    let mut d1 = [0.0; 2];
    let mut d2 = [0.0; 2];
    for (j, d) in [delta, 0.5 * delta].into_iter().enumerate() {
        let (vp, vm) = (f(p + d)?, f(p - d)?);
        d1[j] = (vp - vm) / (2.0 * d);
        d2[j] = (vp - 2.0 * v0 + vm) / (d * d);
    }
    Ok(((4.0 * d1[1] - d1[0]) / 3.0, (4.0 * d2[1] - d2[0]) / 3.0))
}

pub const FH_STEP: f64 = 1e-3;

/// Feynman–Hellmann and virial quantities for the de Gennes operator at
/// `zeta`. The virial pair, moment and second-derivative identity hold only
/// at the band minimum; they are reported everywhere.
#[derive(Clone, Copy, Debug)]
pub struct FhReport {
    pub zeta: f64,
    pub nu: f64,
    /// `u(0)^2` of the normalized ground state.
    pub u0sq: f64,
    pub dnu: f64,
    pub d2nu: f64,
    /// `|nu' - (zeta^2 - nu) u(0)^2|`.
    pub fh_residual: f64,
    /// `||u'||^2`.
    pub kinetic: f64,
    /// `||(t - zeta) u||^2`.
    pub potential: f64,
    /// `int (t - zeta) u^2`.
    pub moment: f64,
    /// `|nu'' - 2 zeta u(0)^2|`.
    pub second_residual: f64,
}

impl FhReport {
    pub fn virial_defect(&self) -> f64 {
        (self.kinetic - self.nu / 2.0).abs().max((self.potential - self.nu / 2.0).abs())
    }
}

pub fn feynman_hellmann_report(zeta: f64, opts: &BandOptions) -> Result<FhReport> {
    let family = BandFamily::DeGennes;
    let grid = family.grid_for_range(zeta - FH_STEP, zeta + FH_STEP, opts.n)?;
    let f = |p: f64| band_value_on(&family, p, &grid, opts).map(|v| v.0);
    let (dnu, d2nu) = band_derivatives(&f, zeta, FH_STEP)?;
    let nu = f(zeta)?;
    // Eigenvector on the refined grid.
    let fine = grid.refine(2);
    let t = Model1D::DeGennes { zeta }.build(&fine)?;
    let s = tridiag_eigenpairs(&t, 1, EIG_TOL)?;
    if s.residuals[0] > 1e-6 * t.norm_inf() {
        return Err(Error::NotConverged { solver: "de Gennes eigenpair", detail: format!("residual {}", s.residuals[0]) });
    }
    let v = s.vector(0).ok_or_else(|| Error::invalid("missing eigenvector"))?;
    let nodes = fine.nodes();
    let dx = fine.spacing();
    let u0sq = v[0] * v[0];
    let mut kinetic: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    kinetic = (kinetic + v[v.len() - 1].powi(2)) / dx;
    let potential = feynman_hellmann_slope(&t, &nodes, v, |x| (x - zeta).powi(2));
    let moment = feynman_hellmann_slope(&t, &nodes, v, |x| x - zeta);
    Ok(FhReport {
        zeta,
        nu,
        u0sq,
        dnu,
        d2nu,
        fh_residual: (dnu - (zeta * zeta - nu) * u0sq).abs(),
        kinetic,
        potential,
        moment,
        second_residual: (d2nu - 2.0 * zeta * u0sq).abs(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct DeGennesConstants {
    pub theta0: f64,
    pub zeta0: f64,
    /// `u_{zeta0}(0)^2`.
    pub u0sq: f64,
    pub c1: f64,
    /// `nu''(zeta0)`.
    pub nu2: f64,
    pub bracket: f64,
}

impl DeGennesConstants {
    /// `(name, defect, tolerance)` for each identity the constants obey.
    pub fn identities(&self) -> Vec<(&'static str, f64, f64)> {
        vec![
            ("theta0_eq_zeta0sq", (self.theta0 - self.zeta0 * self.zeta0).abs() / self.theta0, 1e-5),
            ("c1_definition", (self.c1 - self.u0sq / 3.0).abs(), 1e-8),
            ("second_derivative", (self.nu2 / 2.0 - 3.0 * self.c1 * self.theta0.sqrt()).abs(), 1e-3),
        ]
    }
}

pub fn degennes_constants(opts: &BandOptions) -> Result<DeGennesConstants> {
    let m = band_minimize(&BandFamily::DeGennes, 0.2, 1.2, 1e-7, opts)?;
    let fh = feynman_hellmann_report(m.arg, opts)?;
    let c = DeGennesConstants {
        theta0: m.value,
        zeta0: m.arg,
        u0sq: fh.u0sq,
        c1: fh.u0sq / 3.0,
        nu2: fh.d2nu,
        bracket: m.bracket,
    };
    if !(c.theta0 > 0.0 && c.theta0 < 1.0 && c.zeta0 > 0.0) {
        return Err(Error::IdentityViolation(format!("theta0 = {}, zeta0 = {}", c.theta0, c.zeta0)));
    }
    for (name, defect, tol) in c.identities() {
        if defect > tol {
            return Err(Error::IdentityViolation(format!("{name}: defect {defect:e} > {tol:e}")));
        }
    }
    Ok(c)
}

#[derive(Clone, Debug)]
pub struct SurfaceMin {
    /// Coarse samples `(x, xi, mu)`.
    pub samples: Vec<[f64; 3]>,
    pub arg: (f64, f64),
    pub value: f64,
    /// Set when the coarse minimum sits on the region boundary.
    pub warning: Option<String>,
}

impl SurfaceMin {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["x", "xi", "value"])?;
        for s in &self.samples {
            out.write_record(s.iter().map(|v| fmt17(*v)))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Lowest eigenvalue of the broken-Montgomery fiber at `(x, xi)`.
pub fn surface_value(domain: FiberDomain, x: f64, xi: f64, opts: &BandOptions) -> Result<f64> {
    band_value(&BandFamily::BrokenFiber { x, domain }, xi, opts).map(|v| v.0)
}

struct Surface<'a> {
    domain: FiberDomain,
    opts: &'a BandOptions,
}

impl CostFunction for Surface<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(surface_value(self.domain, p[0], p[1], self.opts)?)
    }
}

/// Coarse scan of the band surface on a `g x g` grid over the region, then
/// Nelder–Mead from the best sample until the simplex values agree to `tol`.
pub fn band_surface_min(
    domain: FiberDomain,
    xrange: (f64, f64),
    xirange: (f64, f64),
    g: usize,
    tol: f64,
    opts: &BandOptions,
) -> Result<SurfaceMin> {
    if g < 9 {
        return Err(Error::invalid(format!("coarse surface grid must be at least 9x9, got {g}")));
    }
    if !(xrange.1 > xrange.0 && xirange.1 > xirange.0) {
        return Err(Error::invalid("surface region must be non-empty"));
    }
    let xs = linspace(xrange.0, xrange.1, g);
    let xis = linspace(xirange.0, xirange.1, g);
    let points: Vec<(usize, usize)> = (0..g).flat_map(|i| (0..g).map(move |j| (i, j))).collect();
    let samples: Vec<[f64; 3]> = points
        .par_iter()
        .map(|&(i, j)| surface_value(domain, xs[i], xis[j], opts).map(|v| [xs[i], xis[j], v]))
        .collect::<Result<_>>()?;
    let best = (0..samples.len()).min_by(|&a, &b| samples[a][2].total_cmp(&samples[b][2])).unwrap();
    let (bi, bj) = points[best];
    let warning = (bi == 0 || bj == 0 || bi == g - 1 || bj == g - 1)
        .then(|| "minimum may lie outside region".to_string());
    let (hx, hxi) = ((xs[1] - xs[0]) / 2.0, (xis[1] - xis[0]) / 2.0);
    let p0 = vec![xs[bi], xis[bj]];
    let simplex = vec![p0.clone(), vec![p0[0] + hx, p0[1]], vec![p0[0], p0[1] + hxi]];
    let solver = NelderMead::new(simplex).with_sd_tolerance(tol).map_err(solver_error)?;
    let res = Executor::new(Surface { domain, opts }, solver)
        .configure(|s| s.max_iters(400))
        .run()
        .map_err(solver_error)?;
    let state = res.state();
    let arg = state.get_best_param().cloned().unwrap_or(p0);
    let value = state.get_best_cost().min(samples[best][2]);
    let arg = if state.get_best_cost() <= samples[best][2] { (arg[0], arg[1]) } else { (xs[bi], xis[bj]) };
    Ok(SurfaceMin { samples, arg, value, warning })
}

/// Montgomery band tabulated with Feynman–Hellmann slopes and evaluated by
/// piecewise cubic Hermite interpolation.
#[derive(Clone, Debug)]
pub struct BandTable {
    pub k: u32,
    pub params: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    pub grid: Grid1D,
}

fn montgomery_value_slope(k: u32, zeta: f64, grid: &Grid1D) -> Result<(f64, f64)> {
    let kp = (k + 1) as f64;
    let t = build_montgomery(k, zeta, grid)?;
    let s = tridiag_eigenpairs(&t, 1, EIG_TOL)?;
    let v = s.vector(0).ok_or_else(|| Error::invalid("missing eigenvector"))?;
    let slope = feynman_hellmann_slope(&t, &grid.nodes(), v, |x| 2.0 * (zeta - x.powi(k as i32 + 1) / kp));
    Ok((s.lowest(), slope))
}

impl BandTable {
    pub fn montgomery(k: u32, lo: f64, hi: f64, step: f64, opts: &BandOptions) -> Result<Self> {
        if !(hi > lo && step > 0.0) {
            return Err(Error::invalid("band table needs lo < hi and step > 0"));
        }
        let family = BandFamily::Montgomery { k };
        let grid = family.grid_for_range(lo, hi, opts.n)?;
        let npts = ((hi - lo) / step).round() as usize + 1;
        let params = linspace(lo, hi, npts.max(2));
        let rows: Vec<(f64, f64)> = params
            .par_iter()
            .map(|&z| {
                let (v, s) = montgomery_value_slope(k, z, &grid)?;
                if !opts.extrapolate {
                    return Ok((v, s));
                }
                let (vf, sf) = montgomery_value_slope(k, z, &grid.refine(2))?;
                Ok((richardson(v, vf, 2), richardson(s, sf, 2)))
            })
            .collect::<Result<_>>()?;
        Ok(BandTable {
            k,
            params,
            values: rows.iter().map(|r| r.0).collect(),
            slopes: rows.iter().map(|r| r.1).collect(),
            grid,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.params[0], *self.params.last().unwrap())
    }

    pub fn eval(&self, zeta: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(zeta >= lo && zeta <= hi) {
            return Err(Error::OutOfDomain { value: zeta, domain: "sampled band range" });
        }
        let h = self.params[1] - self.params[0];
        let i = (((zeta - lo) / h).floor() as usize).min(self.params.len() - 2);
        let s = (zeta - self.params[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        Ok((2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1)
    }
}

pub const TABLE_RANGE: (f64, f64) = (-3.0, 4.0);
pub const TABLE_STEP: f64 = 0.02;

type TableKey = (u32, usize, bool);

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<BandTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<BandTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached Montgomery table for order `k` with default resolution. Concurrent
/// first calls may both compute; the results are identical.
pub fn band_table(k: u32, opts: &BandOptions) -> Result<Arc<BandTable>> {
    let key = (k, opts.n, opts.extrapolate);
    if let Some(t) = table_cache().lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    let t = Arc::new(BandTable::montgomery(k, TABLE_RANGE.0, TABLE_RANGE.1, TABLE_STEP, opts)?);
    table_cache().lock().unwrap().insert(key, t.clone());
    Ok(t)
}

/// `gamma(x)^{2/(k+2)} nu_k(gamma(x)^{-1/(k+2)} xi)` from the cached band.
pub fn scaled_band(k: u32, gamma: &dyn Fn(f64) -> f64, x: f64, xi: f64) -> Result<f64> {
    let g = gamma(x);
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::OutOfDomain { value: g, domain: "gamma > 0" });
    }
    let e = 1.0 / (k + 2) as f64;
    let table = band_table(k, &BandOptions::default())?;
    Ok(g.powf(2.0 * e) * table.eval(xi * g.powf(-e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators1d::ground_energy;

    fn quick() -> BandOptions {
        BandOptions { n: 1000, extrapolate: true }
    }

    #[test]
    fn de_gennes_band_increases_on_negative_side() {
        let s = band_sample(&BandFamily::DeGennes, -1.0, 3.0, 17, &quick()).unwrap();
        for i in 0..s.params.len() - 1 {
            if s.params[i + 1] <= 0.0 {
                assert!(s.values[i + 1] < s.values[i]);
            }
        }
        // 1 - nu(8) is of order 1e-27, far below the discretization error.
        let far = band_value(&BandFamily::DeGennes, 8.0, &quick()).unwrap().0;
        assert!(far > 0.55 && far < 1.0 + 1e-8 && (1.0 - far) < 0.15, "{far}");
    }

    #[test]
    fn montgomery_minimum() {
        let m = band_minimize(&BandFamily::Montgomery { k: 1 }, -1.0, 2.0, 1e-6, &quick()).unwrap();
        assert!((m.arg - 0.3467).abs() < 2e-3, "{m:?}");
        assert!((m.value - 0.5698).abs() < 2e-3, "{m:?}");
        assert!(m.bracket <= 1e-6);
        assert!(!m.flat);
    }

    #[test]
    fn translated_well_is_flat() {
        let g = Grid1D::symmetric(14.0, 2000).unwrap();
        let family = BandFamily::Custom {
            name: "shifted-harmonic".into(),
            make: Arc::new(|z: f64| Model1D::CustomPotential {
                potential: Arc::new(move |t: f64| (z - t).powi(2)),
                weight: None,
                diffusion: None,
                h_s: None,
            }),
            grid: Some(g),
        };
        let m = band_minimize(&family, -1.0, 1.0, 1e-6, &BandOptions::default()).unwrap();
        assert!(m.flat);
        assert!((m.value - 1.0).abs() < 1e-5);
    }

    #[test]
    fn no_bracket_is_reported() {
        let r = band_minimize(&BandFamily::DeGennes, -2.0, -1.0, 1e-6, &quick());
        assert!(matches!(r, Err(Error::NoBracket(_))));
    }

    #[test]
    fn feynman_hellmann_at_one() {
        let r = feynman_hellmann_report(1.0, &BandOptions::default()).unwrap();
        assert!(r.fh_residual < 1e-4, "{r:?}");
    }

    #[test]
    fn de_gennes_constants_obey_identities() {
        let c = degennes_constants(&BandOptions::default()).unwrap();
        assert!(c.theta0 > 0.55 && c.theta0 < 0.62);
        let r = feynman_hellmann_report(c.zeta0, &BandOptions::default()).unwrap();
        assert!(r.dnu.abs() < 1e-5 && r.moment.abs() < 1e-5, "{r:?}");
        assert!((r.kinetic - c.theta0 / 2.0).abs() < 1e-4);
        assert!((r.potential - c.theta0 / 2.0).abs() < 1e-4);
    }

    #[test]
    fn hermite_table_matches_direct_solve() {
        let table = band_table(1, &BandOptions::default()).unwrap();
        for z in [-0.73, 0.3467, 1.111, 2.5] {
            let direct = ground_energy(&Model1D::Montgomery { k: 1, zeta: z }, 2000, true).unwrap();
            assert!((table.eval(z).unwrap() - direct).abs() < 1e-6);
        }
        assert!(table.eval(10.0).is_err());
        let one = |_: f64| 1.0;
        assert_eq!(scaled_band(1, &one, 3.0, 0.5).unwrap(), scaled_band(1, &one, -1.0, 0.5).unwrap());
    }

    #[test]
    fn csv_layout() {
        let s = BandSample { params: vec![0.5], values: vec![1.0 / 3.0], residuals: vec![0.0], minimizer: None };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "param,value,residual\n5.0000000000000000e-1,3.3333333333333331e-1,0.0000000000000000e0\n"
        );
    }
}
