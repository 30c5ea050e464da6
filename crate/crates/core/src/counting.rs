//! Eigenvalue counting: Sturm counts on discretized operators, the
//! one-dimensional Weyl estimate, the δ-interaction counting integral and
//! Dirichlet–Neumann bracketing.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::eigencore::{sturm_count, Tridiag};
use crate::specialfn::lambert_w0;
use crate::{Error, Result};

/// Number of eigenvalues `<= e`. Ties are broken toward inclusion by moving
/// `e` up by `1e-12 |e|`.
pub fn count_below(t: &Tridiag, e: f64) -> Result<usize> {
    if e == f64::NEG_INFINITY {
        return Ok(0);
    }
    sturm_count(t, e + 1e-12 * e.abs())
}

fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // A few initial panels so that narrow features are not skipped.
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_step(f, x0, x1, f0, fm, f1, whole, tol / panels as f64, 40)
        })
        .sum()
}

const SCAN: usize = 4000;

fn bisect_edge(g: &dyn Fn(f64) -> f64, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (inside + outside);
        if m == inside || m == outside {
            break;
        }
        if g(m) > 0.0 {
            inside = m;
        } else {
            outside = m;
        }
    }
    inside
}

/// `int_a^b sqrt((e0 - V)_+) dx`.
///
/// The allowed set is located on a 4000-point scan and its edges refined by
/// bisection (an edge may be a turning point or a jump of V). On each allowed
/// interval `[p, q]` the substitution `x = (p+q)/2 - (q-p)/2 cos(phi)` turns
/// the square-root endpoint behavior into a smooth integrand, which adaptive
/// Simpson then integrates in `phi`. Allowed components narrower than the
/// scan spacing are not seen.
pub fn weyl_integral(v: &dyn Fn(f64) -> f64, e0: f64, (a, b): (f64, f64), tol: f64) -> f64 {
    let g = |x: f64| e0 - v(x);
    let xs: Vec<f64> = (0..=SCAN).map(|i| a + (b - a) * i as f64 / SCAN as f64).collect();
    let inside: Vec<bool> = xs.iter().map(|&x| g(x) > 0.0).collect();
    let mut intervals = Vec::new();
    let mut i = 0;
    while i <= SCAN {
        if !inside[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i <= SCAN && inside[i] {
            i += 1;
        }
        let end = i - 1;
        let p = if start == 0 { a } else { bisect_edge(&g, xs[start], xs[start - 1]) };
        let q = if end == SCAN { b } else { bisect_edge(&g, xs[end], xs[end + 1]) };
        intervals.push((p, q));
    }
    let count = intervals.len().max(1) as f64;
    intervals
        .iter()
        .map(|&(p, q)| {
            let (c, r) = (0.5 * (p + q), 0.5 * (q - p));
            let f = |phi: f64| g(c - r * phi.cos()).max(0.0).sqrt() * r * phi.sin();
            adaptive_simpson(&f, 0.0, PI, tol / count)
        })
        .sum()
}

/// Weyl estimate `(1 / (pi h)) int sqrt((e0 - V)_+)` over a bounding
/// interval whose ends must be classically forbidden.
pub fn weyl_estimate(v: &dyn Fn(f64) -> f64, e0: f64, h: f64, bounds: (f64, f64), tol: f64) -> Result<f64> {
    if !(h > 0.0) || !(bounds.1 > bounds.0) {
        return Err(Error::invalid("weyl_estimate needs h > 0 and a non-empty interval"));
    }
    for end in [bounds.0, bounds.1] {
        if v(end) < e0 {
            return Err(Error::invalid(format!(
                "unbounded sublevel set: V({end}) = {} < E0 = {e0}",
                v(end)
            )));
        }
    }
    Ok(weyl_integral(v, e0, bounds, tol * PI * h) / (PI * h))
}

/// `W(x e^{-x}) / (2x)`, with the limit `1/2` at 0. Then
/// `-mu_1(x) - 1/4 = s + s^2` without cancellation for large `x`.
fn delta_s(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let y = x * (-x).exp();
    if y == 0.0 {
        return 0.0;
    }
    lambert_w0(y).map(|w| w / (2.0 * x)).unwrap_or(0.0)
}

/// `int_0^inf sqrt(-1/4 - C0 + (1/2 + W(x e^{-x})/(2x))^2) dx`, integrand
/// clipped where the radicand turns negative.
///
/// The radicand vanishes where `mu_1(x) = -k^2` with `k = sqrt(1/4 + C0)`;
/// from the even secular equation `2k - 1 = e^{-2kx}` that endpoint is
/// `x_C = -ln(2k - 1) / (2k)`. For `C0 = 0` the support is the half-line and
/// `x = -2 ln u` maps it to `(0, 1]`. Both cases go through tanh-sinh
/// quadrature, which absorbs the endpoint square-root behavior.
pub fn delta_counting_integral(c0: f64) -> Result<f64> {
    if !(0.0..0.75).contains(&c0) {
        return Err(Error::OutOfDomain { value: c0, domain: "0 <= C0 < 3/4" });
    }
    let radicand = |x: f64| {
        let s = delta_s(x);
        (s + s * s - c0).max(0.0)
    };
    let tol = 1e-13;
    let out = if c0 == 0.0 {
        quadrature::integrate(
            |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let x = -2.0 * u.ln();
                radicand(x).sqrt() * 2.0 / u
            },
            0.0,
            1.0,
            tol,
        )
    } else {
        let k = (0.25 + c0).sqrt();
        let xc = -(2.0 * k - 1.0).ln() / (2.0 * k);
        // Split off the endpoint region so both pieces stay well resolved.
        let mid = 0.5 * xc;
        let f = |x: f64| radicand(x).sqrt();
        let a = quadrature::integrate(f, 0.0, mid, tol);
        let b = quadrature::integrate(f, mid, xc, tol);
        quadrature::Output {
            num_function_evaluations: a.num_function_evaluations + b.num_function_evaluations,
            error_estimate: a.error_estimate + b.error_estimate,
            integral: a.integral + b.integral,
        }
    };
    if !(out.integral > 0.0) {
        return Err(Error::invalid(format!("radicand never positive for C0 = {c0}")));
    }
    Ok(out.integral)
}

/// The δ-effective potential: `mu_1(x)` for `x >= 0`, 1 for `x < 0`.
pub fn delta_effective_potential(x: f64) -> f64 {
    if x < 0.0 {
        1.0
    } else {
        crate::specialfn::delta_mu1(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BracketCounts {
    pub lower: usize,
    pub exact: usize,
    pub upper: usize,
}

/// Lumped P1 assembly of `-h^2 u'' + V u` on the node list `xs` (ends
/// included); Dirichlet ends are eliminated, Neumann ends kept.
fn assemble_nodes(xs: &[f64], v: &dyn Fn(f64) -> f64, h2: f64, neumann: bool) -> Result<Tridiag> {
    let m = xs.len();
    let lens: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let idx: Vec<usize> = if neumann { (0..m).collect() } else { (1..m - 1).collect() };
    let mut diag = Vec::with_capacity(idx.len());
    let mut off = Vec::with_capacity(idx.len());
    let mut mass = Vec::with_capacity(idx.len());
    for (pos, &i) in idx.iter().enumerate() {
        let left = if i > 0 { lens[i - 1] } else { 0.0 };
        let right = if i + 1 < m { lens[i] } else { 0.0 };
        let w = 0.5 * (left + right);
        let stiff = if i > 0 { h2 / left } else { 0.0 } + if i + 1 < m { h2 / right } else { 0.0 };
        let vi = v(xs[i]);
        if !vi.is_finite() {
            return Err(Error::invalid(format!("potential not finite at x = {}", xs[i])));
        }
        diag.push(stiff / w + vi);
        mass.push(w);
        if pos + 1 < idx.len() {
            off.push(-h2 / lens[i]);
        }
    }
    Tridiag::weighted(diag, off, Some(mass))
}

fn cell_nodes(a: f64, b: f64, dx: f64) -> Result<Vec<f64>> {
    let m = ((b - a) / dx).ceil() as usize;
    if m < 2 {
        return Err(Error::invalid(format!("cell [{a}, {b}] holds fewer than 2 grid cells")));
    }
    Ok((0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect())
}

/// Dirichlet–Neumann bracketing of `#{lambda <= e}` for `-h^2 d^2 + V`.
///
/// `cuts` are the partition points (ends included). Every cell is meshed
/// uniformly with spacing at most `dx`; the whole-interval operator uses the
/// union of the cell meshes with Dirichlet outer ends. Dirichlet cells are
/// principal submatrices of it and Neumann cells split each cut node's mass,
/// so `lower <= exact <= upper` holds exactly for the discrete operators.
pub fn bracketing_counts(v: &(dyn Fn(f64) -> f64 + Sync), h: f64, e: f64, cuts: &[f64], dx: f64) -> Result<BracketCounts> {
    if cuts.len() < 2 || cuts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("partition must be increasing with at least one cell"));
    }
    if !(h > 0.0 && dx > 0.0) {
        return Err(Error::invalid("bracketing needs h > 0 and dx > 0"));
    }
    let h2 = h * h;
    let cells: Vec<Vec<f64>> = cuts.windows(2).map(|w| cell_nodes(w[0], w[1], dx)).collect::<Result<_>>()?;
    let mut all = vec![cuts[0]];
    for c in &cells {
        all.extend_from_slice(&c[1..]);
    }
    let exact = count_below(&assemble_nodes(&all, v, h2, false)?, e)?;
    let per_cell: Vec<(usize, usize)> = cells
        .par_iter()
        .map(|c| {
            let lower = if c.len() > 2 { count_below(&assemble_nodes(c, v, h2, false)?, e)? } else { 0 };
            let upper = count_below(&assemble_nodes(c, v, h2, true)?, e)?;
            Ok((lower, upper))
        })
        .collect::<Result<_>>()?;
    Ok(BracketCounts {
        lower: per_cell.iter().map(|c| c.0).sum(),
        exact,
        upper: per_cell.iter().map(|c| c.1).sum(),
    })
}

/// Count of `-h^2 d^2 + V` eigenvalues `<= e` on a Dirichlet box meshed
/// with spacing at most `dx`.
pub fn fd_count(v: &(dyn Fn(f64) -> f64 + Sync), h: f64, e: f64, bounds: (f64, f64), dx: f64) -> Result<usize> {
    Ok(bracketing_counts(v, h, e, &[bounds.0, bounds.1], dx)?.exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigencore::dense_sym_eigen;
    use crate::operators1d::{Grid1D, Model1D};

    #[test]
    fn harmonic_count_and_extremes() {
        let model = Model1D::Harmonic;
        let t = model.build(&model.default_grid(2000).unwrap()).unwrap();
        assert_eq!(count_below(&t, 6.0).unwrap(), 3);
        assert_eq!(count_below(&t, f64::NEG_INFINITY).unwrap(), 0);
        assert_eq!(count_below(&t, -1e300).unwrap(), 0);
    }

    #[test]
    fn count_matches_dense_and_includes_ties() {
        let g = Grid1D::dirichlet(-4.0, 4.0, 200).unwrap();
        let t = Model1D::Harmonic.build(&g).unwrap();
        let dense = dense_sym_eigen(&t.to_dense_reduced()).unwrap();
        for e in [0.5, 2.0, 7.3, 20.0] {
            let n = dense.eigenvalues.iter().zip(&dense.multiplicities).filter(|(v, _)| **v <= e).map(|(_, m)| m).sum::<usize>();
            assert_eq!(count_below(&t, e).unwrap(), n);
        }
        let lam = dense.eigenvalues[2];
        assert_eq!(count_below(&t, lam).unwrap(), 3);
    }

    #[test]
    fn weyl_exact_harmonic() {
        let v = |x: f64| x * x;
        let n = weyl_estimate(&v, 1.0, 0.01, (-2.0, 2.0), 1e-10).unwrap();
        assert!((n - 50.0).abs() < 1e-6, "{n}");
        assert!(weyl_estimate(&v, 1.0, 0.01, (-0.5, 2.0), 1e-10).is_err());
    }

    #[test]
    fn weyl_bounded_potential_vs_sturm() {
        let v = |x: f64| x * x / (1.0 + x * x);
        let h = 0.002;
        let w = weyl_estimate(&v, 0.5, h, (-4.0, 4.0), 1e-10).unwrap();
        let n = fd_count(&v, h, 0.5, (-4.0, 4.0), h / 8.0).unwrap() as f64;
        assert!(((w - n) / n).abs() <= 0.03, "{w} {n}");
    }

    #[test]
    fn delta_integral_two_routes() {
        for c0 in [0.0, 0.1, 0.3] {
            let direct = delta_counting_integral(c0).unwrap();
            let e0 = -0.25 - c0;
            let weyl = weyl_integral(&delta_effective_potential, e0, (-1.0, 80.0), 1e-13);
            assert!(((direct - weyl) / direct).abs() <= 1e-6, "{c0}: {direct} {weyl}");
        }
        let mut prev = f64::INFINITY;
        for i in 0..=14 {
            let c0 = 0.05 * i as f64;
            let v = delta_counting_integral(c0).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(delta_counting_integral(0.749).unwrap() < 1e-3);
        assert!(delta_counting_integral(0.75).is_err());
    }

    #[test]
    fn bracketing_harmonic() {
        let v = |x: f64| x * x;
        let cuts: Vec<f64> = (0..=8).map(|i| -2.0 + 0.5 * i as f64).collect();
        let b = bracketing_counts(&v, 0.05, 1.0, &cuts, 0.005).unwrap();
        assert_eq!(b.exact, 10);
        assert!(b.lower <= b.exact && b.exact <= b.upper && b.upper - b.lower <= 8, "{b:?}");
        let b = bracketing_counts(&v, 0.01, 1.0, &cuts, 0.001).unwrap();
        assert!(b.lower <= b.exact && b.exact <= b.upper);
        assert!((b.upper - b.lower) as f64 / b.exact as f64 <= 0.5, "{b:?}");
    }

    #[test]
    fn single_cell_brackets_are_pure_dirichlet_and_neumann() {
        let v = |x: f64| x * x;
        let b = bracketing_counts(&v, 0.1, 2.0, &[-2.0, 2.0], 0.01).unwrap();
        assert_eq!(b.lower, b.exact);
        assert!(b.upper >= b.exact);
        assert!(bracketing_counts(&v, 0.1, 2.0, &[-2.0, -1.995, 2.0], 0.01).is_err());
    }

    #[test]
    fn simpson_polynomial() {
        let f = |x: f64| x * x * x - x;
        assert!((adaptive_simpson(&f, 0.0, 2.0, 1e-12) - 2.0).abs() < 1e-12);
    }
}
