//! Lambert W, the Airy function and its zeros, and the spectrum of the
//! one-dimensional double δ-well.

use std::f64::consts::{E, PI};

use crate::{Error, Result};

const INV_E: f64 = 1.0 / E;

fn halley(y: f64, mut w: f64) -> f64 {
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - y;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE);
        w = next;
        if done {
            break;
        }
    }
    w
}

/// Principal branch of the Lambert W function on `[-1/e, inf)`.
///
/// Seeds: branch-point series in `p = sqrt(2(ey + 1))` below `-1/4`, Winitzki's
/// logarithmic approximation up to 3, and `L1 - L2 + L2/L1` beyond.
pub fn lambert_w0(y: f64) -> Result<f64> {
    if y.is_nan() || y < -INV_E - 1e-16 {
        return Err(Error::OutOfDomain { value: y, domain: "[-1/e, inf) for W0" });
    }
    if y <= -INV_E {
        return Ok(-1.0);
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let seed = if y < -0.25 {
        let p = (2.0 * (E * y + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if y <= 3.0 {
        let l = y.ln_1p();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else {
        let l1 = y.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    Ok(halley(y, seed))
}

/// Lower branch `W_{-1}` on `[-1/e, 0)`.
pub fn lambert_wm1(y: f64) -> Result<f64> {
    if y.is_nan() || y < -INV_E - 1e-16 || y >= 0.0 {
        return Err(Error::OutOfDomain { value: y, domain: "[-1/e, 0) for W-1" });
    }
    if y <= -INV_E {
        return Ok(-1.0);
    }
    let seed = if y < -0.25 {
        let p = (2.0 * (E * y + 1.0)).max(0.0).sqrt();
        -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-y).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    Ok(halley(y, seed))
}

/// `Ai(0)` and `-Ai'(0)`.
const AI0: f64 = 0.355_028_053_887_817_239;
const MAI1: f64 = 0.258_819_403_792_806_798;

/// Split between the Maclaurin series and the oscillatory asymptotic
/// expansion of `Ai(-x)`.
pub const AIRY_SPLIT: f64 = 6.0;

fn airy_series(x: f64) -> (f64, f64) {
    let x3 = x * x * x;
    // f, g and their derivatives.
    let (mut f, mut g, mut fp, mut gp) = (1.0, x, 0.0, 1.0);
    let (mut tf, mut tg, mut tfp, mut tgp) = (1.0, x, x * x / 2.0, 1.0);
    fp += tfp;
    for k in 1..200 {
        let kf = k as f64;
        tf *= x3 / ((3.0 * kf - 1.0) * (3.0 * kf));
        tg *= x3 / ((3.0 * kf) * (3.0 * kf + 1.0));
        if k >= 2 {
            tfp *= x3 / ((3.0 * kf - 3.0) * (3.0 * kf - 1.0));
            fp += tfp;
        }
        tgp *= x3 / ((3.0 * kf - 2.0) * (3.0 * kf));
        f += tf;
        g += tg;
        gp += tgp;
        let small = 1e-18 * (f.abs() + g.abs() + fp.abs() + gp.abs());
        if tf.abs() + tg.abs() + tfp.abs() + tgp.abs() < small {
            break;
        }
    }
    (AI0 * f - MAI1 * g, AI0 * fp - MAI1 * gp)
}

/// `(Ai(-z), Ai'(-z))` for large positive `z`, series truncated at the
/// smallest term.
fn airy_oscillatory(z: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let mut u = vec![1.0f64];
    for k in 1..60 {
        let kf = k as f64;
        let prev = u[k - 1];
        u.push(prev * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf));
    }
    let v: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(k, uk)| {
            let kf = k as f64;
            -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * uk
        })
        .collect();
    let sum = |c: &[f64], odd: bool| {
        let mut s = 0.0;
        let mut last = f64::INFINITY;
        let start = usize::from(odd);
        let mut sign = 1.0;
        for k in (start..c.len()).step_by(2) {
            let term = c[k] / zeta.powi(k as i32);
            if term.abs() > last {
                break;
            }
            s += sign * term;
            last = term.abs();
            sign = -sign;
        }
        s
    };
    let phase = zeta - PI / 4.0;
    let (c, s) = (phase.cos(), phase.sin());
    let pref = 1.0 / PI.sqrt();
    let ai = pref * z.powf(-0.25) * (c * sum(&u, false) + s * sum(&u, true));
    let aip = pref * z.powf(0.25) * (s * sum(&v, false) - c * sum(&v, true));
    (ai, aip)
}

/// `(Ai(x), Ai'(x))` for `x >= -AIRY_SPLIT` by series, below by the
/// oscillatory expansion. Positive arguments are limited to `x <= 6`.
pub fn airy_ai(x: f64) -> (f64, f64) {
    if x < -AIRY_SPLIT {
        airy_oscillatory(-x)
    } else {
        airy_series(x)
    }
}

/// n-th zero of `x -> Ai(-x)` (n >= 1), by Newton from the asymptotic seed
/// `(3 pi (4n - 1) / 8)^{2/3}`.
pub fn airy_zero(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("airy zero index starts at 1"));
    }
    let t = 3.0 * PI * (4.0 * n as f64 - 1.0) / 8.0;
    let mut z = t.powf(2.0 / 3.0) * (1.0 + 5.0 / 48.0 / (t * t));
    for _ in 0..50 {
        let (ai, aip) = airy_ai(-z);
        // d/dz Ai(-z) = -Ai'(-z)
        let step = ai / (-aip);
        z -= step;
        if step.abs() <= 1e-15 * z {
            let (ai, _) = airy_ai(-z);
            if ai.abs() <= 1e-12 {
                return Ok(z);
            }
            break;
        }
    }
    Err(Error::NotConverged { solver: "airy-newton", detail: format!("zero {n} near {z}") })
}

/// Two lowest eigenvalues of the line operator with unit attractive δ-wells at
/// `±x`. `mu2` is 0 when no second bound state exists (`x <= 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaPair {
    pub x: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Closed forms `mu_j = -(1/2 + W(±x e^{-x}) / (2x))^2` on the principal branch.
pub fn delta_spectrum(x: f64) -> Result<DeltaPair> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("delta separation {x} must be >= 0")));
    }
    let ratio = |y: f64| -> Result<f64> {
        if x == 0.0 {
            Ok(1.0)
        } else {
            Ok(lambert_w0(y)? / x)
        }
    };
    let e = (-x).exp();
    let k1 = 0.5 + 0.5 * ratio(x * e)?;
    let mu2 = if x > 1.0 {
        let k2 = 0.5 + 0.5 * ratio(-x * e)?;
        -k2 * k2
    } else {
        0.0
    };
    Ok(DeltaPair { x, mu1: -k1 * k1, mu2 })
}

/// `mu_1(x)` alone.
pub fn delta_mu1(x: f64) -> f64 {
    delta_spectrum(x.max(0.0)).map(|p| p.mu1).unwrap_or(f64::NAN)
}

fn bisect(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut fa = f(a);
    while b - a > 1e-14 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Independent route to the δ-well spectrum through the secular equations.
///
/// With `psi = cosh(ky)` (even) or `sinh(ky)` (odd) between the wells and
/// `A e^{-k|y|}` outside, the derivative jump `psi'(x+) - psi'(x-) = -psi(x)`
/// gives `k (1 + tanh(kx)) = 1`, i.e. `2k - 1 = e^{-2kx}`, for the even state
/// and `k (1 + coth(kx)) = 1`, i.e. `2k - 1 = -e^{-2kx}`, for the odd one. The
/// odd equation has a root in `(0, 1/2)` only for `x > 1`. Eigenvalues are
/// `mu = -k^2`.
pub fn delta_oracle(x: f64) -> Result<DeltaPair> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("delta separation {x} must be >= 0")));
    }
    let even = |k: f64| 2.0 * k - 1.0 - (-2.0 * k * x).exp();
    let k1 = if even(1.0) <= 0.0 { 1.0 } else { bisect(0.5, 1.0, even) };
    let mu2 = if x > 1.0 { -delta_odd_root(x)?.powi(2) } else { 0.0 };
    Ok(DeltaPair { x, mu1: -k1 * k1, mu2 })
}

/// Nontrivial root of `2k - 1 = -e^{-2kx}`; only exists for `x > 1`.
pub fn delta_odd_root(x: f64) -> Result<f64> {
    if x <= 1.0 {
        return Err(Error::invalid(format!("odd δ-state requires x > 1, got {x}")));
    }
    let odd = |k: f64| 2.0 * k - 1.0 + (-2.0 * k * x).exp();
    // g is convex with g(0) = 0 and its minimum at ln(x) / (2x).
    let kmin = x.ln() / (2.0 * x);
    Ok(bisect(kmin, 0.5, odd))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambert_special_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0(-INV_E).unwrap(), -1.0);
        assert_eq!(lambert_wm1(-INV_E).unwrap(), -1.0);
        assert!(lambert_w0(-0.5).is_err());
        assert!(lambert_wm1(0.1).is_err());
        // W_{-1}(-x e^{-x}) = -x for x > 1.
        let x: f64 = 3.0;
        assert!((lambert_wm1(-x * (-x).exp()).unwrap() + x).abs() < 1e-13);
    }

    #[test]
    fn lambert_round_trip_log_spaced() {
        for i in 0..10_000 {
            let y = 10f64.powf(-12.0 + 24.0 * i as f64 / 9999.0);
            let w = lambert_w0(y).unwrap();
            assert!((w * w.exp() - y).abs() <= 1e-14 * y.max(1.0), "W0({y})");
            let yn = -INV_E * (i as f64 + 0.5) / 10_000.0;
            let w = lambert_w0(yn).unwrap();
            assert!((w * w.exp() - yn).abs() <= 1e-14, "W0({yn})");
            let w = lambert_wm1(yn).unwrap();
            assert!((w * w.exp() - yn).abs() <= 1e-14, "W-1({yn})");
            assert!(w <= -1.0);
        }
    }

    #[test]
    fn airy_split_is_continuous() {
        let (a, ap) = airy_series(-AIRY_SPLIT);
        let (b, bp) = airy_oscillatory(AIRY_SPLIT);
        assert!((a - b).abs() < 1e-9, "{a} {b}");
        assert!((ap - bp).abs() < 1e-8, "{ap} {bp}");
    }

    #[test]
    fn airy_zero_spacing_decreases() {
        let zs: Vec<f64> = (1..=11).map(|n| airy_zero(n).unwrap()).collect();
        for w in zs.windows(3) {
            assert!(w[2] - w[1] < w[1] - w[0]);
        }
        assert!(airy_zero(0).is_err());
    }

    #[test]
    fn delta_limits() {
        let p = delta_spectrum(0.0).unwrap();
        assert_eq!(p.mu1, -1.0);
        assert_eq!(p.mu2, 0.0);
        let x: f64 = 10.0;
        let p = delta_spectrum(x).unwrap();
        let slack = 10.0 * x * (-2.0 * x).exp();
        assert!((p.mu1 - (-0.25 - 0.5 * (-x).exp())).abs() <= slack);
        assert!((p.mu2 - (-0.25 + 0.5 * (-x).exp())).abs() <= slack);
        let o = delta_oracle(1e-9).unwrap();
        assert!((o.mu1 + 1.0).abs() < 1e-8);
        let o = delta_oracle(40.0).unwrap();
        assert!((o.mu1 + 0.25).abs() < 1e-12 && (o.mu2 + 0.25).abs() < 1e-12);
        assert!(delta_odd_root(0.5).is_err());
    }

    #[test]
    fn delta_closed_form_matches_oracle_at_two() {
        let a = delta_spectrum(2.0).unwrap();
        let b = delta_oracle(2.0).unwrap();
        assert!((a.mu1 - b.mu1).abs() < 1e-10);
        assert!((a.mu2 - b.mu2).abs() < 1e-10);
    }

    #[test]
    fn delta_mu1_bounds_and_unique_minimum() {
        let m0 = delta_mu1(0.0);
        for i in 1..2000 {
            let x = i as f64 * 0.005;
            let p = delta_spectrum(x).unwrap();
            assert!(p.mu1 >= -1.0 && p.mu1 < -0.25);
            assert!(m0 < p.mu1);
            if x > 1.0 {
                assert!(p.mu2 > -0.25);
            } else {
                assert_eq!(p.mu2, 0.0);
            }
        }
        // mu1 = -1 + 2x + O(x^2)
        let x = 1e-4;
        assert!((delta_mu1(x) - (-1.0 + 2.0 * x)).abs() < 10.0 * x * x);
    }
}
