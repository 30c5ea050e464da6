use magspec::bandfun::{band_minimize, band_surface_min, degennes_constants, scaled_band, BandFamily, BandOptions};
use magspec::cli::{lupan_auto_box, well_nodes, Builder, SweepSpec};
use magspec::domains2d::{build_magnetic_well, lowest_complex, lupan_fiber, lupan_s_grid};
use magspec::eigencore::tridiag_eigenvalues;
use magspec::operators1d::FiberDomain;
use magspec::semiclassics::{bo_reduce, fit_points, harmonic_prediction};
use magspec::DEFAULT_SEED;

#[test]
fn lupan_reduction_follows_harmonic_approximation() {
    let theta = 0.1;
    let c = degennes_constants(&BandOptions::default()).unwrap();
    let (s, t) = lupan_auto_box(theta);
    let fiber = |x: f64| lupan_fiber(theta, x, t, 160);
    let bo = bo_reduce(&fiber, &lupan_s_grid(s, 460).unwrap(), 1.0).unwrap();
    let l = tridiag_eigenvalues(&bo.effective, 1, 1e-13).unwrap().lowest();
    let want = harmonic_prediction(c.theta0, c.nu2, 1, theta).unwrap();
    assert!(((l - want) / want).abs() <= 0.02, "{l} vs {want}");
    // The fiber is a rescaled de Gennes operator: min nu = Theta_0 cos(theta).
    let i = (0..bo.nu.len()).min_by(|&a, &b| bo.nu[a].total_cmp(&bo.nu[b])).unwrap();
    assert!((bo.nu[i] - c.theta0 * theta.cos()).abs() < 1e-3, "{}", bo.nu[i]);
}

#[test]
fn magnetic_well_gap_near_harmonic_value() {
    let h = 0.05;
    let l = lowest_complex(&build_magnetic_well(h, 1.5, well_nodes(h, 1.5)).unwrap(), 2, DEFAULT_SEED).unwrap();
    let gap = l[1] - l[0];
    assert!((gap - 2.0 * h * h).abs() <= 0.2 * 2.0 * h * h, "gap / h^2 = {}", gap / (h * h));
    assert!(l[0] / h > 1.0, "ground level sits above h min B: {}", l[0] / h);
}

#[test]
fn guide_sits_below_triangle_and_both_approach_one_eighth() {
    let hs = [0.04, 0.02, 0.01, 0.005];
    let tri = SweepSpec::new(Builder::BoTriangle).sweep(&hs, 1, false, DEFAULT_SEED).unwrap().values();
    let guide = SweepSpec::new(Builder::BoGuide).sweep(&hs, 1, false, DEFAULT_SEED).unwrap().values();
    for (g, t) in guide.iter().zip(&tri) {
        assert!(g < t, "{g} vs {t}");
    }
    for v in [&tri, &guide] {
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
        assert!(v.iter().all(|&x| x > 0.125));
    }
    let f = fit_points(&hs, &guide, &[0.0, 2.0 / 3.0, 4.0 / 3.0]).unwrap();
    assert!((f.coefficients[0] - 0.125).abs() < 2e-3, "{:?}", f.coefficients);
}

#[test]
fn delta_effective_levels_decrease_towards_minus_one() {
    let hs = [0.004, 0.002, 0.001, 0.0005];
    let v = SweepSpec::new(Builder::DeltaEff).sweep(&hs, 1, false, DEFAULT_SEED).unwrap().values();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    assert!(v.iter().all(|&x| x > -1.0));
    assert!(v[3] + 1.0 < 0.5 * (v[0] + 1.0), "{v:?}");
}

#[test]
fn broken_fiber_surfaces_order() {
    let opts = BandOptions { n: 1200, extrapolate: false };
    let neumann = band_surface_min(FiberDomain::HalfLineNeumann, (0.0, 2.0), (-1.0, 2.0), 13, 1e-7, &opts).unwrap();
    let line = band_surface_min(FiberDomain::FullLine, (0.0, 2.0), (-1.0, 2.0), 13, 1e-7, &opts).unwrap();
    assert!(neumann.value < 0.5 && line.value < 0.5, "{} {}", neumann.value, line.value);
    assert!(neumann.value <= line.value + 1e-9, "{} {}", neumann.value, line.value);
}

#[test]
fn scaled_band_minimum_at_field_minimum() {
    let opts = BandOptions::default();
    let m = band_minimize(&BandFamily::Montgomery { k: 1 }, -1.0, 2.0, 1e-8, &opts).unwrap();
    let gamma = |x: f64| 1.0 + x * x;
    let at = scaled_band(1, &gamma, 0.0, m.arg).unwrap();
    assert!((at - m.value).abs() < 1e-6, "{at} vs {}", m.value);
    for (dx, dxi) in [(0.1, 0.0), (-0.1, 0.0), (0.0, 0.1), (0.0, -0.1), (0.05, 0.05)] {
        assert!(scaled_band(1, &gamma, dx, m.arg + dxi).unwrap() > at);
    }
}
