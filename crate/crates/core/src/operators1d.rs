//! Finite-difference builders for the one-dimensional model operators.
//!
//! Every builder goes through [`assemble`], a conservative three-point
//! discretization of `-s (1/w) (p u')' + V` whose rows are symmetric in the
//! weighted inner product `sum_i c_i w_i u_i v_i dx` (`c_i = 1/2` on a Neumann
//! boundary node). Dirichlet truncation of a confining problem gives upper
//! bounds on the true eigenvalues, up to discretization error.
//!
//! Montgomery convention: the potential is `(zeta - t^{k+1}/(k+1))^2`. Texts
//! writing `(t^{k+1}/(k+1) + zeta)^2` describe the same band under
//! `zeta -> -zeta`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use crate::eigencore::{sturm_count, tridiag_eigenvalues, Tridiag};
use crate::specialfn::delta_mu1;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Nodes at `a + i dx`; Dirichlet ends are eliminated, Neumann ends are
    /// nodes carrying half weight.
    Vertex,
    /// Nodes at cell centers `a + (i + 1/2) dx`. Zero flux through the face at
    /// `a`; Dirichlet value at `b = a + (n + 1/2) dx`.
    CellCentered,
}

/// Uniform 1D grid with boundary flags.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub left: Boundary,
    pub right: Boundary,
    pub layout: Layout,
}

pub const MIN_NODES: usize = 8;

impl Grid1D {
    fn checked(self) -> Result<Self> {
        if !(self.b > self.a) {
            return Err(Error::invalid(format!("grid requires b > a, got [{}, {}]", self.a, self.b)));
        }
        if self.n < MIN_NODES {
            return Err(Error::invalid(format!("grid needs at least {MIN_NODES} nodes, got {}", self.n)));
        }
        Ok(self)
    }

    /// Dirichlet at both ends, `n` interior nodes.
    pub fn dirichlet(a: f64, b: f64, n: usize) -> Result<Self> {
        Grid1D { a, b, n, left: Boundary::Dirichlet, right: Boundary::Dirichlet, layout: Layout::Vertex }
            .checked()
    }

    /// Neumann node at `a`, Dirichlet truncation at `b`.
    pub fn neumann_dirichlet(a: f64, b: f64, n: usize) -> Result<Self> {
        Grid1D { a, b, n, left: Boundary::Neumann, right: Boundary::Dirichlet, layout: Layout::Vertex }
            .checked()
    }

    /// Neumann nodes at both ends.
    pub fn neumann(a: f64, b: f64, n: usize) -> Result<Self> {
        Grid1D { a, b, n, left: Boundary::Neumann, right: Boundary::Neumann, layout: Layout::Vertex }
            .checked()
    }

    /// Cell-centered grid on `(a, b)` with Dirichlet value at `b`.
    pub fn cell_centered(a: f64, b: f64, n: usize) -> Result<Self> {
        Grid1D { a, b, n, left: Boundary::Neumann, right: Boundary::Dirichlet, layout: Layout::CellCentered }
            .checked()
    }

    /// Symmetric Dirichlet grid on `[-half, half]` with an even node count, so
    /// the origin sits halfway between two nodes.
    pub fn symmetric(half: f64, n: usize) -> Result<Self> {
        Self::dirichlet(-half, half, n + n % 2)
    }

    /// Dirichlet grid on `(a, ~b)` whose spacing is adjusted so that `point`
    /// is a cell midpoint. The right end moves out to the next whole cell.
    pub fn dirichlet_avoiding(a: f64, b: f64, n: usize, point: f64) -> Result<Self> {
        if !(point > a && point < b) {
            return Err(Error::invalid("avoided point must lie inside the grid"));
        }
        let dx0 = (b - a) / (n + 1) as f64;
        let cells = ((point - a) / dx0 - 0.5).round().max(0.0);
        let dx = (point - a) / (cells + 0.5);
        let intervals = ((b - a) / dx - 1e-9).ceil().max(2.0) as usize;
        Self::dirichlet(a, a + intervals as f64 * dx, intervals - 1)
    }

    fn dirichlet_ends(&self) -> usize {
        usize::from(self.left == Boundary::Dirichlet) + usize::from(self.right == Boundary::Dirichlet)
    }

    pub fn spacing(&self) -> f64 {
        match self.layout {
            Layout::Vertex => (self.b - self.a) / (self.n + self.dirichlet_ends() - 1) as f64,
            Layout::CellCentered => (self.b - self.a) / (self.n as f64 + 0.5),
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.spacing();
        let first = match (self.layout, self.left) {
            (Layout::CellCentered, _) => self.a + 0.5 * dx,
            (Layout::Vertex, Boundary::Dirichlet) => self.a + dx,
            (Layout::Vertex, Boundary::Neumann) => self.a,
        };
        (0..self.n).map(|i| first + i as f64 * dx).collect()
    }

    /// Same domain with spacing divided by `ratio`. An odd ratio keeps cell
    /// midpoints at cell midpoints.
    pub fn refine(&self, ratio: usize) -> Grid1D {
        let mut g = *self;
        match self.layout {
            Layout::Vertex => {
                let intervals = self.n + self.dirichlet_ends() - 1;
                g.n = intervals * ratio + 1 - self.dirichlet_ends();
            }
            Layout::CellCentered => {
                let dx = self.spacing() / ratio as f64;
                g.n = ((self.b - self.a) / dx - 0.5).round() as usize;
                g.b = self.a + (g.n as f64 + 0.5) * dx;
            }
        }
        g
    }

    /// Mass fraction of a nodal vector (weighted norm) carried by nodes
    /// within 10% of the domain length from a Dirichlet end.
    pub fn tail_mass(&self, t: &Tridiag, v: &[f64]) -> f64 {
        let len = self.b - self.a;
        let nodes = self.nodes();
        let mut tail = 0.0;
        let mut total = 0.0;
        for (i, &x) in nodes.iter().enumerate() {
            let m = t.weight(i) * v[i] * v[i];
            total += m;
            let near_left = self.left == Boundary::Dirichlet && x - self.a < 0.1 * len;
            let near_right = self.right == Boundary::Dirichlet && self.b - x < 0.1 * len;
            if near_left || near_right {
                tail += m;
            }
        }
        tail / total
    }
}

/// Coefficients of `-scale (1/w) (p u')' + V`.
pub struct SturmLiouville<'a> {
    pub potential: &'a dyn Fn(f64) -> f64,
    /// `p`, sampled at cell faces. Defaults to 1.
    pub diffusion: Option<&'a dyn Fn(f64) -> f64>,
    /// `w`, sampled at nodes. Defaults to 1.
    pub weight: Option<&'a dyn Fn(f64) -> f64>,
    pub scale: f64,
}

impl<'a> SturmLiouville<'a> {
    pub fn schrodinger(potential: &'a dyn Fn(f64) -> f64, scale: f64) -> Self {
        SturmLiouville { potential, diffusion: None, weight: None, scale }
    }
}

/// Conservative three-point assembly on `grid`.
pub fn assemble(sl: &SturmLiouville<'_>, grid: &Grid1D) -> Result<Tridiag> {
    let n = grid.n;
    let dx = grid.spacing();
    let x = grid.nodes();
    let p = |xf: f64| sl.diffusion.map_or(1.0, |f| f(xf));
    let mut weights = Vec::with_capacity(n);
    let mut potential = Vec::with_capacity(n);
    for (i, &xi) in x.iter().enumerate() {
        let v = (sl.potential)(xi);
        if !v.is_finite() {
            return Err(Error::invalid(format!("potential not finite at x = {xi}")));
        }
        potential.push(v);
        let w = sl.weight.map_or(1.0, |f| f(xi));
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("weight not positive at x = {xi}")));
        }
        let half = grid.layout == Layout::Vertex
            && ((i == 0 && grid.left == Boundary::Neumann) || (i + 1 == n && grid.right == Boundary::Neumann));
        weights.push(if half { 0.5 * w } else { w });
    }
    // Face fluxes: face i sits between node i - 1 and node i; faces 0 and n
    // are the outer ones.
    let mut flux = vec![0.0; n + 1];
    for (f, item) in flux.iter_mut().enumerate() {
        let xf = match grid.layout {
            Layout::CellCentered => grid.a + f as f64 * dx,
            Layout::Vertex => x.first().copied().unwrap() + (f as f64 - 0.5) * dx,
        };
        let outer_left = f == 0;
        let outer_right = f == n;
        let value = if outer_left {
            match (grid.layout, grid.left) {
                (Layout::Vertex, Boundary::Dirichlet) => p(grid.a + 0.5 * dx),
                _ => 0.0,
            }
        } else if outer_right {
            match (grid.layout, grid.right) {
                (Layout::Vertex, Boundary::Dirichlet) => p(grid.b - 0.5 * dx),
                (Layout::CellCentered, Boundary::Dirichlet) => p(grid.a + n as f64 * dx),
                _ => 0.0,
            }
        } else {
            p(xf)
        };
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::invalid(format!("diffusion coefficient invalid at x = {xf}")));
        }
        *item = sl.scale * value / (dx * dx);
    }
    let mut diag = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n - 1);
    let mut upper = Vec::with_capacity(n - 1);
    for i in 0..n {
        diag.push((flux[i] + flux[i + 1]) / weights[i] + potential[i]);
        if i + 1 < n {
            upper.push(-flux[i + 1] / weights[i]);
            lower.push(-flux[i + 1] / weights[i + 1]);
        }
    }
    Ok(Tridiag::from_stencil(&lower, diag, &upper, Some(weights))?.with_spacing(dx))
}

/// Point where the Agmon distance `int sqrt((V - e)_+)` measured from
/// `start` in direction `dir` first exceeds `target`.
pub fn agmon_extent(v: &dyn Fn(f64) -> f64, e: f64, start: f64, dir: f64, target: f64) -> f64 {
    let step = 1e-3_f64.max(1e-3 * start.abs());
    let mut x = start;
    let mut acc = 0.0;
    for _ in 0..10_000_000 {
        let mid = x + 0.5 * dir * step;
        acc += (v(mid) - e).max(0.0).sqrt() * step;
        x += dir * step;
        if acc >= target {
            break;
        }
    }
    x
}

/// Default Agmon distance between the classically allowed region and a
/// truncation end; the ground state tail is then far below 1e-8.
pub const AGMON_TARGET: f64 = 24.0;

/// Margin required between the potential at a truncation end and the
/// estimated eigenvalue.
pub const TRUNCATION_MARGIN: f64 = 10.0;

fn coarse_ground(sl: &SturmLiouville<'_>, grid: &Grid1D) -> Result<f64> {
    let mut coarse = *grid;
    coarse.n = coarse.n.min(200);
    if coarse.layout == Layout::CellCentered {
        coarse.b = grid.a + (coarse.n as f64 + 0.5) * ((grid.b - grid.a) / (grid.n as f64 + 0.5))
            .max((grid.b - grid.a) / (coarse.n as f64 + 0.5));
    }
    let t = assemble(sl, &coarse)?;
    Ok(tridiag_eigenvalues(&t, 1, 1e-8)?.lowest())
}

fn check_truncation(sl: &SturmLiouville<'_>, grid: &Grid1D, margin: f64) -> Result<()> {
    let estimate = coarse_ground(sl, grid)?;
    for (end, bc) in [(grid.a, grid.left), (grid.b, grid.right)] {
        if bc == Boundary::Dirichlet && grid.layout == Layout::Vertex || end == grid.b {
            let v = (sl.potential)(end);
            if bc == Boundary::Dirichlet && v < estimate + margin {
                return Err(Error::Truncation(format!(
                    "V({end}) = {v:.4} below estimate {estimate:.4} + margin {margin}"
                )));
            }
        }
    }
    Ok(())
}

/// Whether the broken-Montgomery fiber lives on the line or on the Neumann
/// half-line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FiberDomain {
    FullLine,
    HalfLineNeumann,
}

pub type Callable = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The one-dimensional model operators.
#[derive(Clone)]
pub enum Model1D {
    /// `D_t^2 + (zeta - t)^2` on the Neumann half-line.
    DeGennes { zeta: f64 },
    /// `D_t^2 + (zeta - t^{k+1}/(k+1))^2` on the line.
    Montgomery { k: u32, zeta: f64 },
    /// Same potential on the Neumann half-line.
    MontgomeryHalf { k: u32, zeta: f64 },
    /// `D_tau^2 + (-xi - x tau + sgn(tau) tau^2/2)^2`.
    BrokenMontFiber { x: f64, xi: f64, domain: FiberDomain },
    /// `D_t^2 + ((t - x)^2/2 - eta)^2` on the Neumann half-line.
    ShiftedNeumann { x: f64, eta: f64 },
    /// `D_x^2 + x^2`.
    Harmonic,
    /// `-tau^{-2} d/dtau tau^2 d/dtau + tau^2 / 32` in `L^2(tau^2 dtau)`.
    Laguerre,
    /// `-h^2 d^2 + pi^2 / (4 (x + pi sqrt 2)^2)` on `(-pi sqrt 2, 0)`.
    BOTriangle { h: f64 },
    /// Same with the potential continued by `1/2` on `x >= 0`.
    BOGuide { h: f64 },
    /// `h^2 D^2 + mu_hat(x)`; branch 1 uses 1 on `x < 0`, branch 2 uses 0.
    DeltaEffective { h: f64, branch: u8 },
    CustomPotential {
        potential: Callable,
        weight: Option<Callable>,
        diffusion: Option<Callable>,
        h_s: Option<f64>,
    },
}

impl std::fmt::Debug for Model1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model1D::DeGennes { zeta } => write!(f, "DeGennes(zeta={zeta})"),
            Model1D::Montgomery { k, zeta } => write!(f, "Montgomery(k={k}, zeta={zeta})"),
            Model1D::MontgomeryHalf { k, zeta } => write!(f, "MontgomeryHalf(k={k}, zeta={zeta})"),
            Model1D::BrokenMontFiber { x, xi, domain } => {
                write!(f, "BrokenMontFiber(x={x}, xi={xi}, {domain:?})")
            }
            Model1D::ShiftedNeumann { x, eta } => write!(f, "ShiftedNeumann(x={x}, eta={eta})"),
            Model1D::Harmonic => write!(f, "Harmonic"),
            Model1D::Laguerre => write!(f, "Laguerre"),
            Model1D::BOTriangle { h } => write!(f, "BOTriangle(h={h})"),
            Model1D::BOGuide { h } => write!(f, "BOGuide(h={h})"),
            Model1D::DeltaEffective { h, branch } => write!(f, "DeltaEffective(h={h}, branch={branch})"),
            Model1D::CustomPotential { h_s, .. } => write!(f, "CustomPotential(h_s={h_s:?})"),
        }
    }
}

pub const BO_LEFT: f64 = -PI * SQRT_2;

fn bo_potential(x: f64) -> f64 {
    PI * PI / (4.0 * (x - BO_LEFT).powi(2))
}

fn guide_potential(x: f64) -> f64 {
    if x >= 0.0 {
        0.5
    } else {
        bo_potential(x)
    }
}

fn delta_hat(branch: u8) -> impl Fn(f64) -> f64 {
    let left = if branch == 1 { 1.0 } else { 0.0 };
    move |x: f64| if x < 0.0 { left } else { delta_mu1(x) }
}

fn montgomery_potential(k: u32, zeta: f64) -> impl Fn(f64) -> f64 {
    let kp = (k + 1) as f64;
    move |t: f64| (zeta - t.powi(k as i32 + 1) / kp).powi(2)
}

fn broken_potential(x: f64, xi: f64) -> impl Fn(f64) -> f64 {
    move |tau: f64| (-xi - x * tau + tau.signum() * tau * tau / 2.0).powi(2)
}

fn shifted_potential(x: f64, eta: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| ((t - x).powi(2) / 2.0 - eta).powi(2)
}

fn require_positive_h(h: f64) -> Result<()> {
    if h > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("semiclassical parameter h = {h} must be positive")))
    }
}

/// `-d^2/dt^2 + (zeta - t)^2` on `[0, b]`, Neumann at 0.
pub fn build_de_gennes(zeta: f64, g: &Grid1D) -> Result<Tridiag> {
    if g.a != 0.0 || g.left != Boundary::Neumann || g.right != Boundary::Dirichlet || g.layout != Layout::Vertex {
        return Err(Error::invalid("de Gennes grid must be a Neumann-Dirichlet vertex grid from 0"));
    }
    if g.b < zeta + 12.0 {
        return Err(Error::Truncation(format!("de Gennes needs b >= zeta + 12, got b = {}", g.b)));
    }
    let v = move |t: f64| (zeta - t).powi(2);
    assemble(&SturmLiouville::schrodinger(&v, 1.0), g)
}

/// Generalized Montgomery operator on a symmetric Dirichlet box.
pub fn build_montgomery(k: u32, zeta: f64, g: &Grid1D) -> Result<Tridiag> {
    if k == 0 {
        return Err(Error::invalid("Montgomery order k must be >= 1"));
    }
    if g.left != Boundary::Dirichlet || g.right != Boundary::Dirichlet {
        return Err(Error::invalid("Montgomery grid must be Dirichlet at both ends"));
    }
    let v = montgomery_potential(k, zeta);
    let sl = SturmLiouville::schrodinger(&v, 1.0);
    check_truncation(&sl, g, TRUNCATION_MARGIN)?;
    assemble(&sl, g)
}

/// Montgomery potential on `[0, L]` with Neumann at 0.
pub fn build_montgomery_half(k: u32, zeta: f64, g: &Grid1D) -> Result<Tridiag> {
    if k == 0 {
        return Err(Error::invalid("Montgomery order k must be >= 1"));
    }
    if g.a != 0.0 || g.left != Boundary::Neumann {
        return Err(Error::invalid("half-line grid must start at 0 with Neumann"));
    }
    let v = montgomery_potential(k, zeta);
    let sl = SturmLiouville::schrodinger(&v, 1.0);
    check_truncation(&sl, g, TRUNCATION_MARGIN)?;
    assemble(&sl, g)
}

/// Broken-Montgomery fiber `D_tau^2 + (-xi - x tau + sgn(tau) tau^2 / 2)^2`.
pub fn build_broken_mont_fiber(x: f64, xi: f64, domain: FiberDomain, g: &Grid1D) -> Result<Tridiag> {
    match domain {
        FiberDomain::FullLine => {
            if g.left != Boundary::Dirichlet || g.right != Boundary::Dirichlet {
                return Err(Error::invalid("full-line fiber needs Dirichlet ends"));
            }
            if g.nodes().iter().any(|&t| t == 0.0) {
                return Err(Error::invalid("full-line fiber grid has a node at tau = 0"));
            }
        }
        FiberDomain::HalfLineNeumann => {
            if g.a != 0.0 || g.left != Boundary::Neumann {
                return Err(Error::invalid("Neumann fiber grid must start at 0 with Neumann"));
            }
        }
    }
    let v = broken_potential(x, xi);
    let sl = SturmLiouville::schrodinger(&v, 1.0);
    check_truncation(&sl, g, TRUNCATION_MARGIN)?;
    assemble(&sl, g)
}

/// `D_t^2 + ((t - x)^2 / 2 - eta)^2` on the Neumann half-line.
pub fn build_shifted_neumann(x: f64, eta: f64, g: &Grid1D) -> Result<Tridiag> {
    if g.a != 0.0 || g.left != Boundary::Neumann {
        return Err(Error::invalid("Neumann grid must start at 0 with Neumann"));
    }
    let v = shifted_potential(x, eta);
    assemble(&SturmLiouville::schrodinger(&v, 1.0), g)
}

/// `D_x^2 + x^2` on a Dirichlet box.
pub fn build_harmonic(g: &Grid1D) -> Result<Tridiag> {
    if g.left != Boundary::Dirichlet || g.right != Boundary::Dirichlet {
        return Err(Error::invalid("harmonic grid must be Dirichlet at both ends"));
    }
    let v = |x: f64| x * x;
    let sl = SturmLiouville::schrodinger(&v, 1.0);
    check_truncation(&sl, g, TRUNCATION_MARGIN)?;
    assemble(&sl, g)
}

/// Radial operator `-tau^{-2} (tau^2 u')' + tau^2 / 32`, symmetric in
/// `L^2(tau^2 dtau)`.
pub fn build_laguerre(g: &Grid1D) -> Result<Tridiag> {
    if g.layout != Layout::CellCentered || g.a != 0.0 {
        return Err(Error::invalid("Laguerre operator needs a cell-centered grid from 0"));
    }
    let sq = |t: f64| t * t;
    let v = |t: f64| t * t / 32.0;
    let sl = SturmLiouville { potential: &v, diffusion: Some(&sq), weight: Some(&sq), scale: 1.0 };
    assemble(&sl, g)
}

/// Born–Oppenheimer triangle operator on `(-pi sqrt 2, 0)`, Dirichlet.
pub fn build_bo_triangle(h: f64, g: &Grid1D) -> Result<Tridiag> {
    require_positive_h(h)?;
    if g.left != Boundary::Dirichlet || g.right != Boundary::Dirichlet {
        return Err(Error::invalid("BO triangle grid must be Dirichlet at both ends"));
    }
    if (g.a - BO_LEFT).abs() > 1e-12 || g.b > 1e-12 {
        return Err(Error::invalid("BO triangle grid must span (-pi sqrt 2, 0)"));
    }
    assemble(&SturmLiouville::schrodinger(&bo_potential, h * h), g)
}

/// Born–Oppenheimer broken-guide operator on `(-pi sqrt 2, X_max)`.
pub fn build_bo_guide(h: f64, g: &Grid1D) -> Result<Tridiag> {
    require_positive_h(h)?;
    if (g.a - BO_LEFT).abs() > 1e-12 || g.b < 5.0 {
        return Err(Error::invalid("BO guide grid must span (-pi sqrt 2, X_max >= 5)"));
    }
    if g.nodes().iter().any(|&x| x == 0.0) {
        return Err(Error::invalid("BO guide grid has a node on the potential jump"));
    }
    assemble(&SturmLiouville::schrodinger(&guide_potential, h * h), g)
}

/// Effective δ-interaction operator `h^2 D^2 + mu_hat(x)`.
pub fn build_delta_effective(h: f64, branch: u8, g: &Grid1D) -> Result<Tridiag> {
    require_positive_h(h)?;
    if branch != 1 && branch != 2 {
        return Err(Error::invalid("delta-effective branch must be 1 or 2"));
    }
    let v = delta_hat(branch);
    assemble(&SturmLiouville::schrodinger(&v, h * h), g)
}

/// Generic conservative assembly of `-h_s (1/w) (p u')' + V`.
pub fn build_custom(
    potential: &dyn Fn(f64) -> f64,
    weight: Option<&dyn Fn(f64) -> f64>,
    diffusion: Option<&dyn Fn(f64) -> f64>,
    h_s: f64,
    g: &Grid1D,
) -> Result<Tridiag> {
    assemble(&SturmLiouville { potential, diffusion, weight, scale: h_s }, g)
}

impl Model1D {
    /// Potential of the model.
    pub fn potential(&self) -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
        match self.clone() {
            Model1D::DeGennes { zeta } => Box::new(move |t| (zeta - t).powi(2)),
            Model1D::Montgomery { k, zeta } | Model1D::MontgomeryHalf { k, zeta } => {
                Box::new(montgomery_potential(k, zeta))
            }
            Model1D::BrokenMontFiber { x, xi, .. } => Box::new(broken_potential(x, xi)),
            Model1D::ShiftedNeumann { x, eta } => Box::new(shifted_potential(x, eta)),
            Model1D::Harmonic => Box::new(|x| x * x),
            Model1D::Laguerre => Box::new(|t| t * t / 32.0),
            Model1D::BOTriangle { .. } => Box::new(bo_potential),
            Model1D::BOGuide { .. } => Box::new(guide_potential),
            Model1D::DeltaEffective { branch, .. } => Box::new(delta_hat(branch)),
            Model1D::CustomPotential { potential, .. } => Box::new(move |x| potential(x)),
        }
    }

    /// Grid with `n` nodes following the truncation policy: Agmon distance
    /// [`AGMON_TARGET`] beyond the classically allowed region of a generous
    /// energy estimate, and the builders' own minimum extents.
    pub fn default_grid(&self, n: usize) -> Result<Grid1D> {
        let v = self.potential();
        match self {
            Model1D::DeGennes { zeta } => {
                let b = agmon_extent(&*v, 1.0, zeta.max(0.0) + 1.0, 1.0, AGMON_TARGET).max(zeta + 12.0);
                Grid1D::neumann_dirichlet(0.0, b, n)
            }
            Model1D::Montgomery { k, zeta } => {
                let e = zeta * zeta + 5.0;
                let start = ((k + 1) as f64 * zeta.abs()).powf(1.0 / (k + 1) as f64) + 0.1;
                let right = agmon_extent(&*v, e, start, 1.0, AGMON_TARGET);
                let left = agmon_extent(&*v, e, -start, -1.0, AGMON_TARGET);
                Grid1D::symmetric(right.max(-left), n)
            }
            Model1D::MontgomeryHalf { k, zeta } => {
                let e = zeta * zeta + 5.0;
                let start = ((k + 1) as f64 * zeta.abs()).powf(1.0 / (k + 1) as f64) + 0.1;
                Grid1D::neumann_dirichlet(0.0, agmon_extent(&*v, e, start, 1.0, AGMON_TARGET), n)
            }
            Model1D::BrokenMontFiber { x, xi, domain } => {
                let e = xi * xi + 5.0;
                let reach = 2.0 * (x.abs() + xi.abs().sqrt()) + 1.0;
                let right = agmon_extent(&*v, e, reach, 1.0, AGMON_TARGET);
                match domain {
                    FiberDomain::HalfLineNeumann => Grid1D::neumann_dirichlet(0.0, right, n),
                    FiberDomain::FullLine => {
                        let left = agmon_extent(&*v, e, -reach, -1.0, AGMON_TARGET);
                        Grid1D::symmetric(right.max(-left), n)
                    }
                }
            }
            Model1D::ShiftedNeumann { x, eta } => {
                let e = eta * eta + 5.0;
                let reach = x.abs() + (2.0 * eta.abs()).sqrt() + 1.0;
                Grid1D::neumann_dirichlet(0.0, agmon_extent(&*v, e, reach, 1.0, AGMON_TARGET), n)
            }
            Model1D::Harmonic => Grid1D::symmetric(agmon_extent(&*v, 7.0, 2.7, 1.0, AGMON_TARGET), n),
            Model1D::Laguerre => {
                Grid1D::cell_centered(0.0, agmon_extent(&*v, 3.0, 10.0, 1.0, AGMON_TARGET), n)
            }
            Model1D::BOTriangle { .. } => Grid1D::dirichlet(BO_LEFT, 0.0, n),
            Model1D::BOGuide { h } => {
                // Decay rate sqrt(1/2 - 1/8) / h on the right.
                let right = (AGMON_TARGET * h / (0.375f64).sqrt()).max(5.0);
                Grid1D::dirichlet_avoiding(BO_LEFT, right, n, 0.0)
            }
            Model1D::DeltaEffective { h, .. } => {
                // The wall mu = 1 on x < 0 sits 2 above the well bottom; on the
                // right the low states are Airy-like on the scale h^{2/3}.
                let e = (-1.0 + 6.0 * h.powf(2.0 / 3.0)).min(-0.3);
                let right = agmon_extent(&*v, e, 1e-3, 1.0, AGMON_TARGET * h).min(8.0);
                let left = -AGMON_TARGET * h / 2f64.sqrt();
                Grid1D::dirichlet_avoiding(left, right, n, 0.0)
            }
            Model1D::CustomPotential { .. } => {
                Err(Error::invalid("custom potentials need an explicit grid"))
            }
        }
    }

    /// Assemble the model on `g`.
    pub fn build(&self, g: &Grid1D) -> Result<Tridiag> {
        match self {
            Model1D::DeGennes { zeta } => build_de_gennes(*zeta, g),
            Model1D::Montgomery { k, zeta } => build_montgomery(*k, *zeta, g),
            Model1D::MontgomeryHalf { k, zeta } => build_montgomery_half(*k, *zeta, g),
            Model1D::BrokenMontFiber { x, xi, domain } => build_broken_mont_fiber(*x, *xi, *domain, g),
            Model1D::ShiftedNeumann { x, eta } => build_shifted_neumann(*x, *eta, g),
            Model1D::Harmonic => build_harmonic(g),
            Model1D::Laguerre => build_laguerre(g),
            Model1D::BOTriangle { h } => build_bo_triangle(*h, g),
            Model1D::BOGuide { h } => build_bo_guide(*h, g),
            Model1D::DeltaEffective { h, branch } => build_delta_effective(*h, *branch, g),
            Model1D::CustomPotential { potential, weight, diffusion, h_s } => {
                let w = weight.as_ref().map(|f| f.as_ref() as &dyn Fn(f64) -> f64);
                let p = diffusion.as_ref().map(|f| f.as_ref() as &dyn Fn(f64) -> f64);
                build_custom(potential.as_ref(), w, p, h_s.unwrap_or(1.0), g)
            }
        }
    }

    /// Refinement ratio that keeps the grid's node-avoidance property.
    pub fn refinement_ratio(&self) -> usize {
        match self {
            Model1D::BrokenMontFiber { domain: FiberDomain::FullLine, .. }
            | Model1D::BOGuide { .. }
            | Model1D::DeltaEffective { .. } => 3,
            _ => 2,
        }
    }
}

/// Combine estimates on spacings `dx` and `dx / ratio` assuming an `O(dx^2)`
/// error.
pub fn richardson(coarse: f64, fine: f64, ratio: usize) -> f64 {
    let r2 = (ratio * ratio) as f64;
    (r2 * fine - coarse) / (r2 - 1.0)
}

/// Smallest `k` eigenvalues of `model` on `grid`, optionally Richardson
/// extrapolated with the model's refinement ratio.
pub fn model_eigenvalues(model: &Model1D, grid: &Grid1D, k: usize, extrapolate: bool) -> Result<Vec<f64>> {
    let tol = 1e-13;
    let coarse = tridiag_eigenvalues(&model.build(grid)?, k, tol)?.eigenvalues;
    if !extrapolate {
        return Ok(coarse);
    }
    let ratio = model.refinement_ratio();
    let fine = tridiag_eigenvalues(&model.build(&grid.refine(ratio))?, k, tol)?.eigenvalues;
    Ok(coarse.iter().zip(&fine).map(|(c, f)| richardson(*c, *f, ratio)).collect())
}

/// Lowest eigenvalue of `model` with its default grid.
pub fn ground_energy(model: &Model1D, n: usize, extrapolate: bool) -> Result<f64> {
    let g = model.default_grid(n)?;
    Ok(model_eigenvalues(model, &g, 1, extrapolate)?[0])
}

/// Observed convergence order from three successive refinements by `ratio`.
pub fn convergence_order(model: &Model1D, grid: &Grid1D, ratio: usize) -> Result<f64> {
    let g1 = *grid;
    let g2 = g1.refine(ratio);
    let g3 = g2.refine(ratio);
    let l: Vec<f64> = [g1, g2, g3]
        .iter()
        .map(|g| tridiag_eigenvalues(&model.build(g)?, 1, 1e-14).map(|s| s.lowest()))
        .collect::<Result<_>>()?;
    Ok(((l[0] - l[1]) / (l[1] - l[2])).abs().ln() / (ratio as f64).ln())
}

/// True when no eigenvalue of `t` lies below `e`.
pub fn nothing_below(t: &Tridiag, e: f64) -> Result<bool> {
    Ok(sturm_count(t, e)? == 0)
}
