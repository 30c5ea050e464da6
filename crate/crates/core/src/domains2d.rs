//! Matrix-free two-dimensional discretizations.
//!
//! All real builders assemble the energy form of a vertex grid
//! (edge differences plus a lumped potential term) and expose the
//! symmetrized operator `W^{-1/2} K W^{-1/2}`, where `W` holds the lumped
//! node weights (1/2 on a Neumann edge, 1/4 at a Neumann corner). Magnetic
//! builders attach Peierls link phases to the same edges.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::eigencore::{hermitian_embed, lanczos, ComplexOperator, Filter, LanczosOptions, RealOperator, Tridiag};
use crate::operators1d::{build_custom, Grid1D};
use crate::{Error, Result};

/// Residual target for the 2D ground-state solves. Eigenvalue errors are
/// bounded by the square of the residual over the spectral gap.
pub const SOLVE_TOL: f64 = 1e-7;

/// `k` lowest eigenvalues of a real 2D operator (Chebyshev-filtered
/// Lanczos); fails when the solver does not converge.
pub fn lowest_real(op: &dyn RealOperator, k: usize, seed: u64) -> Result<Vec<f64>> {
    let opts = LanczosOptions { k, tol: SOLVE_TOL, max_matvecs: 4_000_000, seed, filter: Filter::Auto, ..Default::default() };
    Ok(lanczos(op, &opts)?.require_converged()?.eigenvalues)
}

/// `k` lowest distinct eigenvalues of a complex Hermitian operator through
/// its real embedding (each value is doubled there and merged back).
pub fn lowest_complex(op: &dyn ComplexOperator, k: usize, seed: u64) -> Result<Vec<f64>> {
    let emb = hermitian_embed(op);
    let opts = LanczosOptions { k: 2 * k, tol: SOLVE_TOL, max_matvecs: 4_000_000, seed, filter: Filter::Auto, ..Default::default() };
    let mut v = lanczos(&emb, &opts)?.require_converged()?.eigenvalues;
    if v.len() < k {
        return Err(Error::NotConverged { solver: "lanczos", detail: format!("only {} distinct values of {k}", v.len()) });
    }
    v.truncate(k);
    Ok(v)
}

/// Richardson combination `(4 λ_f - λ_c) / 3` for a halved spacing.
pub fn richardson2(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Unknown of the discrete problem (includes nodes on Neumann edges).
    Interior,
    /// Dirichlet node, value fixed to zero.
    Boundary,
    /// Outside the domain (or cut away by a potential mask).
    Excluded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeBc {
    Dirichlet,
    Neumann,
}

/// Vertex grid `x_i = x0 + i dx`, `y_j = y0 + j dy` with `0 <= i <= nx`,
/// `0 <= j <= ny`, and a per-node mask.
#[derive(Clone, Debug)]
pub struct Grid2D {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub mask: Vec<NodeKind>,
    /// Left, right, bottom, top.
    pub edges: [EdgeBc; 4],
    pub diagonal_aligned: bool,
}

impl Grid2D {
    /// Rectangle with every edge node set from `edges` and all others interior.
    pub fn rectangle(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize, edges: [EdgeBc; 4]) -> Result<Self> {
        if !(x.1 > x.0 && y.1 > y.0) || nx < 2 || ny < 2 {
            return Err(Error::invalid("rectangle needs a nonempty box and at least 2 intervals per side"));
        }
        let mut g = Grid2D {
            x0: x.0,
            x1: x.1,
            y0: y.0,
            y1: y.1,
            nx,
            ny,
            dx: (x.1 - x.0) / nx as f64,
            dy: (y.1 - y.0) / ny as f64,
            mask: vec![NodeKind::Interior; (nx + 1) * (ny + 1)],
            edges,
            diagonal_aligned: false,
        };
        for j in 0..=ny {
            for i in 0..=nx {
                let dirichlet = (i == 0 && edges[0] == EdgeBc::Dirichlet)
                    || (i == nx && edges[1] == EdgeBc::Dirichlet)
                    || (j == 0 && edges[2] == EdgeBc::Dirichlet)
                    || (j == ny && edges[3] == EdgeBc::Dirichlet);
                if dirichlet {
                    g.mask[j * (nx + 1) + i] = NodeKind::Boundary;
                }
            }
        }
        Ok(g)
    }

    pub fn kind(&self, i: usize, j: usize) -> NodeKind {
        self.mask[j * (self.nx + 1) + i]
    }

    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.dx, self.y0 + j as f64 * self.dy)
    }

    /// Lumped quadrature weight of node `(i, j)` relative to `dx dy`.
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        self.row_weight(i, self.nx, 0) * self.row_weight(j, self.ny, 2)
    }

    fn row_weight(&self, k: usize, n: usize, side: usize) -> f64 {
        if (k == 0 && self.edges[side] == EdgeBc::Neumann) || (k == n && self.edges[side + 1] == EdgeBc::Neumann) {
            0.5
        } else {
            1.0
        }
    }

    /// Interior nodes in storage order (row by row in `y`).
    pub fn unknowns(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                if self.kind(i, j) == NodeKind::Interior {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

const NONE: u32 = u32::MAX;

/// Fixed 4-neighbor sparse layout shared by the real and complex operators.
#[derive(Clone, Debug)]
struct Layout {
    nodes: Vec<(usize, usize)>,
    /// Left, right, down, up neighbor unknowns.
    nbr: Vec<[u32; 4]>,
    weight: Vec<f64>,
}

impl Layout {
    fn new(grid: &Grid2D) -> Result<Self> {
        let nodes = grid.unknowns();
        if nodes.is_empty() {
            return Err(Error::invalid("grid has no interior nodes"));
        }
        if nodes.len() >= NONE as usize {
            return Err(Error::invalid("grid too large"));
        }
        let mut index = vec![NONE; grid.mask.len()];
        for (a, &(i, j)) in nodes.iter().enumerate() {
            index[j * (grid.nx + 1) + i] = a as u32;
        }
        let at = |i: isize, j: isize| -> u32 {
            if i < 0 || j < 0 || i > grid.nx as isize || j > grid.ny as isize {
                NONE
            } else {
                index[j as usize * (grid.nx + 1) + i as usize]
            }
        };
        let nbr = nodes
            .iter()
            .map(|&(i, j)| {
                let (i, j) = (i as isize, j as isize);
                [at(i - 1, j), at(i + 1, j), at(i, j - 1), at(i, j + 1)]
            })
            .collect();
        let weight = nodes.iter().map(|&(i, j)| grid.node_weight(i, j)).collect();
        Ok(Layout { nodes, nbr, weight })
    }

    /// Edge weight of the link from `(i, j)` in direction `dir`: the
    /// transverse quadrature weight of the row or column it lies on.
    fn edge_weight(grid: &Grid2D, i: usize, j: usize, dir: usize) -> f64 {
        if dir < 2 {
            grid.row_weight(j, grid.ny, 2)
        } else {
            grid.row_weight(i, grid.nx, 0)
        }
    }

    /// Whether a link leaving `(i, j)` in direction `dir` stays on the grid.
    fn link_exists(grid: &Grid2D, i: usize, j: usize, dir: usize) -> bool {
        match dir {
            0 => i > 0,
            1 => i < grid.nx,
            2 => j > 0,
            _ => j < grid.ny,
        }
    }
}

/// Real symmetric 5-point operator.
///
/// Off-diagonal entries are stored as one coefficient per direction plus a
/// short list of exceptions (links touching Neumann rows), which keeps the
/// product memory-light on large grids.
#[derive(Clone, Debug)]
pub struct StencilOp {
    pub grid: Grid2D,
    layout: Layout,
    diag: Vec<f64>,
    uniform: [f64; 4],
    fixes: Vec<(u32, u32, f64)>,
}

impl StencilOp {
    /// Assemble `-cx d_xx - cy d_yy + V` on the interior nodes of `grid`.
    /// Links to Dirichlet or excluded nodes only feed the diagonal; links
    /// leaving the grid across a Neumann edge do not exist.
    pub fn assemble(grid: Grid2D, cx: f64, cy: f64, v: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let layout = Layout::new(&grid)?;
        let n = layout.nodes.len();
        let mut diag = vec![0.0; n];
        let mut off = vec![[0.0; 4]; n];
        let coef = [cx / (grid.dx * grid.dx), cx / (grid.dx * grid.dx), cy / (grid.dy * grid.dy), cy / (grid.dy * grid.dy)];
        for a in 0..n {
            let (i, j) = layout.nodes[a];
            let (x, y) = grid.point(i, j);
            let pot = v(x, y);
            if !pot.is_finite() {
                return Err(Error::invalid(format!("potential not finite at ({x}, {y})")));
            }
            let mut k = layout.weight[a] * pot;
            for dir in 0..4 {
                if !Layout::link_exists(&grid, i, j, dir) {
                    continue;
                }
                let c = coef[dir] * Layout::edge_weight(&grid, i, j, dir);
                k += c;
                let b = layout.nbr[a][dir];
                if b != NONE {
                    off[a][dir] = -c / (layout.weight[a] * layout.weight[b as usize]).sqrt();
                }
            }
            diag[a] = k / layout.weight[a];
        }
        let mut uniform = [0.0; 4];
        for (d, u) in uniform.iter_mut().enumerate() {
            let mut vals: Vec<f64> = (0..n).filter(|&a| layout.nbr[a][d] != NONE).map(|a| off[a][d]).collect();
            vals.sort_by(f64::total_cmp);
            let mut best = (0, 0.0);
            let mut i = 0;
            while i < vals.len() {
                let j = vals[i..].iter().position(|&v| v != vals[i]).map_or(vals.len(), |p| i + p);
                if j - i > best.0 {
                    best = (j - i, vals[i]);
                }
                i = j;
            }
            *u = best.1;
        }
        let mut fixes = Vec::new();
        for a in 0..n {
            for d in 0..4 {
                let b = layout.nbr[a][d];
                if b != NONE && off[a][d] != uniform[d] {
                    fixes.push((a as u32, b, off[a][d] - uniform[d]));
                }
            }
        }
        Ok(StencilOp { grid, layout, diag, uniform, fixes })
    }

    /// Grid node of each unknown.
    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.layout.nodes
    }

    /// Convert an eigenvector of the symmetrized operator into nodal values.
    pub fn nodal(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.layout.weight).map(|(x, w)| x / w.sqrt()).collect()
    }

    pub fn max_diag(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, &d| m.max(d.abs()))
    }
}

impl RealOperator for StencilOp {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let c = self.uniform;
        for a in 0..self.diag.len() {
            let mut s = self.diag[a] * x[a];
            let nb = &self.layout.nbr[a];
            for d in 0..4 {
                if nb[d] != NONE {
                    s += c[d] * x[nb[d] as usize];
                }
            }
            y[a] = s;
        }
        for &(a, b, delta) in &self.fixes {
            y[a as usize] += delta * x[b as usize];
        }
    }
}

/// Left end of the triangle: vertices `(-π√2, 0)`, `(0, ±π√2)`.
pub const TRIANGLE_LEFT: f64 = -PI * std::f64::consts::SQRT_2;

/// Triangle grid with `Δx = Δy = π√2/M`: nodes `(i, j)` with `|j - M| < i < M`
/// are interior, `|j - M| = i` and `i = M` lie exactly on the edges.
pub fn triangle_grid(m: usize) -> Result<Grid2D> {
    if m < 16 {
        return Err(Error::invalid(format!("triangle resolution M = {m} below 16")));
    }
    let a = -TRIANGLE_LEFT;
    let mut g = Grid2D::rectangle((-a, 0.0), (-a, a), m, 2 * m, [EdgeBc::Dirichlet; 4])?;
    // Both spacings are a/M; keep them bit-identical.
    g.dy = g.dx;
    g.diagonal_aligned = true;
    for j in 0..=2 * m {
        for i in 0..=m {
            let off = j.abs_diff(m);
            g.mask[j * (m + 1) + i] = if off < i && i < m {
                NodeKind::Interior
            } else if off == i || (i == m && off <= m) {
                NodeKind::Boundary
            } else {
                NodeKind::Excluded
            };
        }
    }
    Ok(g)
}

/// `-h^2 d_xx - d_yy` on the triangle, Dirichlet everywhere.
pub fn build_triangle(h: f64, m: usize) -> Result<StencilOp> {
    if !(h > 0.0) {
        return Err(Error::invalid("h must be positive"));
    }
    StencilOp::assemble(triangle_grid(m)?, h * h, 1.0, |_, _| 0.0)
}

/// Upper half `y >= 0` of the triangle grid with a Neumann (even
/// reflection) closure on `y = 0`. Its spectrum is the even-in-`y` part of
/// the full triangle's, which contains the ground state.
pub fn triangle_half_grid(m: usize) -> Result<Grid2D> {
    if m < 16 {
        return Err(Error::invalid(format!("triangle resolution M = {m} below 16")));
    }
    let a = -TRIANGLE_LEFT;
    let edges = [EdgeBc::Dirichlet, EdgeBc::Dirichlet, EdgeBc::Neumann, EdgeBc::Dirichlet];
    let mut g = Grid2D::rectangle((-a, 0.0), (0.0, a), m, m, edges)?;
    g.dy = g.dx;
    g.diagonal_aligned = true;
    for j in 0..=m {
        for i in 0..=m {
            g.mask[j * (m + 1) + i] = if j < i && i < m {
                NodeKind::Interior
            } else if j == i || i == m {
                NodeKind::Boundary
            } else {
                NodeKind::Excluded
            };
        }
    }
    Ok(g)
}

/// Even-in-`y` restriction of [`build_triangle`]; same lowest eigenvalue on
/// half the unknowns.
pub fn build_triangle_even(h: f64, m: usize) -> Result<StencilOp> {
    if !(h > 0.0) {
        return Err(Error::invalid("h must be positive"));
    }
    StencilOp::assemble(triangle_half_grid(m)?, h * h, 1.0, |_, _| 0.0)
}

/// Box margin: the potential at the far ends of the Neumann edge and at the
/// top above the origin must exceed 1 (the Lu-Pan threshold) by this much.
pub const LUPAN_MARGIN: f64 = 4.0;

pub fn lupan_potential(theta: f64) -> impl Fn(f64, f64) -> f64 + Copy {
    let (c, s) = (theta.cos(), theta.sin());
    move |x, t| (t * c - x * s).powi(2)
}

/// Lu-Pan box: `s ∈ (-S, S)`, `t ∈ [0, T]`, Neumann at `t = 0`.
pub fn lupan_grid(theta: f64, s_half: f64, t_max: f64, nx: usize, ny: usize) -> Result<Grid2D> {
    if !(theta > 0.0 && theta < PI / 2.0) {
        return Err(Error::OutOfDomain { value: theta, domain: "(0, pi/2)".into() });
    }
    let v = lupan_potential(theta);
    let worst = v(-s_half, 0.0).min(v(s_half, 0.0)).min(v(0.0, t_max));
    if worst < 1.0 + LUPAN_MARGIN {
        return Err(Error::Truncation(format!(
            "Lu-Pan box S = {s_half}, T = {t_max} too small at theta = {theta}: V = {worst} at a far corner"
        )));
    }
    Grid2D::rectangle(
        (-s_half, s_half),
        (0.0, t_max),
        nx,
        ny,
        [EdgeBc::Dirichlet, EdgeBc::Dirichlet, EdgeBc::Neumann, EdgeBc::Dirichlet],
    )
}

/// `-Δ + (t cos θ - s sin θ)^2` on the Lu-Pan box.
pub fn build_lupan(theta: f64, s_half: f64, t_max: f64, nx: usize, ny: usize) -> Result<StencilOp> {
    let g = lupan_grid(theta, s_half, t_max, nx, ny)?;
    StencilOp::assemble(g, 1.0, 1.0, lupan_potential(theta))
}

/// `k` lowest Lu-Pan eigenvalues, optionally Richardson-combined with the
/// grid of half the resolution (`nx`, `ny` even).
pub fn lupan_eigenvalues(theta: f64, s_half: f64, t_max: f64, nx: usize, ny: usize, k: usize, extrapolate: bool) -> Result<Vec<f64>> {
    let fine = lowest_real(&build_lupan(theta, s_half, t_max, nx, ny)?, k, crate::DEFAULT_SEED)?;
    if !extrapolate {
        return Ok(fine);
    }
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::invalid("Richardson needs even nx and ny"));
    }
    let coarse = lowest_real(&build_lupan(theta, s_half, t_max, nx / 2, ny / 2)?, k, crate::DEFAULT_SEED)?;
    Ok(coarse.iter().zip(&fine).map(|(&c, &f)| richardson2(c, f)).collect())
}

/// Fiber `-d_t^2 + (t cos θ - s sin θ)^2` on the `t`-grid of the 2D box
/// (Neumann node at 0 with half weight, Dirichlet at `T`).
pub fn lupan_fiber(theta: f64, s: f64, t_max: f64, ny: usize) -> Result<Tridiag> {
    let (c, sn) = (theta.cos(), theta.sin());
    let v = move |t: f64| (t * c - s * sn).powi(2);
    build_custom(&v, None, None, 1.0, &Grid1D::neumann_dirichlet(0.0, t_max, ny)?)
}

/// The `s`-grid of the 2D box as a 1D Dirichlet grid.
pub fn lupan_s_grid(s_half: f64, nx: usize) -> Result<Grid1D> {
    Grid1D::dirichlet(-s_half, s_half, nx - 1)
}

/// Default Lu-Pan box `S = 2T` (localization runs along a tilted line).
pub fn lupan_default_box(t_max: f64) -> (f64, f64) {
    (2.0 * t_max, t_max)
}

type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Vector potential `(A1, A2)`.
#[derive(Clone)]
pub struct MagneticPotential2D {
    pub a1: Field,
    pub a2: Field,
    pub gauge: String,
}

impl std::fmt::Debug for MagneticPotential2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MagneticPotential2D({})", self.gauge)
    }
}

impl MagneticPotential2D {
    pub fn new(a1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, a2: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, gauge: &str) -> Self {
        MagneticPotential2D { a1: Arc::new(a1), a2: Arc::new(a2), gauge: gauge.to_string() }
    }

    /// `A = (0, x + x^3/3 + y^2 x)`, field `B = 1 + x^2 + y^2`.
    pub fn well() -> Self {
        Self::new(|_, _| 0.0, |x, y| x + x.powi(3) / 3.0 + y * y * x, "well")
    }

    /// Add the gradient `(d_x phi, d_y phi)` of a gauge function.
    pub fn gauge_shift(&self, dphi_x: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, dphi_y: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, tag: &str) -> Self {
        let (a1, a2) = (self.a1.clone(), self.a2.clone());
        Self::new(
            move |x, y| a1(x, y) + dphi_x(x, y),
            move |x, y| a2(x, y) + dphi_y(x, y),
            &format!("{}+{tag}", self.gauge),
        )
    }

    /// Strip potential `A1 = -B(s) τ`, `A2 = 0`.
    pub fn strip(b: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(move |s, tau| -b(s) * tau, |_, _| 0.0, "strip")
    }

    /// Field `d_x A2 - d_y A1` by centered differences.
    pub fn field(&self, x: f64, y: f64) -> f64 {
        let e = 1e-5;
        ((self.a2)(x + e, y) - (self.a2)(x - e, y) - (self.a1)(x, y + e) + (self.a1)(x, y - e)) / (2.0 * e)
    }
}

/// Three-point Gauss–Legendre line integral of `f` from `p` to `q`.
fn line_integral(f: &Field, p: (f64, f64), q: (f64, f64)) -> f64 {
    let r = (0.6f64).sqrt() / 2.0;
    let at = |t: f64| f(p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1));
    let len = (q.0 - p.0).hypot(q.1 - p.1);
    len * (5.0 * at(0.5 - r) + 8.0 * at(0.5) + 5.0 * at(0.5 + r)) / 18.0
}

/// Complex Hermitian 5-point operator for `(hx D_x + A1)^2 + (hy D_y + A2)^2 + V`.
#[derive(Clone, Debug)]
pub struct MagneticOp {
    pub grid: Grid2D,
    layout: Layout,
    diag: Vec<f64>,
    off: Vec<[Complex64; 4]>,
}

impl MagneticOp {
    /// Each link `p -> q` carries the Peierls factor `exp(i θ)` with
    /// `θ = (1/h) ∫_p^q A`, so that `(h D + A)^2` becomes
    /// `(h^2/Δ^2)(2u_p - e^{iθ} u_q - e^{-iθ'} u_{q'})`. A gauge change
    /// `A -> A + ∇φ` is then exactly the diagonal unitary `e^{-iφ/h}`.
    pub fn assemble(grid: Grid2D, hx: f64, hy: f64, a: &MagneticPotential2D, v: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !(hx > 0.0 && hy > 0.0) {
            return Err(Error::invalid("semiclassical factors must be positive"));
        }
        let layout = Layout::new(&grid)?;
        let n = layout.nodes.len();
        let mut diag = vec![0.0; n];
        let mut off = vec![[Complex64::new(0.0, 0.0); 4]; n];
        let hs = [hx, hx, hy, hy];
        let steps = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)];
        let spacing = [grid.dx, grid.dx, grid.dy, grid.dy];
        for a_idx in 0..n {
            let (i, j) = layout.nodes[a_idx];
            let p = grid.point(i, j);
            let pot = v(p.0, p.1);
            if !pot.is_finite() {
                return Err(Error::invalid(format!("potential not finite at {p:?}")));
            }
            let mut k = layout.weight[a_idx] * pot;
            for dir in 0..4 {
                if !Layout::link_exists(&grid, i, j, dir) {
                    continue;
                }
                let c = hs[dir] * hs[dir] / (spacing[dir] * spacing[dir]) * Layout::edge_weight(&grid, i, j, dir);
                k += c;
                let b = layout.nbr[a_idx][dir];
                if b != NONE {
                    let q = grid.point((i as isize + steps[dir].0) as usize, (j as isize + steps[dir].1) as usize);
                    let field = if dir < 2 { &a.a1 } else { &a.a2 };
                    let theta = line_integral(field, p, q) / hs[dir];
                    let theta = if dir % 2 == 0 { -theta } else { theta };
                    let scale = -c / (layout.weight[a_idx] * layout.weight[b as usize]).sqrt();
                    off[a_idx][dir] = Complex64::from_polar(scale, theta);
                }
            }
            diag[a_idx] = k / layout.weight[a_idx];
        }
        // The backward links above integrate from p to the left/lower
        // neighbor and flip the sign, i.e. θ_{pq} = -θ_{qp} exactly.
        Ok(MagneticOp { grid, layout, diag, off })
    }

    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.layout.nodes
    }
}

impl ComplexOperator for MagneticOp {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for a in 0..self.diag.len() {
            let mut s = x[a] * self.diag[a];
            let nb = &self.layout.nbr[a];
            let c = &self.off[a];
            for d in 0..4 {
                if nb[d] != NONE {
                    s += c[d] * x[nb[d] as usize];
                }
            }
            y[a] = s;
        }
    }
}

/// `h^2 D_x^2 + (h D_y + x + x^3/3 + y^2 x)^2` on `[-R, R]^2`, Dirichlet.
pub fn build_magnetic_well(h: f64, r: f64, n: usize) -> Result<MagneticOp> {
    build_magnetic_well_gauge(h, r, n, &MagneticPotential2D::well())
}

/// Magnetic well with an arbitrary (gauge-equivalent) vector potential.
pub fn build_magnetic_well_gauge(h: f64, r: f64, n: usize, a: &MagneticPotential2D) -> Result<MagneticOp> {
    if !(h > 0.0) {
        return Err(Error::invalid("h must be positive"));
    }
    // B = 1 + x^2 + y^2 has minimum 1 at the origin.
    if 1.0 + r * r < 3.0 {
        return Err(Error::Truncation(format!("well box R = {r}: B(R, 0) = {} below 3 min B", 1.0 + r * r)));
    }
    let g = Grid2D::rectangle((-r, r), (-r, r), n, n, [EdgeBc::Dirichlet; 4])?;
    MagneticOp::assemble(g, h, h, a, |_, _| 0.0)
}

/// Flat magnetic strip `(D_s - B(s) τ)^2 + ε^{-2} D_τ^2` on
/// `(-L, L) x (-1, 1)`, Dirichlet. `support` is the half-width outside
/// which `B` must vanish.
pub fn build_magnetic_strip(
    eps: f64,
    b: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    support: f64,
    s_half: f64,
    ns: usize,
    nt: usize,
) -> Result<MagneticOp> {
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if !(support < s_half) {
        return Err(Error::Truncation(format!("field support {support} not inside box half-width {s_half}")));
    }
    let outside = (0..=200).map(|k| support + (s_half - support) * k as f64 / 200.0);
    for s in outside {
        if b(s) != 0.0 || b(-s) != 0.0 {
            return Err(Error::Truncation(format!("field not compactly supported in |s| <= {support}: B({s}) != 0")));
        }
    }
    let g = Grid2D::rectangle((-s_half, s_half), (-1.0, 1.0), ns, nt, [EdgeBc::Dirichlet; 4])?;
    MagneticOp::assemble(g, 1.0, 1.0 / eps, &MagneticPotential2D::strip(b), |_, _| 0.0)
}
