use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::operator::RealOperator;
use super::spectrum::{SolverMeta, Spectrum, EMBED_DEDUP_REL};
use crate::{Error, Result};

/// Options for [`lanczos`].
#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Number of smallest eigenpairs wanted (at most 20).
    pub k: usize,
    /// Budget of operator applications.
    pub max_matvecs: usize,
    pub seed: u64,
    /// Absolute residual target `||Ax - theta x||` for unit Ritz vectors.
    pub tol: f64,
    /// Basis size before a thick restart; 0 picks a default from `k`.
    pub basis: usize,
    /// Relative tolerance for merging Ritz values.
    pub dedup_rel: f64,
    /// Chebyshev spectral filter applied inside the recurrence.
    pub filter: Filter,
}

/// Polynomial acceleration for stiff operators.
///
/// With a filter the recurrence runs on `T_d(L(A))`, `L` mapping
/// `[c, a_max]` onto `[-1, 1]` and `d` odd, so the wanted end of the
/// spectrum (below `c`) is mapped monotonically far below -1 while the bulk
/// stays in `[-1, 1]`. Convergence is judged on the residuals of `A` itself.
/// The cut `c` is the `(k+1)`-th Ritz value of a short unfiltered run, an
/// upper bound of `λ_{k+1}` by interlacing, so no wanted value is lost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    Off,
    /// Degree chosen from the probed spectral interval.
    Auto,
    Degree(usize),
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            k: 1,
            max_matvecs: 50_000,
            seed: crate::DEFAULT_SEED,
            tol: 1e-8,
            basis: 0,
            dedup_rel: EMBED_DEDUP_REL,
            filter: Filter::Off,
        }
    }
}

/// The `k` smallest eigenpairs of a symmetric operator.
///
/// Exhausting `maxiter` operator applications is not an error: the partial
/// result is returned with `meta.converged == false`.
pub fn lanczos_smallest(
    op: &dyn RealOperator,
    k: usize,
    maxiter: usize,
    seed: u64,
    tol: f64,
) -> Result<Spectrum> {
    lanczos(
        op,
        &LanczosOptions { k, max_matvecs: maxiter, seed, tol, ..Default::default() },
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(b, a)| *b += alpha * a);
}

fn nrm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two passes of classical Gram-Schmidt against the whole basis.
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) {
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            axpy(-c, v, w);
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..4 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        reorthogonalize(basis, &mut v);
        let norm = nrm(&v);
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            return Some(v);
        }
    }
    None
}

struct RitzSet {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn rayleigh_ritz(t: &DMatrix<f64>, d: usize) -> RitzSet {
    let sub = t.view((0, 0), (d, d)).into_owned();
    let eig = super::dense::refined_symmetric_eigen(&sub);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    RitzSet { values, vectors }
}

fn combine(basis: &[Vec<f64>], coeffs: nalgebra::DVectorView<f64>) -> Vec<f64> {
    let n = basis[0].len();
    let mut x = vec![0.0; n];
    for (j, v) in basis.iter().enumerate().take(coeffs.len()) {
        axpy(coeffs[j], v, &mut x);
    }
    x
}

/// Thick-restart Lanczos with full reorthogonalization.
///
/// The Krylov basis is kept explicitly and every new direction is
/// orthogonalized against all of it, so no spurious copies appear. When the
/// basis reaches its size limit the smallest Ritz vectors are kept together
/// with the current residual direction and the recurrence resumes from them.
/// An exact invariant subspace (breakdown) is continued with a fresh random
/// direction, so repeated eigenvalues are found with their multiplicity.
pub fn lanczos(op: &dyn RealOperator, opts: &LanczosOptions) -> Result<Spectrum> {
    let n = op.dim();
    let k = opts.k;
    if k == 0 || k > 20 {
        return Err(Error::invalid(format!("lanczos: k = {k} outside 1..=20")));
    }
    if k > n {
        return Err(Error::invalid(format!("lanczos: k = {k} exceeds dimension {n}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("lanczos: tolerance must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    if opts.filter == Filter::Off || n < 4 * (k + 40) {
        return run(op, None, 1, opts, &mut rng, 0);
    }
    let steps = 2 * k + 40;
    let (ritz, top) = probe(op, steps, &mut rng);
    let low = ritz[0];
    let cut = ritz[k.min(ritz.len() - 1)];
    if !(cut > low && top > cut) {
        return run(op, None, 1, opts, &mut rng, steps);
    }
    let degree = match opts.filter {
        Filter::Degree(d) => d,
        _ => (1.25 * ((top - cut) / (cut - low)).sqrt()).ceil() as usize,
    }
    .clamp(3, 401)
        | 1;
    let cheb = Chebyshev { op, center: 0.5 * (top + cut), half: 0.5 * (top - cut), degree };
    let mut s = run(&cheb, Some(op), degree, opts, &mut rng, steps)?;
    s.meta.solver = "lanczos-thick-restart-chebyshev";
    if let Some(&worst) = s.eigenvalues.last() {
        if s.meta.converged && s.eigenvalues.len() >= k && worst >= cut {
            return Err(Error::NotConverged {
                solver: "lanczos",
                detail: format!("filtered value {worst} above the filter cut {cut}"),
            });
        }
    }
    Ok(s)
}

/// `T_d((A - center)/half)` by the three-term recurrence.
struct Chebyshev<'a> {
    op: &'a dyn RealOperator,
    center: f64,
    half: f64,
    degree: usize,
}

impl RealOperator for Chebyshev<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        let mut prev = x.to_vec();
        let mut ax = vec![0.0; n];
        self.op.apply(x, &mut ax);
        let mut cur: Vec<f64> = (0..n).map(|i| (ax[i] - self.center * x[i]) / self.half).collect();
        for _ in 1..self.degree {
            self.op.apply(&cur, &mut ax);
            for i in 0..n {
                let next = 2.0 * (ax[i] - self.center * cur[i]) / self.half - prev[i];
                prev[i] = cur[i];
                cur[i] = next;
            }
        }
        y.copy_from_slice(&cur);
    }
}

/// Short unrestarted Lanczos run: ascending Ritz values and an upper bound
/// for the top of the spectrum (largest Ritz value plus its residual).
fn probe(op: &dyn RealOperator, steps: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let n = op.dim();
    let steps = steps.min(n);
    let mut basis = vec![random_unit(rng, n, &[]).expect("nonzero random vector")];
    let mut t = DMatrix::<f64>::zeros(steps, steps);
    let mut w = vec![0.0; n];
    let mut beta = 0.0;
    let mut d = 0;
    for j in 0..steps {
        op.apply(&basis[j], &mut w);
        t[(j, j)] = dot(&basis[j], &w);
        reorthogonalize(&basis, &mut w);
        beta = nrm(&w);
        d = j + 1;
        if d == steps || beta <= 1e-12 * t[(j, j)].abs().max(1.0) {
            break;
        }
        t[(j, d)] = beta;
        t[(d, j)] = beta;
        basis.push(w.iter().map(|x| x / beta).collect());
    }
    let ritz = rayleigh_ritz(&t, d);
    let top = ritz.values[d - 1] + (beta * ritz.vectors[(d - 1, d - 1)]).abs();
    (ritz.values, top)
}

/// Thick-restart recurrence on `iter_op`. With `check` set, the recurrence
/// operator is a filter of `check` and Ritz vectors are accepted on their
/// residuals with respect to `check`.
fn run(
    iter_op: &dyn RealOperator,
    check: Option<&dyn RealOperator>,
    cost: usize,
    opts: &LanczosOptions,
    rng: &mut ChaCha8Rng,
    spent: usize,
) -> Result<Spectrum> {
    let op = iter_op;
    let n = op.dim();
    let k = opts.k;
    let m = if opts.basis == 0 { (3 * k + 60).max(80) } else { opts.basis.max(k + 2) }.min(n);
    let check_every = if check.is_some() { 2 } else { 10 };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    basis.push(random_unit(rng, n, &[]).expect("nonzero random vector"));
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut w = vec![0.0; n];
    let mut matvecs = spent;
    let mut anorm: f64 = 0.0;
    // Columns of `t` already filled.
    let mut d = 0usize;
    // Residual direction and its coupling to the last column.
    let mut r_beta = 0.0;
    let mut exhausted = false;

    loop {
        // Expand.
        let mut since_check = 0;
        loop {
            if matvecs >= opts.max_matvecs {
                break;
            }
            let j = d;
            op.apply(&basis[j], &mut w);
            matvecs += cost;
            let alpha = dot(&basis[j], &w);
            t[(j, j)] = alpha;
            reorthogonalize(&basis, &mut w);
            let beta = nrm(&w);
            anorm = anorm.max(alpha.abs() + beta);
            d = j + 1;
            since_check += 1;
            let next = if beta <= 1e-12 * anorm.max(f64::MIN_POSITIVE) {
                r_beta = 0.0;
                if d == n {
                    exhausted = true;
                    None
                } else {
                    random_unit(rng, n, &basis)
                }
            } else {
                r_beta = beta;
                Some(w.iter().map(|x| x / beta).collect::<Vec<f64>>())
            };
            let Some(v) = next else {
                exhausted = true;
                break;
            };
            if d == m {
                // Residual direction waits for the restart.
                basis.push(v);
                break;
            }
            basis.push(v);
            t[(j, d)] = r_beta;
            t[(d, j)] = r_beta;
            if since_check >= check_every && d >= k {
                break;
            }
        }

        // Rayleigh-Ritz on the filled block.
        let ritz = rayleigh_ritz(&t, d);
        let wanted = k.min(d);
        let estimates: Vec<f64> =
            (0..d).map(|i| (r_beta * ritz.vectors[(d - 1, i)]).abs()).collect();
        let estimates_ok = d >= k && estimates[..wanted].iter().all(|&e| e <= opts.tol);
        let out_of_budget = matvecs >= opts.max_matvecs;

        let attempt = if check.is_some() { d >= k } else { estimates_ok };
        if attempt || exhausted || out_of_budget {
            let active = &basis[..d];
            let mut pairs = Vec::with_capacity(wanted);
            let mut worst: f64 = 0.0;
            let mut ax = vec![0.0; n];
            for i in 0..wanted {
                let mut x = combine(active, ritz.vectors.column(i));
                let norm = nrm(&x);
                x.iter_mut().for_each(|a| *a /= norm);
                // The stored Ritz value drifts over many restarts; the
                // Rayleigh quotient of the assembled vector does not.
                check.unwrap_or(op).apply(&x, &mut ax);
                let theta = dot(&x, &ax);
                matvecs += 1;
                let res = ax.iter().zip(&x).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(res);
                pairs.push((theta, res, Some(x)));
            }
            let converged = d >= k && worst <= opts.tol;
            if converged || exhausted || out_of_budget {
                let meta = SolverMeta {
                    solver: "lanczos-thick-restart",
                    grid: format!("n={n}"),
                    converged,
                    iterations: matvecs,
                    ..Default::default()
                };
                return Ok(Spectrum::from_pairs(pairs, opts.dedup_rel, meta));
            }
        }

        if d < m {
            // Interim check only; keep expanding.
            continue;
        }

        // Thick restart: keep the smallest `keep` Ritz vectors and the residual.
        let keep = (k + (m - k) / 2).min(m - 1).max(k);
        let residual = basis.pop().expect("residual direction");
        let mut kept: Vec<Vec<f64>> = (0..keep)
            .map(|i| combine(&basis, ritz.vectors.column(i)))
            .collect();
        // Restore orthonormality lost to rounding in the recombination.
        for i in 0..kept.len() {
            let (done, rest) = kept.split_at_mut(i);
            let x = &mut rest[0];
            reorthogonalize(done, x);
            let norm = nrm(x);
            x.iter_mut().for_each(|a| *a /= norm);
        }
        t.fill(0.0);
        for i in 0..keep {
            t[(i, i)] = ritz.values[i];
            let s = r_beta * ritz.vectors[(d - 1, i)];
            t[(i, keep)] = s;
            t[(keep, i)] = s;
        }
        let mut residual = residual;
        reorthogonalize(&kept, &mut residual);
        let norm = nrm(&residual);
        residual.iter_mut().for_each(|a| *a /= norm);
        kept.push(residual);
        basis = kept;
        d = keep;
    }
}
