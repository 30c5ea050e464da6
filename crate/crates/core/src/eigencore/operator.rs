use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Real symmetric linear operator given only through its action.
pub trait RealOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Complex Hermitian linear operator given only through its action.
pub trait ComplexOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

impl<T: RealOperator + ?Sized> RealOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

impl<T: ComplexOperator + ?Sized> ComplexOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        (**self).apply(x, y)
    }
}

/// Closure-backed operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F> RealOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Dense symmetric matrix as an operator.
pub struct DenseOperator(pub DMatrix<f64>);

impl RealOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.0.nrows();
        for (i, yi) in y.iter_mut().enumerate().take(n) {
            *yi = (0..n).map(|j| self.0[(i, j)] * x[j]).sum();
        }
    }
}

/// Real symmetric operator of dimension `2n` acting on `[Re z; Im z]` as the
/// block matrix `[[Re A, -Im A], [Im A, Re A]]`.
///
/// Every eigenvalue of the Hermitian operator appears twice in the embedding.
/// Consumers that collect several Ritz pairs must merge pairs closer than
/// [`EMBED_DEDUP_REL`](super::EMBED_DEDUP_REL).
pub struct HermitianEmbedding<O> {
    inner: O,
}

pub fn hermitian_embed<O: ComplexOperator>(op: O) -> HermitianEmbedding<O> {
    HermitianEmbedding { inner: op }
}

impl<O: ComplexOperator> HermitianEmbedding<O> {
    pub fn inner(&self) -> &O {
        &self.inner
    }

    /// Recombine an embedded real vector into a complex one.
    pub fn to_complex(&self, v: &[f64]) -> Vec<Complex64> {
        let n = self.inner.dim();
        (0..n).map(|i| Complex64::new(v[i], v[n + i])).collect()
    }
}

impl<O: ComplexOperator> RealOperator for HermitianEmbedding<O> {
    fn dim(&self) -> usize {
        2 * self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.inner.dim();
        let z: Vec<Complex64> = (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect();
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        self.inner.apply(&z, &mut w);
        for i in 0..n {
            y[i] = w[i].re;
            y[n + i] = w[i].im;
        }
    }
}

/// Materialize an operator column by column.
pub fn to_dense(op: &dyn RealOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative linearity defect `||A(au+bv) - aAu - bAv|| / (scale)` on random
/// inputs.
pub fn check_linearity(op: &dyn RealOperator, seed: u64) -> f64 {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_vec(&mut rng, n);
    let v = random_vec(&mut rng, n);
    let (a, b): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
    let (mut au, mut av, mut am) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    op.apply(&u, &mut au);
    op.apply(&v, &mut av);
    op.apply(&mix, &mut am);
    let defect: Vec<f64> = (0..n).map(|i| am[i] - a * au[i] - b * av[i]).collect();
    let scale = (a.abs() * norm(&au) + b.abs() * norm(&av)).max(f64::MIN_POSITIVE);
    norm(&defect) / scale
}

/// Relative symmetry defect `|<Au,v> - <u,Av>| / (||Au|| ||v||)` on random
/// inputs.
pub fn check_symmetry(op: &dyn RealOperator, seed: u64) -> f64 {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_vec(&mut rng, n);
    let v = random_vec(&mut rng, n);
    let (mut au, mut av) = (vec![0.0; n], vec![0.0; n]);
    op.apply(&u, &mut au);
    op.apply(&v, &mut av);
    let lhs: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
    let rhs: f64 = u.iter().zip(&av).map(|(a, b)| a * b).sum();
    let scale = (norm(&au) * norm(&v)).max(norm(&u) * norm(&av)).max(f64::MIN_POSITIVE);
    (lhs - rhs).abs() / scale
}

/// Relative Hermiticity defect `|<Au,v> - <u,Av>| / (||Au|| ||v||)` on random
/// complex inputs.
pub fn check_hermitian(op: &dyn ComplexOperator, seed: u64) -> f64 {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rc = |rng: &mut ChaCha8Rng| -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    };
    let u = rc(&mut rng);
    let v = rc(&mut rng);
    let zero = Complex64::new(0.0, 0.0);
    let (mut au, mut av) = (vec![zero; n], vec![zero; n]);
    op.apply(&u, &mut au);
    op.apply(&v, &mut av);
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    };
    let cnorm = |a: &[Complex64]| a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let scale = (cnorm(&au) * cnorm(&v)).max(f64::MIN_POSITIVE);
    (dot(&au, &v) - dot(&u, &av)).norm() / scale
}
