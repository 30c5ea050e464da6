/// Relative tolerance used to merge the doubled eigenvalues of a real
/// embedding of a Hermitian operator.
pub const EMBED_DEDUP_REL: f64 = 1e-8;

#[derive(Clone, Debug, Default)]
pub struct SolverMeta {
    pub solver: &'static str,
    pub grid: String,
    pub truncation: String,
    pub converged: bool,
    pub iterations: usize,
}

/// Sorted eigenvalues with aligned residuals, multiplicities and optional
/// eigenvectors.
///
/// Values closer than the deduplication tolerance are merged; the merged
/// entry keeps the largest residual and the first vector of its cluster.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub vectors: Option<Vec<Vec<f64>>>,
    pub meta: SolverMeta,
}

impl Spectrum {
    pub fn from_pairs(
        mut pairs: Vec<(f64, f64, Option<Vec<f64>>)>,
        dedup_rel: f64,
        meta: SolverMeta,
    ) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let with_vectors = !pairs.is_empty() && pairs.iter().all(|p| p.2.is_some());
        let mut eigenvalues: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut residuals = Vec::with_capacity(pairs.len());
        let mut multiplicities = Vec::with_capacity(pairs.len());
        let mut vectors = Vec::new();
        for (value, residual, vector) in pairs {
            if let Some(&last) = eigenvalues.last() {
                if (value - last).abs() <= dedup_rel * last.abs().max(value.abs()).max(1.0) {
                    let i = eigenvalues.len() - 1;
                    residuals[i] = f64::max(residuals[i], residual);
                    multiplicities[i] += 1;
                    continue;
                }
            }
            eigenvalues.push(value);
            residuals.push(residual);
            multiplicities.push(1);
            if with_vectors {
                vectors.push(vector.unwrap());
            }
        }
        Spectrum {
            eigenvalues,
            residuals,
            multiplicities,
            vectors: with_vectors.then_some(vectors),
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Lowest eigenvalue. Panics on an empty spectrum.
    pub fn lowest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn vector(&self, i: usize) -> Option<&[f64]> {
        self.vectors.as_ref().and_then(|v| v.get(i)).map(Vec::as_slice)
    }

    /// Turn an unconverged result into an error.
    pub fn require_converged(self) -> crate::Result<Self> {
        if self.meta.converged {
            Ok(self)
        } else {
            Err(crate::Error::NotConverged {
                solver: self.meta.solver,
                detail: format!(
                    "after {} iterations, residuals {:?}",
                    self.meta.iterations, self.residuals
                ),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_close_values_and_counts_multiplicity() {
        let pairs = vec![(1.0, 1e-12, None), (3.0, 0.0, None), (1.0 + 1e-10, 2e-12, None)];
        let s = Spectrum::from_pairs(pairs, 1e-8, SolverMeta::default());
        assert_eq!(s.eigenvalues, vec![1.0, 3.0]);
        assert_eq!(s.multiplicities, vec![2, 1]);
        assert_eq!(s.residuals[0], 2e-12);
        assert!(s.vectors.is_none());
    }
}
