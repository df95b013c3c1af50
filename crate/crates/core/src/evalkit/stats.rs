use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::EvalError;

/// Eigenvalues of a covariance may dip this far below zero from rounding.
pub const EIGEN_FLOOR: f64 = -1e-8;

/// Sample mean and unbiased covariance of a set of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl EmbeddingStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, count: usize) -> Result<Self, EvalError> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(EvalError::Dim {
                expected: d,
                got: cov.nrows(),
            });
        }
        if count < 2 {
            return Err(EvalError::TooFew { need: 2, got: count });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        if cov != cov.transpose() {
            return Err(EvalError::InvalidStats("covariance is not symmetric".into()));
        }
        if d > 0 {
            let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
            if min < EIGEN_FLOOR {
                return Err(EvalError::InvalidStats(format!("covariance eigenvalue {min}")));
            }
        }
        Ok(Self { mean, cov, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Mean and unbiased covariance (two-pass) of `items`, which must share one width.
pub fn embed_stats<V: AsRef<[f64]>>(items: &[V]) -> Result<EmbeddingStats, EvalError> {
    let n = items.len();
    if n < 2 {
        return Err(EvalError::TooFew { need: 2, got: n });
    }
    let d = items[0].as_ref().len();
    if let Some(bad) = items.iter().find(|v| v.as_ref().len() != d) {
        return Err(EvalError::Dim {
            expected: d,
            got: bad.as_ref().len(),
        });
    }
    let mut mean = DVector::zeros(d);
    for v in items {
        mean += DVector::from_column_slice(v.as_ref());
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in items {
        let c = DVector::from_column_slice(v.as_ref()) - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (n - 1) as f64;
    // rank-one updates are symmetric up to rounding; make it exact
    let cov = (&cov + cov.transpose()) * 0.5;
    EmbeddingStats::new(mean, cov, n)
}

/// Square root of a symmetric PSD matrix by eigendecomposition, negative eigenvalues
/// clipped to zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// `Tr((A B)^½)` as `Tr((A^½ B A^½)^½)`.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = sqrt_psd(a);
    let m = &s * b * &s;
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum()
}

/// Fréchet distance between the Gaussians fitted to two embedding sets:
/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^½)`. The cross term is evaluated in both argument
/// orders and averaged, so the result is exactly symmetric.
pub fn frechet_distance(a: &EmbeddingStats, b: &EmbeddingStats) -> Result<f64, EvalError> {
    if a.dim() != b.dim() {
        return Err(EvalError::Dim {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.mean == b.mean && a.cov == b.cov {
        return Ok(0.0);
    }
    let mean_gap = (&a.mean - &b.mean).norm_squared();
    let cross = 0.5 * (trace_sqrt_product(&a.cov, &b.cov) + trace_sqrt_product(&b.cov, &a.cov));
    let d = mean_gap + (a.cov.trace() + b.cov.trace()) - 2.0 * cross;
    if !d.is_finite() {
        return Err(EvalError::NonFinite);
    }
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64, scale: &[f64], shift: &[f64]) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * scale[j] + shift[j]
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn small_cases() {
        let same = vec![vec![1.0, -2.0, 0.5]; 4];
        let s = embed_stats(&same).unwrap();
        assert!(s.cov.iter().all(|&v| v == 0.0));
        let two = embed_stats(&[vec![0.0, 4.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(two.mean.as_slice(), &[1.0, 2.0]);
        // unbiased: two points at ±1 from the mean have variance 2
        assert_eq!(two.cov[(0, 0)], 2.0);
        assert_eq!(two.cov[(0, 1)], -4.0);
        assert!(matches!(embed_stats(&[vec![1.0]]), Err(EvalError::TooFew { .. })));
        assert!(matches!(embed_stats(&[vec![1.0], vec![1.0, 2.0]]), Err(EvalError::Dim { .. })));
    }

    #[test]
    fn law_of_large_numbers() {
        let x = gaussian(10_000, 4, 1, &[1.0; 4], &[0.0; 4]);
        let s = embed_stats(&x).unwrap();
        for j in 0..4 {
            assert!(s.mean[j].abs() < 0.05);
            assert!((s.cov[(j, j)] - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn frechet_identities() {
        let a = embed_stats(&gaussian(500, 5, 2, &[1.0, 0.5, 2.0, 1.0, 0.1], &[0.0; 5])).unwrap();
        let b = embed_stats(&gaussian(400, 5, 3, &[0.7, 1.0, 1.0, 3.0, 0.2], &[1.0, 0.0, -1.0, 0.0, 2.0])).unwrap();
        assert_eq!(frechet_distance(&a, &a).unwrap(), 0.0);
        let copy = EmbeddingStats::new(a.mean.clone(), a.cov.clone(), 7).unwrap();
        assert_eq!(frechet_distance(&a, &copy).unwrap(), 0.0);
        assert_eq!(frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());

        let gap = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0, 0.5]);
        let shifted = EmbeddingStats::new(&a.mean + &gap, a.cov.clone(), a.count).unwrap();
        let fd = frechet_distance(&a, &shifted).unwrap();
        assert!((fd - gap.norm_squared()).abs() < 1e-9, "{fd}");
    }

    #[test]
    fn diagonal_closed_form() {
        // for diagonal covariances the trace term is Σ (σa − σb)²
        let va = [1.0, 4.0, 0.25];
        let vb = [9.0, 1.0, 0.25];
        let a = EmbeddingStats::new(DVector::zeros(3), DMatrix::from_diagonal(&DVector::from_row_slice(&va)), 10).unwrap();
        let b = EmbeddingStats::new(DVector::zeros(3), DMatrix::from_diagonal(&DVector::from_row_slice(&vb)), 10).unwrap();
        let expect: f64 = va.iter().zip(&vb).map(|(x, y): (&f64, &f64)| (x.sqrt() - y.sqrt()).powi(2)).sum();
        assert!((frechet_distance(&a, &b).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_stats() {
        let m = DVector::zeros(2);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(EmbeddingStats::new(m.clone(), asym, 3).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(EmbeddingStats::new(m.clone(), neg, 3).is_err());
        let a = EmbeddingStats::new(m, DMatrix::identity(2, 2), 3).unwrap();
        let b = EmbeddingStats::new(DVector::zeros(3), DMatrix::identity(3, 3), 3).unwrap();
        assert!(matches!(frechet_distance(&a, &b), Err(EvalError::Dim { .. })));
    }
}
