use nalgebra::{DMatrix, DVector};

/// Weighted mean `Σ wᵢ pᵢ` and covariance `Σ wᵢ (pᵢ−m)(pᵢ−m)ᵀ`, summed in
/// particle order.
pub fn weighted_mean_cov(particles: &[DVector<f64>], weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    assert_eq!(particles.len(), weights.len(), "particle/weight length mismatch");
    assert!(!particles.is_empty(), "empty ensemble");
    let n = particles[0].len();
    let mut mean = DVector::zeros(n);
    for (p, &w) in particles.iter().zip(weights) {
        mean.axpy(w, p, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (p, &w) in particles.iter().zip(weights) {
        let d = p - &mean;
        cov.ger(w, &d, &d, 1.0);
    }
    (mean, cov)
}

/// Weighted mean only.
pub fn weighted_mean(particles: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let n = particles[0].len();
    let mut mean = DVector::zeros(n);
    for (p, &w) in particles.iter().zip(weights) {
        mean.axpy(w, p, 1.0);
    }
    mean
}
