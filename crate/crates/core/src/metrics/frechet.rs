use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Covariance eigenvalues below `-NEGATIVE_EIGEN_TOLERANCE * max(1, λmax)`
/// mark a non-PSD input; anything above is clamped to zero.
pub const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-8;

const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Factor `A` with `AAᵀ = s` from a symmetric eigendecomposition, clamping
/// eigenvalues inside the tolerance to zero.
fn psd_factor(name: &str, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(CoreError::Numeric(format!("{name} is not square")));
    }
    let scale = s.amax().max(1.0);
    if (s - s.transpose()).amax() > SYMMETRY_TOLERANCE * scale {
        return Err(CoreError::Numeric(format!("{name} is not symmetric")));
    }
    let eig = s.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1.0);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -NEGATIVE_EIGEN_TOLERANCE * top {
            return Err(CoreError::Numeric(format!(
                "{name} is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Fréchet distance between N(μ1, Σ1) and N(μ2, Σ2).
///
/// With Σ1 = AAᵀ and Σ2 = BBᵀ, tr((Σ1Σ2)^{1/2}) is the nuclear norm of AᵀB.
/// Singular values stay accurate near zero where square roots of tiny
/// eigenvalues of Σ1Σ2 would not, which matters for rank-deficient fits.
pub fn frechet_distance(
    mu1: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    sigma2: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || sigma1.shape() != (d, d) || sigma2.shape() != (d, d) {
        return Err(CoreError::Numeric(format!(
            "dimension mismatch: means {} and {}, covariances {:?} and {:?}",
            d,
            mu2.len(),
            sigma1.shape(),
            sigma2.shape()
        )));
    }
    let a = psd_factor("sigma1", sigma1)?;
    let b = psd_factor("sigma2", sigma2)?;
    let nuclear: f64 = (a.transpose() * b).singular_values().iter().sum();
    let fd = (mu1 - mu2).norm_squared() + sigma1.trace() + sigma2.trace() - 2.0 * nuclear;
    Ok(fd.max(0.0))
}

/// Sample mean and unbiased covariance of row samples.
pub fn gaussian_fit(samples: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (mu, x) = centered(samples)?;
    Ok((mu, x.transpose() * &x))
}

/// Mean and centered samples scaled so that `xᵀx` is the unbiased covariance.
fn centered(samples: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = samples.len();
    if n < 2 {
        return Err(CoreError::Numeric(format!(
            "need at least 2 samples for a covariance, got {n}"
        )));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(CoreError::Numeric(
            "samples have inconsistent dimensions".into(),
        ));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CoreError::Numeric(
            "samples contain non-finite values".into(),
        ));
    }
    let x = DMatrix::from_fn(n, d, |i, j| samples[i][j]);
    let mu = x.row_mean().transpose();
    let scale = 1.0 / ((n - 1) as f64).sqrt();
    let xc = DMatrix::from_fn(n, d, |i, j| (x[(i, j)] - mu[j]) * scale);
    Ok((mu, xc))
}

/// Fréchet distance between Gaussian fits of two sample sets.
///
/// With Σ = AᵀA and Σ' = BᵀB, tr((ΣΣ')^{1/2}) equals the nuclear norm of ABᵀ,
/// so no matrix square root is needed and identical sets give exactly zero up
/// to SVD rounding, whatever the rank.
pub fn frechet_from_samples(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (mu_a, xa) = centered(a)?;
    let (mu_b, xb) = centered(b)?;
    if mu_a.len() != mu_b.len() {
        return Err(CoreError::Numeric(format!(
            "sample dimensions differ: {} vs {}",
            mu_a.len(),
            mu_b.len()
        )));
    }
    let cross = &xa * xb.transpose();
    let nuclear: f64 = cross.singular_values().iter().sum();
    let fd = (&mu_a - &mu_b).norm_squared() + xa.norm_squared() + xb.norm_squared() - 2.0 * nuclear;
    Ok(fd.max(0.0))
}
