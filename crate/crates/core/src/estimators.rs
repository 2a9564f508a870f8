//! WLS, ML and Gaussian MMSE estimators for `x = A·s + v`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrixkit::{spd_cholesky, spd_condition, sym_sqrt, Matrix, SymMatrix, Vector, MAX_CONDITION};
use crate::model::{GaussianPrior, LinearModel};
use crate::report::{opt_sym_rows, vec_items};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Wls,
    Ml,
    Mmse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    #[serde(serialize_with = "vec_items")]
    pub s_hat: Vector,
    #[serde(serialize_with = "opt_sym_rows")]
    pub error_cov: Option<SymMatrix>,
    pub method: Method,
}

fn check_dims(model: &LinearModel, weight_dim: usize, x: Option<&Vector>) -> Result<()> {
    if weight_dim != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "weight/noise matrix is {weight_dim}x{weight_dim}, model has {} channels",
            model.n()
        )));
    }
    if let Some(x) = x {
        if x.len() != model.n() {
            return Err(Error::DimensionMismatch(format!(
                "observation has length {}, model has {} channels",
                x.len(),
                model.n()
            )));
        }
    }
    Ok(())
}

/// Factorizes a normal matrix, failing with its condition estimate when it
/// is (numerically) singular.
fn normal_cholesky(normal: &SymMatrix) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let condition = spd_condition(normal);
    if condition > MAX_CONDITION {
        return Err(Error::SingularNormalMatrix { condition });
    }
    spd_cholesky(normal, "normal matrix").map_err(|_| Error::SingularNormalMatrix { condition })
}

/// Solves `min‖M·s − y‖` by Householder QR. The normal matrix `MᵀM` is
/// never formed; its condition is `cond(R)²`.
fn whitened_lstsq(m: Matrix, y: &Vector) -> Result<Vector> {
    let qr = m.qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::SingularNormalMatrix { condition });
    }
    let rhs = qr.q().transpose() * y;
    r.solve_upper_triangular(&rhs)
        .ok_or(Error::SingularNormalMatrix { condition })
}

/// Weighted least squares `ŝ = (AᵀWA)⁻¹AᵀW·x` for a PSD weight `W`,
/// solved as `min‖W^{1/2}(A·s − x)‖`.
pub fn wls_estimate(model: &LinearModel, weights: &SymMatrix, x: &Vector) -> Result<Estimate> {
    check_dims(model, weights.dim(), Some(x))?;
    let root = sym_sqrt(weights)?;
    let s_hat = whitened_lstsq(root.as_matrix() * model.mixing(), &(root.as_matrix() * x))?;
    Ok(Estimate {
        s_hat,
        error_cov: None,
        method: Method::Wls,
    })
}

/// WLS with `W = Σ⁻¹`; the error covariance `(AᵀΣ⁻¹A)⁻¹` is attached.
pub fn wls_estimate_noise_weighted(model: &LinearModel, sigma: &SymMatrix, x: &Vector) -> Result<Estimate> {
    check_dims(model, sigma.dim(), Some(x))?;
    let w = crate::matrixkit::spd_inverse(sigma, "noise covariance Σ")?;
    let mut est = wls_estimate(model, &w, x)?;
    est.error_cov = Some(error_covariance(model, sigma)?);
    Ok(est)
}

/// `Σ⁻¹A` and the normal matrix `AᵀΣ⁻¹A`, both through a Cholesky solve on Σ.
fn whitened_normal(model: &LinearModel, sigma: &SymMatrix) -> Result<(Matrix, SymMatrix)> {
    let chol = spd_cholesky(sigma, "noise covariance Σ")?;
    let sinv_a = chol.solve(model.mixing());
    let normal = SymMatrix::symmetrize(&(model.mixing().transpose() * &sinv_a));
    Ok((sinv_a, normal))
}

/// Maximum-likelihood estimate under Gaussian noise `v ~ N(0, Σ)`.
pub fn ml_estimate(model: &LinearModel, sigma: &SymMatrix, x: &Vector) -> Result<Estimate> {
    check_dims(model, sigma.dim(), Some(x))?;
    let chol = spd_cholesky(sigma, "noise covariance Σ")?;
    let l = chol.l();
    let wa = l.solve_lower_triangular(model.mixing()).expect("Cholesky factor is nonsingular");
    let wx = l.solve_lower_triangular(x).expect("Cholesky factor is nonsingular");
    let s_hat = whitened_lstsq(wa, &wx)?;
    Ok(Estimate {
        s_hat,
        error_cov: Some(error_covariance(model, sigma)?),
        method: Method::Ml,
    })
}

/// Closed-form error covariance of the ML/WLS estimator, `(AᵀΣ⁻¹A)⁻¹`.
pub fn error_covariance(model: &LinearModel, sigma: &SymMatrix) -> Result<SymMatrix> {
    check_dims(model, sigma.dim(), None)?;
    let (_, normal) = whitened_normal(model, sigma)?;
    Ok(SymMatrix::symmetrize(&normal_cholesky(&normal)?.inverse()))
}

fn check_prior(model: &LinearModel, prior: &GaussianPrior) -> Result<()> {
    if prior.dim() != model.m() {
        return Err(Error::DimensionMismatch(format!(
            "prior dimension {} != m = {}",
            prior.dim(),
            model.m()
        )));
    }
    Ok(())
}

/// Posterior information `Γ⁻¹ + AᵀΣ⁻¹A` and its inverse.
fn posterior(model: &LinearModel, sigma: &SymMatrix, prior: &GaussianPrior) -> Result<(Matrix, SymMatrix, SymMatrix)> {
    let (sinv_a, normal) = whitened_normal(model, sigma)?;
    let info = normal.add(prior.info());
    let condition = spd_condition(&info);
    if condition > MAX_CONDITION {
        return Err(Error::SingularPosterior { condition });
    }
    let chol = spd_cholesky(&info, "posterior information").map_err(|_| Error::SingularPosterior { condition })?;
    Ok((sinv_a, info, SymMatrix::symmetrize(&chol.inverse())))
}

/// Gain form of the Gaussian posterior mean, `μ + ΓAᵀ(AΓAᵀ + Σ)⁻¹(x − Aμ)`.
pub fn mmse_gain_form(model: &LinearModel, sigma: &SymMatrix, prior: &GaussianPrior, x: &Vector) -> Result<Vector> {
    check_dims(model, sigma.dim(), Some(x))?;
    check_prior(model, prior)?;
    let a = model.mixing();
    let gamma_at = prior.cov().as_matrix() * a.transpose();
    let innovation_cov = SymMatrix::symmetrize(&(a * &gamma_at + sigma.as_matrix()));
    let chol = spd_cholesky(&innovation_cov, "innovation covariance")?;
    let innovation = x - a * prior.mean();
    Ok(prior.mean() + gamma_at * chol.solve(&innovation))
}

/// Conditional-mean (MMSE) estimate for a Gaussian source and Gaussian noise.
///
/// Computed in information form and cross-checked against the gain form;
/// the two must agree to 1e-10 relative.
pub fn mmse_gaussian_estimate(
    model: &LinearModel,
    sigma: &SymMatrix,
    prior: &GaussianPrior,
    x: &Vector,
) -> Result<Estimate> {
    check_dims(model, sigma.dim(), Some(x))?;
    check_prior(model, prior)?;
    let (sinv_a, _, post_cov) = posterior(model, sigma, prior)?;
    let rhs = sinv_a.transpose() * x + prior.info().as_matrix() * prior.mean();
    let s_hat = post_cov.as_matrix() * rhs;
    let gain = mmse_gain_form(model, sigma, prior, x)?;
    let residual = (&s_hat - &gain).norm() / s_hat.norm().max(gain.norm()).max(1.0);
    if residual > 1e-10 {
        return Err(Error::FormDisagreement { residual });
    }
    Ok(Estimate {
        s_hat,
        error_cov: Some(post_cov),
        method: Method::Mmse,
    })
}

/// Affine estimator `ŝ = K·x + c`, precomputed for Monte-Carlo campaigns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimator {
    pub gain: Matrix,
    pub offset: Vector,
    pub error_cov: SymMatrix,
    pub method: Method,
}

impl LinearEstimator {
    pub fn ml(model: &LinearModel, sigma: &SymMatrix) -> Result<Self> {
        check_dims(model, sigma.dim(), None)?;
        let (sinv_a, normal) = whitened_normal(model, sigma)?;
        let chol = normal_cholesky(&normal)?;
        Ok(Self {
            gain: chol.solve(&sinv_a.transpose()),
            offset: Vector::zeros(model.m()),
            error_cov: SymMatrix::symmetrize(&chol.inverse()),
            method: Method::Ml,
        })
    }

    pub fn mmse(model: &LinearModel, sigma: &SymMatrix, prior: &GaussianPrior) -> Result<Self> {
        check_dims(model, sigma.dim(), None)?;
        check_prior(model, prior)?;
        let (sinv_a, _, post_cov) = posterior(model, sigma, prior)?;
        Ok(Self {
            gain: post_cov.as_matrix() * sinv_a.transpose(),
            offset: post_cov.as_matrix() * (prior.info().as_matrix() * prior.mean()),
            error_cov: post_cov,
            method: Method::Mmse,
        })
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        &self.gain * x + &self.offset
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vector {
        Vector::from_column_slice(v)
    }

    #[test]
    fn wls_identity_and_average() {
        let id = LinearModel::new(Matrix::identity(2, 2)).unwrap();
        let e = wls_estimate(&id, &SymMatrix::identity(2), &col(&[3.0, -1.0])).unwrap();
        assert!((e.s_hat - col(&[3.0, -1.0])).amax() < 1e-15);
        assert!(e.error_cov.is_none());

        let ones = LinearModel::new(Matrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap();
        let e = wls_estimate(&ones, &SymMatrix::identity(2), &col(&[0.0, 2.0])).unwrap();
        assert!((e.s_hat[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wls_weighted_pair() {
        let ones = LinearModel::new(Matrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap();
        let w = SymMatrix::from_diagonal(&[1.0, 1.0 / 3.0]);
        for (x1, x2) in [(1.0, 2.0), (-3.0, 0.5), (0.0, 4.0)] {
            let e = wls_estimate(&ones, &w, &col(&[x1, x2])).unwrap();
            // normal equations by hand: (1 + 1/3)ŝ = x1 + x2/3
            let oracle = (3.0 * x1 + x2) / 4.0;
            assert!((e.s_hat[0] - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn ml_scalar_pair_and_identity() {
        let ones = LinearModel::new(Matrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap();
        let e = ml_estimate(&ones, &SymMatrix::from_diagonal(&[1.0, 3.0]), &col(&[0.0, 4.0])).unwrap();
        assert!((e.s_hat[0] - 1.0).abs() < 1e-14);
        assert!((e.error_cov.unwrap()[(0, 0)] - 0.75).abs() < 1e-14);

        let id = LinearModel::new(Matrix::identity(3, 3)).unwrap();
        let sigma = SymMatrix::identity(3).scale(0.25);
        let x = col(&[1.0, 2.0, -3.0]);
        let e = ml_estimate(&id, &sigma, &x).unwrap();
        assert!((&e.s_hat - &x).amax() < 1e-14);
        assert!((e.error_cov.unwrap().as_matrix() - sigma.as_matrix()).amax() < 1e-15);
    }

    #[test]
    fn rank_deficient_model_fails_loudly() {
        let m = LinearModel::new(Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])).unwrap();
        let r = ml_estimate(&m, &SymMatrix::identity(2), &col(&[1.0, 1.0]));
        assert!(matches!(r, Err(Error::SingularNormalMatrix { .. })));
        let wide = LinearModel::new(Matrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(
            error_covariance(&wide, &SymMatrix::identity(1)),
            Err(Error::SingularNormalMatrix { .. })
        ));
    }

    #[test]
    fn error_covariance_scaling() {
        let m = LinearModel::new(Matrix::identity(2, 2) * 2.0).unwrap();
        let c = error_covariance(&m, &SymMatrix::identity(2)).unwrap();
        assert!((c.as_matrix() - Matrix::identity(2, 2) * 0.25).amax() < 1e-15);
    }

    #[test]
    fn mmse_scalar_equal_weights() {
        let m = LinearModel::new(Matrix::from_element(1, 1, 1.0)).unwrap();
        let prior = GaussianPrior::standard(1);
        let e = mmse_gaussian_estimate(&m, &SymMatrix::identity(1), &prior, &col(&[1.3])).unwrap();
        assert!((e.s_hat[0] - 0.65).abs() < 1e-15);
        assert!((e.error_cov.unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mmse_prior_dominant_limit() {
        let m = LinearModel::new(Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 1.0, -1.0, 2.0])).unwrap();
        let mu = col(&[2.0, -1.0]);
        let prior = GaussianPrior::new(mu.clone(), SymMatrix::identity(2)).unwrap();
        let e = mmse_gaussian_estimate(&m, &SymMatrix::identity(3).scale(1e6), &prior, &col(&[5.0, -3.0, 1.0])).unwrap();
        assert!((&e.s_hat - &mu).norm() < 1e-3 * mu.norm());
    }

    #[test]
    fn mmse_wrong_dimension() {
        let m = LinearModel::new(Matrix::identity(2, 2)).unwrap();
        let prior = GaussianPrior::standard(3);
        assert!(matches!(
            mmse_gaussian_estimate(&m, &SymMatrix::identity(2), &prior, &col(&[1.0, 1.0])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn linear_estimators_match_pointwise() {
        let m = LinearModel::new(Matrix::from_row_slice(3, 2, &[1.0, 0.2, 0.5, 1.0, -1.0, 2.0])).unwrap();
        let sigma = SymMatrix::from_rows(&[vec![1.0, 0.2, 0.0], vec![0.2, 2.0, 0.3], vec![0.0, 0.3, 0.5]]).unwrap();
        let prior = GaussianPrior::new(col(&[0.5, 1.0]), SymMatrix::from_diagonal(&[2.0, 0.5])).unwrap();
        let x = col(&[0.3, -1.0, 2.5]);
        let ml = LinearEstimator::ml(&m, &sigma).unwrap();
        assert!((ml.apply(&x) - ml_estimate(&m, &sigma, &x).unwrap().s_hat).amax() < 1e-13);
        let mmse = LinearEstimator::mmse(&m, &sigma, &prior).unwrap();
        assert!((mmse.apply(&x) - mmse_gaussian_estimate(&m, &sigma, &prior, &x).unwrap().s_hat).amax() < 1e-13);
    }
}
