//! Fisher information for nonlinear observation models `x = h(s) + v`.
//!
//! The information is the prior expectation of the per-sample linearized
//! information, `E_s{∇hᵀ Σ⁻¹ ∇h}`, estimated by seed-split Monte Carlo.
//! Jacobians here are `n × m` (rows are observations), so the integrand is
//! written `JᵀΣ⁻¹J`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::information::{correlation_inverses, whitened_forms_with, whitening};
use crate::matrixkit::{frobenius_rel, spd_cholesky, BlockCovariance, Matrix, SymMatrix, Vector};
use crate::model::SourcePrior;
use crate::montecarlo::{mc_mean, McInfoEstimate};

/// Relative step used by [`NonlinearModel::jacobian`] when no analytic
/// Jacobian is available: coordinate `k` is perturbed by `1e-5·(1 + |sₖ|)`.
pub const DEFAULT_JACOBIAN_STEP: f64 = 1e-5;

/// Per-sample agreement required between the two whitened joint forms.
pub const FORM_TOL: f64 = 1e-8;

/// A differentiable map from `m` sources to `n` observations.
pub trait ObservationMap: Send + Sync + fmt::Debug {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn eval(&self, s: &Vector) -> Vector;

    /// Analytic Jacobian, if the map knows it.
    fn jacobian(&self, _s: &Vector) -> Option<Matrix> {
        None
    }
}

/// `h(s) = A·s`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap(pub Matrix);

/// `h(s) = (A·s)∘(A·s)`, componentwise square.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMap(pub Matrix);

/// `h(s) = sin(A·s)`, componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SineMap(pub Matrix);

impl ObservationMap for LinearMap {
    fn n(&self) -> usize {
        self.0.nrows()
    }
    fn m(&self) -> usize {
        self.0.ncols()
    }
    fn eval(&self, s: &Vector) -> Vector {
        &self.0 * s
    }
    fn jacobian(&self, _s: &Vector) -> Option<Matrix> {
        Some(self.0.clone())
    }
}

impl ObservationMap for SquareMap {
    fn n(&self) -> usize {
        self.0.nrows()
    }
    fn m(&self) -> usize {
        self.0.ncols()
    }
    fn eval(&self, s: &Vector) -> Vector {
        (&self.0 * s).map(|t| t * t)
    }
    fn jacobian(&self, s: &Vector) -> Option<Matrix> {
        let z = &self.0 * s;
        Some(Matrix::from_diagonal(&(z * 2.0)) * &self.0)
    }
}

impl ObservationMap for SineMap {
    fn n(&self) -> usize {
        self.0.nrows()
    }
    fn m(&self) -> usize {
        self.0.ncols()
    }
    fn eval(&self, s: &Vector) -> Vector {
        (&self.0 * s).map(f64::sin)
    }
    fn jacobian(&self, s: &Vector) -> Option<Matrix> {
        let z = (&self.0 * s).map(f64::cos);
        Some(Matrix::from_diagonal(&z) * &self.0)
    }
}

type VecFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type JacFn = dyn Fn(&Vector) -> Matrix + Send + Sync;

/// A map built from closures, with an optional analytic Jacobian.
#[derive(Clone)]
pub struct FnMap {
    n: usize,
    m: usize,
    h: Arc<VecFn>,
    jac: Option<Arc<JacFn>>,
}

impl FnMap {
    pub fn new(n: usize, m: usize, h: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self {
            n,
            m,
            h: Arc::new(h),
            jac: None,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }
}

impl fmt::Debug for FnMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMap")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("analytic_jacobian", &self.jac.is_some())
            .finish()
    }
}

impl ObservationMap for FnMap {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn eval(&self, s: &Vector) -> Vector {
        (self.h)(s)
    }
    fn jacobian(&self, s: &Vector) -> Option<Matrix> {
        self.jac.as_ref().map(|j| j(s))
    }
}

/// Central-difference Jacobian with a uniform step:
/// column `k` is `[h(s + step·eₖ) − h(s − step·eₖ)] / (2·step)`.
pub fn numeric_jacobian(h: impl Fn(&Vector) -> Vector, s: &Vector, step: f64) -> Result<Matrix> {
    jacobian_with_steps(h, s, |_| step)
}

fn jacobian_with_steps(h: impl Fn(&Vector) -> Vector, s: &Vector, step: impl Fn(f64) -> f64) -> Result<Matrix> {
    let mut cols = Vec::with_capacity(s.len());
    let mut rows = None;
    for k in 0..s.len() {
        let hk = step(s[k]);
        let mut plus = s.clone();
        plus[k] += hk;
        let mut minus = s.clone();
        minus[k] -= hk;
        let (fp, fm) = (h(&plus), h(&minus));
        if fp.iter().chain(fm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        rows = Some(fp.len());
        cols.push((fp - fm) / (2.0 * hk));
    }
    let n = rows.unwrap_or_else(|| h(s).len());
    Ok(Matrix::from_fn(n, cols.len(), |i, k| cols[k][i]))
}

#[derive(Debug, Clone)]
pub struct NonlinearModel {
    map: Arc<dyn ObservationMap>,
}

impl NonlinearModel {
    pub fn new(map: impl ObservationMap + 'static) -> Self {
        Self { map: Arc::new(map) }
    }

    pub fn from_arc(map: Arc<dyn ObservationMap>) -> Self {
        Self { map }
    }

    pub fn n(&self) -> usize {
        self.map.n()
    }

    pub fn m(&self) -> usize {
        self.map.m()
    }

    pub fn eval(&self, s: &Vector) -> Vector {
        self.map.eval(s)
    }

    /// Analytic Jacobian when available, otherwise central differences
    /// at the default step.
    pub fn jacobian(&self, s: &Vector) -> Result<Matrix> {
        let j = match self.map.jacobian(s) {
            Some(j) => j,
            None => self.numeric_jacobian(s)?,
        };
        if j.shape() != (self.n(), self.m()) {
            return Err(Error::DimensionMismatch(format!(
                "Jacobian is {}x{}, expected {}x{}",
                j.nrows(),
                j.ncols(),
                self.n(),
                self.m()
            )));
        }
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(j)
    }

    pub fn numeric_jacobian(&self, s: &Vector) -> Result<Matrix> {
        jacobian_with_steps(|x| self.map.eval(x), s, |sk| DEFAULT_JACOBIAN_STEP * (1.0 + sk.abs()))
    }

    /// Relative disagreement between the analytic and numeric Jacobians at
    /// `s`, or `None` when the map has no analytic Jacobian.
    pub fn jacobian_discrepancy(&self, s: &Vector) -> Result<Option<f64>> {
        match self.map.jacobian(s) {
            Some(analytic) => Ok(Some(frobenius_rel(&self.numeric_jacobian(s)?, &analytic))),
            None => Ok(None),
        }
    }
}

fn check_sampleable(prior: &SourcePrior, m: usize) -> Result<()> {
    if !prior.is_sampleable() {
        return Err(Error::NotSampleable);
    }
    if prior.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "prior has {} sources, model expects {m}",
            prior.dim()
        )));
    }
    Ok(())
}

fn ensure_psd(est: McInfoEstimate) -> Result<McInfoEstimate> {
    if est.psd_within_noise() {
        Ok(est)
    } else {
        Err(Error::NotPsd {
            min_eigenvalue: est.j.min_eigenvalue(),
        })
    }
}

/// `E_s{JᵀΣ⁻¹J}` over draws from the prior.
pub fn fisher_nonlinear(
    model: &NonlinearModel,
    sigma: &SymMatrix,
    prior: &SourcePrior,
    samples: usize,
    seed: u64,
) -> Result<McInfoEstimate> {
    check_sampleable(prior, model.m())?;
    if sigma.dim() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "noise covariance is {0}x{0}, model has {1} observations",
            sigma.dim(),
            model.n()
        )));
    }
    let chol = spd_cholesky(sigma, "Σ")?;
    let est = mc_mean(samples, seed, |rng| {
        let s = prior.sample(rng)?;
        let j = model.jacobian(&s)?;
        Ok(j.transpose() * chol.solve(&j))
    })?;
    ensure_psd(est)
}

/// `E_s{JᵀΣ⁻¹J} + J_s`; the prior must expose its information.
pub fn total_information_nonlinear(
    model: &NonlinearModel,
    sigma: &SymMatrix,
    prior: &SourcePrior,
    samples: usize,
    seed: u64,
) -> Result<McInfoEstimate> {
    let js = prior.information()?;
    Ok(fisher_nonlinear(model, sigma, prior, samples, seed)?.offset(&js))
}

/// Observation part of the joint information of two nonlinear modalities,
/// `E_s{J_{x,y|s}}`, from the whitened per-sample Jacobians.
///
/// Each sample is evaluated with both whitened forms and rejected with
/// [`Error::FormDisagreement`] if they differ by more than [`FORM_TOL`].
/// Add the prior information with [`McInfoEstimate::offset`] to obtain the
/// counterpart of the linear joint information.
pub fn joint_information_nonlinear(
    first: &NonlinearModel,
    second: &NonlinearModel,
    noise: &BlockCovariance,
    prior: &SourcePrior,
    samples: usize,
    seed: u64,
) -> Result<McInfoEstimate> {
    if first.m() != second.m() {
        return Err(Error::DimensionMismatch(format!(
            "modalities observe {} and {} sources",
            first.m(),
            second.m()
        )));
    }
    if noise.dims() != (first.n(), second.n()) {
        return Err(Error::DimensionMismatch(format!(
            "noise blocks are {:?}, modalities have {} and {} observations",
            noise.dims(),
            first.n(),
            second.n()
        )));
    }
    check_sampleable(prior, first.m())?;
    let (_, _, lv_inv, lu_inv, rho) = whitening(noise)?;
    let (k_right, k_left) = correlation_inverses(&rho)?;
    let est = mc_mean(samples, seed, |rng| {
        let s = prior.sample(rng)?;
        let a = lv_inv.as_matrix() * first.jacobian(&s)?;
        let b = lu_inv.as_matrix() * second.jacobian(&s)?;
        let (form1, form2) = whitened_forms_with(&a, &b, &rho, &k_right, &k_left);
        let residual = frobenius_rel(form1.as_matrix(), form2.as_matrix());
        if residual > FORM_TOL {
            return Err(Error::FormDisagreement { residual });
        }
        Ok(form1.into_matrix())
    })?;
    ensure_psd(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::information::snr_matrix;
    use crate::model::{GaussianPrior, LinearModel};

    fn scalar_square() -> NonlinearModel {
        NonlinearModel::new(SquareMap(Matrix::from_element(1, 1, 1.0)))
    }

    #[test]
    fn numeric_jacobian_of_linear_map() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, 4.0, 0.25]);
        let s = Vector::from_vec(vec![0.3, -1.7]);
        let j = numeric_jacobian(|x| &a * x, &s, 1e-5).unwrap();
        assert!((j - &a).amax() < 1e-10);
    }

    #[test]
    fn numeric_jacobian_by_hand() {
        let h = |s: &Vector| Vector::from_vec(vec![s[0] * s[0], s[0] * s[1]]);
        let j = numeric_jacobian(h, &Vector::from_vec(vec![1.0, 2.0]), 1e-5).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 2.0, 1.0]);
        assert!((j - expected).amax() < 1e-9);
    }

    #[test]
    fn step_halving_is_stable() {
        let h = |s: &Vector| Vector::from_vec(vec![s[0].sin() * s[1], (s[0] * s[1]).exp()]);
        let s = Vector::from_vec(vec![0.4, -0.3]);
        let coarse = numeric_jacobian(h, &s, 1e-4).unwrap();
        let fine = numeric_jacobian(h, &s, 1e-5).unwrap();
        assert!(frobenius_rel(&coarse, &fine) < 1e-6);
    }

    #[test]
    fn non_finite_evaluation_is_rejected() {
        let h = |s: &Vector| s.map(f64::ln);
        assert_eq!(numeric_jacobian(h, &Vector::from_vec(vec![0.0]), 1e-5), Err(Error::NonFinite));
    }

    #[test]
    fn analytic_jacobians_match_numeric() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, 4.0, 0.25]);
        let s = Vector::from_vec(vec![0.3, -0.7]);
        for model in [
            NonlinearModel::new(LinearMap(a.clone())),
            NonlinearModel::new(SquareMap(a.clone())),
            NonlinearModel::new(SineMap(a.clone())),
        ] {
            let gap = model.jacobian_discrepancy(&s).unwrap().unwrap();
            assert!(gap < 1e-5, "{model:?}: {gap}");
        }
        let closure = NonlinearModel::new(FnMap::new(1, 1, |s| s.map(|v| v * v)));
        assert_eq!(closure.jacobian_discrepancy(&s.rows(0, 1).into_owned()).unwrap(), None);
    }

    #[test]
    fn linear_map_reproduces_snr_exactly() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, 4.0, 0.25]);
        let sigma = SymMatrix::new(Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5])).unwrap();
        let prior = SourcePrior::Gaussian(GaussianPrior::standard(2));
        let est = fisher_nonlinear(&NonlinearModel::new(LinearMap(a.clone())), &sigma, &prior, 5000, 3).unwrap();
        let snr = snr_matrix(&LinearModel::new(a).unwrap(), &sigma).unwrap();
        assert!(frobenius_rel(est.j.as_matrix(), snr.matrix.as_matrix()) < 1e-12);
        assert_eq!(est.max_std_err(), 0.0);
    }

    #[test]
    fn square_map_gives_four() {
        let prior = SourcePrior::Gaussian(GaussianPrior::standard(1));
        let est = fisher_nonlinear(&scalar_square(), &SymMatrix::identity(1), &prior, 100_000, 11).unwrap();
        let gap = (est.j[(0, 0)] - 4.0).abs();
        assert!(gap <= 3.0 * est.std_err[(0, 0)], "{} ± {}", est.j[(0, 0)], est.std_err[(0, 0)]);

        let total = total_information_nonlinear(&scalar_square(), &SymMatrix::identity(1), &prior, 100_000, 11).unwrap();
        assert!((total.j[(0, 0)] - 5.0).abs() <= 3.0 * total.std_err[(0, 0)]);
        assert_eq!(total.j[(0, 0)], est.j[(0, 0)] + 1.0);
    }

    #[test]
    fn doubling_noise_halves_information() {
        let prior = SourcePrior::Gaussian(GaussianPrior::standard(1));
        let one = fisher_nonlinear(&scalar_square(), &SymMatrix::identity(1), &prior, 4000, 5).unwrap();
        let two = fisher_nonlinear(&scalar_square(), &SymMatrix::from_diagonal(&[2.0]), &prior, 4000, 5).unwrap();
        assert!((one.j[(0, 0)] - 2.0 * two.j[(0, 0)]).abs() <= 1e-14 * one.j[(0, 0)]);
    }

    #[test]
    fn info_only_prior_is_not_sampleable() {
        let prior = SourcePrior::deterministic(1);
        let r = fisher_nonlinear(&scalar_square(), &SymMatrix::identity(1), &prior, 10, 0);
        assert_eq!(r, Err(Error::NotSampleable));
    }

    #[test]
    fn joint_uncorrelated_adds() {
        let prior = SourcePrior::Gaussian(GaussianPrior::standard(2));
        let h = NonlinearModel::new(SquareMap(Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 1.0])));
        let g = NonlinearModel::new(SineMap(Matrix::from_row_slice(1, 2, &[0.7, -1.2])));
        let sv = SymMatrix::from_diagonal(&[1.0, 0.5]);
        let su = SymMatrix::from_diagonal(&[0.25]);
        let noise = BlockCovariance::uncorrelated(sv.clone(), su.clone()).unwrap();
        let joint = joint_information_nonlinear(&h, &g, &noise, &prior, 20_000, 9).unwrap();
        let fh = fisher_nonlinear(&h, &sv, &prior, 20_000, 9).unwrap();
        let fg = fisher_nonlinear(&g, &su, &prior, 20_000, 9).unwrap();
        // same seed stream: the per-sample sums coincide
        let sum = fh.j.as_matrix() + fg.j.as_matrix();
        assert!((joint.j.as_matrix() - &sum).amax() < 1e-10 * sum.amax());
    }

    #[test]
    fn joint_redundant_matches_single() {
        // unit noises so whitening is the identity; g = ρᵀh makes ∇g = ρᵀ∇h
        let rho = Matrix::from_row_slice(2, 1, &[0.3, -0.4]);
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 1.0]);
        let h = NonlinearModel::new(SquareMap(a.clone()));
        let rt = rho.transpose();
        let inner = SquareMap(a);
        let g = NonlinearModel::new(
            FnMap::new(1, 2, move |s| &rt * inner.eval(s)),
        );
        let noise = BlockCovariance::new(SymMatrix::identity(2), SymMatrix::identity(1), rho).unwrap();
        let prior = SourcePrior::Gaussian(GaussianPrior::standard(2));
        let joint = joint_information_nonlinear(&h, &g, &noise, &prior, 20_000, 4).unwrap();
        let single = fisher_nonlinear(&h, &SymMatrix::identity(2), &prior, 20_000, 4).unwrap();
        let gap = joint.j.as_matrix() - single.j.as_matrix();
        for i in 0..2 {
            for k in 0..2 {
                assert!(gap[(i, k)].abs() <= 3.0 * single.std_err[(i, k)].max(joint.std_err[(i, k)]) + 1e-9);
            }
        }
    }

    #[test]
    fn std_err_shrinks_like_inverse_root_n() {
        let prior = SourcePrior::Gaussian(GaussianPrior::standard(1));
        let errs: Vec<f64> = [1_000, 10_000, 100_000]
            .iter()
            .map(|&n| fisher_nonlinear(&scalar_square(), &SymMatrix::identity(1), &prior, n, 21).unwrap().std_err[(0, 0)])
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
        }
    }
}
