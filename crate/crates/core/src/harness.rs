//! Brute-force verification oracles.
//!
//! Everything here recomputes a closed-form quantity by a different route
//! (simulation or finite differences) so that the two can be compared.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{LinearEstimator, Method};
use crate::information::{crlb, snr_matrix, total_information, InfoKind, InfoMatrix};
use crate::matrixkit::{spd_cholesky, BlockCovariance, Matrix, SymMatrix, Vector};
use crate::model::{LinearModel, NoiseSampler, SourcePrior};
use crate::montecarlo::{mc_mean, McInfoEstimate};
use crate::nonlinear::{LinearMap, NonlinearModel};
use crate::report::sym_rows;

/// Multiple of the largest per-entry standard error allowed as PSD slack.
pub const SLACK_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrlbCheck {
    pub min_eig: f64,
    pub slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignResult {
    pub method: Method,
    #[serde(serialize_with = "sym_rows")]
    pub empirical_error_cov: SymMatrix,
    #[serde(serialize_with = "sym_rows")]
    pub std_err: SymMatrix,
    #[serde(serialize_with = "sym_rows")]
    pub theoretical_ref: SymMatrix,
    pub frobenius_rel_err: f64,
    #[serde(rename = "N")]
    pub samples: usize,
    pub seed: u64,
    pub crlb_check: CrlbCheck,
}

/// `passed` iff `λ_min(empirical − J⁻¹) ≥ −slack`.
pub fn check_crlb_dominance(empirical: &SymMatrix, j: &InfoMatrix, slack: f64) -> Result<CrlbCheck> {
    let bound = crlb(j)?;
    if bound.dim() != empirical.dim() {
        return Err(Error::DimensionMismatch(format!(
            "empirical covariance is {0}x{0}, bound is {1}x{1}",
            empirical.dim(),
            bound.dim()
        )));
    }
    let min_eig = empirical.sub(&bound).min_eigenvalue();
    Ok(CrlbCheck {
        min_eig,
        slack,
        passed: min_eig >= -slack,
    })
}

/// Simulates `x = A·s + v`, applies the estimator for `method`, and compares
/// `E{(s − ŝ)(s − ŝ)ᵀ}` with its closed form and with the CRLB.
///
/// ML and WLS (with `W = Σ⁻¹`) share one estimator and are bounded by the
/// SNR matrix. MMSE needs a Gaussian prior and is bounded by `snr + Γ⁻¹`.
/// A prior that cannot be sampled is treated as a fixed source at `s = 0`.
pub fn empirical_error_covariance(
    method: Method,
    model: &LinearModel,
    prior: &SourcePrior,
    sigma: &SymMatrix,
    samples: usize,
    seed: u64,
) -> Result<CampaignResult> {
    let snr = snr_matrix(model, sigma)?;
    let (estimator, bound) = match method {
        Method::Ml | Method::Wls => (LinearEstimator::ml(model, sigma)?, snr),
        Method::Mmse => {
            let gaussian = prior.as_gaussian().ok_or(Error::MmseRequiresGaussian)?;
            (LinearEstimator::mmse(model, sigma, gaussian)?, total_information(&snr, prior)?)
        }
    };
    let mut result = campaign_with_estimator(&estimator, &bound, model, prior, sigma, samples, seed)?;
    result.method = method;
    Ok(result)
}

/// Error-covariance campaign for an arbitrary affine estimator, checked
/// against its own `error_cov` and against the bound implied by `bound`.
pub fn campaign_with_estimator(
    estimator: &LinearEstimator,
    bound: &InfoMatrix,
    model: &LinearModel,
    prior: &SourcePrior,
    sigma: &SymMatrix,
    samples: usize,
    seed: u64,
) -> Result<CampaignResult> {
    if prior.dim() != model.m() || sigma.dim() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{}, prior has {} sources, noise is {}x{}",
            model.n(),
            model.m(),
            prior.dim(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    let noise = NoiseSampler::new(sigma)?;
    let fixed = Vector::zeros(model.m());
    let est = mc_mean(samples, seed, |rng| {
        let s = if prior.is_sampleable() {
            prior.sample(rng)?
        } else {
            fixed.clone()
        };
        let x = model.apply(&s) + noise.draw(rng);
        let e = &s - estimator.apply(&x);
        Ok(&e * e.transpose())
    })?;
    let reference = estimator.error_cov.clone();
    let frobenius_rel_err = (est.j.as_matrix() - reference.as_matrix()).norm() / reference.as_matrix().norm();
    let crlb_check = check_crlb_dominance(&est.j, bound, SLACK_FACTOR * est.max_std_err())?;
    Ok(CampaignResult {
        method: estimator.method,
        empirical_error_cov: est.j,
        std_err: est.std_err,
        theoretical_ref: reference,
        frobenius_rel_err,
        samples: est.samples,
        seed,
        crlb_check,
    })
}

/// Negated central-difference Hessian in `s` of the Gaussian log-likelihood
/// `−½(x − h(s))ᵀΣ⁻¹(x − h(s))`, at `s0` for one observation `x`.
pub fn fisher_finite_difference(
    model: &NonlinearModel,
    sigma: &SymMatrix,
    s0: &Vector,
    x: &Vector,
    step: f64,
) -> Result<SymMatrix> {
    if sigma.dim() != model.n() || x.len() != model.n() || s0.len() != model.m() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}→{}, s0 has {}, x has {}, noise is {}x{}",
            model.m(),
            model.n(),
            s0.len(),
            x.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    let chol = spd_cholesky(sigma, "Σ")?;
    let loglik = |s: &Vector| -> Result<f64> {
        let r = x - model.eval(s);
        let w = chol.l().solve_lower_triangular(&r).expect("Cholesky factor is nonsingular");
        let v = -0.5 * w.norm_squared();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite)
        }
    };
    let m = s0.len();
    let mut hess = Matrix::zeros(m, m);
    for i in 0..m {
        for k in i..m {
            let at = |di: f64, dk: f64| {
                let mut s = s0.clone();
                s[i] += di;
                s[k] += dk;
                loglik(&s)
            };
            let h = (at(step, step)? - at(step, -step)? - at(-step, step)? + at(-step, -step)?) / (4.0 * step * step);
            hess[(i, k)] = -h;
            hess[(k, i)] = -h;
        }
    }
    Ok(SymMatrix::symmetrize(&hess))
}

/// Single-observation finite-difference Fisher information of the linear
/// model, evaluated at `x = A·s0`.
pub fn fisher_finite_difference_linear(model: &LinearModel, sigma: &SymMatrix, s0: &Vector, step: f64) -> Result<SymMatrix> {
    let x = model.apply(s0);
    fisher_finite_difference(&NonlinearModel::new(LinearMap(model.mixing().clone())), sigma, s0, &x, step)
}

/// Finite-difference Fisher information at `s0`, averaged over
/// observations `x = h(s0) + v`.
pub fn expected_fisher_finite_difference(
    model: &NonlinearModel,
    sigma: &SymMatrix,
    s0: &Vector,
    step: f64,
    samples: usize,
    seed: u64,
) -> Result<McInfoEstimate> {
    let noise = NoiseSampler::new(sigma)?;
    let mean = model.eval(s0);
    mc_mean(samples, seed, |rng| {
        let x = &mean + noise.draw(rng);
        Ok(fisher_finite_difference(model, sigma, s0, &x, step)?.into_matrix())
    })
}

/// Wraps a plain symmetric matrix as Fisher information for the dominance check.
pub fn as_fisher(j: SymMatrix) -> Result<InfoMatrix> {
    InfoMatrix::new(j, InfoKind::FisherConditional)
}

/// Matrix with i.i.d. standard-normal entries.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Well-conditioned random SPD matrix, `GGᵀ/n + 0.1·I`.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> SymMatrix {
    let g = random_matrix(rng, n, n);
    SymMatrix::symmetrize(&(&g * g.transpose() / n as f64 + Matrix::identity(n, n) * 0.1))
}

/// Random PD joint covariance split into `n1` and `n2` blocks.
pub fn random_joint_covariance(rng: &mut impl Rng, n1: usize, n2: usize) -> Result<BlockCovariance> {
    let joint = random_spd(rng, n1 + n2);
    let j = joint.as_matrix();
    BlockCovariance::new(
        SymMatrix::symmetrize(&j.view((0, 0), (n1, n1)).into_owned()),
        SymMatrix::symmetrize(&j.view((n1, n1), (n2, n2)).into_owned()),
        j.view((0, n1), (n1, n2)).into_owned(),
    )
}

/// One row of a campaign report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRow {
    pub scenario: String,
    pub method: Method,
    #[serde(rename = "N")]
    pub samples: usize,
    pub seed: u64,
    pub rel_err: f64,
    pub crlb_min_eig: f64,
    pub passed: bool,
}

impl CampaignRow {
    pub fn new(scenario: &str, result: &CampaignResult) -> Self {
        Self {
            scenario: scenario.to_owned(),
            method: result.method,
            samples: result.samples,
            seed: result.seed,
            rel_err: result.frobenius_rel_err,
            crlb_min_eig: result.crlb_check.min_eig,
            passed: result.crlb_check.passed,
        }
    }
}

/// Flat CSV with one row per scenario.
pub fn write_campaign_csv<W: Write>(rows: &[CampaignRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Report(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Report(e.to_string()))
}

pub fn campaign_json(result: &CampaignResult) -> Result<String> {
    serde_json::to_string_pretty(result).map_err(|e| Error::Report(e.to_string()))
}
