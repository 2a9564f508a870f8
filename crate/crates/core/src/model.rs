//! Linear mixture models, noise configurations, source priors and seeded
//! sampling of synthetic observations `x = A·s + v`.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrixkit::{
    matrix_from_rows, psd_tolerance, spd_condition, spd_inverse, sym_sqrt, BlockCovariance, Matrix,
    SymMatrix, Vector, MAX_CONDITION,
};
use crate::montecarlo::{block_ranges, block_rng};

/// Mixing matrix `A` (n channels × m sources).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    mixing: Matrix,
}

impl LinearModel {
    pub fn new(mixing: Matrix) -> Result<Self> {
        if mixing.nrows() == 0 || mixing.ncols() == 0 {
            return Err(Error::DimensionMismatch("mixing matrix must be at least 1x1".into()));
        }
        if mixing.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { mixing })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn mixing(&self) -> &Matrix {
        &self.mixing
    }

    /// Channel count.
    pub fn n(&self) -> usize {
        self.mixing.nrows()
    }

    /// Source count.
    pub fn m(&self) -> usize {
        self.mixing.ncols()
    }

    /// Gain vector of channel `k` (the k-th row of A, as a column).
    pub fn channel(&self, k: usize) -> Vector {
        self.mixing.row(k).transpose()
    }

    pub fn apply(&self, s: &Vector) -> Vector {
        &self.mixing * s
    }
}

/// Gaussian source prior `s ~ N(μ, Γ)` with `Γ` positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Vector,
    cov: SymMatrix,
    cov_sqrt: SymMatrix,
    info: SymMatrix,
}

impl GaussianPrior {
    pub fn new(mean: Vector, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "prior mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let info = spd_inverse(&cov, "prior covariance Γ")?;
        let cov_sqrt = sym_sqrt(&cov)?;
        Ok(Self {
            mean,
            cov,
            cov_sqrt,
            info,
        })
    }

    pub fn standard(m: usize) -> Self {
        Self::new(Vector::zeros(m), SymMatrix::identity(m)).expect("identity prior is valid")
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    /// `J_s = Γ⁻¹`.
    pub fn info(&self) -> &SymMatrix {
        &self.info
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vector {
        &self.mean + self.cov_sqrt.as_matrix() * standard_normal(rng, self.dim())
    }

    /// Gradient of the log-density, `−Γ⁻¹(s − μ)`.
    pub fn score(&self, s: &Vector) -> Vector {
        -(self.info.as_matrix() * (s - &self.mean))
    }
}

/// A source distribution known only through draws and, optionally, its score.
pub trait PriorSampler: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut dyn RngCore) -> Vector;

    /// Gradient of the log-density at `s`, if known.
    fn score(&self, _s: &Vector) -> Option<Vector> {
        None
    }

    /// Closed-form `J_s`, if known.
    fn information(&self) -> Option<SymMatrix> {
        None
    }

    fn covariance(&self) -> Option<SymMatrix> {
        None
    }
}

/// Sampler wrapper around a [`GaussianPrior`], exposing its score.
#[derive(Debug, Clone)]
pub struct GaussianSampler(pub GaussianPrior);

impl PriorSampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vector {
        self.0.sample(rng)
    }

    fn score(&self, s: &Vector) -> Option<Vector> {
        Some(self.0.score(s))
    }

    fn information(&self) -> Option<SymMatrix> {
        Some(self.0.info().clone())
    }

    fn covariance(&self) -> Option<SymMatrix> {
        Some(self.0.cov().clone())
    }
}

/// Independent zero-mean Laplace sources with common scale `b`.
#[derive(Debug, Clone)]
pub struct LaplaceSampler {
    pub dim: usize,
    pub scale: f64,
}

impl PriorSampler for LaplaceSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vector {
        Vector::from_fn(self.dim, |_, _| {
            // inverse CDF on u ∈ (-1/2, 1/2)
            let u = unit_open(rng) - 0.5;
            -self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
    }

    fn score(&self, s: &Vector) -> Option<Vector> {
        Some(s.map(|v| -v.signum() / self.scale))
    }

    fn information(&self) -> Option<SymMatrix> {
        Some(SymMatrix::identity(self.dim).scale(1.0 / (self.scale * self.scale)))
    }

    fn covariance(&self) -> Option<SymMatrix> {
        Some(SymMatrix::identity(self.dim).scale(2.0 * self.scale * self.scale))
    }
}

/// Source prior: Gaussian, information-only, or an arbitrary sampler.
///
/// `P` (the source covariance) and `J_s` are independent fields; only the
/// Gaussian case derives one from the other.
#[derive(Debug, Clone)]
pub enum SourcePrior {
    Gaussian(GaussianPrior),
    InfoOnly {
        info: SymMatrix,
        covariance: Option<SymMatrix>,
    },
    Sampler(Arc<dyn PriorSampler>),
}

impl SourcePrior {
    /// Information-only prior with `J_s` checked PSD.
    pub fn info_only(info: SymMatrix) -> Result<Self> {
        let tol = psd_tolerance(&info);
        let min_eigenvalue = info.min_eigenvalue();
        if min_eigenvalue < -tol {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(SourcePrior::InfoOnly {
            info,
            covariance: None,
        })
    }

    /// Deterministic (unknown, non-random) source: `J_s = 0`.
    pub fn deterministic(m: usize) -> Self {
        SourcePrior::InfoOnly {
            info: SymMatrix::zeros(m),
            covariance: None,
        }
    }

    pub fn sampler(s: impl PriorSampler + 'static) -> Self {
        SourcePrior::Sampler(Arc::new(s))
    }

    pub fn dim(&self) -> usize {
        match self {
            SourcePrior::Gaussian(g) => g.dim(),
            SourcePrior::InfoOnly { info, .. } => info.dim(),
            SourcePrior::Sampler(s) => s.dim(),
        }
    }

    /// Prior information matrix `J_s`.
    pub fn information(&self) -> Result<SymMatrix> {
        match self {
            SourcePrior::Gaussian(g) => Ok(g.info().clone()),
            SourcePrior::InfoOnly { info, .. } => Ok(info.clone()),
            SourcePrior::Sampler(s) => s.information().ok_or(Error::NoPriorInfo),
        }
    }

    pub fn covariance(&self) -> Option<SymMatrix> {
        match self {
            SourcePrior::Gaussian(g) => Some(g.cov().clone()),
            SourcePrior::InfoOnly { covariance, .. } => covariance.clone(),
            SourcePrior::Sampler(s) => s.covariance(),
        }
    }

    pub fn is_sampleable(&self) -> bool {
        !matches!(self, SourcePrior::InfoOnly { .. })
    }

    pub fn as_gaussian(&self) -> Option<&GaussianPrior> {
        match self {
            SourcePrior::Gaussian(g) => Some(g),
            _ => None,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<Vector> {
        match self {
            SourcePrior::Gaussian(g) => Ok(g.sample(rng)),
            SourcePrior::Sampler(s) => Ok(s.sample(rng)),
            SourcePrior::InfoOnly { .. } => Err(Error::NotSampleable),
        }
    }
}

/// Two sensor groups observing the same sources: `x = A·s + v`, `y = B·s + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityPair {
    pub first: LinearModel,
    pub second: LinearModel,
    pub noise: BlockCovariance,
}

impl ModalityPair {
    pub fn new(first: LinearModel, second: LinearModel, noise: BlockCovariance) -> Result<Self> {
        if first.m() != second.m() {
            return Err(Error::DimensionMismatch(format!(
                "modalities observe {} and {} sources",
                first.m(),
                second.m()
            )));
        }
        let (n1, n2) = noise.dims();
        if n1 != first.n() || n2 != second.n() {
            return Err(Error::DimensionMismatch(format!(
                "noise blocks are {n1} and {n2}, modalities have {} and {} channels",
                first.n(),
                second.n()
            )));
        }
        Ok(Self {
            first,
            second,
            noise,
        })
    }

    pub fn m(&self) -> usize {
        self.first.m()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticCode {
    DimensionMismatch,
    NotPsd,
    NotPd,
    SingularFisher,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn has(&self, code: DiagnosticCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }

    fn push(&mut self, severity: Severity, code: DiagnosticCode, message: String) {
        self.diagnostics.push(Diagnostic {
            severity,
            code,
            message,
        });
    }
}

/// Report-only consistency check of a single-modality scenario.
pub fn validate(model: &LinearModel, prior: &SourcePrior, noise: &SymMatrix) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (n, m) = (model.n(), model.m());

    let noise_ok = if noise.dim() != n {
        report.push(
            Severity::Error,
            DiagnosticCode::DimensionMismatch,
            format!("noise covariance is {}x{}, model has {n} channels", noise.dim(), noise.dim()),
        );
        false
    } else {
        let lo = noise.min_eigenvalue();
        let tol = psd_tolerance(noise);
        if lo < -tol {
            report.push(
                Severity::Error,
                DiagnosticCode::NotPsd,
                format!("noise covariance has negative eigenvalue {lo:.6e}"),
            );
            false
        } else if lo <= tol {
            report.push(
                Severity::Error,
                DiagnosticCode::NotPd,
                format!("noise covariance is singular (min eigenvalue {lo:.6e})"),
            );
            false
        } else {
            true
        }
    };

    if prior.dim() != m {
        report.push(
            Severity::Error,
            DiagnosticCode::DimensionMismatch,
            format!("prior has dimension {}, model has {m} sources", prior.dim()),
        );
    }
    let prior_matrices = [("prior covariance", prior.covariance()), ("prior information J_s", prior.information().ok())];
    for (what, mat) in prior_matrices {
        if let Some(mat) = mat {
            let lo = mat.min_eigenvalue();
            if lo < -psd_tolerance(&mat) {
                report.push(
                    Severity::Error,
                    DiagnosticCode::NotPsd,
                    format!("{what} has negative eigenvalue {lo:.6e}"),
                );
            }
        }
    }

    if n < m {
        report.push(
            Severity::Warning,
            DiagnosticCode::SingularFisher,
            format!(
                "n = {n} < m = {m}: otherwise the Fisher information matrix is singular and the ML estimate does not exist"
            ),
        );
    } else if noise_ok {
        let snr = crate::information::snr_matrix(model, noise).map(|i| i.matrix);
        if let Ok(snr) = snr {
            let cond = spd_condition(&snr);
            if cond > MAX_CONDITION {
                report.push(
                    Severity::Warning,
                    DiagnosticCode::SingularFisher,
                    format!("Fisher information matrix is singular (condition estimate {cond:.3e}); the ML estimate does not exist"),
                );
            }
        }
    }
    report
}

/// Seeded draws of sources and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// N × m
    pub sources: Matrix,
    /// N × n₁
    pub observations: Matrix,
    /// N × n₂, for two-modality simulations.
    pub second_observations: Option<Matrix>,
    pub seed: u64,
}

pub(crate) fn standard_normal(rng: &mut dyn RngCore, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

fn unit_open(rng: &mut dyn RngCore) -> f64 {
    loop {
        let u: f64 = rand::Rng::random(rng);
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws correlated Gaussian noise as `sym_sqrt(Σ)·z` with `z ~ N(0, I)`.
#[derive(Debug, Clone)]
pub(crate) struct NoiseSampler {
    sqrt: SymMatrix,
}

impl NoiseSampler {
    pub(crate) fn new(cov: &SymMatrix) -> Result<Self> {
        Ok(Self {
            sqrt: sym_sqrt(cov)?,
        })
    }

    pub(crate) fn draw(&self, rng: &mut dyn RngCore) -> Vector {
        self.sqrt.as_matrix() * standard_normal(rng, self.sqrt.dim())
    }
}

/// Simulates `N` draws of `x = A·s + v` for one modality.
pub fn simulate(
    model: &LinearModel,
    noise: &SymMatrix,
    prior: &SourcePrior,
    samples: usize,
    seed: u64,
) -> Result<SampleBatch> {
    check_sim_dims(model.m(), prior, noise.dim(), model.n())?;
    let sampler = NoiseSampler::new(noise)?;
    let (sources, obs, _) = simulate_rows(model, None, &sampler, prior, samples, seed)?;
    Ok(SampleBatch {
        sources,
        observations: obs,
        second_observations: None,
        seed,
    })
}

/// Simulates `N` draws of both modalities with jointly Gaussian noise.
pub fn simulate_pair(pair: &ModalityPair, prior: &SourcePrior, samples: usize, seed: u64) -> Result<SampleBatch> {
    let joint = pair.noise.joint();
    check_sim_dims(pair.m(), prior, joint.dim(), pair.first.n() + pair.second.n())?;
    let sampler = NoiseSampler::new(&joint)?;
    let (sources, obs, second) = simulate_rows(&pair.first, Some(&pair.second), &sampler, prior, samples, seed)?;
    Ok(SampleBatch {
        sources,
        observations: obs,
        second_observations: second,
        seed,
    })
}

fn check_sim_dims(m: usize, prior: &SourcePrior, noise_dim: usize, n: usize) -> Result<()> {
    if !prior.is_sampleable() {
        return Err(Error::NotSampleable);
    }
    if prior.dim() != m {
        return Err(Error::DimensionMismatch(format!("prior dimension {} != m = {m}", prior.dim())));
    }
    if noise_dim != n {
        return Err(Error::DimensionMismatch(format!("noise dimension {noise_dim} != n = {n}")));
    }
    Ok(())
}

type Rows = (Matrix, Matrix, Option<Matrix>);

fn simulate_rows(
    first: &LinearModel,
    second: Option<&LinearModel>,
    noise: &NoiseSampler,
    prior: &SourcePrior,
    samples: usize,
    seed: u64,
) -> Result<Rows> {
    let m = first.m();
    let n1 = first.n();
    let n2 = second.map_or(0, LinearModel::n);
    let blocks: Vec<Result<Vec<(Vector, Vector)>>> = block_ranges(samples)
        .into_par_iter()
        .enumerate()
        .map(|(block, range)| {
            let mut rng = block_rng(seed, block);
            range
                .map(|_| {
                    let s = prior.sample(&mut rng)?;
                    let w = noise.draw(&mut rng);
                    Ok((s, w))
                })
                .collect()
        })
        .collect();

    let mut sources = Matrix::zeros(samples, m);
    let mut obs = Matrix::zeros(samples, n1);
    let mut second_obs = second.map(|_| Matrix::zeros(samples, n2));
    let mut row = 0;
    for block in blocks {
        for (s, w) in block? {
            sources.row_mut(row).copy_from(&s.transpose());
            let x = first.apply(&s) + w.rows(0, n1);
            obs.row_mut(row).copy_from(&x.transpose());
            if let (Some(b), Some(y_out)) = (second, second_obs.as_mut()) {
                let y = b.apply(&s) + w.rows(n1, n2);
                y_out.row_mut(row).copy_from(&y.transpose());
            }
            row += 1;
        }
    }
    Ok((sources, obs, second_obs))
}
