//! SNR / Fisher information matrices, the CRLB, and two-modality joint
//! information.
//!
//! The joint information `J_{x,y}` of two correlated sensor groups has four
//! algebraically identical expressions:
//!
//! 1. the stacked model `[A; B]ᵀ Σ⁻¹ [A; B] + J_s` with `Σ⁻¹` from block inversion,
//! 2. `AᵀΣ_v⁻¹A + (AᵀΣ_v⁻¹Σ_vu − Bᵀ) F (·)ᵀ + J_s`,
//! 3. `BᵀΣ_u⁻¹B + (BᵀΣ_u⁻¹Σ_uv − Aᵀ) G (·)ᵀ + J_s`,
//! 4. the prewhitened form `(Ãᵀρ − B̃ᵀ)(I − ρᵀρ)⁻¹(·)ᵀ + ÃᵀÃ + J_s`.
//!
//! [`joint_information`] evaluates all of them and refuses to answer if they
//! disagree beyond [`ROUTE_TOL`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrixkit::{
    block_inverse, frobenius_rel, inv_sym_sqrt, psd_tolerance, schur_factors, sorted_eigen, spd_cholesky,
    spd_condition, spd_inverse, sym_sqrt, Matrix, SymMatrix, MAX_CONDITION,
};
use crate::model::{LinearModel, ModalityPair, PriorSampler, SourcePrior};
use crate::montecarlo::{mc_mean, McInfoEstimate};
use crate::report::{mat_rows, sym_rows};

/// Relative Frobenius agreement required between the joint-information routes.
pub const ROUTE_TOL: f64 = 1e-8;

/// `σ_max(ρ)` at or above `1 − NEAR_SINGULAR_GAP` is flagged near-singular.
pub const NEAR_SINGULAR_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoKind {
    Snr,
    FisherConditional,
    Total,
    Joint,
}

/// Symmetric PSD information matrix tagged with what it measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoMatrix {
    #[serde(rename = "J", serialize_with = "sym_rows")]
    pub matrix: SymMatrix,
    pub kind: InfoKind,
}

impl InfoMatrix {
    pub fn new(matrix: SymMatrix, kind: InfoKind) -> Result<Self> {
        let min_eigenvalue = matrix.min_eigenvalue();
        if min_eigenvalue < -psd_tolerance(&matrix) {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(Self { matrix, kind })
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// `AᵀΣ⁻¹A`, the multichannel SNR matrix (Fisher information of the linear
/// Gaussian model).
pub fn snr_matrix(model: &LinearModel, sigma: &SymMatrix) -> Result<InfoMatrix> {
    if sigma.dim() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "noise covariance is {0}x{0}, model has {1} channels",
            sigma.dim(),
            model.n()
        )));
    }
    let chol = spd_cholesky(sigma, "noise covariance Σ")?;
    let a = model.mixing();
    let snr = SymMatrix::symmetrize(&(a.transpose() * chol.solve(a)));
    InfoMatrix::new(snr, InfoKind::Snr)
}

/// `J_x = snr + J_s`.
pub fn total_information(snr: &InfoMatrix, prior: &SourcePrior) -> Result<InfoMatrix> {
    let js = prior.information()?;
    if js.dim() != snr.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prior information is {0}x{0}, SNR matrix is {1}x{1}",
            js.dim(),
            snr.dim()
        )));
    }
    InfoMatrix::new(snr.matrix.add(&js), InfoKind::Total)
}

/// Cramér–Rao lower bound `J⁻¹`.
pub fn crlb(j: &InfoMatrix) -> Result<SymMatrix> {
    let (values, vectors) = sorted_eigen(&j.matrix);
    let hi = values.last().copied().unwrap_or(0.0);
    let lo = values.first().copied().unwrap_or(0.0);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION || hi <= 0.0 {
        let cutoff = hi.max(0.0) / MAX_CONDITION;
        let null_space = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v <= cutoff)
            .map(|(k, _)| vectors.column(k).iter().copied().collect())
            .collect();
        return Err(Error::SingularInformation { condition, null_space });
    }
    spd_inverse(&j.matrix, "information matrix")
}

/// Prewhitened two-modality model: `Ã = L_v⁻¹A`, `B̃ = L_u⁻¹B`,
/// `ρ = L_v⁻¹ Σ_vu L_u⁻¹` with `L` the symmetric square roots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhitenedPair {
    #[serde(serialize_with = "mat_rows")]
    pub a_tilde: Matrix,
    #[serde(serialize_with = "mat_rows")]
    pub b_tilde: Matrix,
    #[serde(serialize_with = "mat_rows")]
    pub rho: Matrix,
    #[serde(serialize_with = "sym_rows")]
    pub l_v: SymMatrix,
    #[serde(serialize_with = "sym_rows")]
    pub l_u: SymMatrix,
    pub sigma_max_rho: f64,
    pub near_singular: bool,
}

pub fn sigma_max(m: &Matrix) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.clone().singular_values().max()
    }
}

/// Whitening transforms and the cross-correlation `ρ` of a noise block pair.
pub(crate) fn whitening(noise: &crate::matrixkit::BlockCovariance) -> Result<(SymMatrix, SymMatrix, SymMatrix, SymMatrix, Matrix)> {
    let l_v = sym_sqrt(noise.sigma_v())?;
    let l_u = sym_sqrt(noise.sigma_u())?;
    let lv_inv = inv_sym_sqrt(noise.sigma_v())?;
    let lu_inv = inv_sym_sqrt(noise.sigma_u())?;
    let rho = lv_inv.as_matrix() * noise.sigma_vu() * lu_inv.as_matrix();
    Ok((l_v, l_u, lv_inv, lu_inv, rho))
}

pub fn prewhiten(pair: &ModalityPair) -> Result<WhitenedPair> {
    let (l_v, l_u, lv_inv, lu_inv, rho) = whitening(&pair.noise)?;
    let sigma_max_rho = sigma_max(&rho);
    Ok(WhitenedPair {
        a_tilde: lv_inv.as_matrix() * pair.first.mixing(),
        b_tilde: lu_inv.as_matrix() * pair.second.mixing(),
        near_singular: sigma_max_rho >= 1.0 - NEAR_SINGULAR_GAP,
        sigma_max_rho,
        rho,
        l_v,
        l_u,
    })
}

impl WhitenedPair {
    /// The whitened model as an ordinary pair with unit-covariance noises.
    pub fn as_pair(&self) -> Result<ModalityPair> {
        let noise = crate::matrixkit::BlockCovariance::new(
            SymMatrix::identity(self.a_tilde.nrows()),
            SymMatrix::identity(self.b_tilde.nrows()),
            self.rho.clone(),
        )?;
        ModalityPair::new(
            LinearModel::new(self.a_tilde.clone())?,
            LinearModel::new(self.b_tilde.clone())?,
            noise,
        )
    }
}

/// `(I − ρᵀρ)⁻¹` and `(I − ρρᵀ)⁻¹`, rejecting inadmissible `ρ`.
pub(crate) fn correlation_inverses(rho: &Matrix) -> Result<(SymMatrix, SymMatrix)> {
    let sigma_max = sigma_max(rho);
    if sigma_max >= 1.0 {
        return Err(Error::Inadmissible { sigma_max });
    }
    let (n1, n2) = rho.shape();
    let right = SymMatrix::symmetrize(&(Matrix::identity(n2, n2) - rho.transpose() * rho));
    let left = SymMatrix::symmetrize(&(Matrix::identity(n1, n1) - rho * rho.transpose()));
    Ok((spd_inverse(&right, "I − ρᵀρ")?, spd_inverse(&left, "I − ρρᵀ")?))
}

/// Both prewhitened forms of `J_{x,y}` (without `J_s`).
pub fn whitened_joint_forms(a_tilde: &Matrix, b_tilde: &Matrix, rho: &Matrix) -> Result<(SymMatrix, SymMatrix)> {
    let (k_right, k_left) = correlation_inverses(rho)?;
    Ok(whitened_forms_with(a_tilde, b_tilde, rho, &k_right, &k_left))
}

pub(crate) fn whitened_forms_with(
    a_tilde: &Matrix,
    b_tilde: &Matrix,
    rho: &Matrix,
    k_right: &SymMatrix,
    k_left: &SymMatrix,
) -> (SymMatrix, SymMatrix) {
    let at = a_tilde.transpose();
    let bt = b_tilde.transpose();
    let m1 = &at * rho - &bt;
    let form1 = &m1 * k_right.as_matrix() * m1.transpose() + &at * a_tilde;
    let m2 = &bt * rho.transpose() - &at;
    let form2 = &m2 * k_left.as_matrix() * m2.transpose() + &bt * b_tilde;
    (SymMatrix::symmetrize(&form1), SymMatrix::symmetrize(&form2))
}

/// Every route's value of `J_{x,y}` (each including `J_s`).
#[derive(Debug, Clone, PartialEq)]
pub struct JointRoutes {
    pub block_inverse: SymMatrix,
    pub schur_first: SymMatrix,
    pub schur_second: SymMatrix,
    pub prewhitened: SymMatrix,
    pub prewhitened_alt: SymMatrix,
}

impl JointRoutes {
    pub fn residuals(&self) -> RouteResiduals {
        let r = |m: &SymMatrix| frobenius_rel(m.as_matrix(), self.prewhitened.as_matrix());
        RouteResiduals {
            block_inverse: r(&self.block_inverse),
            schur_first: r(&self.schur_first),
            schur_second: r(&self.schur_second),
            prewhitened_alt: r(&self.prewhitened_alt),
        }
    }
}

/// Relative Frobenius distance of each route from the prewhitened route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteResiduals {
    pub block_inverse: f64,
    pub schur_first: f64,
    pub schur_second: f64,
    pub prewhitened_alt: f64,
}

impl RouteResiduals {
    pub fn max(&self) -> f64 {
        self.block_inverse
            .max(self.schur_first)
            .max(self.schur_second)
            .max(self.prewhitened_alt)
    }

    fn worst(&self) -> (&'static str, f64) {
        [
            ("block_inverse", self.block_inverse),
            ("schur_first", self.schur_first),
            ("schur_second", self.schur_second),
            ("prewhitened_alt", self.prewhitened_alt),
        ]
        .into_iter()
        .fold(("", f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
    }
}

fn check_prior_dim(pair: &ModalityPair, js: &SymMatrix) -> Result<()> {
    if js.dim() != pair.m() {
        return Err(Error::DimensionMismatch(format!(
            "prior information is {0}x{0}, modalities observe {1} sources",
            js.dim(),
            pair.m()
        )));
    }
    Ok(())
}

/// Evaluates `J_{x,y}` through every algebraic route.
pub fn joint_information_routes(pair: &ModalityPair, prior: &SourcePrior) -> Result<JointRoutes> {
    let js = prior.information()?;
    check_prior_dim(pair, &js)?;
    let a = pair.first.mixing();
    let b = pair.second.mixing();
    let at = a.transpose();
    let bt = b.transpose();
    let noise = &pair.noise;

    let blocks = block_inverse(noise)?;
    let stacked = &at * blocks.top_left.as_matrix() * a
        + &at * &blocks.top_right * b
        + &bt * &blocks.bottom_left * a
        + &bt * blocks.bottom_right.as_matrix() * b;

    let sf = schur_factors(noise)?;
    let sv_inv = spd_inverse(noise.sigma_v(), "Σ_v")?;
    let su_inv = spd_inverse(noise.sigma_u(), "Σ_u")?;
    let mx = &at * sv_inv.as_matrix() * noise.sigma_vu() - &bt;
    let schur_first = &at * sv_inv.as_matrix() * a + &mx * sf.f.as_matrix() * mx.transpose();
    let my = &bt * su_inv.as_matrix() * noise.sigma_uv() - &at;
    let schur_second = &bt * su_inv.as_matrix() * b + &my * sf.g.as_matrix() * my.transpose();

    let wp = prewhiten(pair)?;
    let (form1, form2) = whitened_joint_forms(&wp.a_tilde, &wp.b_tilde, &wp.rho)?;

    let with_prior = |m: Matrix| SymMatrix::symmetrize(&(m + js.as_matrix()));
    Ok(JointRoutes {
        block_inverse: with_prior(stacked),
        schur_first: with_prior(schur_first),
        schur_second: with_prior(schur_second),
        prewhitened: form1.add(&js),
        prewhitened_alt: form2.add(&js),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointInformation {
    pub info: InfoMatrix,
    pub residuals: RouteResiduals,
    pub sigma_max_rho: f64,
    pub near_singular: bool,
}

/// Joint Fisher information of two correlated modalities plus the prior.
///
/// Returns the prewhitened-route value after cross-validating it against
/// the block-inverse and both Schur-factor routes.
pub fn joint_information(pair: &ModalityPair, prior: &SourcePrior) -> Result<JointInformation> {
    let routes = joint_information_routes(pair, prior)?;
    let residuals = routes.residuals();
    let (route, residual) = residuals.worst();
    if residual > ROUTE_TOL {
        return Err(Error::RouteDisagreement { route, residual });
    }
    let wp = prewhiten(pair)?;
    Ok(JointInformation {
        info: InfoMatrix::new(routes.prewhitened, InfoKind::Joint)?,
        residuals,
        sigma_max_rho: wp.sigma_max_rho,
        near_singular: wp.near_singular,
    })
}

/// Synergic information: what fusing buys over each modality alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynergyReport {
    /// `J_{x,y} − J_x`
    #[serde(rename = "S_x", serialize_with = "sym_rows")]
    pub s_x: SymMatrix,
    /// `J_{x,y} − J_y`
    #[serde(rename = "S_y", serialize_with = "sym_rows")]
    pub s_y: SymMatrix,
    pub min_eigenvalues: (f64, f64),
}

pub fn synergy_matrices(pair: &ModalityPair) -> Result<SynergyReport> {
    let a = pair.first.mixing();
    let b = pair.second.mixing();
    let at = a.transpose();
    let bt = b.transpose();
    let noise = &pair.noise;
    let sf = schur_factors(noise)?;
    let sv_inv = spd_inverse(noise.sigma_v(), "Σ_v")?;
    let su_inv = spd_inverse(noise.sigma_u(), "Σ_u")?;

    let mx = &at * sv_inv.as_matrix() * noise.sigma_vu() - &bt;
    let s_x = SymMatrix::symmetrize(&(&mx * sf.f.as_matrix() * mx.transpose()));
    let my = &bt * su_inv.as_matrix() * noise.sigma_uv() - &at;
    let s_y = SymMatrix::symmetrize(&(&my * sf.g.as_matrix() * my.transpose()));

    // Independent check against the stacked route: S = J_{x,y} − J_single.
    let blocks = block_inverse(noise)?;
    let joint = &at * blocks.top_left.as_matrix() * a
        + &at * &blocks.top_right * b
        + &bt * &blocks.bottom_left * a
        + &bt * blocks.bottom_right.as_matrix() * b;
    let jx = snr_matrix(&pair.first, noise.sigma_v())?;
    let jy = snr_matrix(&pair.second, noise.sigma_u())?;
    let scale = joint.norm().max(f64::MIN_POSITIVE);
    for (s, single, route) in [(&s_x, &jx, "synergy S_x"), (&s_y, &jy, "synergy S_y")] {
        let residual = (s.as_matrix() - (&joint - single.matrix.as_matrix())).norm() / scale;
        if residual > ROUTE_TOL {
            return Err(Error::RouteDisagreement { route, residual });
        }
    }

    Ok(SynergyReport {
        min_eigenvalues: (s_x.min_eigenvalue(), s_y.min_eigenvalue()),
        s_x,
        s_y,
    })
}

/// Monte-Carlo estimate of `J_s = E{∇log f(s) ∇log f(s)ᵀ}` from prior draws.
pub fn prior_information_mc(sampler: &dyn PriorSampler, samples: usize, seed: u64) -> Result<McInfoEstimate> {
    mc_mean(samples, seed, |rng| {
        let s = sampler.sample(rng);
        let score = sampler.score(&s).ok_or(Error::NoScore)?;
        Ok(&score * score.transpose())
    })
}

/// Condition-aware check used by validation: is the SNR matrix invertible?
pub fn snr_condition(snr: &InfoMatrix) -> f64 {
    spd_condition(&snr.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::BlockCovariance;
    use crate::model::{GaussianPrior, GaussianSampler, LaplaceSampler};

    fn mat(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    #[test]
    fn snr_examples() {
        let id = LinearModel::new(Matrix::identity(2, 2)).unwrap();
        let s = snr_matrix(&id, &SymMatrix::identity(2)).unwrap();
        assert!((s.matrix.as_matrix() - Matrix::identity(2, 2)).amax() < 1e-15);

        let model = LinearModel::new(mat(2, 2, &[1.0, 0.0, 1.0, 1.0])).unwrap();
        let sigma = SymMatrix::from_diagonal(&[1.0, 4.0]);
        let s = snr_matrix(&model, &sigma).unwrap();
        // channel-wise accumulation Σ_k ã_k ã_kᵀ / σ_k²
        let mut oracle = Matrix::zeros(2, 2);
        for k in 0..2 {
            let a = model.channel(k);
            oracle += &a * a.transpose() / sigma[(k, k)];
        }
        assert!((s.matrix.as_matrix() - &oracle).amax() < 1e-15);
        assert!((s.matrix.as_matrix() - mat(2, 2, &[1.25, 0.25, 0.25, 0.25])).amax() < 1e-15);
    }

    #[test]
    fn single_channel_snr_is_rank_one() {
        let model = LinearModel::new(mat(1, 3, &[1.0, -2.0, 0.5])).unwrap();
        let s = snr_matrix(&model, &SymMatrix::from_diagonal(&[0.5])).unwrap();
        let ev = s.matrix.eigenvalues();
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12);
        assert!((ev[2] - 5.25 / 0.5).abs() < 1e-12);
        assert!(matches!(crlb(&s), Err(Error::SingularInformation { ref null_space, .. }) if null_space.len() == 2));
    }

    #[test]
    fn snr_requires_pd_noise() {
        let model = LinearModel::new(Matrix::identity(2, 2)).unwrap();
        assert!(matches!(
            snr_matrix(&model, &SymMatrix::from_diagonal(&[1.0, -1.0])),
            Err(Error::NotPd { .. })
        ));
    }

    #[test]
    fn total_information_adds_prior() {
        let snr = InfoMatrix::new(SymMatrix::from_diagonal(&[2.0, 3.0]), InfoKind::Snr).unwrap();
        let j = total_information(&snr, &SourcePrior::deterministic(2)).unwrap();
        assert_eq!(j.matrix, snr.matrix);
        let j = total_information(&snr, &SourcePrior::Gaussian(GaussianPrior::standard(2))).unwrap();
        assert!((j.matrix.as_matrix() - Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 4.0]))).amax() < 1e-15);
        let no_info = SourcePrior::sampler(NoInfo);
        assert_eq!(total_information(&snr, &no_info), Err(Error::NoPriorInfo));
    }

    #[derive(Debug)]
    struct NoInfo;
    impl PriorSampler for NoInfo {
        fn dim(&self) -> usize {
            2
        }
        fn sample(&self, _rng: &mut dyn rand::RngCore) -> crate::matrixkit::Vector {
            crate::matrixkit::Vector::zeros(2)
        }
    }

    #[test]
    fn crlb_identity_and_ml_efficiency() {
        let id = InfoMatrix::new(SymMatrix::identity(3), InfoKind::Total).unwrap();
        assert!((crlb(&id).unwrap().as_matrix() - Matrix::identity(3, 3)).amax() < 1e-15);

        let model = LinearModel::new(mat(3, 2, &[1.0, 0.3, -0.4, 1.0, 2.0, 0.1])).unwrap();
        let sigma = SymMatrix::from_rows(&[vec![1.0, 0.2, 0.0], vec![0.2, 2.0, 0.3], vec![0.0, 0.3, 0.5]]).unwrap();
        let bound = crlb(&snr_matrix(&model, &sigma).unwrap()).unwrap();
        let ec = crate::estimators::error_covariance(&model, &sigma).unwrap();
        assert!(frobenius_rel(bound.as_matrix(), ec.as_matrix()) < 1e-12);
    }

    #[test]
    fn prewhiten_identity_noise_is_passthrough() {
        let cross = mat(2, 1, &[0.3, -0.2]);
        let pair = ModalityPair::new(
            LinearModel::new(mat(2, 1, &[1.0, 2.0])).unwrap(),
            LinearModel::new(mat(1, 1, &[3.0])).unwrap(),
            BlockCovariance::new(SymMatrix::identity(2), SymMatrix::identity(1), cross.clone()).unwrap(),
        )
        .unwrap();
        let wp = prewhiten(&pair).unwrap();
        assert!((&wp.a_tilde - pair.first.mixing()).amax() < 1e-15);
        assert!((&wp.b_tilde - pair.second.mixing()).amax() < 1e-15);
        assert!((&wp.rho - &cross).amax() < 1e-15);
        assert!(!wp.near_singular);
    }

    fn scalar_pair(a: f64, b: f64, s1: f64, s2: f64, c: f64) -> ModalityPair {
        ModalityPair::new(
            LinearModel::new(mat(1, 1, &[a])).unwrap(),
            LinearModel::new(mat(1, 1, &[b])).unwrap(),
            BlockCovariance::new(
                SymMatrix::from_diagonal(&[s1]),
                SymMatrix::from_diagonal(&[s2]),
                mat(1, 1, &[c]),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uncorrelated_scalar_channels_add() {
        let pair = scalar_pair(2.0, 1.5, 0.5, 3.0, 0.0);
        let prior = SourcePrior::Gaussian(GaussianPrior::standard(1));
        let j = joint_information(&pair, &prior).unwrap();
        let expected = 4.0 / 0.5 + 2.25 / 3.0 + 1.0;
        assert!((j.info.matrix[(0, 0)] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn correlated_scalar_channels_match_two_by_two_inverse() {
        let (a, b, s1, s2, c) = (1.0, 2.0, 1.0, 2.0, 0.7);
        let pair = scalar_pair(a, b, s1, s2, c);
        let det = s1 * s2 - c * c;
        let expected = (a * a * s2 - 2.0 * a * b * c + b * b * s1) / det;
        let j = joint_information(&pair, &SourcePrior::deterministic(1)).unwrap();
        assert!((j.info.matrix[(0, 0)] - expected).abs() < 1e-12 * expected);
        assert!(j.residuals.max() < 1e-12);
    }

    #[test]
    fn redundant_second_modality_adds_nothing() {
        let sv = SymMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.6]]).unwrap();
        let su = SymMatrix::from_rows(&[vec![2.0, 0.1], vec![0.1, 1.0]]).unwrap();
        let svu = mat(2, 2, &[0.3, 0.1, -0.2, 0.25]);
        let a = mat(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let noise = BlockCovariance::new(sv.clone(), su, svu.clone()).unwrap();
        let b = svu.transpose() * spd_inverse(&sv, "sv").unwrap().as_matrix() * &a;
        let pair = ModalityPair::new(LinearModel::new(a.clone()).unwrap(), LinearModel::new(b).unwrap(), noise).unwrap();
        let j = joint_information(&pair, &SourcePrior::deterministic(2)).unwrap();
        let jx = snr_matrix(&pair.first, &sv).unwrap();
        assert!(frobenius_rel(j.info.matrix.as_matrix(), jx.matrix.as_matrix()) < 1e-12);
        let syn = synergy_matrices(&pair).unwrap();
        assert!(syn.s_x.norm() < 1e-10 * jx.matrix.norm());
        assert!(syn.min_eigenvalues.1 > 0.0);
    }

    #[test]
    fn synergy_without_cross_term() {
        let pair = ModalityPair::new(
            LinearModel::new(mat(2, 2, &[1.0, 0.0, 0.5, 1.0])).unwrap(),
            LinearModel::new(mat(1, 2, &[0.3, -1.0])).unwrap(),
            BlockCovariance::uncorrelated(SymMatrix::from_diagonal(&[1.0, 2.0]), SymMatrix::from_diagonal(&[0.5])).unwrap(),
        )
        .unwrap();
        let syn = synergy_matrices(&pair).unwrap();
        let b = pair.second.mixing();
        let expected = b.transpose() * b / 0.5;
        assert!((syn.s_x.as_matrix() - expected).amax() < 1e-14);
    }

    #[test]
    fn inadmissible_rho_detected() {
        let rho = Matrix::identity(2, 2);
        assert!(matches!(correlation_inverses(&rho), Err(Error::Inadmissible { .. })));
    }

    #[test]
    fn prior_information_mc_matches_closed_forms() {
        let cov = SymMatrix::from_rows(&[vec![2.0, 0.4], vec![0.4, 0.5]]).unwrap();
        let g = GaussianPrior::new(crate::matrixkit::Vector::zeros(2), cov).unwrap();
        let est = prior_information_mc(&GaussianSampler(g.clone()), 100_000, 3).unwrap();
        assert!(est.within_std_errs(g.info().as_matrix(), 3.0), "{est:?}");

        let est = prior_information_mc(&LaplaceSampler { dim: 1, scale: 0.5 }, 50_000, 8).unwrap();
        // |score| = 1/b for every draw
        assert!((est.j[(0, 0)] - 4.0).abs() < 1e-12);

        assert_eq!(prior_information_mc(&NoInfo, 10, 0), Err(Error::NoScore));
    }

    #[test]
    fn prior_information_scales_with_source_scaling() {
        let g1 = GaussianPrior::new(crate::matrixkit::Vector::zeros(1), SymMatrix::identity(1)).unwrap();
        let g2 = GaussianPrior::new(crate::matrixkit::Vector::zeros(1), SymMatrix::identity(1).scale(4.0)).unwrap();
        let e1 = prior_information_mc(&GaussianSampler(g1), 20_000, 1).unwrap();
        let e2 = prior_information_mc(&GaussianSampler(g2), 20_000, 1).unwrap();
        // same normal draws, s' = 2s
        assert!((e2.j[(0, 0)] - e1.j[(0, 0)] / 4.0).abs() < 1e-12);
    }
}
