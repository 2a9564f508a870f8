//! Modality selection, fusion and redundancy decisions for a sensor pair.
//!
//! Working in prewhitened coordinates (`Ã`, `B̃`, `ρ`):
//!
//! - `ÃᵀÃ ≻ B̃ᵀB̃` means the first modality alone gives a smaller MMSE on
//!   every source entry; an indefinite difference means neither dominates.
//! - `B̃ = ρᵀÃ` makes the second modality redundant, `Ã = ρB̃` the first.
//! - `ρ = 0` makes the two informations additive; `σ_max(ρ) → 1` lets the
//!   joint information grow without bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::information::{
    joint_information, prewhiten, sigma_max, snr_matrix, synergy_matrices, InfoMatrix, WhitenedPair,
};
use crate::matrixkit::{SymMatrix, PSD_TOL};
use crate::model::{ModalityPair, SourcePrior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dominance {
    FirstDominates,
    SecondDominates,
    NoDominance,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceCheck {
    pub verdict: Dominance,
    pub min_eig_diff: f64,
    pub max_eig_diff: f64,
    pub diff_norm: f64,
}

/// PSD ordering of two SNR matrices via the eigenvalues of `snr₁ − snr₂`.
pub fn compare_modalities(snr1: &InfoMatrix, snr2: &InfoMatrix, tol: f64) -> Result<DominanceCheck> {
    if snr1.dim() != snr2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "SNR matrices are {}x{} and {}x{}",
            snr1.dim(),
            snr1.dim(),
            snr2.dim(),
            snr2.dim()
        )));
    }
    let diff = snr1.matrix.sub(&snr2.matrix);
    let ev = diff.eigenvalues();
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let diff_norm = diff.norm();
    let verdict = if diff_norm <= tol {
        Dominance::Tie
    } else if lo > tol {
        Dominance::FirstDominates
    } else if hi < -tol {
        Dominance::SecondDominates
    } else {
        Dominance::NoDominance
    };
    Ok(DominanceCheck {
        verdict,
        min_eig_diff: lo,
        max_eig_diff: hi,
        diff_norm,
    })
}

/// Default dominance tolerance `1e-9·(1 + ‖snr₁‖₂ + ‖snr₂‖₂)`.
pub fn default_dominance_tol(snr1: &InfoMatrix, snr2: &InfoMatrix) -> f64 {
    1e-9 * (1.0 + snr1.matrix.spectral_norm() + snr2.matrix.spectral_norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Redundancy {
    None,
    SecondRedundant,
    FirstRedundant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RedundancyCheck {
    pub status: Redundancy,
    /// `‖Ã − ρB̃‖_F / (1 + ‖Ã‖_F)`
    pub r1: f64,
    /// `‖B̃ − ρᵀÃ‖_F / (1 + ‖B̃‖_F)`
    pub r2: f64,
    /// `‖S‖_F / ‖J‖_F` for the flagged modality, when one is flagged and the
    /// synergy could be evaluated.
    pub synergy_ratio: Option<f64>,
    pub cross_check_passed: bool,
}

pub fn detect_redundancy(wp: &WhitenedPair, tol: f64) -> RedundancyCheck {
    let a = &wp.a_tilde;
    let b = &wp.b_tilde;
    let rho = &wp.rho;
    let r1 = (a - rho * b).norm() / (1.0 + a.norm());
    let r2 = (b - rho.transpose() * a).norm() / (1.0 + b.norm());
    let status = if r2 <= tol {
        Redundancy::SecondRedundant
    } else if r1 <= tol {
        Redundancy::FirstRedundant
    } else {
        Redundancy::None
    };

    let synergy_ratio = match status {
        Redundancy::None => None,
        _ => wp.as_pair().and_then(|p| synergy_matrices(&p)).ok().map(|syn| {
            // second redundant: adding y to x gains S_x ≈ 0, relative to J_x = ÃᵀÃ
            let (s, single) = match status {
                Redundancy::SecondRedundant => (syn.s_x, a.transpose() * a),
                _ => (syn.s_y, b.transpose() * b),
            };
            s.norm() / single.norm().max(f64::MIN_POSITIVE)
        }),
    };
    let cross_check_passed = match status {
        Redundancy::None => true,
        _ => synergy_ratio.is_some_and(|r| r <= tol),
    };
    RedundancyCheck {
        status,
        r1,
        r2,
        synergy_ratio,
        cross_check_passed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Uncorrelated,
    Partial,
    NearSingular,
}

pub fn classify_regime(rho: &crate::matrixkit::Matrix, eps: f64) -> Result<Regime> {
    let sigma_max = sigma_max(rho);
    if sigma_max >= 1.0 {
        return Err(Error::Inadmissible { sigma_max });
    }
    Ok(if rho.norm() <= eps {
        Regime::Uncorrelated
    } else if sigma_max >= 1.0 - eps {
        Regime::NearSingular
    } else {
        Regime::Partial
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdvisorTolerances {
    /// `None` selects [`default_dominance_tol`].
    pub dominance: Option<f64>,
    pub redundancy: f64,
    pub regime_eps: f64,
}

impl Default for AdvisorTolerances {
    fn default() -> Self {
        Self {
            dominance: None,
            redundancy: 1e-8,
            regime_eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    SelectFirst,
    SelectSecond,
    Fuse,
    FirstRedundant,
    SecondRedundant,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    First,
    Second,
}

/// Every quantity the verdict is derived from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub min_eig_diff: f64,
    pub max_eig_diff: f64,
    pub dominance: Dominance,
    pub dominance_tol: f64,
    pub r1: f64,
    pub r2: f64,
    pub redundancy: Redundancy,
    pub redundancy_tol: f64,
    pub redundancy_cross_check: bool,
    pub sigma_max_rho: f64,
    pub regime_eps: f64,
    #[serde(rename = "trace_J_joint")]
    pub trace_j_joint: f64,
    pub trace_snr1: f64,
    pub trace_snr2: f64,
    /// `‖S_x‖_F / ‖J_{x,y}‖_F`: gain from adding the second modality.
    pub synergy_gain_second: f64,
    /// `‖S_y‖_F / ‖J_{x,y}‖_F`: gain from adding the first modality.
    pub synergy_gain_first: f64,
    pub synergy_min_eigs: (f64, f64),
    pub route_residual_max: f64,
    pub weaker_by_trace: Option<Modality>,
    pub weaker_by_psd: Option<Modality>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Advisory {
    pub verdict: Verdict,
    pub regime: Regime,
    pub evidence: Evidence,
    pub notes: Vec<String>,
    /// Set when the modalities have different channel counts; redundancy
    /// theory for that case is incomplete and the flags are indicative only.
    pub unequal_lengths_caveat: bool,
}

/// Re-derives the verdict from an evidence record alone.
pub fn verdict_from_evidence(ev: &Evidence) -> Verdict {
    match ev.redundancy {
        Redundancy::SecondRedundant => Verdict::SecondRedundant,
        Redundancy::FirstRedundant => Verdict::FirstRedundant,
        Redundancy::None => {
            let from_second = ev.synergy_gain_second > ev.redundancy_tol;
            let from_first = ev.synergy_gain_first > ev.redundancy_tol;
            match (from_first, from_second) {
                (true, true) => Verdict::Fuse,
                (false, true) => Verdict::SelectSecond,
                (true, false) => Verdict::SelectFirst,
                (false, false) => Verdict::Tie,
            }
        }
    }
}

/// Runs dominance, redundancy and regime checks plus the joint information
/// and folds them into one verdict.
pub fn advise(pair: &ModalityPair, prior: &SourcePrior, tols: &AdvisorTolerances) -> Result<Advisory> {
    let wp = prewhiten(pair)?;
    let regime = classify_regime(&wp.rho, tols.regime_eps)?;
    let snr1 = snr_matrix(&pair.first, pair.noise.sigma_v())?;
    let snr2 = snr_matrix(&pair.second, pair.noise.sigma_u())?;
    let dominance_tol = tols.dominance.unwrap_or_else(|| default_dominance_tol(&snr1, &snr2));
    let dominance = compare_modalities(&snr1, &snr2, dominance_tol)?;
    let redundancy = detect_redundancy(&wp, tols.redundancy);
    let joint = joint_information(pair, prior)?;
    let synergy = synergy_matrices(pair)?;

    let joint_norm = joint.info.matrix.norm().max(f64::MIN_POSITIVE);
    let (t1, t2) = (snr1.trace(), snr2.trace());
    let weaker_by_trace = if t1 < t2 {
        Some(Modality::First)
    } else if t2 < t1 {
        Some(Modality::Second)
    } else {
        None
    };
    let weaker_by_psd = match dominance.verdict {
        Dominance::FirstDominates => Some(Modality::Second),
        Dominance::SecondDominates => Some(Modality::First),
        _ => None,
    };

    let evidence = Evidence {
        min_eig_diff: dominance.min_eig_diff,
        max_eig_diff: dominance.max_eig_diff,
        dominance: dominance.verdict,
        dominance_tol,
        r1: redundancy.r1,
        r2: redundancy.r2,
        redundancy: redundancy.status,
        redundancy_tol: tols.redundancy,
        redundancy_cross_check: redundancy.cross_check_passed,
        sigma_max_rho: wp.sigma_max_rho,
        regime_eps: tols.regime_eps,
        trace_j_joint: joint.info.trace(),
        trace_snr1: t1,
        trace_snr2: t2,
        synergy_gain_second: synergy.s_x.norm() / joint_norm,
        synergy_gain_first: synergy.s_y.norm() / joint_norm,
        synergy_min_eigs: synergy.min_eigenvalues,
        route_residual_max: joint.residuals.max(),
        weaker_by_trace,
        weaker_by_psd,
    };
    let verdict = verdict_from_evidence(&evidence);

    let mut notes = Vec::new();
    match dominance.verdict {
        Dominance::FirstDominates => notes.push("first dominates individually".to_string()),
        Dominance::SecondDominates => notes.push("second dominates individually".to_string()),
        Dominance::NoDominance => {
            notes.push("no individual dominance: each modality is better for some source entries".to_string())
        }
        Dominance::Tie => notes.push("modalities have equal SNR matrices".to_string()),
    }
    if verdict == Verdict::Fuse && synergy.s_x.min_eigenvalue() > PSD_TOL && synergy.s_y.min_eigenvalue() > PSD_TOL {
        notes.push("fusion strictly better than either modality".to_string());
    }
    match regime {
        Regime::Uncorrelated => notes.push("uncorrelated noises: informations are additive".to_string()),
        Regime::NearSingular => {
            notes.push("noises nearly fully correlated: joint information may be very large".to_string())
        }
        Regime::Partial => {}
    }
    if joint.near_singular {
        notes.push("rho is near-singular; joint information is ill-conditioned".to_string());
    }
    if !redundancy.cross_check_passed {
        notes.push("redundancy flag not confirmed by synergy magnitude".to_string());
    }
    if let (Redundancy::SecondRedundant, Some(Modality::First)) | (Redundancy::FirstRedundant, Some(Modality::Second)) =
        (redundancy.status, weaker_by_trace)
    {
        notes.push("redundant modality is the stronger one by trace".to_string());
    }

    Ok(Advisory {
        verdict,
        regime,
        evidence,
        notes,
        unequal_lengths_caveat: pair.first.n() != pair.second.n(),
    })
}

/// Convenience for tests and reports: compare two raw SNR matrices.
pub fn compare_raw(snr1: &SymMatrix, snr2: &SymMatrix, tol: f64) -> Result<DominanceCheck> {
    use crate::information::InfoKind;
    compare_modalities(
        &InfoMatrix::new(snr1.clone(), InfoKind::Snr)?,
        &InfoMatrix::new(snr2.clone(), InfoKind::Snr)?,
        tol,
    )
}
