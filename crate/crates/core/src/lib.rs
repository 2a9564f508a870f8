//! Estimation-theoretic analysis of multichannel and multimodal sensing.
//!
//! The crate covers the linear Gaussian model `x = A·s + v` and its
//! two-modality extension with correlated noises:
//!
//! - [`estimators`]: WLS, ML and Gaussian MMSE estimators with closed-form
//!   error covariances,
//! - [`information`]: SNR / Fisher information, CRLB, joint information of
//!   two modalities (cross-validated over four algebraic routes), synergic
//!   information and prewhitening,
//! - [`advisor`]: modality selection, fusion and redundancy verdicts,
//! - [`placement`]: optimal secondary sensor configuration under an SNR budget,
//! - [`nonlinear`]: Jacobian-based Fisher information for `x = h(s) + v`,
//! - [`harness`]: Monte-Carlo and finite-difference verification oracles.

pub mod advisor;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod information;
pub mod matrixkit;
pub mod model;
pub mod montecarlo;
pub mod nonlinear;
pub mod placement;
pub mod report;

pub use error::{Error, Result};
pub use matrixkit::{BlockCovariance, Matrix, SymMatrix, Vector};
pub use model::{LinearModel, ModalityPair, SourcePrior};
