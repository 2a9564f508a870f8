//! Optimal secondary sensor configuration in whitened coordinates.
//!
//! Given a fixed primary group `x̃ = Ãs + ṽ` and the noise cross-correlation
//! `ρ`, the secondary mixing `B̃` is chosen to make `e = Tr(J_{x,y})`
//! stationary under the budget `Tr(B̃ᵀB̃) = p`:
//!
//! ```text
//! B̃* = [I − λ(I − ρᵀρ)]⁻¹ ρᵀÃ,   Σᵢ dᵢᵢσᵢ² / [1 − λ(1 − σᵢ²)]² = p
//! ```
//!
//! with `σᵢ` the singular values of `ρ = UΣVᵀ` and `dᵢᵢ` the diagonal of
//! `UᵀÃÃᵀU`. The multiplier is taken on the branch containing `λ = 0` where
//! every denominator with nonzero weight `dᵢᵢσᵢ²` stays positive.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::information::{correlation_inverses, whitened_forms_with};
use crate::matrixkit::{Matrix, SymMatrix};
use crate::montecarlo::block_rng;
use crate::report::{mat_rows, opt_mat_rows};

/// Singular values of `ρ` at or above `1 − UNIT_GAP` count as one.
pub const UNIT_GAP: f64 = 1e-12;

/// Thin SVD of `ρ` with the weights `dᵢᵢ = (UᵀÃÃᵀU)ᵢᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvdOfRho {
    #[serde(serialize_with = "mat_rows")]
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    #[serde(serialize_with = "mat_rows")]
    pub v: Matrix,
    pub d: Vec<f64>,
}

impl SvdOfRho {
    pub fn new(a_tilde: &Matrix, rho: &Matrix) -> Result<Self> {
        if a_tilde.nrows() != rho.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "Ã has {} rows, ρ has {}",
                a_tilde.nrows(),
                rho.nrows()
            )));
        }
        let svd = rho.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v = svd.v_t.expect("requested Vᵀ").transpose();
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = Matrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
        let v = Matrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
        let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let d = (0..order.len())
            .map(|i| (a_tilde.transpose() * u.column(i)).norm_squared())
            .collect();
        Ok(Self {
            u,
            singular_values,
            v,
            d,
        })
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Left side of the budget equation at multiplier `lambda`.
    pub fn budget_lhs(&self, lambda: f64) -> f64 {
        self.terms()
            .map(|(w, s2)| {
                let den = 1.0 - lambda * (1.0 - s2);
                w / (den * den)
            })
            .sum()
    }

    fn budget_slope(&self, lambda: f64) -> f64 {
        self.terms()
            .map(|(w, s2)| {
                let den = 1.0 - lambda * (1.0 - s2);
                2.0 * w * (1.0 - s2) / (den * den * den)
            })
            .sum()
    }

    /// Whether term `i` carries weight in the budget equation.
    ///
    /// Terms whose weight `dᵢᵢσᵢ²` is negligible next to the total are
    /// dropped: their denominators never affect `B̃*`, since the matching
    /// numerator vanishes.
    fn weighted(&self) -> Vec<bool> {
        let w: Vec<f64> = self.d.iter().zip(&self.singular_values).map(|(d, s)| d * s * s).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|&wi| wi > 1e-14 * total).collect()
    }

    /// `(dᵢᵢσᵢ², σᵢ²)` for the weighted terms.
    fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weighted()
            .into_iter()
            .zip(self.d.iter().zip(&self.singular_values))
            .filter(|(keep, _)| *keep)
            .map(|(_, (d, s))| (d * s * s, s * s))
    }

    /// First zero of a weighted denominator on `λ > 0`, or `None` if every
    /// weighted term has unit singular value and the left side is constant.
    fn first_pole(&self) -> Option<f64> {
        self.terms()
            .filter(|(_, s2)| *s2 < 1.0 - UNIT_GAP)
            .map(|(_, s2)| 1.0 / (1.0 - s2))
            .reduce(f64::min)
    }

    /// `B̃* = [I − λ(I − ρᵀρ)]⁻¹ρᵀÃ`, applied in the singular basis of `ρ`.
    pub fn secondary(&self, a_tilde: &Matrix, lambda: f64) -> Matrix {
        let mut b = Matrix::zeros(self.v.nrows(), a_tilde.ncols());
        for (i, keep) in self.weighted().into_iter().enumerate() {
            if keep {
                let s = self.singular_values[i];
                let gain = s / (1.0 - lambda * (1.0 - s * s));
                b += self.v.column(i) * (self.u.column(i).transpose() * a_tilde) * gain;
            }
        }
        b
    }
}

/// Multiplier `λ ≥ 0` solving the budget equation for budget `p`.
///
/// The root is bracketed on a grid that approaches the first pole
/// geometrically and then refined by Newton steps safeguarded with bisection.
pub fn lambda_root(svd: &SvdOfRho, p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidInput(format!("budget must be positive, got {p}")));
    }
    if svd.sigma_max() == 0.0 {
        return Err(Error::Degenerate("rho = 0: the budget equation has no positive terms".into()));
    }
    let Some(pole) = svd.first_pole() else {
        return Err(Error::DegenerateBudget);
    };
    let tol = 1e-10 * p;
    let f0 = svd.budget_lhs(0.0);
    if (f0 - p).abs() <= 1e-13 * p {
        return Ok(0.0);
    }
    // On [0, pole) the left side rises from f0 to +∞.
    if p < f0 {
        return Err(Error::NoRoot {
            budget: p,
            min_budget: f0,
            max_budget: f64::INFINITY,
        });
    }

    let mut lo = 0.0;
    let mut hi = pole;
    for k in 1..=1074 {
        let lam = pole * (1.0 - 0.5_f64.powi(k));
        if lam >= pole {
            break;
        }
        if svd.budget_lhs(lam) >= p {
            hi = lam;
            break;
        }
        lo = lam;
    }

    let mut lam = hi;
    for _ in 0..500 {
        let f = svd.budget_lhs(lam) - p;
        if f.abs() <= 1e-3 * tol {
            return Ok(lam);
        }
        if f > 0.0 {
            hi = lam;
        } else {
            lo = lam;
        }
        let step = f / svd.budget_slope(lam);
        let newton = lam - step;
        lam = if newton > lo && newton < hi && step.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let residual = (svd.budget_lhs(lam) - p).abs();
    if residual <= tol {
        Ok(lam)
    } else {
        Err(Error::Consistency(format!(
            "multiplier search stalled at λ = {lam:.17e} with residual {residual:.3e}"
        )))
    }
}

/// `Tr(J_{x,y})` for whitened mixings, plus `Tr(J_s)` when a prior is given.
pub fn synergy_objective(a_tilde: &Matrix, b_tilde: &Matrix, rho: &Matrix, prior_info: Option<&SymMatrix>) -> Result<f64> {
    check_whitened_dims(a_tilde, b_tilde, rho)?;
    let (k_right, k_left) = correlation_inverses(rho)?;
    let (form1, _) = whitened_forms_with(a_tilde, b_tilde, rho, &k_right, &k_left);
    Ok(form1.trace() + prior_info.map_or(0.0, |j| j.trace()))
}

fn check_whitened_dims(a_tilde: &Matrix, b_tilde: &Matrix, rho: &Matrix) -> Result<()> {
    if rho.nrows() != a_tilde.nrows() || rho.ncols() != b_tilde.nrows() || a_tilde.ncols() != b_tilde.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Ã is {}x{}, B̃ is {}x{}, ρ is {}x{}",
            a_tilde.nrows(),
            a_tilde.ncols(),
            b_tilde.nrows(),
            b_tilde.ncols(),
            rho.nrows(),
            rho.ncols()
        )));
    }
    Ok(())
}

/// `∂e/∂ρ` (n₁ × n₂), evaluated in both closed forms.
///
/// The second form is naturally the derivative with respect to `ρᵀ`; it is
/// transposed before the comparison.
pub fn synergy_gradient_rho(a_tilde: &Matrix, b_tilde: &Matrix, rho: &Matrix) -> Result<Matrix> {
    check_whitened_dims(a_tilde, b_tilde, rho)?;
    let (k_right, k_left) = correlation_inverses(rho)?;
    let (kr, kl) = (k_right.as_matrix(), k_left.as_matrix());
    let at = a_tilde.transpose();
    let bt = b_tilde.transpose();

    let m1 = &at * rho - &bt;
    let g1 = (a_tilde + rho * kr * m1.transpose()) * &m1 * kr * 2.0;

    let m2 = &bt * rho.transpose() - &at;
    let g2 = (b_tilde + rho.transpose() * kl * m2.transpose()) * &m2 * kl * 2.0;

    let residual = (&g1 - g2.transpose()).norm() / g1.norm().max(1.0);
    if residual > 1e-8 {
        return Err(Error::FormDisagreement { residual });
    }
    Ok(g1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementSolution {
    #[serde(rename = "B_star", serialize_with = "mat_rows")]
    pub b_star: Matrix,
    pub lambda: f64,
    #[serde(rename = "p")]
    pub budget_p: f64,
    #[serde(rename = "objective")]
    pub objective_e: f64,
    pub kkt_residual: f64,
    /// `|Tr(B̃*ᵀB̃*) − p|`
    pub constraint_residual: f64,
    /// `false` for the `ρᵀρ = I` corner, where the budget is not binding.
    pub constraint_active: bool,
    /// Always `false` for a returned solution; the `ρ = 0` case is an error.
    pub degenerate: bool,
}

impl PlacementSolution {
    /// Maps `B̃*` back to sensor coordinates, `B = L_u·B̃*`.
    pub fn unwhiten(&self, l_u: &SymMatrix) -> Matrix {
        l_u.as_matrix() * &self.b_star
    }
}

fn is_unit_rho(svd: &SvdOfRho, rho: &Matrix) -> bool {
    rho.ncols() <= rho.nrows()
        && svd.singular_values.len() == rho.ncols()
        && svd.singular_values.iter().all(|&s| (s - 1.0).abs() <= UNIT_GAP)
}

/// Stationary secondary configuration for budget `p`.
pub fn optimal_secondary(a_tilde: &Matrix, rho: &Matrix, p: f64) -> Result<PlacementSolution> {
    let svd = SvdOfRho::new(a_tilde, rho)?;
    let base = (a_tilde.transpose() * a_tilde).trace();

    if is_unit_rho(&svd, rho) {
        // Redundancy corner: the multiplier vanishes and the budget is moot.
        let b_star = rho.transpose() * a_tilde;
        return Ok(PlacementSolution {
            constraint_residual: ((b_star.transpose() * &b_star).trace() - p).abs(),
            b_star,
            lambda: 0.0,
            budget_p: p,
            objective_e: base,
            kkt_residual: 0.0,
            constraint_active: false,
            degenerate: false,
        });
    }
    let sigma_max = svd.sigma_max();
    if sigma_max >= 1.0 {
        return Err(Error::Inadmissible { sigma_max });
    }
    if sigma_max == 0.0 {
        return Err(Error::Degenerate(format!(
            "rho = 0: the stationarity formula gives B = 0, but every B with Tr(BᵀB) = p attains e = Tr(ÃᵀÃ) + p = {}",
            base + p
        )));
    }

    let lambda = lambda_root(&svd, p)?;
    let b_star = svd.secondary(a_tilde, lambda);
    let objective_e = synergy_objective(a_tilde, &b_star, rho, None)?;
    let grad = lagrangian_gradient_fd(a_tilde, &b_star, rho, lambda)?;
    Ok(PlacementSolution {
        constraint_residual: ((b_star.transpose() * &b_star).trace() - p).abs(),
        kkt_residual: grad.norm() / (1.0 + objective_e.abs()),
        b_star,
        lambda,
        budget_p: p,
        objective_e,
        constraint_active: true,
        degenerate: false,
    })
}

/// Central-difference gradient of `e(B̃) − λ·Tr(B̃ᵀB̃)` with respect to `B̃`.
pub fn lagrangian_gradient_fd(a_tilde: &Matrix, b_tilde: &Matrix, rho: &Matrix, lambda: f64) -> Result<Matrix> {
    let lagrangian =
        |b: &Matrix| synergy_objective(a_tilde, b, rho, None).map(|e| e - lambda * (b.transpose() * b).trace());
    let mut grad = Matrix::zeros(b_tilde.nrows(), b_tilde.ncols());
    for i in 0..b_tilde.nrows() {
        for j in 0..b_tilde.ncols() {
            let h = 1e-5 * (1.0 + b_tilde[(i, j)].abs());
            let mut plus = b_tilde.clone();
            plus[(i, j)] += h;
            let mut minus = b_tilde.clone();
            minus[(i, j)] -= h;
            grad[(i, j)] = (lagrangian(&plus)? - lagrangian(&minus)?) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Outcome of random feasible perturbations around a placement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub trials: usize,
    /// Perturbations that increased the objective by more than 1e-8.
    pub violations: usize,
    /// Largest `e(perturbed) − e(B̃*)` observed.
    pub worst_gain: f64,
    #[serde(serialize_with = "opt_mat_rows")]
    pub worst_direction: Option<Matrix>,
}

/// Tests local optimality of `B̃*` against `trials` random perturbations of
/// Frobenius size `radius`, each rescaled back onto the budget sphere.
pub fn probe_local_optimality(
    a_tilde: &Matrix,
    rho: &Matrix,
    solution: &PlacementSolution,
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<ProbeReport> {
    let b = &solution.b_star;
    let target = solution.budget_p.sqrt();
    let gains: Vec<Result<(f64, Matrix)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = block_rng(seed, t);
            let delta = Matrix::from_fn(b.nrows(), b.ncols(), |_, _| StandardNormal.sample(&mut rng));
            let scale = radius / delta.norm();
            let delta = delta * scale;
            let mut perturbed = b + &delta;
            perturbed *= target / perturbed.norm();
            let e = synergy_objective(a_tilde, &perturbed, rho, None)?;
            Ok((e - solution.objective_e, delta))
        })
        .collect();

    let mut report = ProbeReport {
        trials,
        violations: 0,
        worst_gain: f64::NEG_INFINITY,
        worst_direction: None,
    };
    for g in gains {
        let (gain, delta) = g?;
        if gain > 1e-8 {
            report.violations += 1;
        }
        if gain > report.worst_gain {
            report.worst_gain = gain;
            report.worst_direction = Some(delta);
        }
    }
    Ok(report)
}
