use fusionkit::advisor::advise;
use fusionkit::estimators::Method;
use fusionkit::harness::{empirical_error_covariance, write_campaign_csv, CampaignRow};
use fusionkit::information::{
    crlb, joint_information, prewhiten, snr_condition, snr_matrix, synergy_matrices, total_information, InfoKind,
    InfoMatrix,
};
use fusionkit::matrixkit::matrix_rows;
use fusionkit::model::DiagnosticCode;
use fusionkit::montecarlo::McInfoEstimate;
use fusionkit::nonlinear::{fisher_nonlinear, joint_information_nonlinear};
use fusionkit::placement::{optimal_secondary, probe_local_optimality};
use fusionkit::{Error, SymMatrix};
use serde_json::{json, Value};

use crate::failure::{CliError, Context};
use crate::scenario::{MapKind, Modality, Scenario};

/// What a command produced: the JSON report, an optional CSV table, and a
/// short human-readable summary.
pub struct Output {
    pub json: Value,
    pub csv: Option<String>,
    pub summary: String,
}

fn sym(m: &SymMatrix) -> Value {
    json!(matrix_rows(m.as_matrix()))
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn mc_block(est: &McInfoEstimate) -> Value {
    json!({ "std_err": sym(&est.std_err), "N": est.samples, "seed": est.seed })
}

fn require_linear(m: &Modality, command: &str) -> Result<(), CliError> {
    if m.map == MapKind::Linear {
        Ok(())
    } else {
        Err(CliError::Scenario(format!(
            "{command} supports linear modalities only; {:?} uses map {:?}",
            m.name, m.map
        )))
    }
}

pub fn analyze_modality(sc: &Scenario, name: &str) -> Result<Output, CliError> {
    let m = sc.modality(name)?;
    if let Some(d) = m.validation.diagnostics.iter().find(|d| d.code == DiagnosticCode::SingularFisher) {
        return Err(CliError::Scenario(format!("modality {name:?}: {}", d.message)));
    }
    let (snr, total, mc) = if m.map == MapKind::Linear {
        let snr = snr_matrix(&m.model, &m.noise).context("snr_matrix")?;
        let total = total_information(&snr, &sc.prior).context("total_information")?;
        (snr, total, Value::Null)
    } else {
        let nl = m.nonlinear();
        let est = fisher_nonlinear(&nl, &m.noise, &sc.prior, sc.mc.samples, sc.mc.seed).context("fisher_nonlinear")?;
        let js = sc.prior.information().context("prior information")?;
        let snr = InfoMatrix::new(est.j.clone(), InfoKind::FisherConditional).context("fisher_nonlinear")?;
        let total = InfoMatrix::new(est.j.add(&js), InfoKind::Total).context("total_information_nonlinear")?;
        (snr, total, mc_block(&est))
    };
    let bound = crlb(&total).context("crlb")?;
    let condition = snr_condition(&snr);
    let json = json!({
        "scenario": sc.id,
        "command": "analyze",
        "modality": name,
        "map": m.map,
        "diagnostics": m.validation.diagnostics,
        "snr": sym(&snr.matrix),
        "snr_condition": if condition.is_finite() { json!(condition) } else { Value::Null },
        "J": sym(&total.matrix),
        "crlb": sym(&bound),
        "mc": mc,
    });
    let summary = format!(
        "{}: modality {name}: tr(snr) = {:.6e}, tr(J) = {:.6e}, tr(CRLB) = {:.6e}",
        sc.id,
        snr.trace(),
        total.trace(),
        bound.trace()
    );
    Ok(Output { json, csv: None, summary })
}

pub fn analyze_joint(sc: &Scenario, first: &str, second: &str) -> Result<Output, CliError> {
    let (a, b) = (sc.modality(first)?, sc.modality(second)?);
    let pair = sc.pair(first, second)?;
    let diagnostics = json!({ first: a.validation.diagnostics, second: b.validation.diagnostics });

    let json = if a.map == MapKind::Linear && b.map == MapKind::Linear {
        let snr1 = snr_matrix(&a.model, &a.noise).context("snr_matrix")?;
        let snr2 = snr_matrix(&b.model, &b.noise).context("snr_matrix")?;
        let joint = joint_information(&pair, &sc.prior).context("joint_information")?;
        let syn = synergy_matrices(&pair).context("synergy_matrices")?;
        let bound = crlb(&joint.info).context("crlb")?;
        json!({
            "scenario": sc.id,
            "command": "analyze",
            "pair": [first, second],
            "diagnostics": diagnostics,
            "snr_first": sym(&snr1.matrix),
            "snr_second": sym(&snr2.matrix),
            "J": sym(&joint.info.matrix),
            "crlb": sym(&bound),
            "S_x": sym(&syn.s_x),
            "S_y": sym(&syn.s_y),
            "synergy_min_eigenvalues": [syn.min_eigenvalues.0, syn.min_eigenvalues.1],
            "route_residuals": joint.residuals,
            "sigma_max_rho": joint.sigma_max_rho,
            "near_singular": joint.near_singular,
            "mc": Value::Null,
        })
    } else {
        let (ha, hb) = (a.nonlinear(), b.nonlinear());
        let (n, seed) = (sc.mc.samples, sc.mc.seed);
        let js = sc.prior.information().context("prior information")?;
        let fa = fisher_nonlinear(&ha, &a.noise, &sc.prior, n, seed).context("fisher_nonlinear")?;
        let fb = fisher_nonlinear(&hb, &b.noise, &sc.prior, n, seed).context("fisher_nonlinear")?;
        let joint =
            joint_information_nonlinear(&ha, &hb, &pair.noise, &sc.prior, n, seed).context("joint_information_nonlinear")?;
        let s_x = joint.j.sub(&fa.j);
        let s_y = joint.j.sub(&fb.j);
        let total = InfoMatrix::new(joint.j.add(&js), InfoKind::Joint).context("joint_information_nonlinear")?;
        let bound = crlb(&total).context("crlb")?;
        let wp = prewhiten(&pair).context("prewhiten")?;
        json!({
            "scenario": sc.id,
            "command": "analyze",
            "pair": [first, second],
            "diagnostics": diagnostics,
            "snr_first": sym(&fa.j),
            "snr_second": sym(&fb.j),
            "J": sym(&total.matrix),
            "crlb": sym(&bound),
            "S_x": sym(&s_x),
            "S_y": sym(&s_y),
            "synergy_min_eigenvalues": [s_x.min_eigenvalue(), s_y.min_eigenvalue()],
            "route_residuals": Value::Null,
            "sigma_max_rho": wp.sigma_max_rho,
            "near_singular": wp.near_singular,
            "mc": {
                "N": n,
                "seed": seed,
                "std_err_first": sym(&fa.std_err),
                "std_err_second": sym(&fb.std_err),
                "std_err_joint": sym(&joint.std_err),
            },
        })
    };
    let summary = format!(
        "{}: joint {first}+{second}: sigma_max(rho) = {:.6}, min eig S_x = {:.3e}, min eig S_y = {:.3e}",
        sc.id,
        num(&json["sigma_max_rho"]),
        num(&json["synergy_min_eigenvalues"][0]),
        num(&json["synergy_min_eigenvalues"][1])
    );
    Ok(Output { json, csv: None, summary })
}

pub fn advise_pair(sc: &Scenario, first: &str, second: &str) -> Result<Output, CliError> {
    require_linear(sc.modality(first)?, "advise")?;
    require_linear(sc.modality(second)?, "advise")?;
    let pair = sc.pair(first, second)?;
    let advisory = advise(&pair, &sc.prior, &sc.tolerances).context("advise")?;
    let summary = format!(
        "{}: {first} vs {second}: verdict {:?}, regime {:?}",
        sc.id, advisory.verdict, advisory.regime
    );
    let mut json = serde_json::to_value(&advisory).map_err(|e| CliError::Numerical(e.to_string()))?;
    json["scenario"] = json!(sc.id);
    json["command"] = json!("advise");
    json["pair"] = json!([first, second]);
    Ok(Output { json, csv: None, summary })
}

pub fn place(sc: &Scenario, primary: &str, secondary: &str, budget: f64) -> Result<Output, CliError> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(CliError::Usage(format!("--budget must be a positive number, got {budget}")));
    }
    require_linear(sc.modality(primary)?, "place")?;
    let pair = sc.pair(primary, secondary)?;
    let wp = prewhiten(&pair).context("prewhiten")?;
    let base = json!({
        "scenario": sc.id,
        "command": "place",
        "primary": primary,
        "secondary": secondary,
        "p": budget,
        "sigma_max_rho": wp.sigma_max_rho,
    });
    let mut json = base;
    let summary = match optimal_secondary(&wp.a_tilde, &wp.rho, budget) {
        Ok(sol) => {
            let probe = probe_local_optimality(&wp.a_tilde, &wp.rho, &sol, 200, 1e-3, sc.mc.seed)
                .context("local optimality probe")?;
            json["B_star"] = json!(matrix_rows(&sol.b_star));
            json["B"] = json!(matrix_rows(&sol.unwhiten(&wp.l_u)));
            json["lambda"] = json!(sol.lambda);
            json["objective"] = json!(sol.objective_e);
            json["kkt_residual"] = json!(sol.kkt_residual);
            json["constraint_residual"] = json!(sol.constraint_residual);
            json["constraint_active"] = json!(sol.constraint_active);
            json["degenerate"] = json!(false);
            json["local_optimality_probe"] = json!({
                "trials": probe.trials,
                "violations": probe.violations,
                "worst_gain": probe.worst_gain,
            });
            format!(
                "{}: place {secondary} against {primary}: lambda = {:.6e}, objective = {:.6e}, kkt = {:.2e}, probe violations {}/{}",
                sc.id, sol.lambda, sol.objective_e, sol.kkt_residual, probe.violations, probe.trials
            )
        }
        Err(Error::Degenerate(explanation)) => {
            let objective = (wp.a_tilde.transpose() * &wp.a_tilde).trace() + budget;
            json["B_star"] = Value::Null;
            json["lambda"] = Value::Null;
            json["objective"] = json!(objective);
            json["kkt_residual"] = Value::Null;
            json["degenerate"] = json!(true);
            json["explanation"] = json!(explanation);
            format!("{}: place {secondary} against {primary}: degenerate ({explanation})", sc.id)
        }
        Err(e) => return Err(CliError::from_library("optimal_secondary", e)),
    };
    Ok(Output { json, csv: None, summary })
}

pub fn simulate(sc: &Scenario, name: &str, method: Method, samples: usize, seed: u64) -> Result<Output, CliError> {
    let m = sc.modality(name)?;
    require_linear(m, "simulate")?;
    let result = empirical_error_covariance(method, &m.model, &sc.prior, &m.noise, samples, seed).context("simulate")?;
    let mut csv = Vec::new();
    write_campaign_csv(&[CampaignRow::new(&sc.id, &result)], &mut csv).context("csv report")?;
    let summary = format!(
        "{}: simulate {name} ({method:?}, N = {samples}, seed = {seed}): rel err {:.4}, CRLB min eig {:.3e} (slack {:.3e}) {}",
        sc.id,
        result.frobenius_rel_err,
        result.crlb_check.min_eig,
        result.crlb_check.slack,
        if result.crlb_check.passed { "passed" } else { "FAILED" }
    );
    let mut json = serde_json::to_value(&result).map_err(|e| CliError::Numerical(e.to_string()))?;
    json["scenario"] = json!(sc.id);
    json["command"] = json!("simulate");
    json["modality"] = json!(name);
    Ok(Output {
        json,
        csv: Some(String::from_utf8(csv).expect("csv writer emits UTF-8")),
        summary,
    })
}
