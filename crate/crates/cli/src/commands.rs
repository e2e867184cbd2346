//! The three subcommands, each producing a serializable report.

use std::path::Path;

use serde::Serialize;
use sure_lab::concentration::{
    empirical_max_moment, lambda_grid_from_fractions, max_moment_bound_subexp,
    quadratic_form_params, quadratic_form_params_inflated, quadratic_form_sampler,
    verify_max_moment, verify_quadratic_form_mgf, MaxMomentCheck, MgfMethod, MgfRow,
    SubExpParams,
};
use sure_lab::criteria::{edf_bound, oracle_gap_bound};
use sure_lab::montecarlo::{
    run_prepared, shell_decay_from_histogram, Estimate, Experiment, MonteCarloSummary,
    RunOptions, ShellDecayReport, RECORD_RETENTION_LIMIT,
};
use sure_lab::smoothers::{knn_opnorm_bound, SmootherKind};
use sure_lab::{derive_stream, Error, Matrix64, ReplicateRecord64, SmootherFamily64};

use crate::config::{BatteryConfig, ExperimentConfig};
use crate::{exit, CliError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberRow {
    pub label: String,
    pub df: f64,
    pub frob_sq: f64,
    pub opnorm: f64,
    pub risk: f64,
    /// `None` when `r⋆ = 0`.
    pub shell: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleInfo {
    pub label: String,
    pub risk: f64,
    pub r_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdfComparison {
    /// Monte Carlo mean of `edf_total`.
    pub estimated: Estimate,
    /// `√(r⋆ log|S|) + h log|S| (1 + log₊(h² log|S| / r⋆))` with
    /// `h = max(h_op, 1)`; `None` when `r⋆ = 0`.
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
    pub h_op_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleGapRow {
    pub eta: f64,
    pub c_test: f64,
    pub oracle_risk: f64,
    /// Monte Carlo estimate of the tuned estimator's risk.
    pub tuned_risk: Estimate,
    pub bound: f64,
    pub tuned_within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub n: usize,
    pub sigma: f64,
    pub n_reps: u64,
    pub master_seed: u64,
    pub h_op: f64,
    pub family: Vec<MemberRow>,
    pub oracle: OracleInfo,
    pub monte_carlo: MonteCarloSummary,
    pub edf_comparison: EdfComparison,
    pub oracle_gap: Vec<OracleGapRow>,
    pub shell_decay: Option<ShellDecayReport>,
    pub identities_passed: bool,
}

impl SimulateReport {
    pub fn exit_code(&self) -> u8 {
        if self.identities_passed {
            exit::OK
        } else {
            exit::IDENTITY
        }
    }

    /// `quantity,value,stderr` rows.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut rows: Vec<(String, f64, Option<f64>)> = Vec::new();
        for (name, est) in &self.monte_carlo.estimates {
            rows.push((name.clone(), est.mean, est.stderr));
        }
        rows.push(("r_star".into(), self.oracle.r_star, None));
        rows.push(("oracle_risk".into(), self.oracle.risk, None));
        rows.push(("h_op".into(), self.h_op, None));
        if let Some(b) = self.edf_comparison.bound {
            rows.push(("edf_bound".into(), b, None));
        }
        for g in &self.oracle_gap {
            rows.push((format!("oracle_gap_bound_eta_{:?}", g.eta), g.bound, None));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["quantity", "value", "stderr"]).map_err(CliError::io)?;
        for (q, v, se) in rows {
            w.write_record([
                q,
                sure_lab::montecarlo::format_float(v),
                se.map(sure_lab::montecarlo::format_float).unwrap_or_default(),
            ])
            .map_err(CliError::io)?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::io(e.into_error()))?;
    String::from_utf8(bytes).map_err(CliError::io)
}

fn core_error(context: &str, e: Error) -> CliError {
    match e {
        Error::Domain { .. } => CliError::new(exit::DOMAIN, format!("{context}: {e}")),
        _ => CliError::config(format!("{context}: {e}")),
    }
}

/// Runs the Monte Carlo experiment described by `cfg`.
pub fn simulate(
    cfg: &ExperimentConfig,
    base: &Path,
    want_records: bool,
) -> Result<(SimulateReport, Option<Vec<ReplicateRecord64>>), CliError> {
    let model = cfg.build_model()?;
    let family = cfg.build_family(base)?;
    if family.n() != model.n() {
        return Err(CliError::config(format!(
            "family: members act on dimension {}, model.n is {}",
            family.n(),
            model.n()
        )));
    }
    if want_records && cfg.n_reps > RECORD_RETENTION_LIMIT && !cfg.outputs.force_records {
        return Err(CliError::config(format!(
            "outputs.force_records: records for more than {RECORD_RETENTION_LIMIT} replicates need force_records"
        )));
    }
    let experiment = Experiment::new(&family, &model).map_err(|e| core_error("experiment", e))?;
    let options = RunOptions {
        threads: None,
        retain_records: want_records,
        force_records: cfg.outputs.force_records,
    };
    let (summary, records) = run_prepared(&experiment, cfg.n_reps, cfg.master_seed, options)
        .map_err(|e| core_error("simulate", e))?;

    let shells = experiment.member_shells();
    let rows = family
        .members()
        .iter()
        .enumerate()
        .map(|(i, s)| MemberRow {
            label: s.label().to_owned(),
            df: s.df(),
            frob_sq: s.frob_sq(),
            opnorm: s.opnorm(),
            risk: experiment.risks()[i],
            shell: shells.map(|sh| sh[i]),
        })
        .collect();
    let oracle_idx = experiment.oracle_index();
    let oracle = OracleInfo {
        label: family.members()[oracle_idx].label().to_owned(),
        risk: experiment.risks()[oracle_idx],
        r_star: experiment.r_star(),
    };

    let h_used = family.h_op().max(1.0);
    let estimated = summary.estimate("edf_total");
    let bound = if oracle.r_star > 0.0 {
        Some(edf_bound(oracle.r_star, family.len(), h_used).map_err(|e| core_error("edf_bound", e))?)
    } else {
        None
    };
    let edf_comparison = EdfComparison {
        estimated,
        bound,
        ratio: bound.filter(|&b| b > 0.0).map(|b| estimated.mean / b),
        h_op_used: h_used,
    };

    let tuned_risk = summary.estimate("risk_tuned");
    let oracle_gap = cfg
        .bounds
        .eta_grid
        .iter()
        .map(|&eta| {
            let b = oracle_gap_bound(oracle.risk, model.sigma(), family.len(), eta, cfg.bounds.c_test)
                .map_err(|e| core_error("oracle_gap_bound", e))?;
            Ok(OracleGapRow {
                eta,
                c_test: cfg.bounds.c_test,
                oracle_risk: oracle.risk,
                tuned_risk,
                bound: b,
                tuned_within_bound: tuned_risk.mean <= b,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let shell_decay = if summary.shells_available {
        Some(
            shell_decay_from_histogram(&summary.shell_histogram, &family, &model, cfg.bounds.shell_c_test)
                .map_err(|e| core_error("shell decay", e))?,
        )
    } else {
        None
    };

    let identities_passed = summary.identity_checks.all_passed();
    Ok((
        SimulateReport {
            schema_version: REPORT_SCHEMA_VERSION,
            n: model.n(),
            sigma: model.sigma(),
            n_reps: cfg.n_reps,
            master_seed: cfg.master_seed,
            h_op: family.h_op(),
            family: rows,
            oracle,
            monte_carlo: summary,
            edf_comparison,
            oracle_gap,
            shell_decay,
            identities_passed,
        },
        records,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyInfoRow {
    pub label: String,
    pub kind: SmootherKind,
    pub df: f64,
    pub frob_sq: f64,
    pub opnorm: f64,
    /// k-NN only: `(1/k) · max_i |N_k⁻¹(i)|`, the largest reverse-neighbor count over `k`.
    pub gershgorin_bound: Option<f64>,
    /// k-NN only: `‖H‖_F²` as an exact fraction.
    pub frob_sq_exact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyInfo {
    pub n: usize,
    pub size: usize,
    pub h_op: f64,
    pub members: Vec<FamilyInfoRow>,
}

pub fn family_info(family: &SmootherFamily64) -> FamilyInfo {
    let doc = family.to_document();
    let members = family
        .members()
        .iter()
        .zip(&doc.members)
        .map(|(s, d)| {
            let knn = s.knn_structure();
            FamilyInfoRow {
                label: s.label().to_owned(),
                kind: d.kind,
                df: s.df(),
                frob_sq: s.frob_sq(),
                opnorm: s.opnorm(),
                gershgorin_bound: knn.map(|k| knn_opnorm_bound(s, k.k)),
                frob_sq_exact: knn.map(|k| k.frob_sq_exact().to_string()),
            }
        })
        .collect();
    FamilyInfo {
        n: family.n(),
        size: family.len(),
        h_op: family.h_op(),
        members,
    }
}

impl FamilyInfo {
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "kind", "df", "frob_sq", "opnorm", "gershgorin_bound"])
            .map_err(CliError::io)?;
        let f = sure_lab::montecarlo::format_float;
        for r in &self.members {
            let kind = serde_json::to_value(r.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            w.write_record([
                r.label.clone(),
                kind,
                f(r.df),
                f(r.frob_sq),
                f(r.opnorm),
                r.gershgorin_bound.map(f).unwrap_or_default(),
            ])
            .map_err(CliError::io)?;
        }
        w.write_record(["h_op".to_owned(), String::new(), String::new(), String::new(), f(self.h_op), String::new()])
            .map_err(CliError::io)?;
        csv_string(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterCheck {
    pub params: SubExpParams<f64>,
    pub rows: Vec<MgfRow>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticFormCase {
    pub name: String,
    pub dim: usize,
    /// `(tr((A + Aᵀ)²), 2‖A + Aᵀ‖_op)`, the asserted parameterization.
    pub first: Option<ParameterCheck>,
    /// Monte Carlo rows for `first`; empty for exact-only cases.
    pub monte_carlo: Vec<MgfRow>,
    /// `(‖A‖_F², 4‖A‖_op)`, reported only.
    pub second: Option<ParameterCheck>,
    /// `(4‖A‖_F², 4‖A‖_op)`, reported only.
    pub inflated: Option<ParameterCheck>,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubexpMonitorRow {
    pub n_vars: usize,
    pub k: f64,
    /// `E[max_i |X_i|^k]^(1/k)` for centered `χ²₂` variables.
    pub empirical_root: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub schema_version: u32,
    pub master_seed: u64,
    pub quadratic_forms: Vec<QuadraticFormCase>,
    pub maxima: Vec<MaxMomentCheck>,
    pub subexp_monitor: Vec<SubexpMonitorRow>,
    pub domain_errors: usize,
    pub all_passed: bool,
}

impl LemmaReport {
    pub fn exit_code(&self) -> u8 {
        if self.domain_errors > 0 {
            exit::DOMAIN
        } else if self.all_passed {
            exit::OK
        } else {
            exit::IDENTITY
        }
    }

    /// `battery,case,lambda_or_k,estimate,stderr,bound,pass` rows.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let f = sure_lab::montecarlo::format_float;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["battery", "case", "parameter", "estimate", "stderr", "bound", "pass"])
            .map_err(CliError::io)?;
        for c in &self.quadratic_forms {
            let tagged = c
                .first
                .iter()
                .flat_map(|p| p.rows.iter().map(|r| ("mgf_exact", r)))
                .chain(c.monte_carlo.iter().map(|r| ("mgf_monte_carlo", r)));
            for (battery, r) in tagged {
                w.write_record([
                    battery.to_owned(),
                    c.name.clone(),
                    f(r.lambda),
                    f(r.estimate),
                    r.stderr.map(f).unwrap_or_default(),
                    f(r.bound),
                    r.pass.to_string(),
                ])
                .map_err(CliError::io)?;
            }
            if let Some(e) = &c.error {
                w.write_record(["mgf_error", &c.name, "", "", "", "", e])
                    .map_err(CliError::io)?;
            }
        }
        for m in &self.maxima {
            w.write_record([
                "max_moment".to_owned(),
                format!("N={},tau={}", m.n_vars, f(m.tau)),
                f(m.k),
                f(m.empirical),
                f(m.stderr),
                f(m.bound),
                m.pass.to_string(),
            ])
            .map_err(CliError::io)?;
        }
        csv_string(w)
    }
}

fn exact_check(a: &Matrix64, params: SubExpParams<f64>, fractions: &[f64], extra: &[f64], slack: f64) -> Result<ParameterCheck, Error> {
    let mut grid = lambda_grid_from_fractions(&params, fractions);
    grid.extend_from_slice(extra);
    let rows = verify_quadratic_form_mgf(a, &params, &grid, MgfMethod::Exact, 0, slack, 0)?;
    let holds = rows.iter().all(|r| r.pass);
    Ok(ParameterCheck { params, rows, holds })
}

/// Reported-only check: out-of-domain extras are dropped for the other
/// parameterizations, whose domains differ from the asserted one.
fn report_check(a: &Matrix64, params: SubExpParams<f64>, fractions: &[f64], extra: &[f64], slack: f64) -> Option<ParameterCheck> {
    let extra: Vec<f64> = extra.iter().copied().filter(|&l| params.check_lambda(l).is_ok()).collect();
    exact_check(a, params, fractions, &extra, slack).ok()
}

fn quadratic_case(
    name: String,
    a: &Matrix64,
    battery: &crate::config::QuadraticFormBattery,
    mc_seed: Option<u64>,
) -> Result<QuadraticFormCase, CliError> {
    let (first, second) =
        quadratic_form_params(a).map_err(|e| core_error(&format!("quadratic form {name}"), e))?;
    let inflated = quadratic_form_params_inflated(a)
        .map_err(|e| core_error(&format!("quadratic form {name}"), e))?;
    let fr = &battery.lambda_fractions;
    let extra = &battery.extra_lambdas;
    let mut case = QuadraticFormCase {
        name,
        dim: a.nrows(),
        first: None,
        monte_carlo: Vec::new(),
        second: report_check(a, second, fr, extra, battery.slack),
        inflated: report_check(a, inflated, fr, extra, battery.slack),
        pass: false,
        error: None,
    };
    match exact_check(a, first, fr, extra, battery.slack) {
        Ok(check) => case.first = Some(check),
        Err(e @ Error::Domain { .. }) => {
            case.error = Some(e.to_string());
            return Ok(case);
        }
        Err(e) => return Err(core_error(&case.name, e)),
    }
    if let Some(seed) = mc_seed {
        let mut grid = lambda_grid_from_fractions(&first, fr);
        grid.extend_from_slice(extra);
        case.monte_carlo = sure_lab::concentration::verify_mgf_bound(
            quadratic_form_sampler(a),
            &first,
            &grid,
            battery.n_samples,
            battery.slack,
            seed,
        )
        .map_err(|e| core_error(&case.name, e))?;
    }
    case.pass = case.first.as_ref().is_some_and(|c| c.holds) && case.monte_carlo.iter().all(|r| r.pass);
    Ok(case)
}

/// Stream offset separating matrix generation from sampling seeds.
const MATRIX_STREAM_BASE: u64 = 1 << 32;

/// Runs the quadratic-form MGF and maxima batteries.
pub fn verify_lemmas(cfg: &BatteryConfig) -> Result<LemmaReport, CliError> {
    cfg.validate()?;
    let q = &cfg.quadratic_forms;
    let mut cases = Vec::new();
    for (i, rows) in q.exact_matrices.iter().enumerate() {
        let a = Matrix64::from_rows(rows)
            .map_err(|e| CliError::config(format!("quadratic_forms.exact_matrices[{i}]: {e}")))?;
        cases.push(quadratic_case(format!("exact_{i}"), &a, q, None)?);
    }
    for i in 0..q.random_matrices {
        let dim = 1 + i % q.max_dim;
        let mut stream = derive_stream(cfg.master_seed, MATRIX_STREAM_BASE + i as u64);
        let entries: Vec<f64> = stream.standard_normal_vec(dim * dim);
        let a = Matrix64::from_fn(dim, dim, |r, c| entries[r * dim + c]);
        let seed = cfg.master_seed.wrapping_add(1 + i as u64);
        cases.push(quadratic_case(format!("random_{i}"), &a, q, Some(seed))?);
    }

    let m = &cfg.maxima;
    let mut maxima = Vec::new();
    let mut case_index = 0u64;
    for &n_vars in &m.n_vars {
        for &k in &m.k {
            for &tau in &m.tau {
                let seed = cfg.master_seed.wrapping_add(MATRIX_STREAM_BASE + case_index);
                case_index += 1;
                maxima.push(
                    verify_max_moment(n_vars, k, tau, m.n_samples, seed)
                        .map_err(|e| core_error("maxima", e))?,
                );
            }
        }
    }

    let chi = Matrix64::identity(2);
    let (chi_params, _) = quadratic_form_params(&chi).map_err(|e| core_error("monitor", e))?;
    let mut subexp_monitor = Vec::new();
    for &n_vars in &m.n_vars {
        for &k in &m.k {
            let seed = cfg.master_seed.wrapping_add(2 * MATRIX_STREAM_BASE + case_index);
            case_index += 1;
            let est = empirical_max_moment(quadratic_form_sampler(&chi), n_vars, k, m.subexp_samples, seed)
                .map_err(|e| core_error("monitor", e))?;
            let bound = max_moment_bound_subexp(n_vars, k, &chi_params, m.c_test)
                .map_err(|e| core_error("monitor", e))?;
            let root = est.mean.powf(1.0 / k);
            subexp_monitor.push(SubexpMonitorRow {
                n_vars,
                k,
                empirical_root: root,
                bound,
                ratio: root / bound,
            });
        }
    }

    let domain_errors = cases.iter().filter(|c| c.error.is_some()).count();
    let all_passed =
        domain_errors == 0 && cases.iter().all(|c| c.pass) && maxima.iter().all(|c| c.pass);
    Ok(LemmaReport {
        schema_version: REPORT_SCHEMA_VERSION,
        master_seed: cfg.master_seed,
        quadratic_forms: cases,
        maxima,
        subexp_monitor,
        domain_errors,
        all_passed,
    })
}
