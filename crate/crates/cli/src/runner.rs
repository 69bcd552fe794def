//! Executes one experiment config: builds bases per partition cell, fills a
//! report row per cell, and enforces the hard invariants that make nonzero
//! exits. Cells run in parallel but are collected in config order, so row
//! numbering and CSV bytes never depend on scheduling.

use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::json;
use splinelab::bspline::SplineBasis;
use splinelab::chebyshev::{build_chebyshev_basis, compare_to_classical, WeightSystem};
use splinelab::families::{test_function_pool, FunctionSpec};
use splinelab::gram::{demko_fit, gram_matrix, invert, neumann_check};
use splinelab::partition::{mesh_norm, Measure};
use splinelab::perturb::{check_conditions, weighted_perturbed_basis};
use splinelab::projector::Projector;
use splinelab::quadrature::{GaussLegendre, PiecewiseFunction};

use crate::config::{partition_label, Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::report::{JsonRow, Report, Row};

/// Mathematical identities are enforced to this tolerance; violations are
/// hard failures, not warnings.
const INVARIANT_TOL: f64 = 1e-8;
/// Decay envelope fits may leave numerical dust below this level.
const ENVELOPE_DUST: f64 = 1e-12;
/// A projection has operator norm at least one; finite sampling may dip
/// below by at most this much before we flag it.
const OP_NORM_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// 0 picks the rayon default.
    pub threads: usize,
    pub seed_override: Option<u64>,
    pub strict: bool,
}

struct CellOutcome {
    row: Row,
    detail: serde_json::Value,
    warnings: Vec<String>,
    elapsed_ms: u64,
}

/// Run every partition cell of the config and assemble the report. Strict
/// mode is handled by the caller: warnings are returned inside the rows.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let mut effective = config.clone();
    if let Some(seed) = opts.seed_override {
        effective.seed = seed;
    }
    effective.validate()?;
    let hash = effective.hash();

    let compute = || -> Result<Vec<CellOutcome>, CliError> {
        (0..effective.partitions.len())
            .into_par_iter()
            .map(|cell| run_cell(&effective, cell, &hash))
            .collect()
    };
    let mut outcomes = if opts.threads == 0 {
        compute()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        pool.install(compute)?
    };

    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let rows = outcomes
        .drain(..)
        .enumerate()
        .map(|(i, mut o)| {
            o.row.row = i;
            o.row.timestamp = stamp;
            o.row.warnings = o.warnings.len();
            let detail = if o.warnings.is_empty() {
                o.detail
            } else {
                json!({ "metrics": o.detail, "warnings": o.warnings })
            };
            JsonRow {
                row: o.row,
                detail,
                elapsed_ms: o.elapsed_ms,
            }
        })
        .collect();

    Ok(Report {
        config: effective,
        config_hash: hash,
        rows,
    })
}

/// Collect the warning texts of a finished report, for strict mode and for
/// printing.
pub fn collect_warnings(report: &Report) -> Vec<String> {
    let mut out = Vec::new();
    for jr in &report.rows {
        if let Some(list) = jr.detail.get("warnings").and_then(|w| w.as_array()) {
            for w in list {
                if let Some(text) = w.as_str() {
                    out.push(format!("row {}: {}", jr.row.row, text));
                }
            }
        }
    }
    out
}

fn as_piecewise(spec: &FunctionSpec) -> PiecewiseFunction {
    let s = spec.clone();
    PiecewiseFunction::with_breakpoints(spec.breakpoints(), move |x| s.eval(x))
}

fn run_cell(
    cfg: &ExperimentConfig,
    cell: usize,
    hash: &str,
) -> Result<CellOutcome, CliError> {
    let started = Instant::now();
    let spec = &cfg.partitions[cell];
    let partition = spec.build()?;
    let mu = cfg.measure.build()?;
    let lebesgue = Measure::lebesgue();
    let rule = GaussLegendre::new(10)?;

    let mut row = Row::skeleton(
        cfg.experiment.name(),
        &cfg.label,
        cfg.order,
        partition_label(spec),
        mu.label(),
        cfg.weights_label(),
        cfg.seed,
        hash.to_string(),
    );
    row.atoms = partition.atoms();
    row.mesh_leb = mesh_norm(&partition, &lebesgue)?;
    row.mesh_mu = mesh_norm(&partition, &mu)?;

    let knots = partition.knot_sequence(cfg.order)?;
    let base = Arc::new(SplineBasis::classical(knots.clone())?);
    row.dim = base.count();

    let mut warnings = Vec::new();
    let mut detail = serde_json::Value::Null;

    match cfg.experiment {
        Experiment::GramBound => {
            let g = gram_matrix(&base, &base, &mu, &rule)?;
            check_diagonal_positive(&g, "gram")?;
            let inv = invert(&g)?;
            row.g_norm = Some(g.inf_norm());
            row.g_inv_norm = Some(inv.inf_norm);
            row.residual = Some(inv.residual);
        }
        Experiment::Demko => {
            let g = gram_matrix(&base, &base, &mu, &rule)?;
            check_diagonal_positive(&g, "gram")?;
            let inv = invert(&g)?;
            row.g_norm = Some(g.inf_norm());
            row.g_inv_norm = Some(inv.inf_norm);
            row.residual = Some(inv.residual);
            let fit = demko_fit(&inv.matrix)?;
            row.demko_c = Some(fit.c);
            row.demko_q = Some(fit.q);
            row.demko_q_tail = Some(fit.q_tail);
            row.demko_violation = Some(fit.max_violation);
            if fit.max_violation > ENVELOPE_DUST {
                warnings.push(format!(
                    "decay envelope leaves {:.3e} uncovered",
                    fit.max_violation
                ));
            }
        }
        Experiment::ChebCompare => {
            let ws = WeightSystem::new(cfg.weights.clone())?;
            let cheb = build_chebyshev_basis(knots, &ws)?;
            let points = cfg.grid_per_atom * partition.atoms();
            let grid: Vec<f64> = (0..=points).map(|i| i as f64 / points as f64).collect();
            let comps = compare_to_classical(&cheb, &base, &grid)?;
            let sup = comps.iter().map(|c| c.sup_diff).fold(0.0f64, f64::max);
            let ratio = comps.iter().map(|c| c.bound_ratio).fold(0.0f64, f64::max);
            row.sup_diff = Some(sup);
            row.bound_ratio = Some(ratio);
            detail = json!(comps
                .iter()
                .map(|c| json!({
                    "index": c.index,
                    "sup_diff": c.sup_diff,
                    "supp_len": c.supp_len,
                    "bound_ratio": c.bound_ratio,
                    "sup_scaled": c.sup_scaled,
                }))
                .collect::<Vec<_>>());
            let unit_weights = cfg
                .weights
                .iter()
                .all(|w| matches!(w, FunctionSpec::Constant { value } if *value == 1.0));
            if unit_weights && sup > INVARIANT_TOL {
                return Err(CliError::Invariant(format!(
                    "unit-weight basis deviates from the classical one by {sup:.3e} \
                     on {}",
                    row.partition
                )));
            }
        }
        Experiment::ProjNorm => {
            let proj = Projector::new(base.clone(), mu.clone())?;
            row.g_norm = Some(proj.gram().inf_norm());
            row.g_inv_norm = Some(proj.inverse().inf_norm);
            row.residual = Some(proj.inverse().residual);
            let op = proj.operator_inf_norm(cfg.samples_per_atom)?;
            row.op_norm = Some(op);
            if op < 1.0 - OP_NORM_SLACK {
                warnings.push(format!("operator norm estimate {op} below one"));
            }
            check_projector_invariants(&proj, cfg.seed)?;
        }
        Experiment::PerturbCheck => {
            let pert = Arc::new(weighted_perturbed_basis(&base, &mu)?);
            let cr = check_conditions(&base, &pert, &mu)?;
            row.theta_proxy = Some(cr.theta_proxy);
            row.band_c = Some(cr.band_c);
            row.norm_c = Some(cr.norm_c);
            let gp = gram_matrix(&pert, &pert, &mu, &rule)?;
            check_diagonal_positive(&gp, "perturbed gram")?;
            let gp_inv = invert(&gp)?;
            row.gp_norm = Some(gp.inf_norm());
            row.gp_inv_norm = Some(gp_inv.inf_norm);
            row.residual = Some(gp_inv.residual);
        }
        Experiment::TheoremPipeline => {
            let g = gram_matrix(&base, &base, &lebesgue, &rule)?;
            check_diagonal_positive(&g, "gram")?;
            let g_inv = invert(&g)?;
            let pert = Arc::new(weighted_perturbed_basis(&base, &mu)?);
            let gp = gram_matrix(&pert, &pert, &mu, &rule)?;
            check_diagonal_positive(&gp, "perturbed gram")?;
            let gp_inv = invert(&gp)?;
            let nr = neumann_check(&g, &g_inv, &gp, &gp_inv)?;
            row.g_norm = Some(g.inf_norm());
            row.g_inv_norm = Some(g_inv.inf_norm);
            row.gp_norm = Some(gp.inf_norm());
            row.gp_inv_norm = Some(gp_inv.inf_norm);
            row.x_norm = Some(nr.x_norm);
            row.contraction = Some(nr.contraction);
            if nr.contraction && !nr.bound_ok {
                return Err(CliError::Invariant(format!(
                    "contraction {:.4} holds but the geometric series bound fails \
                     on {}: perturbed inverse {:.4} vs base {:.4}",
                    nr.x_norm, row.partition, nr.gp_inv_norm, nr.g_inv_norm
                )));
            }
            let fit = demko_fit(&g_inv.matrix)?;
            row.demko_c = Some(fit.c);
            row.demko_q = Some(fit.q);
            row.demko_q_tail = Some(fit.q_tail);
            row.demko_violation = Some(fit.max_violation);
            if fit.max_violation > ENVELOPE_DUST {
                warnings.push(format!(
                    "decay envelope leaves {:.3e} uncovered",
                    fit.max_violation
                ));
            }
            let cr = check_conditions(&base, &pert, &mu)?;
            row.theta_proxy = Some(cr.theta_proxy);
            row.band_c = Some(cr.band_c);
            row.norm_c = Some(cr.norm_c);
            let proj = Projector::new(pert.clone(), mu.clone())?;
            let op = proj.operator_inf_norm(cfg.samples_per_atom)?;
            row.op_norm = Some(op);
            if op < 1.0 - OP_NORM_SLACK {
                warnings.push(format!("operator norm estimate {op} below one"));
            }
            row.residual = Some(g_inv.residual.max(gp_inv.residual));
            check_projector_invariants(&proj, cfg.seed)?;
        }
    }

    let escape = mu.bound_violation();
    if escape > 1.0 + 1e-9 {
        warnings.push(format!(
            "density escapes its declared band by factor {escape:.6}"
        ));
    }

    Ok(CellOutcome {
        row,
        detail,
        warnings,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

fn check_diagonal_positive(
    g: &splinelab::gram::BandedMatrix,
    what: &str,
) -> Result<(), CliError> {
    for i in 0..g.dim() {
        let d = g.get(i, i);
        if !(d > 0.0) {
            return Err(CliError::Invariant(format!(
                "{what} diagonal entry {i} is {d}, expected positive"
            )));
        }
    }
    Ok(())
}

/// The identities a projector must satisfy regardless of partition, weights
/// or measure: projecting twice changes nothing, and the underlying inner
/// products of the basis functions form a symmetric table.
fn check_projector_invariants(proj: &Projector, seed: u64) -> Result<(), CliError> {
    let spec = &test_function_pool(seed, 1)[0];
    let f = as_piecewise(spec);
    let once = proj.project(&f)?;
    let twice = proj.project(&once.to_piecewise())?;
    let scale = once
        .coeffs()
        .iter()
        .fold(1.0f64, |m, c| m.max(c.abs()));
    let drift = once
        .coeffs()
        .iter()
        .zip(twice.coeffs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if drift > INVARIANT_TOL * scale {
        return Err(CliError::Invariant(format!(
            "projector is not idempotent: coefficient drift {drift:.3e} on {}",
            spec.label()
        )));
    }

    // G[i][j] holds <M_i, a_j M_j>, so dividing column j by a_j must give a
    // symmetric matrix; an asymmetric table means duals and primals have
    // fallen out of biorthogonality.
    let factors = proj.basis().n_factors_for(proj.measure())?;
    let g = proj.gram();
    let n = g.dim();
    let mut scale = 0.0f64;
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let bij = g.get(i, j) / factors[j];
            let bji = g.get(j, i) / factors[i];
            scale = scale.max(bij.abs()).max(bji.abs());
            defect = defect.max((bij - bji).abs());
        }
    }
    if defect > INVARIANT_TOL * scale.max(1.0) {
        return Err(CliError::Invariant(format!(
            "gram table asymmetric by {defect:.3e} against scale {scale:.3e}"
        )));
    }
    Ok(())
}

