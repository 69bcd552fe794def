//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single [PASS] or [FAIL] line (visible with --nocapture); tolerances are
//! pinned as constants next to the test they gate.

use splinelab::bspline::SplineBasis;
use splinelab::chebyshev::{build_chebyshev_basis, compare_to_classical, WeightSystem};
use splinelab::families::{test_function_pool, FunctionSpec};
use splinelab::gram::{demko_fit, gram_matrix, invert, neumann_check};
use splinelab::partition::{refine_to_mesh, IntervalPartition, Measure};
use splinelab::perturb::{check_conditions, weighted_perturbed_basis};
use splinelab::projector::{projector_difference, Projector};
use splinelab::quadrature::{inner_product, GaussLegendre, PiecewiseFunction};
use std::sync::Arc;

fn classical(partition: &IntervalPartition, k: usize) -> SplineBasis {
    SplineBasis::classical(partition.knot_sequence(k).unwrap()).unwrap()
}

fn rule() -> GaussLegendre {
    GaussLegendre::new(10).unwrap()
}

fn sine_density(eps: f64) -> Measure {
    Measure::density(FunctionSpec::OnePlusEpsSin { eps, freq: 1.0 }, 2.0).unwrap()
}

fn as_piecewise(spec: &FunctionSpec) -> PiecewiseFunction {
    let s = spec.clone();
    PiecewiseFunction::with_breakpoints(spec.breakpoints(), move |x| s.eval(x))
}

fn finish(criterion: usize, label: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("[PASS] criterion {criterion}: {label}");
    } else {
        println!("[FAIL] criterion {criterion}: {label}");
        for f in &failures {
            println!("  - {f}");
        }
        panic!(
            "criterion {criterion} failed with {} violation(s): {}",
            failures.len(),
            failures.join("; ")
        );
    }
}

const C1_OFFDIAG_TOL: f64 = 0.0;
const C1_DIAG_TOL: f64 = 1e-14;
const C1_ROW_TOL: f64 = 1e-12;
const C1_ROW_SUM_TOL: f64 = 1e-10;

#[test]
fn criterion_1_gram_identities() {
    let mut failures = Vec::new();
    let rule = rule();
    let lebesgue = Measure::lebesgue();

    // order one gives the identity matrix on any partition
    for partition in [
        IntervalPartition::uniform(7).unwrap(),
        IntervalPartition::random(13, 41, 50.0).unwrap(),
    ] {
        let basis = classical(&partition, 1);
        let g = gram_matrix(&basis, &basis, &lebesgue, &rule)
            .unwrap()
            .to_dense();
        for i in 0..basis.count() {
            for j in 0..basis.count() {
                let got = g.get(i, j);
                if i == j {
                    if (got - 1.0).abs() > C1_DIAG_TOL {
                        failures.push(format!("k=1 diagonal ({i},{i}) = {got}"));
                    }
                } else if got.abs() > C1_OFFDIAG_TOL {
                    failures.push(format!("k=1 entry ({i},{j}) = {got}"));
                }
            }
        }
    }

    // order two on a uniform partition: frozen interior and boundary rows
    let partition = IntervalPartition::uniform(10).unwrap();
    let basis = classical(&partition, 2);
    let g = gram_matrix(&basis, &basis, &lebesgue, &rule)
        .unwrap()
        .to_dense();
    let n = basis.count();
    for (value, want, what) in [
        (g.get(0, 0), 2.0 / 3.0, "boundary diagonal"),
        (g.get(0, 1), 1.0 / 3.0, "boundary off-diagonal"),
        (g.get(n - 1, n - 1), 2.0 / 3.0, "last diagonal"),
        (g.get(n - 1, n - 2), 1.0 / 3.0, "last off-diagonal"),
        (g.get(4, 3), 1.0 / 6.0, "interior left"),
        (g.get(4, 4), 2.0 / 3.0, "interior diagonal"),
        (g.get(4, 5), 1.0 / 6.0, "interior right"),
    ] {
        if (value - want).abs() > C1_ROW_TOL {
            failures.push(format!("k=2 uniform {what}: {value} vs {want}"));
        }
    }

    // every classical Gram row sums to one
    for k in 1..=4usize {
        for partition in [
            IntervalPartition::uniform(9).unwrap(),
            IntervalPartition::random(14, 7 + k as u64, 100.0).unwrap(),
        ] {
            let basis = classical(&partition, k);
            let g = gram_matrix(&basis, &basis, &lebesgue, &rule).unwrap();
            for (i, s) in g.row_sums().iter().enumerate() {
                if (s - 1.0).abs() > C1_ROW_SUM_TOL {
                    failures.push(format!("k={k} row {i} sums to {s}"));
                }
            }
        }
    }

    finish(
        1,
        "order-one identity, frozen order-two uniform rows, unit row sums",
        failures,
    );
}

/// Shared instance grid for criteria 2 and 3: 200 random partitions per
/// order and size, gradings cycling through 1, 10, 100, 1000.
fn graded_partitions(k: usize, n: usize) -> Vec<IntervalPartition> {
    (0..200)
        .map(|t| {
            let grading = [1.0, 10.0, 100.0, 1000.0][t % 4];
            let seed = (k * 1_000_000 + n * 1_000 + t) as u64;
            IntervalPartition::random(n, seed, grading).unwrap()
        })
        .collect()
}

const C2_GROWTH: f64 = 1.10;
const C2_UNIFORM_WANT: f64 = 3.0;
const C2_UNIFORM_RELTOL: f64 = 0.02;

#[test]
fn criterion_2_gram_inverse_uniformly_bounded() {
    let mut failures = Vec::new();
    let rule = rule();
    let lebesgue = Measure::lebesgue();

    for k in 1..=4usize {
        let mut max_at = [0.0f64; 2];
        for (slot, n) in [20usize, 200].into_iter().enumerate() {
            for partition in graded_partitions(k, n) {
                let basis = classical(&partition, k);
                let g = gram_matrix(&basis, &basis, &lebesgue, &rule).unwrap();
                let inv = invert(&g).unwrap();
                max_at[slot] = max_at[slot].max(inv.inf_norm);
            }
        }
        if max_at[1] > C2_GROWTH * max_at[0] {
            failures.push(format!(
                "k={k}: max inverse norm grew from {} at n=20 to {} at n=200",
                max_at[0], max_at[1]
            ));
        }
    }

    // frozen oracle value for the uniform order-two instance
    let partition = IntervalPartition::uniform(200).unwrap();
    let basis = classical(&partition, 2);
    let g = gram_matrix(&basis, &basis, &lebesgue, &rule).unwrap();
    let inv = invert(&g).unwrap();
    if (inv.inf_norm - C2_UNIFORM_WANT).abs() > C2_UNIFORM_RELTOL * C2_UNIFORM_WANT {
        failures.push(format!(
            "k=2 uniform n=200 inverse norm {} vs {}",
            inv.inf_norm, C2_UNIFORM_WANT
        ));
    }

    finish(
        2,
        "inverse norms stable from n=20 to n=200 over graded random partitions",
        failures,
    );
}

const C3_VIOLATION_TOL: f64 = 1e-12;
const C3_RATE_WANT: f64 = 0.268;
const C3_RATE_RELTOL: f64 = 0.10;

#[test]
fn criterion_3_demko_decay() {
    let mut failures = Vec::new();
    let rule = rule();
    let lebesgue = Measure::lebesgue();

    for k in 1..=4usize {
        for n in [20usize, 200] {
            for (t, partition) in graded_partitions(k, n).into_iter().enumerate() {
                let basis = classical(&partition, k);
                let g = gram_matrix(&basis, &basis, &lebesgue, &rule).unwrap();
                let inv = invert(&g).unwrap();
                let fit = demko_fit(&inv.matrix).unwrap();
                if !(fit.q < 1.0) {
                    failures.push(format!("k={k} n={n} instance {t}: q = {}", fit.q));
                }
                if fit.max_violation > C3_VIOLATION_TOL {
                    failures.push(format!(
                        "k={k} n={n} instance {t}: envelope violated by {}",
                        fit.max_violation
                    ));
                }
            }
        }
    }

    // asymptotic off-diagonal rate for the uniform order-two instance
    let partition = IntervalPartition::uniform(200).unwrap();
    let basis = classical(&partition, 2);
    let g = gram_matrix(&basis, &basis, &lebesgue, &rule).unwrap();
    let fit = demko_fit(&invert(&g).unwrap().matrix).unwrap();
    if (fit.q_tail - C3_RATE_WANT).abs() > C3_RATE_RELTOL * C3_RATE_WANT {
        failures.push(format!(
            "k=2 uniform decay rate {} vs {}",
            fit.q_tail, C3_RATE_WANT
        ));
    }

    finish(
        3,
        "geometric envelopes hold on every instance, frozen uniform rate",
        failures,
    );
}

const C4_TOL: f64 = 1e-8;

#[test]
fn criterion_4_unit_weights_degenerate_to_classical() {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for k in 1..=4usize {
        let ws = WeightSystem::new(vec![FunctionSpec::constant(1.0); k]).unwrap();
        for (name, partition) in [
            ("uniform", IntervalPartition::uniform(8).unwrap()),
            ("random", IntervalPartition::random(8, 60 + k as u64, 2.0).unwrap()),
        ] {
            let knots = partition.knot_sequence(k).unwrap();
            let cheb = build_chebyshev_basis(knots.clone(), &ws).unwrap();
            let base = SplineBasis::classical(knots).unwrap();
            let grid: Vec<f64> = (0..=400).map(|s| s as f64 / 400.0).collect();
            let comps = compare_to_classical(&cheb, &base, &grid).unwrap();
            for c in comps {
                worst = worst.max(c.sup_diff);
                if c.sup_diff > C4_TOL {
                    failures.push(format!(
                        "k={k} {name} knots index {}: sup difference {}",
                        c.index, c.sup_diff
                    ));
                }
            }
        }
    }
    finish(
        4,
        &format!("unit-weight Chebyshevian bases match the classical ones (worst {worst:.2e})"),
        failures,
    );
}

const C5_CONSTANT_SPREAD: f64 = 2.0;
const C5_HALVING_LO: f64 = 0.3;
const C5_HALVING_HI: f64 = 0.7;

#[test]
fn criterion_5_oscillation_scaling() {
    let mut failures = Vec::new();
    let k = 2usize;
    let sizes = [8usize, 16, 32, 64];
    let epsilons = [0.05f64, 0.1, 0.2];

    // normalized deviation per cell, and raw sup difference for the
    // epsilon-halving law
    let mut normalized = Vec::new();
    let mut sup_diff = vec![[0.0f64; 3]; sizes.len()];
    for (ni, &n) in sizes.iter().enumerate() {
        let partition = IntervalPartition::uniform(n).unwrap();
        let base = classical(&partition, k);
        let grid: Vec<f64> = (0..=8 * n).map(|s| s as f64 / (8 * n) as f64).collect();
        for (ei, &eps) in epsilons.iter().enumerate() {
            let ws =
                WeightSystem::new(vec![FunctionSpec::OnePlusEpsSin { eps, freq: 1.0 }; k])
                    .unwrap();
            let cheb =
                build_chebyshev_basis(partition.knot_sequence(k).unwrap(), &ws).unwrap();
            let comps = compare_to_classical(&cheb, &base, &grid).unwrap();
            let cell_norm = comps
                .iter()
                .map(|c| c.bound_ratio)
                .fold(0.0f64, f64::max);
            let cell_sup = comps.iter().map(|c| c.sup_diff).fold(0.0f64, f64::max);
            normalized.push((n, eps, cell_norm));
            sup_diff[ni][ei] = cell_sup;
        }
    }

    let lo = normalized
        .iter()
        .map(|&(_, _, v)| v)
        .fold(f64::INFINITY, f64::min);
    let hi = normalized.iter().map(|&(_, _, v)| v).fold(0.0f64, f64::max);
    if hi > C5_CONSTANT_SPREAD * lo {
        failures.push(format!(
            "normalized deviation spread {hi:.4e} / {lo:.4e} = {:.2} exceeds {C5_CONSTANT_SPREAD}",
            hi / lo
        ));
    }

    for (ni, &n) in sizes.iter().enumerate() {
        for (small, big) in [(0usize, 1usize), (1, 2)] {
            let ratio = sup_diff[ni][small] / sup_diff[ni][big];
            if !(C5_HALVING_LO..=C5_HALVING_HI).contains(&ratio) {
                failures.push(format!(
                    "n={n}: halving eps from {} scaled sup difference by {ratio:.3}",
                    epsilons[big]
                ));
            }
        }
    }

    finish(
        5,
        "deviation scales with the weight modulus across sizes and amplitudes",
        failures,
    );
}

const C6_NORM_CAP_SLACK: f64 = 1e-9;
const C6_NOISE: f64 = 1.10;

#[test]
fn criterion_6_perturbation_conditions() {
    let mut failures = Vec::new();
    let k = 2usize;
    let m_bound = 2.0;
    let mu = sine_density(0.3);

    // a family against itself carries no deviation at all
    for kk in 1..=3usize {
        let partition = IntervalPartition::random(9, 77, 10.0).unwrap();
        let basis = classical(&partition, kk);
        let report = check_conditions(&basis, &basis, &Measure::lebesgue()).unwrap();
        if report.theta_proxy != 0.0 {
            failures.push(format!("k={kk} self-deviation {}", report.theta_proxy));
        }
    }

    // weighted family: norm condition capped by k M^2, deviation
    // nonincreasing under refinement
    let mut last = f64::INFINITY;
    for n in [8usize, 16, 32, 64] {
        let partition = IntervalPartition::uniform(n).unwrap();
        let base = classical(&partition, k);
        let pert = weighted_perturbed_basis(&base, &mu).unwrap();
        let report = check_conditions(&base, &pert, &mu).unwrap();
        let cap = k as f64 * m_bound * m_bound;
        if report.norm_c > cap + C6_NORM_CAP_SLACK {
            failures.push(format!("weighted n={n}: norm_c {} > {cap}", report.norm_c));
        }
        if report.theta_proxy > C6_NOISE * last {
            failures.push(format!(
                "weighted n={n}: deviation rose from {last} to {}",
                report.theta_proxy
            ));
        }
        last = report.theta_proxy;
    }

    // Chebyshevian family under Lebesgue: same monotone decay
    let ws = WeightSystem::new(vec![
        FunctionSpec::OnePlusEpsSin {
            eps: 0.3,
            freq: 1.0,
        };
        k
    ])
    .unwrap();
    let mut last = f64::INFINITY;
    for n in [8usize, 16, 32, 64] {
        let partition = IntervalPartition::uniform(n).unwrap();
        let base = classical(&partition, k);
        let cheb = build_chebyshev_basis(partition.knot_sequence(k).unwrap(), &ws).unwrap();
        let report = check_conditions(&base, &cheb, &Measure::lebesgue()).unwrap();
        if report.theta_proxy > C6_NOISE * last {
            failures.push(format!(
                "chebyshev n={n}: deviation rose from {last} to {}",
                report.theta_proxy
            ));
        }
        last = report.theta_proxy;
    }

    finish(
        6,
        "zero self-deviation, norm cap, deviation decays under refinement",
        failures,
    );
}

const C7_CONTRACTION: f64 = 0.5;
const C7_INV_FACTOR: f64 = 2.0;
const C7_OPNORM_SPREAD: f64 = 1.5;
const C7_SAMPLES: usize = 4;

#[test]
fn criterion_7_two_stage_pipeline() {
    let mut failures = Vec::new();
    let rule = rule();
    let k = 2usize;
    let mu = sine_density(0.3);
    let lebesgue = Measure::lebesgue();

    struct Row {
        n: usize,
        x_norm: f64,
        g_inv: f64,
        gp_inv: f64,
        op_norm: f64,
    }
    let mut rows = Vec::new();
    for n in [8usize, 16, 32, 64, 128, 256] {
        let partition = IntervalPartition::uniform(n).unwrap();
        let base = Arc::new(classical(&partition, k));
        let g = gram_matrix(&base, &base, &lebesgue, &rule).unwrap();
        let g_inv = invert(&g).unwrap();
        let pert = Arc::new(weighted_perturbed_basis(&base, &mu).unwrap());
        let gp = gram_matrix(&pert, &pert, &mu, &rule).unwrap();
        let gp_inv = invert(&gp).unwrap();
        let nr = neumann_check(&g, &g_inv, &gp, &gp_inv).unwrap();
        let proj = Projector::new(pert.clone(), mu.clone()).unwrap();
        let op_norm = proj.operator_inf_norm(C7_SAMPLES).unwrap();
        rows.push(Row {
            n,
            x_norm: nr.x_norm,
            g_inv: g_inv.inf_norm,
            gp_inv: gp_inv.inf_norm,
            op_norm,
        });
    }

    match rows.iter().position(|r| r.x_norm <= C7_CONTRACTION) {
        None => failures.push("contraction never reached 1/2 in the sweep".to_string()),
        Some(first) => {
            for r in &rows[first..] {
                if r.gp_inv > C7_INV_FACTOR * r.g_inv {
                    failures.push(format!(
                        "n={}: perturbed inverse norm {} exceeds {} x {}",
                        r.n, r.gp_inv, C7_INV_FACTOR, r.g_inv
                    ));
                }
            }
        }
    }

    let op_lo = rows.iter().map(|r| r.op_norm).fold(f64::INFINITY, f64::min);
    let op_hi = rows.iter().map(|r| r.op_norm).fold(0.0f64, f64::max);
    if op_hi > C7_OPNORM_SPREAD * op_lo {
        failures.push(format!(
            "operator norm spread {op_hi:.4} / {op_lo:.4} exceeds {C7_OPNORM_SPREAD}"
        ));
    }

    finish(
        7,
        "contraction implies the doubled inverse bound, operator norms stay flat",
        failures,
    );
}

const C8_INNER_TOL: f64 = 1e-8;
const C8_PAIR_SPREAD: f64 = 3.0;

#[test]
fn criterion_8_projector_differences_under_refinement() {
    let mut failures = Vec::new();
    let k = 2usize;
    let mu = sine_density(0.3);
    let funcs = test_function_pool(2024, 10);

    let mut pair_bounds = Vec::new();
    for p in 0..20u64 {
        let coarse = IntervalPartition::random(12, 5000 + p, 4.0).unwrap();
        let mut masses: Vec<f64> = (0..coarse.atoms())
            .map(|i| {
                let (a, b) = coarse.atom(i);
                mu.mass_between(a, b).unwrap()
            })
            .collect();
        masses.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let eps = 1.3 * masses[coarse.atoms() / 2];
        let fine = refine_to_mesh(&coarse, &mu, eps).unwrap();
        if fine.atoms() == coarse.atoms() {
            failures.push(format!("pair {p}: refinement left the partition unchanged"));
            continue;
        }
        let pg = Projector::new(Arc::new(classical(&coarse, k)), mu.clone()).unwrap();
        let pf = Projector::new(Arc::new(classical(&fine, k)), mu.clone()).unwrap();

        let mut pair_bound = 0.0f64;
        let mut checked = 0usize;
        for spec in &funcs {
            let f = as_piecewise(spec);
            let report = projector_difference(&pf, &pg, &f).unwrap();
            checked += report.inner_products.len();
            if report.max_inner_u > C8_INNER_TOL {
                failures.push(format!(
                    "pair {p} function {}: untouched-region coefficient {}",
                    spec.label(),
                    report.max_inner_u
                ));
            }
            pair_bound = pair_bound.max(report.sup_diff_global);
        }
        if checked == 0 {
            failures.push(format!("pair {p}: no basis function supported where untouched"));
        }
        pair_bounds.push(pair_bound);
    }

    let lo = pair_bounds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pair_bounds.iter().copied().fold(0.0f64, f64::max);
    if hi > C8_PAIR_SPREAD * lo {
        failures.push(format!(
            "per-pair bound spread {hi:.4e} / {lo:.4e} = {:.2} exceeds {C8_PAIR_SPREAD}",
            hi / lo
        ));
    }

    finish(
        8,
        "difference coefficients vanish on untouched atoms, bounds comparable",
        failures,
    );
}

const C9_TOL: f64 = 1e-8;

#[test]
fn criterion_9_projector_sanity() {
    let mut failures = Vec::new();
    let rule = rule();
    let mu = Measure::density(
        FunctionSpec::OnePlusEpsSin {
            eps: 0.4,
            freq: 2.0,
        },
        2.0,
    )
    .unwrap();
    let pool = test_function_pool(77, 6);

    for k in 1..=3usize {
        let partition = IntervalPartition::random(8, 900 + k as u64, 8.0).unwrap();
        let proj = Projector::new(Arc::new(classical(&partition, k)), mu.clone()).unwrap();

        for spec in &pool {
            let f = as_piecewise(spec);
            let once = proj.project(&f).unwrap();
            let twice = proj.project(&once.to_piecewise()).unwrap();
            let coeff_drift = once
                .coeffs()
                .iter()
                .zip(twice.coeffs())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if coeff_drift > C9_TOL {
                failures.push(format!(
                    "k={k} {}: reprojection moved coefficients by {coeff_drift}",
                    spec.label()
                ));
            }

            // projection never expands the weighted quadratic norm
            let pf = once.to_piecewise();
            let norm_f = inner_product(&f, &f, &mu, &rule).unwrap().sqrt();
            let norm_pf = inner_product(&pf, &pf, &mu, &rule).unwrap().sqrt();
            if norm_pf > norm_f + C9_TOL {
                failures.push(format!(
                    "k={k} {}: projected norm {norm_pf} exceeds {norm_f}",
                    spec.label()
                ));
            }
        }

        // self-adjointness on function pairs
        for (a, b) in [(0usize, 3usize), (1, 4), (2, 5)] {
            let f = as_piecewise(&pool[a]);
            let g = as_piecewise(&pool[b]);
            let pf = proj.project(&f).unwrap().to_piecewise();
            let pg = proj.project(&g).unwrap().to_piecewise();
            let lhs = inner_product(&pf, &g, &mu, &rule).unwrap();
            let rhs = inner_product(&f, &pg, &mu, &rule).unwrap();
            if (lhs - rhs).abs() > C9_TOL {
                failures.push(format!(
                    "k={k} pair ({a},{b}): <Pf,g> = {lhs} but <f,Pg> = {rhs}"
                ));
            }
        }
    }

    // order one is the conditional expectation: atom-wise weighted means
    let partition = IntervalPartition::random(7, 431, 6.0).unwrap();
    let proj = Projector::new(Arc::new(classical(&partition, 1)), mu.clone()).unwrap();
    for spec in &pool {
        let f = as_piecewise(spec);
        let projected = proj.project(&f).unwrap();
        for i in 0..partition.atoms() {
            let (a, b) = partition.atom(i);
            let mass = mu.mass_between(a, b).unwrap();
            let indicator = PiecewiseFunction::with_breakpoints(vec![a, b], move |x| {
                if (a..=b).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            });
            let mean = inner_product(&f, &indicator, &mu, &rule).unwrap() / mass;
            let got = projected.eval(0.5 * (a + b)).unwrap();
            if (got - mean).abs() > C9_TOL {
                failures.push(format!(
                    "{} atom {i}: value {got} vs weighted mean {mean}",
                    spec.label()
                ));
            }
        }
    }

    finish(
        9,
        "idempotent, self-adjoint, norm-contracting, atom averaging at order one",
        failures,
    );
}
