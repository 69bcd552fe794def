//! Weighted perturbations of the classical basis and the conditions under
//! which they stay close to it.
//!
//! Given a measure with density w, each classical bump is rescaled by the
//! reciprocal of the raw density at the center of its support,
//! M_i^p = M_i / w(c_i), and renormalized against the measure instead of
//! length: N_i^p = (mu(F_i) / order) M_i^p. For w identically one nothing
//! changes; for slowly varying w the Gram matrix of the perturbed family
//! against mu stays entrywise close to the classical Lebesgue Gram, which
//! is what `check_conditions` quantifies.
//!
//! `check_compatibility` verifies the structural half of the refinement
//! story: under knot insertion every coarse basis function must stay inside
//! the fine span, measured by local least-squares residuals.

use crate::bspline::{BasisKind, EvalBackend, SplineBasis};
use crate::error::{Error, Result};
use crate::gram::gram_matrix;
use crate::partition::{mesh_norm, Measure};
use crate::quadrature::{integrate, GaussLegendre, PiecewiseFunction, DEFAULT_POINTS};
use std::sync::Arc;

/// Rescale a classical basis by the measure's raw density at the support
/// centers and renormalize it by measure mass.
pub fn weighted_perturbed_basis(classical: &SplineBasis, mu: &Measure) -> Result<SplineBasis> {
    if classical.kind() != BasisKind::Classical {
        return Err(Error::BasisMismatch(
            "perturbation starts from a classical basis".to_string(),
        ));
    }
    let count = classical.count();
    let mut scales = Vec::with_capacity(count);
    for i in 0..count {
        let (a, b) = classical.support(i);
        let c = 0.5 * (a + b);
        let w = mu.density_raw(c);
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::BadDensity(format!("density {w} at {c}")));
        }
        scales.push(1.0 / w);
    }
    // factors mu(F_i)/order need the shape of the basis, so build in two steps
    let shaped = SplineBasis::with_backend(
        classical.knots().clone(),
        BasisKind::Scaled,
        EvalBackend::Scaled(scales.clone()),
        None,
    )?;
    let factors = shaped.n_factors_for(mu)?;
    SplineBasis::with_backend(
        classical.knots().clone(),
        BasisKind::Scaled,
        EvalBackend::Scaled(scales),
        Some(factors),
    )
}

/// How strongly a perturbed family deviates from the classical one.
#[derive(Clone, Copy, Debug)]
pub struct PerturbationReport {
    /// Entrywise distance between the perturbed Gram against mu and the
    /// classical Gram against length.
    pub theta_proxy: f64,
    /// Interaction width: largest |i - j| + 1 with overlapping supports.
    pub band_c: usize,
    /// Largest sup |M_i^p| times mu(F_i) over all indices.
    pub norm_c: f64,
    /// Largest atom mass under mu.
    pub mesh_mu: f64,
}

pub fn check_conditions(
    classical: &SplineBasis,
    perturbed: &SplineBasis,
    mu: &Measure,
) -> Result<PerturbationReport> {
    if classical.knots() != perturbed.knots() {
        return Err(Error::BasisMismatch(
            "bases live on different knots".to_string(),
        ));
    }
    let rule = GaussLegendre::new(DEFAULT_POINTS)?;
    let g_classical = gram_matrix(classical, classical, &Measure::lebesgue(), &rule)?;
    let g_perturbed = gram_matrix(perturbed, perturbed, mu, &rule)?;
    let n = classical.count();
    // the deviation compares mu(F_j) <M_i^p, M_j^p> with |supp_j| <M_i, M_j>,
    // which is order times the difference of the normalized Gram entries
    let k = classical.order() as f64;
    let mut theta = 0.0f64;
    for i in 0..n {
        for j in g_perturbed.band_cols(i) {
            theta = theta.max(k * (g_perturbed.get(i, j) - g_classical.get(i, j)).abs());
        }
    }

    let mut band_c = 1usize;
    for i in 0..n {
        let (_, b1) = classical.support(i);
        for j in i + 1..n {
            let (a2, _) = classical.support(j);
            if a2 < b1 {
                band_c = band_c.max(j - i + 1);
            } else {
                break;
            }
        }
    }

    let mut norm_c = 0.0f64;
    for i in 0..n {
        let (a, b) = perturbed.support(i);
        let (fa, fb) = perturbed.f_support_interval(i);
        let mass = mu.mass_between(fa, fb)?;
        let mut sup = 0.0f64;
        for s in 0..=64 {
            let x = a + (b - a) * s as f64 / 64.0;
            sup = sup.max(perturbed.m_value(i, x)?.abs());
        }
        norm_c = norm_c.max(sup * mass);
    }

    Ok(PerturbationReport {
        theta_proxy: theta,
        band_c,
        norm_c,
        mesh_mu: mesh_norm(classical.partition(), mu)?,
    })
}

/// Structural compatibility of a coarse and a fine basis after refinement.
#[derive(Clone, Debug)]
pub struct CompatibilityReport {
    /// Every coarse function is representable in the fine span.
    pub nested: bool,
    /// Every fine function whose F-support stays inside the region is
    /// representable in the coarse span.
    pub local: bool,
    /// Worst relative least-squares residual of the nested direction.
    pub max_residual: f64,
    /// Worst relative residual among the locally supported fine functions.
    pub max_residual_local: f64,
    pub checked: usize,
    pub checked_local: usize,
}

const NESTED_TOL: f64 = 1e-8;

/// Checks both containment directions for a refinement pair. The region is
/// a closed subinterval on which the two partitions must consist of the
/// same atoms; fine functions F-supported there are tested against the
/// coarse span, all coarse functions against the fine span.
pub fn check_compatibility(
    coarse: &SplineBasis,
    fine: &SplineBasis,
    region: (f64, f64),
) -> Result<CompatibilityReport> {
    if coarse.order() != fine.order() {
        return Err(Error::TraceMismatch(format!(
            "orders {} and {} differ",
            coarse.order(),
            fine.order()
        )));
    }
    if !fine.partition().refines(coarse.partition()) {
        return Err(Error::NotRefinement);
    }
    let (lo, hi) = region;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::BadInterval { a: lo, b: hi });
    }
    let inside = |p: &crate::partition::IntervalPartition| -> Vec<(f64, f64)> {
        p.breakpoints()
            .windows(2)
            .map(|w| (w[0], w[1]))
            .filter(|&(a, b)| a >= lo - 1e-12 && b <= hi + 1e-12)
            .collect()
    };
    let coarse_atoms = inside(coarse.partition());
    let fine_atoms = inside(fine.partition());
    let same = coarse_atoms.len() == fine_atoms.len()
        && coarse_atoms
            .iter()
            .zip(&fine_atoms)
            .all(|(&(a, b), &(c, d))| (a - c).abs() < 1e-12 && (b - d).abs() < 1e-12);
    if !same {
        return Err(Error::TraceMismatch(format!(
            "partitions disagree on [{lo}, {hi}]"
        )));
    }

    let coarse_arc = Arc::new(clone_shape(coarse)?);
    let fine_arc = Arc::new(clone_shape(fine)?);

    let mut max_residual = 0.0f64;
    let mut checked = 0usize;
    for i in 0..coarse.count() {
        let r = represent(coarse, &coarse_arc, i, fine, &fine_arc)?;
        max_residual = max_residual.max(r);
        checked += 1;
    }

    let mut max_residual_local = 0.0f64;
    let mut checked_local = 0usize;
    for j in 0..fine.count() {
        let (fa, fb) = fine.f_support_interval(j);
        if fa >= lo - 1e-12 && fb <= hi + 1e-12 {
            let r = represent(fine, &fine_arc, j, coarse, &coarse_arc)?;
            max_residual_local = max_residual_local.max(r);
            checked_local += 1;
        }
    }

    Ok(CompatibilityReport {
        nested: max_residual <= NESTED_TOL,
        local: max_residual_local <= NESTED_TOL,
        max_residual,
        max_residual_local,
        checked,
        checked_local,
    })
}

/// Relative least-squares residual of one basis function inside the span of
/// another basis, restricted to the functions overlapping its support.
fn represent(
    from: &SplineBasis,
    from_shape: &Arc<SplineBasis>,
    i: usize,
    into: &SplineBasis,
    into_shape: &Arc<SplineBasis>,
) -> Result<f64> {
    let rule = GaussLegendre::new(16)?;
    let (a, b) = from.support(i);
    let scale_i = scale_of(from, i);
    let target = {
        let f = from_shape.m_function(i)?;
        let s = scale_i;
        PiecewiseFunction::with_breakpoints(f.breakpoints().to_vec(), move |x| s * f.eval(x))
    };
    // candidate functions overlapping the support
    let cols: Vec<usize> = (0..into.count())
        .filter(|&j| {
            let (aj, bj) = into.support(j);
            aj < b && a < bj
        })
        .collect();
    let m = cols.len();
    let mut mat = vec![0.0; m * (m + 1)];
    for (r, &jr) in cols.iter().enumerate() {
        let fr = scaled_m(into_shape, into, jr)?;
        for (c, &jc) in cols.iter().enumerate() {
            let fc = scaled_m(into_shape, into, jc)?;
            let prod = fr.product(&fc);
            mat[r * (m + 1) + c] = integrate(&prod, 0.0, 1.0, &rule)?;
        }
        let prod = fr.product(&target);
        mat[r * (m + 1) + m] = integrate(&prod, 0.0, 1.0, &rule)?;
    }
    solve_dense(&mut mat, m);
    // residual of the representation over the support
    let coeffs: Vec<f64> = (0..m).map(|r| mat[r * (m + 1) + m]).collect();
    let resid_fn = {
        let into_shape = into_shape.clone();
        let into_scales: Vec<f64> = cols.iter().map(|&j| scale_of(into, j)).collect();
        let cols = cols.clone();
        let mut bp: Vec<f64> = into
            .partition()
            .breakpoints()
            .iter()
            .chain(from.partition().breakpoints())
            .copied()
            .filter(|&x| x >= a && x <= b)
            .collect();
        bp.sort_by(|p, q| p.partial_cmp(q).unwrap());
        bp.dedup();
        let from_shape = from_shape.clone();
        PiecewiseFunction::with_breakpoints(bp, move |x| {
            let t = scale_i * from_shape.m_value(i, x).unwrap_or(0.0);
            let s: f64 = cols
                .iter()
                .zip(&coeffs)
                .zip(&into_scales)
                .map(|((&j, &c), &sc)| c * sc * into_shape.m_value(j, x).unwrap_or(0.0))
                .sum();
            let d = t - s;
            d * d
        })
    };
    let err2 = integrate(&resid_fn, a, b, &rule)?;
    let norm_fn = {
        let from_shape = from_shape.clone();
        let bp: Vec<f64> = from
            .partition()
            .breakpoints()
            .iter()
            .copied()
            .filter(|&x| x >= a && x <= b)
            .collect();
        PiecewiseFunction::with_breakpoints(bp, move |x| {
            let v = scale_i * from_shape.m_value(i, x).unwrap_or(0.0);
            v * v
        })
    };
    let norm2 = integrate(&norm_fn, a, b, &rule)?;
    Ok((err2 / norm2.max(1e-300)).sqrt())
}

fn scale_of(basis: &SplineBasis, i: usize) -> f64 {
    basis.scale_factors().map_or(1.0, |s| s[i])
}

/// The classical shape under a scaled basis, for reuse of m_function.
fn clone_shape(basis: &SplineBasis) -> Result<SplineBasis> {
    SplineBasis::classical(basis.knots().clone())
}

fn scaled_m(arc: &Arc<SplineBasis>, original: &SplineBasis, j: usize) -> Result<PiecewiseFunction> {
    let f = arc.m_function(j)?;
    let s = scale_of(original, j);
    Ok(PiecewiseFunction::with_breakpoints(
        f.breakpoints().to_vec(),
        move |x| s * f.eval(x),
    ))
}

/// In-place Gauss-Jordan on an m x (m+1) augmented system.
fn solve_dense(a: &mut [f64], m: usize) {
    let w = m + 1;
    for col in 0..m {
        let mut p = col;
        let mut best = a[col * w + col].abs();
        for r in col + 1..m {
            let v = a[r * w + col].abs();
            if v > best {
                p = r;
                best = v;
            }
        }
        if best == 0.0 {
            continue;
        }
        if p != col {
            for c in 0..w {
                a.swap(col * w + c, p * w + c);
            }
        }
        let d = a[col * w + col];
        for c in 0..w {
            a[col * w + c] /= d;
        }
        for r in 0..m {
            if r != col {
                let f = a[r * w + col];
                if f != 0.0 {
                    for c in 0..w {
                        a[r * w + c] -= f * a[col * w + c];
                    }
                }
            }
        }
    }
}
