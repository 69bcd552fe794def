//! Orthogonal projection onto a spline space with respect to a measure.
//!
//! The projector stores the inverse Gram matrix of its basis once and then
//! maps any integrable function to the spline matching its moments against
//! the unit-integral basis functions. Besides applying the projection it
//! can report its own sup-norm as an operator (the worst weighted mass of
//! its kernel section), hand out the dual basis, and compare itself to the
//! projector of a coarser partition on the region the refinement left
//! untouched.

use crate::bspline::SplineBasis;
use crate::error::{Error, Result};
use crate::gram::{gram_matrix, invert, BandedMatrix, DenseMatrix, Inverse};
use crate::partition::Measure;
use crate::quadrature::{inner_product, GaussLegendre, PiecewiseFunction, DEFAULT_POINTS};
use std::sync::Arc;

pub struct Projector {
    basis: Arc<SplineBasis>,
    measure: Measure,
    factors: Vec<f64>,
    gram: BandedMatrix,
    inverse: Inverse,
    rule: GaussLegendre,
}

/// A function in the span of a basis, stored by its renormalized
/// coefficients: value(x) = sum_j coeffs[j] * factors[j] * M_j(x).
pub struct ProjectedSpline {
    basis: Arc<SplineBasis>,
    factors: Vec<f64>,
    coeffs: Vec<f64>,
}

impl ProjectedSpline {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let vals = self.basis.evaluate_all(x)?;
        Ok(vals
            .iter()
            .map(|v| self.coeffs[v.index] * self.factors[v.index] * v.m)
            .sum())
    }

    pub fn to_piecewise(&self) -> PiecewiseFunction {
        let basis = self.basis.clone();
        let factors = self.factors.clone();
        let coeffs = self.coeffs.clone();
        PiecewiseFunction::with_breakpoints(
            basis.partition().breakpoints().to_vec(),
            move |x| {
                basis
                    .evaluate_all(x)
                    .map(|vals| {
                        vals.iter()
                            .map(|v| coeffs[v.index] * factors[v.index] * v.m)
                            .sum()
                    })
                    .unwrap_or(0.0)
            },
        )
    }
}

impl Projector {
    pub fn new(basis: Arc<SplineBasis>, measure: Measure) -> Result<Self> {
        let rule = GaussLegendre::new(DEFAULT_POINTS)?;
        let gram = gram_matrix(&basis, &basis, &measure, &rule)?;
        let inverse = invert(&gram)?;
        let factors = basis.n_factors_for(&measure)?;
        Ok(Projector {
            basis,
            measure,
            factors,
            gram,
            inverse,
            rule,
        })
    }

    pub fn basis(&self) -> &Arc<SplineBasis> {
        &self.basis
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn gram(&self) -> &BandedMatrix {
        &self.gram
    }

    pub fn inverse(&self) -> &Inverse {
        &self.inverse
    }

    pub fn gram_inverse_norm(&self) -> f64 {
        self.inverse.inf_norm
    }

    /// Moments <f, M_i> with respect to the projector's measure.
    pub fn moments(&self, f: &PiecewiseFunction) -> Result<Vec<f64>> {
        (0..self.basis.count())
            .map(|i| {
                let mi = self.basis.m_function(i)?;
                inner_product(f, &mi, &self.measure, &self.rule)
            })
            .collect()
    }

    pub fn project(&self, f: &PiecewiseFunction) -> Result<ProjectedSpline> {
        let m = self.moments(f)?;
        let n = self.basis.count();
        let mut coeffs = vec![0.0; n];
        for (j, c) in coeffs.iter_mut().enumerate() {
            for (i, &mi) in m.iter().enumerate() {
                *c += self.inverse.matrix.get(j, i) * mi;
            }
        }
        Ok(ProjectedSpline {
            basis: self.basis.clone(),
            factors: self.factors.clone(),
            coeffs,
        })
    }

    /// Sup-norm of the projector as an operator on bounded functions: the
    /// largest weighted mass of a kernel section, maximized over Chebyshev
    /// sample points in every atom plus the atom endpoints.
    pub fn operator_inf_norm(&self, samples_per_atom: usize) -> Result<f64> {
        // fewer than four samples per atom misses the section maxima badly
        if samples_per_atom < 4 {
            return Err(Error::BadPointCount);
        }
        let n = self.basis.count();
        let breakpoints = self.basis.partition().breakpoints().to_vec();
        let mut worst = 0.0f64;
        let mut beta = vec![0.0; n];
        for atom in breakpoints.windows(2) {
            let (a, b) = (atom[0], atom[1]);
            let mut ts: Vec<f64> = (0..samples_per_atom)
                .map(|s| {
                    let theta =
                        std::f64::consts::PI * (2.0 * s as f64 + 1.0) / (2.0 * samples_per_atom as f64);
                    0.5 * (a + b) - 0.5 * (b - a) * theta.cos()
                })
                .collect();
            ts.push(a);
            ts.push(b);
            for t in ts {
                for v in beta.iter_mut() {
                    *v = 0.0;
                }
                let vals = self.basis.evaluate_all(t)?;
                for i in 0..n {
                    for v in &vals {
                        beta[i] +=
                            v.m * self.factors[v.index] * self.inverse.matrix.get(v.index, i);
                    }
                }
                let mass = self.kernel_section_mass(&beta)?;
                worst = worst.max(mass);
            }
        }
        Ok(worst)
    }

    /// integral over s of |sum_i beta_i M_i(s)| d mu(s), by quadrature on
    /// sub-panels of every atom so sign changes stay localized.
    fn kernel_section_mass(&self, beta: &[f64]) -> Result<f64> {
        let breakpoints = self.basis.partition().breakpoints();
        let sub = 4;
        let mut total = 0.0;
        for atom in breakpoints.windows(2) {
            for s in 0..sub {
                let a = atom[0] + (atom[1] - atom[0]) * s as f64 / sub as f64;
                let b = atom[0] + (atom[1] - atom[0]) * (s + 1) as f64 / sub as f64;
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                for (q, &node) in self.rule.nodes().iter().enumerate() {
                    let x = mid + half * node;
                    let vals = self.basis.evaluate_all(x)?;
                    let kernel: f64 = vals.iter().map(|v| beta[v.index] * v.m).sum();
                    total +=
                        self.rule.weights()[q] * half * self.measure.density_norm(x) * kernel.abs();
                }
            }
        }
        Ok(total)
    }

    /// Dual basis: row i holds the expansion of the function biorthogonal
    /// to the renormalized basis in terms of the M_j.
    pub fn dual_basis(&self) -> DualBasis {
        let n = self.basis.count();
        let mut symmetry_defect = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let lhs = self.factors[i] * self.inverse.matrix.get(i, j);
                let rhs = self.factors[j] * self.inverse.matrix.get(j, i);
                symmetry_defect = symmetry_defect.max((lhs - rhs).abs());
            }
        }
        DualBasis {
            basis: self.basis.clone(),
            coeffs: self.inverse.matrix.clone(),
            symmetry_defect,
            residual: self.inverse.residual,
        }
    }
}

/// Functions biorthogonal to the renormalized basis: <dual_i, N_j> = delta_ij
/// up to the stored residual. The weighted coefficient matrix of a dual
/// basis is symmetric in exact arithmetic; symmetry_defect reports how far
/// the computed one drifts.
pub struct DualBasis {
    basis: Arc<SplineBasis>,
    coeffs: DenseMatrix,
    pub symmetry_defect: f64,
    pub residual: f64,
}

impl DualBasis {
    pub fn eval(&self, i: usize, x: f64) -> Result<f64> {
        if i >= self.basis.count() {
            return Err(Error::IndexOutOfRange {
                index: i,
                count: self.basis.count(),
            });
        }
        let vals = self.basis.evaluate_all(x)?;
        Ok(vals.iter().map(|v| self.coeffs.get(i, v.index) * v.m).sum())
    }
}

/// What survives of a projection when the partition is refined, measured on
/// the atoms the refinement left alone.
#[derive(Clone, Debug)]
pub struct DifferenceReport {
    /// Indices of fine basis functions whose F-support lies in the
    /// untouched region, with <(P_fine - P_coarse) f, N_i> for each.
    pub inner_products: Vec<(usize, f64)>,
    pub max_inner_u: f64,
    /// Sup of |P_fine f - P_coarse f| sampled over the untouched atoms.
    pub sup_diff_u: f64,
    /// Same sup over the whole interval.
    pub sup_diff_global: f64,
    /// Number of untouched coarse atoms.
    pub untouched_atoms: usize,
}

/// Compare the projections of f under a partition refinement. The fine
/// projector's partition must refine the coarse one and both must use the
/// same measure.
pub fn projector_difference(
    fine: &Projector,
    coarse: &Projector,
    f: &PiecewiseFunction,
) -> Result<DifferenceReport> {
    if !fine.basis.partition().refines(coarse.basis.partition()) {
        return Err(Error::NotRefinement);
    }
    if fine.basis.order() != coarse.basis.order() {
        return Err(Error::BasisMismatch(
            "projectors have different orders".to_string(),
        ));
    }
    if fine.measure.spec() != coarse.measure.spec() {
        return Err(Error::BasisMismatch(
            "projectors use different measures".to_string(),
        ));
    }
    let pf = fine.project(f)?;
    let pg = coarse.project(f)?;

    // untouched coarse atoms: no strictly interior fine breakpoint
    let fine_bp = fine.basis.partition().breakpoints();
    let coarse_part = coarse.basis.partition();
    let mut untouched = vec![true; coarse_part.atoms()];
    for &x in fine_bp.iter() {
        if x <= 0.0 || x >= 1.0 || coarse_part.has_breakpoint(x) {
            continue;
        }
        let idx = coarse_part.atom_containing(x)?;
        untouched[idx] = false;
    }
    let untouched_atoms = untouched.iter().filter(|&&u| u).count();

    // fine atoms inside the untouched region
    let fine_part = fine.basis.partition();
    let fine_atom_untouched: Vec<bool> = (0..fine_part.atoms())
        .map(|i| {
            let (a, b) = fine_part.atom(i);
            let mid = 0.5 * (a + b);
            coarse_part
                .atom_containing(mid)
                .map(|c| untouched[c])
                .unwrap_or(false)
        })
        .collect();

    let diff = |x: f64| -> Result<f64> { Ok(pf.eval(x)? - pg.eval(x)?) };

    let mut inner_products = Vec::new();
    let mut max_inner_u = 0.0f64;
    for i in 0..fine.basis.count() {
        let (lo, hi) = fine.basis.f_support(i);
        if !(lo..hi).all(|a| fine_atom_untouched[a]) {
            continue;
        }
        // <(P_F - P_G) f, N_i> by quadrature over the F-support
        let (a, b) = fine.basis.f_support_interval(i);
        let basis = fine.basis.clone();
        let factor = fine.factors[i];
        let mut val = 0.0;
        let mut cuts: Vec<f64> = fine_bp.iter().copied().filter(|&x| x >= a && x <= b).collect();
        for &c in &fine.measure.breakpoints() {
            if c > a && c < b {
                cuts.push(c);
            }
        }
        cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        cuts.dedup_by(|p, q| (*p - *q).abs() < 1e-15);
        for piece in cuts.windows(2) {
            let half = 0.5 * (piece[1] - piece[0]);
            let mid = 0.5 * (piece[0] + piece[1]);
            for (q, &node) in fine.rule.nodes().iter().enumerate() {
                let x = mid + half * node;
                let ni = factor * basis.m_value(i, x)?;
                val += fine.rule.weights()[q]
                    * half
                    * fine.measure.density_norm(x)
                    * diff(x)?
                    * ni;
            }
        }
        max_inner_u = max_inner_u.max(val.abs());
        inner_products.push((i, val));
    }

    let mut sup_diff_u = 0.0f64;
    let mut sup_diff_global = 0.0f64;
    for i in 0..fine_part.atoms() {
        let (a, b) = fine_part.atom(i);
        for s in 0..=16 {
            let x = a + (b - a) * s as f64 / 16.0;
            let d = diff(x)?.abs();
            sup_diff_global = sup_diff_global.max(d);
            if fine_atom_untouched[i] {
                sup_diff_u = sup_diff_u.max(d);
            }
        }
    }

    Ok(DifferenceReport {
        inner_products,
        max_inner_u,
        sup_diff_u,
        sup_diff_global,
        untouched_atoms,
    })
}
