//! B-spline bases on knot sequences over [0, 1].
//!
//! Knot sequences repeat the boundary points 0 and 1 exactly `order` times
//! and list interior breakpoints once, so a partition with m atoms carries
//! m + order - 1 basis functions of that order.
//!
//! Two normalizations of the same bump travel together through this crate:
//! the unit-integral functions M_i and the unit-partition functions
//! N_i = factor_i * M_i. For the classical basis the factor is |supp|/order,
//! making the N_i sum to one; perturbed and weighted variants install their
//! own factors when they are built.
//!
//! Evaluation at knots is right-continuous, except at x = 1 where the left
//! limit is used, matching the half-open atom convention of partitions.

use crate::chebyshev::{ChebEvaluator, WeightSystem};
use crate::error::{Error, Result};
use crate::partition::{IntervalPartition, Measure};
use crate::quadrature::PiecewiseFunction;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
pub struct KnotSequence {
    order: usize,
    knots: Vec<f64>,
}

impl KnotSequence {
    pub fn new(order: usize, knots: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::BadOrder(order));
        }
        if knots.len() < 2 * order {
            return Err(Error::BadKnots(format!(
                "need at least {} knots for order {order}, got {}",
                2 * order,
                knots.len()
            )));
        }
        for pair in knots.windows(2) {
            if !(pair[0] <= pair[1]) {
                return Err(Error::BadKnots(format!(
                    "{} followed by {}",
                    pair[0], pair[1]
                )));
            }
        }
        let zeros = knots.iter().filter(|&&t| t == 0.0).count();
        let ones = knots.iter().filter(|&&t| t == 1.0).count();
        if zeros != order || ones != order {
            return Err(Error::BadKnots(format!(
                "boundary multiplicities {zeros}/{ones}, expected {order}"
            )));
        }
        let interior = &knots[order..knots.len() - order];
        for pair in interior.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::BadKnots(format!(
                    "interior knot {} repeated",
                    pair[0]
                )));
            }
        }
        if interior.iter().any(|&t| t <= 0.0 || t >= 1.0) {
            return Err(Error::BadKnots("interior knot outside (0, 1)".to_string()));
        }
        Ok(KnotSequence { order, knots })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions carried by the sequence.
    pub fn count(&self) -> usize {
        self.knots.len() - self.order
    }

    /// Support of the i-th basis function: [t_i, t_{i+order}].
    pub fn support(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + self.order])
    }

    /// Breakpoints of the underlying partition (distinct knots).
    pub fn partition(&self) -> Result<IntervalPartition> {
        let mut bps: Vec<f64> = Vec::with_capacity(self.knots.len());
        for &t in &self.knots {
            if bps.last().map_or(true, |&l| t > l) {
                bps.push(t);
            }
        }
        IntervalPartition::from_breakpoints(bps)
    }

    /// Index j of the nondegenerate span with t_j <= x < t_{j+1}; x = 1
    /// falls into the last span.
    pub fn span_of(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        let hi = self.knots.len() - self.order - 1;
        let j = match self
            .knots
            .binary_search_by(|t| t.partial_cmp(&x).unwrap())
        {
            Ok(mut i) => {
                // step over repeated knots to the last equal one
                while i + 1 < self.knots.len() && self.knots[i + 1] == x {
                    i += 1;
                }
                i
            }
            Err(i) => i - 1,
        };
        Ok(j.clamp(self.order - 1, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    Classical,
    Scaled,
    Chebyshev,
}

pub(crate) enum EvalBackend {
    Classical,
    /// Classical values multiplied by a per-index constant.
    Scaled(Vec<f64>),
    Chebyshev(Box<ChebEvaluator>),
}

/// One evaluated basis function: unit-integral value m and renormalized
/// value n = factor * m.
#[derive(Clone, Copy, Debug)]
pub struct BasisValue {
    pub index: usize,
    pub m: f64,
    pub n: f64,
}

pub struct SplineBasis {
    knots: KnotSequence,
    partition: IntervalPartition,
    kind: BasisKind,
    backend: EvalBackend,
    f_supports: Vec<(usize, usize)>,
    n_factors: Vec<f64>,
}

impl SplineBasis {
    /// Classical B-spline basis of the order carried by the knots.
    pub fn classical(knots: KnotSequence) -> Result<Self> {
        SplineBasis::with_backend(knots, BasisKind::Classical, EvalBackend::Classical, None)
    }

    pub(crate) fn with_backend(
        knots: KnotSequence,
        kind: BasisKind,
        backend: EvalBackend,
        n_factors: Option<Vec<f64>>,
    ) -> Result<Self> {
        let partition = knots.partition()?;
        let k = knots.order();
        let count = knots.count();
        let mut f_supports = Vec::with_capacity(count);
        for i in 0..count {
            let (a, b) = knots.support(i);
            let lo = partition
                .breakpoints()
                .iter()
                .position(|&x| x == a)
                .expect("support endpoint is a breakpoint");
            let hi = partition
                .breakpoints()
                .iter()
                .position(|&x| x == b)
                .expect("support endpoint is a breakpoint");
            f_supports.push((lo, hi));
        }
        let n_factors = match n_factors {
            Some(f) => {
                if f.len() != count {
                    return Err(Error::BasisMismatch(format!(
                        "{} factors for {} functions",
                        f.len(),
                        count
                    )));
                }
                f
            }
            None => (0..count)
                .map(|i| {
                    let (a, b) = knots.support(i);
                    (b - a) / k as f64
                })
                .collect(),
        };
        Ok(SplineBasis {
            knots,
            partition,
            kind,
            backend,
            f_supports,
            n_factors,
        })
    }

    pub fn order(&self) -> usize {
        self.knots.order()
    }

    pub fn count(&self) -> usize {
        self.knots.count()
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn knots(&self) -> &KnotSequence {
        &self.knots
    }

    pub fn partition(&self) -> &IntervalPartition {
        &self.partition
    }

    pub fn support(&self, i: usize) -> (f64, f64) {
        self.knots.support(i)
    }

    /// Smallest union of atoms covering the support, as an atom index range.
    pub fn f_support(&self, i: usize) -> (usize, usize) {
        self.f_supports[i]
    }

    /// The same union as an interval.
    pub fn f_support_interval(&self, i: usize) -> (f64, f64) {
        let (lo, hi) = self.f_supports[i];
        (
            self.partition.breakpoints()[lo],
            self.partition.breakpoints()[hi],
        )
    }

    pub fn n_factor(&self, i: usize) -> f64 {
        self.n_factors[i]
    }

    /// Renormalization factors mu(F-support)/order used when this basis is
    /// paired with the measure mu.
    pub fn n_factors_for(&self, mu: &Measure) -> Result<Vec<f64>> {
        let k = self.order() as f64;
        (0..self.count())
            .map(|i| {
                let (a, b) = self.f_support_interval(i);
                Ok(mu.mass_between(a, b)? / k)
            })
            .collect()
    }

    pub(crate) fn scale_factors(&self) -> Option<&[f64]> {
        match &self.backend {
            EvalBackend::Scaled(s) => Some(s),
            _ => None,
        }
    }

    /// The weight system behind a Chebyshevian basis, if there is one.
    pub fn weight_system(&self) -> Option<&Arc<WeightSystem>> {
        match &self.backend {
            EvalBackend::Chebyshev(cheb) => Some(cheb.weight_system()),
            _ => None,
        }
    }

    /// All basis functions that are nonzero at x, with both normalizations.
    pub fn evaluate_all(&self, x: f64) -> Result<Vec<BasisValue>> {
        let k = self.order();
        let j = self.knots.span_of(x)?;
        let lo = (j + 1).saturating_sub(k);
        let mut out = Vec::with_capacity(k);
        match &self.backend {
            EvalBackend::Classical | EvalBackend::Scaled(_) => {
                let nvals = classical_span_values(&self.knots, j, x);
                for (r, &nv) in nvals.iter().enumerate() {
                    let i = lo + r;
                    if i >= self.count() || nv == 0.0 {
                        continue;
                    }
                    let (a, b) = self.knots.support(i);
                    let mut m = nv * k as f64 / (b - a);
                    if let EvalBackend::Scaled(s) = &self.backend {
                        m *= s[i];
                    }
                    out.push(BasisValue {
                        index: i,
                        m,
                        n: m * self.n_factors[i],
                    });
                }
            }
            EvalBackend::Chebyshev(cheb) => {
                for i in lo..=j {
                    if i >= self.count() {
                        continue;
                    }
                    let m = cheb.m_value(i, x);
                    if m != 0.0 {
                        out.push(BasisValue {
                            index: i,
                            m,
                            n: m * self.n_factors[i],
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Unit-integral basis function i at x.
    pub fn m_value(&self, i: usize, x: f64) -> Result<f64> {
        if i >= self.count() {
            return Err(Error::IndexOutOfRange {
                index: i,
                count: self.count(),
            });
        }
        let (a, b) = self.knots.support(i);
        if x < a || (x > b) {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::OutOfDomain(x));
            }
            return Ok(0.0);
        }
        Ok(self
            .evaluate_all(x)?
            .iter()
            .find(|v| v.index == i)
            .map_or(0.0, |v| v.m))
    }

    /// Renormalized basis function i at x.
    pub fn n_value(&self, i: usize, x: f64) -> Result<f64> {
        Ok(self.m_value(i, x)? * self.n_factors[i])
    }

    /// Basis function i as a piecewise function (unit-integral form).
    pub fn m_function(self: &Arc<Self>, i: usize) -> Result<PiecewiseFunction> {
        if i >= self.count() {
            return Err(Error::IndexOutOfRange {
                index: i,
                count: self.count(),
            });
        }
        let basis = self.clone();
        let (a, b) = self.knots.support(i);
        let bps: Vec<f64> = self
            .partition
            .breakpoints()
            .iter()
            .copied()
            .filter(|&x| x >= a && x <= b)
            .collect();
        Ok(PiecewiseFunction::with_breakpoints(bps, move |x| {
            basis.m_value(i, x).unwrap_or(0.0)
        }))
    }
}

/// Values of the `order` classical B-splines that are nonzero on span j,
/// in index order j - order + 1 ..= j. Triangular recurrence on the knots.
fn classical_span_values(knots: &KnotSequence, j: usize, x: f64) -> Vec<f64> {
    let k = knots.order();
    let t = knots.knots();
    let mut vals = vec![0.0; k];
    vals[0] = 1.0;
    let mut left = vec![0.0; k];
    let mut right = vec![0.0; k];
    for step in 1..k {
        left[step] = x - t[j + 1 - step];
        right[step] = t[j + step] - x;
        let mut saved = 0.0;
        for r in 0..step {
            let den = right[r + 1] + left[step - r];
            let term = if den != 0.0 { vals[r] / den } else { 0.0 };
            vals[r] = saved + right[r + 1] * term;
            saved = left[step - r] * term;
        }
        vals[step] = saved;
    }
    vals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::IntervalPartition;
    use crate::quadrature::{integrate, GaussLegendre};
    use proptest::prelude::*;

    fn classical(n: usize, k: usize) -> Arc<SplineBasis> {
        let p = IntervalPartition::uniform(n).unwrap();
        Arc::new(SplineBasis::classical(p.knot_sequence(k).unwrap()).unwrap())
    }

    #[test]
    fn knot_validation() {
        assert!(KnotSequence::new(2, vec![0.0, 0.0, 0.5, 1.0, 1.0]).is_ok());
        // boundary multiplicity must match the order
        assert!(KnotSequence::new(2, vec![0.0, 0.5, 1.0, 1.0]).is_err());
        // repeated interior knot
        assert!(KnotSequence::new(2, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]).is_err());
        // decreasing
        assert!(KnotSequence::new(1, vec![0.0, 0.6, 0.4, 1.0]).is_err());
        assert!(KnotSequence::new(0, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn count_matches_atoms_plus_order() {
        for n in [1, 2, 5, 9] {
            for k in [1, 2, 3, 4] {
                let b = classical(n, k);
                assert_eq!(b.count(), n + k - 1, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn order_one_is_indicator_over_mass() {
        let b = classical(2, 1);
        assert!((b.m_value(0, 0.25).unwrap() - 2.0).abs() < 1e-15);
        assert!((b.m_value(0, 0.0).unwrap() - 2.0).abs() < 1e-15);
        // right-continuity hands 0.5 to the second atom
        assert_eq!(b.m_value(0, 0.5).unwrap(), 0.0);
        assert!((b.m_value(1, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((b.n_value(1, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hat_peaks_at_interior_knot() {
        let b = classical(2, 2);
        assert!((b.n_value(1, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((b.n_value(0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((b.n_value(2, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(b.m_value(0, 0.75).unwrap(), 0.0);
    }

    #[test]
    fn partition_of_unity_on_random_knots() {
        let p = IntervalPartition::random(7, 11, 40.0).unwrap();
        for k in 1..=4 {
            let b = Arc::new(SplineBasis::classical(p.knot_sequence(k).unwrap()).unwrap());
            for i in 0..=200 {
                let x = i as f64 / 200.0;
                let sum: f64 = b.evaluate_all(x).unwrap().iter().map(|v| v.n).sum();
                assert!((sum - 1.0).abs() < 1e-12, "k={k} x={x} sum={sum}");
            }
        }
    }

    #[test]
    fn unit_integrals() {
        let p = IntervalPartition::random(5, 3, 10.0).unwrap();
        let rule = GaussLegendre::new(10).unwrap();
        for k in 1..=4 {
            let b = Arc::new(SplineBasis::classical(p.knot_sequence(k).unwrap()).unwrap());
            for i in 0..b.count() {
                let f = b.m_function(i).unwrap();
                let (a, c) = b.support(i);
                let v = integrate(&f, a, c, &rule).unwrap();
                assert!((v - 1.0).abs() < 1e-12, "k={k} i={i} integral={v}");
            }
        }
    }

    #[test]
    fn evaluate_all_is_sparse_and_local() {
        let b = classical(8, 3);
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let vals = b.evaluate_all(x).unwrap();
            assert!(vals.len() <= 3);
            for v in &vals {
                let (a, c) = b.support(v.index);
                assert!(x >= a - 1e-15 && x <= c + 1e-15);
                assert!(v.m >= 0.0);
            }
        }
    }

    #[test]
    fn pointwise_bound_order_over_support_length() {
        let p = IntervalPartition::random(6, 5, 25.0).unwrap();
        for k in 1..=4 {
            let b = Arc::new(SplineBasis::classical(p.knot_sequence(k).unwrap()).unwrap());
            for i in 0..b.count() {
                let (a, c) = b.support(i);
                let cap = k as f64 / (c - a);
                for s in 0..=50 {
                    let x = a + (c - a) * s as f64 / 50.0;
                    let m = b.m_value(i, x).unwrap();
                    assert!(m <= cap * (1.0 + 1e-12), "k={k} i={i} m={m} cap={cap}");
                }
            }
        }
    }

    #[test]
    fn distant_supports_are_disjoint() {
        let b = classical(9, 3);
        let k = b.order();
        for i in 0..b.count() {
            for j in 0..b.count() {
                if i.abs_diff(j) >= k {
                    let (a1, b1) = b.support(i);
                    let (a2, b2) = b.support(j);
                    assert!(b1 <= a2 + 1e-15 || b2 <= a1 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let b = classical(3, 2);
        assert!(b.evaluate_all(-0.1).is_err());
        assert!(b.m_value(0, 1.5).is_err());
        assert!(b.m_value(99, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity_everywhere(
            n in 1usize..12,
            k in 1usize..6,
            seed in 0u64..500,
            xq in 0usize..=1000,
        ) {
            let p = IntervalPartition::random(n, seed, 100.0).unwrap();
            let b = SplineBasis::classical(p.knot_sequence(k).unwrap()).unwrap();
            let x = xq as f64 / 1000.0;
            let sum: f64 = b.evaluate_all(x).unwrap().iter().map(|v| v.n).sum();
            prop_assert!((sum - 1.0).abs() < 1e-11);
        }
    }
}
