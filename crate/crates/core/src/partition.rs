//! Interval partitions of [0, 1] and the measures weighting them.
//!
//! A partition is a strictly increasing breakpoint vector from 0 to 1; its
//! atoms are half-open [a, b) except for the last, which is closed. Measures
//! are either Lebesgue or given by a positive density family; all masses are
//! reported for the probability normalization of the measure.

use crate::bspline::KnotSequence;
use crate::error::{Error, Result};
use crate::families::FunctionSpec;
use crate::quadrature::{integrate, GaussLegendre, PiecewiseFunction, DEFAULT_POINTS};
use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalPartition {
    breakpoints: Vec<f64>,
}

impl IntervalPartition {
    pub fn from_breakpoints(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::EmptyPartition);
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::BadBreakpoints(format!(
                "endpoints {} .. {}",
                breakpoints[0],
                breakpoints.last().unwrap()
            )));
        }
        for pair in breakpoints.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::BadBreakpoints(format!(
                    "{} followed by {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(IntervalPartition { breakpoints })
    }

    /// n atoms of equal length.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyPartition);
        }
        let breakpoints = (0..=n).map(|i| i as f64 / n as f64).collect();
        IntervalPartition::from_breakpoints(breakpoints)
    }

    /// n atoms with exponential raw lengths, clipped so the longest-to-
    /// shortest ratio stays within the grading bound, then normalized.
    /// Deterministic in the seed; grading 1 reproduces the uniform partition.
    pub fn random(n: usize, seed: u64, grading: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyPartition);
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(Error::BadGrading(grading));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut lens: Vec<f64> = (0..n)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let longest = lens.iter().cloned().fold(f64::MIN, f64::max).max(1e-300);
        let floor = longest / grading;
        for l in lens.iter_mut() {
            *l = l.max(floor);
        }
        let total: f64 = lens.iter().sum();
        let mut breakpoints = Vec::with_capacity(n + 1);
        breakpoints.push(0.0);
        let mut acc = 0.0;
        for l in &lens[..n - 1] {
            acc += l / total;
            breakpoints.push(acc);
        }
        breakpoints.push(1.0);
        IntervalPartition::from_breakpoints(breakpoints)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn atoms(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn atom(&self, i: usize) -> (f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1])
    }

    /// Index of the atom containing x; atoms are [a, b) except the last.
    pub fn atom_containing(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        let i = match self
            .breakpoints
            .binary_search_by(|b| b.partial_cmp(&x).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Ok(i.min(self.atoms() - 1))
    }

    /// True when every breakpoint of coarse also appears here.
    pub fn refines(&self, coarse: &IntervalPartition) -> bool {
        coarse
            .breakpoints
            .iter()
            .all(|&b| self.has_breakpoint(b))
    }

    pub fn has_breakpoint(&self, x: f64) -> bool {
        match self
            .breakpoints
            .binary_search_by(|b| b.partial_cmp(&x).unwrap())
        {
            Ok(_) => true,
            Err(i) => {
                (i < self.breakpoints.len() && (self.breakpoints[i] - x).abs() <= 1e-12)
                    || (i > 0 && (self.breakpoints[i - 1] - x).abs() <= 1e-12)
            }
        }
    }

    /// Knot sequence of the given order: boundary points repeated order
    /// times, interior breakpoints once.
    pub fn knot_sequence(&self, order: usize) -> Result<KnotSequence> {
        if order == 0 {
            return Err(Error::BadOrder(order));
        }
        let mut knots = Vec::with_capacity(self.breakpoints.len() - 2 + 2 * order);
        knots.extend(std::iter::repeat(0.0).take(order));
        knots.extend_from_slice(&self.breakpoints[1..self.breakpoints.len() - 1]);
        knots.extend(std::iter::repeat(1.0).take(order));
        KnotSequence::new(order, knots)
    }
}

#[derive(Clone)]
enum MeasureKind {
    Lebesgue,
    Density {
        family: FunctionSpec,
        bound: f64,
        total: f64,
    },
}

/// Probability measure on [0, 1]: Lebesgue, or a positive density taken from
/// the function registry. Density measures are normalized by their total
/// mass, so mass queries always refer to the probability version; the raw
/// (unnormalized) density stays available for constructions that divide by
/// pointwise density values.
#[derive(Clone)]
pub struct Measure {
    kind: MeasureKind,
}

impl Measure {
    pub fn lebesgue() -> Self {
        Measure {
            kind: MeasureKind::Lebesgue,
        }
    }

    /// Density measure with declared two-sided bound: 1/bound <= w <= bound
    /// is expected but only positivity is enforced here; use
    /// [`Measure::bound_violation`] to audit the declared bound.
    pub fn density(family: FunctionSpec, bound: f64) -> Result<Self> {
        if !(bound >= 1.0) || !bound.is_finite() {
            return Err(Error::BadDensity(format!("bound {bound} must be >= 1")));
        }
        for i in 0..=512 {
            let x = i as f64 / 512.0;
            let v = family.eval(x);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::BadDensity(format!(
                    "{} at x = {x} is {v}",
                    family.label()
                )));
            }
        }
        let rule = GaussLegendre::new(DEFAULT_POINTS)?;
        let pw = PiecewiseFunction::from_family(&family);
        let mut total = 0.0;
        // panel per 1/64 keeps oscillatory densities accurate
        for i in 0..64 {
            total += integrate(&pw, i as f64 / 64.0, (i + 1) as f64 / 64.0, &rule)?;
        }
        if !(total > 0.0) {
            return Err(Error::BadDensity("vanishing total mass".to_string()));
        }
        Ok(Measure {
            kind: MeasureKind::Density {
                family,
                bound,
                total,
            },
        })
    }

    pub fn is_lebesgue(&self) -> bool {
        matches!(self.kind, MeasureKind::Lebesgue)
    }

    /// Density before normalization (1 for Lebesgue).
    pub fn density_raw(&self, x: f64) -> f64 {
        match &self.kind {
            MeasureKind::Lebesgue => 1.0,
            MeasureKind::Density { family, .. } => family.eval(x),
        }
    }

    /// Density of the probability normalization.
    pub fn density_norm(&self, x: f64) -> f64 {
        match &self.kind {
            MeasureKind::Lebesgue => 1.0,
            MeasureKind::Density { family, total, .. } => family.eval(x) / total,
        }
    }

    /// Declared two-sided bound on the raw density.
    pub fn bound(&self) -> f64 {
        match &self.kind {
            MeasureKind::Lebesgue => 1.0,
            MeasureKind::Density { bound, .. } => *bound,
        }
    }

    /// Worst factor by which sampled raw density values escape the declared
    /// band [1/bound, bound]; 1 means the declaration holds.
    pub fn bound_violation(&self) -> f64 {
        match &self.kind {
            MeasureKind::Lebesgue => 1.0,
            MeasureKind::Density { family, bound, .. } => {
                let mut worst = 1.0f64;
                for i in 0..=512 {
                    let v = family.eval(i as f64 / 512.0);
                    worst = worst.max(v / bound).max(1.0 / (v * bound));
                }
                worst
            }
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            MeasureKind::Lebesgue => Vec::new(),
            MeasureKind::Density { family, .. } => family.breakpoints(),
        }
    }

    /// Probability mass of [a, b].
    pub fn mass_between(&self, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::BadInterval { a, b });
        }
        match &self.kind {
            MeasureKind::Lebesgue => Ok(b - a),
            MeasureKind::Density { family, total, .. } => {
                let rule = GaussLegendre::new(DEFAULT_POINTS)?;
                let pw = PiecewiseFunction::from_family(family);
                // split long intervals so the fixed-order rule stays sharp
                let panels = ((b - a) * 64.0).ceil().max(1.0) as usize;
                let mut acc = 0.0;
                for i in 0..panels {
                    let lo = a + (b - a) * i as f64 / panels as f64;
                    let hi = a + (b - a) * (i + 1) as f64 / panels as f64;
                    acc += integrate(&pw, lo, hi, &rule)?;
                }
                Ok(acc / total)
            }
        }
    }

    pub fn spec(&self) -> MeasureSpec {
        match &self.kind {
            MeasureKind::Lebesgue => MeasureSpec::Lebesgue,
            MeasureKind::Density { family, bound, .. } => MeasureSpec::Density {
                family: family.clone(),
                bound: *bound,
            },
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            MeasureKind::Lebesgue => "lebesgue".to_string(),
            MeasureKind::Density { family, .. } => format!("density:{}", family.label()),
        }
    }
}

/// Serializable form of a measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    Lebesgue,
    Density { family: FunctionSpec, bound: f64 },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<Measure> {
        match self {
            MeasureSpec::Lebesgue => Ok(Measure::lebesgue()),
            MeasureSpec::Density { family, bound } => Measure::density(family.clone(), *bound),
        }
    }
}

/// Largest atom mass of the partition under mu.
pub fn mesh_norm(partition: &IntervalPartition, mu: &Measure) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..partition.atoms() {
        let (a, b) = partition.atom(i);
        worst = worst.max(mu.mass_between(a, b)?);
    }
    Ok(worst)
}

/// Splits every atom of mass above eps into equal-mass pieces, leaving the
/// small atoms untouched. The result refines the input, coincides with it on
/// the union of atoms of mass <= eps, and every new piece has mass in
/// [eps/2, eps].
pub fn refine_to_mesh(
    partition: &IntervalPartition,
    mu: &Measure,
    eps: f64,
) -> Result<IntervalPartition> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::BadMeshThreshold(eps));
    }
    let mut breakpoints = vec![0.0];
    for i in 0..partition.atoms() {
        let (a, b) = partition.atom(i);
        let mass = mu.mass_between(a, b)?;
        if mass > eps {
            let pieces = (mass / eps).ceil() as usize;
            for p in 1..pieces {
                let target = mass * p as f64 / pieces as f64;
                breakpoints.push(mass_quantile(mu, a, b, target)?);
            }
        }
        breakpoints.push(b);
    }
    IntervalPartition::from_breakpoints(breakpoints)
}

/// Point x in [a, b] with mu([a, x]) = target, found by bisection on the
/// monotone cumulative mass.
fn mass_quantile(mu: &Measure, a: f64, b: f64, target: f64) -> Result<f64> {
    if mu.is_lebesgue() {
        return Ok(a + target);
    }
    let mut lo = a;
    let mut hi = b;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let m = mu.mass_between(a, mid)?;
        if (m - target).abs() < 1e-12 {
            return Ok(mid);
        }
        if m < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Serializable recipe for a partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionSpec {
    Uniform {
        n: usize,
    },
    Random {
        n: usize,
        seed: u64,
        grading: f64,
    },
    Explicit {
        breakpoints: Vec<f64>,
    },
}

impl PartitionSpec {
    pub fn build(&self) -> Result<IntervalPartition> {
        match self {
            PartitionSpec::Uniform { n } => IntervalPartition::uniform(*n),
            PartitionSpec::Random { n, seed, grading } => {
                IntervalPartition::random(*n, *seed, *grading)
            }
            PartitionSpec::Explicit { breakpoints } => {
                IntervalPartition::from_breakpoints(breakpoints.clone())
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PartitionSpec::Uniform { .. } => "uniform",
            PartitionSpec::Random { .. } => "random",
            PartitionSpec::Explicit { .. } => "explicit",
        }
    }
}
