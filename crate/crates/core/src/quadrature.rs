//! Composite Gauss-Legendre quadrature and iterated-integral tables.
//!
//! Integrals are always taken over panels that stop at every breakpoint of
//! the integrand, with a fixed-order Gauss rule per panel. An n-point rule
//! is exact through degree 2n - 1, so the default 10-point rule integrates
//! products of two splines of order <= 5 exactly on each panel.
//!
//! The same node layout doubles as a spectral representation: a smooth
//! function tabulated at the Gauss nodes of each panel can be re-evaluated
//! anywhere by barycentric interpolation, and antiderivatives accumulate
//! panel by panel through a precomputed partial-integration matrix. That is
//! how the triangular systems of iterated integrals behind Chebyshevian
//! weight systems are materialized.

use crate::chebyshev::WeightSystem;
use crate::error::{Error, Result};
use crate::families::FunctionSpec;
use crate::partition::Measure;
use std::sync::Arc;

pub const DEFAULT_POINTS: usize = 10;

/// Gauss-Legendre rule on the reference interval [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
    // partial[m * n + q] = integral of the q-th Lagrange basis from -1 to node m
    partial: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::BadPointCount);
        }
        let (nodes, weights) = legendre_nodes(points);
        let bary = barycentric_weights(&nodes);
        let partial = partial_matrix(&nodes, &bary);
        Ok(GaussLegendre {
            nodes,
            weights,
            bary,
            partial,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the rule to f on [a, b].
    pub fn apply<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Interpolates node values to the reference point t in [-1, 1].
    fn interpolate(&self, vals: &[f64], t: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((x, l), v) in self.nodes.iter().zip(&self.bary).zip(vals) {
            let d = t - x;
            if d.abs() < 1e-14 {
                return *v;
            }
            let c = l / d;
            num += c * v;
            den += c;
        }
        num / den
    }
}

fn legendre_value_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        if n == 1 {
            x = 0.0;
        }
        for _ in 0..100 {
            let (p, dp) = legendre_value_and_deriv(n, x);
            let dx = -p / dp;
            x += dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_value_and_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        pairs.push((x, w));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for q in 0..n {
        for m in 0..n {
            if m != q {
                w[q] /= nodes[q] - nodes[m];
            }
        }
    }
    let scale = w.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    w.iter_mut().for_each(|v| *v /= scale);
    w
}

/// Integrals of the Lagrange basis polynomials from -1 up to each node,
/// computed with an auxiliary rule that is exact for their degree.
fn partial_matrix(nodes: &[f64], bary: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let inner_pts = n / 2 + 2;
    let (inodes, iweights) = legendre_nodes(inner_pts);
    let lagrange = |q: usize, t: f64| -> f64 {
        let d = t - nodes[q];
        if d.abs() < 1e-14 {
            return 1.0;
        }
        let mut den = 0.0;
        for (x, l) in nodes.iter().zip(bary) {
            let dd = t - x;
            if dd.abs() < 1e-14 {
                return 0.0;
            }
            den += l / dd;
        }
        (bary[q] / d) / den
    };
    let mut out = vec![0.0; n * n];
    for m in 0..n {
        let hi = nodes[m];
        let mid = 0.5 * (-1.0 + hi);
        let half = 0.5 * (hi + 1.0);
        for q in 0..n {
            let mut acc = 0.0;
            for (t, w) in inodes.iter().zip(&iweights) {
                acc += w * lagrange(q, mid + half * t);
            }
            out[m * n + q] = acc * half;
        }
    }
    out
}

/// Function on [0, 1] that is smooth except at finitely many breakpoints.
#[derive(Clone)]
pub struct PiecewiseFunction {
    breakpoints: Vec<f64>,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl PiecewiseFunction {
    pub fn smooth<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        PiecewiseFunction {
            breakpoints: Vec::new(),
            f: Arc::new(f),
        }
    }

    pub fn with_breakpoints<F: Fn(f64) -> f64 + Send + Sync + 'static>(
        mut breakpoints: Vec<f64>,
        f: F,
    ) -> Self {
        breakpoints.retain(|x| x.is_finite());
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breakpoints.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        PiecewiseFunction {
            breakpoints,
            f: Arc::new(f),
        }
    }

    pub fn from_family(spec: &FunctionSpec) -> Self {
        let owned = spec.clone();
        PiecewiseFunction {
            breakpoints: spec.breakpoints(),
            f: Arc::new(move |x| owned.eval(x)),
        }
    }

    pub fn constant(c: f64) -> Self {
        PiecewiseFunction::smooth(move |_| c)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Pointwise product; breakpoints are merged.
    pub fn product(&self, other: &PiecewiseFunction) -> PiecewiseFunction {
        let mut bps = self.breakpoints.clone();
        bps.extend_from_slice(&other.breakpoints);
        let f = self.f.clone();
        let g = other.f.clone();
        PiecewiseFunction::with_breakpoints(bps, move |x| f(x) * g(x))
    }
}

/// Integral of f over [a, b], splitting panels at the breakpoints of f.
pub fn integrate(f: &PiecewiseFunction, a: f64, b: f64, rule: &GaussLegendre) -> Result<f64> {
    if !(a <= b) {
        return Err(Error::BadInterval { a, b });
    }
    if b - a < 1e-15 {
        return Ok(0.0);
    }
    let mut cuts = vec![a];
    for &x in &f.breakpoints {
        if x > a + 1e-14 && x < b - 1e-14 {
            cuts.push(x);
        }
    }
    cuts.push(b);
    let mut acc = 0.0;
    for pair in cuts.windows(2) {
        if pair[1] - pair[0] > 1e-15 {
            acc += rule.apply(pair[0], pair[1], |x| f.eval(x));
        }
    }
    Ok(acc)
}

/// Inner product of f and g in L2 of the measure mu, over [0, 1].
pub fn inner_product(
    f: &PiecewiseFunction,
    g: &PiecewiseFunction,
    mu: &Measure,
    rule: &GaussLegendre,
) -> Result<f64> {
    let mut prod = f.product(g);
    prod.breakpoints.extend(mu.breakpoints());
    prod.breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    prod.breakpoints.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mu = mu.clone();
    let inner = prod.f.clone();
    let weighted = PiecewiseFunction {
        breakpoints: prod.breakpoints.clone(),
        f: Arc::new(move |x| inner(x) * mu.density_norm(x)),
    };
    integrate(&weighted, 0.0, 1.0, rule)
}

/// Fixed panel decomposition of an interval with one Gauss rule per panel.
#[derive(Clone, Debug)]
pub struct PanelGrid {
    bounds: Vec<f64>,
    rule: GaussLegendre,
}

impl PanelGrid {
    pub fn uniform(a: f64, b: f64, panels: usize, points: usize) -> Result<Arc<Self>> {
        if !(a < b) {
            return Err(Error::BadInterval { a, b });
        }
        let panels = panels.max(1);
        let bounds: Vec<f64> = (0..=panels)
            .map(|i| a + (b - a) * i as f64 / panels as f64)
            .collect();
        Ok(Arc::new(PanelGrid {
            bounds,
            rule: GaussLegendre::new(points)?,
        }))
    }

    pub fn start(&self) -> f64 {
        self.bounds[0]
    }

    pub fn end(&self) -> f64 {
        *self.bounds.last().unwrap()
    }

    pub fn panels(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn points(&self) -> usize {
        self.rule.len()
    }

    fn panel_of(&self, x: f64) -> usize {
        let n = self.panels();
        match self
            .bounds
            .binary_search_by(|b| b.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    pub fn node(&self, panel: usize, q: usize) -> f64 {
        let lo = self.bounds[panel];
        let hi = self.bounds[panel + 1];
        0.5 * (lo + hi) + 0.5 * (hi - lo) * self.rule.nodes[q]
    }
}

/// Smooth function tabulated at the Gauss nodes of every panel of a grid.
#[derive(Clone)]
pub struct PanelTable {
    grid: Arc<PanelGrid>,
    node_vals: Vec<f64>,
}

impl PanelTable {
    /// Tabulates an explicit function (no integration involved).
    pub fn tabulate<F: Fn(f64) -> f64>(grid: &Arc<PanelGrid>, f: F) -> Self {
        let (np, nq) = (grid.panels(), grid.points());
        let mut node_vals = vec![0.0; np * nq];
        for p in 0..np {
            for q in 0..nq {
                node_vals[p * nq + q] = f(grid.node(p, q));
            }
        }
        PanelTable {
            grid: grid.clone(),
            node_vals,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = self.grid.panel_of(x);
        let lo = self.grid.bounds[p];
        let hi = self.grid.bounds[p + 1];
        let t = (2.0 * x - lo - hi) / (hi - lo);
        let nq = self.grid.points();
        self.grid
            .rule
            .interpolate(&self.node_vals[p * nq..(p + 1) * nq], t)
    }
}

/// Builds the triangular chain of iterated integrals
///   c_0 = 1,   c_l(x) = integral from grid start to x of factors[l-1] * c_{l-1},
/// returning one table per level (level l at index l - 1).
pub fn nested_chain<F: Fn(f64) -> f64>(grid: &Arc<PanelGrid>, factors: &[F]) -> Vec<PanelTable> {
    let (np, nq) = (grid.panels(), grid.points());
    let rule = &grid.rule;
    let mut prev = vec![1.0; np * nq];
    let mut out = Vec::with_capacity(factors.len());
    for fac in factors {
        let mut integrand = vec![0.0; np * nq];
        for p in 0..np {
            for q in 0..nq {
                integrand[p * nq + q] = fac(grid.node(p, q)) * prev[p * nq + q];
            }
        }
        let mut vals = vec![0.0; np * nq];
        let mut start = 0.0;
        for p in 0..np {
            let half = 0.5 * (grid.bounds[p + 1] - grid.bounds[p]);
            for m in 0..nq {
                let mut acc = 0.0;
                for q in 0..nq {
                    acc += rule.partial[m * nq + q] * integrand[p * nq + q];
                }
                vals[p * nq + m] = start + half * acc;
            }
            let mut full = 0.0;
            for q in 0..nq {
                full += rule.weights[q] * integrand[p * nq + q];
            }
            start += half * full;
        }
        out.push(PanelTable {
            grid: grid.clone(),
            node_vals: vals.clone(),
        });
        prev = vals;
    }
    out
}

/// Values of the dual iterated integrals of a weight system on a grid of
/// points: row i - 1 holds the depth-i function of level j (the constant 1
/// for i = 1). See the chebyshev module for the triangular system itself.
pub fn iterated_integral_table(
    ws: &WeightSystem,
    level: usize,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let k = ws.order();
    if level > k {
        return Err(Error::IndexOutOfRange {
            index: level,
            count: k + 1,
        });
    }
    for &x in grid {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
    }
    let mut rows = Vec::new();
    for i in 1..=(k + 1 - level) {
        rows.push(grid.iter().map(|&x| ws.dual_value(level, i, x)).collect());
    }
    Ok(rows)
}

/// One-sided kernel of order j: zero for x < y, the iterated integral from
/// y to x otherwise. dy_order differentiates in the second argument.
pub fn g_kernel(ws: &WeightSystem, j: usize, x: f64, y: f64, dy_order: usize) -> Result<f64> {
    let k = ws.order();
    if j < 1 || j > k {
        return Err(Error::IndexOutOfRange {
            index: j,
            count: k,
        });
    }
    if dy_order >= j {
        return Err(Error::KernelDerivative {
            order: dy_order,
            kernel: j,
        });
    }
    for &t in &[x, y] {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfDomain(t));
        }
    }
    Ok(ws.kernel_deriv(j, x, y, dy_order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Measure;

    fn rule(n: usize) -> GaussLegendre {
        GaussLegendre::new(n).unwrap()
    }

    #[test]
    fn nodes_symmetric_weights_sum_to_two() {
        for n in [1, 2, 3, 5, 10, 16] {
            let r = rule(n);
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-14, "n={n} sum={sum}");
            for q in 0..n {
                assert!((r.nodes[q] + r.nodes[n - 1 - q]).abs() < 1e-14);
                assert!((r.weights[q] - r.weights[n - 1 - q]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_integrates_to_length() {
        let f = PiecewiseFunction::constant(1.0);
        let v = integrate(&f, 0.0, 1.0, &rule(10)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cubic_exact_with_two_points() {
        let f = PiecewiseFunction::smooth(|x| x * x * x);
        let v = integrate(&f, 0.0, 1.0, &rule(2)).unwrap();
        assert!((v - 0.25).abs() < 1e-14);
    }

    #[test]
    fn adjacent_hats_product() {
        // two hats with h = 0.5 overlapping on [0.5, 1]: integral h/6 = 1/12
        let up = PiecewiseFunction::with_breakpoints(vec![0.5], |x| {
            if x < 0.5 {
                x / 0.5
            } else {
                (1.0 - x) / 0.5
            }
        });
        let down = PiecewiseFunction::with_breakpoints(vec![0.5], |x| {
            if x < 0.5 {
                0.0
            } else {
                (x - 0.5) / 0.5
            }
        });
        let prod = up.product(&down);
        let v = integrate(&prod, 0.0, 1.0, &rule(10)).unwrap();
        assert!((v - 1.0 / 12.0).abs() < 1e-14, "got {v}");
    }

    #[test]
    fn inverted_interval_rejected() {
        let f = PiecewiseFunction::constant(1.0);
        assert!(matches!(
            integrate(&f, 0.7, 0.2, &rule(4)),
            Err(Error::BadInterval { .. })
        ));
    }

    #[test]
    fn additivity_across_interior_point() {
        let f = PiecewiseFunction::with_breakpoints(vec![0.3, 0.6], |x| {
            if x < 0.3 {
                1.0 + x
            } else if x < 0.6 {
                x * x
            } else {
                (5.0 * x).sin()
            }
        });
        let r = rule(10);
        for &c in &[0.1, 0.3, 0.45, 0.77] {
            let whole = integrate(&f, 0.0, 1.0, &r).unwrap();
            let left = integrate(&f, 0.0, c, &r).unwrap();
            let right = integrate(&f, c, 1.0, &r).unwrap();
            assert!((whole - left - right).abs() < 1e-12, "cut at {c}");
        }
    }

    #[test]
    fn monomials_match_closed_forms() {
        let r = rule(10);
        for p in 0..=9u32 {
            let f = PiecewiseFunction::smooth(move |x| x.powi(p as i32));
            for &(a, b) in &[(0.0, 1.0), (0.2, 0.9), (0.55, 0.6)] {
                let v = integrate(&f, a, b, &r).unwrap();
                let exact =
                    (b.powi(p as i32 + 1) - a.powi(p as i32 + 1)) / (p as f64 + 1.0);
                assert!((v - exact).abs() < 1e-12, "x^{p} on [{a},{b}]");
            }
        }
    }

    #[test]
    fn unit_inner_product_is_total_mass() {
        let one = PiecewiseFunction::constant(1.0);
        let r = rule(10);
        let leb = Measure::lebesgue();
        assert!((inner_product(&one, &one, &leb, &r).unwrap() - 1.0).abs() < 1e-12);
        let dens = Measure::density(
            FunctionSpec::OnePlusEpsSin {
                eps: 0.3,
                freq: 1.0,
            },
            2.0,
        )
        .unwrap();
        assert!((inner_product(&one, &one, &dens, &r).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn chain_of_unit_factors_gives_monomials() {
        let grid = PanelGrid::uniform(0.0, 1.0, 64, 10).unwrap();
        let fs: Vec<_> = (0..4).map(|_| |_x: f64| 1.0).collect();
        let chain = nested_chain(&grid, &fs);
        let mut fact = 1.0;
        for (l, table) in chain.iter().enumerate() {
            fact *= (l + 1) as f64;
            for i in 0..=50 {
                let x = i as f64 / 50.0;
                let exact = x.powi(l as i32 + 1) / fact;
                assert!(
                    (table.eval(x) - exact).abs() < 1e-12,
                    "level {} at {x}",
                    l + 1
                );
            }
        }
    }

    #[test]
    fn chain_antiderivative_of_cosine() {
        let grid = PanelGrid::uniform(0.0, 1.0, 32, 10).unwrap();
        let chain = nested_chain(&grid, &[|x: f64| x.cos()]);
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!((chain[0].eval(x) - x.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn table_interpolation_reproduces_smooth_function() {
        let grid = PanelGrid::uniform(0.25, 1.0, 16, 10).unwrap();
        let t = PanelTable::tabulate(&grid, |x| (3.0 * x).exp());
        for i in 0..=64 {
            let x = 0.25 + 0.75 * i as f64 / 64.0;
            assert!(((t.eval(x) - (3.0 * x).exp()) / (3.0 * x).exp()).abs() < 1e-12);
        }
    }
}
