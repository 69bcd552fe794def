//! Chebyshevian B-splines driven by a system of positive weights.
//!
//! A weight system w_1, ..., w_k spans a space of generalized polynomials
//! through iterated integrals. The triangular family behind everything here
//! is the set of runs
//!
//!   R[p, q](x) = integral 0..x of w_q * R[p, q-1],    R[p, p-1] = 1,
//!
//! nested integrals whose innermost factor is w_p and outermost is w_q.
//! The dual functions used in the determinant representation are
//! u*_{j,i} = R[k-j-i+2, k-j]; their derivative chain
//! D R[p, q] = w_q * R[p, q-1] turns confluent (repeated-knot) determinant
//! rows into products of weight derivatives and shallower runs.
//!
//! The one-sided kernels g_j(x, y) vanish for y > x and otherwise equal the
//! iterated integral from y to x with outermost factor w_1; they satisfy
//! d/dy g_j = -w_j(y) g_{j-1} away from the diagonal.
//!
//! A basis function is a ratio of two confluent determinants over its knot
//! window: columns are the duals u*_1 .. u*_k plus either u*_{k+1}
//! (denominator, cached per index) or the kernel section g_k(x, .)
//! (numerator, assembled per evaluation point). With unit weights the
//! construction collapses to the classical B-splines, which is the main
//! correctness oracle for all of this machinery.

use crate::bspline::{BasisKind, EvalBackend, KnotSequence, SplineBasis};
use crate::error::{Error, Result};
use crate::families::FunctionSpec;
use crate::quadrature::{nested_chain, PanelGrid, PanelTable};
use std::collections::HashMap;
use std::sync::Arc;

const MASTER_PANELS: usize = 512;
const KERNEL_PANELS_PER_UNIT: f64 = 128.0;
const TABLE_POINTS: usize = 10;

/// Positive smooth weights w_1..w_k with their precomputed run tables.
pub struct WeightSystem {
    weights: Vec<FunctionSpec>,
    // runs[p-1][q-p] = R[p, q]
    runs: Vec<Vec<PanelTable>>,
}

impl WeightSystem {
    pub fn new(weights: Vec<FunctionSpec>) -> Result<Arc<Self>> {
        WeightSystem::with_panels(weights, MASTER_PANELS)
    }

    /// Same system on a custom master grid; the default is deliberately
    /// oversampled, frozen constant systems can use far fewer panels.
    pub fn with_panels(weights: Vec<FunctionSpec>, panels: usize) -> Result<Arc<Self>> {
        if weights.is_empty() {
            return Err(Error::WeightCount {
                expected: 1,
                got: 0,
            });
        }
        for (j, w) in weights.iter().enumerate() {
            if !w.is_smooth() {
                return Err(Error::BrokenWeightSystem(format!(
                    "weight {} ({}) is not smooth",
                    j + 1,
                    w.label()
                )));
            }
            for s in 0..=512 {
                let x = s as f64 / 512.0;
                let v = w.eval(x);
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::BrokenWeightSystem(format!(
                        "weight {} ({}) is {v} at x = {x}",
                        j + 1,
                        w.label()
                    )));
                }
            }
        }
        let grid = PanelGrid::uniform(0.0, 1.0, panels, TABLE_POINTS)?;
        let k = weights.len();
        let mut runs = Vec::with_capacity(k);
        for p in 1..=k {
            let factors: Vec<_> = (p..=k)
                .map(|q| {
                    let w = weights[q - 1].clone();
                    move |x: f64| w.eval(x)
                })
                .collect();
            runs.push(nested_chain(&grid, &factors));
        }
        Ok(Arc::new(WeightSystem { weights, runs }))
    }

    /// System of k unit weights (the classical degeneration).
    pub fn unit(k: usize) -> Result<Arc<Self>> {
        WeightSystem::with_panels(vec![FunctionSpec::constant(1.0); k], 64)
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[FunctionSpec] {
        &self.weights
    }

    /// 1-based accessor matching the w_j notation.
    pub fn weight(&self, j: usize) -> &FunctionSpec {
        &self.weights[j - 1]
    }

    pub fn label(&self) -> String {
        let parts: Vec<String> = self.weights.iter().map(|w| w.label()).collect();
        parts.join("|")
    }

    /// Run value R[p, q](x); empty runs (p > q) are the constant 1.
    pub fn run_value(&self, p: usize, q: usize, x: f64) -> f64 {
        if p > q {
            return 1.0;
        }
        self.runs[p - 1][q - p].eval(x)
    }

    /// d-th derivative of a run, peeling the outermost weight:
    /// D^d R[p, q] = sum over r of C(d-1, r) w_q^(r) D^(d-1-r) R[p, q-1].
    pub fn run_deriv(&self, p: usize, q: usize, d: usize, x: f64) -> f64 {
        if d == 0 {
            return self.run_value(p, q, x);
        }
        if p > q {
            return 0.0;
        }
        let w = &self.weights[q - 1];
        let mut acc = 0.0;
        for r in 0..d {
            acc += binom(d - 1, r) * w.deriv(r, x) * self.run_deriv(p, q - 1, d - 1 - r, x);
        }
        acc
    }

    /// Dual iterated integral u*_{level, depth}; depth 1 is the constant 1.
    pub fn dual_value(&self, level: usize, depth: usize, x: f64) -> f64 {
        let k = self.order();
        if depth <= 1 {
            return if depth == 1 { 1.0 } else { 0.0 };
        }
        self.run_value(k + 2 - level - depth, k - level, x)
    }

    pub fn dual_deriv(&self, level: usize, depth: usize, d: usize, x: f64) -> f64 {
        if depth <= 1 {
            return if d == 0 && depth == 1 { 1.0 } else { 0.0 };
        }
        let k = self.order();
        self.run_deriv(k + 2 - level - depth, k - level, d, x)
    }

    /// Sampled minimum of w_j over [a, b].
    pub fn weight_min_on(&self, j: usize, a: f64, b: f64) -> f64 {
        let w = self.weight(j);
        (0..=128)
            .map(|s| w.eval(a + (b - a) * s as f64 / 128.0))
            .fold(f64::MAX, f64::min)
    }

    pub fn weight_max_on(&self, j: usize, a: f64, b: f64) -> f64 {
        let w = self.weight(j);
        (0..=128)
            .map(|s| w.eval(a + (b - a) * s as f64 / 128.0))
            .fold(f64::MIN, f64::max)
    }

    /// Largest modulus of continuity among the weights at separation delta.
    pub fn max_modulus(&self, delta: f64) -> f64 {
        self.weights
            .iter()
            .map(|w| w.modulus(delta))
            .fold(0.0, f64::max)
    }

    pub fn modulus(&self, j: usize, delta: f64) -> f64 {
        self.weight(j).modulus(delta)
    }

    /// Kernel value h_j(x, y) ignoring the one-sided indicator, by a fresh
    /// chain of nested integrals from y. Requires x >= y.
    fn h_value(&self, j: usize, x: f64, y: f64) -> f64 {
        let w1 = self.weights[0].eval(x);
        if j == 1 {
            return w1;
        }
        if x - y < 1e-15 {
            return 0.0;
        }
        let panels = ((x - y) * KERNEL_PANELS_PER_UNIT).ceil() as usize + 1;
        let grid = PanelGrid::uniform(y, x, panels, TABLE_POINTS).expect("ordered kernel grid");
        let factors: Vec<_> = (2..=j)
            .rev()
            .map(|q| {
                let w = self.weights[q - 1].clone();
                move |s: f64| w.eval(s)
            })
            .collect();
        let chain = nested_chain(&grid, &factors);
        w1 * chain.last().unwrap().eval(x)
    }

    /// One-sided kernel derivative D^d_y g_j(x, y). The indicator is taken
    /// as 1 for y <= x, except at x = 1 where the left limit in x is used,
    /// matching the evaluation conventions of the bases.
    pub fn kernel_deriv(&self, j: usize, x: f64, y: f64, dy_order: usize) -> f64 {
        let active = if x < 1.0 { y <= x } else { y < 1.0 };
        if !active {
            return 0.0;
        }
        // g[d][q] = D^d_y g_q(x, y) for the active side
        let mut g = vec![vec![0.0; j + 1]; dy_order + 1];
        for q in 1..=j {
            g[0][q] = self.h_value(q, x, y);
        }
        for d in 1..=dy_order {
            for q in 2..=j {
                let w = &self.weights[q - 1];
                let mut acc = 0.0;
                for r in 0..d {
                    acc += binom(d - 1, r) * w.deriv(r, y) * g[d - 1 - r][q - 1];
                }
                g[d][q] = -acc;
            }
        }
        g[dy_order][j]
    }
}

fn binom(n: usize, k: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// Points in nondecreasing order with the derivative order each repeated
/// point contributes to a confluent determinant row.
#[derive(Clone, Debug)]
pub struct ConfluentPointSet {
    points: Vec<f64>,
    conf: Vec<usize>,
}

impl ConfluentPointSet {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::BadKnots("empty point set".to_string()));
        }
        for pair in points.windows(2) {
            if !(pair[0] <= pair[1]) {
                return Err(Error::BadKnots(format!(
                    "points must be nondecreasing: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        let mut conf = vec![0usize; points.len()];
        for i in 1..points.len() {
            if points[i] == points[i - 1] {
                conf[i] = conf[i - 1] + 1;
            }
        }
        Ok(ConfluentPointSet { points, conf })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn confluencies(&self) -> &[usize] {
        &self.conf
    }
}

/// A column of a confluent determinant: a function with derivatives.
pub trait DerivativeColumn {
    fn value(&self, deriv: usize, x: f64) -> f64;
}

impl DerivativeColumn for FunctionSpec {
    fn value(&self, deriv: usize, x: f64) -> f64 {
        self.deriv(deriv, x)
    }
}

pub struct ClosureColumn<F: Fn(usize, f64) -> f64>(pub F);

impl<F: Fn(usize, f64) -> f64> DerivativeColumn for ClosureColumn<F> {
    fn value(&self, deriv: usize, x: f64) -> f64 {
        (self.0)(deriv, x)
    }
}

/// Determinant with rows D^{conf_r} col_c (points_r): repeated points take
/// successive derivatives. Columns are equilibrated before the pivoted
/// elimination so clustered points do not poison the scaling.
pub fn confluent_determinant(
    pts: &ConfluentPointSet,
    cols: &[&dyn DerivativeColumn],
) -> Result<f64> {
    let n = pts.len();
    if cols.len() != n {
        return Err(Error::BasisMismatch(format!(
            "{} columns for {} points",
            cols.len(),
            n
        )));
    }
    let mut mat = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            mat[r * n + c] = cols[c].value(pts.conf[r], pts.points[r]);
        }
    }
    Ok(det_equilibrated(n, &mut mat))
}

/// Determinant by column equilibration plus partially pivoted elimination.
pub(crate) fn det_equilibrated(n: usize, a: &mut [f64]) -> f64 {
    let mut scale = 1.0;
    for c in 0..n {
        let mx = (0..n).map(|r| a[r * n + c].abs()).fold(0.0f64, f64::max);
        if mx > 0.0 {
            scale *= mx;
            for r in 0..n {
                a[r * n + c] /= mx;
            }
        }
    }
    let mut det = scale;
    for col in 0..n {
        let mut piv_row = col;
        let mut piv_abs = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > piv_abs {
                piv_row = r;
                piv_abs = v;
            }
        }
        if piv_abs == 0.0 {
            return 0.0;
        }
        if piv_row != col {
            for c in 0..n {
                a.swap(col * n + c, piv_row * n + c);
            }
            det = -det;
        }
        let piv = a[col * n + col];
        det *= piv;
        for r in col + 1..n {
            let f = a[r * n + col] / piv;
            if f != 0.0 {
                for c in col + 1..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
    }
    det
}

/// Kernel tables anchored at one knot y: S[q](x) with h_q(x, y) = w_1(x) S[q](x).
struct KnotKernel {
    tables: Vec<PanelTable>, // index q - 2 for q = 2..=k
}

impl KnotKernel {
    fn build(ws: &WeightSystem, y: f64) -> Result<Self> {
        let k = ws.order();
        let mut tables = Vec::new();
        if k >= 2 && y < 1.0 {
            let panels = ((1.0 - y) * KERNEL_PANELS_PER_UNIT).ceil() as usize + 1;
            let grid = PanelGrid::uniform(y, 1.0, panels, TABLE_POINTS)?;
            for q in 2..=k {
                let factors: Vec<_> = (2..=q)
                    .rev()
                    .map(|m| {
                        let w = ws.weight(m).clone();
                        move |s: f64| w.eval(s)
                    })
                    .collect();
                let chain = nested_chain(&grid, &factors);
                tables.push(chain.into_iter().last().unwrap());
            }
        }
        Ok(KnotKernel { tables })
    }

    /// h_q(x, y) for q = 1..=k at a point x >= y.
    fn h_values(&self, ws: &WeightSystem, x: f64) -> Vec<f64> {
        let w1 = ws.weights[0].eval(x);
        let mut out = Vec::with_capacity(ws.order());
        out.push(w1);
        for t in &self.tables {
            out.push(w1 * t.eval(x));
        }
        out
    }
}

struct RowPoint {
    y: f64,
    conf: usize,
    kernel: Option<Arc<KnotKernel>>,
}

/// Per-basis evaluation state: cached determinant blocks plus kernel tables.
pub struct ChebEvaluator {
    ws: Arc<WeightSystem>,
    rows: Vec<Vec<RowPoint>>,
    left_blocks: Vec<Vec<f64>>, // (k+1) x k row-major
    denominators: Vec<f64>,
}

impl ChebEvaluator {
    pub(crate) fn weight_system(&self) -> &Arc<WeightSystem> {
        &self.ws
    }

    /// Unit-integral basis function value by the determinant ratio.
    pub(crate) fn m_value(&self, i: usize, x: f64) -> f64 {
        let k = self.ws.order();
        let rows = &self.rows[i];
        let lo = rows[0].y;
        let hi = rows[k].y;
        if x < lo || x > hi || (x >= hi && !(hi == 1.0 && x == 1.0)) {
            return 0.0;
        }
        let n = k + 1;
        let mut mat = vec![0.0; n * n];
        for (r, row) in rows.iter().enumerate() {
            for c in 0..k {
                mat[r * n + c] = self.left_blocks[i][r * k + c];
            }
            mat[r * n + k] = self.kernel_entry(row, x);
        }
        let det = det_equilibrated(n, &mut mat);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sign * det / self.denominators[i]
    }

    /// D^conf_y g_k(x, y) for one determinant row, using the knot tables.
    fn kernel_entry(&self, row: &RowPoint, x: f64) -> f64 {
        let k = self.ws.order();
        let active = if x < 1.0 { row.y <= x } else { row.y < 1.0 };
        if !active {
            return 0.0;
        }
        let h = match &row.kernel {
            Some(kk) => kk.h_values(&self.ws, x),
            None => return 0.0,
        };
        if row.conf == 0 {
            return h[k - 1];
        }
        let d = row.conf;
        let mut g = vec![vec![0.0; k + 1]; d + 1];
        for q in 1..=k {
            g[0][q] = h[q - 1];
        }
        for dd in 1..=d {
            for q in 2..=k {
                let w = self.ws.weight(q);
                let mut acc = 0.0;
                for r in 0..dd {
                    acc += binom(dd - 1, r) * w.deriv(r, row.y) * g[dd - 1 - r][q - 1];
                }
                g[dd][q] = -acc;
            }
        }
        g[d][k]
    }
}

/// Chebyshevian B-spline basis for the weight system on the given knots.
/// Denominator determinants must come out positive, otherwise the system is
/// rejected as inadmissible on these knots.
pub fn build_chebyshev_basis(knots: KnotSequence, ws: &Arc<WeightSystem>) -> Result<SplineBasis> {
    let k = knots.order();
    if ws.order() != k {
        return Err(Error::WeightCount {
            expected: k,
            got: ws.order(),
        });
    }
    let count = knots.count();
    let t = knots.knots();

    let mut kernel_cache: HashMap<u64, Arc<KnotKernel>> = HashMap::new();
    let mut kernel_for = |y: f64| -> Result<Option<Arc<KnotKernel>>> {
        if y >= 1.0 {
            return Ok(None);
        }
        match kernel_cache.entry(y.to_bits()) {
            std::collections::hash_map::Entry::Occupied(e) => Ok(Some(e.get().clone())),
            std::collections::hash_map::Entry::Vacant(e) => {
                let kk = Arc::new(KnotKernel::build(ws, y)?);
                e.insert(kk.clone());
                Ok(Some(kk))
            }
        }
    };

    let mut rows_all = Vec::with_capacity(count);
    let mut blocks = Vec::with_capacity(count);
    let mut denoms = Vec::with_capacity(count);
    for i in 0..count {
        let window = &t[i..=i + k];
        let pts = ConfluentPointSet::new(window.to_vec())?;
        let mut rows = Vec::with_capacity(k + 1);
        for (r, &y) in window.iter().enumerate() {
            rows.push(RowPoint {
                y,
                conf: pts.confluencies()[r],
                kernel: kernel_for(y)?,
            });
        }
        // left block: duals of depth 1..k, cached once per index
        let mut block = vec![0.0; (k + 1) * k];
        for (r, row) in rows.iter().enumerate() {
            for c in 0..k {
                block[r * k + c] = ws.dual_deriv(0, c + 1, row.conf, row.y);
            }
        }
        // denominator: same block extended by the depth k+1 dual
        let n = k + 1;
        let mut mat = vec![0.0; n * n];
        for (r, row) in rows.iter().enumerate() {
            for c in 0..k {
                mat[r * n + c] = block[r * k + c];
            }
            mat[r * n + k] = ws.dual_deriv(0, k + 1, row.conf, row.y);
        }
        let den = det_equilibrated(n, &mut mat);
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::BrokenWeightSystem(format!(
                "denominator determinant {den} at index {i}"
            )));
        }
        rows_all.push(rows);
        blocks.push(block);
        denoms.push(den);
    }

    let evaluator = ChebEvaluator {
        ws: ws.clone(),
        rows: rows_all,
        left_blocks: blocks,
        denominators: denoms,
    };
    SplineBasis::with_backend(
        knots,
        BasisKind::Chebyshev,
        EvalBackend::Chebyshev(Box::new(evaluator)),
        None,
    )
}

/// Per-index comparison of a Chebyshevian basis against the classical one
/// on the same knots, over a shared sample grid.
#[derive(Clone, Copy, Debug)]
pub struct IndexComparison {
    pub index: usize,
    pub sup_diff: f64,
    pub supp_len: f64,
    /// sup_diff * supp_len / max_j modulus(w_j, supp_len); how tightly the
    /// difference follows the weight oscillation scale.
    pub bound_ratio: f64,
    /// sup |M_i| * supp_len, the scale-free size of the bump itself.
    pub sup_scaled: f64,
}

pub fn compare_to_classical(
    cheb: &SplineBasis,
    classical: &SplineBasis,
    grid: &[f64],
) -> Result<Vec<IndexComparison>> {
    if cheb.count() != classical.count() || cheb.order() != classical.order() {
        return Err(Error::BasisMismatch(
            "bases have different shapes".to_string(),
        ));
    }
    let ws = cheb
        .weight_system()
        .ok_or_else(|| Error::BasisMismatch("first basis carries no weights".to_string()))?
        .clone();
    let mut out = Vec::with_capacity(cheb.count());
    for i in 0..cheb.count() {
        let (a, b) = cheb.support(i);
        let len = b - a;
        let mut sup_diff = 0.0f64;
        let mut sup_abs = 0.0f64;
        for &x in grid {
            let mc = cheb.m_value(i, x)?;
            let ml = classical.m_value(i, x)?;
            sup_diff = sup_diff.max((mc - ml).abs());
            sup_abs = sup_abs.max(mc.abs());
        }
        let osc = ws.max_modulus(len);
        out.push(IndexComparison {
            index: i,
            sup_diff,
            supp_len: len,
            bound_ratio: if osc > 0.0 {
                sup_diff * len / osc
            } else {
                0.0
            },
            sup_scaled: sup_abs * len,
        });
    }
    Ok(out)
}

/// The four determinants comparing a weight system to its frozen (constant)
/// minorant on one knot window: q and r are the frozen denominator and
/// numerator, eps and delta the excess of the true ones over them.
#[derive(Clone, Copy, Debug)]
pub struct DeterminantSplit {
    pub q: f64,
    pub eps: f64,
    pub r: f64,
    pub delta: f64,
}

pub fn proof_quantities(
    knots: &KnotSequence,
    ws: &Arc<WeightSystem>,
    index: usize,
    x: f64,
) -> Result<DeterminantSplit> {
    let k = knots.order();
    if ws.order() != k {
        return Err(Error::WeightCount {
            expected: k,
            got: ws.order(),
        });
    }
    if index >= knots.count() {
        return Err(Error::IndexOutOfRange {
            index,
            count: knots.count(),
        });
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain(x));
    }
    let (a, b) = knots.support(index);
    let frozen_weights: Vec<FunctionSpec> = (1..=k)
        .map(|j| FunctionSpec::constant(ws.weight_min_on(j, a, b)))
        .collect();
    let frozen = WeightSystem::with_panels(frozen_weights, 64)?;

    let q = denominator_det(knots, &frozen, index)?;
    let den = denominator_det(knots, ws, index)?;
    let r = numerator_det(knots, &frozen, index, x)?;
    let num = numerator_det(knots, ws, index, x)?;
    Ok(DeterminantSplit {
        q,
        eps: den - q,
        r,
        delta: num - r,
    })
}

fn window_points(knots: &KnotSequence, index: usize) -> Result<ConfluentPointSet> {
    let k = knots.order();
    ConfluentPointSet::new(knots.knots()[index..=index + k].to_vec())
}

/// Denominator determinant over one knot window, via the dual columns.
pub fn denominator_det(
    knots: &KnotSequence,
    ws: &Arc<WeightSystem>,
    index: usize,
) -> Result<f64> {
    let k = knots.order();
    let pts = window_points(knots, index)?;
    let n = k + 1;
    let mut mat = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            mat[r * n + c] =
                ws.dual_deriv(0, c + 1, pts.confluencies()[r], pts.points()[r]);
        }
    }
    Ok(det_equilibrated(n, &mut mat))
}

/// Numerator determinant at x over one knot window: dual columns of depth
/// 1..k and the kernel section as the last column, without cached tables.
pub fn numerator_det(
    knots: &KnotSequence,
    ws: &Arc<WeightSystem>,
    index: usize,
    x: f64,
) -> Result<f64> {
    let k = knots.order();
    let pts = window_points(knots, index)?;
    let n = k + 1;
    let mut mat = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..k {
            mat[r * n + c] =
                ws.dual_deriv(0, c + 1, pts.confluencies()[r], pts.points()[r]);
        }
        mat[r * n + k] = ws.kernel_deriv(k, x, pts.points()[r], pts.confluencies()[r]);
    }
    Ok(det_equilibrated(n, &mut mat))
}
