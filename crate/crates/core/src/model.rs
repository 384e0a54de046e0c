//! Domain types shared by every stage of the pipeline, plus whole-instance
//! validation.
//!
//! All types are plain data: immutable once built, `Send + Sync`, and
//! serializable to the instance JSON document.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cones::OrderCone;
use crate::error::{DroError, Result};
use crate::partition::RegionTree;

/// Absolute tolerance on probability vectors summing to one.
pub const PROB_TOL: f64 = 1e-12;

/// Tolerance used when deciding whether a point sits inside a box.
const CONTAIN_TOL: f64 = 1e-12;

/// Axis-aligned box `[lower, upper]` in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = AxisBox { lower, upper };
        if let Some(msg) = b.defect() {
            return Err(DroError::InvalidDimension(msg));
        }
        Ok(b)
    }

    /// The interval `[lower, upper]` as a one-dimensional box.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn defect(&self) -> Option<String> {
        if self.lower.is_empty() {
            return Some("box dimension must be at least 1".into());
        }
        if self.lower.len() != self.upper.len() {
            return Some(format!(
                "box bounds have lengths {} and {}",
                self.lower.len(),
                self.upper.len()
            ));
        }
        for (k, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Some(format!("box coordinate {k} has lower {l} > upper {u}"));
            }
        }
        None
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    /// Closed-box membership.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (l, u))| *p >= l - CONTAIN_TOL && *p <= u + CONTAIN_TOL)
    }

    pub fn contains_box(&self, other: &AxisBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|k| {
                other.lower[k] >= self.lower[k] - CONTAIN_TOL
                    && other.upper[k] <= self.upper[k] + CONTAIN_TOL
            })
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    /// Volume of the intersection of two boxes (zero when they only touch).
    pub fn overlap_volume(&self, other: &AxisBox) -> f64 {
        (0..self.dim())
            .map(|k| {
                let lo = self.lower[k].max(other.lower[k]);
                let hi = self.upper[k].min(other.upper[k]);
                (hi - lo).max(0.0)
            })
            .product()
    }

    /// Support function `sup_{a in box} <v, a>`.
    pub fn support(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(vk, (l, u))| {
                if *vk == 0.0 {
                    0.0
                } else {
                    (l * vk).max(u * vk)
                }
            })
            .sum()
    }

    /// Restriction to a subset of coordinates.
    pub fn project(&self, coords: &[usize]) -> AxisBox {
        AxisBox {
            lower: coords.iter().map(|&c| self.lower[c]).collect(),
            upper: coords.iter().map(|&c| self.upper[c]).collect(),
        }
    }
}

/// Affine map `x -> matrix * x + offset`. An empty `matrix` means the map is
/// constant in `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    #[serde(default)]
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn constant(offset: Vec<f64>) -> Self {
        AffineMap {
            matrix: Vec::new(),
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.offset.clone();
        for (row, o) in self.matrix.iter().zip(out.iter_mut()) {
            *o += dot(row, x);
        }
        out
    }

    /// Coefficient of `x[col]` in output coordinate `row`.
    pub fn coeff(&self, row: usize, col: usize) -> f64 {
        self.matrix
            .get(row)
            .and_then(|r| r.get(col))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Convex quadratic `x -> x^T quad x + linear . x + constant`.
///
/// Empty `quad` or `linear` vectors stand for zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvexQuadratic {
    #[serde(default)]
    pub quad: Vec<Vec<f64>>,
    #[serde(default)]
    pub linear: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
}

impl ConvexQuadratic {
    pub fn constant(c: f64) -> Self {
        ConvexQuadratic {
            constant: c,
            ..Default::default()
        }
    }

    pub fn linear(linear: Vec<f64>, constant: f64) -> Self {
        ConvexQuadratic {
            quad: Vec::new(),
            linear,
            constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant + dot(&self.linear, x);
        for (i, row) in self.quad.iter().enumerate() {
            for (j, q) in row.iter().enumerate() {
                v += q * x[i] * x[j];
            }
        }
        v
    }

    pub fn has_quadratic_term(&self) -> bool {
        self.quad.iter().flatten().any(|q| *q != 0.0)
    }

    /// Factor `L` (n x r) with `quad = L L^T`, or `None` when the form is
    /// not positive semidefinite.
    pub fn psd_factor(&self, n: usize) -> Option<Vec<Vec<f64>>> {
        if !self.has_quadratic_term() {
            return Some(Vec::new());
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (i, row) in self.quad.iter().enumerate() {
            for (j, q) in row.iter().enumerate() {
                if i >= n || j >= n {
                    return None;
                }
                // symmetrize
                m[(i, j)] += 0.5 * q;
                m[(j, i)] += 0.5 * q;
            }
        }
        let scale = m.amax().max(1.0);
        let eig = SymmetricEigen::new(m);
        let mut cols = Vec::new();
        for (k, lam) in eig.eigenvalues.iter().enumerate() {
            if *lam < -1e-10 * scale {
                return None;
            }
            if *lam > 1e-14 * scale {
                let s = lam.sqrt();
                cols.push((0..n).map(|i| eig.eigenvectors[(i, k)] * s).collect::<Vec<_>>());
            }
        }
        // rows of L
        Some((0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
    }
}

/// One piece `g(x, xi) = a(x) . xi + b(x)` of a piecewise objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub slope: AffineMap,
    pub intercept: ConvexQuadratic,
}

impl AffinePiece {
    /// Piece whose slope and intercept do not depend on the decision.
    pub fn fixed(slope: Vec<f64>, intercept: f64) -> Self {
        AffinePiece {
            slope: AffineMap::constant(slope),
            intercept: ConvexQuadratic::constant(intercept),
        }
    }

    pub fn dim(&self) -> usize {
        self.slope.dim()
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> f64 {
        dot(&self.slope.eval(x), xi) + self.intercept.eval(x)
    }
}

/// Coordinate block of a separable objective together with its pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableBlock {
    pub coords: Vec<usize>,
    pub pieces: Vec<AffinePiece>,
}

/// `f(x, xi) = max_k g_k(x, xi)` or, in separable mode,
/// `f(x, xi) = sum_l max_k g_lk(x, xi_l)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiecewiseObjective {
    Max { pieces: Vec<AffinePiece> },
    Separable { blocks: Vec<SeparableBlock> },
}

impl PiecewiseObjective {
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> f64 {
        match self {
            PiecewiseObjective::Max { pieces } => max_piece(pieces, x, xi),
            PiecewiseObjective::Separable { blocks } => blocks
                .iter()
                .map(|b| {
                    let sub: Vec<f64> = b.coords.iter().map(|&c| xi[c]).collect();
                    max_piece(&b.pieces, x, &sub)
                })
                .sum(),
        }
    }

    /// Dimension of the uncertain vector the objective reads.
    pub fn support_dim(&self) -> usize {
        match self {
            PiecewiseObjective::Max { pieces } => pieces.first().map_or(0, |p| p.dim()),
            PiecewiseObjective::Separable { blocks } => blocks
                .iter()
                .flat_map(|b| b.coords.iter().map(|c| c + 1))
                .max()
                .unwrap_or(0),
        }
    }

    pub fn is_separable(&self) -> bool {
        matches!(self, PiecewiseObjective::Separable { .. })
    }

    /// All pieces, ignoring block structure.
    pub fn all_pieces(&self) -> Vec<&AffinePiece> {
        match self {
            PiecewiseObjective::Max { pieces } => pieces.iter().collect(),
            PiecewiseObjective::Separable { blocks } => {
                blocks.iter().flat_map(|b| b.pieces.iter()).collect()
            }
        }
    }
}

fn max_piece(pieces: &[AffinePiece], x: &[f64], xi: &[f64]) -> f64 {
    pieces
        .iter()
        .map(|p| p.eval(x, xi))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

/// `coeffs . x (sense) rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// The feasible decision set `X`: box bounds plus optional linear rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub constraints: Vec<DecisionRow>,
}

impl DecisionSpec {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        DecisionSpec {
            lower,
            upper,
            constraints: Vec::new(),
        }
    }

    /// Decision set pinned to a single point.
    pub fn fixed(x: &[f64]) -> Self {
        Self::boxed(x.to_vec(), x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
            && self.constraints.iter().all(|r| {
                let lhs = dot(&r.coeffs, x);
                match r.sense {
                    Sense::Le => lhs <= r.rhs + tol,
                    Sense::Ge => lhs >= r.rhs - tol,
                    Sense::Eq => (lhs - r.rhs).abs() <= tol,
                }
            })
    }
}

/// Regions `Xi_i` tiling the support, with the tree that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub support: AxisBox,
    pub regions: Vec<AxisBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<RegionTree>,
}

impl PartitionScheme {
    /// The trivial partition with one region equal to the support.
    pub fn single(support: AxisBox) -> Self {
        PartitionScheme {
            regions: vec![support.clone()],
            support,
            tree: None,
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Lowest-index region whose closed box contains `point`.
    pub fn classify(&self, point: &[f64]) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(point))
    }
}

/// Empirical weights `p_hat` and the per-region atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalDistribution {
    pub weights: Vec<f64>,
    pub atoms: Vec<Vec<Vec<f64>>>,
    pub empty: Vec<usize>,
    pub sample_count: usize,
}

impl NominalDistribution {
    /// Atom count `N_i` used by the reformulation: the artificial atom of an
    /// empty region counts as one.
    pub fn effective_count(&self, region: usize) -> usize {
        self.atoms[region].len().max(1)
    }

    pub fn is_empty_region(&self, region: usize) -> bool {
        self.atoms[region].is_empty()
    }
}

/// Transport budget `epsilon`, weight budget `rho` and the order cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityParams {
    pub epsilon: f64,
    pub rho: f64,
    pub cone: OrderCone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub decision: DecisionSpec,
    pub objective: PiecewiseObjective,
    pub partition: PartitionScheme,
    pub nominal: NominalDistribution,
    pub ambiguity: AmbiguityParams,
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_instance(self)
    }
}

/// One failed invariant found by [`validate_instance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: String,
    pub index: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{} [{}]: {}", self.invariant, i, self.detail),
            None => write!(f, "{}: {}", self.invariant, self.detail),
        }
    }
}

#[derive(Default)]
struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, invariant: &str, index: Option<usize>, detail: impl Into<String>) {
        self.0.push(Violation {
            invariant: invariant.to_string(),
            index,
            detail: detail.into(),
        });
    }
}

/// Checks every type invariant of an instance and returns the violations
/// found (empty when the instance is consistent).
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    let mut rep = Report::default();
    let part = &instance.partition;
    let nom = &instance.nominal;

    // support and regions
    if let Some(msg) = part.support.defect() {
        rep.push("invalid box", None, format!("support: {msg}"));
    }
    let d = part.support.dim();
    for (i, r) in part.regions.iter().enumerate() {
        if let Some(msg) = r.defect() {
            rep.push("invalid box", Some(i), msg);
        } else if r.dim() != d {
            rep.push("region dimension", Some(i), format!("dimension {} vs {d}", r.dim()));
        } else if !part.support.contains_box(r) {
            rep.push("region outside support", Some(i), format!("{r:?}"));
        }
    }
    if part.regions.is_empty() {
        rep.push("empty partition", None, "no regions");
    }
    let dims_ok = part.regions.iter().all(|r| r.defect().is_none() && r.dim() == d)
        && part.support.defect().is_none();
    if dims_ok {
        for i in 0..part.regions.len() {
            for j in (i + 1)..part.regions.len() {
                let ov = part.regions[i].overlap_volume(&part.regions[j]);
                if ov > 1e-12 * part.support.volume().max(1.0) {
                    rep.push("overlapping regions", Some(i), format!("overlaps region {j}"));
                }
            }
        }
        let total: f64 = part.regions.iter().map(|r| r.volume()).sum();
        let vol = part.support.volume();
        if (total - vol).abs() > 1e-9 * vol.max(1.0) {
            rep.push(
                "regions do not cover support",
                None,
                format!("region volume {total} vs support volume {vol}"),
            );
        }
    }

    // objective
    let xdim = instance.decision.dim();
    validate_objective(&instance.objective, d, xdim, &mut rep);

    // decision set
    let dec = &instance.decision;
    if dec.upper.len() != xdim {
        rep.push("decision bounds", None, "lower and upper have different lengths");
    } else {
        for k in 0..xdim {
            if dec.lower[k] > dec.upper[k] {
                rep.push("decision bounds", Some(k), "lower exceeds upper");
            }
        }
        for (r, row) in dec.constraints.iter().enumerate() {
            if row.coeffs.len() != xdim {
                rep.push("decision row dimension", Some(r), "coefficient length mismatch");
            }
        }
        if rep.0.iter().all(|v| !v.invariant.starts_with("decision"))
            && !crate::program::decision_feasible(dec)
        {
            rep.push("empty decision set", None, "feasibility solve failed");
        }
    }

    // nominal distribution
    let m = part.regions.len();
    if nom.weights.len() != m || nom.atoms.len() != m {
        rep.push(
            "nominal dimension",
            None,
            format!(
                "{} weights and {} atom lists for {m} regions",
                nom.weights.len(),
                nom.atoms.len()
            ),
        );
    } else {
        let sum: f64 = nom.weights.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            rep.push("weights sum != 1", None, format!("sum is {sum}"));
        }
        let empties: Vec<usize> = (0..m).filter(|&i| nom.atoms[i].is_empty()).collect();
        if empties != nom.empty {
            rep.push(
                "empty set mismatch",
                None,
                format!("declared {:?}, atoms imply {:?}", nom.empty, empties),
            );
        }
        let n_atoms: usize = nom.atoms.iter().map(|a| a.len()).sum();
        if n_atoms != nom.sample_count {
            rep.push(
                "sample count",
                None,
                format!("{n_atoms} atoms but sample_count {}", nom.sample_count),
            );
        }
        let denom = (nom.sample_count + empties.len()) as f64;
        for i in 0..m {
            let w = nom.weights[i];
            if w < 0.0 {
                rep.push("negative weight", Some(i), format!("{w}"));
            }
            let expected = nom.atoms[i].len().max(1) as f64 / denom;
            if (w - expected).abs() > PROB_TOL {
                rep.push("weight formula", Some(i), format!("{w} vs expected {expected}"));
            }
            for (j, a) in nom.atoms[i].iter().enumerate() {
                if a.len() != d {
                    rep.push("atom dimension", Some(i), format!("atom {j} has length {}", a.len()));
                } else if dims_ok && !part.regions[i].contains(a) {
                    rep.push("atom outside region", Some(i), format!("atom {j} = {a:?}"));
                }
            }
        }
    }

    // ambiguity
    let amb = &instance.ambiguity;
    if !(amb.epsilon >= 0.0) {
        rep.push("negative epsilon", None, format!("{}", amb.epsilon));
    }
    if !(amb.rho >= 0.0) {
        rep.push("negative rho", None, format!("{}", amb.rho));
    }
    if amb.cone.dim() != m && !(amb.cone.is_trivial() && amb.cone.dim() == 0) {
        rep.push(
            "cone dimension",
            None,
            format!("cone has {} columns for {m} regions", amb.cone.dim()),
        );
    }
    rep.0
}

fn validate_objective(obj: &PiecewiseObjective, d: usize, xdim: usize, rep: &mut Report) {
    let check_piece = |p: &AffinePiece, dim: usize, idx: usize, rep: &mut Report| {
        if p.dim() != dim {
            rep.push("piece dimension", Some(idx), format!("slope dim {} vs {dim}", p.dim()));
        }
        if p.slope.matrix.iter().any(|r| r.len() != xdim)
            || (!p.slope.matrix.is_empty() && p.slope.matrix.len() != p.dim())
        {
            rep.push("piece slope map", Some(idx), "matrix shape mismatch");
        }
        let q = &p.intercept;
        if (!q.linear.is_empty() && q.linear.len() != xdim)
            || (!q.quad.is_empty()
                && (q.quad.len() != xdim || q.quad.iter().any(|r| r.len() != xdim)))
        {
            rep.push("piece intercept", Some(idx), "shape mismatch");
        } else if q.psd_factor(xdim).is_none() {
            rep.push("intercept not convex", Some(idx), "quadratic form is not PSD");
        }
    };
    match obj {
        PiecewiseObjective::Max { pieces } => {
            if pieces.is_empty() {
                rep.push("no pieces", None, "objective needs K >= 1");
            }
            for (k, p) in pieces.iter().enumerate() {
                check_piece(p, d, k, rep);
            }
        }
        PiecewiseObjective::Separable { blocks } => {
            if blocks.is_empty() {
                rep.push("no blocks", None, "separable objective needs a block");
            }
            let mut seen = vec![false; d];
            let mut idx = 0;
            for (l, b) in blocks.iter().enumerate() {
                if b.pieces.is_empty() {
                    rep.push("no pieces", Some(l), "block needs K >= 1");
                }
                for &c in &b.coords {
                    if c >= d || seen[c] {
                        rep.push("block coordinates", Some(l), format!("coordinate {c}"));
                    } else {
                        seen[c] = true;
                    }
                }
                for p in &b.pieces {
                    check_piece(p, b.coords.len(), idx, rep);
                    idx += 1;
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::newsvendor_objective;

    fn newsvendor_instance() -> Instance {
        let support = AxisBox::interval(0.0, 1.0).unwrap();
        let regions = vec![
            AxisBox::interval(0.0, 0.5).unwrap(),
            AxisBox::interval(0.5, 1.0).unwrap(),
        ];
        Instance {
            decision: DecisionSpec::boxed(vec![0.0], vec![1.0]),
            objective: newsvendor_objective(4.0, 2.0).unwrap(),
            partition: PartitionScheme {
                support,
                regions,
                tree: None,
            },
            nominal: NominalDistribution {
                weights: vec![0.5, 0.5],
                atoms: vec![vec![vec![0.2]], vec![vec![0.7]]],
                empty: vec![],
                sample_count: 2,
            },
            ambiguity: AmbiguityParams {
                epsilon: 0.1,
                rho: 0.2,
                cone: OrderCone::trivial(2),
            },
        }
    }

    #[test]
    fn consistent_instance_has_empty_report() {
        let inst = newsvendor_instance();
        assert!(validate_instance(&inst).is_empty(), "{:?}", validate_instance(&inst));
    }

    #[test]
    fn atom_outside_region_is_reported() {
        let mut inst = newsvendor_instance();
        inst.partition.regions = vec![
            AxisBox::interval(0.0, 1.0).unwrap(),
            AxisBox::interval(1.0, 2.0).unwrap(),
        ];
        inst.partition.support = AxisBox::interval(0.0, 2.0).unwrap();
        inst.nominal.atoms[0][0] = vec![1.5];
        let rep = validate_instance(&inst);
        assert!(rep.iter().any(|v| v.invariant == "atom outside region" && v.index == Some(0)));
    }

    #[test]
    fn weights_not_summing_to_one_are_reported() {
        let mut inst = newsvendor_instance();
        inst.nominal.weights = vec![0.6, 0.6];
        let rep = validate_instance(&inst);
        assert!(rep.iter().any(|v| v.invariant == "weights sum != 1"));
    }

    #[test]
    fn validation_is_idempotent() {
        let mut inst = newsvendor_instance();
        inst.ambiguity.rho = -1.0;
        let a = validate_instance(&inst);
        let b = validate_instance(&inst);
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn non_psd_intercept_is_reported() {
        let mut inst = newsvendor_instance();
        if let PiecewiseObjective::Max { pieces } = &mut inst.objective {
            pieces[0].intercept.quad = vec![vec![-1.0]];
        }
        let rep = validate_instance(&inst);
        assert!(rep.iter().any(|v| v.invariant == "intercept not convex"));
    }

    #[test]
    fn box_support_function() {
        let b = AxisBox::cube(2, 0.0, 1.0).unwrap();
        assert_eq!(b.support(&[1.0, -1.0]), 1.0);
        let c = AxisBox::interval(-1.8, 3.0).unwrap();
        assert!((c.support(&[2.0]) - 6.0).abs() < 1e-15);
        assert_eq!(c.support(&[0.0]), 0.0);
    }

    #[test]
    fn boxes_reject_inverted_bounds() {
        assert!(AxisBox::interval(1.0, 0.0).is_err());
        assert!(AxisBox::new(vec![], vec![]).is_err());
    }

    #[test]
    fn psd_factor_reproduces_form() {
        let q = ConvexQuadratic {
            quad: vec![vec![2.0, 1.0], vec![1.0, 2.0]],
            linear: vec![],
            constant: 0.0,
        };
        let l = q.psd_factor(2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..l[i].len()).map(|r| l[i][r] * l[j][r]).sum();
                assert!((v - q.quad[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = newsvendor_instance();
        let back = Instance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(inst, back);
    }
}
