//! Solver-agnostic convex programs: linear rows, convex-quadratic epigraph
//! constraints and a linear objective, plus the solve contract.
//!
//! The backend is the Clarabel interior-point solver. Quadratic epigraphs
//! `t >= v^T Q v + c.x + d` are handed to it as rotated second-order cones
//! through a PSD factor of `Q`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{DroError, Result};
use crate::model::{ConvexQuadratic, DecisionSpec, Sense};

/// Feasibility residual accepted on an optimal solution.
pub const FEAS_TOL: f64 = 1e-8;

/// Default relative optimality tolerance for [`solve`].
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `epigraph >= vars^T form vars + linear + constant` with `form` PSD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEpigraph {
    pub name: String,
    pub epigraph: VarId,
    pub vars: Vec<VarId>,
    pub form: Vec<Vec<f64>>,
    pub linear: Vec<(VarId, f64)>,
    pub constant: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvexProgram {
    pub variables: Vec<Variable>,
    pub linear: Vec<LinearConstraint>,
    pub quadratic: Vec<QuadraticEpigraph>,
    pub objective: Vec<(VarId, f64)>,
    pub objective_constant: f64,
    blocks: BTreeMap<String, Vec<VarId>>,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        id
    }

    /// Adds a variable and files it under `block`.
    pub fn add_block_var(
        &mut self,
        block: &str,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
    ) -> VarId {
        let id = self.add_var(name, lower, upper);
        self.blocks.entry(block.to_string()).or_default().push(id);
        id
    }

    /// Adds `count` variables `block[0..count]`.
    pub fn add_vector(&mut self, block: &str, count: usize, lower: f64, upper: f64) -> Vec<VarId> {
        (0..count)
            .map(|k| self.add_block_var(block, format!("{block}[{k}]"), lower, upper))
            .collect()
    }

    pub fn block(&self, name: &str) -> &[VarId] {
        self.blocks.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn block_names(&self) -> impl Iterator<Item = &str> {
        self.blocks.keys().map(String::as_str)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        self.linear.push(LinearConstraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
    }

    /// `epigraph >= q(x)` for a convex quadratic over the listed variables.
    pub fn add_quadratic_epigraph(
        &mut self,
        name: impl Into<String>,
        epigraph: VarId,
        vars: &[VarId],
        q: &ConvexQuadratic,
    ) {
        let linear = q
            .linear
            .iter()
            .zip(vars)
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, v)| (*v, *c))
            .collect();
        self.quadratic.push(QuadraticEpigraph {
            name: name.into(),
            epigraph,
            vars: vars.to_vec(),
            form: q.quad.clone(),
            linear,
            constant: q.constant,
        });
    }

    pub fn add_objective(&mut self, var: VarId, coeff: f64) {
        if coeff != 0.0 {
            self.objective.push((var, coeff));
        }
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .map(|(v, c)| c * values[v.0])
                .sum::<f64>()
    }

    /// Largest absolute violation of any bound or constraint at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for row in &self.linear {
            let lhs: f64 = row.terms.iter().map(|(v, c)| c * values[v.0]).sum();
            let viol = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for q in &self.quadratic {
            let x: Vec<f64> = q.vars.iter().map(|v| values[v.0]).collect();
            let mut rhs = q.constant + q.linear.iter().map(|(v, c)| c * values[v.0]).sum::<f64>();
            for (i, row) in q.form.iter().enumerate() {
                for (j, a) in row.iter().enumerate() {
                    rhs += a * x[i] * x[j];
                }
            }
            worst = worst.max(rhs - values[q.epigraph.0]);
        }
        worst
    }

    /// Sparse LP/QP text export in CPLEX LP style. Columns and rows keep
    /// their registry names (`t[i][j]`, `z[i][j][k][c]`, ...).
    pub fn to_lp_string(&self) -> String {
        let name = |v: &VarId| self.variables[v.0].name.clone();
        let mut out = String::from("\\ convex program export\nMinimize\n obj:");
        for (v, c) in &self.objective {
            let _ = write!(out, " {} {}", signed(*c), name(v));
        }
        if self.objective_constant != 0.0 {
            let _ = write!(out, " {}", signed(self.objective_constant));
        }
        out.push_str("\nSubject To\n");
        for row in &self.linear {
            let _ = write!(out, " {}:", row.name);
            for (v, c) in &row.terms {
                let _ = write!(out, " {} {}", signed(*c), name(v));
            }
            let _ = writeln!(out, " {} {}", row.sense, row.rhs);
        }
        for q in &self.quadratic {
            let _ = write!(out, " {}: -1 {}", q.name, name(&q.epigraph));
            for (v, c) in &q.linear {
                let _ = write!(out, " {} {}", signed(*c), name(v));
            }
            out.push_str(" + [");
            for (i, row) in q.form.iter().enumerate() {
                for (j, a) in row.iter().enumerate() {
                    if *a != 0.0 {
                        if i == j {
                            let _ = write!(out, " {} {}^2", signed(*a), name(&q.vars[i]));
                        } else {
                            let _ = write!(
                                out,
                                " {} {} * {}",
                                signed(*a),
                                name(&q.vars[i]),
                                name(&q.vars[j])
                            );
                        }
                    }
                }
            }
            let _ = writeln!(out, " ] <= {}", -q.constant);
        }
        out.push_str("Bounds\n");
        for v in &self.variables {
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {} free", v.name);
                }
                (true, false) => {
                    let _ = writeln!(out, " {} >= {}", v.name, v.lower);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {} <= {}", v.name, v.upper);
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= {} <= {}", v.lower, v.name, v.upper);
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

fn signed(c: f64) -> String {
    if c < 0.0 {
        format!("- {}", -c)
    } else {
        format!("+ {c}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: u32,
    pub max_violation: f64,
    /// Backend status string, kept for diagnostics.
    pub detail: String,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    pub fn values_of(&self, vars: &[VarId]) -> Vec<f64> {
        vars.iter().map(|v| self.values[v.0]).collect()
    }

    /// Objective value or the corresponding error for non-optimal statuses.
    pub fn optimal_value(&self) -> Result<f64> {
        match self.status {
            SolveStatus::Optimal => Ok(self.objective),
            SolveStatus::Infeasible => Err(DroError::Solver("program is infeasible".into())),
            SolveStatus::Unbounded => Err(DroError::Solver("program is unbounded".into())),
            SolveStatus::NumericalFailure => Err(DroError::Solver(self.detail.clone())),
        }
    }
}

#[derive(Default)]
struct Rows {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
}

impl Rows {
    fn push(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.rhs.len();
        for (c, v) in terms {
            if v != 0.0 {
                self.rows.push(r);
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.rhs.push(rhs);
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn append(&mut self, other: Rows) {
        let off = self.len();
        self.rows.extend(other.rows.into_iter().map(|r| r + off));
        self.cols.extend(other.cols);
        self.vals.extend(other.vals);
        self.rhs.extend(other.rhs);
    }
}

/// Solves `program` to relative optimality tolerance `tol`.
pub fn solve(program: &ConvexProgram, tol: f64) -> Result<Solution> {
    let n = program.num_vars();
    if let Some(bad) = program
        .linear
        .iter()
        .flat_map(|r| r.terms.iter())
        .chain(program.objective.iter())
        .find(|(v, _)| v.0 >= n)
    {
        return Err(DroError::Solver(format!("unregistered variable {}", bad.0 .0)));
    }

    let mut zero = Rows::default();
    let mut nonneg = Rows::default();
    for (k, v) in program.variables.iter().enumerate() {
        if v.lower.is_finite() && v.lower == v.upper {
            zero.push([(k, 1.0)], v.lower);
            continue;
        }
        if v.lower.is_finite() {
            nonneg.push([(k, -1.0)], -v.lower);
        }
        if v.upper.is_finite() {
            nonneg.push([(k, 1.0)], v.upper);
        }
    }
    for row in &program.linear {
        let terms = row.terms.iter().map(|(v, c)| (v.0, *c));
        match row.sense {
            Sense::Eq => zero.push(terms, row.rhs),
            Sense::Le => nonneg.push(terms, row.rhs),
            Sense::Ge => nonneg.push(terms.map(|(v, c)| (v, -c)), -row.rhs),
        }
    }
    let mut socs = Rows::default();
    let mut soc_dims = Vec::new();
    for q in &program.quadratic {
        let form = ConvexQuadratic {
            quad: q.form.clone(),
            linear: Vec::new(),
            constant: 0.0,
        };
        let factor = form.psd_factor(q.vars.len()).ok_or_else(|| {
            DroError::Solver(format!("quadratic form of {} is not PSD", q.name))
        })?;
        let rank = factor.first().map_or(0, Vec::len);
        // u = t - c.x - d >= 0 hosts the epigraph; as s = b - A x:
        let neg_u: Vec<(usize, f64)> = std::iter::once((q.epigraph.0, -1.0))
            .chain(q.linear.iter().map(|(v, c)| (v.0, *c)))
            .collect();
        if rank == 0 {
            nonneg.push(neg_u, -q.constant);
            continue;
        }
        // (u + 1, 2 L^T v, u - 1) in the second-order cone  <=>  u >= |L^T v|^2
        socs.push(neg_u.clone(), 1.0 - q.constant);
        for r in 0..rank {
            socs.push(
                q.vars
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.0, -2.0 * factor[i][r])),
                0.0,
            );
        }
        socs.push(neg_u, -1.0 - q.constant);
        soc_dims.push(rank + 2);
    }

    let mut cones = Vec::new();
    if zero.len() > 0 {
        cones.push(SupportedConeT::ZeroConeT(zero.len()));
    }
    if nonneg.len() > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(nonneg.len()));
    }
    cones.extend(soc_dims.iter().map(|&d| SupportedConeT::SecondOrderConeT(d)));
    let mut all = zero;
    all.append(nonneg);
    all.append(socs);

    let m = all.len();
    let a = CscMatrix::new_from_triplets(m, n, all.rows, all.cols, all.vals);
    let p = CscMatrix::<f64>::zeros((n, n));
    let mut c = vec![0.0; n];
    for (v, coeff) in &program.objective {
        c[v.0] += coeff;
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(400)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(FEAS_TOL.min(tol).max(1e-12))
        .tol_ktratio(1e-7)
        .max_threads(1)
        .build()
        .map_err(|e| DroError::Solver(format!("{e:?}")))?;

    if m == 0 {
        // no constraints at all: bounded only if the objective is zero
        let status = if c.iter().all(|v| *v == 0.0) {
            SolveStatus::Optimal
        } else {
            SolveStatus::Unbounded
        };
        return Ok(Solution {
            status,
            objective: program.objective_constant,
            values: vec![0.0; n],
            iterations: 0,
            max_violation: 0.0,
            detail: "trivial".into(),
        });
    }

    let mut solver = DefaultSolver::new(&p, &c, &a, &all.rhs, &cones, settings)
        .map_err(|e| DroError::Solver(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let values = sol.x.clone();
    let max_violation = program.max_violation(&values);
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if max_violation <= FEAS_TOL * 10.0 => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        _ => SolveStatus::NumericalFailure,
    };
    Ok(Solution {
        status,
        objective: program.objective_value(&values),
        values,
        iterations: sol.iterations,
        max_violation,
        detail: format!("{:?}", sol.status),
    })
}

/// Whether the decision set is nonempty.
pub fn decision_feasible(decision: &DecisionSpec) -> bool {
    let mut prog = ConvexProgram::new();
    let x: Vec<VarId> = (0..decision.dim())
        .map(|k| prog.add_block_var("x", format!("x[{k}]"), decision.lower[k], decision.upper[k]))
        .collect();
    if decision.constraints.is_empty() {
        return decision
            .lower
            .iter()
            .zip(&decision.upper)
            .all(|(l, u)| l <= u);
    }
    for (r, row) in decision.constraints.iter().enumerate() {
        prog.add_row(
            format!("X[{r}]"),
            x.iter().zip(&row.coeffs).map(|(v, c)| (*v, *c)).collect(),
            row.sense,
            row.rhs,
        );
    }
    matches!(solve(&prog, 1e-8), Ok(s) if s.is_optimal())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimize_bounded_variable() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_row("c", vec![(x, 1.0)], Sense::Ge, 3.0);
        p.add_objective(x, 1.0);
        let s = solve(&p, 1e-9).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 3.0).abs() < 1e-8);
    }

    #[test]
    fn epigraph_of_square() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 2.0, 2.0);
        let t = p.add_var("t", f64::NEG_INFINITY, f64::INFINITY);
        p.add_quadratic_epigraph(
            "sq",
            t,
            &[x],
            &ConvexQuadratic {
                quad: vec![vec![1.0]],
                linear: vec![],
                constant: 0.0,
            },
        );
        p.add_objective(t, 1.0);
        let s = solve(&p, 1e-9).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 4.0).abs() < 1e-7, "{}", s.objective);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        p.add_row("c", vec![(x, 1.0)], Sense::Ge, 2.0);
        p.add_objective(x, 1.0);
        assert_eq!(solve(&p, 1e-9).unwrap().status, SolveStatus::Infeasible);

        let mut q = ConvexProgram::new();
        let y = q.add_var("y", f64::NEG_INFINITY, 0.0);
        q.add_row("c", vec![(y, 1.0)], Sense::Le, 5.0);
        q.add_objective(y, 1.0);
        assert_eq!(solve(&q, 1e-9).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn small_lp_with_equalities() {
        // min -x - 2y  s.t. x + y = 1, x, y >= 0  -> y = 1
        let mut p = ConvexProgram::new();
        let x = p.add_var("x", 0.0, f64::INFINITY);
        let y = p.add_var("y", 0.0, f64::INFINITY);
        p.add_row("sum", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.0);
        p.add_objective(x, -1.0);
        p.add_objective(y, -2.0);
        let s = solve(&p, 1e-10).unwrap();
        assert!((s.objective + 2.0).abs() < 1e-8);
        assert!(s.max_violation < FEAS_TOL);
    }

    #[test]
    fn lp_export_names_rows_and_columns() {
        let mut p = ConvexProgram::new();
        let t = p.add_block_var("t", "t[0][0]", f64::NEG_INFINITY, f64::INFINITY);
        let x = p.add_vector("x", 1, 0.0, 1.0)[0];
        p.add_row("cut[0]", vec![(t, 1.0), (x, -4.0)], Sense::Ge, 0.0);
        p.add_objective(t, 1.0);
        let lp = p.to_lp_string();
        assert!(lp.contains("cut[0]: + 1 t[0][0] - 4 x[0] >= 0"));
        assert!(lp.contains("t[0][0] free"));
        assert!(lp.contains("0 <= x[0] <= 1"));
        assert_eq!(p.block("x"), &[x]);
    }

    #[test]
    fn decision_feasibility() {
        let mut d = DecisionSpec::boxed(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(decision_feasible(&d));
        d.constraints.push(crate::model::DecisionRow {
            coeffs: vec![1.0, 1.0],
            sense: Sense::Ge,
            rhs: 3.0,
        });
        assert!(!decision_feasible(&d));
    }
}
