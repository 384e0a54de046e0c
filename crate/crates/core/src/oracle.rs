//! Brute-force primal evaluation of the worst-case expectation on finite
//! per-region supports.
//!
//! The worst case is a linear program in lifted masses `m[i][j][g]`, the
//! mass region `i` moves from atom `j` to grid point `g`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::OrderCone;
use crate::error::{DroError, Result};
use crate::model::{AxisBox, Instance, PiecewiseObjective, Sense};
use crate::program::{self, ConvexProgram, SolveStatus, VarId};

const ON_GRID_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteInstance {
    /// Candidate support `G_i` of every region.
    pub grids: Vec<Vec<Vec<f64>>>,
    pub weights: Vec<f64>,
    pub atoms: Vec<Vec<Vec<f64>>>,
    pub cone: OrderCone,
    pub epsilon: f64,
    pub rho: f64,
    pub objective: PiecewiseObjective,
}

/// Product grid over `region`: per coordinate, the box bounds, every atom
/// coordinate, and `extra` interior values.
pub fn product_grid(region: &AxisBox, atoms: &[Vec<f64>], extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = region.dim();
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|c| {
            let mut v = vec![region.lower[c], region.upper[c]];
            v.extend(atoms.iter().map(|a| a[c]));
            if let Some(e) = extra.get(c) {
                v.extend(e.iter().copied());
            }
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= ON_GRID_TOL);
            v
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

impl FiniteInstance {
    pub fn new(instance: &Instance, grids: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = instance.partition.len();
        if grids.len() != n {
            return Err(DroError::DimensionMismatch {
                expected: n,
                found: grids.len(),
            });
        }
        for (i, (grid, atoms)) in grids.iter().zip(&instance.nominal.atoms).enumerate() {
            if grid.is_empty() {
                return Err(DroError::InvalidParameter(format!("grid of region {i} is empty")));
            }
            for a in atoms {
                if !grid.iter().any(|g| same_point(g, a)) {
                    return Err(DroError::InvalidParameter(format!(
                        "atom {a:?} of region {i} is not on its grid"
                    )));
                }
            }
        }
        Ok(FiniteInstance {
            grids,
            weights: instance.nominal.weights.clone(),
            atoms: instance.nominal.atoms.clone(),
            cone: instance.ambiguity.cone.clone(),
            epsilon: instance.ambiguity.epsilon,
            rho: instance.ambiguity.rho,
            objective: instance.objective.clone(),
        })
    }

    /// Finite instance whose region supports are the product grids of
    /// [`product_grid`] without extra points. On these grids the oracle
    /// value coincides with the box-support reformulation.
    pub fn from_boxes(instance: &Instance) -> Result<Self> {
        let grids = instance
            .partition
            .regions
            .iter()
            .zip(&instance.nominal.atoms)
            .map(|(r, a)| product_grid(r, a, &[]))
            .collect();
        Self::new(instance, grids)
    }

    pub fn regions(&self) -> usize {
        self.grids.len()
    }
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= ON_GRID_TOL)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub value: f64,
    pub p: Vec<f64>,
    /// `masses[i][j][g]`: mass of region `i` moved from atom `j` to grid
    /// point `g` (before the `1/N_i` scaling).
    pub masses: Vec<Vec<Vec<f64>>>,
}

/// Worst-case expectation of `f(x, .)` over the ambiguity set restricted to
/// the finite grids.
pub fn worst_case_expectation(x: &[f64], fi: &FiniteInstance) -> Result<WorstCase> {
    let n = fi.regions();
    let mut prog = ConvexProgram::new();
    let p = prog.add_vector("p", n, 0.0, f64::INFINITY);
    let e = prog.add_vector("e", n, 0.0, f64::INFINITY);
    let mut budget: Vec<(VarId, f64)> = Vec::new();
    let mut mass_ids: Vec<Vec<Vec<VarId>>> = Vec::with_capacity(n);
    for i in 0..n {
        let grid = &fi.grids[i];
        let values: Vec<f64> = grid.iter().map(|g| fi.objective.eval(x, g)).collect();
        // an empty region carries one artificial atom at its worst grid point
        let atoms: Vec<Vec<f64>> = if fi.atoms[i].is_empty() {
            let best = (0..grid.len()).fold(0, |b, g| if values[g] > values[b] { g } else { b });
            vec![grid[best].clone()]
        } else {
            fi.atoms[i].clone()
        };
        let inv_n = 1.0 / atoms.len() as f64;
        let mut per_atom = Vec::with_capacity(atoms.len());
        for (j, atom) in atoms.iter().enumerate() {
            let m = prog.add_vector(&format!("m[{i}][{j}]"), grid.len(), 0.0, f64::INFINITY);
            let mut row: Vec<(VarId, f64)> = m.iter().map(|v| (*v, 1.0)).collect();
            row.push((p[i], -1.0));
            prog.add_row(format!("marg[{i}][{j}]"), row, Sense::Eq, 0.0);
            for (g, v) in m.iter().enumerate() {
                prog.add_objective(*v, -inv_n * values[g]);
                let c = l1(&grid[g], atom);
                if c != 0.0 {
                    budget.push((*v, inv_n * c));
                }
            }
            per_atom.push(m);
        }
        mass_ids.push(per_atom);
        prog.add_row(format!("abs+[{i}]"), vec![(e[i], 1.0), (p[i], -1.0)], Sense::Ge, -fi.weights[i]);
        prog.add_row(format!("abs-[{i}]"), vec![(e[i], 1.0), (p[i], 1.0)], Sense::Ge, fi.weights[i]);
    }
    prog.add_row("transport", budget, Sense::Le, fi.epsilon);
    prog.add_row("tv", e.iter().map(|v| (*v, 1.0)).collect(), Sense::Le, fi.rho);
    prog.add_row("simplex", p.iter().map(|v| (*v, 1.0)).collect(), Sense::Eq, 1.0);
    for (r, row) in fi.cone.matrix.iter().enumerate() {
        prog.add_row(
            format!("cone[{r}]"),
            p.iter().zip(row).filter(|(_, a)| **a != 0.0).map(|(v, a)| (*v, *a)).collect(),
            Sense::Ge,
            0.0,
        );
    }
    let sol = program::solve(&prog, 1e-10)?;
    match sol.status {
        SolveStatus::Optimal => Ok(WorstCase {
            value: -sol.objective,
            p: sol.values_of(&p),
            masses: mass_ids
                .iter()
                .map(|per| per.iter().map(|m| sol.values_of(m)).collect())
                .collect(),
        }),
        SolveStatus::Infeasible => Err(DroError::InfeasibleAmbiguity),
        _ => Err(DroError::Solver(sol.detail)),
    }
}

/// Grid search over decisions; ties go to the lowest index.
pub fn exhaustive_argmin(x_grid: &[Vec<f64>], fi: &FiniteInstance) -> Result<(Vec<f64>, f64)> {
    if x_grid.is_empty() {
        return Err(DroError::InvalidParameter("decision grid is empty".into()));
    }
    let values = x_grid
        .par_iter()
        .map(|x| worst_case_expectation(x, fi).map(|w| w.value))
        .collect::<Result<Vec<f64>>>()?;
    let best = (0..values.len()).fold(0, |b, k| if values[k] < values[b] { k } else { b });
    Ok((x_grid[best].clone(), values[best]))
}
