//! Finite convex programs equivalent to the distributionally robust problem
//! over a partitioned support, plus the SAA and single-region Wasserstein
//! special cases built independently for cross-checking.
//!
//! Transport and weight costs are the 1-norm, so every dual-norm bound is a
//! pair of componentwise inequalities.

use serde::{Deserialize, Serialize};

use crate::cones::OrderCone;
use crate::error::{DroError, Result};
use crate::model::{
    AffinePiece, AmbiguityParams, AxisBox, DecisionSpec, Instance, NominalDistribution,
    PartitionScheme, PiecewiseObjective, Sense, SeparableBlock,
};
use crate::program::{self, ConvexProgram, Solution, SolveStatus, VarId};

const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

/// `sup_{a in box} <v, a>` for a bounded box.
pub fn support_function_box(b: &AxisBox, v: &[f64]) -> Result<f64> {
    if v.len() != b.dim() {
        return Err(DroError::DimensionMismatch {
            expected: b.dim(),
            found: v.len(),
        });
    }
    let unbounded = v.iter().enumerate().any(|(k, vk)| {
        (*vk > 0.0 && !b.upper[k].is_finite()) || (*vk < 0.0 && !b.lower[k].is_finite())
    });
    if unbounded {
        return Err(DroError::UnboundedSupport { region: 0 });
    }
    Ok(b.support(v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conjugate {
    Value(f64),
    Infeasible,
}

/// Conjugate of `-g` for `g(xi) = a(x).xi + b(x)` evaluated at `y`: finite
/// only at `y = -a(x)`, where it equals `b(x)`.
pub fn neg_conjugate_affine(piece: &AffinePiece, x: &[f64], y: &[f64]) -> Conjugate {
    let a = piece.slope.eval(x);
    if a.len() == y.len() && a.iter().zip(y).all(|(ak, yk)| (ak + yk).abs() <= 1e-10) {
        Conjugate::Value(piece.intercept.eval(x))
    } else {
        Conjugate::Infeasible
    }
}

/// Decision variables of a program under construction.
struct DecisionVars {
    x: Vec<VarId>,
}

fn add_decision(prog: &mut ConvexProgram, decision: &DecisionSpec) -> DecisionVars {
    let x: Vec<VarId> = (0..decision.dim())
        .map(|k| prog.add_block_var("x", format!("x[{k}]"), decision.lower[k], decision.upper[k]))
        .collect();
    for (r, row) in decision.constraints.iter().enumerate() {
        prog.add_row(
            format!("X[{r}]"),
            x.iter().zip(&row.coeffs).map(|(v, c)| (*v, *c)).collect(),
            row.sense,
            row.rhs,
        );
    }
    DecisionVars { x }
}

/// Linear form standing for `b(x)`: either the affine terms directly or a
/// single epigraph variable when the intercept is genuinely quadratic.
#[derive(Clone)]
struct Intercept {
    terms: Vec<(VarId, f64)>,
    constant: f64,
}

fn intercept_form(
    prog: &mut ConvexProgram,
    dv: &DecisionVars,
    piece: &AffinePiece,
    name: String,
) -> Intercept {
    let q = &piece.intercept;
    if q.has_quadratic_term() {
        let beta = prog.add_block_var("beta", name.clone(), FREE.0, FREE.1);
        prog.add_quadratic_epigraph(name, beta, &dv.x, q);
        Intercept {
            terms: vec![(beta, 1.0)],
            constant: 0.0,
        }
    } else {
        Intercept {
            terms: q
                .linear
                .iter()
                .zip(&dv.x)
                .filter(|(c, _)| **c != 0.0)
                .map(|(c, v)| (*v, *c))
                .collect(),
            constant: q.constant,
        }
    }
}

/// Terms of `a_c(x)` (coordinate `c` of the slope) and its constant part.
fn slope_terms(dv: &DecisionVars, piece: &AffinePiece, c: usize) -> (Vec<(VarId, f64)>, f64) {
    let terms = dv
        .x
        .iter()
        .enumerate()
        .map(|(m, v)| (*v, piece.slope.coeff(c, m)))
        .filter(|(_, a)| *a != 0.0)
        .collect();
    (terms, piece.slope.offset[c])
}

fn scaled(terms: &[(VarId, f64)], s: f64) -> impl Iterator<Item = (VarId, f64)> + '_ {
    terms.iter().map(move |(v, c)| (*v, c * s))
}

fn check_bounded(partition: &PartitionScheme) -> Result<()> {
    match partition.regions.iter().position(|r| !r.is_bounded()) {
        Some(region) => Err(DroError::UnboundedSupport { region }),
        None => Ok(()),
    }
}

fn check_shapes(instance: &Instance) -> Result<()> {
    let viol = instance.validate();
    if let Some(v) = viol.first() {
        return Err(DroError::InvalidParameter(format!("inconsistent instance: {v}")));
    }
    check_bounded(&instance.partition)
}

/// Blocks of the objective: a max-of-affine objective is one block over all
/// coordinates.
fn blocks_of(objective: &PiecewiseObjective, dim: usize) -> Vec<SeparableBlock> {
    match objective {
        PiecewiseObjective::Max { pieces } => vec![SeparableBlock {
            coords: (0..dim).collect(),
            pieces: pieces.clone(),
        }],
        PiecewiseObjective::Separable { blocks } => blocks.clone(),
    }
}

/// Emits the per-(i, j, l) epigraph variable `w >= sup_{xi in D} [max_k
/// g_k(x, xi) - theta |xi - atom|_1]` through the conjugate rows of every
/// piece. `atom = None` is an empty region: no transport term, direct sup.
#[allow(clippy::too_many_arguments)]
fn add_inner_block(
    prog: &mut ConvexProgram,
    dv: &DecisionVars,
    theta: VarId,
    w: VarId,
    region: &AxisBox,
    atom: Option<&[f64]>,
    pieces: &[AffinePiece],
    intercepts: &[Intercept],
    tag: &str,
) {
    let dim = region.dim();
    for (k, (piece, icp)) in pieces.iter().zip(intercepts).enumerate() {
        let kt = format!("{tag}[{k}]");
        // w - b_k(x) - sum_c (u_c v+_c - lo_c v-_c) + <z, atom> >= const_b
        let mut row: Vec<(VarId, f64)> = vec![(w, 1.0)];
        row.extend(scaled(&icp.terms, -1.0));
        for c in 0..dim {
            let vp = prog.add_block_var("v", format!("v+{kt}[{c}]"), 0.0, f64::INFINITY);
            let vm = prog.add_block_var("v", format!("v-{kt}[{c}]"), 0.0, f64::INFINITY);
            row.push((vp, -region.upper[c]));
            row.push((vm, region.lower[c]));
            let (a_terms, a_const) = slope_terms(dv, piece, c);
            match atom {
                Some(atom) => {
                    let z = prog.add_block_var("z", format!("z{kt}[{c}]"), FREE.0, FREE.1);
                    // z - v = -a(x)
                    let mut eq = vec![(z, 1.0), (vp, -1.0), (vm, 1.0)];
                    eq.extend(a_terms.iter().copied());
                    prog.add_row(format!("conj{kt}[{c}]"), eq, Sense::Eq, -a_const);
                    prog.add_row(
                        format!("zub{kt}[{c}]"),
                        vec![(z, 1.0), (theta, -1.0)],
                        Sense::Le,
                        0.0,
                    );
                    prog.add_row(
                        format!("zlb{kt}[{c}]"),
                        vec![(z, 1.0), (theta, 1.0)],
                        Sense::Ge,
                        0.0,
                    );
                    if atom[c] != 0.0 {
                        row.push((z, atom[c]));
                    }
                }
                None => {
                    // v = a(x)
                    let mut eq = vec![(vp, 1.0), (vm, -1.0)];
                    eq.extend(scaled(&a_terms, -1.0));
                    prog.add_row(format!("split{kt}[{c}]"), eq, Sense::Eq, a_const);
                }
            }
        }
        prog.add_row(format!("cut{kt}"), row, Sense::Ge, icp.constant);
    }
}

fn build_common(instance: &Instance) -> Result<ConvexProgram> {
    check_shapes(instance)?;
    let part = &instance.partition;
    let nom = &instance.nominal;
    let amb = &instance.ambiguity;
    let blocks = blocks_of(&instance.objective, part.support.dim());

    let mut prog = ConvexProgram::new();
    let dv = add_decision(&mut prog, &instance.decision);
    let lambda = prog.add_block_var("lambda", "lambda", 0.0, f64::INFINITY);
    let theta = prog.add_block_var("theta", "theta", 0.0, f64::INFINITY);
    let eta = prog.add_block_var("eta", "eta", FREE.0, FREE.1);
    let m = part.len();
    let mu = prog.add_vector("mu", m, 0.0, f64::INFINITY);
    let nu = prog.add_vector("nu", amb.cone.rows(), 0.0, f64::INFINITY);

    let intercepts: Vec<Vec<Intercept>> = blocks
        .iter()
        .enumerate()
        .map(|(l, b)| {
            b.pieces
                .iter()
                .enumerate()
                .map(|(k, p)| intercept_form(&mut prog, &dv, p, format!("beta[{l}][{k}]")))
                .collect()
        })
        .collect();

    prog.add_objective(lambda, amb.rho);
    prog.add_objective(eta, 1.0);
    prog.add_objective(theta, amb.epsilon);

    for i in 0..m {
        let region = &part.regions[i];
        let n_i = nom.effective_count(i) as f64;
        // s_i = (1/N_i) sum_j sum_l w_ijl + mu_i - eta + (A^T nu)_i
        let s = prog.add_block_var("s", format!("s[{i}]"), FREE.0, FREE.1);
        let mut def = vec![(s, -1.0), (mu[i], 1.0), (eta, -1.0)];
        for (r, row) in amb.cone.matrix.iter().enumerate() {
            if row[i] != 0.0 {
                def.push((nu[r], row[i]));
            }
        }
        let atoms: Vec<Option<&[f64]>> = if nom.is_empty_region(i) {
            vec![None]
        } else {
            nom.atoms[i].iter().map(|a| Some(a.as_slice())).collect()
        };
        for (j, atom) in atoms.iter().enumerate() {
            for (l, block) in blocks.iter().enumerate() {
                let single = blocks.len() == 1;
                let name = if single {
                    format!("t[{i}][{j}]")
                } else {
                    format!("omega[{i}][{j}][{l}]")
                };
                let w = prog.add_block_var(if single { "t" } else { "omega" }, name, FREE.0, FREE.1);
                def.push((w, 1.0 / n_i));
                let sub_box = region.project(&block.coords);
                let sub_atom: Option<Vec<f64>> =
                    atom.map(|a| block.coords.iter().map(|&c| a[c]).collect());
                let tag = if single {
                    format!("[{i}][{j}]")
                } else {
                    format!("[{i}][{j}][{l}]")
                };
                add_inner_block(
                    &mut prog,
                    &dv,
                    theta,
                    w,
                    &sub_box,
                    sub_atom.as_deref(),
                    &block.pieces,
                    &intercepts[l],
                    &tag,
                );
            }
        }
        prog.add_row(format!("sdef[{i}]"), def, Sense::Eq, 0.0);
        prog.add_row(format!("sub[{i}]"), vec![(s, 1.0), (lambda, -1.0)], Sense::Le, 0.0);
        prog.add_row(format!("slb[{i}]"), vec![(s, 1.0), (lambda, 1.0)], Sense::Ge, 0.0);
        prog.add_objective(s, nom.weights[i]);
    }
    Ok(prog)
}

/// The finite convex program for a max-of-affine objective.
pub fn build_program(instance: &Instance) -> Result<ConvexProgram> {
    if instance.objective.is_separable() {
        return Err(DroError::UnsupportedObjective(
            "build_program expects a max-of-affine objective; use build_program_separable".into(),
        ));
    }
    build_common(instance)
}

/// The finite convex program for a coordinate-separable objective. Its size
/// grows linearly in the sample count.
pub fn build_program_separable(instance: &Instance) -> Result<ConvexProgram> {
    if !instance.objective.is_separable() {
        return Err(DroError::UnsupportedObjective(
            "build_program_separable expects a separable objective".into(),
        ));
    }
    build_common(instance)
}

/// Whichever of the two builders matches the objective mode.
pub fn build_any(instance: &Instance) -> Result<ConvexProgram> {
    build_common(instance)
}

/// Piece terms `g_k(x, xi)` as (linear terms in program vars, constant).
fn piece_at(
    dv: &DecisionVars,
    piece: &AffinePiece,
    icp: &Intercept,
    xi: &[f64],
) -> (Vec<(VarId, f64)>, f64) {
    let mut terms = icp.terms.clone();
    let mut constant = icp.constant;
    for (c, x) in xi.iter().enumerate() {
        let (a_terms, a_const) = slope_terms(dv, piece, c);
        terms.extend(scaled(&a_terms, *x));
        constant += a_const * x;
    }
    (terms, constant)
}

/// Sample average approximation: `min (1/N) sum_j f(x, xi_j)`.
pub fn reduce_saa(
    samples: &[Vec<f64>],
    objective: &PiecewiseObjective,
    decision: &DecisionSpec,
) -> Result<ConvexProgram> {
    if samples.is_empty() {
        return Err(DroError::InvalidParameter("SAA needs at least one sample".into()));
    }
    let dim = samples[0].len();
    let blocks = blocks_of(objective, dim);
    let mut prog = ConvexProgram::new();
    let dv = add_decision(&mut prog, decision);
    let intercepts: Vec<Vec<Intercept>> = blocks
        .iter()
        .enumerate()
        .map(|(l, b)| {
            b.pieces
                .iter()
                .enumerate()
                .map(|(k, p)| intercept_form(&mut prog, &dv, p, format!("beta[{l}][{k}]")))
                .collect()
        })
        .collect();
    let n = samples.len() as f64;
    for (j, xi) in samples.iter().enumerate() {
        for (l, block) in blocks.iter().enumerate() {
            let sub: Vec<f64> = block.coords.iter().map(|&c| xi[c]).collect();
            let e = prog.add_block_var("s", format!("s[{j}][{l}]"), FREE.0, FREE.1);
            prog.add_objective(e, 1.0 / n);
            for (k, piece) in block.pieces.iter().enumerate() {
                let (terms, constant) = piece_at(&dv, piece, &intercepts[l][k], &sub);
                let mut row = vec![(e, 1.0)];
                row.extend(scaled(&terms, -1.0));
                prog.add_row(format!("epi[{j}][{l}][{k}]"), row, Sense::Ge, constant);
            }
        }
    }
    Ok(prog)
}

/// Single-region Wasserstein DRO with 1-norm transport over a box support,
/// in the classical form with box multipliers `gamma >= 0` for
/// `C xi <= d`, `C = [I; -I]`.
pub fn reduce_drow(
    samples: &[Vec<f64>],
    objective: &PiecewiseObjective,
    decision: &DecisionSpec,
    epsilon: f64,
    support: &AxisBox,
) -> Result<ConvexProgram> {
    if !(epsilon >= 0.0) {
        return Err(DroError::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let PiecewiseObjective::Max { pieces } = objective else {
        return Err(DroError::UnsupportedObjective(
            "the Wasserstein reduction expects a max-of-affine objective".into(),
        ));
    };
    if samples.is_empty() {
        return Err(DroError::InvalidParameter("DROW needs at least one sample".into()));
    }
    if !support.is_bounded() {
        return Err(DroError::UnboundedSupport { region: 0 });
    }
    let dim = support.dim();
    let mut prog = ConvexProgram::new();
    let dv = add_decision(&mut prog, decision);
    let lambda = prog.add_block_var("lambda", "lambda", 0.0, f64::INFINITY);
    prog.add_objective(lambda, epsilon);
    let intercepts: Vec<Intercept> = pieces
        .iter()
        .enumerate()
        .map(|(k, p)| intercept_form(&mut prog, &dv, p, format!("beta[{k}]")))
        .collect();
    let n = samples.len() as f64;
    for (j, xi) in samples.iter().enumerate() {
        let s = prog.add_block_var("s", format!("s[{j}]"), FREE.0, FREE.1);
        prog.add_objective(s, 1.0 / n);
        for (k, piece) in pieces.iter().enumerate() {
            let (terms, constant) = piece_at(&dv, piece, &intercepts[k], xi);
            // s - g_k(x, xi_j) - <gamma_up, u - xi> - <gamma_lo, xi - lo> >= 0
            let mut row = vec![(s, 1.0)];
            row.extend(scaled(&terms, -1.0));
            for c in 0..dim {
                let gu = prog.add_block_var("gamma", format!("gu[{j}][{k}][{c}]"), 0.0, f64::INFINITY);
                let gl = prog.add_block_var("gamma", format!("gl[{j}][{k}][{c}]"), 0.0, f64::INFINITY);
                row.push((gu, -(support.upper[c] - xi[c])));
                row.push((gl, -(xi[c] - support.lower[c])));
                // |gu - gl - a_c(x)| <= lambda
                let (a_terms, a_const) = slope_terms(&dv, piece, c);
                let mut up = vec![(gu, 1.0), (gl, -1.0), (lambda, -1.0)];
                up.extend(scaled(&a_terms, -1.0));
                prog.add_row(format!("dn+[{j}][{k}][{c}]"), up, Sense::Le, a_const);
                let mut lo = vec![(gu, 1.0), (gl, -1.0), (lambda, 1.0)];
                lo.extend(scaled(&a_terms, -1.0));
                prog.add_row(format!("dn-[{j}][{k}][{c}]"), lo, Sense::Ge, a_const);
            }
            prog.add_row(format!("epi[{j}][{k}]"), row, Sense::Ge, constant);
        }
    }
    Ok(prog)
}

/// Minimal 1-norm distance from `p_hat` to the simplex intersected with the
/// cone; any `rho` at or above it gives a nonempty ambiguity set.
pub fn min_radius_feasible(cone: &OrderCone, p_hat: &[f64]) -> Result<f64> {
    let n = p_hat.len();
    if !cone.is_trivial() && cone.dim() != n {
        return Err(DroError::DimensionMismatch {
            expected: cone.dim(),
            found: n,
        });
    }
    let mut prog = ConvexProgram::new();
    let p = prog.add_vector("p", n, 0.0, f64::INFINITY);
    let e = prog.add_vector("e", n, 0.0, f64::INFINITY);
    for i in 0..n {
        prog.add_row(format!("abs+[{i}]"), vec![(e[i], 1.0), (p[i], -1.0)], Sense::Ge, -p_hat[i]);
        prog.add_row(format!("abs-[{i}]"), vec![(e[i], 1.0), (p[i], 1.0)], Sense::Ge, p_hat[i]);
        prog.add_objective(e[i], 1.0);
    }
    prog.add_row("simplex", p.iter().map(|v| (*v, 1.0)).collect(), Sense::Eq, 1.0);
    for (r, row) in cone.matrix.iter().enumerate() {
        prog.add_row(
            format!("cone[{r}]"),
            p.iter().zip(row).filter(|(_, a)| **a != 0.0).map(|(v, a)| (*v, *a)).collect(),
            Sense::Ge,
            0.0,
        );
    }
    let sol = program::solve(&prog, 1e-10)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.objective.max(0.0)),
        SolveStatus::Infeasible => Err(DroError::InfeasiblePrior),
        _ => Err(DroError::Solver(sol.detail)),
    }
}

/// Optimal decision and worst-case certificate of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroSolution {
    pub x: Vec<f64>,
    pub certificate: f64,
    pub solution: Solution,
}

fn finish(prog: &ConvexProgram, sol: Solution) -> Result<DroSolution> {
    match sol.status {
        SolveStatus::Optimal => Ok(DroSolution {
            x: sol.values_of(prog.block("x")),
            certificate: sol.objective,
            solution: sol,
        }),
        // the dual of an empty ambiguity set is unbounded below
        SolveStatus::Unbounded => Err(DroError::InfeasibleAmbiguity),
        SolveStatus::Infeasible => Err(DroError::Solver("program is infeasible".into())),
        SolveStatus::NumericalFailure => Err(DroError::Solver(sol.detail)),
    }
}

/// Builds and solves an instance in whichever mode its objective has.
pub fn solve_instance(instance: &Instance, tol: f64) -> Result<DroSolution> {
    let prog = build_any(instance)?;
    let sol = program::solve(&prog, tol)?;
    finish(&prog, sol)
}

/// Worst-case expected cost of a fixed decision.
pub fn worst_case_at(instance: &Instance, x: &[f64], tol: f64) -> Result<f64> {
    let mut fixed = instance.clone();
    fixed.decision = DecisionSpec::fixed(x);
    solve_instance(&fixed, tol).map(|s| s.certificate)
}

/// Solves a program produced by [`reduce_saa`] or [`reduce_drow`].
pub fn solve_reduced(prog: &ConvexProgram, tol: f64) -> Result<DroSolution> {
    let sol = program::solve(prog, tol)?;
    finish(prog, sol)
}

/// The one-region instance over `support` with all samples as atoms.
pub fn single_region_instance(
    samples: &[Vec<f64>],
    objective: &PiecewiseObjective,
    decision: &DecisionSpec,
    support: &AxisBox,
    epsilon: f64,
    rho: f64,
) -> Instance {
    Instance {
        decision: decision.clone(),
        objective: objective.clone(),
        partition: PartitionScheme::single(support.clone()),
        nominal: NominalDistribution {
            weights: vec![1.0],
            atoms: vec![samples.to_vec()],
            empty: if samples.is_empty() { vec![0] } else { vec![] },
            sample_count: samples.len(),
        },
        ambiguity: AmbiguityParams {
            epsilon,
            rho,
            cone: OrderCone::trivial(1),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{cournot_objective, newsvendor_objective};
    use crate::cones::make_simple_order;

    fn nv() -> PiecewiseObjective {
        newsvendor_objective(4.0, 2.0).unwrap()
    }

    fn unit() -> AxisBox {
        AxisBox::interval(0.0, 1.0).unwrap()
    }

    fn samples(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn support_function_examples() {
        let sq = AxisBox::cube(2, 0.0, 1.0).unwrap();
        assert_eq!(support_function_box(&sq, &[1.0, -1.0]).unwrap(), 1.0);
        let c = AxisBox::interval(-1.8, 3.0).unwrap();
        assert!((support_function_box(&c, &[2.0]).unwrap() - 6.0).abs() < 1e-15);
        assert_eq!(support_function_box(&c, &[0.0]).unwrap(), 0.0);
        let open = AxisBox::interval(0.0, f64::INFINITY).unwrap();
        assert!(support_function_box(&open, &[1.0]).is_err());
        assert_eq!(support_function_box(&open, &[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn conjugate_examples() {
        let PiecewiseObjective::Max { pieces } = nv() else { unreachable!() };
        assert_eq!(neg_conjugate_affine(&pieces[0], &[0.5], &[4.0]), Conjugate::Value(2.0));
        assert_eq!(neg_conjugate_affine(&pieces[0], &[0.5], &[3.0]), Conjugate::Infeasible);
        let flat = AffinePiece::fixed(vec![0.0], 7.0);
        assert_eq!(neg_conjugate_affine(&flat, &[0.0], &[0.0]), Conjugate::Value(7.0));
    }

    #[test]
    fn zero_radius_single_atom_at_decision() {
        let inst = single_region_instance(
            &samples(&[0.5]),
            &nv(),
            &DecisionSpec::fixed(&[0.5]),
            &unit(),
            0.0,
            0.0,
        );
        let v = solve_instance(&inst, 1e-9).unwrap().certificate;
        assert!(v.abs() < 1e-7, "{v}");
    }

    #[test]
    fn saa_newsvendor_fractile() {
        let data = samples(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        let prog = reduce_saa(&data, &nv(), &DecisionSpec::boxed(vec![0.0], vec![1.0])).unwrap();
        let sol = solve_reduced(&prog, 1e-10).unwrap();
        assert!((sol.x[0] - 0.4).abs() < 1e-6, "{:?}", sol.x);
    }

    #[test]
    fn saa_single_sample_is_zero_cost() {
        let prog = reduce_saa(&samples(&[0.37]), &nv(), &DecisionSpec::boxed(vec![0.0], vec![1.0]))
            .unwrap();
        let sol = solve_reduced(&prog, 1e-10).unwrap();
        assert!((sol.x[0] - 0.37).abs() < 1e-6);
        assert!(sol.certificate.abs() < 1e-7);
    }

    #[test]
    fn saa_cournot_first_order_condition() {
        let data = samples(&[0.4, 1.0, 1.6]);
        let prog =
            reduce_saa(&data, &cournot_objective(), &DecisionSpec::boxed(vec![0.0], vec![1.0]))
                .unwrap();
        let sol = solve_reduced(&prog, 1e-10).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.certificate + 0.25).abs() < 1e-6);
    }

    #[test]
    fn drow_and_saa_agree_at_zero_radius() {
        let data = samples(&[0.15, 0.3, 0.62, 0.9]);
        let dec = DecisionSpec::boxed(vec![0.0], vec![1.0]);
        let saa = solve_reduced(&reduce_saa(&data, &nv(), &dec).unwrap(), 1e-10).unwrap();
        let drow = solve_reduced(&reduce_drow(&data, &nv(), &dec, 0.0, &unit()).unwrap(), 1e-10)
            .unwrap();
        assert!((saa.certificate - drow.certificate).abs() < 1e-8);
    }

    #[test]
    fn single_region_build_matches_drow() {
        let data = samples(&[0.15, 0.3, 0.62, 0.9]);
        let dec = DecisionSpec::boxed(vec![0.0], vec![1.0]);
        for eps in [0.0, 0.05, 0.3] {
            let drow = solve_reduced(&reduce_drow(&data, &nv(), &dec, eps, &unit()).unwrap(), 1e-10)
                .unwrap();
            let inst = single_region_instance(&data, &nv(), &dec, &unit(), eps, 0.0);
            let full = solve_instance(&inst, 1e-10).unwrap();
            assert!((drow.certificate - full.certificate).abs() < 1e-8, "eps {eps}");
        }
    }

    #[test]
    fn wide_box_drow_keeps_saa_minimizer() {
        let data = samples(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let dec = DecisionSpec::boxed(vec![0.0], vec![20.0]);
        let wide = AxisBox::interval(-1e4, 1e4).unwrap();
        let saa = solve_reduced(&reduce_saa(&data, &nv(), &dec).unwrap(), 1e-10).unwrap();
        let drow = solve_reduced(&reduce_drow(&data, &nv(), &dec, 0.5, &wide).unwrap(), 1e-10)
            .unwrap();
        assert!((saa.x[0] - drow.x[0]).abs() < 1e-3, "{} vs {}", saa.x[0], drow.x[0]);
    }

    #[test]
    fn min_radius_examples() {
        let simple = make_simple_order(2).unwrap();
        assert!((min_radius_feasible(&simple, &[0.2, 0.8]).unwrap() - 0.6).abs() < 1e-8);
        assert!(min_radius_feasible(&simple, &[0.7, 0.3]).unwrap() < 1e-9);
        let ratio = crate::cones::make_ratio_cone(&[2.0, 2.0], 0.1).unwrap();
        assert!(min_radius_feasible(&ratio, &[0.0, 0.0, 1.0]).unwrap() > 0.1);
        let empty = OrderCone::custom(2, vec![vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(
            min_radius_feasible(&empty, &[0.5, 0.5]),
            Err(DroError::InfeasiblePrior)
        ));
    }

    #[test]
    fn rho_below_minimum_reports_empty_ambiguity() {
        let part = PartitionScheme {
            support: unit(),
            regions: vec![AxisBox::interval(0.0, 0.5).unwrap(), AxisBox::interval(0.5, 1.0).unwrap()],
            tree: None,
        };
        let inst = Instance {
            decision: DecisionSpec::fixed(&[0.5]),
            objective: nv(),
            partition: part,
            nominal: NominalDistribution {
                weights: vec![0.2, 0.8],
                atoms: vec![samples(&[0.1]), samples(&[0.6, 0.7, 0.8, 0.9])],
                empty: vec![],
                sample_count: 5,
            },
            ambiguity: AmbiguityParams {
                epsilon: 0.1,
                rho: 0.3,
                cone: make_simple_order(2).unwrap(),
            },
        };
        assert!(matches!(solve_instance(&inst, 1e-9), Err(DroError::InfeasibleAmbiguity)));
        let mut ok = inst.clone();
        ok.ambiguity.rho = 0.7;
        assert!(solve_instance(&ok, 1e-9).is_ok());
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let inst = single_region_instance(
            &samples(&[0.5]),
            &nv(),
            &DecisionSpec::fixed(&[0.5]),
            &unit(),
            0.0,
            0.0,
        );
        assert!(matches!(
            build_program_separable(&inst),
            Err(DroError::UnsupportedObjective(_))
        ));
    }

    #[test]
    fn separable_single_block_matches_plain_build() {
        let data = samples(&[0.15, 0.3, 0.62, 0.9]);
        let dec = DecisionSpec::boxed(vec![0.0], vec![1.0]);
        let plain = single_region_instance(&data, &nv(), &dec, &unit(), 0.2, 0.0);
        let PiecewiseObjective::Max { pieces } = nv() else { unreachable!() };
        let mut sep = plain.clone();
        sep.objective = PiecewiseObjective::Separable {
            blocks: vec![SeparableBlock { coords: vec![0], pieces }],
        };
        let a = solve_instance(&plain, 1e-10).unwrap().certificate;
        let b = solve_instance(&sep, 1e-10).unwrap().certificate;
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn unbounded_region_is_rejected() {
        let mut inst = single_region_instance(
            &samples(&[0.5]),
            &nv(),
            &DecisionSpec::fixed(&[0.5]),
            &AxisBox::interval(0.0, f64::INFINITY).unwrap(),
            0.1,
            0.0,
        );
        inst.nominal.atoms[0][0] = vec![0.5];
        assert!(matches!(build_program(&inst), Err(DroError::UnboundedSupport { region: 0 })));
    }

    #[test]
    fn lp_export_uses_documented_names() {
        let inst = single_region_instance(
            &samples(&[0.5]),
            &nv(),
            &DecisionSpec::boxed(vec![0.0], vec![1.0]),
            &unit(),
            0.1,
            0.0,
        );
        let lp = build_program(&inst).unwrap().to_lp_string();
        assert!(lp.contains("t[0][0]"));
        assert!(lp.contains("z[0][0][1][0]"));
        assert!(lp.contains("x[0]"));
    }

    #[test]
    fn slope_can_depend_on_decision() {
        // f = -x xi + x^2 with a one-atom, zero-radius ambiguity set
        let inst = single_region_instance(
            &samples(&[1.0]),
            &cournot_objective(),
            &DecisionSpec::boxed(vec![0.0], vec![1.0]),
            &AxisBox::interval(-1.8, 3.0).unwrap(),
            0.0,
            0.0,
        );
        let sol = solve_instance(&inst, 1e-10).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-5);
        assert!((sol.certificate + 0.25).abs() < 1e-7);
    }
}
