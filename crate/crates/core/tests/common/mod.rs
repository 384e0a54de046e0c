#![allow(dead_code)]

use droc_core::cones::{
    make_ratio_cone, make_simple_order, make_star_shaped, make_tree_order, make_umbrella,
    ratio_cone_from_probabilities, OrderCone,
};
use droc_core::model::{
    AffineMap, AffinePiece, AmbiguityParams, AxisBox, ConvexQuadratic, DecisionRow, DecisionSpec,
    Instance, PartitionScheme, PiecewiseObjective, SeparableBlock, Sense,
};
use droc_core::partition::build_nominal;
use droc_core::reformulate::min_radius_feasible;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub instance: Instance,
    pub rho_min: f64,
    pub samples: Vec<Vec<f64>>,
}

#[derive(Clone, Copy)]
pub struct Shape {
    pub max_dim: usize,
    pub max_regions: usize,
    pub max_samples: usize,
    pub max_pieces: usize,
    pub separable: bool,
    pub quadratic: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_dim: 2,
            max_regions: 4,
            max_samples: 12,
            max_pieces: 3,
            separable: false,
            quadratic: true,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn cuts(rng: &mut ChaCha8Rng, lo: f64, hi: f64, pieces: usize) -> Vec<f64> {
    let mut c: Vec<f64> = (1..pieces)
        .map(|_| uniform(rng, lo + 0.15 * (hi - lo), hi - 0.15 * (hi - lo)))
        .collect();
    c.sort_by(f64::total_cmp);
    c.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut edges = vec![lo];
    edges.extend(c);
    edges.push(hi);
    edges
}

fn grid_partition(rng: &mut ChaCha8Rng, dim: usize, max_regions: usize) -> PartitionScheme {
    let lower: Vec<f64> = (0..dim).map(|_| uniform(rng, -1.0, 0.5)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + uniform(rng, 0.5, 2.0)).collect();
    let support = AxisBox::new(lower.clone(), upper.clone()).unwrap();
    let per_axis: Vec<usize> = if dim == 1 {
        vec![rng.random_range(1..=max_regions)]
    } else {
        let a = rng.random_range(1..=2usize.min(max_regions));
        let b = rng.random_range(1..=(max_regions / a).clamp(1, 2));
        vec![a, b]
    };
    let edges: Vec<Vec<f64>> = (0..dim).map(|c| cuts(rng, lower[c], upper[c], per_axis[c])).collect();
    let mut regions = vec![(Vec::new(), Vec::new())];
    for e in &edges {
        regions = regions
            .into_iter()
            .flat_map(|(lo, hi): (Vec<f64>, Vec<f64>)| {
                e.windows(2).map(move |w| {
                    let mut l = lo.clone();
                    let mut h = hi.clone();
                    l.push(w[0]);
                    h.push(w[1]);
                    (l, h)
                })
            })
            .collect();
    }
    PartitionScheme {
        support,
        regions: regions.into_iter().map(|(l, h)| AxisBox::new(l, h).unwrap()).collect(),
        tree: None,
    }
}

fn random_piece(rng: &mut ChaCha8Rng, dim: usize, m: usize, quadratic: bool) -> AffinePiece {
    let matrix = if rng.random_bool(0.5) {
        (0..dim).map(|_| (0..m).map(|_| uniform(rng, -1.0, 1.0)).collect()).collect()
    } else {
        Vec::new()
    };
    let offset = (0..dim).map(|_| uniform(rng, -2.0, 2.0)).collect();
    let mut intercept =
        ConvexQuadratic::linear((0..m).map(|_| uniform(rng, -1.0, 1.0)).collect(), uniform(rng, -1.0, 1.0));
    if quadratic && rng.random_bool(0.3) {
        intercept.quad = (0..m)
            .map(|i| (0..m).map(|j| if i == j { uniform(rng, 0.0, 1.0) } else { 0.0 }).collect())
            .collect();
    }
    AffinePiece {
        slope: AffineMap { matrix, offset },
        intercept,
    }
}

pub fn random_cone(rng: &mut ChaCha8Rng, weights: &[f64]) -> OrderCone {
    let n = weights.len();
    if n < 2 {
        return OrderCone::trivial(n);
    }
    match rng.random_range(0..7) {
        0 => OrderCone::trivial(n),
        1 => make_simple_order(n).unwrap(),
        2 => make_tree_order(n).unwrap(),
        3 => make_star_shaped(n).unwrap(),
        4 => make_umbrella(n, rng.random_range(1..=n)).unwrap(),
        5 => ratio_cone_from_probabilities(weights, 0.1).unwrap(),
        _ => {
            let ratios: Vec<f64> = (1..n).map(|_| uniform(rng, 0.5, 2.0)).collect();
            make_ratio_cone(&ratios, 0.1).unwrap()
        }
    }
}

/// Random bounded instance with `rho` at or above the feasibility minimum.
pub fn random_case(seed: u64, shape: Shape) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=shape.max_dim);
    let m = rng.random_range(1..=2);
    let partition = grid_partition(&mut rng, dim, shape.max_regions);
    let n = rng.random_range(1..=shape.max_samples);
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut per_region = vec![0usize; partition.len()];
    for _ in 0..n {
        let xi: Vec<f64> = (0..dim)
            .map(|c| uniform(&mut rng, partition.support.lower[c], partition.support.upper[c]))
            .collect();
        let r = partition.classify(&xi).unwrap();
        if dim == 2 && per_region[r] >= 3 {
            continue;
        }
        per_region[r] += 1;
        samples.push(xi);
    }
    let nominal = build_nominal(&samples, &partition).unwrap();
    let pieces = rng.random_range(1..=shape.max_pieces);
    let objective = if shape.separable {
        PiecewiseObjective::Separable {
            blocks: (0..dim)
                .map(|c| SeparableBlock {
                    coords: vec![c],
                    pieces: (0..pieces).map(|_| random_piece(&mut rng, 1, m, shape.quadratic)).collect(),
                })
                .collect(),
        }
    } else {
        PiecewiseObjective::Max {
            pieces: (0..pieces).map(|_| random_piece(&mut rng, dim, m, shape.quadratic)).collect(),
        }
    };
    let mut decision = DecisionSpec::boxed(vec![0.0; m], vec![1.0; m]);
    if m == 2 && rng.random_bool(0.5) {
        decision.constraints.push(DecisionRow {
            coeffs: vec![1.0, 1.0],
            sense: Sense::Le,
            rhs: 1.5,
        });
    }
    let cone = random_cone(&mut rng, &nominal.weights);
    let rho_min = min_radius_feasible(&cone, &nominal.weights).unwrap();
    let epsilon = uniform(&mut rng, 0.0, 0.5);
    let rho = rho_min + 1e-6 + uniform(&mut rng, 0.0, 0.5);
    Case {
        instance: Instance {
            decision,
            objective,
            partition,
            nominal,
            ambiguity: AmbiguityParams { epsilon, rho, cone },
        },
        rho_min,
        samples,
    }
}

/// Random feasible decision of `case`.
pub fn random_decision(case: &Case, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let d = &case.instance.decision;
        let x: Vec<f64> = d.lower.iter().zip(&d.upper).map(|(l, u)| uniform(&mut rng, *l, *u)).collect();
        if d.contains(&x, 0.0) {
            return x;
        }
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
