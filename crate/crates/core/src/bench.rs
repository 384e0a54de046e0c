//! Experiment generators (truncated Gaussian mixtures, newsvendor and
//! Cournot objectives), the three-method benchmark runner, and CSV/SVG/JSON
//! report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    bootstrap_tune, candidate_grid, combined_epsilon, epsilon_concentration, metrics,
    radius_total_variation, Candidate, DroModel, Method, TuneModel,
};
use crate::cones::{ratio_cone_from_probabilities, OrderCone};
use crate::error::{DroError, Result};
use crate::model::{
    AffineMap, AffinePiece, AxisBox, ConvexQuadratic, DecisionSpec, PartitionScheme,
    PiecewiseObjective, SeparableBlock,
};
use crate::partition::{build_nominal, partition_from_data, RegionCount};

const DRAW_CAP: usize = 10_000_000;

/// Mixture of Gaussians with diagonal covariances, truncated to a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub support: AxisBox,
}

impl MixtureSpec {
    pub fn single_item_newsvendor() -> Self {
        MixtureSpec {
            means: vec![vec![0.2], vec![0.5], vec![0.8]],
            variances: vec![vec![0.05 * 0.05], vec![0.1 * 0.1], vec![0.05 * 0.05]],
            weights: vec![0.1, 0.35, 0.55],
            support: AxisBox::interval(0.0, 1.0).unwrap(),
        }
    }

    pub fn multi_item_newsvendor() -> Self {
        let d = 20;
        MixtureSpec {
            means: [3.0, 5.0, 7.0].iter().map(|m| vec![*m; d]).collect(),
            variances: [1.0, 0.5, 0.1].iter().map(|v| vec![*v; d]).collect(),
            weights: vec![0.1, 0.65, 0.25],
            support: AxisBox::cube(d, 0.0, 10.0).unwrap(),
        }
    }

    pub fn cournot() -> Self {
        MixtureSpec {
            means: vec![vec![0.0], vec![1.2], vec![2.5]],
            variances: vec![vec![0.3]; 3],
            weights: vec![0.5, 0.2, 0.3],
            support: AxisBox::interval(-1.8, 3.0).unwrap(),
        }
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    fn check(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(DroError::InvalidParameter(
                "mixture needs matching means, variances and weights".into(),
            ));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
            || self.weights.iter().any(|w| !(*w >= 0.0))
        {
            return Err(DroError::InvalidParameter("mixture weights must lie on the simplex".into()));
        }
        let d = self.dim();
        for (m, v) in self.means.iter().zip(&self.variances) {
            if m.len() != d || v.len() != d {
                return Err(DroError::DimensionMismatch {
                    expected: d,
                    found: m.len().min(v.len()),
                });
            }
            if v.iter().any(|s| !(*s > 0.0)) {
                return Err(DroError::InvalidParameter("variances must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Rejection sampling from the truncated mixture.
pub fn sample_truncated_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    spec.check()?;
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = WeightedIndex::new(&spec.weights)
        .map_err(|e| DroError::InvalidParameter(format!("mixture weights: {e}")))?;
    let sds: Vec<Vec<f64>> = spec
        .variances
        .iter()
        .map(|v| v.iter().map(|s| s.sqrt()).collect())
        .collect();
    let mut draws = 0;
    while out.len() < n {
        if draws == DRAW_CAP {
            return Err(DroError::DegenerateTruncation {
                accepted: out.len(),
                requested: n,
            });
        }
        draws += 1;
        let c = pick.sample(&mut rng);
        let point: Vec<f64> = spec.means[c]
            .iter()
            .zip(&sds[c])
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + s * z
            })
            .collect();
        if spec.support.contains(&point) {
            out.push(point);
        }
    }
    Ok(out)
}

/// `max{h (x - xi), b (xi - x)}`.
pub fn newsvendor_objective(h: f64, b: f64) -> Result<PiecewiseObjective> {
    if !(h > 0.0 && b > 0.0) {
        return Err(DroError::InvalidParameter(format!(
            "newsvendor costs must be positive (h={h}, b={b})"
        )));
    }
    Ok(PiecewiseObjective::Max {
        pieces: vec![
            AffinePiece {
                slope: AffineMap::constant(vec![-h]),
                intercept: ConvexQuadratic::linear(vec![h], 0.0),
            },
            AffinePiece {
                slope: AffineMap::constant(vec![b]),
                intercept: ConvexQuadratic::linear(vec![-b], 0.0),
            },
        ],
    })
}

/// `sum_l max{h_l (x_l - xi_l), b_l (xi_l - x_l)}`, one block per item.
pub fn multi_item_newsvendor_objective(h: &[f64], b: &[f64]) -> Result<PiecewiseObjective> {
    if h.len() != b.len() {
        return Err(DroError::DimensionMismatch {
            expected: h.len(),
            found: b.len(),
        });
    }
    let d = h.len();
    let mut blocks = Vec::with_capacity(d);
    for l in 0..d {
        if !(h[l] > 0.0 && b[l] > 0.0) {
            return Err(DroError::InvalidParameter(format!("item {l} has a nonpositive cost")));
        }
        let unit = |s: f64| {
            let mut v = vec![0.0; d];
            v[l] = s;
            v
        };
        blocks.push(SeparableBlock {
            coords: vec![l],
            pieces: vec![
                AffinePiece {
                    slope: AffineMap::constant(vec![-h[l]]),
                    intercept: ConvexQuadratic::linear(unit(h[l]), 0.0),
                },
                AffinePiece {
                    slope: AffineMap::constant(vec![b[l]]),
                    intercept: ConvexQuadratic::linear(unit(-b[l]), 0.0),
                },
            ],
        });
    }
    Ok(PiecewiseObjective::Separable { blocks })
}

/// Holding and backorder costs of the twenty-item instance.
pub fn twenty_item_costs() -> (Vec<f64>, Vec<f64>) {
    let h = (0..20).map(|l| if l < 10 { 2.0 } else { 4.0 }).collect();
    let b = (0..20).map(|l| if l < 10 { 4.0 } else { 2.0 }).collect();
    (h, b)
}

/// `f(x, xi) = -x xi + x^2`.
pub fn cournot_objective() -> PiecewiseObjective {
    PiecewiseObjective::Max {
        pieces: vec![AffinePiece {
            slope: AffineMap {
                matrix: vec![vec![-1.0]],
                offset: vec![0.0],
            },
            intercept: ConvexQuadratic {
                quad: vec![vec![1.0]],
                linear: Vec::new(),
                constant: 0.0,
            },
        }],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    SingleItem,
    MultiItem,
    Cournot,
}

impl Problem {
    pub fn objective(&self) -> PiecewiseObjective {
        match self {
            Problem::SingleItem => newsvendor_objective(4.0, 2.0).unwrap(),
            Problem::MultiItem => {
                let (h, b) = twenty_item_costs();
                multi_item_newsvendor_objective(&h, &b).unwrap()
            }
            Problem::Cournot => cournot_objective(),
        }
    }

    pub fn mixture(&self) -> MixtureSpec {
        match self {
            Problem::SingleItem => MixtureSpec::single_item_newsvendor(),
            Problem::MultiItem => MixtureSpec::multi_item_newsvendor(),
            Problem::Cournot => MixtureSpec::cournot(),
        }
    }

    pub fn decision(&self) -> DecisionSpec {
        match self {
            Problem::SingleItem => DecisionSpec::boxed(vec![0.0], vec![1.0]),
            Problem::MultiItem => DecisionSpec::boxed(vec![0.0; 20], vec![10.0; 20]),
            Problem::Cournot => DecisionSpec::boxed(vec![0.0], vec![1.0]),
        }
    }

    pub fn pool_size(&self) -> usize {
        match self {
            Problem::Cournot => 10_000,
            _ => 15_000,
        }
    }

    /// Exact minimizer of the sample average over `pool`: the critical
    /// fractile order statistic per item for the newsvendor, the clipped
    /// half-mean for Cournot.
    pub fn pool_minimizer(&self, pool: &[Vec<f64>], decision: &DecisionSpec) -> Vec<f64> {
        let dim = decision.dim();
        match self {
            Problem::Cournot => {
                let mean = pool.iter().map(|p| p[0]).sum::<f64>() / pool.len() as f64;
                vec![(0.5 * mean).clamp(decision.lower[0], decision.upper[0])]
            }
            Problem::SingleItem | Problem::MultiItem => {
                let (h, b) = match self {
                    Problem::SingleItem => (vec![4.0], vec![2.0]),
                    _ => twenty_item_costs(),
                };
                (0..dim)
                    .map(|l| {
                        let mut col: Vec<f64> = pool.iter().map(|p| p[l]).collect();
                        col.sort_by(f64::total_cmp);
                        let frac = b[l] / (b[l] + h[l]);
                        let k = ((frac * col.len() as f64) - 1e-9).ceil().max(1.0) as usize;
                        col[k - 1].clamp(decision.lower[l], decision.upper[l])
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MethodTag {
    #[serde(rename = "DROC")]
    Droc,
    #[serde(rename = "DROW")]
    Drow,
    #[serde(rename = "SAA")]
    Saa,
}

impl MethodTag {
    pub fn name(&self) -> &'static str {
        match self {
            MethodTag::Droc => "DROC",
            MethodTag::Drow => "DROW",
            MethodTag::Saa => "SAA",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeSpec {
    Trivial,
    /// Ratio cone over regions sorted by their pool probability.
    RatioFromPool { tolerance: f64 },
    Custom { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub droc_epsilon: f64,
    pub droc_rho: f64,
    pub drow_epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterSource {
    Table {
        rows: Vec<TableRow>,
    },
    Formulas {
        beta: f64,
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "one")]
        c: f64,
    },
    Bootstrap {
        epsilons: Vec<f64>,
        rhos: Vec<f64>,
        beta: f64,
        kboot: usize,
    },
}

fn default_a() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

/// Hand-tuned budgets of the single-item experiment.
pub fn single_item_table() -> Vec<TableRow> {
    table(&[
        (2, 0.9, 0.9, 1.0),
        (5, 0.8, 0.8, 0.9),
        (10, 0.7, 0.7, 0.8),
        (20, 0.4, 0.6, 0.6),
        (50, 0.15, 0.25, 0.4),
        (100, 0.1, 0.2, 0.25),
        (200, 0.01, 0.15, 0.05),
    ])
}

/// Hand-tuned budgets of the twenty-item experiment.
pub fn multi_item_table() -> Vec<TableRow> {
    table(&[
        (2, 5.0, 2.0, 60.0),
        (5, 5.0, 2.0, 50.0),
        (10, 4.5, 1.5, 40.0),
        (20, 4.0, 1.0, 20.0),
        (50, 2.5, 0.6, 10.0),
        (100, 1.75, 0.5, 8.0),
        (200, 1.25, 0.35, 4.0),
    ])
}

fn table(rows: &[(usize, f64, f64, f64)]) -> Vec<TableRow> {
    rows.iter()
        .map(|&(n, droc_epsilon, droc_rho, drow_epsilon)| TableRow {
            n,
            droc_epsilon,
            droc_rho,
            drow_epsilon,
        })
        .collect()
}

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub schema: u32,
    pub problem: Problem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSpec>,
    pub partition: RegionCount,
    pub cone: ConeSpec,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<MethodTag>,
    pub parameters: ParameterSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-10
}

impl BenchConfig {
    /// Single-item newsvendor with the hand-tuned table.
    pub fn single_item(n_grid: Vec<usize>, trials: usize, seed: u64) -> Self {
        BenchConfig {
            schema: CONFIG_SCHEMA,
            problem: Problem::SingleItem,
            mixture: None,
            partition: RegionCount::Fixed(4),
            cone: ConeSpec::RatioFromPool { tolerance: 0.1 },
            n_grid,
            trials,
            methods: vec![MethodTag::Droc, MethodTag::Drow, MethodTag::Saa],
            parameters: ParameterSource::Table {
                rows: single_item_table(),
            },
            pool_size: None,
            seed,
            tol: default_tol(),
        }
    }

    pub fn multi_item(n_grid: Vec<usize>, trials: usize, seed: u64) -> Self {
        BenchConfig {
            problem: Problem::MultiItem,
            parameters: ParameterSource::Table {
                rows: multi_item_table(),
            },
            ..Self::single_item(n_grid, trials, seed)
        }
    }

    pub fn cournot(n_grid: Vec<usize>, trials: usize, seed: u64) -> Self {
        let grid = vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
        BenchConfig {
            problem: Problem::Cournot,
            parameters: ParameterSource::Bootstrap {
                epsilons: grid.clone(),
                rhos: vec![0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
                beta: 0.15,
                kboot: 50,
            },
            ..Self::single_item(n_grid, trials, seed)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema").and_then(|s| s.as_u64()) {
            Some(1) => Ok(serde_json::from_value(value)?),
            Some(v) => Err(DroError::InvalidParameter(format!("unsupported config schema {v}"))),
            None => Err(DroError::InvalidParameter("config is missing \"schema\": 1".into())),
        }
    }

    pub fn mixture_spec(&self) -> MixtureSpec {
        self.mixture.clone().unwrap_or_else(|| self.problem.mixture())
    }
}

/// Stateless seed derivation (splitmix64 finalizer over the key parts).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// The weight budget is below the minimal feasible radius.
    InfeasibleConfig,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: MethodTag,
    pub n: usize,
    pub trial: usize,
    pub status: RowStatus,
    pub epsilon: f64,
    pub rho: f64,
    /// Decision coordinates joined by `;`.
    pub decision: String,
    pub certificate: Option<f64>,
    pub actual_cost: Option<f64>,
    pub certificate_gap: Option<f64>,
    pub reliable: Option<bool>,
}

impl BenchRow {
    pub fn decision_vector(&self) -> Vec<f64> {
        if self.decision.is_empty() {
            return Vec::new();
        }
        self.decision.split(';').map(|s| s.parse().unwrap_or(f64::NAN)).collect()
    }
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub x_star: Vec<f64>,
    pub j_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub rows: Vec<BenchRow>,
    /// Wall-clock seconds per row; kept out of the CSV so that it stays
    /// reproducible byte for byte.
    pub solve_times: Vec<f64>,
    pub reference: Reference,
    pub regions: usize,
}

/// Everything fixed per configuration: pool, partition, cone, reference.
pub struct BenchSetup {
    pub config: BenchConfig,
    pub mixture: MixtureSpec,
    pub objective: PiecewiseObjective,
    pub decision: DecisionSpec,
    pub pool: Vec<Vec<f64>>,
    pub partition: PartitionScheme,
    pub cone: OrderCone,
    pub reference: Reference,
}

impl BenchSetup {
    pub fn new(config: &BenchConfig) -> Result<Self> {
        if config.schema != CONFIG_SCHEMA {
            return Err(DroError::InvalidParameter(format!(
                "unsupported config schema {}",
                config.schema
            )));
        }
        let mixture = config.mixture_spec();
        let objective = config.problem.objective();
        let decision = config.problem.decision();
        let pool_size = config.pool_size.unwrap_or_else(|| config.problem.pool_size());
        let pool = sample_truncated_mixture(&mixture, pool_size, derive_seed(&[config.seed, 0]))?;
        let partition =
            partition_from_data(&pool, &mixture.support, config.partition, config.seed)?;
        let cone = match &config.cone {
            ConeSpec::Trivial => OrderCone::trivial(partition.len()),
            ConeSpec::RatioFromPool { tolerance } => {
                let probs = region_probabilities(&pool, &partition);
                ratio_cone_from_probabilities(&probs, *tolerance)?
            }
            ConeSpec::Custom { matrix } => OrderCone::custom(partition.len(), matrix.clone())?,
        };
        let x_star = config.problem.pool_minimizer(&pool, &decision);
        let j_star = pool_cost(&objective, &x_star, &pool);
        Ok(BenchSetup {
            config: config.clone(),
            mixture,
            objective,
            decision,
            pool,
            partition,
            cone,
            reference: Reference { x_star, j_star },
        })
    }

    fn model(&self, method: MethodTag) -> DroModel {
        let m = match method {
            MethodTag::Droc => Method::Droc {
                partition: self.partition.clone(),
                cone: self.cone.clone(),
            },
            MethodTag::Drow => Method::Drow {
                support: self.mixture.support.clone(),
            },
            MethodTag::Saa => Method::Saa,
        };
        DroModel {
            method: m,
            objective: self.objective.clone(),
            decision: self.decision.clone(),
            tol: self.config.tol,
        }
    }

    /// Budgets for `method` at sample size `n` on `sample`.
    fn parameters(&self, method: MethodTag, sample: &[Vec<f64>], seed: u64) -> Result<Candidate> {
        let zero = Candidate {
            epsilon: 0.0,
            rho: 0.0,
        };
        if method == MethodTag::Saa {
            return Ok(zero);
        }
        let n = sample.len();
        match &self.config.parameters {
            ParameterSource::Table { rows } => {
                let row = rows.iter().find(|r| r.n == n).ok_or_else(|| {
                    DroError::InvalidParameter(format!("parameter table has no row for N = {n}"))
                })?;
                Ok(match method {
                    MethodTag::Droc => Candidate {
                        epsilon: row.droc_epsilon,
                        rho: row.droc_rho,
                    },
                    _ => Candidate {
                        epsilon: row.drow_epsilon,
                        rho: 0.0,
                    },
                })
            }
            ParameterSource::Formulas { beta, a, b, c } => {
                let dim = self.mixture.dim();
                match method {
                    MethodTag::Droc => {
                        let nominal = build_nominal(sample, &self.partition)?;
                        let regions = self.partition.len();
                        let per = regions as f64;
                        let eps: Vec<f64> = (0..regions)
                            .map(|i| {
                                epsilon_concentration(nominal.atoms[i].len().max(1), beta / per, dim, *a, *b, *c)
                            })
                            .collect::<Result<_>>()?;
                        Ok(Candidate {
                            epsilon: combined_epsilon(&nominal.weights, &eps)?,
                            rho: radius_total_variation(n, regions, *beta)?,
                        })
                    }
                    _ => Ok(Candidate {
                        epsilon: epsilon_concentration(n, *beta, dim, *a, *b, *c)?,
                        rho: 0.0,
                    }),
                }
            }
            ParameterSource::Bootstrap {
                epsilons,
                rhos,
                beta,
                kboot,
            } => {
                let grid = match method {
                    MethodTag::Droc => candidate_grid(epsilons, rhos),
                    _ => candidate_grid(epsilons, &[0.0]),
                };
                let tuned = bootstrap_tune(sample, &self.model(method), &grid, *beta, *kboot, seed)?;
                Ok(tuned.candidate.expect("tuning succeeded"))
            }
        }
    }

    fn run_cell(&self, method: MethodTag, n: usize, trial: usize) -> (BenchRow, f64) {
        let seed = derive_seed(&[self.config.seed, n as u64, trial as u64]);
        let start = Instant::now();
        let mut row = BenchRow {
            method,
            n,
            trial,
            status: RowStatus::Failed,
            epsilon: f64::NAN,
            rho: f64::NAN,
            decision: String::new(),
            certificate: None,
            actual_cost: None,
            certificate_gap: None,
            reliable: None,
        };
        let outcome = sample_truncated_mixture(&self.mixture, n, seed).and_then(|sample| {
            let cand = self.parameters(method, &sample, derive_seed(&[seed, 1]))?;
            row.epsilon = cand.epsilon;
            row.rho = cand.rho;
            self.model(method).fit(&sample, &cand)
        });
        match outcome {
            Ok(sol) => {
                let actual = pool_cost(&self.objective, &sol.x, &self.pool);
                let m = metrics(actual, sol.certificate);
                row.status = RowStatus::Ok;
                row.decision = join(&sol.x);
                row.certificate = Some(sol.certificate);
                row.actual_cost = Some(actual);
                row.certificate_gap = Some(m.certificate_gap);
                row.reliable = Some(m.reliable);
            }
            Err(DroError::InfeasibleAmbiguity) => row.status = RowStatus::InfeasibleConfig,
            Err(DroError::NoReliableCandidate(_)) => row.status = RowStatus::InfeasibleConfig,
            Err(_) => row.status = RowStatus::Failed,
        }
        (row, start.elapsed().as_secs_f64())
    }
}

/// `(1/|pool|) sum f(x, xi)` over the ground-truth pool.
pub fn pool_cost(objective: &PiecewiseObjective, x: &[f64], pool: &[Vec<f64>]) -> f64 {
    pool.iter().map(|xi| objective.eval(x, xi)).sum::<f64>() / pool.len() as f64
}

/// Fraction of `points` falling in each region.
pub fn region_probabilities(points: &[Vec<f64>], partition: &PartitionScheme) -> Vec<f64> {
    let mut counts = vec![0usize; partition.len()];
    for p in points {
        if let Some(r) = partition.classify(p) {
            counts[r] += 1;
        }
    }
    counts.iter().map(|c| *c as f64 / points.len() as f64).collect()
}

/// Runs every (N, trial, method) cell. Work is spread over the current
/// rayon pool; rows come back ordered by (N, trial, method).
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchmarkResult> {
    let setup = BenchSetup::new(config)?;
    run_with_setup(&setup)
}

pub fn run_with_setup(setup: &BenchSetup) -> Result<BenchmarkResult> {
    let config = &setup.config;
    if config.n_grid.is_empty() || config.trials == 0 || config.methods.is_empty() {
        return Err(DroError::InvalidParameter(
            "benchmark needs N values, trials and methods".into(),
        ));
    }
    let cells: Vec<(usize, usize, MethodTag)> = config
        .n_grid
        .iter()
        .flat_map(|&n| {
            (0..config.trials).flat_map(move |t| config.methods.iter().map(move |m| (n, t, *m)))
        })
        .collect();
    let out: Vec<(BenchRow, f64)> = cells
        .par_iter()
        .map(|&(n, t, m)| setup.run_cell(m, n, t))
        .collect();
    let (rows, solve_times) = out.into_iter().unzip();
    Ok(BenchmarkResult {
        rows,
        solve_times,
        reference: setup.reference.clone(),
        regions: setup.partition.len(),
    })
}

pub fn emit_csv(result: &BenchmarkResult, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(result)?)?;
    Ok(())
}

pub fn csv_string(result: &BenchmarkResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &result.rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| DroError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(DroError::from)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Decision,
    Certificate,
    ActualCost,
    CertificateGap,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Decision,
        Metric::Certificate,
        Metric::ActualCost,
        Metric::CertificateGap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Decision => "decision",
            Metric::Certificate => "certificate",
            Metric::ActualCost => "actual_cost",
            Metric::CertificateGap => "certificate_gap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DroError::InvalidParameter(format!("unknown metric {s}")))
    }

    /// Value of the metric on a row (first coordinate for decisions).
    pub fn of(&self, row: &BenchRow) -> Option<f64> {
        match self {
            Metric::Decision => row.decision_vector().first().copied(),
            Metric::Certificate => row.certificate,
            Metric::ActualCost => row.actual_cost,
            Metric::CertificateGap => row.certificate_gap,
        }
    }

    fn reference(&self, r: &Reference) -> f64 {
        match self {
            Metric::Decision => r.x_star.first().copied().unwrap_or(0.0),
            Metric::Certificate | Metric::ActualCost => r.j_star,
            Metric::CertificateGap => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub count: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, quartiles and 1.5 IQR whiskers; `None` for no values.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q1 = quantile(&v, 0.25);
    let q3 = quantile(&v, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    Some(BoxStats {
        median: quantile(&v, 0.5),
        q1,
        q3,
        whisker_low: *v.iter().find(|x| **x >= lo_fence).unwrap(),
        whisker_high: *v.iter().rev().find(|x| **x <= hi_fence).unwrap(),
        count: v.len(),
    })
}

/// Groups finite metric values by (N, method), in N then method order.
pub fn grouped(result: &BenchmarkResult, metric: Metric) -> BTreeMap<(usize, MethodTag), Vec<f64>> {
    let mut groups: BTreeMap<(usize, MethodTag), Vec<f64>> = BTreeMap::new();
    for row in &result.rows {
        let entry = groups.entry((row.n, row.method)).or_default();
        if let Some(v) = metric.of(row) {
            entry.push(v);
        }
    }
    groups
}

const COLORS: [(MethodTag, &str); 3] = [
    (MethodTag::Droc, "#1f77b4"),
    (MethodTag::Drow, "#ff7f0e"),
    (MethodTag::Saa, "#2ca02c"),
];

/// Box-plot SVG: one box per (method, N) and the reference as a dashed line.
pub fn svg_boxplot(result: &BenchmarkResult, metric: Metric) -> Result<String> {
    if result.rows.is_empty() {
        return Err(DroError::InvalidParameter("no rows to plot".into()));
    }
    let groups = grouped(result, metric);
    let stats: Vec<((usize, MethodTag), Option<BoxStats>)> =
        groups.iter().map(|(k, v)| (*k, box_stats(v))).collect();
    let reference = metric.reference(&result.reference);
    let mut lo = reference;
    let mut hi = reference;
    for (_, s) in &stats {
        if let Some(s) = s {
            lo = lo.min(s.whisker_low);
            hi = hi.max(s.whisker_high);
        }
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let (left, top, height, slot) = (70.0, 30.0, 320.0, 28.0);
    let width = left + 20.0 + slot * stats.len() as f64 + 10.0 * groups_count(&stats) as f64;
    let y = |v: f64| top + height * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#,
        w = width,
        h = top + height + 60.0
    );
    let _ = writeln!(s, r#"<text x="{left}" y="18">{}</text>"#, metric.name());
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="black"/>"#,
        top + height
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.0}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            y(v) + 4.0,
            v
        );
    }
    let mut x = left + 10.0;
    let mut last_n = None;
    for ((n, method), st) in &stats {
        if last_n.is_some_and(|l| l != *n) {
            x += 10.0;
        }
        if last_n != Some(*n) {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">N={n}</text>"#,
                x,
                top + height + 20.0
            );
        }
        last_n = Some(*n);
        let color = COLORS.iter().find(|(m, _)| m == method).map_or("gray", |c| c.1);
        if let Some(b) = st {
            let cx = x + slot / 2.0;
            let _ = writeln!(
                s,
                r#"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
                y(b.whisker_high),
                y(b.whisker_low)
            );
            let _ = writeln!(
                s,
                r#"<rect class="box" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="{color}"><title>{} N={n}</title></rect>"#,
                x + 4.0,
                y(b.q3),
                slot - 8.0,
                (y(b.q1) - y(b.q3)).max(0.5),
                method.name()
            );
            let _ = writeln!(
                s,
                r#"<line class="median" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                x + 4.0,
                y(b.median),
                x + slot - 4.0,
                y(b.median)
            );
        }
        x += slot;
    }
    let _ = writeln!(
        s,
        r#"<line class="reference" x1="{left}" y1="{r:.2}" x2="{x:.2}" y2="{r:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
        r = y(reference)
    );
    let mut lx = left;
    for (m, c) in COLORS {
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{:.2}" width="10" height="10" fill="{c}"/><text x="{:.0}" y="{:.2}">{}</text>"#,
            top + height + 32.0,
            lx + 14.0,
            top + height + 41.0,
            m.name()
        );
        lx += 70.0;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn groups_count(stats: &[((usize, MethodTag), Option<BoxStats>)]) -> usize {
    let mut ns: Vec<usize> = stats.iter().map(|((n, _), _)| *n).collect();
    ns.dedup();
    ns.len()
}

pub fn emit_svg_boxplot(result: &BenchmarkResult, metric: Metric, path: &Path) -> Result<()> {
    std::fs::write(path, svg_boxplot(result, metric)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub method: MethodTag,
    pub n: usize,
    pub trials: usize,
    pub solved: usize,
    pub infeasible_config: usize,
    pub failed: usize,
    pub reliability: Option<f64>,
    pub median_actual_cost: Option<f64>,
    pub median_certificate: Option<f64>,
    pub median_decision: Option<f64>,
    pub total_solve_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reference: Reference,
    pub regions: usize,
    pub groups: Vec<GroupSummary>,
}

/// Per-(method, N) aggregates; reliability is taken over solved trials.
pub fn summarize(result: &BenchmarkResult) -> Summary {
    let mut groups: BTreeMap<(usize, MethodTag), Vec<usize>> = BTreeMap::new();
    for (k, row) in result.rows.iter().enumerate() {
        groups.entry((row.n, row.method)).or_default().push(k);
    }
    let med = |vals: Vec<f64>| box_stats(&vals).map(|b| b.median);
    let groups = groups
        .into_iter()
        .map(|((n, method), idx)| {
            let rows: Vec<&BenchRow> = idx.iter().map(|&k| &result.rows[k]).collect();
            let ok: Vec<&&BenchRow> = rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
            let reliable = ok.iter().filter(|r| r.reliable == Some(true)).count();
            GroupSummary {
                method,
                n,
                trials: rows.len(),
                solved: ok.len(),
                infeasible_config: rows
                    .iter()
                    .filter(|r| r.status == RowStatus::InfeasibleConfig)
                    .count(),
                failed: rows.iter().filter(|r| r.status == RowStatus::Failed).count(),
                reliability: (!ok.is_empty()).then(|| reliable as f64 / ok.len() as f64),
                median_actual_cost: med(ok.iter().filter_map(|r| r.actual_cost).collect()),
                median_certificate: med(ok.iter().filter_map(|r| r.certificate).collect()),
                median_decision: med(ok.iter().filter_map(|r| Metric::Decision.of(r)).collect()),
                total_solve_seconds: idx.iter().map(|&k| result.solve_times[k]).sum(),
            }
        })
        .collect();
    Summary {
        reference: result.reference.clone(),
        regions: result.regions,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newsvendor_values() {
        let f = newsvendor_objective(4.0, 2.0).unwrap();
        assert_eq!(f.eval(&[0.5], &[0.25]), 1.0);
        assert_eq!(f.eval(&[0.3], &[0.3]), 0.0);
        assert!(newsvendor_objective(0.0, 2.0).is_err());
    }

    #[test]
    fn twenty_item_objective_is_separable() {
        let (h, b) = twenty_item_costs();
        let f = multi_item_newsvendor_objective(&h, &b).unwrap();
        let PiecewiseObjective::Separable { blocks } = &f else { panic!() };
        assert_eq!(blocks.len(), 20);
        let x = vec![5.0; 20];
        let mut xi = vec![5.0; 20];
        xi[0] = 4.0;
        xi[15] = 6.0;
        // item 0 overstocks by 1 at h=2; item 15 understocks by 1 at b=2
        assert!((f.eval(&x, &xi) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cournot_values() {
        let f = cournot_objective();
        assert!((f.eval(&[0.5], &[1.0]) + 0.25).abs() < 1e-15);
        assert_eq!(f.eval(&[0.0], &[2.7]), 0.0);
    }

    #[test]
    fn sampling_is_deterministic_and_truncated() {
        let spec = MixtureSpec::cournot();
        let a = sample_truncated_mixture(&spec, 500, 7).unwrap();
        let b = sample_truncated_mixture(&spec, 500, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (-1.8..=3.0).contains(&p[0])));
        assert!(sample_truncated_mixture(&spec, 0, 7).unwrap().is_empty());
        let c = sample_truncated_mixture(&spec, 500, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn impossible_truncation_hits_the_cap() {
        let spec = MixtureSpec {
            means: vec![vec![0.0]],
            variances: vec![vec![1e-4]],
            weights: vec![1.0],
            support: AxisBox::interval(50.0, 51.0).unwrap(),
        };
        assert!(matches!(
            sample_truncated_mixture(&spec, 1, 0),
            Err(DroError::DegenerateTruncation { accepted: 0, .. })
        ));
    }

    #[test]
    fn mixture_moments_match_components() {
        let spec = MixtureSpec::single_item_newsvendor();
        let pool = sample_truncated_mixture(&spec, 20_000, 1).unwrap();
        let mean = pool.iter().map(|p| p[0]).sum::<f64>() / pool.len() as f64;
        // truncation barely moves the mixture mean 0.02 + 0.175 + 0.44
        assert!((mean - 0.635).abs() < 0.01, "{mean}");
    }

    #[test]
    fn pool_minimizer_matches_fractile() {
        let pool: Vec<Vec<f64>> = (1..=10).map(|k| vec![k as f64 / 10.0]).collect();
        let x = Problem::SingleItem.pool_minimizer(&pool, &Problem::SingleItem.decision());
        assert_eq!(x, vec![0.4]);
        let x = Problem::Cournot.pool_minimizer(&[vec![1.0], vec![1.0]], &Problem::Cournot.decision());
        assert_eq!(x, vec![0.5]);
    }

    #[test]
    fn box_stats_of_single_value() {
        let b = box_stats(&[3.0]).unwrap();
        assert_eq!((b.median, b.q1, b.q3, b.whisker_low, b.whisker_high), (3.0, 3.0, 3.0, 3.0, 3.0));
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(b.median, 3.0);
        assert_eq!(b.whisker_high, 4.0);
        assert!(box_stats(&[]).is_none());
    }

    fn fake_result(ns: &[usize]) -> BenchmarkResult {
        let mut rows = Vec::new();
        for &n in ns {
            for m in [MethodTag::Droc, MethodTag::Drow, MethodTag::Saa] {
                for t in 0..3 {
                    let c = 1.0 + t as f64 * 0.1;
                    rows.push(BenchRow {
                        method: m,
                        n,
                        trial: t,
                        status: RowStatus::Ok,
                        epsilon: 0.1,
                        rho: 0.2,
                        decision: join(&[0.3 + 0.01 * t as f64]),
                        certificate: Some(c),
                        actual_cost: Some(0.9),
                        certificate_gap: Some(0.9 - c),
                        reliable: Some(true),
                    });
                }
            }
        }
        let len = rows.len();
        BenchmarkResult {
            rows,
            solve_times: vec![0.0; len],
            reference: Reference {
                x_star: vec![0.35],
                j_star: 0.8,
            },
            regions: 4,
        }
    }

    #[test]
    fn svg_has_one_box_per_group() {
        let r = fake_result(&[2, 5, 10, 20, 50, 100, 200]);
        let svg = svg_boxplot(&r, Metric::ActualCost).unwrap();
        assert_eq!(svg.matches(r#"class="box""#).count(), 21);
        assert_eq!(svg.matches(r#"class="reference""#).count(), 1);
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn csv_round_trip() {
        let mut r = fake_result(&[5]);
        r.rows[1].status = RowStatus::InfeasibleConfig;
        r.rows[1].certificate = None;
        r.rows[1].actual_cost = None;
        r.rows[1].certificate_gap = None;
        r.rows[1].reliable = None;
        r.rows[1].decision = String::new();
        let text = csv_string(&r).unwrap();
        assert_eq!(parse_csv(&text).unwrap(), r.rows);
    }

    #[test]
    fn seeds_are_distinct_per_cell() {
        let a = derive_seed(&[1, 20, 0]);
        assert_ne!(a, derive_seed(&[1, 20, 1]));
        assert_ne!(a, derive_seed(&[1, 21, 0]));
        assert_ne!(a, derive_seed(&[2, 20, 0]));
        assert_eq!(a, derive_seed(&[1, 20, 0]));
    }

    #[test]
    fn config_requires_schema() {
        let cfg = BenchConfig::single_item(vec![20], 2, 3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(BenchConfig::from_json(&text).unwrap(), cfg);
        let bad = text.replace("\"schema\":1", "\"schema\":2");
        assert!(BenchConfig::from_json(&bad).is_err());
    }

    #[test]
    fn zero_budgets_single_region_methods_agree() {
        let mut cfg = BenchConfig::single_item(vec![10], 1, 11);
        cfg.partition = RegionCount::Fixed(1);
        cfg.pool_size = Some(2000);
        cfg.parameters = ParameterSource::Table {
            rows: vec![TableRow {
                n: 10,
                droc_epsilon: 0.0,
                droc_rho: 0.0,
                drow_epsilon: 0.0,
            }],
        };
        let r = run_benchmark(&cfg).unwrap();
        assert_eq!(r.rows.len(), 3);
        let c: Vec<f64> = r.rows.iter().map(|row| row.certificate.unwrap()).collect();
        let x: Vec<f64> = r.rows.iter().map(|row| row.decision_vector()[0]).collect();
        for k in 1..3 {
            assert!((c[k] - c[0]).abs() < 1e-8, "{c:?}");
            assert!((x[k] - x[0]).abs() < 1e-6, "{x:?}");
        }
    }
}
