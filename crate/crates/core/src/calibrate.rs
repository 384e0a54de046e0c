//! Radius formulas for the ambiguity budgets, the bootstrap tuning
//! procedure and out-of-sample metrics.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::OrderCone;
use crate::error::{DroError, Result};
use crate::model::{AmbiguityParams, AxisBox, DecisionSpec, Instance, PartitionScheme, PiecewiseObjective};
use crate::partition::build_nominal;
use crate::reformulate::{
    min_radius_feasible, reduce_drow, reduce_saa, solve_instance, solve_reduced, DroSolution,
};

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (k, c) in C.iter().enumerate().skip(1) {
        a += c / (x + k as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let front = (-x + a * x.ln() - ln_gamma(a)).exp();
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (sum * front).min(1.0)
    } else {
        // Lentz continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - front * h).max(0.0)
    }
}

fn chi2_cdf(dof: f64, x: f64) -> f64 {
    gamma_p(0.5 * dof, 0.5 * x)
}

fn chi2_pdf(dof: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * dof;
    ((k - 1.0) * x.ln() - 0.5 * x - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Inverse CDF of the chi-square distribution with `dof` degrees of freedom.
pub fn chi2_quantile(dof: usize, q: f64) -> Result<f64> {
    if dof == 0 {
        return Err(DroError::InvalidParameter("chi-square needs dof >= 1".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(DroError::InvalidRange(format!("quantile level {q} is outside (0, 1)")));
    }
    let k = dof as f64;
    let mut hi = k.max(1.0);
    while chi2_cdf(k, hi) < q {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(k, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * hi.max(1.0) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..5 {
        let pdf = chi2_pdf(k, x);
        if pdf <= 0.0 {
            break;
        }
        let next = x - (chi2_cdf(k, x) - q) / pdf;
        if !(next > lo - 1e-9 && next < hi + 1e-9) {
            break;
        }
        x = next;
    }
    Ok(x)
}

/// `phi''(1) / (2N) * chi2_{I-1, 1-beta}`.
pub fn radius_phi_divergence(n: usize, regions: usize, beta: f64, phi_dd1: f64) -> Result<f64> {
    if regions < 2 {
        return Err(DroError::InvalidParameter(format!(
            "the divergence radius needs at least 2 regions (zero degrees of freedom), got {regions}"
        )));
    }
    check_sample_and_beta(n, beta)?;
    Ok(phi_dd1 / (2.0 * n as f64) * chi2_quantile(regions - 1, 1.0 - beta)?)
}

/// `(I / sqrt(N)) (2 + sqrt(2 ln(I / beta)))`.
pub fn radius_total_variation(n: usize, regions: usize, beta: f64) -> Result<f64> {
    if regions < 1 {
        return Err(DroError::InvalidParameter("need at least one region".into()));
    }
    check_sample_and_beta(n, beta)?;
    let i = regions as f64;
    Ok(i / (n as f64).sqrt() * (2.0 + (2.0 * (i / beta).ln()).sqrt()))
}

fn check_sample_and_beta(n: usize, beta: f64) -> Result<()> {
    if n == 0 {
        return Err(DroError::InvalidParameter("sample size must be >= 1".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(DroError::InvalidRange(format!("confidence level {beta} is outside (0, 1)")));
    }
    Ok(())
}

/// Per-region transport radius from the concentration bound. The exponent
/// is `1/max(dim, 2)` when `N_i >= ln(B/beta)/C` and `1/a` otherwise.
pub fn epsilon_concentration(
    n_i: usize,
    beta: f64,
    dim: usize,
    a: f64,
    b: f64,
    c: f64,
) -> Result<f64> {
    if dim == 2 {
        return Err(DroError::UnsupportedDimension(dim));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(DroError::InvalidRange(format!("confidence level {beta} is outside (0, 1]")));
    }
    if !(a > 1.0) || !(b > 0.0) || !(c > 0.0) || n_i == 0 || dim == 0 {
        return Err(DroError::InvalidParameter(format!(
            "need N_i >= 1, dim >= 1, a > 1, B > 0, C > 0 (got N_i={n_i}, dim={dim}, a={a}, B={b}, C={c})"
        )));
    }
    let log_term = (b / beta).ln();
    let base = (log_term / (c * n_i as f64)).max(0.0);
    let exponent = if n_i as f64 >= log_term / c {
        1.0 / dim.max(2) as f64
    } else {
        1.0 / a
    };
    Ok(base.powf(exponent))
}

/// `sum_i p_i eps_i`.
pub fn combined_epsilon(p: &[f64], eps: &[f64]) -> Result<f64> {
    if p.len() != eps.len() {
        return Err(DroError::DimensionMismatch {
            expected: p.len(),
            found: eps.len(),
        });
    }
    Ok(p.iter().zip(eps).map(|(a, b)| a * b).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub certificate_gap: f64,
    pub reliable: bool,
}

/// Gap `actual - certificate`; the certificate is reliable when it bounds
/// the actual cost.
pub fn metrics(actual_cost: f64, certificate: f64) -> Metrics {
    let certificate_gap = actual_cost - certificate;
    Metrics {
        certificate_gap,
        reliable: certificate_gap <= 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub epsilon: f64,
    pub rho: f64,
}

/// All pairs of the two grids, epsilon-major.
pub fn candidate_grid(epsilons: &[f64], rhos: &[f64]) -> Vec<Candidate> {
    epsilons
        .iter()
        .flat_map(|&epsilon| rhos.iter().map(move |&rho| Candidate { epsilon, rho }))
        .collect()
}

/// Data-driven model whose parameters are tuned.
pub trait TuneModel: Sync {
    fn fit(&self, sample: &[Vec<f64>], candidate: &Candidate) -> Result<DroSolution>;
    fn cost(&self, x: &[f64], xi: &[f64]) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Droc {
        partition: PartitionScheme,
        cone: OrderCone,
    },
    Drow {
        support: AxisBox,
    },
    Saa,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Droc { .. } => "DROC",
            Method::Drow { .. } => "DROW",
            Method::Saa => "SAA",
        }
    }
}

/// One of the three methods applied to a fixed problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroModel {
    pub method: Method,
    pub objective: PiecewiseObjective,
    pub decision: DecisionSpec,
    pub tol: f64,
}

impl DroModel {
    /// The partitioned instance on `sample`; checks the weight budget first.
    pub fn droc_instance(&self, sample: &[Vec<f64>], candidate: &Candidate) -> Result<Instance> {
        let Method::Droc { partition, cone } = &self.method else {
            return Err(DroError::InvalidParameter("not a partitioned model".into()));
        };
        let nominal = build_nominal(sample, partition)?;
        let rho_min = min_radius_feasible(cone, &nominal.weights)?;
        if candidate.rho < rho_min - 1e-9 {
            return Err(DroError::InfeasibleAmbiguity);
        }
        Ok(Instance {
            decision: self.decision.clone(),
            objective: self.objective.clone(),
            partition: partition.clone(),
            nominal,
            ambiguity: AmbiguityParams {
                epsilon: candidate.epsilon,
                rho: candidate.rho,
                cone: cone.clone(),
            },
        })
    }
}

impl TuneModel for DroModel {
    fn fit(&self, sample: &[Vec<f64>], candidate: &Candidate) -> Result<DroSolution> {
        match &self.method {
            Method::Droc { .. } => solve_instance(&self.droc_instance(sample, candidate)?, self.tol),
            Method::Drow { support } => solve_reduced(
                &reduce_drow(sample, &self.objective, &self.decision, candidate.epsilon, support)?,
                self.tol,
            ),
            Method::Saa => solve_reduced(&reduce_saa(sample, &self.objective, &self.decision)?, self.tol),
        }
    }

    fn cost(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.objective.eval(x, xi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub candidate_id: usize,
    pub epsilon: f64,
    pub rho: f64,
    pub screen_count: usize,
    pub mean_validation_cost: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub selected: Option<usize>,
    pub candidate: Option<Candidate>,
    pub threshold: usize,
    pub kboot: usize,
    pub rows: Vec<CandidateRow>,
    /// Winner re-solved on the full sample.
    pub solution: Option<DroSolution>,
}

impl TuneResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| DroError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// `ceil((1 - beta) kboot)`, guarded against rounding just above an integer.
pub fn screen_threshold(beta: f64, kboot: usize) -> usize {
    ((1.0 - beta) * kboot as f64 - 1e-9).ceil().max(0.0) as usize
}

struct Resample {
    train: Vec<Vec<f64>>,
    validation: Vec<Vec<f64>>,
}

fn resample(sample: &[Vec<f64>], seed: u64, index: usize) -> Resample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let n = sample.len();
    let mut drawn = vec![false; n];
    let train = (0..n)
        .map(|_| {
            let k = rng.random_range(0..n);
            drawn[k] = true;
            sample[k].clone()
        })
        .collect();
    let mut validation: Vec<Vec<f64>> =
        (0..n).filter(|&k| !drawn[k]).map(|k| sample[k].clone()).collect();
    if validation.is_empty() {
        validation = sample.to_vec();
    }
    Resample { train, validation }
}

/// Bootstrap selection of the ambiguity budgets. A candidate passes a
/// resample when its certificate bounds the out-of-bag average cost of its
/// decision; among candidates passing in at least `ceil((1-beta) kboot)`
/// resamples the one with the lowest mean out-of-bag cost wins and is
/// re-solved on the full sample. Candidates that fail to solve on some
/// resample (e.g. an empty ambiguity set) are not eligible.
pub fn bootstrap_tune<M: TuneModel>(
    sample: &[Vec<f64>],
    model: &M,
    candidates: &[Candidate],
    beta: f64,
    kboot: usize,
    seed: u64,
) -> Result<TuneResult> {
    if kboot < 2 {
        return Err(DroError::InvalidParameter(format!("kboot must be >= 2, got {kboot}")));
    }
    if candidates.is_empty() {
        return Err(DroError::InvalidParameter("empty candidate grid".into()));
    }
    if sample.is_empty() {
        return Err(DroError::InvalidParameter("empty sample".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(DroError::InvalidRange(format!("beta {beta} is outside (0, 1)")));
    }
    let resamples: Vec<Resample> = (0..kboot).map(|b| resample(sample, seed, b)).collect();
    let cells: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..kboot).map(move |b| (c, b)))
        .collect();
    // (passed, validation cost) or None when the fit failed
    let outcomes: Vec<Option<(bool, f64)>> = cells
        .par_iter()
        .map(|&(c, b)| {
            let rs = &resamples[b];
            let sol = model.fit(&rs.train, &candidates[c]).ok()?;
            let cost = rs.validation.iter().map(|xi| model.cost(&sol.x, xi)).sum::<f64>()
                / rs.validation.len() as f64;
            Some((sol.certificate >= cost, cost))
        })
        .collect();

    let threshold = screen_threshold(beta, kboot);
    let mut rows = Vec::with_capacity(candidates.len());
    let mut eligible = Vec::with_capacity(candidates.len());
    for (c, cand) in candidates.iter().enumerate() {
        let cell = &outcomes[c * kboot..(c + 1) * kboot];
        let solved: Vec<(bool, f64)> = cell.iter().flatten().copied().collect();
        let screen_count = solved.iter().filter(|(ok, _)| *ok).count();
        let mean = if solved.is_empty() {
            f64::NAN
        } else {
            solved.iter().map(|(_, v)| v).sum::<f64>() / solved.len() as f64
        };
        eligible.push(solved.len() == kboot && screen_count >= threshold);
        rows.push(CandidateRow {
            candidate_id: c,
            epsilon: cand.epsilon,
            rho: cand.rho,
            screen_count,
            mean_validation_cost: mean,
            selected: false,
        });
    }
    let selected = (0..candidates.len()).filter(|&c| eligible[c]).fold(None, |best: Option<usize>, c| {
        match best {
            Some(b) if rows[b].mean_validation_cost <= rows[c].mean_validation_cost => Some(b),
            _ => Some(c),
        }
    });
    let mut result = TuneResult {
        selected,
        candidate: selected.map(|c| candidates[c]),
        threshold,
        kboot,
        rows,
        solution: None,
    };
    let Some(sel) = selected else {
        return Err(DroError::NoReliableCandidate(Box::new(result)));
    };
    result.rows[sel].selected = true;
    result.solution = Some(model.fit(sample, &candidates[sel])?);
    Ok(result)
}
