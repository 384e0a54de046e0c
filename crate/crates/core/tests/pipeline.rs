mod common;

use common::{random_case, Shape};
use droc_core::bench::{newsvendor_objective, sample_truncated_mixture, MixtureSpec};
use droc_core::calibrate::{
    bootstrap_tune, candidate_grid, Candidate, DroModel, Method, TuneModel, TuneResult,
};
use droc_core::cones::make_simple_order;
use droc_core::model::{AxisBox, DecisionSpec};
use droc_core::oracle::{exhaustive_argmin, FiniteInstance};
use droc_core::partition::{partition_from_data, RegionCount};
use droc_core::reformulate::solve_instance;
use droc_core::DroError;

#[test]
fn grid_search_never_beats_the_solver() {
    let mut checked = 0;
    for seed in 0..40 {
        let case = random_case(9000 + seed, Shape::default());
        if case.instance.decision.dim() != 1 {
            continue;
        }
        checked += 1;
        let sol = solve_instance(&case.instance, 1e-10).unwrap();
        let fi = FiniteInstance::from_boxes(&case.instance).unwrap();
        let grid: Vec<Vec<f64>> = (0..=20).map(|k| vec![k as f64 / 20.0]).collect();
        let (_, best) = exhaustive_argmin(&grid, &fi).unwrap();
        assert!(best >= sol.certificate - 1e-6 * (1.0 + best.abs()), "seed {seed}: {best} < {}", sol.certificate);
        // the grid is fine enough for the gap to be small
        assert!(best - sol.certificate < 0.25, "seed {seed}");
    }
    assert!(checked >= 10);
}

fn newsvendor_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, DroModel) {
    let spec = MixtureSpec::single_item_newsvendor();
    let sample = sample_truncated_mixture(&spec, n, seed).unwrap();
    let partition = partition_from_data(&sample, &spec.support, RegionCount::Fixed(3), seed).unwrap();
    let cone = make_simple_order(partition.len()).unwrap();
    let model = DroModel {
        method: Method::Droc { partition, cone },
        objective: newsvendor_objective(4.0, 2.0).unwrap(),
        decision: DecisionSpec::boxed(vec![0.0], vec![1.0]),
        tol: 1e-9,
    };
    (sample, model)
}

fn wide_grid() -> Vec<Candidate> {
    candidate_grid(&[0.0, 0.05, 0.2], &[0.5, 1.0, 2.0])
}

fn tune_in_pool(threads: usize, sample: &[Vec<f64>], model: &DroModel) -> TuneResult {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| bootstrap_tune(sample, model, &wide_grid(), 0.2, 10, 77))
        .unwrap_or_else(|e| match e {
            DroError::NoReliableCandidate(r) => *r,
            e => panic!("{e}"),
        })
}

#[test]
fn tuning_is_independent_of_thread_count() {
    let (sample, model) = newsvendor_data(30, 11);
    let one = tune_in_pool(1, &sample, &model);
    let four = tune_in_pool(4, &sample, &model);
    assert_eq!(one.to_csv_string().unwrap(), four.to_csv_string().unwrap());
    assert_eq!(one.selected, four.selected);
}

#[test]
fn single_reliable_candidate_is_selected() {
    let (sample, model) = newsvendor_data(25, 3);
    let only = [Candidate { epsilon: 0.5, rho: 2.0 }];
    let r = bootstrap_tune(&sample, &model, &only, 0.2, 8, 5).unwrap();
    assert_eq!(r.selected, Some(0));
    assert_eq!(r.rows[0].screen_count, 8);
    assert!(r.solution.is_some());
}

#[test]
fn larger_budgets_pass_at_least_as_often() {
    let (sample, model) = newsvendor_data(25, 8);
    let grid = [Candidate { epsilon: 0.0, rho: 2.0 }, Candidate { epsilon: 1.0, rho: 2.0 }];
    let r = bootstrap_tune(&sample, &model, &grid, 0.2, 12, 2).unwrap();
    assert!(r.rows[1].screen_count >= r.rows[0].screen_count);
    assert_eq!(r.rows[1].screen_count, 12);
}

#[test]
fn empty_ambiguity_candidates_are_never_selected() {
    let (sample, model) = newsvendor_data(25, 4);
    let grid = [Candidate { epsilon: 0.3, rho: 0.0 }, Candidate { epsilon: 0.3, rho: 2.0 }];
    let r = bootstrap_tune(&sample, &model, &grid, 0.2, 6, 9).unwrap();
    if matches!(model.fit(&sample, &grid[0]), Err(DroError::InfeasibleAmbiguity)) {
        assert_ne!(r.selected, Some(0));
        assert!(r.rows[0].mean_validation_cost.is_nan() || r.rows[0].screen_count < 6);
    }
}

#[test]
fn wasserstein_and_sample_average_models_tune() {
    let (sample, droc) = newsvendor_data(20, 6);
    let drow = DroModel {
        method: Method::Drow {
            support: AxisBox::interval(0.0, 1.0).unwrap(),
        },
        ..droc.clone()
    };
    let r = bootstrap_tune(&sample, &drow, &wide_grid(), 0.2, 6, 1).unwrap();
    let chosen = r.candidate.unwrap();
    assert!(chosen.epsilon > 0.0);
    let saa = DroModel {
        method: Method::Saa,
        ..droc
    };
    match bootstrap_tune(&sample, &saa, &wide_grid(), 0.05, 6, 1) {
        Ok(r) => assert!(r.selected.is_some()),
        Err(DroError::NoReliableCandidate(r)) => assert!(r.rows.iter().all(|c| c.screen_count < r.threshold)),
        Err(e) => panic!("{e}"),
    }
}
