mod common;

use common::{close, random_case, random_decision, Shape};
use droc_core::model::PiecewiseObjective;
use droc_core::oracle::{worst_case_expectation, FiniteInstance};
use droc_core::reformulate::{
    build_program, build_program_separable, reduce_drow, reduce_saa, single_region_instance,
    solve_instance, solve_reduced, worst_case_at,
};
use droc_core::DroError;

const TOL: f64 = 1e-10;

#[test]
fn dual_matches_grid_oracle() {
    for seed in 0..60 {
        let case = random_case(seed, Shape::default());
        let x = random_decision(&case, seed + 1000);
        let dual = worst_case_at(&case.instance, &x, TOL).unwrap();
        let fi = FiniteInstance::from_boxes(&case.instance).unwrap();
        let primal = worst_case_expectation(&x, &fi).unwrap().value;
        assert!(close(dual, primal, 1e-6), "seed {seed}: dual {dual} vs oracle {primal}");
    }
}

#[test]
fn separable_dual_matches_grid_oracle() {
    let shape = Shape {
        separable: true,
        ..Shape::default()
    };
    for seed in 0..30 {
        let case = random_case(500 + seed, shape);
        let x = random_decision(&case, seed);
        let dual = worst_case_at(&case.instance, &x, TOL).unwrap();
        let fi = FiniteInstance::from_boxes(&case.instance).unwrap();
        let primal = worst_case_expectation(&x, &fi).unwrap().value;
        assert!(close(dual, primal, 1e-6), "seed {seed}: dual {dual} vs oracle {primal}");
    }
}

#[test]
fn optimal_certificate_bounds_every_feasible_expectation() {
    for seed in 0..25 {
        let case = random_case(2000 + seed, Shape::default());
        let sol = solve_instance(&case.instance, TOL).unwrap();
        let fi = FiniteInstance::from_boxes(&case.instance).unwrap();
        let at_opt = worst_case_expectation(&sol.x, &fi).unwrap();
        assert!(sol.certificate >= at_opt.value - 1e-6 * (1.0 + at_opt.value.abs()));
        // any other decision does no better in the worst case
        for k in 0..3 {
            let x = random_decision(&case, seed * 10 + k);
            let v = worst_case_expectation(&x, &fi).unwrap().value;
            assert!(v >= sol.certificate - 1e-6 * (1.0 + v.abs()), "seed {seed}");
        }
    }
}

#[test]
fn below_minimum_radius_both_sides_report_infeasible() {
    let mut hits = 0;
    for seed in 0..80 {
        let mut case = random_case(3000 + seed, Shape::default());
        if case.rho_min < 1e-3 {
            continue;
        }
        hits += 1;
        case.instance.ambiguity.rho = 0.5 * case.rho_min;
        let x = random_decision(&case, seed);
        assert!(matches!(
            worst_case_at(&case.instance, &x, TOL),
            Err(DroError::InfeasibleAmbiguity)
        ));
        let fi = FiniteInstance::from_boxes(&case.instance).unwrap();
        assert!(matches!(worst_case_expectation(&x, &fi), Err(DroError::InfeasibleAmbiguity)));
    }
    assert!(hits >= 5, "only {hits} instances had a positive minimum radius");
}

#[test]
fn value_grows_with_both_budgets() {
    for seed in 0..20 {
        let case = random_case(4000 + seed, Shape::default());
        let x = random_decision(&case, seed);
        let mut last = f64::NEG_INFINITY;
        for (de, dr) in [(0.0, 0.0), (0.1, 0.0), (0.1, 0.1), (0.3, 0.1), (0.3, 0.4)] {
            let mut inst = case.instance.clone();
            inst.ambiguity.epsilon += de;
            inst.ambiguity.rho += dr;
            let v = worst_case_at(&inst, &x, TOL).unwrap();
            assert!(v >= last - 1e-8 * (1.0 + v.abs()), "seed {seed}: {v} after {last}");
            last = v;
        }
    }
}

#[test]
fn extra_cone_rows_never_increase_value() {
    for seed in 0..20 {
        let case = random_case(5000 + seed, Shape::default());
        let n = case.instance.partition.len();
        if n < 2 {
            continue;
        }
        let x = random_decision(&case, seed);
        let loose = worst_case_at(&case.instance, &x, TOL).unwrap();
        let mut tight = case.instance.clone();
        // keep the nominal weights inside the tightened cone
        let w = &tight.nominal.weights;
        let (hi, lo) = if w[0] >= w[1] { (0, 1) } else { (1, 0) };
        let mut row = vec![0.0; n];
        row[hi] = 1.0;
        row[lo] = -1.0;
        tight.ambiguity.cone = tight.ambiguity.cone.with_extra_rows(vec![row]).unwrap();
        match worst_case_at(&tight, &x, TOL) {
            Ok(v) => assert!(v <= loose + 1e-8 * (1.0 + loose.abs()), "seed {seed}: {v} > {loose}"),
            Err(DroError::InfeasibleAmbiguity) => {}
            Err(e) => panic!("seed {seed}: {e}"),
        }
    }
}

fn max_case(seed: u64) -> common::Case {
    random_case(
        seed,
        Shape {
            max_regions: 1,
            ..Shape::default()
        },
    )
}

#[test]
fn single_region_build_matches_wasserstein_reduction() {
    for seed in 0..20 {
        let case = max_case(6000 + seed);
        let inst = &case.instance;
        let support = &inst.partition.support;
        let single = single_region_instance(
            &case.samples,
            &inst.objective,
            &inst.decision,
            support,
            inst.ambiguity.epsilon,
            0.0,
        );
        let a = solve_reduced(&build_program(&single).unwrap(), TOL).unwrap();
        let drow = reduce_drow(&case.samples, &inst.objective, &inst.decision, inst.ambiguity.epsilon, support)
            .unwrap();
        let b = solve_reduced(&drow, TOL).unwrap();
        assert!(close(a.certificate, b.certificate, 1e-8), "seed {seed}: {} vs {}", a.certificate, b.certificate);
    }
}

#[test]
fn zero_radius_build_matches_sample_average() {
    for seed in 0..20 {
        let case = max_case(7000 + seed);
        let inst = &case.instance;
        let single =
            single_region_instance(&case.samples, &inst.objective, &inst.decision, &inst.partition.support, 0.0, 0.0);
        let a = solve_reduced(&build_program(&single).unwrap(), TOL).unwrap();
        let b = solve_reduced(&reduce_saa(&case.samples, &inst.objective, &inst.decision).unwrap(), TOL).unwrap();
        assert!(close(a.certificate, b.certificate, 1e-8), "seed {seed}: {} vs {}", a.certificate, b.certificate);
    }
}

#[test]
fn one_coordinate_separable_equals_max_form() {
    let shape = Shape {
        max_dim: 1,
        separable: true,
        ..Shape::default()
    };
    for seed in 0..20 {
        let case = random_case(8000 + seed, shape);
        let PiecewiseObjective::Separable { blocks } = &case.instance.objective else {
            unreachable!()
        };
        let mut plain = case.instance.clone();
        plain.objective = PiecewiseObjective::Max {
            pieces: blocks[0].pieces.clone(),
        };
        let a = solve_reduced(&build_program_separable(&case.instance).unwrap(), TOL).unwrap();
        let b = solve_reduced(&build_program(&plain).unwrap(), TOL).unwrap();
        assert!(close(a.certificate, b.certificate, 1e-8), "seed {seed}");
    }
}
