mod common;

use common::{dense_inverse, gaussian, max_abs_diff, random_metric};
use nalgebra::{dvector, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tatml::constraints::constraint_value;
use tatml::solver::{
    apply_update, compute_d, fit, fit_with_observer, naive_rhs, project_halfspace, Mode, Schedule,
    SlackGeometry, SolverConfig, SolverState,
};
use tatml::threshold::GramOperator;
use tatml::{derive_params, ConstraintSet, MetricParams, ThresholdConfig};

fn unit_td(k_plus: usize, k_minus: usize) -> tatml::ThresholdDerived<f64> {
    derive_params(&ThresholdConfig::new(1.0, 1.0, 1.0, k_plus, k_minus)).unwrap()
}

fn col(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

#[test]
fn no_constraints_returns_initial_metric() {
    let cs = ConstraintSet::<f64>::from_factors(vec![], vec![]).unwrap();
    let w0 = MetricParams::identity(&[(2, 1)]);
    let res = fit(&cs, &unit_td(1, 1), &SolverConfig::default(), &w0).unwrap();
    assert_eq!(res.w, w0);
    assert_eq!(res.xi.len(), 0);
    assert_eq!(res.diagnostics.iterations, 0);
    assert!(res.diagnostics.converged);
}

#[test]
fn strictly_feasible_start_is_a_fixed_point() {
    // similar value 0.01 < ξ₀ = ½, dissimilar value 18 > ξ₀ = 2
    let cs = ConstraintSet::from_factors(
        vec![vec![col(&[0.1, 0.0])]],
        vec![vec![col(&[3.0, 3.0])]],
    )
    .unwrap();
    let td = unit_td(1, 1);
    let w0 = MetricParams::identity(&[(2, 1)]);
    let res = fit(&cs, &td, &SolverConfig::default(), &w0).unwrap();
    assert!(res.diagnostics.converged);
    assert_eq!(res.diagnostics.sweeps, 1);
    assert!(max_abs_diff(res.w.matrix(0), w0.matrix(0)) <= 1e-12);
    assert!((&res.xi - &td.xi0).amax() <= 1e-12);
    assert!(res.diagnostics.history.iter().all(|r| r.delta == 0.0));
    assert!(res.alpha.iter().all(|&a| a == 0.0));
}

fn scalar_state(xi: f64) -> (SolverState<f64>, ConstraintSet<f64>, SlackGeometry<f64>) {
    let cs = ConstraintSet::from_factors(vec![vec![col(&[1.0])]], vec![]).unwrap();
    let geom = SlackGeometry {
        xi0: dvector![xi],
        gram: GramOperator::scaled_identity(1.0, 1),
    };
    let state = SolverState::new(MetricParams::identity(&[(1, 1)]), dvector![xi]);
    (state, cs, geom)
}

#[test]
fn scalar_projection_matches_quadratic_formula() {
    let (mut state, cs, geom) = scalar_state(0.5);
    let rec = project_halfspace(&mut state, &cs, &geom, 0, &SolverConfig::default()).unwrap();
    // 0.5 + δ = 1/(1 + δ)  ⇔  δ² + 1.5δ − 0.5 = 0
    let expected = (-1.5 + 4.25f64.sqrt()) / 2.0;
    assert!((rec.delta - expected).abs() < 1e-12);
    assert!((rec.delta - 0.2807764).abs() < 1e-7);
    assert!(!rec.clipped);
    assert!((state.w.matrix(0)[(0, 0)] - 1.0 / (1.0 + expected)).abs() < 1e-12);
    assert!((state.xi[0] - (0.5 + expected)).abs() < 1e-12);
    assert!(rec.residual.abs() < 1e-12);
}

#[test]
fn boundary_point_is_left_alone() {
    let (mut state, cs, geom) = scalar_state(1.0);
    let before = state.w.clone();
    let rec = project_halfspace(&mut state, &cs, &geom, 0, &SolverConfig::default()).unwrap();
    assert_eq!(rec.delta, 0.0);
    assert_eq!(state.w, before);
    assert_eq!(state.xi[0], 1.0);
}

#[test]
fn unclipped_projection_lands_on_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for trial in 0..200 {
        let dims = if trial % 2 == 0 { vec![3] } else { vec![4, 2] };
        let w = random_metric(&dims, &mut rng);
        let factors = |rng: &mut ChaCha8Rng| -> Vec<DMatrix<f64>> {
            dims.iter().map(|&n| gaussian(n, 2, rng)).collect()
        };
        let cs = ConstraintSet::from_factors(vec![factors(&mut rng)], vec![factors(&mut rng)]).unwrap();
        let td = unit_td(1, 1);
        let geom = SlackGeometry::for_mode(&td, Mode::AutoTune);
        let xi = dvector![rng.random_range(-1.0..5.0), rng.random_range(-1.0..5.0)];
        let mut state = SolverState::new(w, xi);
        state.alpha = dvector![rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)];
        let k = trial % 2;
        let rec = project_halfspace(&mut state, &cs, &geom, k, &SolverConfig::default()).unwrap();
        let gap = constraint_value(&state.w, &cs, k).unwrap() - state.xi[k];
        if !rec.clipped {
            checked += 1;
            assert!(gap.abs() <= 1e-8 * (1.0 + state.xi[k].abs()), "gap {gap}");
        }
        assert!(state.alpha.iter().all(|&a| a >= 0.0));
        assert!(state.w.matrices().iter().all(|m| m.clone().cholesky().is_some()));
    }
    assert!(checked > 50);
}

#[test]
fn compute_d_examples() {
    let cs = ConstraintSet::from_factors(vec![vec![col(&[1.0, 0.0])]], vec![]).unwrap();
    let w = MetricParams::identity(&[(2, 1)]);
    assert_eq!(compute_d(&w, &cs, 0).unwrap(), vec![1.0]);

    let cs = ConstraintSet::from_factors(
        vec![vec![col(&[1.0, 0.0]), col(&[2f64.sqrt(), 0.0])]],
        vec![],
    )
    .unwrap();
    let w = MetricParams::identity(&[(2, 1), (2, 1)]);
    let mut d = compute_d(&w, &cs, 0).unwrap();
    d.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert!((d[0] - 2.0).abs() < 1e-12 && (d[1] - 1.0).abs() < 1e-12);
    for delta in [0.0, 0.5] {
        let efficient: f64 = d.iter().map(|x| 1.0 / (x + delta)).sum();
        assert!((efficient - naive_rhs(delta, &w, &cs, 0).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn compute_d_flags_vanishing_factors() {
    let cs = ConstraintSet::from_factors(vec![vec![col(&[0.0, 0.0])]], vec![]).unwrap();
    let w = MetricParams::identity(&[(2, 1)]);
    assert!(compute_d(&w, &cs, 0).unwrap().is_empty());
}

#[test]
fn compute_d_agrees_with_naive_rhs_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random_metric(&[5, 3], &mut rng);
    let cs = ConstraintSet::from_factors(vec![vec![gaussian(5, 2, &mut rng), gaussian(3, 3, &mut rng)]], vec![])
        .unwrap();
    let d = compute_d(&w, &cs, 0).unwrap();
    let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
    for _ in 0..10 {
        let delta = -d_min + rng.random_range(0.01..5.0) * d_min;
        let efficient: f64 = d.iter().map(|x| 1.0 / (x + delta)).sum();
        let naive = naive_rhs(delta, &w, &cs, 0).unwrap();
        assert!((efficient - naive).abs() <= 1e-9 * naive.abs().max(1.0));
    }
}

#[test]
fn naive_rhs_examples() {
    let cs = ConstraintSet::from_factors(vec![vec![col(&[1.0])]], vec![]).unwrap();
    let w = MetricParams::identity(&[(1, 1)]);
    assert!((naive_rhs(1.0, &w, &cs, 0).unwrap() - 0.5).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = random_metric(&[4], &mut rng);
    let cs = ConstraintSet::from_factors(vec![vec![gaussian(4, 2, &mut rng)]], vec![]).unwrap();
    let at_zero = naive_rhs(0.0, &w, &cs, 0).unwrap();
    let value = constraint_value(&w, &cs, 0).unwrap();
    assert!((at_zero - value).abs() <= 1e-10 * value);
}

#[test]
fn apply_update_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random_metric(&[4], &mut rng);
    let v = gaussian(4, 1, &mut rng);
    let cs = ConstraintSet::from_factors(vec![vec![v.clone()]], vec![]).unwrap();

    assert_eq!(apply_update(&w, &cs, 0, 0.0).unwrap(), w);

    let beta = 0.3;
    let updated = apply_update(&w, &cs, 0, beta).unwrap();
    let wv = w.matrix(0) * &v;
    let denom = 1.0 + beta * (v.transpose() * &wv)[(0, 0)];
    let sherman_morrison = w.matrix(0) - (&wv * wv.transpose()) * (beta / denom);
    assert!(max_abs_diff(updated.matrix(0), &sherman_morrison) < 1e-12);

    let v2 = gaussian(4, 3, &mut rng);
    let cs2 = ConstraintSet::from_factors(vec![], vec![vec![v2.clone()]]).unwrap();
    let beta = -0.05;
    let updated = apply_update(&w, &cs2, 0, beta).unwrap();
    let new_inv = w.inverse(0) + &v2 * v2.transpose() * beta;
    assert!(max_abs_diff(updated.inverse(0), &new_inv) < 1e-12);
    assert!(max_abs_diff(updated.matrix(0), &dense_inverse(&new_inv)) < 1e-8);
}

#[test]
fn apply_update_refuses_to_leave_the_cone() {
    let cs = ConstraintSet::from_factors(vec![vec![col(&[1.0])]], vec![]).unwrap();
    let w = MetricParams::identity(&[(1, 1)]);
    assert!(matches!(apply_update(&w, &cs, 0, -1.5), Err(tatml::Error::Numeric(_))));
}

fn random_problem(rng: &mut ChaCha8Rng, dims: &[usize], k_plus: usize, k_minus: usize) -> ConstraintSet<f64> {
    let mut draw = |scale: f64| -> Vec<DMatrix<f64>> {
        dims.iter().map(|&n| gaussian(n, 2, rng) * scale).collect()
    };
    let sim = (0..k_plus).map(|_| draw(0.6)).collect();
    let dis = (0..k_minus).map(|_| draw(0.4)).collect();
    ConstraintSet::from_factors(sim, dis).unwrap()
}

#[test]
fn fixed_threshold_is_autotune_machinery_with_scaled_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cs = random_problem(&mut rng, &[3], 3, 3);
    let c = 0.7;
    let (b_ub, b_lb) = (0.4, 1.6);
    let td = derive_params(&ThresholdConfig::new(c, 1.0, 1.0, 3, 3)).unwrap();
    let cfg = SolverConfig {
        max_sweeps: 25,
        mode: Mode::FixedThreshold { b_ub, b_lb },
        schedule: Schedule::Cyclic,
        ..SolverConfig::default()
    };
    let w0 = MetricParams::identity(&[(3, 2)]);
    let res = fit(&cs, &td, &cfg, &w0).unwrap();

    // same loop driven by hand with G = c(I + 0·γγᵀ) and ξ₀ = b
    let geom = SlackGeometry {
        xi0: dvector![b_ub, b_ub, b_ub, b_lb, b_lb, b_lb],
        gram: GramOperator::new(c, 0.0, td.gamma.clone()),
    };
    assert!(max_abs_diff(&geom.gram.to_dense(), &(DMatrix::identity(6, 6) * c)) == 0.0);
    let mut state = SolverState::new(w0.clone(), geom.xi0.clone());
    for sweep in 0..res.diagnostics.sweeps {
        state.sweep = sweep;
        for k in 0..6 {
            project_halfspace(&mut state, &cs, &geom, k, &cfg).unwrap();
        }
        state.w.resync_from_inverses().unwrap();
    }
    assert!(max_abs_diff(state.w.matrix(0), res.w.matrix(0)) < 1e-12);
    assert!((&state.xi - &res.xi).amax() < 1e-12);
    assert!(res.b0.is_none());
}

#[test]
fn iterates_stay_positive_definite_with_nonnegative_duals() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cs = random_problem(&mut rng, &[3, 2], 6, 6);
    let td = unit_td(6, 6);
    let cfg = SolverConfig { max_sweeps: 40, ..SolverConfig::default() };
    let w0 = MetricParams::identity(&[(3, 2), (2, 2)]);
    let mut violations = 0;
    fit_with_observer(&cs, &td, &cfg, &w0, |state, _| {
        let spd = state.w.matrices().iter().all(|m| m.clone().cholesky().is_some());
        if !spd || state.alpha.iter().any(|&a| a < 0.0) {
            violations += 1;
        }
    })
    .unwrap();
    assert_eq!(violations, 0);
}

#[test]
fn converged_fit_is_feasible_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cs = random_problem(&mut rng, &[3], 4, 4);
    let td = unit_td(4, 4);
    let cfg = SolverConfig { seed: 4, ..SolverConfig::default() };
    let w0 = MetricParams::identity(&[(3, 2)]);
    let a = fit(&cs, &td, &cfg, &w0).unwrap();
    let b = fit(&cs, &td, &cfg, &w0).unwrap();
    assert!(a.diagnostics.converged, "sweeps {}", a.diagnostics.sweeps);
    assert!(a.diagnostics.feasibility_residual <= 1e-7);
    assert_eq!(a.w, b.w);
    assert_eq!(a.xi, b.xi);
    assert_eq!(a.b0, b.b0);
    assert!((a.b0.unwrap() - td.recover_b0(&a.xi)).abs() == 0.0);
}

#[test]
fn mismatched_threshold_model_is_rejected() {
    let cs = ConstraintSet::from_factors(vec![vec![col(&[1.0, 0.0])]], vec![]).unwrap();
    let w0 = MetricParams::identity(&[(2, 1)]);
    assert!(matches!(
        fit(&cs, &unit_td(1, 1), &SolverConfig::default(), &w0),
        Err(tatml::Error::Dimension(_))
    ));
    let w_bad = MetricParams::identity(&[(3, 1)]);
    assert!(fit(&cs, &unit_td(1, 0), &SolverConfig::default(), &w_bad).is_err());
}
