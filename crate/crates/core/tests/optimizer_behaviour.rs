//! Optimizer behaviour on synthetic objectives with known answers.

use mdiqkd::optimizer::{
    fd_gradient, neighborhood_jump, optimize, MoveKind, NeighborhoodSearch, OptimizerConfig, ParamBounds,
};
use mdiqkd::sources::ParamVector;

const TARGET: [f64; 12] = [0.12, 0.34, 0.56, 0.2, 0.15, 0.4, 0.08, 0.27, 0.61, 0.25, 0.1, 0.45];
const WEIGHTS: [f64; 12] = [1.0, 2.0, 1.5, 3.0, 1.0, 2.5, 1.2, 1.8, 0.7, 2.2, 1.0, 1.4];

fn interior() -> ParamVector<f64> {
    ParamVector([0.1, 0.3, 0.5, 0.2, 0.2, 0.3, 0.15, 0.35, 0.45, 0.25, 0.15, 0.35])
}

fn quadratic(x: &ParamVector<f64>) -> f64 {
    -(0..12).map(|k| WEIGHTS[k] * (x[k] - TARGET[k]).powi(2)).sum::<f64>()
}

fn config_with_step(h: f64) -> OptimizerConfig<f64> {
    OptimizerConfig {
        fd_step_mu: h,
        fd_step_p: h,
        ..OptimizerConfig::default()
    }
}

#[test]
fn gradient_of_quadratic_matches_analytic() {
    let x = interior();
    let g = fd_gradient(&x, &quadratic, &OptimizerConfig::default(), &ParamBounds::default());
    assert!(!g.projected);
    for k in 0..12 {
        let exact = -2.0 * WEIGHTS[k] * (x[k] - TARGET[k]);
        assert!((g.components[k] - exact).abs() < 1e-8, "k={k}");
    }
}

#[test]
fn gradient_error_is_second_order() {
    // exp has a nonzero third derivative, so the central-difference error is
    // h^2 f'''/6 and halving h cuts it by four
    let f = |x: &ParamVector<f64>| x.0.iter().map(|v| v.exp()).sum::<f64>();
    let x = interior();
    let bounds = ParamBounds::default();
    let coarse = fd_gradient(&x, &f, &config_with_step(1e-2), &bounds);
    let fine = fd_gradient(&x, &f, &config_with_step(5e-3), &bounds);
    for k in 0..12 {
        let exact = x[k].exp();
        let ratio = (coarse.components[k] - exact).abs() / (fine.components[k] - exact).abs();
        assert!((3.8..4.2).contains(&ratio), "k={k}: ratio {ratio}");
    }
}

#[test]
fn probes_at_the_boundary_are_projected() {
    let mut x = interior();
    x[2] = 1.0;
    let g = fd_gradient(&x, &quadratic, &OptimizerConfig::default(), &ParamBounds::default());
    assert!(g.projected);
    // one-sided difference still points back toward the target
    assert!(g.components[2] < 0.0);
}

#[test]
fn jump_reaches_higher_plateau() {
    let x = interior();
    let step = 0.01;
    let threshold = x[4] + 0.5 * step;
    let f = move |p: &ParamVector<f64>| if p[4] > threshold { 2.0 } else { 1.0 };
    let (cand, value) = neighborhood_jump(&x, 1.0, &f, step, &ParamBounds::default(), NeighborhoodSearch::Full)
        .expect("a neighbor sits on the upper plateau");
    assert_eq!(value, 2.0);
    assert!((cand[4] - x[4] - step).abs() < 1e-12);
}

#[test]
fn strict_maximum_has_no_better_neighbor() {
    let x = ParamVector(TARGET);
    let found = neighborhood_jump(&x, quadratic(&x), &quadratic, 0.01, &ParamBounds::default(), NeighborhoodSearch::Full);
    assert!(found.is_none());
}

#[test]
fn no_jump_when_every_neighbor_projects_back() {
    // the feasible set is a single point
    let bounds = ParamBounds {
        mu_min: 0.3,
        mu_cap: 0.3,
        order_margin: 0.0,
        p_min: 0.25,
    };
    let x = ParamVector([0.3, 0.3, 0.3, 0.25, 0.25, 0.25, 0.3, 0.3, 0.3, 0.25, 0.25, 0.25]);
    assert!(bounds.is_feasible(&x));
    let f = |p: &ParamVector<f64>| p.0.iter().sum::<f64>();
    let found = neighborhood_jump(&x, f(&x), &f, 0.01, &bounds, NeighborhoodSearch::Full);
    assert!(found.is_none());
}

#[test]
fn sampled_search_is_subset_of_full() {
    let x = interior();
    let f = |p: &ParamVector<f64>| quadratic(p);
    let bounds = ParamBounds::default();
    let full = neighborhood_jump(&x, f(&x), &f, 0.01, &bounds, NeighborhoodSearch::Full).unwrap();
    let sampled = neighborhood_jump(
        &x,
        f(&x),
        &f,
        0.01,
        &bounds,
        NeighborhoodSearch::Sampled { count: 500, seed: 3 },
    )
    .unwrap();
    assert!(sampled.1 <= full.1);
    assert!(sampled.1 > f(&x));
}

#[test]
fn concave_quadratic_optimum_is_recovered() {
    let cfg = OptimizerConfig::default();
    let bounds = ParamBounds::default();
    let start = ParamVector([0.3, 0.6, 0.2, 0.1, 0.3, 0.2, 0.4, 0.7, 0.2, 0.3, 0.3, 0.1]);
    let res = optimize(&start, quadratic, &cfg, &bounds).unwrap();
    for (k, (&got, &want)) in res.best.0.iter().zip(&TARGET).enumerate() {
        assert!((got - want).abs() < 1e-3, "k={k}: {got} vs {want}");
    }
    assert!(bounds.is_feasible(&res.best));
}

#[test]
fn trace_is_monotone_feasible_and_deterministic() {
    let cfg = OptimizerConfig {
        multistart: 3,
        seed: 11,
        ..OptimizerConfig::default()
    };
    let bounds = ParamBounds::default();
    let run = || optimize(&interior(), quadratic, &cfg, &bounds).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a, b);

    let mut last: Option<(usize, f64)> = None;
    for step in &a.trace.steps {
        assert!(bounds.is_feasible(&step.params));
        if let Some((start, value)) = last {
            if start == step.start {
                assert!(step.value >= value, "value decreased in restart {start}");
            }
        }
        last = Some((step.start, step.value));
    }
    let starts = a.trace.steps.iter().filter(|s| s.kind == MoveKind::Start).count();
    let ends = a.trace.steps.iter().filter(|s| s.kind == MoveKind::Terminate).count();
    assert_eq!((starts, ends), (3, 3));
    assert!(a.trace.evaluations > 0);
    let best = a.trace.steps.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, a.value);
}

#[test]
fn different_seeds_change_restarts_only() {
    let bounds = ParamBounds::default();
    let cfg = |seed| OptimizerConfig {
        multistart: 2,
        seed,
        ..OptimizerConfig::default()
    };
    let a = optimize(&interior(), quadratic, &cfg(1), &bounds).unwrap();
    let b = optimize(&interior(), quadratic, &cfg(2), &bounds).unwrap();
    let first = |r: &mdiqkd::optimizer::OptimizationResult<f64>, idx: usize| {
        r.trace.steps.iter().find(|s| s.start == idx && s.kind == MoveKind::Start).unwrap().params
    };
    assert_eq!(first(&a, 0), first(&b, 0));
    assert_ne!(first(&a, 1), first(&b, 1));
}
