use epsharm::calculus::Operators;
use epsharm::energy::{energy_gradient, inner, residual_interior};
use epsharm::geometry::{tangent_project_in_place, ConformalChart, MapField, PolarGrid};
use epsharm::solver::{continuation_solve, minimize, pinned_mask, Metric, SolveOptions};
use epsharm::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inv_stereo(x: f64, y: f64) -> Vec<f64> {
    let s = x * x + y * y;
    vec![2.0 * x / (1.0 + s), 2.0 * y / (1.0 + s), (s - 1.0) / (1.0 + s)]
}

fn window(radius: f64, n_r: usize) -> (MapField, ConformalChart) {
    let g = PolarGrid::disk(radius * 1e-2, radius, n_r, 16).unwrap();
    let c = ConformalChart::flat(&g);
    (MapField::from_fn(g, 3, inv_stereo).unwrap(), c)
}

fn noisy(seed: u64) -> (MapField, ConformalChart) {
    let g = PolarGrid::disk(1e-2, 1.0, 16, 8).unwrap();
    let ops = Operators::new(&g);
    let pin = pinned_mask(&ops, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..g.n_nodes())
        .flat_map(|n| {
            if pin[n] {
                vec![0.0, 0.0, 1.0]
            } else {
                (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()
            }
        })
        .collect();
    let c = ConformalChart::flat(&g);
    (MapField::new(g, 3, vals).unwrap(), c)
}

#[test]
fn harmonic_window_is_already_critical() {
    let (u, c) = window(0.25, 64);
    let r = minimize(&u, 0.0, &c, &SolveOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.iterations <= 5, "{}", r.iterations);
    assert!(*r.residual_history.last().unwrap() < 1e-7);
    assert_eq!(r.residual_history.len(), r.iterations + 1);
}

#[test]
fn noisy_start_descends_and_keeps_the_constraint() {
    let (u, c) = noisy(3);
    let opts = SolveOptions {
        max_iters: 500,
        ..SolveOptions::default()
    };
    let r = minimize(&u, 0.01, &c, &opts).unwrap();
    assert!(r.converged);
    assert!(r.energy_history.last().unwrap() <= &r.energy_history[0]);
    for w in r.energy_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-14);
    }
    assert!(r.constraint_history.iter().all(|&v| v <= 1e-12));
    for n in pinned_mask(&Operators::new(u.grid()), 2).iter().enumerate().filter(|p| *p.1).map(|p| p.0) {
        assert_eq!(r.field.value(n), u.value(n));
    }
}

#[test]
fn converged_solutions_are_critical() {
    let (u, c) = noisy(5);
    let ops = Operators::new(u.grid());
    let opts = SolveOptions {
        max_iters: 500,
        ..SolveOptions::default()
    };
    let r = minimize(&u, 0.01, &c, &opts).unwrap();
    assert!(r.converged);
    let v = &r.field;
    let pin = pinned_mask(&ops, 2);
    let grad = energy_gradient(&ops, &c, v, 0.01, Some(&pin)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let mut d: Vec<f64> = (0..v.values().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for n in 0..v.n_nodes() {
            let dn = &mut d[n * 3..n * 3 + 3];
            if pin[n] {
                dn.iter_mut().for_each(|x| *x = 0.0);
            } else {
                tangent_project_in_place(v.value(n), dn);
            }
        }
        let norm = inner(&ops, &c, &d, &d, 3).sqrt();
        assert!(inner(&ops, &c, &grad, &d, 3).abs() <= 1e-5 * norm);
    }
    // the residual reported on the interior is bounded by the solver residual
    let res = epsharm::energy::el_residual(&ops, &c, v, 0.01).unwrap();
    assert!(res.norm <= 1.01 * r.residual_history.last().unwrap() + 1e-12);
    assert!(residual_interior(&ops).iter().any(|&b| b));
}

#[test]
fn small_epsilon_stays_close_to_the_harmonic_solve() {
    let (u, c) = window(0.5, 64);
    let r0 = minimize(&u, 0.0, &c, &SolveOptions::default()).unwrap();
    let r1 = minimize(&u, 1e-3, &c, &SolveOptions::default()).unwrap();
    assert!(r0.converged && r1.converged);
    let (a, b) = (r0.report.dirichlet, r1.report.dirichlet);
    assert!((a - b).abs() <= 0.02 * a);
}

#[test]
fn l2_metric_descends() {
    let (u, c) = window(0.5, 16);
    let opts = SolveOptions {
        max_iters: 50,
        metric: Metric::L2,
        ..SolveOptions::default()
    };
    let r = minimize(&u, 0.01, &c, &opts).unwrap();
    for w in r.energy_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-14);
    }
    assert!(r.energy_history.last().unwrap() < &r.energy_history[0]);
}

#[test]
fn continuation_schedule() {
    let (u, c) = window(0.5, 32);
    let opts = SolveOptions::default();
    assert!(continuation_solve(&u, &c, &[], &opts).unwrap().is_empty());
    let rs = continuation_solve(&u, &c, &[0.1, 0.01, 0.001], &opts).unwrap();
    let eb: Vec<f64> = rs.iter().map(|r| r.epsilon * r.report.biharmonic).collect();
    assert!(eb[0] > eb[1] && eb[1] > eb[2], "{eb:?}");

    let one = continuation_solve(&u, &c, &[0.01], &opts).unwrap();
    let direct = minimize(&u, 0.01, &c, &opts).unwrap();
    assert_eq!(one[0].field, direct.field);
    assert_eq!(one[0].energy_history, direct.energy_history);

    assert!(matches!(
        continuation_solve(&u, &c, &[0.01, 0.1], &opts),
        Err(Error::InvalidSchedule(_))
    ));
}

#[test]
fn continuation_reports_the_failing_index() {
    let (u, _) = window(0.5, 16);
    let other = PolarGrid::disk(1e-3, 0.5, 20, 16).unwrap();
    let c = ConformalChart::flat(&other);
    match continuation_solve(&u, &c, &[0.1, 0.01], &SolveOptions::default()) {
        Err(Error::Continuation { index, source }) => {
            assert_eq!(index, 0);
            assert!(matches!(*source, Error::ShapeMismatch(_)));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_options_are_rejected() {
    let (u, c) = window(0.5, 16);
    let bad = SolveOptions {
        residual_tol: 0.0,
        ..SolveOptions::default()
    };
    assert!(matches!(minimize(&u, 0.0, &c, &bad), Err(Error::InvalidOptions(_))));
    assert!(matches!(
        minimize(&u, -1.0, &c, &SolveOptions::default()),
        Err(Error::InvalidOptions(_))
    ));
}
