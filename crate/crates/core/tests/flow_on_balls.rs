use yamabe_core::diagnostics::{harnack_z, HarnackForm};
use yamabe_core::flow::{run_exhaustion, run_on_domain, DtPolicy, ExhaustionLadder, Flow, RunPlan};
use yamabe_core::geometry::{scalar_curvature, ConformalMetric, Domain, ScalarField};

fn sphere_factor(d: Domain) -> ConformalMetric {
    ConformalMetric::new(ScalarField::from_radial_fn(d, |r| (2.0 / (1.0 + r * r)).sqrt()).unwrap()).unwrap()
}

fn bump(d: Domain) -> ScalarField {
    ScalarField::from_radial_fn(d, |r| 24.0 * (1.0 + r * r).powf(-2.5)).unwrap()
}

fn plan(t_end: f64, dt: f64, checkpoints: &[f64]) -> RunPlan {
    let mut p = RunPlan::new(t_end, DtPolicy::SemiImplicit { dt });
    p.checkpoints = checkpoints.to_vec();
    p
}

#[test]
fn sphere_collapses_then_settles_on_the_flat_state() {
    // With u = 1 held on r = 10, R = 0 forces uU to be constant.
    let d = Domain::radial(3, 10.0, 0.04).unwrap();
    let base = sphere_factor(d);
    let r0 = ScalarField::constant(d, 6.0);
    let flow = Flow::new(&base, &r0, d.node_count() - 1).unwrap();
    let traj = run_on_domain(&flow, &plan(0.5, 1e-3, &[0.1, 0.5])).unwrap();
    let mid = &traj.snapshots[1];
    let end = &traj.snapshots[2];
    // The round sphere shrinks homothetically, u⁴ = 1 - 6t, until the far field notices.
    assert!(
        (mid.u.values()[0] - 0.4f64.powf(0.25)).abs() < 1e-3,
        "{}",
        mid.u.values()[0]
    );
    let steady = |r: f64| ((1.0 + r * r) / 101.0).sqrt();
    let worst = (0..traj.boundary)
        .map(|i| (end.u.values()[i] / steady(d.radius(i)) - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst:e}");
    let r_max = end.r.values()[..traj.boundary - 1]
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    assert!(r_max < 1e-6, "{r_max:e}");
    assert!(traj.steps.len() < 1000, "{}", traj.steps.len());
}

#[test]
fn base_factor_moves_into_the_initial_data() {
    // u on the sphere-factor base and U u on the flat base describe one metric.
    let d = Domain::radial(3, 6.0, 0.02).unwrap();
    let base = sphere_factor(d);
    let r0 = scalar_curvature(&base, &ScalarField::constant(d, 0.0)).unwrap();
    let m = d.node_count() - 1;
    let on_base = run_on_domain(&Flow::new(&base, &r0, m).unwrap(), &plan(0.05, 5e-4, &[0.05])).unwrap();
    let flat = ConformalMetric::flat(d);
    let zero = ScalarField::constant(d, 0.0);
    let on_flat = Flow::with_initial(&flat, &zero, m, base.factor().clone()).unwrap();
    let on_flat = run_on_domain(&on_flat, &plan(0.05, 5e-4, &[0.05])).unwrap();
    let (a, b) = (&on_base.snapshots[1], &on_flat.snapshots[1]);
    let u = base.factor().values();
    let worst = (0..m)
        .map(|i| (a.u.values()[i] * u[i] / b.u.values()[i] - 1.0).abs())
        .fold(0.0, f64::max);
    let worst_r = (0..m - 1)
        .map(|i| (a.r.values()[i] - b.r.values()[i]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-5, "{worst:e}");
    assert!(worst_r < 1e-3, "{worst_r:e}");
}

#[test]
fn harnack_z_without_form_is_the_time_derivative() {
    // Z(X = 0) = (n-1)Δ_g R + R² + R/t, and the flow turns the first two terms into ∂ₜR.
    let d = Domain::radial(3, 10.0, 0.02).unwrap();
    let base = ConformalMetric::flat(d);
    let flow = Flow::new(&base, &bump(d), d.node_count() - 1).unwrap();
    let delta = 1e-4;
    let t = 1.0;
    let traj = run_on_domain(&flow, &plan(t + delta, 1e-4, &[t - delta, t, t + delta])).unwrap();
    let [prev, mid, next] = [t - delta, t, t + delta].map(|s| traj.at(s).unwrap());
    let z = harnack_z(mid, &base, &HarnackForm::Zero, t).unwrap();
    let scale = z.max_abs();
    let worst = (0..traj.boundary - 1)
        .map(|i| {
            let dr = (next.r.values()[i] - prev.r.values()[i]) / (2.0 * delta);
            (z.values()[i] - dr - mid.r.values()[i] / t).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 5e-3 * scale, "{worst:e} against {scale:e}");
}

#[test]
fn larger_balls_give_smaller_solutions() {
    let d = Domain::radial(3, 20.0, 0.04).unwrap();
    let base = ConformalMetric::flat(d);
    let ladder = ExhaustionLadder::new(&d, &[5.0, 10.0, 20.0]).unwrap();
    let ex = run_exhaustion(&ladder, &base, &bump(d), &plan(1.0, 2e-3, &[0.1, 0.5, 1.0]), 5.0, 1).unwrap();
    assert!(ex.differences_decrease());
    for c in &ex.comparisons {
        assert!(
            c.max_increase.iter().all(|&x| x <= 1e-12),
            "t = {}: {:?}",
            c.t,
            c.max_increase
        );
    }
    let last = ex.comparisons.last().unwrap();
    assert!(last.differences[0] > 1e3 * last.differences[1]);
}

#[test]
fn solution_converges_under_grid_refinement() {
    let at = |h: f64| {
        let d = Domain::radial(3, 8.0, h).unwrap();
        let base = ConformalMetric::flat(d);
        let flow = Flow::new(&base, &bump(d), d.node_count() - 1).unwrap();
        let traj = run_on_domain(&flow, &plan(0.5, 1e-3, &[0.5])).unwrap();
        traj.snapshots[1].u.values().to_vec()
    };
    let (c, m, f) = (at(0.08), at(0.04), at(0.02));
    let diff = |a: &[f64], b: &[f64]| (0..a.len()).map(|i| (a[i] - b[2 * i]).abs()).fold(0.0, f64::max);
    let (e1, e2) = (diff(&c, &m), diff(&m, &f));
    assert!(e2 < 2e-4, "{e2:e}");
    assert!((3.5..4.5).contains(&(e1 / e2)), "{}", e1 / e2);
}
