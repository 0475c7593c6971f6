use std::f64::consts::PI;
use std::sync::Arc;

use vrmass_core::evolution::*;
use vrmass_core::geometry::*;
use vrmass_core::mass::{vr_mass, MassPolicy};
use vrmass_core::reduced::*;
use vrmass_core::Error;

const RADII: [f64; 6] = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];

fn chart(m: usize, inner: InnerMode) -> Arc<RadialChart> {
    Arc::new(build_chart(&ChartParams::new(m, 12.0, inner).with_r0(1.0).with_radii(&RADII)).unwrap())
}

fn h2() -> FiberSpec {
    FiberSpec::hyperbolic(2, 4.0 * PI)
}

fn two_ended(m: usize, amp: f64) -> EvolutionState {
    let g = WarpedMetric::reference(chart(m, InnerMode::TwoEnded), h2()).unwrap();
    let pt = ReducedPoint::new(g.clone(), radial_tt_family(&g, amp).unwrap());
    init_perturbed(&pt, 1.0).unwrap()
}

fn policy() -> EvolvePolicy {
    EvolvePolicy { dt: 1e-3, record_every: 10, mass: MassPolicy::default() }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[test]
fn milne_initial_state() {
    let s = init_milne(chart(200, InnerMode::Excision), FiberSpec::unit_sphere(2), 2.0).unwrap();
    assert_eq!(s.tau(), -1.5);
    let (kr, kf) = s.second_fundamental_form();
    assert!(kr.iter().chain(&kf).all(|&k| k == -0.5));
    assert_eq!(kr[3] + 2.0 * kf[3], s.tau());
    assert_eq!(vr_mass(&s.data().unwrap(), MassPolicy::default()).unwrap().limit, 0.0);
    assert!(matches!(
        init_milne(chart(200, InnerMode::RegularCenter), FiberSpec::unit_sphere(2), 1.0),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn unperturbed_reduced_point_starts_at_milne() {
    let c = chart(200, InnerMode::Excision);
    let pt = ReducedPoint::background(c.clone(), FiberSpec::unit_sphere(2)).unwrap();
    let s = init_perturbed(&pt, 1.0).unwrap();
    let m = init_milne(c, FiberSpec::unit_sphere(2), 1.0).unwrap();
    assert_eq!(s.alpha, m.alpha);
    assert_eq!(s.k0_ff, m.k0_ff);
    assert_eq!(s.lapse_excess, m.lapse_excess);
}

#[test]
fn milne_is_a_fixed_point() {
    for (inner, fiber) in [(InnerMode::Excision, FiberSpec::unit_sphere(2)), (InnerMode::TwoEnded, h2())] {
        let s = init_milne(chart(400, inner), fiber, 1.0).unwrap();
        let tr = evolve(&s, 2.0, EvolvePolicy { record_every: 100, ..policy() }).unwrap();
        assert!(tr.error.is_none());
        assert!((tr.final_state.t - 2.0).abs() < 1e-12);
        for r in &tr.records {
            assert!(r.metric_deviation < 1e-8);
            assert!(r.mass.abs() < 1e-8);
            assert!((r.min_n - 1.0).abs() < 1e-10 && (r.max_n - 1.0).abs() < 1e-10);
        }
        let rep = monotonicity_report(&tr, None, 1e-8).unwrap();
        assert!(rep.milne_like);
    }
}

#[test]
fn rk4_local_error_is_fifth_order() {
    let s = two_ended(200, 0.5);
    let err = |dt: f64| {
        let one = step(&s, dt).unwrap();
        let two = step(&step(&s, dt / 2.0).unwrap(), dt / 2.0).unwrap();
        sup(&one.k0_ff.iter().zip(&two.k0_ff).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    let order = (err(4e-3) / err(2e-3)).log2();
    assert!((order - 5.0).abs() < 0.5, "order {order}");
}

#[test]
fn step_rejects_cfl_violation() {
    let s = two_ended(400, 0.5);
    assert!(matches!(step(&s, 0.5), Err(Error::Precondition(_))));
    assert!(cfl_limit(&s).unwrap() > 1e-3);
}

#[test]
fn mass_rate_is_quadratic_in_k0() {
    let s = init_milne(chart(200, InnerMode::TwoEnded), h2(), 1.0).unwrap();
    assert_eq!(mass_rate(&s).unwrap(), 0.0);
    let s = two_ended(200, 0.5);
    let mut d = s.clone();
    d.k0_rr.iter_mut().for_each(|x| *x *= 2.0);
    d.k0_ff.iter_mut().for_each(|x| *x *= 2.0);
    let (r1, r2) = (mass_rate(&s).unwrap(), mass_rate(&d).unwrap());
    assert!(r1 < 0.0);
    assert!((r2 - 4.0 * r1).abs() < 1e-12 * r1.abs());
}

#[test]
fn cmc_gauge_drift_is_second_order_in_space() {
    let drift = |m| {
        let tr = evolve(&two_ended(m, 0.5), 1.1, policy()).unwrap();
        tr.records.last().unwrap().cmc_drift
    };
    let (a, b) = (drift(400), drift(800));
    let order = (a / b).log2();
    assert!((order - 2.0).abs() < 0.3, "{a} {b}");
}

#[test]
fn masses_decrease_at_the_predicted_rate() {
    let runs = |m| -> Vec<Trajectory> {
        [0.2, 0.5, 1.0]
            .into_iter()
            .map(|amp| {
                let tr = evolve(&two_ended(m, amp), 1.3, policy()).unwrap();
                assert!(tr.error.is_none());
                tr
            })
            .collect()
    };
    let (coarse, mid, fine) = (runs(400), runs(800), runs(1600));
    for k in 0..3 {
        let r400 = monotonicity_report(&coarse[k], Some(&mid[k]), 1e-8).unwrap();
        let r800 = monotonicity_report(&mid[k], Some(&fine[k]), 1e-8).unwrap();
        assert!(r400.monotone && r800.monotone);
        assert!(!r400.milne_like);
        let order = (r400.epsilon_mono / r800.epsilon_mono).log2();
        assert!((order - 2.0).abs() < 0.3, "band order {order}");
        assert!(r400.median_rate_gap < 0.05, "{}", r400.median_rate_gap);
        assert!(r800.median_rate_gap < r400.median_rate_gap);
        for r in &coarse[k].records {
            assert!(r.max_n <= 1.0 + 1e-10);
        }
    }
}

#[test]
fn trajectory_and_snapshot_layout() {
    let tr = evolve(&two_ended(100, 0.3), 1.01, policy()).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,mass,rate,fd_rate,constraint_drift,max_K0,min_N");
    assert_eq!(text.lines().count(), 1 + tr.records.len());
    let mut buf = Vec::new();
    write_snapshot(&tr.final_state, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# t = "));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 101);
}
