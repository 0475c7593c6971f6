use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmass_core::constraints::*;
use vrmass_core::families::{bump, compact_data, compact_perturbation};
use vrmass_core::geometry::*;

fn chart(m: usize, r_max: f64, inner: InnerMode) -> Arc<RadialChart> {
    Arc::new(build_chart(&ChartParams::new(m, r_max, inner).with_r0(1.0)).unwrap())
}

fn s2() -> FiberSpec {
    FiberSpec::unit_sphere(2)
}

#[test]
fn milne_data_satisfies_constraints() {
    for (inner, fiber) in [
        (InnerMode::RegularCenter, s2()),
        (InnerMode::Excision, FiberSpec::unit_sphere(3)),
        (InnerMode::TwoEnded, FiberSpec::hyperbolic(2, 10.0)),
    ] {
        let d = InitialDataSet::milne(chart(400, 12.0, inner), fiber).unwrap();
        let phi = constraint_map(&d).unwrap();
        assert!(phi.max_abs() < 1e-10, "{inner:?} {}", phi.max_abs());
    }
}

#[test]
fn time_symmetric_data_gives_scalar_curvature() {
    let c = chart(200, 8.0, InnerMode::Excision);
    let g = WarpedMetric::reference(c.clone(), s2()).unwrap();
    let d = InitialDataSet::with_milne_background(g, MomentumField::zero(c, s2())).unwrap();
    let phi = constraint_map(&d).unwrap();
    for v in &phi.phi0.values {
        assert!((v + 6.0).abs() < 1e-9);
    }
    assert!(compatibility_identity(&d).unwrap().iter().all(|r| r.abs() < 1e-10));
}

#[test]
fn compatibility_identity_on_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let n = 3 + trial % 3;
        let inner = if trial % 2 == 0 { InnerMode::RegularCenter } else { InnerMode::Excision };
        let c = chart(120, 6.0, inner);
        let (c1, c2, k1, k2): (f64, f64, f64, f64) = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let fiber = FiberSpec::unit_sphere(n - 1);
        let g0 = WarpedMetric::reference(c.clone(), fiber).unwrap();
        let w = Profile::from_fn(&c, |r| {
            let e = c1 * (-k1 * r * r).exp();
            [1.0 + e, -2.0 * k1 * r * e, (4.0 * k1 * k1 * r * r - 2.0 * k1) * e]
        });
        let g = WarpedMetric::relative_to(&g0, &w, &w).unwrap();
        let lr: Vec<f64> = c.nodes().iter().map(|r| -(n as f64 - 1.0) + c2 * (k2 * r).sin()).collect();
        let lf: Vec<f64> = c.nodes().iter().map(|r| rng.gen_range(-3.0..3.0) + c2 * (k2 * r).cos()).collect();
        let d = InitialDataSet::with_milne_background(g, MomentumField::new(c, fiber, lr, lf).unwrap()).unwrap();
        let res = compatibility_identity(&d).unwrap();
        let worst = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-10, "trial {trial}: {worst}");
    }
}

fn analytic_pert(c: &RadialChart) -> Perturbation {
    compact_perturbation(c, [0.3, -0.2, 0.15, 0.1], 4.0, 2.0, false)
}

#[test]
fn linearization_vanishes_on_zero_and_remainder_is_quadratic() {
    let d = InitialDataSet::milne(chart(200, 8.0, InnerMode::Excision), s2()).unwrap();
    let zero = Perturbation::zero(d.chart().len());
    assert_eq!(linearized_constraints(&d, &zero).unwrap().max_abs(), 0.0);
    let p = analytic_pert(d.chart());
    let q1 = quadratic_remainder(&d, &p, 1e-2).unwrap();
    let q2 = quadratic_remainder(&d, &p, 5e-3).unwrap();
    let ratio = q1 / q2;
    assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
}

#[test]
fn linearization_matches_hand_formula() {
    // D Phi_0 = div div h - Lap tr h - (n-1)(n-3) tr h - 2 tr q at Milne data
    for n in [3usize, 4] {
        let c = chart(400, 8.0, InnerMode::Excision);
        let d = InitialDataSet::milne(c.clone(), FiberSpec::unit_sphere(n - 1)).unwrap();
        let p = analytic_pert(&c);
        let lin = linearized_constraints(&d, &p).unwrap();
        let k = n as f64 - 1.0;
        for r in [2.5, 4.0, 5.6] {
            let i = c.index_of(r).unwrap();
            let r = c.nodes()[i];
            let (psi, dpsi) = (1.0 / r.tanh(), -1.0 / r.sinh().powi(2));
            let [hr, hr1, hr2] = p.h_rr.at(i);
            let [hf, hf1, hf2] = p.h_ff.at(i);
            let v = hr1 + k * psi * (hr - hf);
            let dv = hr2 + k * (dpsi * (hr - hf) + psi * (hr1 - hf1));
            let divdiv = dv + k * psi * v;
            let (t, t1, t2) = (hr + k * hf, hr1 + k * hf1, hr2 + k * hf2);
            let lap = t2 + k * psi * t1;
            let trq = p.q_rr[i] + k * p.q_ff[i];
            let want = divdiv - lap - k * (n as f64 - 3.0) * t - 2.0 * trq;
            let got = lin.phi0.values[i];
            assert!((got - want).abs() < 1e-6, "n={n} r={r}: {got} vs {want}");
        }
    }
}

#[test]
fn adjoint_special_cases() {
    let c = chart(200, 8.0, InnerMode::Excision);
    let g0 = WarpedMetric::reference(c.clone(), s2()).unwrap();
    let zero = Perturbation::zero(c.len());
    let v = LapseShift::unit(c.len());
    assert!(adjoint_linearized(&g0, &v, &zero).unwrap().iter().all(|x| *x == 0.0));
    let p = analytic_pert(&c);
    let adj = adjoint_linearized(&g0, &v, &p).unwrap();
    for i in 0..c.len() {
        let want = -2.0 * (p.q_rr[i] + 2.0 * p.q_ff[i]);
        assert!((adj[i] - want).abs() < 1e-14);
    }
    let u = boundary_potential(&g0, &v, &zero).unwrap();
    assert!(u.u_r.iter().all(|x| *x == 0.0));
}

#[test]
fn pure_trace_boundary_potential() {
    // h = f g0, N = 1: U = div h - d tr h = -(n-1) f'
    let c = chart(200, 8.0, InnerMode::Excision);
    let g0 = WarpedMetric::reference(c.clone(), s2()).unwrap();
    let f = Profile::from_fn(&c, |r| bump(r, 4.0, 1.5));
    let p = Perturbation { h_rr: f.clone(), h_ff: f.clone(), q_rr: vec![0.0; c.len()], q_ff: vec![0.0; c.len()] };
    let u = boundary_potential(&g0, &LapseShift::unit(c.len()), &p).unwrap();
    for i in 0..c.len() {
        assert!((u.u_r[i] + 2.0 * f.d1[i]).abs() < 1e-13);
    }
}

fn gaussian(c: &RadialChart, amp: f64, k: f64) -> Profile {
    // amp e^{-r^2} (1 - k r^2), even at the center
    Profile::from_fn(c, move |r| {
        let e = amp * (-r * r).exp();
        let p = 1.0 - k * r * r;
        [e * p, e * (-2.0 * r * p - 2.0 * k * r), e * ((4.0 * r * r - 2.0) * p + 8.0 * k * r * r - 2.0 * k)]
    })
}

fn smooth_lapse(c: &RadialChart) -> LapseShift {
    LapseShift::new(Profile::from_fn(c, |r| {
        let e = 0.5 * (-r * r / 4.0).exp();
        [1.0 + e, -0.5 * r * e, (0.25 * r * r - 0.5) * e]
    }))
    .unwrap()
}

#[test]
fn adjoint_duality_gap() {
    let c = chart(400, 10.0, InnerMode::RegularCenter);
    let d0 = InitialDataSet::milne(c.clone(), s2()).unwrap();
    let p = Perturbation {
        h_rr: gaussian(&c, 0.3, 0.0),
        h_ff: gaussian(&c, 0.3, 0.5),
        q_rr: gaussian(&c, 0.15, 0.0).v,
        q_ff: gaussian(&c, 0.1, 0.3).v,
    };
    let lapse = smooth_lapse(&c);
    let lin = linearized_constraints(&d0, &p).unwrap();
    let pairing: Vec<f64> = lin.phi0.values.iter().zip(&lapse.lapse.v).map(|(a, b)| a * b).collect();
    let adj = adjoint_linearized(&d0.background_g, &lapse, &p).unwrap();
    let last = c.len() - 1;
    let g0 = &d0.background_g;
    let gap = (g0.integrate_ball_index(&pairing, last) - g0.integrate_ball_index(&adj, last)).abs();
    assert!(gap < 1e-6, "{gap}");
}

fn michel_at(m: usize, sampled: bool) -> f64 {
    let c = chart(m, 8.0, InnerMode::RegularCenter);
    let d = compact_data(c.clone(), s2(), [0.3, -0.2, 0.15, 0.1], 2.5, 2.5, sampled).unwrap();
    michel_residual(&d, &smooth_lapse(&c), 6.0).unwrap()
}

#[test]
fn michel_residual_converges_at_second_order() {
    let e: Vec<f64> = [400, 800, 1600].iter().map(|&m| michel_at(m, true)).collect();
    let p1 = (e[0] / e[1]).log2();
    let p2 = (e[1] / e[2]).log2();
    assert!((p1 - 2.0).abs() < 0.2 && (p2 - 2.0).abs() < 0.2, "{e:?} {p1} {p2}");
    // exact jets leave only quadrature error
    assert!(michel_at(1600, false) < 1e-6);
}

#[test]
fn michel_residual_for_decaying_data() {
    let c = chart(1200, 12.0, InnerMode::Excision);
    let g0 = WarpedMetric::reference(c.clone(), s2()).unwrap();
    let dec = Profile::from_fn(&c, |r| {
        let e = 0.1 * (-2.0 * r).exp();
        [e, -2.0 * e, 4.0 * e]
    });
    let q: Vec<f64> = dec.v.iter().map(|v| 0.5 * v).collect();
    let p = Perturbation { h_rr: dec.clone(), h_ff: dec.scale(-0.5), q_rr: q.clone(), q_ff: q };
    let d = p.apply(&g0, &MomentumField::milne(c.clone(), s2())).unwrap();
    let v = LapseShift::unit(c.len());
    let res: Vec<f64> = [8.0, 10.0, 12.0].iter().map(|&r| michel_residual(&d, &v, r).unwrap()).collect();
    assert!(res[0] > res[1] && res[1] > res[2], "{res:?}");
    assert!(res[0] < 1e-8);
}

#[test]
fn michel_identity_with_boundary_inside_support() {
    // the flux of U carries all of the lapse-gradient terms here
    let c = chart(1600, 8.0, InnerMode::RegularCenter);
    let d = compact_data(c.clone(), s2(), [0.3, -0.2, 0.15, 0.1], 2.5, 2.5, false).unwrap();
    let lapse = LapseShift::new(Profile::from_fn(&c, |r| {
        let e = (-r).exp();
        [1.0 + r * e, (1.0 - r) * e, (r - 2.0) * e]
    }))
    .unwrap();
    for r in [4.1, 4.3] {
        let res = michel_residual(&d, &lapse, r).unwrap();
        assert!(res < 1e-4, "R={r}: {res}");
    }
}
