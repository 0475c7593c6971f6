use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmass_core::constraints::{constraint_map, InitialDataSet, MomentumField, Perturbation};
use vrmass_core::families::bump;
use vrmass_core::geometry::*;
use vrmass_core::mass::{vr_mass, MassPolicy};
use vrmass_core::reduced::*;
use vrmass_core::Error;

const RADII: [f64; 6] = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];

fn chart(m: usize, inner: InnerMode) -> Arc<RadialChart> {
    Arc::new(build_chart(&ChartParams::new(m, 12.0, inner).with_r0(1.0).with_radii(&RADII)).unwrap())
}

fn s2() -> FiberSpec {
    FiberSpec::unit_sphere(2)
}

fn modes() -> [(InnerMode, FiberSpec); 3] {
    [
        (InnerMode::RegularCenter, s2()),
        (InnerMode::Excision, s2()),
        (InnerMode::TwoEnded, FiberSpec::hyperbolic(2, 5.0)),
    ]
}

fn tt_point(m: usize, amp: f64) -> ReducedPoint {
    let c = chart(m, InnerMode::Excision);
    let g = WarpedMetric::reference(c, s2()).unwrap();
    let p = radial_tt_family(&g, amp).unwrap();
    ReducedPoint::new(g, p)
}

fn solve(pt: &ReducedPoint) -> ConformalFactor {
    solve_lichnerowicz(pt, NewtonOptions::default()).unwrap()
}

#[test]
fn tt_check_of_background_and_pure_trace() {
    let pt = ReducedPoint::background(chart(400, InnerMode::Excision), s2()).unwrap();
    let r = tt_check(&pt).unwrap();
    assert_eq!(r.trace, 0.0);
    assert_eq!(r.divergence, 0.0);
    assert!(r.scal < 1e-8);
    let mut pt = pt;
    pt.p = MomentumField::milne(pt.gamma.chart.clone(), s2());
    let r = tt_check(&pt).unwrap();
    assert!((r.trace - 6.0).abs() < 1e-12);
    assert!(!r.passes(1e-6));
}

#[test]
fn radial_tt_family_divergence_is_second_order() {
    let div = |m| tt_check(&tt_point(m, 1.0)).unwrap();
    let r: Vec<TtResiduals> = [200, 400, 800].into_iter().map(div).collect();
    for w in r.windows(2) {
        let order = (w[0].divergence / w[1].divergence).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }
    assert_eq!(r[2].trace, 0.0);
    // lam(r0) = C
    let pt = tt_point(400, 0.7);
    assert!((-pt.p.lam_ff[0] - 0.7).abs() < 1e-15);
}

#[test]
fn radial_tt_family_needs_excision() {
    let g = WarpedMetric::reference(chart(100, InnerMode::RegularCenter), s2()).unwrap();
    assert!(matches!(radial_tt_family(&g, 1.0), Err(Error::Precondition(_))));
    let p = radial_tt_family(&g, 0.0).unwrap();
    assert!(p.lam_rr.iter().chain(&p.lam_ff).all(|&v| v == 0.0));
}

#[test]
fn lichnerowicz_without_momentum_gives_one() {
    for (inner, fiber) in modes() {
        let pt = ReducedPoint::background(chart(400, inner), fiber).unwrap();
        let phi = solve(&pt);
        assert!(phi.phi.values.iter().all(|v| (v - 1.0).abs() < 1e-12), "{inner:?}");
        assert_eq!(phi.iterations, 0);
    }
}

#[test]
fn lichnerowicz_maximum_principle_on_random_amplitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..20 {
        let amp: f64 = rng.gen_range(-3.0..3.0);
        let pt = if k % 5 == 4 {
            let c = chart(400, InnerMode::TwoEnded);
            let g = WarpedMetric::reference(c, FiberSpec::hyperbolic(2, 5.0)).unwrap();
            let p = radial_tt_family(&g, amp).unwrap();
            ReducedPoint::new(g, p)
        } else {
            tt_point(400, amp)
        };
        let phi = solve(&pt);
        assert!(phi.iterations <= 12, "{amp}: {} iterations", phi.iterations);
        assert!(phi.residual < 1e-10);
        let min = phi.excess.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-12, "{amp}: min phi - 1 = {min}");
    }
}

#[test]
fn newton_converges_quadratically() {
    for amp in [0.5, 2.0] {
        let h = solve(&tt_point(400, amp)).history;
        for w in h.windows(2) {
            if w[1] > 1e-12 {
                assert!(w[1] <= 10.0 * w[0] * w[0], "{h:?}");
            }
        }
    }
}

#[test]
fn small_momentum_gives_positive_decaying_excess() {
    let pt = tt_point(400, 0.1);
    let phi = solve(&pt);
    let u = &phi.excess;
    let peak = (0..u.len()).max_by(|&i, &j| u[i].total_cmp(&u[j])).unwrap();
    // |p|^2 peaks at the excision sphere
    assert!(pt.gamma.chart.nodes()[peak] < 2.0);
    assert!(u[..u.len() - 1].iter().all(|&v| v > 0.0));
    assert!(u[peak..].windows(2).all(|w| w[1] <= w[0]));
    let c = &pt.gamma.chart;
    let fit = decay_rate_estimate(c, u, (4.0, 9.0)).unwrap();
    assert!(fit.rate > 1.0, "rate {}", fit.rate);
}

#[test]
fn reconstruction_of_background_is_milne() {
    for (inner, fiber) in modes() {
        let pt = ReducedPoint::background(chart(400, inner), fiber).unwrap();
        let d = reconstruct_data(&pt, &solve(&pt)).unwrap();
        let m = InitialDataSet::milne(pt.gamma.chart.clone(), fiber).unwrap();
        assert_eq!(d.g, m.g);
        assert_eq!(d.mom, m.mom);
        assert!(constraint_map(&d).unwrap().max_abs() < 1e-10);
        assert_eq!(vr_mass(&d, MassPolicy::default()).unwrap().limit, 0.0);
    }
}

#[test]
fn reconstructed_constraints_close_at_second_order() {
    let res: Vec<f64> = [400, 800, 1600]
        .into_iter()
        .map(|m| {
            let pt = tt_point(m, 1.0);
            let d = reconstruct_data(&pt, &solve(&pt)).unwrap();
            constraint_map(&d).unwrap().max_abs_between(1, m - 1)
        })
        .collect();
    let order = (res[1] / res[2]).log2();
    assert!((order - 2.0).abs() < 0.2, "{res:?}");
}

#[test]
fn reconstructed_data_is_cmc_and_invertible() {
    let pt = tt_point(400, 1.5);
    let phi = solve(&pt);
    let d = reconstruct_data(&pt, &phi).unwrap();
    assert!(d.mom.trace().iter().all(|t| (t + 6.0).abs() < 1e-12));
    for i in 0..pt.gamma.chart.len() {
        let f = phi.phi.values[i];
        let a = d.g.a.v[i] / f.powi(2);
        let b = d.g.b.v[i] / f.powi(2);
        assert!((a - pt.gamma.a.v[i]).abs() < 1e-13 * pt.gamma.a.v[i]);
        assert!((b - pt.gamma.b.v[i]).abs() < 1e-13 * pt.gamma.b.v[i]);
        let back = (d.mom.lam_rr[i] + 2.0) * f.powi(6);
        assert!((back - pt.p.lam_rr[i]).abs() < 1e-12 * (1.0 + pt.p.lam_rr[i].abs()));
    }
}

#[test]
fn lapse_of_milne_is_one() {
    for (inner, fiber) in modes() {
        let d = InitialDataSet::milne(chart(400, inner), fiber).unwrap();
        for t in [1.0, 3.7] {
            let n = solve_lapse(&d, t).unwrap();
            assert!(n.values.iter().all(|v| (v - 1.0).abs() < 1e-12), "{inner:?}");
        }
    }
}

#[test]
fn lapse_stays_below_one() {
    // traceless localized K0 on the Milne slice, and the TT reconstruction
    let c = chart(400, InnerMode::RegularCenter);
    let bg = InitialDataSet::milne(c.clone(), s2()).unwrap();
    let q: Vec<f64> = c.nodes().iter().map(|&r| bump(r, 4.0, 2.0)[0]).collect();
    let pert = Perturbation {
        h_rr: Profile::constant(c.len(), 0.0),
        h_ff: Profile::constant(c.len(), 0.0),
        q_rr: q.iter().map(|v| 0.8 * v).collect(),
        q_ff: q.iter().map(|v| -0.4 * v).collect(),
    };
    let d = pert.apply(&bg.background_g, &bg.background_mom).unwrap();
    let n = solve_lapse(&d, 1.0).unwrap();
    assert!(n.values.iter().all(|&v| v <= 1.0 + 1e-10));
    for (i, &r) in c.nodes().iter().enumerate() {
        if (r - 4.0).abs() < 2.0 {
            assert!(n.values[i] < 1.0);
        }
    }
    let pt = tt_point(400, 1.0);
    let d = reconstruct_data(&pt, &solve(&pt)).unwrap();
    let n = solve_lapse(&d, 2.0).unwrap();
    assert!(n.values.iter().all(|&v| v <= 1.0 + 1e-10));
    assert!(n.values[0] < 1.0);
    assert!(matches!(solve_lapse(&d, 0.0), Err(Error::Precondition(_))));
}

#[test]
fn quasilocal_reduced_hamiltonian_scaling_and_limit() {
    let bg = ReducedPoint::background(chart(400, InnerMode::Excision), s2()).unwrap();
    assert_eq!(quasilocal_reduced_hamiltonian(&bg, 1.7, 10.0).unwrap(), 0.0);
    let pt = tt_point(400, 0.5);
    let h1 = quasilocal_reduced_hamiltonian(&pt, 1.0, 10.0).unwrap();
    let h2 = quasilocal_reduced_hamiltonian(&pt, 2.0, 10.0).unwrap();
    assert!((h2 - 2.0 * h1).abs() < 1e-12 * h1.abs());
    let d = reconstruct_data(&pt, &solve(&pt)).unwrap();
    let m = vr_mass(&d, MassPolicy::default()).unwrap().limit;
    let near = quasilocal_reduced_hamiltonian(&pt, 1.0, 11.9).unwrap();
    assert!((near - m).abs() < 1e-3 * m.abs(), "{near} {m}");
}
