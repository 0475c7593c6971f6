use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmass_core::families::bump;
use vrmass_core::geometry::*;
use vrmass_core::mass::MassPolicy;
use vrmass_core::reduced::ReducedPoint;
use vrmass_core::variation::*;
use vrmass_core::Error;

const RADII: [f64; 6] = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];

fn critical(m: usize) -> ReducedPoint {
    let c = Arc::new(build_chart(&ChartParams::new(m, 12.0, InnerMode::TwoEnded).with_radii(&RADII)).unwrap());
    ReducedPoint::background(c, FiberSpec::hyperbolic(2, 4.0 * PI)).unwrap()
}

fn policy() -> MassPolicy {
    MassPolicy::default()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Random bump combination, not TT.
fn raw_direction(c: &RadialChart, rng: &mut ChaCha8Rng) -> PerturbationPair {
    let mut field = || {
        let (x0, w, amp): (f64, f64, f64) = (rng.gen_range(-4.0..4.0), rng.gen_range(1.0..3.0), rng.gen_range(-1.0..1.0));
        Profile::from_fn(c, |r| bump(r, x0, w).map(|v| amp * v))
    };
    let (a, b, p, q) = (field(), field(), field(), field());
    PerturbationPair { h_rr: a, h_ff: b, r_rr: p.v, r_ff: q.v }
}

fn directions(pt: &ReducedPoint, seed: u64, count: usize) -> Vec<PerturbationPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let raw = raw_direction(&pt.gamma.chart, &mut rng);
            let d = project_tt(&pt.gamma, &raw).unwrap();
            d.scaled(1.0 / d.norm(&pt.gamma))
        })
        .collect()
}

#[test]
fn einstein_operator_of_zero_and_of_the_tt_eigentensor() {
    let pt = critical(400);
    let g = &pt.gamma;
    let z = PerturbationPair::zero(g.chart.len());
    let l = einstein_operator(g, &z.h_rr, &z.h_ff).unwrap();
    assert!(l.rr.iter().chain(&l.ff).all(|&v| v == 0.0));
    assert!(!l.non_einstein);
    // eta = cosh^-3: rough Laplacian 3h, curvature term -2h
    let d = PerturbationPair::tt(g, 1.0, 0.0).unwrap();
    let l = einstein_operator(g, &d.h_rr, &d.h_ff).unwrap();
    for i in 0..g.chart.len() {
        assert!((l.rr[i] - d.h_rr.v[i]).abs() < 1e-12);
        assert!((l.ff[i] - d.h_ff.v[i]).abs() < 1e-12);
    }
    assert!((rayleigh_quotient(g, &d.h_rr, &d.h_ff).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn curvature_term_on_constant_curvature() {
    // For a constant jet h the Laplacian of the components vanishes; what is
    // left is 2 psi^2 couplings and the curvature term, -2h for traceless h.
    let pt = critical(400);
    let g = &pt.gamma;
    let len = g.chart.len();
    let (h, e) = (Profile::constant(len, 2.0), Profile::constant(len, -1.0));
    let l = einstein_operator(g, &h, &e).unwrap();
    for (i, &r) in g.chart.nodes().iter().enumerate() {
        let psi2 = r.tanh().powi(2);
        assert!((l.rr[i] - (2.0 * 2.0 * psi2 * 3.0 - 2.0 * 2.0)).abs() < 1e-12);
        assert!((l.ff[i] - (-2.0 * psi2 * 3.0 + 2.0)).abs() < 1e-12);
    }
}

#[test]
fn einstein_operator_flags_non_einstein_metrics() {
    let pt = critical(400);
    let d = PerturbationPair::tt(&pt.gamma, 1.0, 0.0).unwrap();
    let off = displaced_point(&pt, &d, 0.3).unwrap();
    let l = einstein_operator(&off.gamma, &d.h_rr, &d.h_ff).unwrap();
    assert!(l.non_einstein && l.einstein_residual > 1e-2);
}

#[test]
fn lambda_min_is_self_consistent_and_converges() {
    let est: Vec<LambdaMin> = [400, 800].iter().map(|&m| lambda_min_estimate(&critical(m).gamma).unwrap()).collect();
    for l in &est {
        assert!((l.rayleigh - l.value).abs() < 1e-10 * l.value);
    }
    assert!((est[0].value - est[1].value).abs() < 0.05 * est[1].value);
    // the TT eigentensor has eigenvalue 1 and is the ground state
    assert!((est[1].value - 1.0).abs() < 1e-3);
    // Rayleigh quotient of smooth compact traceless tensors lies above it
    let g = critical(800).gamma;
    for (x0, w) in [(0.0, 2.0), (2.0, 1.5), (-3.0, 3.0)] {
        let mu = Profile::from_fn(&g.chart, |r| bump(r, x0, w));
        let rq = rayleigh_quotient(&g, &mu.scale(2.0), &mu.scale(-1.0)).unwrap();
        assert!(rq >= est[1].value, "{rq}");
    }
}

#[test]
fn projection_gives_admissible_directions() {
    let pt = critical(800);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw = raw_direction(&pt.gamma.chart, &mut rng);
    let before = check_direction(&pt, &raw).unwrap();
    assert!(before.max_relative() > 0.1);
    assert!(matches!(first_variation(&pt, &raw, FIRST_EPS, policy()), Err(Error::Precondition(_))));
    let d = project_tt(&pt.gamma, &raw).unwrap();
    let c = check_direction(&pt, &d).unwrap();
    assert!(c.max_relative() < 2e-3, "{c:?}");
    assert!(c.trace_h < 1e-14 && c.trace_r < 1e-14);
    // projection is idempotent
    let again = project_tt(&pt.gamma, &d).unwrap();
    assert!(sup(&again.r_rr.iter().zip(&d.r_rr).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-12);
}

#[test]
fn criticality_of_the_background() {
    let pt = critical(800);
    assert_eq!(displaced_mass(&pt, &PerturbationPair::zero(801), 0.0, policy()).unwrap(), 0.0);
    for d in directions(&pt, 7, 10) {
        let norm = d.norm(&pt.gamma);
        let e = first_variation_pair(&pt, &d, FIRST_EPS, policy()).unwrap();
        assert!(e.value.abs() <= 1e-5 * norm, "{e:?}");
        assert!(e.value_refined.abs() <= 1e-5 * norm, "{e:?}");
        assert!(e.gap() <= 1e-5 * norm);
    }
    // pure momentum direction
    let r = PerturbationPair::tt(&pt.gamma, 0.0, 1.0).unwrap();
    assert!(first_variation(&pt, &r, FIRST_EPS, policy()).unwrap().abs() < 1e-10);
}

#[test]
fn first_variation_off_the_critical_point_is_stable() {
    let pt = critical(800);
    let d = PerturbationPair::tt(&pt.gamma, 1.0, 0.0).unwrap();
    let off = displaced_point(&pt, &d, 0.2).unwrap();
    let c = check_direction(&off, &d).unwrap();
    assert!(c.dscal > 1e-2 * c.scale, "{c:?}");
    let d = project_tt(&off.gamma, &d).unwrap();
    let e = first_variation_pair(&off, &d, FIRST_EPS, policy()).unwrap();
    assert!(e.value > 1.0, "{e:?}");
    assert!(e.gap() < 1e-5 * e.value.abs(), "{e:?}");
}

#[test]
fn second_variation_formula_matches_finite_differences() {
    let pt = critical(800);
    let g = &pt.gamma;
    let lam = lambda_min_estimate(g).unwrap().value;
    // discretization error of lam from the refinement gap
    let dlam = (lambda_min_estimate(&critical(400).gamma).unwrap().value - lam).abs();
    for d in directions(&pt, 19, 10) {
        let f = second_variation_formula(g, &d).unwrap();
        let e = second_variation_pair(&pt, &d, SECOND_EPS, policy()).unwrap();
        assert!((e.value - f).abs() < 0.02 * f.abs(), "{f} {e:?}");
        // Richardson pair
        assert!(e.gap() < 1e-3 * f.abs());
        let tol = 0.5 * dlam * d.h_norm_sq(g) + 1e-10;
        assert!(f >= 0.5 * lam * d.h_norm_sq(g) + 2.0 * d.r_norm_sq(g) - tol);
    }
}

#[test]
fn momentum_block_is_twice_the_squared_norm() {
    let gaps: Vec<f64> = [400, 800]
        .iter()
        .map(|&m| {
            let pt = critical(m);
            let r = PerturbationPair::tt(&pt.gamma, 0.0, 0.7).unwrap();
            let want = 2.0 * r.r_norm_sq(&pt.gamma);
            assert_eq!(second_variation_formula(&pt.gamma, &r).unwrap(), want);
            let fd = second_variation_fd(&pt, &r, SECOND_EPS, policy()).unwrap();
            (fd - want).abs() / want
        })
        .collect();
    assert!(gaps[1] < 1e-3, "{gaps:?}");
    assert!(gaps[1] < 0.5 * gaps[0]);
}

#[test]
fn finite_difference_hessian_polarizes_to_the_formula() {
    let pt = critical(800);
    let g = &pt.gamma;
    let u = PerturbationPair::tt(g, 1.0, 0.0).unwrap();
    let v = PerturbationPair::tt(g, 0.3, 0.5).unwrap();
    let q = |d: &PerturbationPair| second_variation_fd(&pt, d, SECOND_EPS, policy()).unwrap();
    let b_fd = 0.25 * (q(&u.add(&v)) - q(&u.add(&v.scaled(-1.0))));
    let b_fd_swapped = 0.25 * (q(&v.add(&u)) - q(&v.add(&u.scaled(-1.0))));
    let qf = |d: &PerturbationPair| second_variation_formula(g, d).unwrap();
    let b = 0.25 * (qf(&u.add(&v)) - qf(&u.add(&v.scaled(-1.0))));
    assert!((b_fd - b_fd_swapped).abs() < 1e-3 * b.abs());
    assert!((b_fd - b).abs() < 0.02 * b.abs(), "{b_fd} {b}");
}

#[test]
fn variation_csv_layout() {
    let e = VariationEstimate { eps: 1e-3, value: 2.0, eps_refined: 1e-4, value_refined: 2.5 };
    let mut buf = Vec::new();
    write_variation_csv(&mut buf, &[(0, e), (1, e)]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "direction,eps,value,refinement_gap");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,1.0000000000000000e-3,2.0000000000000000e0,5.0000000000000000e-1"));
}
