//! Identity suite run by `verify`. Each probe returns the raw measurement;
//! `suite` turns them into pass/fail rows.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmass_core::constraints::*;
use vrmass_core::families::*;
use vrmass_core::geometry::oracle::scalar_curvature_oracle;
use vrmass_core::geometry::*;
use vrmass_core::mass::*;
use vrmass_core::reduced::*;
use vrmass_core::{Error, Result};

pub const RADII: [f64; 6] = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];

fn chart(m: usize, r_max: f64, inner: InnerMode) -> Result<Arc<RadialChart>> {
    let mut p = ChartParams::new(m, r_max, inner).with_r0(1.0);
    if r_max == 12.0 {
        p = p.with_radii(&RADII);
    }
    Ok(Arc::new(build_chart(&p)?))
}

fn s2() -> FiberSpec {
    FiberSpec::unit_sphere(2)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn orders(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Largest |column| of the background mass report, including the limit.
pub fn background_mass_max() -> Result<f64> {
    let d = InitialDataSet::milne(chart(400, 12.0, InnerMode::Excision)?, s2())?;
    let r = vr_mass(&d, MassPolicy::default())?;
    Ok([sup(&r.adm_terms), sup(&r.rv_terms), sup(&r.trace_terms), sup(&r.partial_sums), r.limit.abs()]
        .into_iter()
        .fold(0.0, f64::max))
}

/// sup |scal + 6| at interior nodes of hyperbolic 3-space.
pub fn hyperbolic_scal_error() -> Result<f64> {
    let g = WarpedMetric::reference(chart(400, 12.0, InnerMode::RegularCenter)?, s2())?;
    let s = g.scalar_curvature()?;
    Ok(sup(&s.values[1..400].iter().map(|v| v + 6.0).collect::<Vec<_>>()))
}

fn random_metric(c: Arc<RadialChart>, n: usize) -> Result<WarpedMetric> {
    let a = Profile::from_fn(&c, |r| {
        let (e, s, co) = ((-0.5 * r).exp(), (1.3 * r).sin(), (1.3 * r).cos());
        [1.0 + 0.2 * e * s, 0.2 * e * (-0.5 * s + 1.3 * co), 0.2 * e * (0.25 * s - 1.3 * co - 1.69 * s)]
    });
    let w = Profile::from_fn(&c, |r| {
        let (e, co, s) = ((-r).exp(), (0.8 * r).cos(), (0.8 * r).sin());
        [1.0 + 0.3 * e * co, 0.3 * e * (-co - 0.8 * s), 0.3 * e * (1.6 * s + 0.36 * co)]
    });
    let sinh = Profile::from_fn(&c, |r| [r.sinh(), r.cosh(), r.sinh()]);
    WarpedMetric::new(c, FiberSpec::unit_sphere(n - 1), a, sinh.mul(&w))
}

/// Max gap between the warped scalar curvature and the generic-tensor oracle
/// at fixed radii, for M = 200, 400, 800.
pub fn oracle_gaps(n: usize) -> Result<Vec<f64>> {
    let probe = [1.7, 2.4, 3.1, 4.5, 5.9];
    [200, 400, 800]
        .iter()
        .map(|&m| {
            let c = Arc::new(build_chart(&ChartParams::new(m, 8.0, InnerMode::Excision).with_r0(1.0))?);
            let idx = probe.iter().map(|&r| c.index_of(r)).collect::<Result<Vec<_>>>()?;
            let g = random_metric(c, n)?;
            let fast = g.scalar_curvature()?;
            let slow = scalar_curvature_oracle(&g, &idx)?;
            Ok(idx.iter().zip(&slow).map(|(&i, s)| (fast.values[i] - s).abs()).fold(0.0, f64::max))
        })
        .collect()
}

/// Worst compatibility-identity residual over 20 randomized data sets.
pub fn compatibility_worst(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = 3 + trial % 3;
        let inner = if trial % 2 == 0 { InnerMode::RegularCenter } else { InnerMode::Excision };
        let c = Arc::new(build_chart(&ChartParams::new(120, 6.0, inner).with_r0(1.0))?);
        let (c1, c2, k1, k2): (f64, f64, f64, f64) =
            (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let fiber = FiberSpec::unit_sphere(n - 1);
        let g0 = WarpedMetric::reference(c.clone(), fiber)?;
        let w = Profile::from_fn(&c, |r| {
            let e = c1 * (-k1 * r * r).exp();
            [1.0 + e, -2.0 * k1 * r * e, (4.0 * k1 * k1 * r * r - 2.0 * k1) * e]
        });
        let g = WarpedMetric::relative_to(&g0, &w, &w)?;
        let lr: Vec<f64> = c.nodes().iter().map(|r| -(n as f64 - 1.0) + c2 * (k2 * r).sin()).collect();
        let lf: Vec<f64> = c.nodes().iter().map(|r| rng.gen_range(-3.0..3.0) + c2 * (k2 * r).cos()).collect();
        let d = InitialDataSet::with_milne_background(g, MomentumField::new(c, fiber, lr, lf)?)?;
        worst = worst.max(sup(&compatibility_identity(&d)?));
    }
    Ok(worst)
}

/// sup |Phi(Milne)| over the three inner modes.
pub fn milne_constraint_worst() -> Result<f64> {
    let mut worst = 0.0f64;
    for (inner, fiber) in [
        (InnerMode::RegularCenter, s2()),
        (InnerMode::Excision, s2()),
        (InnerMode::TwoEnded, FiberSpec::hyperbolic(2, 4.0 * std::f64::consts::PI)),
    ] {
        let d = InitialDataSet::milne(chart(400, 12.0, inner)?, fiber)?;
        worst = worst.max(constraint_map(&d)?.max_abs());
    }
    Ok(worst)
}

fn smooth_lapse(c: &RadialChart) -> Result<LapseShift> {
    LapseShift::new(Profile::from_fn(c, |r| {
        let e = 0.5 * (-r * r / 4.0).exp();
        [1.0 + e, -0.5 * r * e, (0.25 * r * r - 0.5) * e]
    }))
}

/// Michel residual of sampled compact data at M = 400, 800, 1600.
pub fn michel_residuals() -> Result<Vec<f64>> {
    [400, 800, 1600]
        .iter()
        .map(|&m| {
            let c = chart(m, 8.0, InnerMode::RegularCenter)?;
            let d = compact_data(c.clone(), s2(), [0.3, -0.2, 0.15, 0.1], 2.5, 2.5, true)?;
            michel_residual(&d, &smooth_lapse(&c)?, 6.0)
        })
        .collect()
}

/// |int N DPhi_0(h, q) - int DPhi*(N)(h, q)| at M = 400.
pub fn adjoint_gap() -> Result<f64> {
    let c = chart(400, 10.0, InnerMode::RegularCenter)?;
    // amp e^{-r^2} (1 - k r^2), even at the center
    let gauss = |amp: f64, k: f64| {
        Profile::from_fn(&c, |r| {
            let e = amp * (-r * r).exp();
            let p = 1.0 - k * r * r;
            [e * p, e * (-2.0 * r * p - 2.0 * k * r), e * ((4.0 * r * r - 2.0) * p + 8.0 * k * r * r - 2.0 * k)]
        })
    };
    let d0 = InitialDataSet::milne(c.clone(), s2())?;
    let p = Perturbation { h_rr: gauss(0.3, 0.0), h_ff: gauss(0.3, 0.5), q_rr: gauss(0.15, 0.0).v, q_ff: gauss(0.1, 0.3).v };
    let lapse = smooth_lapse(&c)?;
    let lin = linearized_constraints(&d0, &p)?;
    let pairing: Vec<f64> = lin.phi0.values.iter().zip(&lapse.lapse.v).map(|(a, b)| a * b).collect();
    let adj = adjoint_linearized(&d0.background_g, &lapse, &p)?;
    let last = c.len() - 1;
    let g0 = &d0.background_g;
    Ok((g0.integrate_ball_index(&pairing, last) - g0.integrate_ball_index(&adj, last)).abs())
}

/// Mass report of the Kottler-type family with warping exponent delta.
pub fn kottler_report(delta: f64, policy: MassPolicy) -> Result<MassReport> {
    let d = kottler_data(chart(400, 12.0, InnerMode::Excision)?, s2(), 0.1, delta, 0.0)?;
    vr_mass(&d, policy)
}

/// Relative gap between vr_mass of phi = 1 + eps e^{-2r} data and conformal_mass.
pub fn conformal_gap(eps: f64) -> Result<f64> {
    let c = chart(400, 12.0, InnerMode::RegularCenter)?;
    let g0 = WarpedMetric::reference(c.clone(), s2())?;
    let ex = conformal_excess(&c, eps, 2.0);
    let d = conformal_data(c.clone(), s2(), &ex)?;
    let r = vr_mass(&d, MassPolicy::last_value().ungated())?;
    let cm = conformal_mass(&g0, &ex, 12.0)?;
    Ok((r.limit - cm.value).abs() / cm.value.abs())
}

/// Lemma gaps on the matched-boundary family at M = 200, 400, 800.
pub fn lemma_gaps() -> Result<Vec<f64>> {
    [200, 400, 800]
        .iter()
        .map(|&m| {
            let c = chart(m, 12.0, InnerMode::RegularCenter)?;
            let big_r = c.nodes()[c.index_of(9.0)?];
            let (alpha, beta) = (0.05, 0.1);
            let f = move |r: f64, s: f64| {
                let x = r - big_r;
                let e = (-x * x).exp();
                [s * x * e, s * (1.0 - 2.0 * x * x) * e, s * (4.0 * x * x * x - 6.0 * x) * e]
            };
            let g0 = WarpedMetric::reference(c.clone(), s2())?;
            let fa = Profile::from_fn(&c, |r| f(r, alpha)).add_const(1.0);
            let fb = Profile::from_fn(&c, |r| f(r, beta)).add_const(1.0);
            let g = WarpedMetric::relative_to(&g0, &fa, &fb)?;
            Ok(mean_curvature_mass_equivalence(&g, &g0, big_r)?.gap)
        })
        .collect()
}

/// sup |phi - 1| for p = 0.
pub fn lichnerowicz_trivial() -> Result<f64> {
    let pt = ReducedPoint::background(chart(400, 12.0, InnerMode::Excision)?, s2())?;
    let phi = solve_lichnerowicz(&pt, NewtonOptions::default())?;
    Ok(sup(&phi.excess))
}

/// sup |N - 1| for Milne data.
pub fn lapse_trivial() -> Result<f64> {
    let d = InitialDataSet::milne(chart(400, 12.0, InnerMode::Excision)?, s2())?;
    Ok(sup(&solve_lapse(&d, 1.0)?.values.iter().map(|v| v - 1.0).collect::<Vec<_>>()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tol: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        (self.value - self.target).abs() <= self.tol
    }
}

fn check(name: &str, value: f64, target: f64, tol: f64) -> Check {
    Check { name: name.into(), value, target, tol }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// The full suite, in a fixed order.
pub fn suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = vec![
        check("background_mass", background_mass_max()?, 0.0, 0.0),
        check("hyperbolic_scal", hyperbolic_scal_error()?, 0.0, 1e-8),
    ];
    for n in [3, 4] {
        for (k, p) in orders(&oracle_gaps(n)?).into_iter().enumerate() {
            out.push(check(&format!("oracle_order_n{n}_{k}"), p, 2.0, 0.2));
        }
    }
    out.push(check("compatibility_random", compatibility_worst(seed)?, 0.0, 1e-10));
    out.push(check("milne_constraints", milne_constraint_worst()?, 0.0, 1e-10));
    for (k, p) in orders(&michel_residuals()?).into_iter().enumerate() {
        out.push(check(&format!("michel_order_{k}"), p, 2.0, 0.2));
    }
    out.push(check("adjoint_duality_gap", adjoint_gap()?, 0.0, 1e-6));
    let acc = kottler_report(1.1, MassPolicy::default())?;
    let diffs: Vec<f64> = acc.partial_sums.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    out.push(check("gate_accepts_tail_shrinks", flag(diffs.windows(2).all(|w| w[1] < w[0])), 1.0, 0.0));
    let refused = matches!(kottler_report(0.9, MassPolicy::default()), Err(Error::Gate(_)));
    out.push(check("gate_refuses_slow_decay", flag(refused), 1.0, 0.0));
    for eps in [0.01, 0.05] {
        out.push(check(&format!("conformal_cross_check_{eps}"), conformal_gap(eps)?, 0.0, 1e-4));
    }
    for (k, p) in orders(&lemma_gaps()?).into_iter().enumerate() {
        out.push(check(&format!("lemma_order_{k}"), p, 2.0, 0.2));
    }
    out.push(check("lichnerowicz_trivial", lichnerowicz_trivial()?, 0.0, 1e-12));
    out.push(check("lapse_trivial", lapse_trivial()?, 0.0, 1e-12));
    Ok(out)
}

pub fn write_csv<W: std::io::Write>(w: W, checks: &[Check]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["check", "value", "target", "tolerance", "pass"])?;
    for c in checks {
        out.write_record([c.name.clone(), fmt(c.value), fmt(c.target), fmt(c.tol), c.pass().to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Fixed-width table for the terminal.
pub fn table(checks: &[Check]) -> String {
    let mut s = format!("{:<28} {:>24} {:>10} {:>6}\n", "check", "value", "tol", "result");
    for c in checks {
        let verdict = if c.pass() { "PASS" } else { "FAIL" };
        s.push_str(&format!("{:<28} {:>24.16e} {:>10.1e} {:>6}\n", c.name, c.value, c.tol, verdict));
    }
    s
}
