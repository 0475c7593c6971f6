//! Test and demonstration data families on the Milne background.

use std::sync::Arc;

use crate::constraints::{InitialDataSet, Perturbation};
use crate::error::{Error, Result};
use crate::geometry::{FiberSpec, InnerMode, Parity, Profile, RadialChart, ReferenceKind};

/// Smooth bump exp(-1/(1-x^2)), x = (r - center)/width, with two derivatives in r.
pub fn bump(r: f64, center: f64, width: f64) -> [f64; 3] {
    let x = (r - center) / width;
    if x.abs() >= 1.0 {
        return [0.0; 3];
    }
    let s = 1.0 - x * x;
    let b = (-1.0 / s).exp();
    let d1 = b * (-2.0 * x / (s * s));
    let d2 = b * (4.0 * x * x / s.powi(4) - 2.0 / (s * s) - 8.0 * x * x / s.powi(3));
    [b, d1 / width, d2 / (width * width)]
}

/// Compactly supported (h, q) with amplitudes (h_rr, h_ff, q_rr, q_ff) times a bump.
/// `sampled` replaces exact derivatives by finite differences of the samples.
pub fn compact_perturbation(chart: &RadialChart, amp: [f64; 4], center: f64, width: f64, sampled: bool) -> Perturbation {
    let prof = |c: f64| {
        let p = Profile::from_fn(chart, |r| bump(r, center, width)).scale(c);
        if sampled {
            let parity = match chart.inner_mode() {
                InnerMode::RegularCenter => Parity::Even,
                _ => Parity::None,
            };
            Profile::from_samples(chart, p.v, parity)
        } else {
            p
        }
    };
    let q = |c: f64| chart.nodes().iter().map(|&r| c * bump(r, center, width)[0]).collect();
    Perturbation {
        h_rr: prof(amp[0]),
        h_ff: prof(amp[1]),
        q_rr: q(amp[2]),
        q_ff: q(amp[3]),
    }
}

pub fn compact_data(chart: Arc<RadialChart>, fiber: FiberSpec, amp: [f64; 4], center: f64, width: f64, sampled: bool) -> Result<InitialDataSet> {
    let bg = InitialDataSet::milne(chart.clone(), fiber)?;
    compact_perturbation(&chart, amp, center, width, sampled).apply(&bg.background_g, &bg.background_mom)
}

/// phi - 1 for the conformal factor 1 + eps e^{-delta r}; on two-ended charts
/// 1 + eps cosh(r)^{-delta}.
pub fn conformal_excess(chart: &RadialChart, eps: f64, delta: f64) -> Profile {
    match chart.inner_mode() {
        InnerMode::TwoEnded => Profile::from_fn(chart, |r| {
            let c = r.cosh().powf(-delta);
            let t = r.tanh();
            [eps * c, -eps * delta * c * t, eps * delta * c * (delta * t * t - (1.0 - t * t))]
        }),
        _ => Profile::from_fn(chart, |r| {
            let e = eps * (-delta * r).exp();
            [e, -delta * e, delta * delta * e]
        }),
    }
}

pub fn conformal_factor(chart: &RadialChart, eps: f64, delta: f64) -> Profile {
    conformal_excess(chart, eps, delta).add_const(1.0)
}

/// (1 + u)^p - 1 without cancellation.
pub(crate) fn pow_excess(u: &Profile, p: f64) -> Profile {
    u.compose(|x| [(p * x.ln_1p()).exp_m1(), p * (1.0 + x).powf(p - 1.0), p * (p - 1.0) * (1.0 + x).powf(p - 2.0)])
}

/// q for momentum pi = -(n-1) g^{-1} dV_g on g = g0 + h, relative to the Milne momentum.
pub fn milne_momentum_q(h_rr: &Profile, h_ff: &Profile, n: usize) -> (Vec<f64>, Vec<f64>) {
    let k = n as f64 - 1.0;
    let q = |own: &[f64]| -> Vec<f64> {
        (0..own.len())
            .map(|i| {
                let lj = 0.5 * h_rr.v[i].ln_1p() + 0.5 * k * h_ff.v[i].ln_1p();
                -k * (lj - own[i].ln_1p()).exp_m1()
            })
            .collect()
    };
    (q(&h_rr.v), q(&h_ff.v))
}

/// Data built from (h, q) on the Milne background, so that h is stored exactly.
fn from_metric_excess(chart: Arc<RadialChart>, fiber: FiberSpec, h_rr: Profile, h_ff: Profile) -> Result<InitialDataSet> {
    let (q_rr, q_ff) = milne_momentum_q(&h_rr, &h_ff, fiber.n());
    let bg = InitialDataSet::milne(chart, fiber)?;
    Perturbation { h_rr, h_ff, q_rr, q_ff }.apply(&bg.background_g, &bg.background_mom)
}

/// (phi^{4/(n-2)} g0, pi) with pi/dV_g = -(n-1) g^{-1}, phi = 1 + excess.
pub fn conformal_data(chart: Arc<RadialChart>, fiber: FiberSpec, excess: &Profile) -> Result<InitialDataSet> {
    let h = pow_excess(excess, 4.0 / (fiber.n() as f64 - 2.0));
    from_metric_excess(chart, fiber, h.clone(), h)
}

/// Time-symmetric slice of the Kottler (Schwarzschild-AdS) family written with
/// warping b = sinh r (1 + eps e^{-delta r}) and a = b' / sqrt(1 + b^2 - 2m b^{2-n}).
/// Scalar curvature is exactly -n(n-1) for every eps, delta, m.
pub fn kottler_data(chart: Arc<RadialChart>, fiber: FiberSpec, eps: f64, delta: f64, mass: f64) -> Result<InitialDataSet> {
    if fiber.reference_kind()? != ReferenceKind::Sinh {
        return Err(Error::Precondition("the Kottler family needs a spherical fiber".into()));
    }
    let n = fiber.n() as i32;
    // e = eps e^{-delta r}, w = 1 + e
    let e = Profile::from_fn(&chart, |r| {
        let e = eps * (-delta * r).exp();
        [e, -delta * e, delta * delta * e]
    });
    let de = Profile::from_fn(&chart, |r| {
        let e = eps * (-delta * r).exp();
        [-delta * e, delta * delta * e, -delta * delta * delta * e]
    });
    let w = e.add_const(1.0);
    let sinh = Profile::from_fn(&chart, |r| [r.sinh(), r.cosh(), r.sinh()]);
    let sinh2 = Profile::from_fn(&chart, |r| [(2.0 * r).sinh(), 2.0 * (2.0 * r).cosh(), 4.0 * (2.0 * r).sinh()]);
    let b = sinh.mul(&w);
    // w^2 - 1
    let h_ff = e.scale(2.0).add(&e.mul(&e));
    // b'^2 - b^2 - 1 = (w^2 - 1) + sinh(2r) w w' + sinh^2 w'^2
    let mut num = h_ff.add(&sinh2.mul(&w).mul(&de)).add(&sinh.mul(&de).powi(2));
    let mut s = b.mul(&b).add_const(1.0);
    if mass != 0.0 {
        let t = b.powi(2 - n).scale(2.0 * mass);
        num = num.add(&t);
        s = s.sub(&t);
    }
    if s.v.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Precondition("Kottler data: horizon inside the grid".into()));
    }
    // a^2 - 1 = (b'^2 - S) / S
    let h_rr = num.div(&s);
    from_metric_excess(chart, fiber, h_rr, h_ff)
}
