//! Conformal-method reconstruction on the reduced phase space: TT momenta, the
//! Lichnerowicz equation, data reconstruction and the CMC lapse equation.

use std::sync::Arc;

use crate::constraints::{InitialDataSet, MomentumField, Perturbation};
use crate::error::{Error, Result};
use crate::families::{milne_momentum_q, pow_excess};
use crate::geometry::{InnerMode, Parity, Profile, RadialChart, RadialField, WarpedMetric};
use crate::linalg::{dirichlet_nodes, laplacian, Tridiag};
use crate::mass::quasilocal_mass;

/// Metric gamma with scal = -n(n-1) and a traceless, divergence-free momentum p
/// (stored de-densitized, orthonormal components relative to gamma).
#[derive(Clone, Debug)]
pub struct ReducedPoint {
    pub gamma: WarpedMetric,
    pub p: MomentumField,
    /// (a^2/a0^2 - 1, b^2/b0^2 - 1) of gamma against the hyperbolic reference,
    /// when known to full precision.
    pub gamma_excess: Option<(Profile, Profile)>,
}

impl ReducedPoint {
    pub fn new(gamma: WarpedMetric, p: MomentumField) -> Self {
        ReducedPoint { gamma, p, gamma_excess: None }
    }

    /// (g0, 0).
    pub fn background(chart: Arc<RadialChart>, fiber: crate::geometry::FiberSpec) -> Result<Self> {
        let gamma = WarpedMetric::reference(chart.clone(), fiber)?;
        let len = chart.len();
        let zero = Profile::constant(len, 0.0);
        Ok(ReducedPoint {
            gamma,
            p: MomentumField::zero(chart, fiber),
            gamma_excess: Some((zero.clone(), zero)),
        })
    }

    /// gamma = g0 + h in the orthonormal frame of g0.
    pub fn from_excess(chart: Arc<RadialChart>, fiber: crate::geometry::FiberSpec, h_rr: Profile, h_ff: Profile, p: MomentumField) -> Result<Self> {
        let g0 = WarpedMetric::reference(chart, fiber)?;
        let gamma = WarpedMetric::relative_to(&g0, &h_rr.add_const(1.0).sqrt(), &h_ff.add_const(1.0).sqrt())?;
        Ok(ReducedPoint { gamma, p, gamma_excess: Some((h_rr, h_ff)) })
    }

    pub fn n(&self) -> usize {
        self.gamma.n()
    }

    /// |p|^2_gamma per dV_gamma squared.
    pub fn p_norm_sq(&self) -> Vec<f64> {
        self.p.norm_sq()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TtResiduals {
    pub trace: f64,
    pub divergence: f64,
    pub scal: f64,
}

impl TtResiduals {
    pub fn passes(&self, tol: f64) -> bool {
        self.trace <= tol && self.divergence <= tol && self.scal <= tol
    }
}

/// Sup norms of tr p, div p and scal + n(n-1).
pub fn tt_check(point: &ReducedPoint) -> Result<TtResiduals> {
    if !crate::geometry::same_chart(&point.gamma.chart, &point.p.chart) {
        return Err(Error::Precondition("gamma and p live on different charts".into()));
    }
    let n = point.n() as f64;
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scal = point.gamma.scalar_curvature()?;
    let scal_res: Vec<f64> = scal.values.iter().map(|s| s + n * (n - 1.0)).collect();
    Ok(TtResiduals {
        trace: sup(&point.p.trace()),
        divergence: sup(&point.p.divergence(&point.gamma)),
        scal: sup(&scal_res),
    })
}

/// lam_rr = (n-1) L, lam_ff = -L with L = C (b_min / b)^n, which makes p
/// traceless and divergence free. b_min is b at the excision sphere or throat.
pub fn radial_tt_family(gamma: &WarpedMetric, amplitude: f64) -> Result<MomentumField> {
    let chart = gamma.chart.clone();
    let n = gamma.n();
    if amplitude == 0.0 {
        return Ok(MomentumField::zero(chart, gamma.fiber));
    }
    if chart.inner_mode() == InnerMode::RegularCenter {
        return Err(Error::Precondition("the radial TT family is singular at a regular center; use excision".into()));
    }
    let b_min = gamma.b.v.iter().cloned().fold(f64::INFINITY, f64::min);
    let l: Vec<f64> = gamma.b.v.iter().map(|b| amplitude * (b_min / b).powi(n as i32)).collect();
    let k = n as f64 - 1.0;
    MomentumField::new(chart, gamma.fiber, l.iter().map(|x| k * x).collect(), l.iter().map(|x| -x).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConformalFactor {
    pub phi: RadialField,
    /// phi - 1, kept separately since phi - 1 is tiny far out.
    pub excess: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Residual sup norm before each Newton step and after the last one.
    pub history: Vec<f64>,
}

impl ConformalFactor {
    /// phi - 1 with sampled derivatives.
    pub fn excess_profile(&self) -> Profile {
        Profile::from_samples(&self.phi.chart, self.excess.clone(), elliptic_parity(&self.phi.chart))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iteration", "residual"])?;
        for (i, r) in self.history.iter().enumerate() {
            wr.write_record([i.to_string(), crate::mass::fmt(*r)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Ghost rule matching the inner boundary rows of `laplacian`.
pub(crate) fn elliptic_parity(chart: &RadialChart) -> Parity {
    match chart.inner_mode() {
        InnerMode::TwoEnded => Parity::None,
        _ => Parity::Even,
    }
}

fn is_pinned(chart: &RadialChart, i: usize) -> bool {
    i + 1 == chart.len() || (i == 0 && chart.inner_mode() == InnerMode::TwoEnded)
}

/// Residual of the Lichnerowicz equation in u = phi - 1, and its Jacobian.
/// `sig` is scal_gamma + n(n-1).
fn lichnerowicz_system(lap: &Tridiag, chart: &RadialChart, n: f64, sig: &[f64], psq: &[f64], u: &[f64]) -> (Vec<f64>, Tridiag) {
    let c = 4.0 * (n - 1.0) / (n - 2.0);
    let e1 = (n + 2.0) / (n - 2.0);
    let e2 = (3.0 * n - 2.0) / (n - 2.0);
    let s = n * (n - 1.0);
    let lu = lap.apply(u);
    let mut f = vec![0.0; u.len()];
    let mut j = Tridiag::zeros(u.len());
    for i in 0..u.len() {
        if is_pinned(chart, i) {
            f[i] = u[i];
            j.pin(i);
            continue;
        }
        let lp = u[i].ln_1p();
        let phi = 1.0 + u[i];
        f[i] = -c * lu[i] + sig[i] * phi + s * ((e1 * lp).exp_m1() - u[i]) - psq[i] * (-e2 * lp).exp();
        j.lower[i] = -c * lap.lower[i];
        j.upper[i] = -c * lap.upper[i];
        j.diag[i] = -c * lap.diag[i] + sig[i] + s * (e1 * phi.powf(e1 - 1.0) - 1.0) + psq[i] * e2 * phi.powf(-e2 - 1.0);
    }
    (f, j)
}

/// scal_gamma + n(n-1) of a reduced point. When gamma is stored through its
/// excess over the reference the difference is formed analytically, so tails
/// far below the size of b keep their digits.
pub fn point_scal_excess(point: &ReducedPoint) -> Result<Vec<f64>> {
    match &point.gamma_excess {
        Some((e_rr, e_ff)) => {
            let g0 = WarpedMetric::reference(point.gamma.chart.clone(), point.gamma.fiber)?;
            Ok(scal_excess_from(&g0, e_rr, e_ff))
        }
        None => scal_excess(&point.gamma),
    }
}

/// scal(g) - scal(g0) for a = a0 (1 + e_rr)^{1/2}, b = b0 (1 + e_ff)^{1/2}, a0 = 1.
pub fn scal_excess_from(g0: &WarpedMetric, e_rr: &Profile, e_ff: &Profile) -> Vec<f64> {
    let n = g0.n() as f64;
    let kappa = g0.fiber.einstein_constant;
    let half_log = |e: &Profile| e.compose(|x| [x.ln_1p(), 1.0 / (1.0 + x), -1.0 / ((1.0 + x) * (1.0 + x))]).scale(0.5);
    let (g, f) = (half_log(e_rr), half_log(e_ff));
    let len = g0.chart.len();
    let mut s = vec![0.0; len];
    for (i, out) in s.iter_mut().enumerate() {
        let b0 = g0.b.v[i];
        if b0 == 0.0 {
            continue;
        }
        let (beta, b2) = (g0.b.d1[i] / b0, g0.b.d2[i] / b0);
        let (er, ef) = (e_rr.v[i], e_ff.v[i]);
        // e^{-2g} - 1 and e^{-2f} - 1
        let (mr, mf) = (-er / (1.0 + er), -ef / (1.0 + ef));
        let (f1, f2, g1) = (f.d1[i], f.d2[i], g.d1[i]);
        let x = 2.0 * beta * f1 + f2 + f1 * f1 - g1 * (beta + f1);
        let y = 2.0 * beta * f1 + f1 * f1;
        *out = kappa / (b0 * b0) * mf - 2.0 * (n - 1.0) * (mr * b2 + x / (1.0 + er))
            - (n - 1.0) * (n - 2.0) * (mr * beta * beta + y / (1.0 + er));
    }
    g0.fill_center(&mut s);
    s
}

/// scal_gamma + n(n-1), relative to the discrete curvature of the reference.
pub fn scal_excess(gamma: &WarpedMetric) -> Result<Vec<f64>> {
    let s = gamma.scalar_curvature()?;
    let s0 = WarpedMetric::reference(gamma.chart.clone(), gamma.fiber)?.scalar_curvature()?;
    Ok(s.values.iter().zip(&s0.values).map(|(a, b)| a - b).collect())
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton for -c Lap phi + scal_gamma phi + n(n-1) phi^{(n+2)/(n-2)}
/// - |p|^2 phi^{-(3n-2)/(n-2)} = 0, phi = 1 at Dirichlet ends, zero normal
/// derivative at an excision sphere.
///
/// On the reduced space scal_gamma = -n(n-1). Keeping the computed value
/// instead makes the same solve restore the constraint for a gamma displaced
/// off it. scal_gamma + n(n-1) is taken against the discrete scalar
/// curvature of the reference, so gamma = g0 gives exactly zero.
pub fn solve_lichnerowicz(point: &ReducedPoint, opts: NewtonOptions) -> Result<ConformalFactor> {
    let g = &point.gamma;
    let chart = g.chart.clone();
    let n = point.n() as f64;
    let lap = laplacian(g);
    let psq = point.p_norm_sq();
    let sig = point_scal_excess(point)?;
    let mut u = vec![0.0; chart.len()];
    let (mut f, mut jac) = lichnerowicz_system(&lap, &chart, n, &sig, &psq, &u);
    let mut res = sup(&f);
    let mut history = vec![res];
    let mut it = 0;
    while res > opts.tol {
        if it == opts.max_iter {
            return Err(Error::Solver(format!("Lichnerowicz Newton did not converge in {it} iterations (residual {res:e})")));
        }
        let du = jac.solve(&f)?;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x - step * d).collect();
            if trial.iter().all(|x| *x > -1.0) {
                let (tf, tj) = lichnerowicz_system(&lap, &chart, n, &sig, &psq, &trial);
                let tr = sup(&tf);
                if tr < res || tr <= opts.tol {
                    u = trial;
                    f = tf;
                    jac = tj;
                    res = tr;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-10 {
                return Err(Error::Solver("Lichnerowicz line search failed (positivity or residual increase)".into()));
            }
        }
        it += 1;
        history.push(res);
    }
    let phi = RadialField::function(chart, u.iter().map(|x| 1.0 + x).collect())?;
    Ok(ConformalFactor { phi, excess: u, residual: res, iterations: it, history })
}

/// g = phi^{4/(n-2)} gamma, pi/dV_g = phi^{-2n/(n-2)} p/dV_gamma - (n-1) g^{-1}.
pub fn reconstruct_data(point: &ReducedPoint, phi: &ConformalFactor) -> Result<InitialDataSet> {
    let n = point.n();
    let nf = n as f64;
    let k = nf - 1.0;
    let chart = point.gamma.chart.clone();
    let fiber = point.gamma.fiber;
    let ex = phi.excess_profile();
    let hphi = pow_excess(&ex, 4.0 / (nf - 2.0));
    let damp: Vec<f64> = phi.excess.iter().map(|u| (-2.0 * nf / (nf - 2.0) * u.ln_1p()).exp()).collect();
    let g_excess = match &point.gamma_excess {
        Some(e) => Some(e.clone()),
        None => reference_excess(&point.gamma)?,
    };
    match g_excess {
        Some((gr, gf)) => {
            let comb = |h: &Profile| h.add(&hphi).add(&h.mul(&hphi));
            let (h_rr, h_ff) = (comb(&gr), comb(&gf));
            let (mut q_rr, mut q_ff) = milne_momentum_q(&h_rr, &h_ff, n);
            for i in 0..chart.len() {
                let lj = 0.5 * h_rr.v[i].ln_1p() + 0.5 * k * h_ff.v[i].ln_1p();
                q_rr[i] += point.p.lam_rr[i] * damp[i] * (lj - h_rr.v[i].ln_1p()).exp();
                q_ff[i] += point.p.lam_ff[i] * damp[i] * (lj - h_ff.v[i].ln_1p()).exp();
            }
            let bg = InitialDataSet::milne(chart, fiber)?;
            Perturbation { h_rr, h_ff, q_rr, q_ff }.apply(&bg.background_g, &bg.background_mom)
        }
        None => {
            let g = point.gamma.conformal(&ex.add_const(1.0))?;
            let lr = (0..chart.len()).map(|i| point.p.lam_rr[i] * damp[i] - k).collect();
            let lf = (0..chart.len()).map(|i| point.p.lam_ff[i] * damp[i] - k).collect();
            let mom = MomentumField::new(chart, fiber, lr, lf)?;
            InitialDataSet::with_milne_background(g, mom)
        }
    }
}

/// Zero excess if gamma is exactly the reference metric.
fn reference_excess(gamma: &WarpedMetric) -> Result<Option<(Profile, Profile)>> {
    let r = WarpedMetric::reference(gamma.chart.clone(), gamma.fiber)?;
    if r.a == gamma.a && r.b == gamma.b {
        let z = Profile::constant(gamma.chart.len(), 0.0);
        Ok(Some((z.clone(), z)))
    } else {
        Ok(None)
    }
}

/// Mixed components (radial, fiber) of K0 = k + id, where k is the rescaled
/// second fundamental form recovered from pi = (tr k) g - k.
pub fn k0_components(d: &InitialDataSet) -> (Vec<f64>, Vec<f64>) {
    let k = d.n() as f64 - 1.0;
    let tr = d.mom.trace();
    let f = |lam: &[f64]| (0..lam.len()).map(|i| (tr[i] / k + 1.0) - lam[i]).collect::<Vec<f64>>();
    (f(&d.mom.lam_rr), f(&d.mom.lam_ff))
}

/// Lapse of the CMC slice tau = -n/t. In rescaled variables the equation is
/// Lap N - |k|^2 N = -n with N = 1 at Dirichlet ends and zero normal
/// derivative at an excision sphere; solved for u = N - 1.
pub fn solve_lapse(d: &InitialDataSet, t: f64) -> Result<RadialField> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("cosmological time must be positive, got {t}")));
    }
    let u = lapse_excess(d)?;
    RadialField::function(d.chart().clone(), u.iter().map(|x| 1.0 + x).collect())
}

/// N - 1.
pub fn lapse_excess(d: &InitialDataSet) -> Result<Vec<f64>> {
    let (r, f) = k0_components(d);
    lapse_excess_from(&d.g, &r, &f)
}

/// N - 1 for metric g and mixed K0 components; |k|^2 - n = |K0|^2 - 2 tr K0.
pub fn lapse_excess_from(g: &WarpedMetric, k0_rr: &[f64], k0_ff: &[f64]) -> Result<Vec<f64>> {
    let n = g.n() as f64;
    let chart = &g.chart;
    let mut m = laplacian(g);
    let pinned = dirichlet_nodes(g);
    let mut rhs = vec![0.0; chart.len()];
    for i in 0..chart.len() {
        if pinned.contains(&i) {
            continue;
        }
        let (r, f) = (k0_rr[i], k0_ff[i]);
        let src = r * r - 2.0 * r + (n - 1.0) * (f * f - 2.0 * f);
        let w = src + n;
        if w < -1e-12 {
            return Err(Error::Solver(format!("lapse operator indefinite: |K|^2 < 0 at node {i}")));
        }
        m.diag[i] -= w;
        rhs[i] = src;
    }
    m.solve(&rhs)
}

/// N - 1 as a profile with sampled derivatives.
pub fn lapse_profile(d: &InitialDataSet) -> Result<Profile> {
    Ok(Profile::from_samples(d.chart(), lapse_excess(d)?, elliptic_parity(d.chart())).add_const(1.0))
}

/// t^{n-2} times the quasi-local mass of the reconstructed data at radius R.
pub fn quasilocal_reduced_hamiltonian(point: &ReducedPoint, t: f64, radius: f64) -> Result<f64> {
    let phi = solve_lichnerowicz(point, NewtonOptions::default())?;
    let d = reconstruct_data(point, &phi)?;
    Ok(t.powi(point.n() as i32 - 2) * quasilocal_mass(&d.g, &d.background_g, radius)?)
}
