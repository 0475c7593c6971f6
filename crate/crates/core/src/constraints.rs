//! Constraint map, its linearization at the Milne data, the formal adjoint and
//! the boundary potential in radial/fiber block form.
//!
//! Momenta are de-densitized and given by orthonormal components: the radial
//! eigenvalue `lam_rr` and the fiber eigenvalue `lam_ff` of pi/dV_g.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{same_chart, FiberSpec, InnerMode, Parity, Profile, RadialChart, RadialField, WarpedMetric};

/// Metric whose volume form a momentum was divided by.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Densitization {
    /// Divided by dV of the metric it is paired with.
    Own,
    /// Divided by dV of the background metric.
    Background,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumField {
    pub chart: Arc<RadialChart>,
    pub fiber: FiberSpec,
    pub lam_rr: Vec<f64>,
    pub lam_ff: Vec<f64>,
    pub densitized_against: Densitization,
}

impl MomentumField {
    pub fn new(chart: Arc<RadialChart>, fiber: FiberSpec, lam_rr: Vec<f64>, lam_ff: Vec<f64>) -> Result<Self> {
        if lam_rr.len() != chart.len() || lam_ff.len() != chart.len() {
            return Err(Error::Precondition("momentum length does not match chart".into()));
        }
        if lam_rr.iter().chain(&lam_ff).any(|v| !v.is_finite()) {
            return Err(Error::Precondition("non-finite momentum component".into()));
        }
        Ok(MomentumField {
            chart,
            fiber,
            lam_rr,
            lam_ff,
            densitized_against: Densitization::Own,
        })
    }

    /// pi = -(n-1) g^{-1} dV_g.
    pub fn milne(chart: Arc<RadialChart>, fiber: FiberSpec) -> Self {
        let c = -(fiber.n() as f64 - 1.0);
        let len = chart.len();
        MomentumField::new(chart, fiber, vec![c; len], vec![c; len]).unwrap()
    }

    pub fn zero(chart: Arc<RadialChart>, fiber: FiberSpec) -> Self {
        let len = chart.len();
        MomentumField::new(chart, fiber, vec![0.0; len], vec![0.0; len]).unwrap()
    }

    pub fn n(&self) -> usize {
        self.fiber.n()
    }

    pub fn trace(&self) -> Vec<f64> {
        let k = self.n() as f64 - 1.0;
        self.lam_rr.iter().zip(&self.lam_ff).map(|(r, f)| r + k * f).collect()
    }

    pub fn norm_sq(&self) -> Vec<f64> {
        let k = self.n() as f64 - 1.0;
        self.lam_rr.iter().zip(&self.lam_ff).map(|(r, f)| r * r + k * f * f).collect()
    }

    /// Radial orthonormal component of div_g(pi/dV_g).
    pub fn divergence(&self, g: &WarpedMetric) -> Vec<f64> {
        let parity = match self.chart.inner_mode() {
            InnerMode::RegularCenter => Parity::Even,
            _ => Parity::None,
        };
        let lr = Profile::from_samples(&self.chart, self.lam_rr.clone(), parity);
        let k = self.n() as f64 - 1.0;
        let mut out = vec![0.0; self.chart.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let a = g.a.v[i];
            let b = g.b.v[i];
            if b == 0.0 {
                continue;
            }
            let h = k * g.b.d1[i] / (a * b);
            *o = lr.d1[i] / a + (self.lam_rr[i] - self.lam_ff[i]) * h;
        }
        g.fill_center(&mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialDataSet {
    pub g: WarpedMetric,
    pub mom: MomentumField,
    pub background_g: WarpedMetric,
    pub background_mom: MomentumField,
    /// The (h, q) this set was built from, kept because recovering a tiny h
    /// from g - g0 loses most of its digits far out.
    pub defining_perturbation: Option<Perturbation>,
}

impl InitialDataSet {
    pub fn new(g: WarpedMetric, mom: MomentumField, background_g: WarpedMetric, background_mom: MomentumField) -> Result<Self> {
        let c = &g.chart;
        if !(same_chart(c, &mom.chart) && same_chart(c, &background_g.chart) && same_chart(c, &background_mom.chart)) {
            return Err(Error::Precondition("initial data components live on different charts".into()));
        }
        if g.fiber != background_g.fiber {
            return Err(Error::Precondition("metric and background have different fibers".into()));
        }
        Ok(InitialDataSet { g, mom, background_g, background_mom, defining_perturbation: None })
    }

    /// (g, pi) over the Milne background of the same chart.
    pub fn with_milne_background(g: WarpedMetric, mom: MomentumField) -> Result<Self> {
        let bg = WarpedMetric::reference(g.chart.clone(), g.fiber)?;
        let bm = MomentumField::milne(g.chart.clone(), g.fiber);
        Self::new(g, mom, bg, bm)
    }

    pub fn milne(chart: Arc<RadialChart>, fiber: FiberSpec) -> Result<Self> {
        let g = WarpedMetric::reference(chart.clone(), fiber)?;
        let m = MomentumField::milne(chart, fiber);
        let mut d = Self::new(g.clone(), m.clone(), g, m)?;
        d.defining_perturbation = Some(Perturbation::zero(d.chart().len()));
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn chart(&self) -> &Arc<RadialChart> {
        &self.g.chart
    }

    /// h = g - g0 and q = pi - pi0 in background-orthonormal components, q per dV of g0.
    pub fn perturbation(&self) -> Perturbation {
        if let Some(p) = &self.defining_perturbation {
            return p.clone();
        }
        let k = self.n() as f64 - 1.0;
        let bg = &self.background_g;
        let ra = self.g.a.div(&bg.a);
        let mut rb = self.g.b.div(&bg.b);
        if self.chart().inner_mode() == InnerMode::RegularCenter {
            rb.fill_first_even();
        }
        let h_rr = ra.mul(&ra).add_const(-1.0);
        let h_ff = rb.mul(&rb).add_const(-1.0);
        let len = self.chart().len();
        let mut q_rr = vec![0.0; len];
        let mut q_ff = vec![0.0; len];
        for i in 0..len {
            let (xa, xb) = (ra.v[i], rb.v[i]);
            let jac = xa * xb.powi(k as i32);
            q_rr[i] = self.mom.lam_rr[i] * jac / (xa * xa) - self.background_mom.lam_rr[i];
            q_ff[i] = self.mom.lam_ff[i] * jac / (xb * xb) - self.background_mom.lam_ff[i];
        }
        if self.chart().inner_mode() == InnerMode::RegularCenter {
            // ratios b/b0 are 0/0 at the center
            bg.fill_center(&mut q_rr);
            bg.fill_center(&mut q_ff);
        }
        Perturbation { h_rr, h_ff, q_rr, q_ff }
    }
}

/// Block perturbation (h, q) of the background data in its orthonormal frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub h_rr: Profile,
    pub h_ff: Profile,
    pub q_rr: Vec<f64>,
    pub q_ff: Vec<f64>,
}

impl Perturbation {
    pub fn zero(len: usize) -> Self {
        Perturbation {
            h_rr: Profile::constant(len, 0.0),
            h_ff: Profile::constant(len, 0.0),
            q_rr: vec![0.0; len],
            q_ff: vec![0.0; len],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Perturbation {
            h_rr: self.h_rr.scale(s),
            h_ff: self.h_ff.scale(s),
            q_rr: self.q_rr.iter().map(|v| v * s).collect(),
            q_ff: self.q_ff.iter().map(|v| v * s).collect(),
        }
    }

    /// Jets rescaled node by node to unit size, with the scale factors.
    fn normalized_per_node(&self) -> (Perturbation, Vec<f64>) {
        let len = self.q_rr.len();
        let mut p = self.clone();
        let mut w = vec![1.0; len];
        for i in 0..len {
            let m = self
                .h_rr
                .at(i)
                .iter()
                .chain(&self.h_ff.at(i))
                .chain(&[self.q_rr[i], self.q_ff[i]])
                .fold(0.0f64, |m, v| m.max(v.abs()));
            if m == 0.0 {
                continue;
            }
            w[i] = m;
            for prof in [&mut p.h_rr, &mut p.h_ff] {
                prof.v[i] /= m;
                prof.d1[i] /= m;
                prof.d2[i] /= m;
            }
            p.q_rr[i] /= m;
            p.q_ff[i] /= m;
        }
        (p, w)
    }

    pub fn max_abs(&self) -> f64 {
        self.h_rr
            .v
            .iter()
            .chain(&self.h_ff.v)
            .chain(&self.q_rr)
            .chain(&self.q_ff)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// (g0 + h, pi0 + q) over the given background.
    pub fn apply(&self, bg_g: &WarpedMetric, bg_mom: &MomentumField) -> Result<InitialDataSet> {
        let fa = self.h_rr.add_const(1.0).sqrt();
        let fb = self.h_ff.add_const(1.0).sqrt();
        let g = WarpedMetric::relative_to(bg_g, &fa, &fb)?;
        let k = g.n() as f64 - 1.0;
        let len = g.chart.len();
        let mut lr = vec![0.0; len];
        let mut lf = vec![0.0; len];
        for i in 0..len {
            let (xa, xb) = (fa.v[i], fb.v[i]);
            let jac = xa * xb.powi(k as i32);
            lr[i] = (bg_mom.lam_rr[i] + self.q_rr[i]) * xa * xa / jac;
            lf[i] = (bg_mom.lam_ff[i] + self.q_ff[i]) * xb * xb / jac;
        }
        let mom = MomentumField::new(g.chart.clone(), g.fiber, lr, lf)?;
        let mut d = InitialDataSet::new(g, mom, bg_g.clone(), bg_mom.clone())?;
        d.defining_perturbation = Some(self.clone());
        Ok(d)
    }
}

/// Hamiltonian density and radial momentum component, both divided by dV_g.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintValues {
    pub phi0: RadialField,
    /// Orthonormal radial component 2 (div pi)_r / dV_g.
    pub phi_r: RadialField,
}

impl ConstraintValues {
    pub fn max_abs(&self) -> f64 {
        self.phi0.max_abs().max(self.phi_r.max_abs())
    }

    /// Sup norm over nodes in [lo, hi].
    pub fn max_abs_between(&self, lo: usize, hi: usize) -> f64 {
        (lo..=hi).fold(0.0, |m, i| m.max(self.phi0.values[i].abs()).max(self.phi_r.values[i].abs()))
    }
}

pub fn constraint_map(d: &InitialDataSet) -> Result<ConstraintValues> {
    let k = d.n() as f64 - 1.0;
    let scal = d.g.scalar_curvature()?;
    let tr = d.mom.trace();
    let nsq = d.mom.norm_sq();
    let phi0: Vec<f64> = (0..scal.values.len())
        .map(|i| scal.values[i] + tr[i] * tr[i] / k - nsq[i])
        .collect();
    let phi_r: Vec<f64> = d.mom.divergence(&d.g).iter().map(|v| 2.0 * v).collect();
    Ok(ConstraintValues {
        phi0: RadialField::new(d.chart().clone(), phi0, 1)?,
        phi_r: RadialField::new(d.chart().clone(), phi_r, 1)?,
    })
}

/// Phi_0 minus its expansion in h~ = pi/dV + (n-1) g^{-1}; vanishes identically.
pub fn compatibility_identity(d: &InitialDataSet) -> Result<Vec<f64>> {
    let n = d.n() as f64;
    let k = n - 1.0;
    let phi = constraint_map(d)?;
    let scal = d.g.scalar_curvature()?;
    Ok((0..scal.values.len())
        .map(|i| {
            let hr = d.mom.lam_rr[i] + k;
            let hf = d.mom.lam_ff[i] + k;
            let tr = hr + k * hf;
            let sq = hr * hr + k * hf * hf;
            let rhs = scal.values[i] + n * k + tr * tr / k - sq - 2.0 * tr;
            phi.phi0.values[i] - rhs
        })
        .collect())
}

/// Constraint densities relative to dV of the background (Phi * dV_g / dV_g0).
fn background_densities(d: &InitialDataSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = constraint_map(d)?;
    let vg = d.g.volume_density();
    let v0 = d.background_g.volume_density();
    let mut j: Vec<f64> = vg.iter().zip(&v0).map(|(a, b)| a / b).collect();
    if d.chart().inner_mode() == InnerMode::RegularCenter {
        d.background_g.fill_center(&mut j);
    }
    Ok((
        c.phi0.values.iter().zip(&j).map(|(p, w)| p * w).collect(),
        c.phi_r.values.iter().zip(&j).map(|(p, w)| p * w).collect(),
    ))
}

/// D Phi at the Milne data applied to (h, q), by centered differences in the amplitude of the
/// constraint map. Values are densities relative to dV of the background.
pub fn linearized_constraints(d: &InitialDataSet, pert: &Perturbation) -> Result<ConstraintValues> {
    let scale = pert.max_abs();
    let len = d.chart().len();
    if scale == 0.0 {
        let z = RadialField::new(d.chart().clone(), vec![0.0; len], 1)?;
        return Ok(ConstraintValues { phi0: z.clone(), phi_r: z });
    }
    // fourth-order centered stencil in the amplitude
    let step = 1e-3;
    let eval = |p: &Perturbation, s: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let at = |e: f64| background_densities(&p.scaled(e).apply(&d.background_g, &d.background_mom)?);
        let (p1, m1, p2, m2) = (at(s)?, at(-s)?, at(2.0 * s)?, at(-2.0 * s)?);
        let diff = |a: &[f64], b: &[f64], c: &[f64], e: &[f64]| -> Vec<f64> {
            (0..a.len()).map(|i| (8.0 * (a[i] - b[i]) - (c[i] - e[i])) / (12.0 * s)).collect()
        };
        Ok((diff(&p1.0, &m1.0, &p2.0, &m2.0), diff(&p1.1, &m1.1, &p2.1, &m2.1)))
    };
    // The Hamiltonian part is pointwise in the jets of (h, q), so each node can
    // use its own step. This keeps roundoff proportional to the local size of
    // the perturbation instead of its global maximum.
    let (local, w) = pert.normalized_per_node();
    let (mut phi0, _) = eval(&local, step)?;
    for (v, wi) in phi0.iter_mut().zip(&w) {
        *v *= wi;
    }
    d.background_g.fill_center(&mut phi0);
    let (_, phi_r) = eval(pert, step / scale)?;
    Ok(ConstraintValues {
        phi0: RadialField::new(d.chart().clone(), phi0, 1)?,
        phi_r: RadialField::new(d.chart().clone(), phi_r, 1)?,
    })
}

/// Phi(g0 + e h, pi0 + e q) - Phi(g0, pi0) - e DPhi(h, q), Hamiltonian part, sup norm.
pub fn quadratic_remainder(d: &InitialDataSet, pert: &Perturbation, eps: f64) -> Result<f64> {
    let lin = linearized_constraints(d, pert)?;
    let base = Perturbation::zero(d.chart().len()).apply(&d.background_g, &d.background_mom)?;
    let (b0, br) = background_densities(&base)?;
    let (p0, pr) = background_densities(&pert.scaled(eps).apply(&d.background_g, &d.background_mom)?)?;
    let mut m: f64 = 0.0;
    for i in 0..b0.len() {
        let r0 = p0[i] - b0[i] - eps * lin.phi0.values[i];
        let rr = pr[i] - br[i] - eps * lin.phi_r.values[i];
        m = m.max(r0.abs()).max(rr.abs());
    }
    Ok(m)
}

/// Lapse and shift; the shift is identically zero here.
#[derive(Clone, Debug, PartialEq)]
pub struct LapseShift {
    pub lapse: Profile,
    pub shift: Vec<f64>,
}

impl LapseShift {
    pub fn new(lapse: Profile) -> Result<Self> {
        if lapse.v.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Precondition("lapse must be positive".into()));
        }
        let len = lapse.len();
        Ok(LapseShift { lapse, shift: vec![0.0; len] })
    }

    pub fn unit(len: usize) -> Self {
        LapseShift::new(Profile::constant(len, 1.0)).unwrap()
    }

    fn check(&self) -> Result<()> {
        if self.shift.iter().any(|&x| x != 0.0) {
            return Err(Error::Precondition("nonzero shift is not supported".into()));
        }
        Ok(())
    }
}

struct BackgroundFrame {
    /// b0'/(a0 b0)
    psi: Vec<f64>,
    /// N along the unit normal, first and second
    ns: Vec<f64>,
    nss: Vec<f64>,
}

fn frame(bg: &WarpedMetric, lapse: &Profile) -> BackgroundFrame {
    let len = bg.chart.len();
    let mut psi = vec![0.0; len];
    let mut ns = vec![0.0; len];
    let mut nss = vec![0.0; len];
    for i in 0..len {
        let (a, a1) = (bg.a.v[i], bg.a.d1[i]);
        psi[i] = if bg.b.v[i] == 0.0 { 0.0 } else { bg.b.d1[i] / (a * bg.b.v[i]) };
        ns[i] = lapse.d1[i] / a;
        nss[i] = lapse.d2[i] / (a * a) - a1 * lapse.d1[i] / (a * a * a);
    }
    BackgroundFrame { psi, ns, nss }
}

/// <DPhi*(N, 0), (h, q)> at the Milne background, as a density relative to dV of g0.
pub fn adjoint_linearized(bg: &WarpedMetric, v: &LapseShift, pert: &Perturbation) -> Result<Vec<f64>> {
    v.check()?;
    let n = bg.n() as f64;
    let k = n - 1.0;
    let f = frame(bg, &v.lapse);
    let mut out = vec![0.0; bg.chart.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let (hr, hf) = (pert.h_rr.v[i], pert.h_ff.v[i]);
        let trh = hr + k * hf;
        let trq = pert.q_rr[i] + k * pert.q_ff[i];
        let lap = f.nss[i] + k * f.psi[i] * f.ns[i];
        let nn = v.lapse.v[i];
        *o = hr * f.nss[i] + k * hf * f.psi[i] * f.ns[i] - trh * lap - k * (n - 3.0) * trh * nn - 2.0 * nn * trq;
    }
    bg.fill_center(&mut out);
    Ok(out)
}

/// Radial orthonormal component of the boundary potential U(N, h), per dV of g0:
/// N (div h - d tr h) - h(grad N) + tr h grad N.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPotential {
    pub u_r: Vec<f64>,
}

pub fn boundary_potential(bg: &WarpedMetric, v: &LapseShift, pert: &Perturbation) -> Result<BoundaryPotential> {
    v.check()?;
    let k = bg.n() as f64 - 1.0;
    let f = frame(bg, &v.lapse);
    let mut u = vec![0.0; bg.chart.len()];
    for (i, o) in u.iter_mut().enumerate() {
        let a = bg.a.v[i];
        let (hr, hf) = (pert.h_rr.v[i], pert.h_ff.v[i]);
        let trh = hr + k * hf;
        let dtrh = (pert.h_rr.d1[i] + k * pert.h_ff.d1[i]) / a;
        let div_h = pert.h_rr.d1[i] / a + (hr - hf) * k * f.psi[i];
        let nn = v.lapse.v[i];
        *o = nn * (div_h - dtrh) - hr * f.ns[i] + trh * f.ns[i];
    }
    Ok(BoundaryPotential { u_r: u })
}

/// Boundary spheres of the region B_R with outward orientation, including an
/// excision sphere.
pub fn region_boundary(chart: &RadialChart, i_r: usize) -> Vec<(usize, f64)> {
    let mut ends = chart.ball_ends(i_r);
    if chart.inner_mode() == InnerMode::Excision {
        ends.insert(0, (0, -1.0));
    }
    ends
}

/// Flux of a radial vector field (orthonormal component `u`) out of B_R, in the background.
pub fn flux(bg: &WarpedMetric, u: &[f64], i_r: usize) -> f64 {
    let k = bg.fiber.dim as i32;
    region_boundary(&bg.chart, i_r)
        .iter()
        .map(|&(i, s)| s * bg.fiber.total_volume * bg.b.v[i].powi(k) * u[i])
        .sum()
}

/// | int N DPhi(h,q) - flux(U) - int <DPhi* N, (h,q)> | over B_R, with (h,q) = d - background.
pub fn michel_residual(d: &InitialDataSet, v: &LapseShift, radius: f64) -> Result<f64> {
    let i_r = d.chart().index_of(radius)?;
    let pert = d.perturbation();
    let bg = &d.background_g;
    let lin = linearized_constraints(d, &pert)?;
    let pairing: Vec<f64> = lin.phi0.values.iter().zip(&v.lapse.v).map(|(p, n)| p * n).collect();
    let adj = adjoint_linearized(bg, v, &pert)?;
    let u = boundary_potential(bg, v, &pert)?;
    let lhs = bg.integrate_ball_index(&pairing, i_r);
    let rhs = bg.integrate_ball_index(&adj, i_r) + flux(bg, &u.u_r, i_r);
    Ok((lhs - rhs).abs())
}
