//! First and second variation of the volume-renormalized mass on the reduced
//! phase space, the Einstein operator on block tensors and a discrete lambda_min.
//!
//! Block tensors are stored by their orthonormal components (rr, ff). A
//! radial-block tensor that is traceless and divergence free has the form
//! ((n-1) eta, -eta) with eta = C (b_min/b)^n, so the TT directions form a
//! one-parameter family for h and another for r.

use std::thread;

use crate::constraints::MomentumField;
use crate::error::{Error, Result};
use crate::geometry::{InnerMode, Profile, WarpedMetric};
use crate::linalg::{dirichlet_nodes, SymBand};
use crate::mass::{fmt, vr_mass, MassPolicy};
use crate::reduced::{reconstruct_data, point_scal_excess, solve_lichnerowicz, NewtonOptions, ReducedPoint};

pub const FIRST_EPS: f64 = 1e-3;
pub const SECOND_EPS: f64 = 1e-2;
/// sup |Ric + (n-1)| above which einstein_operator flags its input.
pub const EINSTEIN_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationPair {
    pub h_rr: Profile,
    pub h_ff: Profile,
    pub r_rr: Vec<f64>,
    pub r_ff: Vec<f64>,
}

impl PerturbationPair {
    pub fn zero(len: usize) -> Self {
        let z = Profile::constant(len, 0.0);
        PerturbationPair { h_rr: z.clone(), h_ff: z, r_rr: vec![0.0; len], r_ff: vec![0.0; len] }
    }

    /// c_h times the TT block tensor in h plus c_r times it in r.
    pub fn tt(gamma: &WarpedMetric, c_h: f64, c_r: f64) -> Result<Self> {
        let eta = tt_profile(gamma)?;
        let k = gamma.n() as f64 - 1.0;
        Ok(PerturbationPair {
            h_rr: eta.scale(k * c_h),
            h_ff: eta.scale(-c_h),
            r_rr: eta.v.iter().map(|e| k * c_r * e).collect(),
            r_ff: eta.v.iter().map(|e| -c_r * e).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.r_rr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_rr.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        PerturbationPair {
            h_rr: self.h_rr.scale(s),
            h_ff: self.h_ff.scale(s),
            r_rr: self.r_rr.iter().map(|v| s * v).collect(),
            r_ff: self.r_ff.iter().map(|v| s * v).collect(),
        }
    }

    pub fn add(&self, o: &PerturbationPair) -> Self {
        PerturbationPair {
            h_rr: self.h_rr.add(&o.h_rr),
            h_ff: self.h_ff.add(&o.h_ff),
            r_rr: self.r_rr.iter().zip(&o.r_rr).map(|(a, b)| a + b).collect(),
            r_ff: self.r_ff.iter().zip(&o.r_ff).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn h_norm_sq(&self, gamma: &WarpedMetric) -> f64 {
        let k = gamma.n() as f64 - 1.0;
        let f: Vec<f64> = self.h_rr.v.iter().zip(&self.h_ff.v).map(|(a, e)| a * a + k * e * e).collect();
        integrate_all(gamma, &f)
    }

    pub fn r_norm_sq(&self, gamma: &WarpedMetric) -> f64 {
        let k = gamma.n() as f64 - 1.0;
        let f: Vec<f64> = self.r_rr.iter().zip(&self.r_ff).map(|(a, e)| a * a + k * e * e).collect();
        integrate_all(gamma, &f)
    }

    /// L^2 norm of (h, r).
    pub fn norm(&self, gamma: &WarpedMetric) -> f64 {
        (self.h_norm_sq(gamma) + self.r_norm_sq(gamma)).sqrt()
    }
}

fn integrate_all(g: &WarpedMetric, f: &[f64]) -> f64 {
    g.integrate_ball_index(f, g.chart.len() - 1)
}

/// eta = (b_min / b)^n with exact jets.
fn tt_profile(gamma: &WarpedMetric) -> Result<Profile> {
    if gamma.chart.inner_mode() == InnerMode::RegularCenter {
        return Err(Error::Precondition("the block TT family is singular at a regular center".into()));
    }
    let n = gamma.n() as i32;
    let b_min = gamma.b.v.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(gamma.b.powi(-n).scale(b_min.powi(n)))
}

/// L^2 projection of (h, r) onto the block TT family of gamma: remove the
/// trace, then project the traceless part onto the kernel of the divergence.
pub fn project_tt(gamma: &WarpedMetric, dir: &PerturbationPair) -> Result<PerturbationPair> {
    let eta = tt_profile(gamma)?;
    let n = gamma.n() as f64;
    let ee: Vec<f64> = eta.v.iter().map(|e| e * e).collect();
    let norm = integrate_all(gamma, &ee);
    let coeff = |rr: &[f64], ff: &[f64]| {
        let f: Vec<f64> = (0..rr.len()).map(|i| (rr[i] - ff[i]) / n * eta.v[i]).collect();
        integrate_all(gamma, &f) / norm
    };
    let c_h = coeff(&dir.h_rr.v, &dir.h_ff.v);
    let c_r = coeff(&dir.r_rr, &dir.r_ff);
    PerturbationPair::tt(gamma, c_h, c_r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionCheck {
    pub trace_h: f64,
    pub div_h: f64,
    pub trace_r: f64,
    pub div_r: f64,
    /// sup |D scal(h)|, by a centered difference of the scalar curvature.
    pub dscal: f64,
    /// sup of the components of (h, r), the scale for the above.
    pub scale: f64,
}

impl DirectionCheck {
    /// Largest TT residual over the scale. dscal is left out: off an Einstein
    /// metric no TT direction keeps scal fixed, and the conformal correction in
    /// the Lichnerowicz solve absorbs it.
    pub fn max_relative(&self) -> f64 {
        let m = [self.trace_h, self.div_h, self.trace_r, self.div_r].into_iter().fold(0.0, f64::max);
        if self.scale == 0.0 {
            0.0
        } else {
            m / self.scale
        }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn h_divergence(gamma: &WarpedMetric, h_rr: &Profile, h_ff: &Profile) -> Vec<f64> {
    let k = gamma.n() as f64 - 1.0;
    (0..gamma.chart.len())
        .map(|i| {
            let (bs, _) = gamma.normal_derivatives(i);
            let psi = bs / gamma.b.v[i];
            h_rr.d1[i] / gamma.a.v[i] + k * psi * (h_rr.v[i] - h_ff.v[i])
        })
        .collect()
}

/// Trace, divergence and linearized scalar curvature of a direction, so that
/// tangency to the reduced space can be checked before differencing.
pub fn check_direction(point: &ReducedPoint, dir: &PerturbationPair) -> Result<DirectionCheck> {
    let g = &point.gamma;
    let k = g.n() as f64 - 1.0;
    let tr = |a: &[f64], e: &[f64]| sup(&a.iter().zip(e).map(|(x, y)| x + k * y).collect::<Vec<_>>());
    let mut div_h = h_divergence(g, &dir.h_rr, &dir.h_ff);
    let r = MomentumField::new(g.chart.clone(), g.fiber, dir.r_rr.clone(), dir.r_ff.clone())?;
    let mut div_r = r.divergence(g);
    for i in dirichlet_nodes(g) {
        div_h[i] = 0.0;
        div_r[i] = 0.0;
    }
    let e = 1e-4;
    let plus = point_scal_excess(&displaced_point(point, dir, e)?)?;
    let minus = point_scal_excess(&displaced_point(point, dir, -e)?)?;
    let dscal: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * e)).collect();
    let scale = [sup(&dir.h_rr.v), sup(&dir.h_ff.v), sup(&dir.r_rr), sup(&dir.r_ff)].into_iter().fold(0.0, f64::max);
    Ok(DirectionCheck {
        trace_h: tr(&dir.h_rr.v, &dir.h_ff.v),
        div_h: sup(&div_h),
        trace_r: tr(&dir.r_rr, &dir.r_ff),
        div_r: sup(&div_r),
        dscal: sup(&dscal),
        scale,
    })
}

fn base_excess(point: &ReducedPoint) -> Result<&(Profile, Profile)> {
    point
        .gamma_excess
        .as_ref()
        .ok_or_else(|| Error::Precondition("variations need a point built relative to the reference (gamma_excess)".into()))
}

/// gamma + s h in the orthonormal frame of gamma, p + s r on mixed components.
pub fn displaced_point(point: &ReducedPoint, dir: &PerturbationPair, s: f64) -> Result<ReducedPoint> {
    let (e_rr, e_ff) = base_excess(point)?;
    // (1 + e)(1 + s h) - 1
    let shift = |e: &Profile, h: &Profile| e.add(&h.scale(s).mul(&e.add_const(1.0)));
    let p = &point.p;
    let lam_rr = p.lam_rr.iter().zip(&dir.r_rr).map(|(a, b)| a + s * b).collect();
    let lam_ff = p.lam_ff.iter().zip(&dir.r_ff).map(|(a, b)| a + s * b).collect();
    let chart = point.gamma.chart.clone();
    let mom = MomentumField::new(chart.clone(), p.fiber, lam_rr, lam_ff)?;
    ReducedPoint::from_excess(chart, point.gamma.fiber, shift(e_rr, &dir.h_rr), shift(e_ff, &dir.h_ff), mom)
}

/// m_VR of the data reconstructed from the displaced point. The Lichnerowicz
/// solve uses scal of the displaced gamma, which is the Yamabe-type correction
/// back to the constrained space.
pub fn displaced_mass(point: &ReducedPoint, dir: &PerturbationPair, s: f64, policy: MassPolicy) -> Result<f64> {
    let pt = displaced_point(point, dir, s)?;
    let phi = solve_lichnerowicz(&pt, NewtonOptions::default())?;
    let d = reconstruct_data(&pt, &phi)?;
    Ok(vr_mass(&d, policy)?.limit)
}

/// Masses at the given offsets, evaluated on scoped threads; order preserved.
fn masses(point: &ReducedPoint, dir: &PerturbationPair, offsets: &[f64], policy: MassPolicy) -> Result<Vec<f64>> {
    thread::scope(|sc| {
        let handles: Vec<_> = offsets.iter().map(|&s| sc.spawn(move || displaced_mass(point, dir, s, policy))).collect();
        handles.into_iter().map(|h| h.join().expect("mass evaluation panicked")).collect()
    })
}

/// Relative admissibility tolerance for check_direction.
pub const ADMISSIBLE_TOL: f64 = 1e-2;

fn require_admissible(point: &ReducedPoint, dir: &PerturbationPair) -> Result<()> {
    let c = check_direction(point, dir)?;
    if c.max_relative() > ADMISSIBLE_TOL {
        return Err(Error::Precondition(format!(
            "direction is not TT (relative residual {})",
            fmt(c.max_relative())
        )));
    }
    Ok(())
}

/// [m(+eps) - m(-eps)] / (2 eps).
pub fn first_variation(point: &ReducedPoint, dir: &PerturbationPair, eps: f64, policy: MassPolicy) -> Result<f64> {
    require_admissible(point, dir)?;
    let m = masses(point, dir, &[eps, -eps], policy)?;
    Ok((m[0] - m[1]) / (2.0 * eps))
}

/// [m(+eps) - 2 m(0) + m(-eps)] / eps^2.
pub fn second_variation_fd(point: &ReducedPoint, dir: &PerturbationPair, eps: f64, policy: MassPolicy) -> Result<f64> {
    require_admissible(point, dir)?;
    let m = masses(point, dir, &[eps, 0.0, -eps], policy)?;
    Ok((m[0] - 2.0 * m[1] + m[2]) / (eps * eps))
}

/// A finite-difference value at eps and at a refined eps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationEstimate {
    pub eps: f64,
    pub value: f64,
    pub eps_refined: f64,
    pub value_refined: f64,
}

impl VariationEstimate {
    pub fn gap(&self) -> f64 {
        (self.value - self.value_refined).abs()
    }
}

/// First variation at eps and eps/10.
pub fn first_variation_pair(point: &ReducedPoint, dir: &PerturbationPair, eps: f64, policy: MassPolicy) -> Result<VariationEstimate> {
    Ok(VariationEstimate {
        eps,
        value: first_variation(point, dir, eps, policy)?,
        eps_refined: eps / 10.0,
        value_refined: first_variation(point, dir, eps / 10.0, policy)?,
    })
}

/// Second variation at eps and eps/2.
pub fn second_variation_pair(point: &ReducedPoint, dir: &PerturbationPair, eps: f64, policy: MassPolicy) -> Result<VariationEstimate> {
    Ok(VariationEstimate {
        eps,
        value: second_variation_fd(point, dir, eps, policy)?,
        eps_refined: eps / 2.0,
        value_refined: second_variation_fd(point, dir, eps / 2.0, policy)?,
    })
}

/// Rows: direction, eps, value, gap.
pub fn write_variation_csv<W: std::io::Write>(w: W, rows: &[(usize, VariationEstimate)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["direction", "eps", "value", "refinement_gap"])?;
    for (id, e) in rows {
        out.write_record([id.to_string(), fmt(e.eps), fmt(e.value), fmt(e.gap())])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockTensor {
    pub rr: Vec<f64>,
    pub ff: Vec<f64>,
    /// sup |Ric + (n-1)| of gamma.
    pub einstein_residual: f64,
    pub non_einstein: bool,
}

/// Sectional curvatures (radial-fiber, fiber-fiber) and psi = b_s / b at node i.
fn warped_curvatures(g: &WarpedMetric, i: usize) -> (f64, f64, f64) {
    let b = g.b.v[i];
    let (bs, bss) = g.normal_derivatives(i);
    (-bss / b, (g.fiber.sectional() - bs * bs) / (b * b), bs / b)
}

/// Lap f = f_ss + (n-1) psi f_s from the jets of f.
fn laplace_jet(g: &WarpedMetric, f: &Profile, i: usize, psi: f64) -> f64 {
    let (a, a1) = (g.a.v[i], g.a.d1[i]);
    let fs = f.d1[i] / a;
    let fss = f.d2[i] / (a * a) - a1 * f.d1[i] / (a * a * a);
    fss + (g.n() as f64 - 1.0) * psi * fs
}

/// Delta_E h = -nabla^k nabla_k h + 2 R_{ikjl} h^{kl} for a block tensor h = (H, E),
/// with R_{abba} = K(e_a, e_b), so (R h)_ii = -sum_{k != i} K_ik h_kk and a
/// traceless h on a hyperbolic metric gets -2h.
/// In the orthonormal frame the rough Laplacian is
///   rr: -Lap H + 2(n-1) psi^2 (H - E),   ff: -Lap E - 2 psi^2 (H - E).
pub fn einstein_operator(gamma: &WarpedMetric, h_rr: &Profile, h_ff: &Profile) -> Result<BlockTensor> {
    let n = gamma.n() as f64;
    let (ric_rr, ric_ff) = gamma.mixed_ricci()?;
    let einstein_residual = sup(&ric_rr.iter().chain(&ric_ff).map(|v| v + n - 1.0).collect::<Vec<_>>());
    let len = gamma.chart.len();
    let (mut rr, mut ff) = (vec![0.0; len], vec![0.0; len]);
    let center = gamma.chart.inner_mode() == InnerMode::RegularCenter;
    for i in 0..len {
        if center && i == 0 {
            continue;
        }
        let (k_rf, k_ff, psi) = warped_curvatures(gamma, i);
        let (h, e) = (h_rr.v[i], h_ff.v[i]);
        let d = h - e;
        rr[i] = -laplace_jet(gamma, h_rr, i, psi) + 2.0 * (n - 1.0) * psi * psi * d - 2.0 * (n - 1.0) * k_rf * e;
        ff[i] = -laplace_jet(gamma, h_ff, i, psi) - 2.0 * psi * psi * d - 2.0 * (k_rf * h + (n - 2.0) * k_ff * e);
    }
    gamma.fill_center(&mut rr);
    gamma.fill_center(&mut ff);
    Ok(BlockTensor { rr, ff, einstein_residual, non_einstein: einstein_residual > EINSTEIN_TOL })
}

/// Integral of <h, Delta_E h> dV.
pub fn einstein_form(gamma: &WarpedMetric, h_rr: &Profile, h_ff: &Profile) -> Result<f64> {
    let k = gamma.n() as f64 - 1.0;
    let l = einstein_operator(gamma, h_rr, h_ff)?;
    let f: Vec<f64> = (0..l.rr.len()).map(|i| h_rr.v[i] * l.rr[i] + k * h_ff.v[i] * l.ff[i]).collect();
    Ok(integrate_all(gamma, &f))
}

/// <h, Delta_E h> / <h, h> in L^2(gamma).
pub fn rayleigh_quotient(gamma: &WarpedMetric, h_rr: &Profile, h_ff: &Profile) -> Result<f64> {
    let k = gamma.n() as f64 - 1.0;
    let f: Vec<f64> = h_rr.v.iter().zip(&h_ff.v).map(|(a, e)| a * a + k * e * e).collect();
    Ok(einstein_form(gamma, h_rr, h_ff)? / integrate_all(gamma, &f))
}

/// Integral of (1/2 <h, Delta_E h> + 2|r|^2) dV.
pub fn second_variation_formula(gamma: &WarpedMetric, pert: &PerturbationPair) -> Result<f64> {
    Ok(0.5 * einstein_form(gamma, &pert.h_rr, &pert.h_ff)? + 2.0 * pert.r_norm_sq(gamma))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaMin {
    pub value: f64,
    /// mu at every node, h = ((n-1) mu, -mu), normalized in L^2.
    pub vector: Vec<f64>,
    /// Discrete Rayleigh quotient of `vector`.
    pub rayleigh: f64,
    pub iterations: usize,
}

/// Stiffness and mass matrices of the form int (mu_s^2 + V mu^2) / int mu^2
/// over traceless block tensors h = ((n-1) mu, -mu), on the free nodes.
fn traceless_forms(g: &WarpedMetric) -> Result<(Vec<usize>, SymBand, SymBand)> {
    let n = g.n() as f64;
    let len = g.chart.len();
    let r = g.chart.nodes();
    let k = g.fiber.dim as i32;
    let omega = g.fiber.total_volume;
    let mut fixed = dirichlet_nodes(g);
    if g.chart.inner_mode() == InnerMode::RegularCenter {
        fixed.push(0);
    }
    let free: Vec<usize> = (0..len).filter(|i| !fixed.contains(i)).collect();
    let mut slot = vec![usize::MAX; len];
    for (j, &i) in free.iter().enumerate() {
        slot[i] = j;
    }
    let m = free.len();
    let (mut kk, mut mm) = (SymBand::zeros(m, 1), SymBand::zeros(m, 1));
    let grad_w: Vec<f64> = (0..len).map(|i| g.b.v[i].powi(k) / g.a.v[i]).collect();
    let dv = g.volume_density();
    for c in 0..len - 1 {
        let w = omega * 0.5 * (grad_w[c] + grad_w[c + 1]) / (r[c + 1] - r[c]);
        let (p, q) = (slot[c], slot[c + 1]);
        if p != usize::MAX {
            kk.add(p, p, w);
        }
        if q != usize::MAX {
            kk.add(q, q, w);
        }
        if p != usize::MAX && q != usize::MAX {
            kk.add(p, q, -w);
        }
    }
    for (j, &i) in free.iter().enumerate() {
        let lo = if i == 0 { r[0] } else { 0.5 * (r[i - 1] + r[i]) };
        let hi = if i == len - 1 { r[i] } else { 0.5 * (r[i] + r[i + 1]) };
        let wm = omega * dv[i] * (hi - lo);
        let (k_rf, k_ff, psi) = warped_curvatures(g, i);
        let v = 2.0 * n * psi * psi - 2.0 / n * (-2.0 * (n - 1.0) * k_rf + (n - 2.0) * k_ff);
        kk.add(j, j, v * wm);
        mm.add(j, j, wm);
    }
    Ok((free, kk, mm))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest eigenvalue of the discrete Einstein operator on traceless block
/// tensors vanishing at the Dirichlet ends. Bracketed by Sturm counts of the
/// LDL^T inertia, then refined by shifted inverse iteration. The class is
/// larger than the block TT family (which is one-dimensional), so the value
/// is a lower bound for the TT infimum of the same discretization.
pub fn lambda_min_estimate(gamma: &WarpedMetric) -> Result<LambdaMin> {
    let (free, kk, mm) = traceless_forms(gamma)?;
    let m = free.len();
    if m == 0 {
        return Err(Error::Precondition("no free nodes".into()));
    }
    let count = |s: f64| -> Result<usize> { Ok(kk.shifted(s, &mm).ldl()?.negative_pivots()) };
    let ones = vec![1.0; m];
    let mut hi = dot(&ones, &kk.apply(&ones)) / dot(&ones, &mm.apply(&ones));
    let mut lo = (0..m).map(|j| kk.get(j, j) / mm.get(j, j)).fold(f64::INFINITY, f64::min).min(0.0) - 1.0;
    // Gershgorin on M^{-1/2} K M^{-1/2} gives a safe lower bracket.
    for j in 0..m {
        let mut off = 0.0;
        if j > 0 {
            off += kk.get(j, j - 1).abs() / (mm.get(j, j) * mm.get(j - 1, j - 1)).sqrt();
        }
        if j + 1 < m {
            off += kk.get(j, j + 1).abs() / (mm.get(j, j) * mm.get(j + 1, j + 1)).sqrt();
        }
        lo = lo.min(kk.get(j, j) / mm.get(j, j) - off);
    }
    while count(hi)? == 0 {
        hi += hi.abs().max(1.0);
    }
    let mut iterations = 0;
    while hi - lo > 1e-13 * hi.abs().max(1.0) && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if count(mid)? == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let shift = lo - 1e-9 * lo.abs().max(1.0);
    let fact = kk.shifted(shift, &mm).ldl()?;
    let mut x = ones;
    let mut value = f64::NAN;
    let mut converged = false;
    for _ in 0..100 {
        iterations += 1;
        let y = fact.solve(&mm.apply(&x));
        let nrm = dot(&y, &mm.apply(&y)).sqrt();
        x = y.iter().map(|v| v / nrm).collect();
        let rq = dot(&x, &kk.apply(&x));
        if (rq - value).abs() <= 1e-14 * rq.abs().max(1.0) {
            value = rq;
            converged = true;
            break;
        }
        value = rq;
    }
    if !converged {
        return Err(Error::Solver("inverse iteration for lambda_min did not converge".into()));
    }
    let n = gamma.n() as f64;
    // normalize h = ((n-1) mu, -mu) to unit L^2 norm
    let scale = (n * (n - 1.0)).sqrt();
    let mut vector = vec![0.0; gamma.chart.len()];
    for (j, &i) in free.iter().enumerate() {
        vector[i] = x[j] / scale;
    }
    let rayleigh = dot(&x, &kk.apply(&x)) / dot(&x, &mm.apply(&x));
    Ok(LambdaMin { value, vector, rayleigh, iterations })
}
