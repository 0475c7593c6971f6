//! Volume-renormalized mass: truncated terms over balls B_R, limit extraction,
//! the hypothesis gate, and the mean-curvature form of the boundary term.

use crate::constraints::{constraint_map, InitialDataSet, Perturbation};
use crate::error::{Error, Result};
use crate::geometry::{decay_rate_estimate, same_chart, InnerMode, Profile, RadialChart, WarpedMetric};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extrapolation {
    /// m(R) = m_inf + c exp(-sigma R), sigma fitted.
    Fit,
    /// Last partial sum, error bar from the last increment.
    LastValue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    Enforce,
    /// Report truncated sums without checking the hypotheses.
    Skip,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassPolicy {
    pub extrapolation: Extrapolation,
    pub gate: GateMode,
}

impl Default for MassPolicy {
    fn default() -> Self {
        MassPolicy { extrapolation: Extrapolation::Fit, gate: GateMode::Enforce }
    }
}

impl MassPolicy {
    pub fn last_value() -> Self {
        MassPolicy { extrapolation: Extrapolation::LastValue, gate: GateMode::Enforce }
    }

    pub fn ungated(mut self) -> Self {
        self.gate = GateMode::Skip;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitMethod {
    ExponentialFit,
    LastValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassReport {
    pub radii: Vec<f64>,
    pub adm_terms: Vec<f64>,
    pub rv_terms: Vec<f64>,
    pub trace_terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub limit: f64,
    /// Fitted decay exponent, NaN when the last value was used.
    pub sigma: f64,
    /// RMS residual of the fit, or the last increment for `LastValue`.
    pub fit_residual: f64,
    pub method: LimitMethod,
}

impl MassReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["R", "adm", "rv", "trace", "partial_sum"])?;
        for i in 0..self.radii.len() {
            out.write_record(
                [self.radii[i], self.adm_terms[i], self.rv_terms[i], self.trace_terms[i], self.partial_sums[i]]
                    .iter()
                    .map(|v| fmt(*v)),
            )?;
        }
        out.write_record(["limit".to_string(), fmt(self.limit), String::new(), String::new(), String::new()])?;
        out.write_record(["sigma".to_string(), fmt(self.sigma), String::new(), String::new(), String::new()])?;
        out.write_record(["fit_residual".to_string(), fmt(self.fit_residual), String::new(), String::new(), String::new()])?;
        out.flush()?;
        Ok(())
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_pair(g: &WarpedMetric, g0: &WarpedMetric) -> Result<()> {
    if !same_chart(&g.chart, &g0.chart) || g.fiber != g0.fiber {
        return Err(Error::Precondition("metric and reference must share chart and fiber".into()));
    }
    Ok(())
}

/// Orthonormal radial component of (div_g0 h - d tr_g0 h) for the block tensor
/// h = diag(A, E), scaled by the area of the level sphere and the orientation.
fn adm_flux(g0: &WarpedMetric, big_a: &Profile, big_e: &Profile, i_r: usize) -> f64 {
    let k = g0.fiber.dim as f64;
    g0.chart
        .ball_ends(i_r)
        .iter()
        .map(|&(i, s)| {
            let (a0, b0) = (g0.a.v[i], g0.b.v[i]);
            let psi = g0.b.d1[i] / (a0 * b0);
            let u = k * (psi * (big_a.v[i] - big_e.v[i]) - big_e.d1[i] / a0);
            s * g0.fiber.total_volume * b0.powi(k as i32) * u
        })
        .sum()
}

/// Flux of (div_g0 g - d tr_g0 g)(nu_g0) over the boundary of B_R, from the full
/// ratios a^2/a0^2 and b^2/b0^2.
pub fn adm_boundary_term(g: &WarpedMetric, g0: &WarpedMetric, radius: f64) -> Result<f64> {
    check_pair(g, g0)?;
    let i = g.chart.index_of(radius)?;
    let ra = g.a.div(&g0.a);
    let rb = g.b.div(&g0.b);
    Ok(adm_flux(g0, &ra.mul(&ra), &rb.mul(&rb), i))
}

/// Same flux written through the differences (a - a0)(a + a0)/a0^2.
pub fn adm_boundary_term_difference_form(g: &WarpedMetric, g0: &WarpedMetric, radius: f64) -> Result<f64> {
    check_pair(g, g0)?;
    let i = g.chart.index_of(radius)?;
    let diff = |x: &Profile, x0: &Profile| x.sub(x0).mul(&x.add(x0)).div(&x0.mul(x0));
    Ok(adm_flux(g0, &diff(&g.a, &g0.a), &diff(&g.b, &g0.b), i))
}

fn adm_from_perturbation(g0: &WarpedMetric, p: &Perturbation, i_r: usize) -> f64 {
    adm_flux(g0, &p.h_rr, &p.h_ff, i_r)
}

/// dV_g / dV_g0 - 1 from h, without forming the volume ratio.
fn volume_excess(p: &Perturbation, k: f64) -> Vec<f64> {
    p.h_rr
        .v
        .iter()
        .zip(&p.h_ff.v)
        .map(|(hr, hf)| (0.5 * hr.ln_1p() + 0.5 * k * hf.ln_1p()).exp_m1())
        .collect()
}

/// int_{B_R} dV_g - int_{B_R} dV_g0.
pub fn renormalized_volume(g: &WarpedMetric, g0: &WarpedMetric, radius: f64) -> Result<f64> {
    check_pair(g, g0)?;
    let i = g.chart.index_of(radius)?;
    let dv = g.volume_density();
    let dv0 = g0.volume_density();
    let diff: Vec<f64> = dv.iter().zip(&dv0).map(|(x, y)| x - y).collect();
    let (lo, hi) = g.chart.ball_range(i);
    Ok(g.fiber.total_volume * g.chart.integrate(&diff, lo, hi))
}

/// tr_g(pi/dV_g) + n(n-1) expressed through (h, q).
fn trace_excess(d: &InitialDataSet, p: &Perturbation) -> Vec<f64> {
    let k = d.n() as f64 - 1.0;
    let bm = &d.background_mom;
    (0..p.q_rr.len())
        .map(|i| {
            let lj = 0.5 * p.h_rr.v[i].ln_1p() + 0.5 * k * p.h_ff.v[i].ln_1p();
            let fr = (p.h_rr.v[i].ln_1p() - lj).exp_m1();
            let ff = (p.h_ff.v[i].ln_1p() - lj).exp_m1();
            let base = bm.lam_rr[i] + k * bm.lam_ff[i] + (k + 1.0) * k;
            base + bm.lam_rr[i] * fr + k * bm.lam_ff[i] * ff + p.q_rr[i] * (1.0 + fr) + k * p.q_ff[i] * (1.0 + ff)
        })
        .collect()
}

/// 2 int_{B_R} (tr_g pi/dV_g + n(n-1)) dV_g0.
pub fn trace_correction(d: &InitialDataSet, radius: f64) -> Result<f64> {
    let i = d.chart().index_of(radius)?;
    let p = d.perturbation();
    Ok(2.0 * d.background_g.integrate_ball_index(&trace_excess(d, &p), i))
}

/// Terms of the truncated mass at each evaluation radius, without any checks.
pub fn partial_sums(d: &InitialDataSet) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = d.chart();
    let k = d.n() as f64 - 1.0;
    let p = d.perturbation();
    let g0 = &d.background_g;
    let vex = volume_excess(&p, k);
    let tex = trace_excess(d, &p);
    let radii = c.evaluation_radii().to_vec();
    let mut adm = Vec::new();
    let mut rv = Vec::new();
    let mut tr = Vec::new();
    let mut sums = Vec::new();
    for &i in c.evaluation_indices() {
        let m = adm_from_perturbation(g0, &p, i);
        let v = 2.0 * k * g0.integrate_ball_index(&vex, i);
        let t = 2.0 * g0.integrate_ball_index(&tex, i);
        adm.push(m);
        rv.push(v);
        tr.push(t);
        sums.push(m + v + t);
    }
    (radii, adm, rv, tr, sums)
}

/// Values below this in the tail window count as zero for the decay check.
const DECAY_FLOOR: f64 = 1e-12;
/// Pointwise roundoff level of Phi_0; L1 growth below this times the volume is ignored.
const PHI_NOISE: f64 = 1e-12;

/// Decay rate of f over |r| in [R_max/2, R_max], or None when f is negligible there.
/// Falls back to the envelope of |f| on the two window halves when f changes sign.
pub fn tail_decay_rate(chart: &RadialChart, f: &[f64]) -> Result<Option<f64>> {
    let (lo, hi) = (0.5 * chart.r_max(), chart.r_max());
    let in_window = |r: f64| r.abs() >= lo && r.abs() <= hi;
    let sup = chart
        .nodes()
        .iter()
        .zip(f)
        .filter(|(r, _)| in_window(**r))
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    if sup < DECAY_FLOOR {
        return Ok(None);
    }
    match decay_rate_estimate(chart, f, (lo, hi)) {
        Ok(fit) => Ok(Some(fit.rate)),
        Err(_) => {
            let mid = 0.5 * (lo + hi);
            let env = |a: f64, b: f64| {
                chart
                    .nodes()
                    .iter()
                    .zip(f)
                    .filter(|(r, _)| r.abs() >= a && r.abs() <= b)
                    .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
            };
            let (e1, e2) = (env(lo, mid), env(mid, hi));
            if e2 == 0.0 {
                return Ok(Some(f64::INFINITY));
            }
            Ok(Some((e1 / e2).ln() / (mid - lo)))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateReport {
    /// (component, estimated rate) for h_rr, h_ff, q_rr, q_ff; None when negligible.
    pub rates: Vec<(&'static str, Option<f64>)>,
    pub threshold: f64,
    /// Radii and int_{B_R} |Phi_0| dV_g on the tail window.
    pub l1_radii: Vec<f64>,
    pub l1_values: Vec<f64>,
}

pub fn gate_report(d: &InitialDataSet) -> Result<GateReport> {
    let c = d.chart();
    let p = d.perturbation();
    let threshold = (d.n() as f64 - 1.0) / 2.0;
    let rates = vec![
        ("h_rr", tail_decay_rate(c, &p.h_rr.v)?),
        ("h_ff", tail_decay_rate(c, &p.h_ff.v)?),
        ("q_rr", tail_decay_rate(c, &p.q_rr)?),
        ("q_ff", tail_decay_rate(c, &p.q_ff)?),
    ];
    let phi = constraint_map(d)?;
    let abs: Vec<f64> = phi.phi0.values.iter().map(|v| v.abs()).collect();
    let mut l1_radii = Vec::new();
    let mut l1_values = Vec::new();
    for j in 0..5 {
        let r = c.r_max() * (0.5 + 0.125 * j as f64);
        let i = nearest_node(c, r);
        l1_radii.push(c.nodes()[i]);
        l1_values.push(d.g.integrate_ball_index(&abs, i));
    }
    Ok(GateReport { rates, threshold, l1_radii, l1_values })
}

fn nearest_node(c: &RadialChart, r: f64) -> usize {
    let mut best = 0;
    for (i, &x) in c.nodes().iter().enumerate() {
        if (x - r).abs() < (c.nodes()[best] - r).abs() {
            best = i;
        }
    }
    best
}

impl GateReport {
    /// The refusal message, if any hypothesis fails.
    pub fn verdict(&self, d: &InitialDataSet) -> Option<String> {
        for (name, rate) in &self.rates {
            if let Some(r) = rate {
                if !(*r > self.threshold) {
                    return Some(format!(
                        "decay rate of {name} is {r:.3}, not above (n-1)/2 = {:.1}; the mass need not be finite",
                        self.threshold
                    ));
                }
            }
        }
        // increments of int |Phi_0| dV beyond the roundoff level of Phi_0 itself
        let ones = vec![1.0; d.chart().len()];
        let vols: Vec<f64> = self
            .l1_radii
            .iter()
            .map(|&r| d.g.integrate_ball_index(&ones, nearest_node(d.chart(), r)))
            .collect();
        let incs: Vec<f64> = (1..self.l1_values.len())
            .map(|j| {
                let inc = self.l1_values[j] - self.l1_values[j - 1];
                (inc - PHI_NOISE * (vols[j] - vols[j - 1])).max(0.0)
            })
            .collect();
        if incs.iter().all(|&x| x == 0.0) {
            return None;
        }
        let shrinking = incs.windows(2).all(|w| w[1] <= w[0]) && incs[incs.len() - 1] < 0.5 * incs[0];
        if !shrinking {
            return Some(format!(
                "int |Phi_0| dV over B_R keeps growing on the tail (R = {:?}: {:?}); the constraint density is not integrable",
                self.l1_radii, self.l1_values
            ));
        }
        None
    }
}

pub fn check_hypotheses(d: &InitialDataSet) -> Result<GateReport> {
    let rep = gate_report(d)?;
    match rep.verdict(d) {
        Some(msg) => Err(Error::Gate(msg)),
        None => Ok(rep),
    }
}

/// Least-squares fit of m_inf + c exp(-sigma R). Returns (m_inf, c, sigma, rms).
pub fn exponential_fit(radii: &[f64], values: &[f64]) -> Option<(f64, f64, f64, f64)> {
    if radii.len() < 4 {
        return None;
    }
    let lin = |sigma: f64| {
        // normal equations for (m, c) with basis (1, e^{-sigma (R - R0)})
        let r0 = radii[0];
        let e: Vec<f64> = radii.iter().map(|r| (-sigma * (r - r0)).exp()).collect();
        let k = radii.len() as f64;
        let (se, see) = (e.iter().sum::<f64>(), e.iter().map(|x| x * x).sum::<f64>());
        let sy = values.iter().sum::<f64>();
        let sey = e.iter().zip(values).map(|(a, b)| a * b).sum::<f64>();
        let det = k * see - se * se;
        if det.abs() < 1e-300 {
            return None;
        }
        let m = (see * sy - se * sey) / det;
        let c = (k * sey - se * sy) / det;
        let rss: f64 = e.iter().zip(values).map(|(x, y)| (m + c * x - y).powi(2)).sum();
        Some((m, c * (sigma * r0).exp(), rss))
    };
    let (lo, hi) = (0.02f64, 20.0f64);
    let steps = 200;
    let mut best = (f64::INFINITY, lo);
    for j in 0..=steps {
        let s = lo * (hi / lo).powf(j as f64 / steps as f64);
        if let Some((_, _, rss)) = lin(s) {
            if rss < best.0 {
                best = (rss, s);
            }
        }
    }
    if !best.0.is_finite() {
        return None;
    }
    // golden section on log sigma around the best grid point
    let ratio = (hi / lo).powf(1.0 / steps as f64);
    let (mut a, mut b) = ((best.1 / ratio).ln(), (best.1 * ratio).ln());
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let f = |x: f64| lin(x.exp()).map_or(f64::INFINITY, |v| v.2);
    for _ in 0..80 {
        let x1 = b - gr * (b - a);
        let x2 = a + gr * (b - a);
        if f(x1) < f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let sigma = (0.5 * (a + b)).exp();
    let (m, c, rss) = lin(sigma)?;
    if sigma <= lo * 1.0001 || sigma >= hi / 1.0001 {
        return None;
    }
    Some((m, c, sigma, (rss / radii.len() as f64).sqrt()))
}

fn extract_limit(radii: &[f64], sums: &[f64], how: Extrapolation) -> (f64, f64, f64, LimitMethod) {
    let last = *sums.last().unwrap();
    let inc = if sums.len() > 1 { (last - sums[sums.len() - 2]).abs() } else { f64::NAN };
    let fallback = (last, f64::NAN, inc, LimitMethod::LastValue);
    if how == Extrapolation::LastValue {
        return fallback;
    }
    let spread = sums.iter().fold(0.0f64, |m, v| m.max((v - last).abs()));
    if spread <= 1e-13 * last.abs().max(1e-300) || spread == 0.0 {
        return (last, f64::NAN, 0.0, LimitMethod::LastValue);
    }
    match exponential_fit(radii, sums) {
        // an extrapolation far beyond the observed tail is not trusted
        Some((m, _, sigma, rms)) if (m - last).abs() <= 10.0 * inc.max(rms) => (m, sigma, rms, LimitMethod::ExponentialFit),
        _ => fallback,
    }
}

/// Volume-renormalized mass with per-radius terms and an extrapolated limit.
pub fn vr_mass(d: &InitialDataSet, policy: MassPolicy) -> Result<MassReport> {
    if d.chart().evaluation_indices().is_empty() {
        return Err(Error::Precondition("chart has no evaluation radii".into()));
    }
    if policy.gate == GateMode::Enforce {
        check_hypotheses(d)?;
    }
    let (radii, adm, rv, tr, sums) = partial_sums(d);
    let (limit, sigma, fit_residual, method) = extract_limit(&radii, &sums, policy.extrapolation);
    Ok(MassReport {
        radii,
        adm_terms: adm,
        rv_terms: rv,
        trace_terms: tr,
        partial_sums: sums,
        limit,
        sigma,
        fit_residual,
        method,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConformalMass {
    pub radius: f64,
    /// Truncated mass of gamma itself at the same radius.
    pub base: f64,
    /// 2(n-1) int (phi^{2n/(n-2)} - 1) dV_g0
    pub volume_term: f64,
    /// -(4(n-1)/(n-2)) int Lap phi dV_g0
    pub laplacian_term: f64,
    /// Same Laplacian term from the boundary flux of grad phi.
    pub laplacian_flux: f64,
    pub value: f64,
}

/// m_VR(phi^{4/(n-2)} gamma) from m_VR(gamma) and the closed-form correction,
/// truncated at `radius`. Takes `excess` = phi - 1, which far out is below the
/// resolution of phi itself.
pub fn conformal_mass(gamma: &WarpedMetric, excess: &Profile, radius: f64) -> Result<ConformalMass> {
    let phi = excess;
    if phi.v.iter().any(|&v| !(v > -1.0)) {
        return Err(Error::Precondition("conformal factor must be positive".into()));
    }
    let c = gamma.chart.clone();
    let i = c.index_of(radius)?;
    let n = gamma.n() as f64;
    let g0 = WarpedMetric::reference(c.clone(), gamma.fiber)?;
    let base_data = InitialDataSet::with_milne_background(
        gamma.clone(),
        crate::constraints::MomentumField::milne(c.clone(), gamma.fiber),
    )?;
    let (radii, _, _, _, sums) = partial_sums(&base_data);
    let j = radii.iter().position(|&r| c.index_of(r).ok() == Some(i));
    let base = match j {
        Some(j) => sums[j],
        None => {
            let p = base_data.perturbation();
            let k = n - 1.0;
            adm_from_perturbation(&g0, &p, i) + 2.0 * k * g0.integrate_ball_index(&volume_excess(&p, k), i)
        }
    };
    let e = 2.0 * n / (n - 2.0);
    let vol: Vec<f64> = phi.v.iter().map(|p| (e * p.ln_1p()).exp_m1()).collect();
    let mut lap = vec![0.0; c.len()];
    for (idx, l) in lap.iter_mut().enumerate() {
        let (a, a1) = (g0.a.v[idx], g0.a.d1[idx]);
        let b = g0.b.v[idx];
        let coef = if b == 0.0 { 0.0 } else { (n - 1.0) * g0.b.d1[idx] / (a * a * b) - a1 / (a * a * a) };
        *l = phi.d2[idx] / (a * a) + coef * phi.d1[idx];
    }
    if c.inner_mode() == InnerMode::RegularCenter {
        // Lap phi = n phi'' at the center for even phi
        lap[0] = n * phi.d2[0] / (g0.a.v[0] * g0.a.v[0]);
    }
    let cl = 4.0 * (n - 1.0) / (n - 2.0);
    let volume_term = 2.0 * (n - 1.0) * g0.integrate_ball_index(&vol, i);
    let laplacian_term = -cl * g0.integrate_ball_index(&lap, i);
    let grad: Vec<f64> = (0..c.len()).map(|j| phi.d1[j] / g0.a.v[j]).collect();
    let laplacian_flux = -cl * crate::constraints::flux(&g0, &grad, i);
    Ok(ConformalMass {
        radius: c.nodes()[i],
        base,
        volume_term,
        laplacian_term,
        laplacian_flux,
        value: base + volume_term + laplacian_term,
    })
}

/// 2 int_{dB_R} (H_g0 - H_g) dS_g0 + 2(n-1) RV(g, R), mean curvatures by centered differences.
pub fn quasilocal_mass(g: &WarpedMetric, g0: &WarpedMetric, radius: f64) -> Result<f64> {
    check_pair(g, g0)?;
    let i = g.chart.index_of(radius)?;
    let k = g.fiber.dim as i32;
    let mut surf = 0.0;
    for (j, s) in g.chart.ball_ends(i) {
        let dh = g0.mean_curvature_at(j, s)? - g.mean_curvature_at(j, s)?;
        surf += 2.0 * g0.fiber.total_volume * g0.b.v[j].powi(k) * dh;
    }
    Ok(surf + 2.0 * (g.n() as f64 - 1.0) * renormalized_volume(g, g0, radius)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Equivalence {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Relative boundary mismatch above which the equivalence test is refused.
pub const BOUNDARY_MATCH_TOL: f64 = 1e-10;

/// lhs = 2 int (H_g0 - H_g) dS, rhs = boundary ADM term, for g = g0 on dB_R.
pub fn mean_curvature_mass_equivalence(g: &WarpedMetric, g0: &WarpedMetric, radius: f64) -> Result<Equivalence> {
    check_pair(g, g0)?;
    let i = g.chart.index_of(radius)?;
    for (j, _) in g.chart.ball_ends(i) {
        let da = (g.a.v[j] - g0.a.v[j]).abs() / g0.a.v[j];
        let db = (g.b.v[j] - g0.b.v[j]).abs() / g0.b.v[j];
        if da > BOUNDARY_MATCH_TOL || db > BOUNDARY_MATCH_TOL {
            return Err(Error::Precondition(format!(
                "metrics differ on the boundary sphere at r = {} (relative {:.2e}, {:.2e})",
                g.chart.nodes()[j],
                da,
                db
            )));
        }
    }
    let (lhs, rhs) = mean_curvature_terms(g, g0, i)?;
    Ok(Equivalence { lhs, rhs, gap: (lhs - rhs).abs() })
}

/// Both sides of the equivalence at node i without the boundary-match check.
pub fn mean_curvature_terms(g: &WarpedMetric, g0: &WarpedMetric, i: usize) -> Result<(f64, f64)> {
    let k = g.fiber.dim as i32;
    let mut lhs = 0.0;
    for (j, s) in g.chart.ball_ends(i) {
        let dh = g0.mean_curvature_at(j, s)? - g.mean_curvature_at(j, s)?;
        lhs += 2.0 * g0.fiber.total_volume * g0.b.v[j].powi(k) * dh;
    }
    let r = g.chart.nodes()[i];
    Ok((lhs, adm_boundary_term_difference_form(g, g0, r)?))
}
