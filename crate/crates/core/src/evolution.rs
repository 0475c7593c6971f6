//! CMC evolution of rescaled Milne-like data with zero shift.
//!
//! Physical slices carry g_phys = t^2 g and mixed second fundamental form
//! K = (K0 - id)/t. The state stores a = a0 e^alpha, b = b0 e^beta and the
//! mixed K0 components, so the Milne solution is represented by exact zeros.
//! With s = ln t the system reads
//!   d alpha/ds = u - (1 + u) K0_rr,
//!   d K0_rr/ds = K0_rr + u - Hess(u)_rr + (1 + u)(rho_rr - tr K0 - n K0_rr + tr K0 K0_rr),
//! and likewise for (beta, K0_ff), where u = N - 1 solves the lapse equation
//! and rho = Ric + (n-1) id, taken as Ric(g) - Ric(g0).

use std::sync::Arc;

use crate::constraints::{constraint_map, InitialDataSet, Perturbation};
use crate::error::{Error, Result};
use crate::geometry::{FiberSpec, InnerMode, Parity, Profile, RadialChart, RadialField, WarpedMetric};
use crate::mass::{fmt, vr_mass, MassPolicy};
use crate::reduced::{elliptic_parity, k0_components, lapse_excess_from, reconstruct_data, solve_lichnerowicz, NewtonOptions, ReducedPoint};

#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub t: f64,
    pub reference: WarpedMetric,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub k0_rr: Vec<f64>,
    pub k0_ff: Vec<f64>,
    /// N - 1.
    pub lapse_excess: Vec<f64>,
}

/// One-sided stencils at the excision sphere: K0 has a gradient there, so the
/// metric does not keep a zero normal derivative.
fn metric_parity(_chart: &RadialChart) -> Parity {
    Parity::None
}

fn check_chart(chart: &RadialChart) -> Result<()> {
    if chart.inner_mode() == InnerMode::RegularCenter {
        return Err(Error::Precondition("evolution needs an excision sphere or a two-ended chart".into()));
    }
    Ok(())
}

impl EvolutionState {
    pub fn n(&self) -> usize {
        self.reference.n()
    }

    pub fn chart(&self) -> &Arc<RadialChart> {
        &self.reference.chart
    }

    /// Mean curvature of the physical slice.
    pub fn tau(&self) -> f64 {
        -(self.n() as f64) / self.t
    }

    fn exp_profile(&self, x: &[f64]) -> Profile {
        Profile::from_samples(self.chart(), x.to_vec(), metric_parity(self.chart())).exp()
    }

    /// Rescaled slice metric g.
    pub fn metric(&self) -> Result<WarpedMetric> {
        WarpedMetric::relative_to(&self.reference, &self.exp_profile(&self.alpha), &self.exp_profile(&self.beta))
    }

    pub fn lapse(&self) -> Result<RadialField> {
        RadialField::function(self.chart().clone(), self.lapse_excess.iter().map(|u| 1.0 + u).collect())
    }

    /// Mixed components (radial, fiber) of the physical second fundamental form.
    pub fn second_fundamental_form(&self) -> (Vec<f64>, Vec<f64>) {
        let f = |k: &[f64]| k.iter().map(|x| (x - 1.0) / self.t).collect();
        (f(&self.k0_rr), f(&self.k0_ff))
    }

    /// |K0|^2_g at each node.
    pub fn k0_norm_sq(&self) -> Vec<f64> {
        let k = self.n() as f64 - 1.0;
        self.k0_rr.iter().zip(&self.k0_ff).map(|(r, f)| r * r + k * f * f).collect()
    }

    /// tr_g K - tau of the physical slice, sup norm.
    pub fn cmc_drift(&self) -> f64 {
        let k = self.n() as f64 - 1.0;
        let s = self.k0_rr.iter().zip(&self.k0_ff).fold(0.0f64, |m, (r, f)| m.max((r + k * f).abs()));
        s / self.t
    }

    /// Rescaled data (g, pi) on the Milne background, pi/dV_g = (tr k) id - k, k = K0 - id.
    pub fn data(&self) -> Result<InitialDataSet> {
        let k = self.n() as f64 - 1.0;
        let parity = metric_parity(self.chart());
        let h = |x: &[f64]| {
            Profile::from_samples(self.chart(), x.to_vec(), parity)
                .compose(|v| [(2.0 * v).exp_m1(), 2.0 * (2.0 * v).exp(), 4.0 * (2.0 * v).exp()])
        };
        let len = self.alpha.len();
        let mut q_rr = vec![0.0; len];
        let mut q_ff = vec![0.0; len];
        for i in 0..len {
            let (al, be) = (self.alpha[i], self.beta[i]);
            let tr = self.k0_rr[i] + k * self.k0_ff[i];
            // J / x_rr^2 and J / x_ff^2 with J = e^{alpha + (n-1) beta}
            let er = k * be - al;
            let ef = al + (k - 2.0) * be;
            q_rr[i] = -k * er.exp_m1() + (tr - self.k0_rr[i]) * er.exp();
            q_ff[i] = -k * ef.exp_m1() + (tr - self.k0_ff[i]) * ef.exp();
        }
        let bg = InitialDataSet::milne(self.chart().clone(), self.reference.fiber)?;
        Perturbation { h_rr: h(&self.alpha), h_ff: h(&self.beta), q_rr, q_ff }.apply(&bg.background_g, &bg.background_mom)
    }
}

/// Milne data at t0: g = g0, K = -g_phys / t0, N = 1.
pub fn init_milne(chart: Arc<RadialChart>, fiber: FiberSpec, t0: f64) -> Result<EvolutionState> {
    check_chart(&chart)?;
    if !(t0 > 0.0) {
        return Err(Error::Precondition(format!("t0 must be positive, got {t0}")));
    }
    let reference = WarpedMetric::reference(chart.clone(), fiber)?;
    let z = vec![0.0; chart.len()];
    Ok(EvolutionState {
        t: t0,
        reference,
        alpha: z.clone(),
        beta: z.clone(),
        k0_rr: z.clone(),
        k0_ff: z.clone(),
        lapse_excess: z,
    })
}

/// Data reconstructed from a reduced point; gamma must be the reference metric
/// or carry its excess.
pub fn init_perturbed(point: &ReducedPoint, t0: f64) -> Result<EvolutionState> {
    let phi = solve_lichnerowicz(point, NewtonOptions::default())?;
    let d = reconstruct_data(point, &phi)?;
    init_from_data(&d, t0)
}

/// State from rescaled data over the Milne background of its chart.
pub fn init_from_data(d: &InitialDataSet, t0: f64) -> Result<EvolutionState> {
    let mut s = init_milne(d.chart().clone(), d.g.fiber, t0)?;
    let p = d.perturbation();
    s.alpha = p.h_rr.v.iter().map(|h| 0.5 * h.ln_1p()).collect();
    s.beta = p.h_ff.v.iter().map(|h| 0.5 * h.ln_1p()).collect();
    let (r, f) = k0_components(d);
    s.k0_rr = r;
    s.k0_ff = f;
    s.lapse_excess = lapse_excess_from(&s.metric()?, &s.k0_rr, &s.k0_ff)?;
    Ok(s)
}

struct Rates {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    k0_rr: Vec<f64>,
    k0_ff: Vec<f64>,
}

fn pinned(chart: &RadialChart, i: usize) -> bool {
    i + 1 == chart.len() || (i == 0 && chart.inner_mode() == InnerMode::TwoEnded)
}

/// d/dt of the state variables; also returns the lapse excess it solved for.
fn rates(s: &EvolutionState) -> Result<(Rates, Vec<f64>)> {
    let g = s.metric()?;
    let chart = s.chart().clone();
    let n = s.n() as f64;
    let k = n - 1.0;
    let u = lapse_excess_from(&g, &s.k0_rr, &s.k0_ff)?;
    let up = Profile::from_samples(&chart, u.clone(), elliptic_parity(&chart));
    let (ric_rr, ric_ff) = g.mixed_ricci()?;
    // Ric(g0) = -(n-1) id exactly; subtracting its discrete value keeps Milne at exact zeros
    let (ric0_rr, ric0_ff) = s.reference.mixed_ricci()?;
    let len = chart.len();
    let mut out = Rates { alpha: vec![0.0; len], beta: vec![0.0; len], k0_rr: vec![0.0; len], k0_ff: vec![0.0; len] };
    for i in 0..len {
        let (a, a1) = (g.a.v[i], g.a.d1[i]);
        let (b, b1) = (g.b.v[i], g.b.d1[i]);
        let hess_rr = (up.d2[i] - a1 / a * up.d1[i]) / (a * a);
        let hess_ff = b1 * up.d1[i] / (a * a * b);
        let (kr, kf) = (s.k0_rr[i], s.k0_ff[i]);
        let tr = kr + k * kf;
        let nl = 1.0 + u[i];
        let rho_rr = ric_rr[i] - ric0_rr[i];
        let rho_ff = ric_ff[i] - ric0_ff[i];
        if !pinned(&chart, i) {
            out.alpha[i] = u[i] - nl * kr;
            out.beta[i] = u[i] - nl * kf;
        }
        out.k0_rr[i] = kr + u[i] - hess_rr + nl * (rho_rr - tr - n * kr + tr * kr);
        out.k0_ff[i] = kf + u[i] - hess_ff + nl * (rho_ff - tr - n * kf + tr * kf);
    }
    let inv_t = 1.0 / s.t;
    for v in [&mut out.alpha, &mut out.beta, &mut out.k0_rr, &mut out.k0_ff] {
        v.iter_mut().for_each(|x| *x *= inv_t);
    }
    Ok((out, u))
}

fn advanced(s: &EvolutionState, r: &Rates, dt: f64) -> EvolutionState {
    let add = |x: &[f64], d: &[f64]| x.iter().zip(d).map(|(a, b)| a + dt * b).collect();
    EvolutionState {
        t: s.t + dt,
        reference: s.reference.clone(),
        alpha: add(&s.alpha, &r.alpha),
        beta: add(&s.beta, &r.beta),
        k0_rr: add(&s.k0_rr, &r.k0_rr),
        k0_ff: add(&s.k0_ff, &r.k0_ff),
        lapse_excess: s.lapse_excess.clone(),
    }
}

/// Largest stable step: characteristic speed N/(a t) against the smallest cell.
pub fn cfl_limit(s: &EvolutionState) -> Result<f64> {
    let g = s.metric()?;
    let c = s.chart();
    let mut lim = f64::INFINITY;
    for i in 0..c.len() {
        let dr = c.hx() * c.rx()[i];
        let speed = (1.0 + s.lapse_excess[i]) / (g.a.v[i] * s.t);
        lim = lim.min(dr / speed);
    }
    Ok(lim)
}

/// One classical Runge-Kutta step with the lapse re-solved at every stage.
pub fn step(s: &EvolutionState, dt: f64) -> Result<EvolutionState> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("time step must be positive, got {dt}")));
    }
    let cfl = cfl_limit(s)?;
    if dt > cfl {
        return Err(Error::Precondition(format!("time step {dt} exceeds the CFL bound {cfl}")));
    }
    let (k1, _) = rates(s)?;
    let (k2, _) = rates(&advanced(s, &k1, 0.5 * dt))?;
    let (k3, _) = rates(&advanced(s, &k2, 0.5 * dt))?;
    let (k4, _) = rates(&advanced(s, &k3, dt))?;
    let comb = |f: fn(&Rates) -> &Vec<f64>| -> Vec<f64> {
        (0..f(&k1).len()).map(|i| (f(&k1)[i] + 2.0 * f(&k2)[i] + 2.0 * f(&k3)[i] + f(&k4)[i]) / 6.0).collect()
    };
    let total = Rates { alpha: comb(|r| &r.alpha), beta: comb(|r| &r.beta), k0_rr: comb(|r| &r.k0_rr), k0_ff: comb(|r| &r.k0_ff) };
    let mut next = advanced(s, &total, dt);
    let g = next.metric().map_err(|e| Error::Solver(format!("slice degenerated at t = {}: {e}", next.t)))?;
    next.lapse_excess = lapse_excess_from(&g, &next.k0_rr, &next.k0_ff)?;
    Ok(next)
}

/// -2(n-1)/t times the integral of |K0|^2 N over the whole slice.
pub fn mass_rate(s: &EvolutionState) -> Result<f64> {
    let g = s.metric()?;
    let f: Vec<f64> = s.k0_norm_sq().iter().zip(&s.lapse_excess).map(|(k, u)| k * (1.0 + u)).collect();
    let last = s.chart().len() - 1;
    Ok(-2.0 * (s.n() as f64 - 1.0) / s.t * g.integrate_ball_index(&f, last))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolvePolicy {
    pub dt: f64,
    /// Keep every k-th state.
    pub record_every: usize,
    pub mass: MassPolicy,
}

impl Default for EvolvePolicy {
    fn default() -> Self {
        EvolvePolicy { dt: 1e-3, record_every: 1, mass: MassPolicy::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub t: f64,
    pub mass: f64,
    pub rate: f64,
    pub constraint_drift: f64,
    pub cmc_drift: f64,
    pub max_k0: f64,
    pub min_n: f64,
    pub max_n: f64,
    pub metric_deviation: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_state: EvolutionState,
    /// Set when the run stopped early; records up to that point are kept.
    pub error: Option<Error>,
}

fn record(s: &EvolutionState, policy: MassPolicy) -> Result<Record> {
    let d = s.data()?;
    let mass = vr_mass(&d, policy)?.limit;
    let last = s.chart().len() - 1;
    let cv = constraint_map(&d)?;
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let metric_deviation = s.alpha.iter().chain(&s.beta).fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(Record {
        t: s.t,
        mass,
        rate: mass_rate(s)?,
        constraint_drift: cv.max_abs_between(1, last - 1),
        cmc_drift: s.cmc_drift(),
        max_k0: sup(&s.k0_rr).max(sup(&s.k0_ff)),
        min_n: s.lapse_excess.iter().fold(f64::INFINITY, |m, u| m.min(1.0 + u)),
        max_n: s.lapse_excess.iter().fold(f64::NEG_INFINITY, |m, u| m.max(1.0 + u)),
        metric_deviation,
    })
}

/// Integrate from s0.t to t_end; the last step is shortened to land on t_end.
pub fn evolve(s0: &EvolutionState, t_end: f64, policy: EvolvePolicy) -> Result<Trajectory> {
    if !(t_end > s0.t) {
        return Err(Error::Precondition(format!("t_end = {t_end} must exceed t0 = {}", s0.t)));
    }
    let mut records = vec![record(s0, policy.mass)?];
    let mut s = s0.clone();
    let steps = ((t_end - s0.t) / policy.dt - 1e-9).ceil() as usize;
    for k in 1..=steps {
        let dt = if k == steps { t_end - s.t } else { policy.dt };
        let next = step(&s, dt).and_then(|n| {
            if k % policy.record_every.max(1) == 0 || k == steps {
                record(&n, policy.mass).map(|r| (n, Some(r)))
            } else {
                Ok((n, None))
            }
        });
        match next {
            Ok((n, r)) => {
                s = n;
                records.extend(r);
            }
            Err(e) => return Ok(Trajectory { records, final_state: s, error: Some(e) }),
        }
    }
    Ok(Trajectory { records, final_state: s, error: None })
}

impl Trajectory {
    /// Centered differences of the masses in t (one-sided at the ends).
    pub fn fd_rates(&self) -> Vec<f64> {
        let r = &self.records;
        let n = r.len();
        (0..n)
            .map(|i| {
                if n < 2 {
                    return f64::NAN;
                }
                let (lo, hi) = if i == 0 { (0, 1) } else if i + 1 == n { (n - 2, n - 1) } else { (i - 1, i + 1) };
                (r[hi].mass - r[lo].mass) / (r[hi].t - r[lo].t)
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "mass", "rate", "fd_rate", "constraint_drift", "max_K0", "min_N"])?;
        for (r, fd) in self.records.iter().zip(self.fd_rates()) {
            wr.write_record([fmt(r.t), fmt(r.mass), fmt(r.rate), fmt(fd), fmt(r.constraint_drift), fmt(r.max_k0), fmt(r.min_n)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Plain-text snapshot: a header block describing the chart, then one row per node.
pub fn write_snapshot<W: std::io::Write>(s: &EvolutionState, mut w: W) -> Result<()> {
    let c = s.chart();
    writeln!(w, "# t = {}", fmt(s.t))?;
    writeln!(w, "# n = {}", s.n())?;
    writeln!(w, "# inner = {:?}", c.inner_mode())?;
    writeln!(w, "# intervals = {}", c.intervals())?;
    writeln!(w, "# r_max = {}", fmt(c.r_max()))?;
    writeln!(w, "# columns: r alpha beta K0_rr K0_ff N")?;
    for i in 0..c.len() {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            fmt(c.nodes()[i]),
            fmt(s.alpha[i]),
            fmt(s.beta[i]),
            fmt(s.k0_rr[i]),
            fmt(s.k0_ff[i]),
            fmt(1.0 + s.lapse_excess[i])
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    /// Largest m(t_{i+1}) - m(t_i); non-positive for a monotone run.
    pub max_increment: f64,
    /// Discretization band the increments are compared against.
    pub epsilon_mono: f64,
    pub monotone: bool,
    /// |fd_rate - rate| / |rate| at interior records with a nonzero rate.
    pub rate_gaps: Vec<f64>,
    pub median_rate_gap: f64,
    /// K0 and every mass increment below `tol` along the whole run.
    pub milne_like: bool,
}

/// The band is the largest mass difference against a companion run at a finer
/// grid, matched at common times; without one it is zero.
pub fn monotonicity_report(traj: &Trajectory, finer: Option<&Trajectory>, tol: f64) -> Result<MonotonicityReport> {
    let r = &traj.records;
    if r.len() < 3 {
        return Err(Error::Precondition("monotonicity report needs at least three states".into()));
    }
    let max_increment = r.windows(2).map(|w| w[1].mass - w[0].mass).fold(f64::NEG_INFINITY, f64::max);
    let mut epsilon_mono: f64 = 0.0;
    if let Some(f) = finer {
        for a in r {
            if let Some(b) = f.records.iter().find(|b| (b.t - a.t).abs() < 1e-9) {
                epsilon_mono = epsilon_mono.max((a.mass - b.mass).abs());
            }
        }
    }
    let fd = traj.fd_rates();
    let mut rate_gaps: Vec<f64> = (1..r.len() - 1)
        .filter(|&i| r[i].rate != 0.0)
        .map(|i| (fd[i] - r[i].rate).abs() / r[i].rate.abs())
        .collect();
    let median_rate_gap = if rate_gaps.is_empty() {
        0.0
    } else {
        let mut s = rate_gaps.clone();
        s.sort_by(f64::total_cmp);
        s[s.len() / 2]
    };
    rate_gaps.shrink_to_fit();
    let milne_like = r.iter().all(|x| x.max_k0 < tol) && max_increment.abs() < tol && r.windows(2).all(|w| (w[1].mass - w[0].mass).abs() < tol);
    Ok(MonotonicityReport {
        max_increment,
        epsilon_mono,
        monotone: max_increment <= epsilon_mono,
        rate_gaps,
        median_rate_gap,
        milne_like,
    })
}
