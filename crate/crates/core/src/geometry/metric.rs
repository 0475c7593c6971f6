use std::sync::Arc;

use super::chart::{InnerMode, RadialChart};
use super::profile::{Parity, Profile};
use crate::error::{Error, Result};

/// Closed constant-curvature fiber (unit scale).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberSpec {
    /// Fiber dimension n - 1.
    pub dim: usize,
    /// Scalar curvature of the unit-scale fiber metric.
    pub einstein_constant: f64,
    pub total_volume: f64,
}

impl FiberSpec {
    /// Unit round sphere S^dim.
    pub fn unit_sphere(dim: usize) -> Self {
        FiberSpec {
            dim,
            einstein_constant: (dim * (dim - 1)) as f64,
            total_volume: sphere_area(dim),
        }
    }

    /// Closed hyperbolic manifold of sectional curvature -1 with the given volume.
    pub fn hyperbolic(dim: usize, volume: f64) -> Self {
        FiberSpec {
            dim,
            einstein_constant: -((dim * (dim - 1)) as f64),
            total_volume: volume,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Metric(format!("fiber dimension {} < 2", self.dim)));
        }
        if !(self.total_volume > 0.0) || !self.total_volume.is_finite() {
            return Err(Error::Metric("fiber volume must be positive".into()));
        }
        if !self.einstein_constant.is_finite() {
            return Err(Error::Metric("fiber curvature must be finite".into()));
        }
        Ok(())
    }

    /// Manifold dimension n.
    pub fn n(&self) -> usize {
        self.dim + 1
    }

    /// Sectional curvature of the fiber.
    pub fn sectional(&self) -> f64 {
        self.einstein_constant / (self.dim * (self.dim - 1)) as f64
    }

    /// Einstein constant of the fiber Ricci tensor, Ric = rho * g.
    pub fn ricci_constant(&self) -> f64 {
        self.einstein_constant / self.dim as f64
    }

    /// Which hyperbolic reference warping this fiber admits.
    pub fn reference_kind(&self) -> Result<ReferenceKind> {
        self.validate()?;
        let k = self.sectional();
        if (k - 1.0).abs() < 1e-12 {
            Ok(ReferenceKind::Sinh)
        } else if (k + 1.0).abs() < 1e-12 {
            Ok(ReferenceKind::Cosh)
        } else {
            Err(Error::Metric(format!(
                "fiber sectional curvature {k} admits no hyperbolic reference (need +1 or -1)"
            )))
        }
    }
}

/// Area of the unit sphere S^d.
pub fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 1.0) * sphere_area(d - 2),
    }
}

/// Hyperbolic metric dr^2 + b(r)^2 g_fiber: b = sinh r over a round sphere,
/// b = cosh r over a hyperbolic fiber.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    Sinh,
    Cosh,
}

impl ReferenceKind {
    pub fn b(&self, r: f64) -> [f64; 3] {
        match self {
            ReferenceKind::Sinh => [r.sinh(), r.cosh(), r.sinh()],
            ReferenceKind::Cosh => [r.cosh(), r.sinh(), r.cosh()],
        }
    }

    /// b'/b.
    pub fn log_derivative(&self, r: f64) -> f64 {
        match self {
            ReferenceKind::Sinh => 1.0 / r.tanh(),
            ReferenceKind::Cosh => r.tanh(),
        }
    }
}

/// Scalar field on the grid. `density_weight` 1 marks a density stored divided by dV_g.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialField {
    pub chart: Arc<RadialChart>,
    pub values: Vec<f64>,
    pub density_weight: u8,
}

impl RadialField {
    pub fn new(chart: Arc<RadialChart>, values: Vec<f64>, density_weight: u8) -> Result<Self> {
        if values.len() != chart.len() {
            return Err(Error::Precondition(format!(
                "field has {} values for {} nodes",
                values.len(),
                chart.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("non-finite value at node {i}")));
        }
        Ok(RadialField { chart, values, density_weight })
    }

    pub fn function(chart: Arc<RadialChart>, values: Vec<f64>) -> Result<Self> {
        Self::new(chart, values, 0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn same_chart(a: &Arc<RadialChart>, b: &Arc<RadialChart>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// g = a(r)^2 dr^2 + b(r)^2 g_fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedMetric {
    pub chart: Arc<RadialChart>,
    pub fiber: FiberSpec,
    pub a: Profile,
    pub b: Profile,
}

impl WarpedMetric {
    pub fn new(chart: Arc<RadialChart>, fiber: FiberSpec, a: Profile, b: Profile) -> Result<Self> {
        fiber.validate()?;
        let n = chart.len();
        if a.len() != n || b.len() != n {
            return Err(Error::Metric("profile length does not match chart".into()));
        }
        for i in 0..n {
            let r = chart.nodes()[i];
            if !(a.v[i] > 0.0) || !a.v[i].is_finite() {
                return Err(Error::Metric(format!("a must be positive, a({r}) = {}", a.v[i])));
            }
            let center = i == 0 && chart.inner_mode() == InnerMode::RegularCenter;
            if center {
                if b.v[0].abs() > 1e-12 {
                    return Err(Error::Metric("b must vanish at a regular center".into()));
                }
                if (b.d1[0] / a.v[0] - 1.0).abs() > 1e-2 {
                    return Err(Error::Metric("b'/a must equal 1 at a regular center".into()));
                }
            } else if !(b.v[i] > 0.0) || !b.v[i].is_finite() {
                return Err(Error::Singular { r });
            }
        }
        Ok(WarpedMetric { chart, fiber, a, b })
    }

    /// Sampled a, b with parity ghosts at a regular center.
    pub fn from_samples(
        chart: Arc<RadialChart>,
        fiber: FiberSpec,
        a: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        let (pa, pb) = match chart.inner_mode() {
            InnerMode::RegularCenter => (Parity::Even, Parity::Odd),
            _ => (Parity::None, Parity::None),
        };
        let a = Profile::from_samples(&chart, a, pa);
        let b = Profile::from_samples(&chart, b, pb);
        Self::new(chart, fiber, a, b)
    }

    /// The hyperbolic reference metric for this fiber.
    pub fn reference(chart: Arc<RadialChart>, fiber: FiberSpec) -> Result<Self> {
        let kind = fiber.reference_kind()?;
        match (kind, chart.inner_mode()) {
            (ReferenceKind::Sinh, InnerMode::TwoEnded) => {
                return Err(Error::Metric("a spherical fiber has no two-ended hyperbolic reference".into()))
            }
            (ReferenceKind::Cosh, InnerMode::RegularCenter) => {
                return Err(Error::Metric("a hyperbolic fiber cannot close off at a regular center".into()))
            }
            _ => {}
        }
        let a = Profile::constant(chart.len(), 1.0);
        let b = Profile::from_fn(&chart, |r| kind.b(r));
        Self::new(chart, fiber, a, b)
    }

    /// a = a_ref * A, b = b_ref * B.
    pub fn relative_to(reference: &WarpedMetric, factor_a: &Profile, factor_b: &Profile) -> Result<Self> {
        Self::new(
            reference.chart.clone(),
            reference.fiber,
            reference.a.mul(factor_a),
            reference.b.mul(factor_b),
        )
    }

    /// phi^{4/(n-2)} g.
    pub fn conformal(&self, phi: &Profile) -> Result<Self> {
        let w = phi.powf(2.0 / (self.n() as f64 - 2.0));
        Self::relative_to(self, &w, &w)
    }

    pub fn n(&self) -> usize {
        self.fiber.n()
    }

    fn is_center(&self, i: usize) -> bool {
        i == 0 && self.chart.inner_mode() == InnerMode::RegularCenter
    }

    /// b_s = b'/a and b_ss = b''/a^2 - a'b'/a^3, derivatives along the unit normal.
    pub fn normal_derivatives(&self, i: usize) -> (f64, f64) {
        let (a, a1) = (self.a.v[i], self.a.d1[i]);
        let (b1, b2) = (self.b.d1[i], self.b.d2[i]);
        (b1 / a, b2 / (a * a) - a1 * b1 / (a * a * a))
    }

    fn nonsingular(&self) -> Result<()> {
        for i in 0..self.chart.len() {
            if !self.is_center(i) && !(self.b.v[i] > 0.0) {
                return Err(Error::Singular { r: self.chart.nodes()[i] });
            }
        }
        Ok(())
    }

    /// Mixed Ricci components (radial, fiber).
    pub fn mixed_ricci(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.nonsingular()?;
        let n = self.n() as f64;
        let rho = self.fiber.ricci_constant();
        let len = self.chart.len();
        let mut rr = vec![0.0; len];
        let mut ff = vec![0.0; len];
        for i in 0..len {
            if self.is_center(i) {
                continue;
            }
            let b = self.b.v[i];
            let (bs, bss) = self.normal_derivatives(i);
            rr[i] = -(n - 1.0) * bss / b;
            ff[i] = (rho - (n - 2.0) * bs * bs) / (b * b) - bss / b;
        }
        self.fill_center(&mut rr);
        self.fill_center(&mut ff);
        Ok((rr, ff))
    }

    pub fn scalar_curvature(&self) -> Result<RadialField> {
        self.nonsingular()?;
        let n = self.n() as f64;
        let kappa = self.fiber.einstein_constant;
        let len = self.chart.len();
        let mut s = vec![0.0; len];
        for (i, out) in s.iter_mut().enumerate() {
            if self.is_center(i) {
                continue;
            }
            let b = self.b.v[i];
            let (bs, bss) = self.normal_derivatives(i);
            *out = kappa / (b * b) - 2.0 * (n - 1.0) * bss / b - (n - 1.0) * (n - 2.0) * bs * bs / (b * b);
        }
        self.fill_center(&mut s);
        RadialField::function(self.chart.clone(), s)
    }

    /// Replace the value at a regular center by even extrapolation from nodes 1 and 2.
    pub fn fill_center(&self, v: &mut [f64]) {
        if self.chart.inner_mode() == InnerMode::RegularCenter {
            v[0] = (4.0 * v[1] - v[2]) / 3.0;
        }
    }

    /// a * b^{n-1} at every node; dV_g = omega * this * dr.
    pub fn volume_density(&self) -> Vec<f64> {
        let k = self.fiber.dim as i32;
        self.a.v.iter().zip(&self.b.v).map(|(a, b)| a * b.powi(k)).collect()
    }

    /// Mean curvature of the level sphere through node i with outward orientation
    /// `sign` along r; b' by centered differences of the samples.
    pub fn mean_curvature_at(&self, i: usize, sign: f64) -> Result<f64> {
        let last = self.chart.len() - 1;
        if i == 0 || i >= last {
            return Err(Error::Precondition(format!(
                "no centered stencil at node {i} (grid endpoint)"
            )));
        }
        let db = (self.b.v[i + 1] - self.b.v[i - 1]) / (2.0 * self.chart.hx() * self.chart.rx()[i]);
        Ok(sign * (self.n() as f64 - 1.0) * db / (self.a.v[i] * self.b.v[i]))
    }

    /// H of the sphere r = R with normal pointing to larger r.
    pub fn boundary_mean_curvature(&self, radius: f64) -> Result<f64> {
        let i = self.chart.index_of(radius)?;
        self.mean_curvature_at(i, 1.0)
    }

    /// Integral of f dV_g over B_R.
    pub fn integrate_ball(&self, f: &[f64], radius: f64) -> Result<f64> {
        let i = self.chart.index_of(radius)?;
        Ok(self.integrate_ball_index(f, i))
    }

    pub fn integrate_ball_index(&self, f: &[f64], i_r: usize) -> f64 {
        let (lo, hi) = self.chart.ball_range(i_r);
        let dv = self.volume_density();
        let g: Vec<f64> = f.iter().zip(&dv).map(|(x, w)| x * w).collect();
        self.fiber.total_volume * self.chart.integrate(&g, lo, hi)
    }
}

pub fn integrate_ball(f: &RadialField, g: &WarpedMetric, radius: f64) -> Result<f64> {
    if !same_chart(&f.chart, &g.chart) {
        return Err(Error::Precondition("field and metric live on different charts".into()));
    }
    g.integrate_ball(&f.values, radius)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    /// Root-mean-square residual of the log fit.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares slope of -log|f| against |r| over nodes with |r| in the window.
pub fn decay_rate_estimate(chart: &RadialChart, f: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sign = [0.0f64; 2];
    for (i, &r) in chart.nodes().iter().enumerate() {
        let x = r.abs();
        if x < lo || x > hi {
            continue;
        }
        let v = f[i];
        if v == 0.0 || !v.is_finite() {
            return Err(Error::Decay(format!("zero or non-finite value at r = {r}")));
        }
        let side = usize::from(r < 0.0);
        if sign[side] == 0.0 {
            sign[side] = v.signum();
        } else if sign[side] != v.signum() {
            return Err(Error::Decay(format!("sign change in window near r = {r}")));
        }
        xs.push(x);
        ys.push(v.abs().ln());
    }
    if xs.len() < 3 {
        return Err(Error::Decay("fewer than three samples in window".into()));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let res = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>();
    Ok(DecayFit {
        rate: -slope,
        residual: (res / k).sqrt(),
        samples: xs.len(),
    })
}
