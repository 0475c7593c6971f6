use crate::error::{Error, Result};

/// How the grid ends at its smallest radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerMode {
    /// r_0 = 0 with parity (a even, b odd).
    RegularCenter,
    /// Inner sphere removed at r_0 > 0.
    Excision,
    /// Symmetric grid on [-R_max, R_max] with an asymptotic end on each side.
    TwoEnded,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spacing {
    Uniform,
    /// Cells shrink geometrically towards R_max.
    Exponential { strength: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartParams {
    /// Number of cells M; the grid has M + 1 nodes.
    pub intervals: usize,
    pub r_max: f64,
    pub inner: InnerMode,
    /// Excision radius, ignored for the other modes.
    pub r0: f64,
    pub spacing: Spacing,
    pub evaluation_radii: Vec<f64>,
    /// Expected decay exponent delta and regularity order k.
    pub decay: f64,
    pub order: u32,
}

impl ChartParams {
    pub fn new(intervals: usize, r_max: f64, inner: InnerMode) -> Self {
        ChartParams {
            intervals,
            r_max,
            inner,
            r0: 1.0,
            spacing: Spacing::Uniform,
            evaluation_radii: Vec::new(),
            decay: 2.0,
            order: 2,
        }
    }

    pub fn with_r0(mut self, r0: f64) -> Self {
        self.r0 = r0;
        self
    }

    pub fn with_radii(mut self, radii: &[f64]) -> Self {
        self.evaluation_radii = radii.to_vec();
        self
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }
}

/// Radial grid. Nodes are the image of a uniform grid x_i = i/M under a map r(x);
/// derivatives of the map are stored so that stencils can work in x.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialChart {
    nodes: Vec<f64>,
    rx: Vec<f64>,
    rxx: Vec<f64>,
    hx: f64,
    inner: InnerMode,
    eval_idx: Vec<usize>,
    decay: f64,
    order: u32,
}

pub fn build_chart(p: &ChartParams) -> Result<RadialChart> {
    let m = p.intervals;
    if m < 16 {
        return Err(Error::Chart(format!("need at least 16 cells, got {m}")));
    }
    if !(p.r_max > 1.0) || !p.r_max.is_finite() {
        return Err(Error::Chart(format!("R_max must exceed 1, got {}", p.r_max)));
    }
    let start = match p.inner {
        InnerMode::RegularCenter => 0.0,
        InnerMode::Excision => {
            if !(p.r0 > 0.0 && p.r0 < p.r_max) {
                return Err(Error::Chart(format!("excision radius {} not in (0, R_max)", p.r0)));
            }
            p.r0
        }
        InnerMode::TwoEnded => -p.r_max,
    };
    if p.inner == InnerMode::TwoEnded && m % 2 != 0 {
        return Err(Error::Chart("two-ended grids need an even cell count".into()));
    }
    let len = p.r_max - start;
    let hx = 1.0 / m as f64;
    let mut nodes = Vec::with_capacity(m + 1);
    let mut rx = Vec::with_capacity(m + 1);
    let mut rxx = Vec::with_capacity(m + 1);
    match p.spacing {
        Spacing::Uniform => {
            for i in 0..=m {
                let r = if p.inner == InnerMode::TwoEnded {
                    // exactly antisymmetric about the middle node
                    p.r_max * ((2 * i) as f64 - m as f64) / m as f64
                } else {
                    start + len * (i as f64) * hx
                };
                nodes.push(r);
                rx.push(len);
                rxx.push(0.0);
            }
            nodes[m] = p.r_max;
        }
        Spacing::Exponential { strength: s } => {
            if p.inner != InnerMode::Excision {
                return Err(Error::Chart("stretched grids require an excision inner boundary".into()));
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Chart(format!("stretch strength must be positive, got {s}")));
            }
            let norm = 1.0 - (-s).exp();
            for i in 0..=m {
                let x = i as f64 * hx;
                let e = (-s * x).exp();
                nodes.push(start + len * (1.0 - e) / norm);
                rx.push(len * s * e / norm);
                rxx.push(-len * s * s * e / norm);
            }
            nodes[m] = p.r_max;
        }
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Chart("non-monotone nodes".into()));
    }
    let mut chart = RadialChart {
        nodes,
        rx,
        rxx,
        hx,
        inner: p.inner,
        eval_idx: Vec::new(),
        decay: p.decay,
        order: p.order,
    };
    let mut idx = Vec::with_capacity(p.evaluation_radii.len());
    for &r in &p.evaluation_radii {
        if !(r > 0.5 * p.r_max && r <= p.r_max * (1.0 + 1e-12)) {
            return Err(Error::Chart(format!(
                "evaluation radius {r} outside (R_max/2, R_max]"
            )));
        }
        idx.push(chart.index_of(r)?);
    }
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Chart("evaluation radii must be increasing and distinct on the grid".into()));
    }
    chart.eval_idx = idx;
    Ok(chart)
}

impl RadialChart {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn r_start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn inner_mode(&self) -> InnerMode {
        self.inner
    }

    pub fn decay(&self) -> (f64, u32) {
        (self.decay, self.order)
    }

    /// Step of the uniform reference coordinate x.
    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn rx(&self) -> &[f64] {
        &self.rx
    }

    pub fn rxx(&self) -> &[f64] {
        &self.rxx
    }

    pub fn is_uniform(&self) -> bool {
        self.rxx.iter().all(|&v| v == 0.0)
    }

    /// Largest cell width dr.
    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn evaluation_indices(&self) -> &[usize] {
        &self.eval_idx
    }

    pub fn evaluation_radii(&self) -> Vec<f64> {
        self.eval_idx.iter().map(|&i| self.nodes[i]).collect()
    }

    /// Index of the node nearest to r; r must lie within half a cell of it.
    pub fn index_of(&self, r: f64) -> Result<usize> {
        let (lo, hi) = (self.nodes[0], self.r_max());
        let slack = 0.5 * self.max_spacing();
        if !(r >= lo - slack && r <= hi + slack) {
            return Err(Error::Chart(format!("radius {r} outside grid [{lo}, {hi}]")));
        }
        let k = self.nodes.partition_point(|&x| x < r);
        let best = if k == 0 {
            0
        } else if k >= self.nodes.len() {
            self.nodes.len() - 1
        } else if (self.nodes[k] - r).abs() < (r - self.nodes[k - 1]).abs() {
            k
        } else {
            k - 1
        };
        Ok(best)
    }

    /// Node of the opposite end paired with `i` on a two-ended grid.
    pub fn mirror(&self, i: usize) -> usize {
        self.intervals() - i
    }

    /// Node index range [lo, hi] of the ball B_R whose outer node is `i_r`.
    pub fn ball_range(&self, i_r: usize) -> (usize, usize) {
        match self.inner {
            InnerMode::TwoEnded => {
                let j = self.mirror(i_r);
                (j.min(i_r), j.max(i_r))
            }
            _ => (0, i_r),
        }
    }

    /// Outer boundary nodes of B_R with their outward orientation (+1 or -1 along r).
    pub fn ball_ends(&self, i_r: usize) -> Vec<(usize, f64)> {
        match self.inner {
            InnerMode::TwoEnded => {
                let (lo, hi) = self.ball_range(i_r);
                vec![(lo, -1.0), (hi, 1.0)]
            }
            _ => vec![(i_r, 1.0)],
        }
    }

    /// Integral of samples over [r_lo, r_hi] (node indices) in dr.
    /// Composite Simpson, with a 3/8 panel closing an odd cell count.
    pub fn integrate(&self, f: &[f64], lo: usize, hi: usize) -> f64 {
        debug_assert!(hi < self.len() && lo <= hi && f.len() == self.len());
        let g = |i: usize| f[i] * self.rx[i];
        let cells = hi - lo;
        let h = self.hx;
        match cells {
            0 => 0.0,
            1 => 0.5 * h * (g(lo) + g(hi)),
            _ => {
                let simpson_end = if cells % 2 == 0 { hi } else { hi - 3 };
                let mut s = 0.0;
                let mut i = lo;
                while i < simpson_end {
                    s += h / 3.0 * (g(i) + 4.0 * g(i + 1) + g(i + 2));
                    i += 2;
                }
                if cells % 2 == 1 {
                    let j = simpson_end;
                    s += 3.0 * h / 8.0 * (g(j) + 3.0 * g(j + 1) + 3.0 * g(j + 2) + g(j + 3));
                }
                s
            }
        }
    }

    /// First and second x-differences of samples at node i, second order,
    /// one-sided at the ends; `ghost` supplies the value at x_{-1} if present.
    pub(crate) fn diff_x(&self, u: &[f64], i: usize, ghost: Option<f64>) -> (f64, f64) {
        let h = self.hx;
        let last = self.len() - 1;
        if i == 0 {
            if let Some(gm) = ghost {
                return ((u[1] - gm) / (2.0 * h), (u[1] - 2.0 * u[0] + gm) / (h * h));
            }
            (
                (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h),
                (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (h * h),
            )
        } else if i == last {
            let j = last;
            (
                (3.0 * u[j] - 4.0 * u[j - 1] + u[j - 2]) / (2.0 * h),
                (2.0 * u[j] - 5.0 * u[j - 1] + 4.0 * u[j - 2] - u[j - 3]) / (h * h),
            )
        } else {
            (
                (u[i + 1] - u[i - 1]) / (2.0 * h),
                (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h),
            )
        }
    }

    /// Convert x-derivatives at node i into r-derivatives.
    pub(crate) fn to_r(&self, i: usize, dx: f64, dxx: f64) -> (f64, f64) {
        let rx = self.rx[i];
        let d1 = dx / rx;
        (d1, (dxx - d1 * self.rxx[i]) / (rx * rx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_spacing() {
        let c = build_chart(&ChartParams::new(400, 12.0, InnerMode::RegularCenter)).unwrap();
        assert_eq!(c.len(), 401);
        assert!((c.max_spacing() - 0.03).abs() < 1e-12);
        assert_eq!(c.r_start(), 0.0);
        assert_eq!(c.r_max(), 12.0);
    }

    #[test]
    fn excision_start() {
        let c = build_chart(&ChartParams::new(400, 12.0, InnerMode::Excision).with_r0(1.0)).unwrap();
        assert_eq!(c.r_start(), 1.0);
    }

    #[test]
    fn radii_are_stored_as_nodes() {
        let p = ChartParams::new(400, 12.0, InnerMode::RegularCenter)
            .with_radii(&[8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = build_chart(&p).unwrap();
        let r = c.evaluation_radii();
        assert_eq!(r.len(), 5);
        for (got, want) in r.iter().zip([8.0, 9.0, 10.0, 11.0, 12.0]) {
            assert!((got - want).abs() <= 0.015 + 1e-12);
        }
        for &i in c.evaluation_indices() {
            assert!(c.nodes().contains(&c.nodes()[i]));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_chart(&ChartParams::new(8, 12.0, InnerMode::RegularCenter)).is_err());
        assert!(build_chart(&ChartParams::new(100, 0.5, InnerMode::RegularCenter)).is_err());
        let p = ChartParams::new(100, 12.0, InnerMode::RegularCenter).with_radii(&[3.0]);
        assert!(build_chart(&p).is_err());
        let p = ChartParams::new(100, 12.0, InnerMode::RegularCenter).with_radii(&[13.0]);
        assert!(build_chart(&p).is_err());
    }

    #[test]
    fn two_ended_is_symmetric() {
        let c = build_chart(&ChartParams::new(200, 10.0, InnerMode::TwoEnded).with_radii(&[8.0, 10.0])).unwrap();
        for i in 0..c.len() {
            assert!((c.nodes()[i] + c.nodes()[c.mirror(i)]).abs() < 1e-12);
        }
        let i = c.evaluation_indices()[0];
        let (lo, hi) = c.ball_range(i);
        assert_eq!(lo + hi, 200);
    }

    #[test]
    fn stretched_grid_is_finer_outside() {
        let p = ChartParams::new(200, 12.0, InnerMode::Excision)
            .with_r0(1.0)
            .with_spacing(Spacing::Exponential { strength: 1.0 });
        let c = build_chart(&p).unwrap();
        let n = c.nodes();
        assert!(n[200] - n[199] < n[1] - n[0]);
        assert_eq!(c.r_max(), 12.0);
    }

    #[test]
    fn quadrature_exact_for_cubics() {
        let c = build_chart(&ChartParams::new(33, 3.0, InnerMode::RegularCenter)).unwrap();
        let f: Vec<f64> = c.nodes().iter().map(|r| r * r * r - r).collect();
        let exact = 3.0f64.powi(4) / 4.0 - 4.5;
        assert!((c.integrate(&f, 0, 33) - exact).abs() < 1e-12);
        assert!((c.integrate(&f, 0, 32) - {
            let r = c.nodes()[32];
            r.powi(4) / 4.0 - r * r / 2.0
        })
        .abs()
            < 1e-12);
    }
}
