use super::chart::{InnerMode, RadialChart};

/// Behaviour of sampled data across the first node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// One-sided stencils.
    None,
    /// Mirror ghost u(-x) = u(x): regular-center parity for even fields,
    /// zero-flux condition at an excision sphere.
    Even,
    /// Mirror ghost u(-x) = -u(x), only meaningful at a regular center.
    Odd,
}

/// Radial function with its first two r-derivatives at every node.
///
/// Analytic profiles carry exact derivatives; sampled ones carry second-order
/// finite differences. Algebra on profiles uses the product and chain rules, so
/// derived quantities inherit whichever accuracy their inputs have.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub v: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn constant(len: usize, c: f64) -> Self {
        Profile {
            v: vec![c; len],
            d1: vec![0.0; len],
            d2: vec![0.0; len],
        }
    }

    /// `f(r)` returns (f, f', f'').
    pub fn from_fn(chart: &RadialChart, f: impl Fn(f64) -> [f64; 3]) -> Self {
        let n = chart.len();
        let mut p = Profile::constant(n, 0.0);
        for (i, &r) in chart.nodes().iter().enumerate() {
            let [v, d1, d2] = f(r);
            p.v[i] = v;
            p.d1[i] = d1;
            p.d2[i] = d2;
        }
        p
    }

    pub fn from_samples(chart: &RadialChart, values: Vec<f64>, parity: Parity) -> Self {
        let n = chart.len();
        assert_eq!(values.len(), n, "sample count does not match chart");
        let ghost = match (parity, chart.inner_mode()) {
            (Parity::Even, InnerMode::RegularCenter | InnerMode::Excision) => Some(values[1]),
            (Parity::Odd, InnerMode::RegularCenter) => Some(-values[1]),
            _ => None,
        };
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        for i in 0..n {
            let g = if i == 0 { ghost } else { None };
            let (dx, dxx) = chart.diff_x(&values, i, g);
            let (a, b) = chart.to_r(i, dx, dxx);
            d1[i] = a;
            d2[i] = b;
        }
        Profile { v: values, d1, d2 }
    }

    pub fn zip(&self, o: &Profile, f: impl Fn([f64; 3], [f64; 3]) -> [f64; 3]) -> Profile {
        assert_eq!(self.len(), o.len());
        let mut p = Profile::constant(self.len(), 0.0);
        for i in 0..self.len() {
            let [v, d1, d2] = f(self.at(i), o.at(i));
            p.v[i] = v;
            p.d1[i] = d1;
            p.d2[i] = d2;
        }
        p
    }

    /// Overwrite node 0 by even extrapolation from nodes 1 and 2 (quotients
    /// that are 0/0 at a regular center).
    pub fn fill_first_even(&mut self) {
        self.v[0] = (4.0 * self.v[1] - self.v[2]) / 3.0;
        self.d1[0] = 0.0;
        self.d2[0] = (4.0 * self.d2[1] - self.d2[2]) / 3.0;
    }

    pub fn at(&self, i: usize) -> [f64; 3] {
        [self.v[i], self.d1[i], self.d2[i]]
    }

    pub fn add(&self, o: &Profile) -> Profile {
        self.zip(o, |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
    }

    pub fn sub(&self, o: &Profile) -> Profile {
        self.zip(o, |a, b| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
    }

    pub fn mul(&self, o: &Profile) -> Profile {
        self.zip(o, |a, b| {
            [
                a[0] * b[0],
                a[1] * b[0] + a[0] * b[1],
                a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
            ]
        })
    }

    /// Quotient rule, so that u/u is exactly 1 with zero derivatives.
    pub fn div(&self, o: &Profile) -> Profile {
        self.zip(o, |u, w| {
            let q = u[0] / w[0];
            let q1 = (u[1] - q * w[1]) / w[0];
            let q2 = (u[2] - 2.0 * q1 * w[1] - q * w[2]) / w[0];
            [q, q1, q2]
        })
    }

    pub fn scale(&self, c: f64) -> Profile {
        self.map_linear(|x| c * x)
    }

    pub fn add_const(&self, c: f64) -> Profile {
        let mut p = self.clone();
        p.v.iter_mut().for_each(|x| *x += c);
        p
    }

    fn map_linear(&self, f: impl Fn(f64) -> f64) -> Profile {
        Profile {
            v: self.v.iter().map(|&x| f(x)).collect(),
            d1: self.d1.iter().map(|&x| f(x)).collect(),
            d2: self.d2.iter().map(|&x| f(x)).collect(),
        }
    }

    /// F(u) given F(u), F'(u), F''(u) from `f`.
    pub fn compose(&self, f: impl Fn(f64) -> [f64; 3]) -> Profile {
        let mut p = Profile::constant(self.len(), 0.0);
        for i in 0..self.len() {
            let [u, u1, u2] = self.at(i);
            let [g, g1, g2] = f(u);
            p.v[i] = g;
            p.d1[i] = g1 * u1;
            p.d2[i] = g2 * u1 * u1 + g1 * u2;
        }
        p
    }

    pub fn powf(&self, e: f64) -> Profile {
        self.compose(|u| {
            [
                u.powf(e),
                e * u.powf(e - 1.0),
                e * (e - 1.0) * u.powf(e - 2.0),
            ]
        })
    }

    pub fn powi(&self, k: i32) -> Profile {
        self.compose(|u| {
            let kf = k as f64;
            [
                u.powi(k),
                kf * u.powi(k - 1),
                kf * (kf - 1.0) * u.powi(k - 2),
            ]
        })
    }

    pub fn recip(&self) -> Profile {
        self.compose(|u| [1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u)])
    }

    pub fn sqrt(&self) -> Profile {
        self.compose(|u| {
            let s = u.sqrt();
            [s, 0.5 / s, -0.25 / (s * u)]
        })
    }

    pub fn exp(&self) -> Profile {
        self.compose(|u| {
            let e = u.exp();
            [e, e, e]
        })
    }

    pub fn ln(&self) -> Profile {
        self.compose(|u| [u.ln(), 1.0 / u, -1.0 / (u * u)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chart::{build_chart, ChartParams, Spacing};

    fn chart(m: usize) -> RadialChart {
        build_chart(&ChartParams::new(m, 4.0, InnerMode::Excision).with_r0(1.0)).unwrap()
    }

    fn err_of_sampled(c: &RadialChart) -> f64 {
        let v: Vec<f64> = c.nodes().iter().map(|r| (0.7 * r).sin()).collect();
        let p = Profile::from_samples(c, v, Parity::None);
        c.nodes()
            .iter()
            .enumerate()
            .map(|(i, r)| (p.d2[i] + 0.49 * (0.7 * r).sin()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn sampled_derivatives_are_second_order() {
        let e1 = err_of_sampled(&chart(100));
        let e2 = err_of_sampled(&chart(200));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn stretched_derivatives_are_second_order() {
        let mk = |m| {
            build_chart(
                &ChartParams::new(m, 4.0, InnerMode::Excision)
                    .with_r0(1.0)
                    .with_spacing(Spacing::Exponential { strength: 1.5 }),
            )
            .unwrap()
        };
        let order = (err_of_sampled(&mk(100)) / err_of_sampled(&mk(200))).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn chain_rule_matches_analytic() {
        let c = chart(50);
        let u = Profile::from_fn(&c, |r| [r * r, 2.0 * r, 2.0]);
        let w = u.sqrt().mul(&u.exp()).powf(1.5);
        let exact = Profile::from_fn(&c, |r| {
            // (r e^{r^2})^{3/2}
            let f = r.powf(1.5) * (1.5 * r * r).exp();
            let g1 = 1.5 / r + 3.0 * r;
            let g2 = -1.5 / (r * r) + 3.0;
            [f, f * g1, f * (g1 * g1 + g2)]
        });
        for i in 0..c.len() {
            for k in 0..3 {
                let (a, b) = (w.at(i)[k], exact.at(i)[k]);
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn parity_ghosts() {
        let c = build_chart(&ChartParams::new(64, 4.0, InnerMode::RegularCenter)).unwrap();
        let b: Vec<f64> = c.nodes().iter().map(|r| r.sinh()).collect();
        let p = Profile::from_samples(&c, b, Parity::Odd);
        assert!((p.d1[0] - 1.0).abs() < 1e-3);
        assert_eq!(p.d2[0], 0.0);
        let a: Vec<f64> = c.nodes().iter().map(|r| r.cosh()).collect();
        let p = Profile::from_samples(&c, a, Parity::Even);
        assert_eq!(p.d1[0], 0.0);
        assert!((p.d2[0] - 1.0).abs() < 1e-3);
    }
}
