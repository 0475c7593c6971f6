//! Generic-tensor curvature on the full n x n metric.
//!
//! The warped metric is expanded into coordinates (x, theta_1, ..., theta_{n-1}),
//! with the fiber in geodesic polar form. Metric derivatives come from finite
//! differences: the grid step in x, a fixed fourth-order step in the angles.
//! Christoffel symbols, Ricci and scalar curvature follow from the textbook
//! coordinate formulas. Only the sampled values of a and b are read.

use nalgebra::DMatrix;

use super::metric::WarpedMetric;
use crate::error::{Error, Result};

const ANGLE_STEP: f64 = 1e-2;

pub struct OracleCurvature {
    pub scal: f64,
    /// Ric^mu_nu in the coordinate frame.
    pub ricci_mixed: DMatrix<f64>,
}

struct Sampler<'a> {
    g: &'a WarpedMetric,
    i: usize,
    k: f64,
    n: usize,
    theta: Vec<f64>,
}

impl Sampler<'_> {
    fn sn(&self, t: f64) -> f64 {
        if self.k > 0.0 {
            t.sin() / self.k.sqrt()
        } else if self.k < 0.0 {
            (t * (-self.k).sqrt()).sinh() / (-self.k).sqrt()
        } else {
            t
        }
    }

    /// Full metric at radial offset s and angles theta + dth.
    fn metric(&self, s: i64, dth: &[f64]) -> DMatrix<f64> {
        let j = (self.i as i64 + s) as usize;
        let chart = &self.g.chart;
        let a = self.g.a.v[j];
        let b = self.g.b.v[j];
        let rx = chart.rx()[j];
        let n = self.n;
        let th: Vec<f64> = self.theta.iter().zip(dth).map(|(t, d)| t + d).collect();
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = a * a * rx * rx;
        let mut w = b * b;
        m[(1, 1)] = w;
        for c in 2..n {
            let f = if c == 2 { self.sn(th[0]) } else { th[c - 2].sin() };
            w *= f * f;
            m[(c, c)] = w;
        }
        m
    }

    fn angular_d1(&self, s: i64, dir: usize, base: &[f64]) -> DMatrix<f64> {
        let h = ANGLE_STEP;
        let at = |k: f64| {
            let mut d = base.to_vec();
            d[dir] += k * h;
            self.metric(s, &d)
        };
        (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h)
    }
}

pub fn oracle_at(g: &WarpedMetric, i: usize) -> Result<OracleCurvature> {
    let len = g.chart.len();
    if i == 0 || i + 1 >= len {
        return Err(Error::Precondition("oracle needs interior nodes".into()));
    }
    let n = g.n();
    let sp = Sampler {
        g,
        i,
        k: g.fiber.sectional(),
        n,
        theta: (0..n - 1).map(|j| 1.1 - 0.15 * j as f64).collect(),
    };
    let zero = vec![0.0; n - 1];
    let hx = g.chart.hx();
    let h = ANGLE_STEP;

    let g0 = sp.metric(0, &zero);
    let gi = g0
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { r: g.chart.nodes()[i] })?;

    // dg[m] = d_m g, ddg[m][p] = d_m d_p g
    let mut dg = Vec::with_capacity(n);
    dg.push((sp.metric(1, &zero) - sp.metric(-1, &zero)) / (2.0 * hx));
    for d in 0..n - 1 {
        dg.push(sp.angular_d1(0, d, &zero));
    }
    let mut ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
    ddg[0][0] = (sp.metric(1, &zero) - &g0 * 2.0 + sp.metric(-1, &zero)) / (hx * hx);
    for d in 0..n - 1 {
        let m = (sp.angular_d1(1, d, &zero) - sp.angular_d1(-1, d, &zero)) / (2.0 * hx);
        ddg[0][d + 1] = m.clone();
        ddg[d + 1][0] = m;
        for e in 0..n - 1 {
            let m = if d == e {
                let at = |k: f64| {
                    let mut v = zero.clone();
                    v[d] += k * h;
                    sp.metric(0, &v)
                };
                (at(-2.0) * -1.0 + at(-1.0) * 16.0 - &g0 * 30.0 + at(1.0) * 16.0 - at(2.0)) / (12.0 * h * h)
            } else {
                let at = |k: f64| {
                    let mut v = zero.clone();
                    v[e] += k * h;
                    sp.angular_d1(0, d, &v)
                };
                (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h)
            };
            ddg[d + 1][e + 1] = m;
        }
    }

    let dgi: Vec<DMatrix<f64>> = dg.iter().map(|d| -(&gi * d * &gi)).collect();
    // gamma[l][m][q]
    let idx = |l: usize, m: usize, q: usize| (l * n + m) * n + q;
    let mut gam = vec![0.0; n * n * n];
    let mut dgam = vec![vec![0.0; n * n * n]; n];
    for l in 0..n {
        for m in 0..n {
            for q in 0..n {
                let mut s = 0.0;
                for t in 0..n {
                    let low = dg[m][(t, q)] + dg[q][(t, m)] - dg[t][(m, q)];
                    s += 0.5 * gi[(l, t)] * low;
                }
                gam[idx(l, m, q)] = s;
                for p in 0..n {
                    let mut ds = 0.0;
                    for t in 0..n {
                        let low = dg[m][(t, q)] + dg[q][(t, m)] - dg[t][(m, q)];
                        let dlow = ddg[p][m][(t, q)] + ddg[p][q][(t, m)] - ddg[p][t][(m, q)];
                        ds += 0.5 * (dgi[p][(l, t)] * low + gi[(l, t)] * dlow);
                    }
                    dgam[p][idx(l, m, q)] = ds;
                }
            }
        }
    }
    let mut ric = DMatrix::zeros(n, n);
    for m in 0..n {
        for q in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += dgam[l][idx(l, m, q)] - dgam[q][idx(l, m, l)];
                for t in 0..n {
                    s += gam[idx(l, l, t)] * gam[idx(t, m, q)] - gam[idx(l, q, t)] * gam[idx(t, m, l)];
                }
            }
            ric[(m, q)] = s;
        }
    }
    let mixed = &gi * &ric;
    let scal = mixed.trace();
    Ok(OracleCurvature { scal, ricci_mixed: mixed })
}

/// Oracle scalar curvature at the listed interior nodes.
pub fn scalar_curvature_oracle(g: &WarpedMetric, nodes: &[usize]) -> Result<Vec<f64>> {
    nodes.iter().map(|&i| oracle_at(g, i).map(|o| o.scal)).collect()
}
