//! Small direct solvers: tridiagonal systems and symmetric banded LDL^T.

use crate::error::{Error, Result};
use crate::geometry::{InnerMode, WarpedMetric};

#[derive(Clone, Debug, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Tridiag {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * u[i];
                if i > 0 {
                    s += self.lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * u[i + 1];
                }
                s
            })
            .collect()
    }

    /// Replace row i by the identity.
    pub fn pin(&mut self, i: usize) {
        self.lower[i] = 0.0;
        self.diag[i] = 1.0;
        self.upper[i] = 0.0;
    }

    /// Thomas algorithm; fails on a vanishing pivot.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut piv = self.diag[0];
        if piv == 0.0 || !piv.is_finite() {
            return Err(Error::Solver("zero pivot in tridiagonal solve at row 0".into()));
        }
        c[0] = self.upper[0] / piv;
        d[0] = rhs[0] / piv;
        for i in 1..n {
            piv = self.diag[i] - self.lower[i] * c[i - 1];
            if piv.abs() < 1e-300 || !piv.is_finite() {
                return Err(Error::Solver(format!("zero pivot in tridiagonal solve at row {i}")));
            }
            c[i] = self.upper[i] / piv;
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / piv;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        Ok(x)
    }
}

/// Rows of the discrete Laplace-Beltrami operator of g acting on radial functions.
///
/// Interior rows use centered differences in x, the same stencils as sampled
/// profiles. Node 0 uses the parity ghost at a regular center and the mirror
/// ghost (zero normal derivative) at an excision sphere. Rows that carry
/// Dirichlet data (the last node, and node 0 on two-ended grids) are left as
/// identity rows for the caller to fill.
pub fn laplacian(g: &WarpedMetric) -> Tridiag {
    let c = &g.chart;
    let len = c.len();
    let n = g.n() as f64;
    let hx = c.hx();
    let mut t = Tridiag::zeros(len);
    for i in 1..len - 1 {
        let (a, a1) = (g.a.v[i], g.a.d1[i]);
        let (b, b1) = (g.b.v[i], g.b.d1[i]);
        let (rx, rxx) = (c.rx()[i], c.rxx()[i]);
        let c1 = (n - 1.0) * b1 / (a * a * b) - a1 / (a * a * a);
        let p = 1.0 / (a * a * rx * rx);
        let q = c1 / rx - rxx / (a * a * rx * rx * rx);
        t.lower[i] = p / (hx * hx) - q / (2.0 * hx);
        t.diag[i] = -2.0 * p / (hx * hx);
        t.upper[i] = p / (hx * hx) + q / (2.0 * hx);
    }
    let a0 = g.a.v[0];
    let rx0 = c.rx()[0];
    let w = 2.0 / (hx * hx * rx0 * rx0 * a0 * a0);
    match c.inner_mode() {
        InnerMode::RegularCenter => {
            t.diag[0] = -n * w;
            t.upper[0] = n * w;
        }
        InnerMode::Excision => {
            t.diag[0] = -w;
            t.upper[0] = w;
        }
        InnerMode::TwoEnded => t.pin(0),
    }
    t.pin(len - 1);
    t
}

/// Nodes carrying Dirichlet data for elliptic solves on this chart.
pub fn dirichlet_nodes(g: &WarpedMetric) -> Vec<usize> {
    let last = g.chart.len() - 1;
    match g.chart.inner_mode() {
        InnerMode::TwoEnded => vec![0, last],
        _ => vec![last],
    }
}

/// Symmetric band matrix, A[i][i+k] stored for k = 0..=w.
#[derive(Clone, Debug)]
pub struct SymBand {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, w: usize) -> Self {
        SymBand { n, w, data: vec![0.0; n * (w + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if j - i > self.w {
            0.0
        } else {
            self.data[i * (self.w + 1) + (j - i)]
        }
    }

    /// Adds v to A[i][j] (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        assert!(j - i <= self.w, "entry outside band");
        self.data[i * (self.w + 1) + (j - i)] += v;
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in 0..=self.w.min(self.n - 1 - i) {
                let a = self.data[i * (self.w + 1) + k];
                y[i] += a * x[i + k];
                if k > 0 {
                    y[i + k] += a * x[i];
                }
            }
        }
        y
    }

    /// self - s * other, same band.
    pub fn shifted(&self, s: f64, other: &SymBand) -> SymBand {
        assert_eq!(self.n, other.n);
        let w = self.w.max(other.w);
        let mut m = SymBand::zeros(self.n, w);
        for i in 0..self.n {
            for k in 0..=w.min(self.n - 1 - i) {
                m.data[i * (w + 1) + k] = self.get(i, i + k) - s * other.get(i, i + k);
            }
        }
        m
    }

    /// Unpivoted LDL^T. By Sylvester's law the signs of D give the inertia.
    pub fn ldl(&self) -> Result<Ldl> {
        let (n, w) = (self.n, self.w);
        let mut l = vec![0.0; n * (w + 1)]; // l[i*(w+1)+k] = L[i][i-k]
        let mut d = vec![0.0; n];
        for j in 0..n {
            let lo = j.saturating_sub(w);
            let mut dj = self.get(j, j);
            for k in lo..j {
                let ljk = l[j * (w + 1) + (j - k)];
                dj -= ljk * ljk * d[k];
            }
            if dj == 0.0 || !dj.is_finite() {
                return Err(Error::Solver(format!("singular pivot at row {j} in LDL^T")));
            }
            d[j] = dj;
            for i in j + 1..(j + w + 1).min(n) {
                let lo_i = i.saturating_sub(w);
                let mut s = self.get(i, j);
                for k in lo_i.max(lo)..j {
                    s -= l[i * (w + 1) + (i - k)] * l[j * (w + 1) + (j - k)] * d[k];
                }
                l[i * (w + 1) + (i - j)] = s / dj;
            }
        }
        Ok(Ldl { n, w, l, d })
    }
}

pub struct Ldl {
    n: usize,
    w: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, w) = (self.n, self.w);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 1..=w.min(i) {
                y[i] -= self.l[i * (w + 1) + k] * y[i - k];
            }
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            for k in 1..=w.min(n - 1 - i) {
                y[i] -= self.l[(i + k) * (w + 1) + k] * y[i + k];
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves_poisson() {
        let n = 50;
        let mut t = Tridiag::zeros(n);
        for i in 0..n {
            t.lower[i] = -1.0;
            t.diag[i] = 2.0;
            t.upper[i] = -1.0;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = t.apply(&x);
        let y = t.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn band_ldl_solves_and_counts() {
        let n = 30;
        let mut a = SymBand::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 4.0 - 0.3 * i as f64);
            if i + 1 < n {
                a.add(i, i + 1, 0.7);
            }
            if i + 2 < n {
                a.add(i, i + 2, -0.4);
            }
        }
        let f = a.ldl().unwrap();
        let x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let y = f.solve(&a.apply(&x));
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-9);
        }
        // inertia against a dense eigen-decomposition
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let neg = dense.symmetric_eigen().eigenvalues.iter().filter(|&&v| v < 0.0).count();
        assert_eq!(neg, f.negative_pivots());
    }
}
