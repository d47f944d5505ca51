use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{TensionKind, TensionSpec};
use crate::error::{Error, Result};
use crate::potential::Potential;

/// Tabulated tension with monotone piecewise-cubic (Fritsch-Carlson)
/// interpolation and linear extrapolation past the ends.
#[derive(Clone, Debug, PartialEq)]
pub struct TensionTable {
    spec: TensionSpec,
    u: Vec<f64>,
    sigma: Vec<f64>,
    slopes: Vec<f64>,
    /// Grid symmetric about zero: queries are evaluated at `|u|` and signed.
    odd: bool,
}

/// JSON header line of the table CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    #[serde(rename = "K")]
    pub k: f64,
    pub p: f64,
    pub kind: TensionKind,
    pub tol: f64,
}

/// Uniform grid; symmetric ranges are built by mirroring the non-negative
/// half so that `u[n-1-i] == -u[i]` exactly.
fn uniform_grid(u_min: f64, u_max: f64, n: usize) -> (Vec<f64>, bool) {
    let h = (u_max - u_min) / (n - 1) as f64;
    if u_min == -u_max {
        let half: Vec<f64> = (0..n)
            .map(|i| (2.0 * i as f64 - (n - 1) as f64) * 0.5 * h)
            .filter(|&x| x >= 0.0)
            .collect();
        let mut grid: Vec<f64> = half.iter().rev().filter(|&&x| x > 0.0).map(|x| -x).collect();
        grid.extend_from_slice(&half);
        (grid, true)
    } else {
        ((0..n).map(|i| u_min + i as f64 * h).collect(), false)
    }
}

/// One-sided three-point end slope, limited to preserve monotonicity.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if del[i - 1] * del[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    m[0] = end_slope(h[0], h[1], del[0], del[1]);
    m[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    m
}

impl TensionTable {
    /// Samples `spec` on `n_points` uniform nodes over `[u_min, u_max]`.
    pub fn tabulate(spec: &TensionSpec, u_min: f64, u_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 8 {
            return Err(Error::config("n_points", format!("need at least 8 nodes, got {n_points}")));
        }
        if !(u_min < u_max && u_min.is_finite() && u_max.is_finite()) {
            return Err(Error::config("u_range", format!("need finite u_min < u_max, got [{u_min}, {u_max}]")));
        }
        let (u, odd) = uniform_grid(u_min, u_max, n_points);
        let sigma = if odd {
            // Evaluate the non-negative half and mirror it.
            let first_pos = u.iter().position(|&x| x >= 0.0).unwrap();
            let half: Vec<f64> = u[first_pos..].iter().map(|&x| spec.sigma(x)).collect::<Result<_>>()?;
            let n = u.len();
            let mut s: Vec<f64> = (0..first_pos).map(|i| -half[n - 1 - i - first_pos]).collect();
            s.extend_from_slice(&half);
            s
        } else {
            u.iter().map(|&x| spec.sigma(x)).collect::<Result<_>>()?
        };
        Self::from_samples(*spec, u, sigma, odd)
    }

    fn from_samples(spec: TensionSpec, u: Vec<f64>, sigma: Vec<f64>, odd: bool) -> Result<Self> {
        if let Some(i) = (1..sigma.len()).find(|&i| !(sigma[i] > sigma[i - 1])) {
            return Err(Error::NonMonotone { u: u[i] });
        }
        let slopes = pchip_slopes(&u, &sigma);
        Ok(TensionTable { spec, u, sigma, slopes, odd })
    }

    pub fn spec(&self) -> &TensionSpec {
        &self.spec
    }

    pub fn grid(&self) -> &[f64] {
        &self.u
    }

    pub fn values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn range(&self) -> (f64, f64) {
        (self.u[0], self.u[self.u.len() - 1])
    }

    pub fn spacing(&self) -> f64 {
        (self.u[self.u.len() - 1] - self.u[0]) / (self.u.len() - 1) as f64
    }

    /// Whether every slope in `[-a, a]` lies inside the tabulated range.
    pub fn covers(&self, a: f64) -> bool {
        let (lo, hi) = self.range();
        lo <= -a && a <= hi
    }

    /// Re-tabulates with the same spacing on a symmetric range reaching at
    /// least `a`.
    pub fn extended_to(&self, a: f64) -> Result<Self> {
        let h = self.spacing();
        let (lo, hi) = self.range();
        let reach = a.max(hi).max(-lo);
        let half = (reach / h).ceil() as usize;
        Self::tabulate(&self.spec, -(half as f64) * h, half as f64 * h, 2 * half + 1)
    }

    /// Index `i` of the cell `[u_i, u_{i+1}]` holding `x`, for `x` inside
    /// the grid. Nodes resolve to the cell they start.
    #[inline]
    fn interval(&self, x: f64) -> usize {
        let n = self.u.len();
        let guess = ((x - self.u[0]) / self.spacing()) as usize;
        let mut i = guess.min(n - 2);
        while i > 0 && self.u[i] > x {
            i -= 1;
        }
        while i < n - 2 && self.u[i + 1] <= x {
            i += 1;
        }
        i
    }

    fn eval_raw(&self, x: f64) -> (f64, f64) {
        let n = self.u.len();
        if x < self.u[0] {
            return (self.sigma[0] + self.slopes[0] * (x - self.u[0]), self.slopes[0]);
        }
        if x > self.u[n - 1] {
            return (self.sigma[n - 1] + self.slopes[n - 1] * (x - self.u[n - 1]), self.slopes[n - 1]);
        }
        let i = self.interval(x);
        let h = self.u[i + 1] - self.u[i];
        let t = (x - self.u[i]) / h;
        let (y0, y1, m0, m1) = (self.sigma[i], self.sigma[i + 1], self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let val = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        (val, d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1)
    }

    /// Interpolated tension at slope `u`.
    pub fn interpolate(&self, u: f64) -> f64 {
        if self.odd && u < 0.0 {
            -self.eval_raw(-u).0
        } else {
            self.eval_raw(u).0
        }
    }

    /// Derivative of the interpolant.
    pub fn derivative(&self, u: f64) -> f64 {
        self.eval_raw(if self.odd { u.abs() } else { u }).1
    }

    /// Largest node slope or secant slope of the table over `[-a, a]`.
    pub fn max_slope(&self, a: f64) -> f64 {
        let mut s = self.derivative(a).max(self.derivative(-a));
        for (i, w) in self.u.windows(2).enumerate() {
            if w[1] >= -a && w[0] <= a {
                let secant = (self.sigma[i + 1] - self.sigma[i]) / (w[1] - w[0]);
                s = s.max(secant).max(self.slopes[i]).max(self.slopes[i + 1]);
            }
        }
        s
    }

    pub fn header(&self) -> TableHeader {
        TableHeader {
            k: self.spec.k,
            p: self.spec.potential.degree(),
            kind: self.spec.kind,
            tol: self.spec.tol,
        }
    }

    /// First line `# {json header}`, then CSV `u, sigma`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", serde_json::to_string(&self.header())?)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["u", "sigma"])?;
        for (u, s) in self.u.iter().zip(&self.sigma) {
            wr.write_record(&[format!("{u:e}"), format!("{s:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R) -> Result<Self> {
        let mut first = String::new();
        r.read_line(&mut first)?;
        let json = first
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::usage("tension table must start with a `# {json}` header line"))?;
        let head: TableHeader = serde_json::from_str(json.trim())?;
        let spec = TensionSpec {
            k: head.k,
            potential: Potential::new(head.p)?,
            kind: head.kind,
            tol: head.tol,
        };
        spec.validate()?;
        let mut rd = csv::Reader::from_reader(r);
        let (mut u, mut sigma) = (Vec::new(), Vec::new());
        for rec in rd.deserialize::<(f64, f64)>() {
            let (a, b) = rec?;
            u.push(a);
            sigma.push(b);
        }
        if u.len() < 8 {
            return Err(Error::usage("tension table needs at least 8 rows"));
        }
        let n = u.len();
        let odd = (0..n).all(|i| u[i] == -u[n - 1 - i]);
        Self::from_samples(spec, u, sigma, odd)
    }
}
