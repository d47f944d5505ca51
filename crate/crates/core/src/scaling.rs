//! Micro-to-macro projections of lattice surfaces and field comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ContinuumField;
use crate::potential::Potential;
use crate::surface::HeightField;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Heights divided by `N`, time by `N^4`.
    #[default]
    Smooth,
    /// Heights divided by `N^q`, time by `N^(q+2)`, `q = p/(p-1)`.
    Rough,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingKind {
    mode: ScalingMode,
    height_exp: f64,
    time_exp: f64,
}

impl ScalingKind {
    pub fn smooth() -> Self {
        ScalingKind { mode: ScalingMode::Smooth, height_exp: 1.0, time_exp: 4.0 }
    }

    pub fn rough(v: &Potential) -> Result<Self> {
        let q = v.conjugate_exponent()?;
        Ok(ScalingKind { mode: ScalingMode::Rough, height_exp: q, time_exp: q + 2.0 })
    }

    pub fn new(mode: ScalingMode, v: &Potential) -> Result<Self> {
        match mode {
            ScalingMode::Smooth => Ok(Self::smooth()),
            ScalingMode::Rough => Self::rough(v),
        }
    }

    pub fn mode(&self) -> ScalingMode {
        self.mode
    }

    pub fn height_exp(&self) -> f64 {
        self.height_exp
    }

    pub fn time_exp(&self) -> f64 {
        self.time_exp
    }

    /// Microscopic time corresponding to macroscopic time `t` on a lattice of side `n`.
    pub fn micro_time(&self, t: f64, n: usize) -> f64 {
        t * (n as f64).powf(self.time_exp)
    }

    pub fn macro_time(&self, tau: f64, n: usize) -> f64 {
        tau / (n as f64).powf(self.time_exp)
    }

    /// Lattice height corresponding to macroscopic height `h`.
    pub fn micro_height(&self, h: f64, n: usize) -> f64 {
        h * (n as f64).powf(self.height_exp)
    }
}

/// `(tau / N^b, x -> N^-a h(alpha))` on the grid `M = N`, the value of cell
/// `alpha` covering `N x` in `[alpha - 1/2, alpha + 1/2)`.
pub fn project(h: &HeightField, tau: f64, kind: &ScalingKind) -> (f64, ContinuumField) {
    let shape = h.shape();
    let n = shape.side();
    let scale = (n as f64).powf(-kind.height_exp);
    let values = h.heights().iter().map(|&z| z as f64 * scale).collect();
    let field = ContinuumField::new(shape.dim(), n, values).expect("lattice shapes are valid grids");
    (kind.macro_time(tau, n), field)
}

/// Comparison of two fields on the coarser grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub linf: f64,
    pub l2: f64,
    /// Coordinates of the coarse cell centre where the difference peaks.
    pub argmax: Vec<f64>,
}

/// Averages `f` over the cells of a coarser grid with side `m`, weighting
/// each fine cell by its overlap with the coarse cell. Cells are centred
/// on grid points.
pub fn cell_average(f: &ContinuumField, m: usize) -> Result<ContinuumField> {
    let mf = f.side();
    if m > mf {
        return Err(Error::usage(format!("cannot average a {mf}-grid onto a finer {m}-grid")));
    }
    if m == mf {
        return Ok(f.clone());
    }
    // 1-d weights: w[i] lists (fine index, weight) for coarse cell i.
    let ratio = mf as f64 / m as f64;
    let weights: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|i| {
            let lo = (i as f64 - 0.5) * ratio;
            let hi = (i as f64 + 0.5) * ratio;
            let first = (lo + 0.5).floor() as i64;
            let last = (hi + 0.5).ceil() as i64;
            (first..=last)
                .filter_map(|j| {
                    let a = (j as f64 - 0.5).max(lo);
                    let b = (j as f64 + 0.5).min(hi);
                    (b > a).then(|| (j.rem_euclid(mf as i64) as usize, (b - a) / ratio))
                })
                .collect()
        })
        .collect();
    let d = f.dim();
    let v = f.values();
    let values = if d == 1 {
        weights.iter().map(|w| w.iter().map(|&(j, c)| c * v[j]).sum()).collect()
    } else {
        let mut out = Vec::with_capacity(m * m);
        for wi in &weights {
            for wj in &weights {
                let mut acc = 0.0;
                for &(a, ca) in wi {
                    for &(b, cb) in wj {
                        acc += ca * cb * v[a * mf + b];
                    }
                }
                out.push(acc);
            }
        }
        out
    };
    ContinuumField::new(d, m, values)
}

/// L-infinity and L2 differences, evaluated on the coarser of the two grids
/// after cell-averaging the finer field onto it.
pub fn compare(a: &ContinuumField, b: &ContinuumField) -> Result<Metrics> {
    if a.dim() != b.dim() {
        return Err(Error::usage(format!("cannot compare a {}-d field with a {}-d field", a.dim(), b.dim())));
    }
    let m = a.side().min(b.side());
    let (ca, cb) = (cell_average(a, m)?, cell_average(b, m)?);
    let mut linf: f64 = 0.0;
    let mut arg = 0;
    let mut sq = 0.0;
    for (k, (x, y)) in ca.values().iter().zip(cb.values()).enumerate() {
        let diff = (x - y).abs();
        if diff > linf {
            linf = diff;
            arg = k;
        }
        sq += diff * diff;
    }
    let cell = ca.dx().powi(a.dim() as i32);
    Ok(Metrics { linf, l2: (sq * cell).sqrt(), argmax: ca.point(arg) })
}

/// Averages projected fields cell by cell.
pub fn ensemble_mean(fields: &[ContinuumField]) -> Result<ContinuumField> {
    let first = fields.first().ok_or_else(|| Error::usage("empty ensemble"))?;
    let mut acc = vec![0.0; first.len()];
    for f in fields {
        if !f.same_grid(first) {
            return Err(Error::usage("ensemble members live on different grids"));
        }
        for (a, v) in acc.iter_mut().zip(f.values()) {
            *a += v;
        }
    }
    let n = fields.len() as f64;
    first.with_values(acc.into_iter().map(|a| a / n).collect())
}

/// Per-cell standard error of the ensemble mean.
pub fn ensemble_stderr(fields: &[ContinuumField]) -> Result<ContinuumField> {
    let mean = ensemble_mean(fields)?;
    let n = fields.len() as f64;
    if fields.len() < 2 {
        return mean.with_values(vec![0.0; mean.len()]);
    }
    let mut acc = vec![0.0; mean.len()];
    for f in fields {
        for ((a, v), m) in acc.iter_mut().zip(f.values()).zip(mean.values()) {
            *a += (v - m) * (v - m);
        }
    }
    mean.with_values(acc.into_iter().map(|s| (s / (n - 1.0) / n).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::LatticeShape;
    use proptest::prelude::*;

    fn lattice() -> impl Strategy<Value = (usize, usize, Vec<i64>, Vec<i64>)> {
        (1usize..=2, 3usize..=9).prop_flat_map(|(d, n)| {
            let len = n.pow(d as u32);
            (Just(d), Just(n), prop::collection::vec(-50i64..50, len), prop::collection::vec(-50i64..50, len))
        })
    }

    proptest! {
        #[test]
        fn projection_is_linear_and_scales_mass((d, n, a, b) in lattice(), rough in any::<bool>(), tau in 0.0f64..1e6) {
            let shape = LatticeShape::new(d, n).unwrap();
            let kind = if rough { ScalingKind::rough(&Potential::new(1.5).unwrap()).unwrap() } else { ScalingKind::smooth() };
            let ha = HeightField::from_heights(shape, a.clone()).unwrap();
            let hb = HeightField::from_heights(shape, b.clone()).unwrap();
            let sum: Vec<i64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let hs = HeightField::from_heights(shape, sum).unwrap();
            let (ta, fa) = project(&ha, tau, &kind);
            let (_, fb) = project(&hb, tau, &kind);
            let (_, fs) = project(&hs, tau, &kind);
            for ((x, y), z) in fa.values().iter().zip(fb.values()).zip(fs.values()) {
                prop_assert!((x + y - z).abs() <= 1e-12 * (1.0 + z.abs()));
            }
            let nf = n as f64;
            prop_assert!((ta - tau / nf.powf(kind.time_exp())).abs() <= 1e-15 * ta.abs());
            // Mean of the projection is N^(-a-d) times the lattice mass.
            let want = ha.mass() as f64 * nf.powf(-kind.height_exp() - d as f64);
            prop_assert!((fa.mean() - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn exponents() {
        let s = ScalingKind::smooth();
        assert_eq!((s.height_exp(), s.time_exp()), (1.0, 4.0));
        let r = ScalingKind::rough(&Potential::gaussian()).unwrap();
        assert_eq!((r.height_exp(), r.time_exp()), (2.0, 4.0));
        let r = ScalingKind::rough(&Potential::new(1.2).unwrap()).unwrap();
        assert!((r.height_exp() - 6.0).abs() < 1e-12);
        assert!(matches!(ScalingKind::rough(&Potential::sos()), Err(Error::Unsupported(_))));
        let far = ScalingKind::rough(&Potential::new(100.0).unwrap()).unwrap();
        assert!((far.height_exp() - 1.0).abs() < 0.011);
        assert_eq!(s.micro_time(1e-3, 400), 2.56e7);
    }

    #[test]
    fn constant_projections() {
        let shape = LatticeShape::new(1, 10).unwrap();
        let (t, f) = project(&HeightField::flat(shape, 10), 2e4, &ScalingKind::smooth());
        assert!(f.values().iter().all(|&v| v == 1.0));
        assert_eq!(t, 2.0);
        let rough = ScalingKind::rough(&Potential::gaussian()).unwrap();
        let (_, f) = project(&HeightField::flat(shape, 100), 0.0, &rough);
        assert!(f.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn compare_examples() {
        let a = ContinuumField::from_fn(1, 8, |x| x[0].sin()).unwrap();
        let m = compare(&a, &a).unwrap();
        assert_eq!((m.linf, m.l2), (0.0, 0.0));
        let b = a.with_values(a.values().iter().map(|v| v + 0.3).collect()).unwrap();
        let m = compare(&a, &b).unwrap();
        assert!((m.linf - 0.3).abs() < 1e-15);
        assert!((m.l2 - 0.3).abs() < 1e-15);
        let c = ContinuumField::zeros(2, 8).unwrap();
        assert!(compare(&a, &c).is_err());
    }

    #[test]
    fn cell_average_of_refined_piecewise_constant_is_exact() {
        for d in [1, 2] {
            let coarse = ContinuumField::from_fn(d, 5, |x| (3.0 * x[0]).cos() + x[d - 1]).unwrap();
            // Refine 3x: each coarse cell (centred on j/5) covers fine cells 3j-1..=3j+1.
            let fine_vals: Vec<f64> = (0..15usize.pow(d as u32))
                .map(|k| {
                    let c = |i: usize| ((i + 1) / 3) % 5;
                    if d == 1 {
                        coarse.values()[c(k)]
                    } else {
                        coarse.values()[c(k / 15) * 5 + c(k % 15)]
                    }
                })
                .collect();
            let fine = ContinuumField::new(d, 15, fine_vals).unwrap();
            let back = cell_average(&fine, 5).unwrap();
            for (x, y) in back.values().iter().zip(coarse.values()) {
                assert!((x - y).abs() < 1e-14);
            }
            assert!(compare(&fine, &coarse).unwrap().linf < 1e-14);
        }
    }

    #[test]
    fn cell_average_preserves_mean() {
        let f = ContinuumField::from_fn(1, 100, |x| (6.0 * x[0]).sin() + x[0]).unwrap();
        for m in [25, 33, 50] {
            let c = cell_average(&f, m).unwrap();
            assert!((c.mean() - f.mean()).abs() < 1e-14);
        }
    }

    #[test]
    fn ensemble_statistics() {
        let a = ContinuumField::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let b = ContinuumField::new(1, 3, vec![3.0, 2.0, 1.0]).unwrap();
        let m = ensemble_mean(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.values(), &[2.0, 2.0, 2.0]);
        let se = ensemble_stderr(&[a, b]).unwrap();
        assert!((se.values()[0] - 1.0).abs() < 1e-15);
        assert_eq!(se.values()[1], 0.0);
    }
}
