use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ContinuumField;
use crate::pde::{evolve, Evolution, PdeConfig};

/// The 2-d cross section is taken at this `x`.
pub const CROSS_SECTION_X: f64 = 0.25;

/// Extent of the wetted region along the cross section at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupportRow {
    pub time: f64,
    /// Outermost wetted positions on either side of the initial peak,
    /// unwrapped (they may leave `[0, 1)` when the support wraps).
    pub lower: f64,
    pub upper: f64,
    pub wetted_fraction: f64,
    /// Every cell of the cross section exceeds the threshold.
    pub full: bool,
}

#[derive(Clone, Debug)]
pub struct WettingReport {
    pub rows: Vec<SupportRow>,
    pub evolution: Evolution,
}

/// Values along the line used for the support: the whole field in 1-d, the
/// row at `x = 0.25` in 2-d.
pub fn cross_section(f: &ContinuumField) -> Vec<f64> {
    let m = f.side();
    if f.dim() == 1 {
        return f.values().to_vec();
    }
    let i = (CROSS_SECTION_X * m as f64).round() as usize % m;
    f.values()[i * m..(i + 1) * m].to_vec()
}

/// Outermost positions with `|line| > threshold` on either side of
/// `anchor`, each side searching half the period.
pub fn support(line: &[f64], anchor: usize, threshold: f64, time: f64) -> SupportRow {
    let m = line.len();
    let dx = 1.0 / m as f64;
    let wet = |k: usize| line[k].abs() > threshold;
    let count = (0..m).filter(|&k| wet(k)).count();
    let x0 = anchor as f64 * dx;
    if count == m {
        return SupportRow { time, lower: x0 - 0.5, upper: x0 + 0.5, wetted_fraction: 1.0, full: true };
    }
    let up = (1..=m / 2).filter(|&s| wet((anchor + s) % m)).max().unwrap_or(0);
    let down = (1..m.div_ceil(2)).filter(|&s| wet((anchor + m - s) % m)).max().unwrap_or(0);
    SupportRow {
        time,
        lower: x0 - down as f64 * dx,
        upper: x0 + up as f64 * dx,
        wetted_fraction: count as f64 / m as f64,
        full: false,
    }
}

/// Evolves `h0` and reports the wetted region at each snapshot of `cfg`.
pub fn wetting_report(h0: &ContinuumField, cfg: &PdeConfig, threshold: f64) -> Result<WettingReport> {
    if !(threshold > 0.0) {
        return Err(Error::usage("the wetting threshold must be positive"));
    }
    let line0 = cross_section(h0);
    let anchor = (0..line0.len())
        .max_by(|&a, &b| line0[a].abs().total_cmp(&line0[b].abs()))
        .ok_or_else(|| Error::usage("empty profile"))?;
    let evolution = evolve(h0, cfg)?;
    let rows = evolution
        .snapshots
        .iter()
        .map(|(t, f)| support(&cross_section(f), anchor, threshold, *t))
        .collect();
    Ok(WettingReport { rows, evolution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::profiles::{initial_profile, Profile};

    #[test]
    fn initial_bump_support() {
        let f = initial_profile("bump", 1, 200).unwrap();
        let line = cross_section(&f);
        let row = support(&line, 50, 1e-8, 0.0);
        // exp(8 - 1/r - 1/(1/2 - r)) = 1e-8 near r = 0.0415 and r = 0.4585.
        assert!(row.lower > 0.0415 && row.lower < 0.0465, "{row:?}");
        assert!(row.upper < 0.4585 && row.upper > 0.4535, "{row:?}");
        assert!(!row.full);
    }

    #[test]
    fn cross_section_in_2d() {
        let f = initial_profile("bump", 2, 40).unwrap();
        let line = cross_section(&f);
        assert_eq!(line.len(), 40);
        let want: Vec<f64> = (0..40).map(|j| Profile::Bump.eval(&[0.25, j as f64 / 40.0])).collect();
        for (a, b) in line.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
    }

    #[test]
    fn full_and_wrapped_supports() {
        let line = vec![1.0; 10];
        assert!(support(&line, 3, 0.5, 0.0).full);
        let mut line = vec![0.0; 10];
        for k in [8, 9, 0, 1] {
            line[k] = 1.0;
        }
        let row = support(&line, 0, 0.5, 0.0);
        assert!((row.lower + 0.2).abs() < 1e-12 && (row.upper - 0.1).abs() < 1e-12);
        assert!((row.wetted_fraction - 0.4).abs() < 1e-12);
        // A dry gap inside the support does not pull the boundary in.
        let mut line = vec![0.0; 10];
        for k in [0, 1, 3, 7] {
            line[k] = 1.0;
        }
        let row = support(&line, 0, 0.5, 0.0);
        assert!((row.lower + 0.3).abs() < 1e-12 && (row.upper - 0.3).abs() < 1e-12);
    }
}
