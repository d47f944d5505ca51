//! Real-valued fields on a uniform periodic grid over `[0,1)^d`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumField {
    d: usize,
    #[serde(rename = "M")]
    m: usize,
    values: Vec<f64>,
}

impl ContinuumField {
    pub fn new(d: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::config("d", format!("dimension must be 1 or 2, got {d}")));
        }
        if m < 3 {
            return Err(Error::config("M", format!("grid needs at least 3 points per axis, got {m}")));
        }
        if values.len() != m.pow(d as u32) {
            return Err(Error::usage(format!(
                "expected {} values for d={d}, M={m}, got {}",
                m.pow(d as u32),
                values.len()
            )));
        }
        Ok(ContinuumField { d, m, values })
    }

    pub fn zeros(d: usize, m: usize) -> Result<Self> {
        Self::new(d, m, vec![0.0; m.pow(d as u32)])
    }

    /// Samples `f` at the grid points `x_j = j / M`.
    pub fn from_fn(d: usize, m: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(m.pow(d as u32));
        let dx = 1.0 / m as f64;
        if d == 1 {
            values.extend((0..m).map(|i| f(&[i as f64 * dx])));
        } else {
            for i in 0..m {
                for j in 0..m {
                    values.push(f(&[i as f64 * dx, j as f64 * dx]));
                }
            }
        }
        Self::new(d, m, values)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.m
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.d, self.m, values)
    }

    pub fn same_grid(&self, other: &ContinuumField) -> bool {
        self.d == other.d && self.m == other.m
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Grid coordinates of flat index `k`.
    pub fn point(&self, k: usize) -> Vec<f64> {
        let dx = self.dx();
        if self.d == 1 {
            vec![k as f64 * dx]
        } else {
            vec![(k / self.m) as f64 * dx, (k % self.m) as f64 * dx]
        }
    }

    /// Writes rows `time, i[, j], value`, optionally with a header.
    pub fn write_csv_rows<W: Write>(&self, wr: &mut csv::Writer<W>, time: f64) -> Result<()> {
        for (k, v) in self.values.iter().enumerate() {
            let mut rec = vec![format!("{time:e}")];
            if self.d == 1 {
                rec.push(k.to_string());
            } else {
                rec.push((k / self.m).to_string());
                rec.push((k % self.m).to_string());
            }
            rec.push(format!("{v:e}"));
            wr.write_record(&rec)?;
        }
        Ok(())
    }

    pub fn csv_header(d: usize) -> &'static [&'static str] {
        if d == 1 {
            &["time", "i", "value"]
        } else {
            &["time", "i", "j", "value"]
        }
    }

    /// Single-time CSV with columns `time, i[, j], value`.
    pub fn write_csv<W: Write>(&self, w: W, time: f64) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::csv_header(self.d))?;
        self.write_csv_rows(&mut wr, time)?;
        wr.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`ContinuumField::write_csv_series`] or
    /// [`ContinuumField::write_csv`], returning one field per distinct time.
    pub fn read_csv_series<R: Read>(r: R) -> Result<Vec<(f64, ContinuumField)>> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let d = match headers.len() {
            3 => 1,
            4 => 2,
            n => return Err(Error::usage(format!("field CSV needs 3 or 4 columns, got {n}"))),
        };
        let mut out: Vec<(f64, Vec<(usize, usize, f64)>)> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse_f = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::usage(format!("bad number {s:?}: {e}")));
            let parse_u = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::usage(format!("bad index {s:?}: {e}")));
            let t = parse_f(&rec[0])?;
            let (i, j) = if d == 1 { (parse_u(&rec[1])?, 0) } else { (parse_u(&rec[1])?, parse_u(&rec[2])?) };
            let v = parse_f(&rec[d + 1])?;
            match out.last_mut() {
                Some((lt, rows)) if *lt == t => rows.push((i, j, v)),
                _ => out.push((t, vec![(i, j, v)])),
            }
        }
        out.into_iter()
            .map(|(t, rows)| {
                let m = if d == 1 { rows.len() } else { (rows.len() as f64).sqrt().round() as usize };
                let mut values = vec![f64::NAN; rows.len()];
                for (i, j, v) in rows {
                    let k = if d == 1 { i } else { i * m + j };
                    *values
                        .get_mut(k)
                        .ok_or_else(|| Error::usage(format!("index ({i},{j}) outside grid")))? = v;
                }
                if values.iter().any(|v| v.is_nan()) {
                    return Err(Error::usage(format!("incomplete field at time {t}")));
                }
                Ok((t, ContinuumField::new(d, m, values)?))
            })
            .collect()
    }

    pub fn write_csv_series<W: Write>(w: W, series: &[(f64, ContinuumField)]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = series.first().map_or(1, |(_, f)| f.d);
        wr.write_record(Self::csv_header(d))?;
        for (t, f) in series {
            f.write_csv_rows(&mut wr, *t)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction() {
        assert!(ContinuumField::new(3, 4, vec![0.0; 64]).is_err());
        assert!(ContinuumField::new(1, 4, vec![0.0; 5]).is_err());
        let f = ContinuumField::from_fn(2, 4, |x| x[0] + 10.0 * x[1]).unwrap();
        assert_eq!(f.values()[1], 2.5);
        assert_eq!(f.values()[4], 0.25);
        assert_eq!(f.point(6), vec![0.25, 0.5]);
    }

    #[test]
    fn csv_round_trip() {
        for d in [1, 2] {
            let a = ContinuumField::from_fn(d, 5, |x| (x[0] * 7.0).sin() - x[d - 1]).unwrap();
            let b = a.with_values(a.values().iter().map(|v| v * 3.0).collect()).unwrap();
            let series = vec![(0.0, a), (1.5e-4, b)];
            let mut buf = Vec::new();
            ContinuumField::write_csv_series(&mut buf, &series).unwrap();
            let back = ContinuumField::read_csv_series(buf.as_slice()).unwrap();
            assert_eq!(back, series);
        }
    }
}
