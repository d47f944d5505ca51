//! Integer-height periodic lattice surfaces.
//!
//! Sites of the torus `(Z/NZ)^d` are indexed row-major: for `d = 2` the site
//! `(a0, a1)` has index `a0 * N + a1`. All neighbor arithmetic wraps
//! periodically; there are no ghost cells.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct LatticeShape {
    dim: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    d: usize,
    #[serde(rename = "N")]
    n: usize,
}

impl TryFrom<ShapeRepr> for LatticeShape {
    type Error = Error;
    fn try_from(r: ShapeRepr) -> Result<Self> {
        LatticeShape::new(r.d, r.n)
    }
}

impl From<LatticeShape> for ShapeRepr {
    fn from(s: LatticeShape) -> Self {
        ShapeRepr { d: s.dim, n: s.n }
    }
}

/// Direction of a one-sided lattice difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    Plus,
    Minus,
}

impl LatticeShape {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::config("d", format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 3 {
            return Err(Error::config("N", format!("need at least 3 sites per axis, got {n}")));
        }
        Ok(LatticeShape { dim, n })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.n
        } else {
            1
        }
    }

    /// Coordinate of `site` along `axis`.
    #[inline]
    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.stride(axis)) % self.n
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        (0..self.dim).map(|a| self.coord(site, a)).collect()
    }

    pub fn site_of(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .enumerate()
            .map(|(a, &c)| (c % self.n) * self.stride(a))
            .sum()
    }

    /// Neighbor of `site` one step along `axis`, wrapping periodically.
    #[inline]
    pub fn neighbor(&self, site: usize, axis: usize, dir: Dir) -> usize {
        let stride = self.stride(axis);
        let c = (site / stride) % self.n;
        match dir {
            Dir::Plus if c + 1 == self.n => site - (self.n - 1) * stride,
            Dir::Plus => site + stride,
            Dir::Minus if c == 0 => site + (self.n - 1) * stride,
            Dir::Minus => site - stride,
        }
    }

    /// All `2d` nearest neighbors, ordered `[+e_0, -e_0, +e_1, -e_1]`.
    pub fn neighbors(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).flat_map(move |a| {
            [self.neighbor(site, a, Dir::Plus), self.neighbor(site, a, Dir::Minus)]
        })
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        a < self.sites() && b < self.sites() && self.neighbors(a).any(|x| x == b)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.sites() {
            return Err(Error::usage(format!("site {site} outside lattice of {} sites", self.sites())));
        }
        Ok(())
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim {
            return Err(Error::usage(format!("axis {axis} invalid in dimension {}", self.dim)));
        }
        Ok(())
    }
}

/// Precomputed neighbor indices, `2d` entries per site in the order of
/// [`LatticeShape::neighbors`].
#[derive(Clone, Debug)]
pub struct NeighborTable {
    degree: usize,
    table: Vec<usize>,
}

impl NeighborTable {
    pub fn new(shape: &LatticeShape) -> Self {
        let degree = 2 * shape.dim();
        let mut table = Vec::with_capacity(shape.sites() * degree);
        for s in 0..shape.sites() {
            table.extend(shape.neighbors(s));
        }
        NeighborTable { degree, table }
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn of(&self, site: usize) -> &[usize] {
        &self.table[site * self.degree..(site + 1) * self.degree]
    }

    #[inline]
    pub fn plus(&self, site: usize, axis: usize) -> usize {
        self.table[site * self.degree + 2 * axis]
    }

    #[inline]
    pub fn minus(&self, site: usize, axis: usize) -> usize {
        self.table[site * self.degree + 2 * axis + 1]
    }
}

/// A single atom hop from `from` to the neighboring site `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteMove {
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub struct HeightField {
    shape: LatticeShape,
    heights: Vec<i64>,
    mass: i64,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    heights: Vec<i64>,
}

impl TryFrom<FieldRepr> for HeightField {
    type Error = Error;
    fn try_from(r: FieldRepr) -> Result<Self> {
        HeightField::from_heights(LatticeShape::new(r.d, r.n)?, r.heights)
    }
}

impl From<HeightField> for FieldRepr {
    fn from(h: HeightField) -> Self {
        FieldRepr {
            d: h.shape.dim,
            n: h.shape.n,
            heights: h.heights,
        }
    }
}

impl HeightField {
    pub fn flat(shape: LatticeShape, level: i64) -> Self {
        let heights = vec![level; shape.sites()];
        Self::from_heights(shape, heights).expect("flat field has the right length")
    }

    pub fn from_heights(shape: LatticeShape, heights: Vec<i64>) -> Result<Self> {
        if heights.len() != shape.sites() {
            return Err(Error::usage(format!(
                "expected {} heights, got {}",
                shape.sites(),
                heights.len()
            )));
        }
        let mass = heights.iter().sum();
        Ok(HeightField { shape, heights, mass })
    }

    /// Samples `round(f(x))` at the site positions `x = alpha / N`.
    pub fn sample<F: Fn(&[f64]) -> f64>(shape: LatticeShape, f: F) -> Self {
        let n = shape.side() as f64;
        let heights = (0..shape.sites())
            .map(|s| {
                let x: Vec<f64> = shape.coords(s).iter().map(|&c| c as f64 / n).collect();
                f(&x).round() as i64
            })
            .collect();
        Self::from_heights(shape, heights).expect("sampled field has the right length")
    }

    #[inline]
    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    #[inline]
    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    #[inline]
    pub fn get(&self, site: usize) -> i64 {
        self.heights[site]
    }

    pub fn mass(&self) -> i64 {
        self.mass
    }

    /// One-sided difference `h(a + e_i) - h(a)` (plus) or `h(a) - h(a - e_i)` (minus).
    pub fn gradient(&self, site: usize, axis: usize, dir: Dir) -> Result<i64> {
        self.shape.check_site(site)?;
        self.shape.check_axis(axis)?;
        let nb = self.shape.neighbor(site, axis, dir);
        Ok(match dir {
            Dir::Plus => self.heights[nb] - self.heights[site],
            Dir::Minus => self.heights[site] - self.heights[nb],
        })
    }

    pub fn apply_move(&mut self, mv: SiteMove) -> Result<()> {
        if !self.shape.are_neighbors(mv.from, mv.to) {
            return Err(Error::usage(format!(
                "sites {} and {} are not nearest neighbors",
                mv.from, mv.to
            )));
        }
        self.apply_move_unchecked(mv);
        Ok(())
    }

    #[inline]
    pub(crate) fn apply_move_unchecked(&mut self, mv: SiteMove) {
        debug_assert!(self.heights[mv.from] > i64::MIN && self.heights[mv.to] < i64::MAX);
        self.heights[mv.from] -= 1;
        self.heights[mv.to] += 1;
    }

    /// Lowers `site` by one (`J_alpha`); changes the mass.
    pub fn lowered(&self, site: usize) -> HeightField {
        let mut out = self.clone();
        out.heights[site] -= 1;
        out.mass -= 1;
        out
    }

    /// `sum_{alpha, i} V(grad_i^+ h(alpha))`.
    pub fn energy(&self, v: &Potential) -> f64 {
        let mut total = 0.0;
        for s in 0..self.shape.sites() {
            for axis in 0..self.shape.dim {
                let nb = self.shape.neighbor(s, axis, Dir::Plus);
                total += v.eval((self.heights[nb] - self.heights[s]) as f64);
            }
        }
        total
    }

    /// Generalized coordination number: half the energy cost of removing the
    /// top atom at `site`. Touches only `site` and its `2d` neighbors.
    pub fn coordination_number(&self, site: usize, v: &Potential) -> f64 {
        let h = self.heights[site];
        let mut sum = 0.0;
        for axis in 0..self.shape.dim {
            let up = self.heights[self.shape.neighbor(site, axis, Dir::Plus)] - h;
            let down = h - self.heights[self.shape.neighbor(site, axis, Dir::Minus)];
            sum += bond_cost(v, up, down);
        }
        0.5 * sum
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// CSV with one row per site: coordinate columns then the height.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = ["i", "j"][..self.shape.dim].to_vec();
        header.push("height");
        wr.write_record(&header)?;
        for s in 0..self.shape.sites() {
            let mut rec: Vec<String> = self.shape.coords(s).iter().map(|c| c.to_string()).collect();
            rec.push(self.heights[s].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(shape: LatticeShape, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut heights = vec![None; shape.sites()];
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != shape.dim() + 1 {
                return Err(Error::usage(format!("CSV row has {} columns", rec.len())));
            }
            let parse = |i: usize| -> Result<i64> {
                rec[i]
                    .trim()
                    .parse::<i64>()
                    .map_err(|e| Error::usage(format!("bad CSV value {:?}: {e}", &rec[i])))
            };
            let mut coords = Vec::with_capacity(shape.dim());
            for a in 0..shape.dim() {
                let c = parse(a)?;
                if c < 0 || c as usize >= shape.side() {
                    return Err(Error::usage(format!("coordinate {c} out of range")));
                }
                coords.push(c as usize);
            }
            heights[shape.site_of(&coords)] = Some(parse(shape.dim())?);
        }
        let heights = heights
            .into_iter()
            .enumerate()
            .map(|(s, h)| h.ok_or_else(|| Error::usage(format!("missing height for site {s}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_heights(shape, heights)
    }
}

/// Energy change of the two bonds along one axis when the atom at a site is
/// removed, given the forward (`up`) and backward (`down`) differences there.
#[inline]
pub(crate) fn bond_cost(v: &Potential, up: i64, down: i64) -> f64 {
    let (up, down) = (up as f64, down as f64);
    v.eval(up + 1.0) - v.eval(up) + v.eval(down - 1.0) - v.eval(down)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(h: &[i64]) -> HeightField {
        HeightField::from_heights(LatticeShape::new(1, h.len()).unwrap(), h.to_vec()).unwrap()
    }

    #[test]
    fn shape_validation() {
        assert!(LatticeShape::new(3, 4).is_err());
        assert!(LatticeShape::new(1, 2).is_err());
        assert!(LatticeShape::new(2, 3).is_ok());
    }

    #[test]
    fn gradients() {
        let h = line(&[0, 1, 0]);
        assert_eq!(h.gradient(0, 0, Dir::Plus).unwrap(), 1);
        assert_eq!(h.gradient(2, 0, Dir::Plus).unwrap(), 0);
        assert_eq!(h.gradient(1, 0, Dir::Minus).unwrap(), 1);
        assert!(matches!(h.gradient(0, 1, Dir::Plus), Err(Error::Usage(_))));
        assert!(matches!(h.gradient(3, 0, Dir::Plus), Err(Error::Usage(_))));
    }

    #[test]
    fn moves() {
        let mut h = line(&[0, 1, 0]);
        h.apply_move(SiteMove { from: 1, to: 2 }).unwrap();
        assert_eq!(h.heights(), &[0, 0, 1]);
        assert_eq!(h.mass(), 1);

        let mut h = line(&[5, 5, 5]);
        h.apply_move(SiteMove { from: 0, to: 1 }).unwrap();
        assert_eq!(h.heights(), &[4, 6, 5]);

        let mut h = line(&[0, 0, 0]);
        h.apply_move(SiteMove { from: 0, to: 2 }).unwrap();
        assert_eq!(h.heights(), &[-1, 0, 1]);

        let mut h = line(&[0, 0, 0, 0]);
        assert!(matches!(h.apply_move(SiteMove { from: 0, to: 2 }), Err(Error::Usage(_))));
        assert_eq!(h.heights(), &[0, 0, 0, 0]);
    }

    #[test]
    fn energies() {
        let h = line(&[0, 1, 0]);
        assert_eq!(h.energy(&Potential::sos()), 2.0);
        assert_eq!(h.energy(&Potential::gaussian()), 2.0);
        assert_eq!(line(&[7, 7, 7, 7]).energy(&Potential::new(1.5).unwrap()), 0.0);
    }

    #[test]
    fn coordination_examples() {
        let peak = line(&[0, 1, 0]);
        assert_eq!(peak.coordination_number(1, &Potential::sos()), -1.0);
        assert_eq!(peak.coordination_number(1, &Potential::gaussian()), -1.0);
        let flat = line(&[2, 2, 2, 2]);
        for s in 0..4 {
            assert_eq!(flat.coordination_number(s, &Potential::sos()), 1.0);
        }
        let flat2 = HeightField::flat(LatticeShape::new(2, 4).unwrap(), 0);
        assert_eq!(flat2.coordination_number(5, &Potential::sos()), 2.0);
    }

    #[test]
    fn neighbor_table_matches_shape() {
        let shape = LatticeShape::new(2, 4).unwrap();
        let t = NeighborTable::new(&shape);
        for s in 0..shape.sites() {
            let direct: Vec<_> = shape.neighbors(s).collect();
            assert_eq!(t.of(s), &direct[..]);
            for a in 0..2 {
                assert_eq!(shape.neighbor(shape.neighbor(s, a, Dir::Plus), a, Dir::Minus), s);
            }
        }
        assert_eq!(shape.neighbor(3, 1, Dir::Plus), 0);
        assert_eq!(shape.neighbor(12, 0, Dir::Plus), 0);
        assert_eq!(shape.site_of(&[3, 0]), 12);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let shape = LatticeShape::new(2, 3).unwrap();
        let h = HeightField::from_heights(shape, vec![1, -2, 3, 0, 5, 6, -7, 8, 9]).unwrap();
        let js = h.to_json().unwrap();
        assert!(js.contains("\"N\":3"));
        assert_eq!(HeightField::from_json(&js).unwrap(), h);

        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,height\n0,0,1\n0,1,-2\n"));
        assert_eq!(HeightField::read_csv(shape, &buf[..]).unwrap(), h);
        assert!(HeightField::from_json(r#"{"d":1,"N":3,"heights":[1,2]}"#).is_err());
    }

    fn arb_field() -> impl Strategy<Value = HeightField> {
        prop_oneof![
            (3usize..=8).prop_flat_map(|n| prop::collection::vec(-3i64..=3, n)
                .prop_map(move |h| HeightField::from_heights(LatticeShape::new(1, n).unwrap(), h).unwrap())),
            (3usize..=4).prop_flat_map(|n| prop::collection::vec(-3i64..=3, n * n)
                .prop_map(move |h| HeightField::from_heights(LatticeShape::new(2, n).unwrap(), h).unwrap())),
        ]
    }

    fn arb_potential() -> impl Strategy<Value = Potential> {
        prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]).prop_map(|p| Potential::new(p).unwrap())
    }

    proptest! {
        #[test]
        fn energy_relation(h in arb_field(), v in arb_potential()) {
            let e = h.energy(&v);
            for s in 0..h.shape().sites() {
                let lhs = 2.0 * h.coordination_number(s, &v) + e;
                let rhs = h.lowered(s).energy(&v);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn mass_invariant(h in arb_field(), picks in prop::collection::vec((0usize..64, 0usize..4), 0..50)) {
            let mut h = h;
            let m0 = h.mass();
            let shape = *h.shape();
            for (s, k) in picks {
                let s = s % shape.sites();
                let nb: Vec<_> = shape.neighbors(s).collect();
                h.apply_move(SiteMove { from: s, to: nb[k % nb.len()] }).unwrap();
                prop_assert_eq!(h.heights().iter().sum::<i64>(), m0);
                prop_assert_eq!(h.mass(), m0);
            }
        }

        #[test]
        fn coordination_is_local(h in arb_field(), v in arb_potential(), site in 0usize..64, bump in -5i64..5) {
            let shape = *h.shape();
            let site = site % shape.sites();
            let n0 = h.coordination_number(site, &v);
            let near: Vec<usize> = std::iter::once(site).chain(shape.neighbors(site)).collect();
            for other in 0..shape.sites() {
                if near.contains(&other) { continue; }
                let mut hs = h.heights().to_vec();
                hs[other] += bump;
                let g = HeightField::from_heights(shape, hs).unwrap();
                prop_assert_eq!(g.coordination_number(site, &v), n0);
            }
        }

        #[test]
        fn sos_counts_bonds(h in arb_field()) {
            let shape = *h.shape();
            for s in 0..shape.sites() {
                let count = shape.neighbors(s).filter(|&b| h.get(s) <= h.get(b)).count() as f64;
                prop_assert_eq!(h.coordination_number(s, &Potential::sos()) + shape.dim() as f64, count);
            }
        }

        #[test]
        fn gaussian_is_laplacian(h in arb_field()) {
            let shape = *h.shape();
            for s in 0..shape.sites() {
                let lap: i64 = (0..shape.dim())
                    .map(|a| h.gradient(s, a, Dir::Plus).unwrap() - h.gradient(s, a, Dir::Minus).unwrap())
                    .sum();
                prop_assert_eq!(h.coordination_number(s, &Potential::gaussian()) - shape.dim() as f64, lap as f64);
            }
        }
    }
}
