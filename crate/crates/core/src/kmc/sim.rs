use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmc::{ModelParams, RateIndex, RateModel};
use crate::rng::{open_unit, RandomSource, Stream};
use crate::surface::{HeightField, SiteMove};

/// Events between full rebuilds of the partial-sum tree.
pub const REBUILD_INTERVAL: u64 = 1 << 20;

/// Exact time integrals of each site's exit rate, accumulated lazily: a
/// site's integral is only brought up to date when its rate changes.
#[derive(Clone, Debug)]
struct RateIntegrals {
    start: f64,
    value: Vec<f64>,
    since: Vec<f64>,
}

/// Rejection-free kinetic Monte Carlo for one trajectory.
#[derive(Clone, Debug)]
pub struct Simulator {
    params: ModelParams,
    model: RateModel,
    h: HeightField,
    index: RateIndex,
    rng: Stream,
    time: f64,
    events: u64,
    since_rebuild: u64,
    integrals: Option<RateIntegrals>,
}

impl Simulator {
    pub fn new(h0: HeightField, params: ModelParams, source: &RandomSource) -> Result<Self> {
        params.validate()?;
        if h0.shape() != &params.shape {
            return Err(Error::usage("initial surface does not match the model lattice"));
        }
        let model = RateModel::new(&params);
        let index = RateIndex::build_with(&model, &h0);
        Ok(Simulator {
            params,
            model,
            h: h0,
            index,
            rng: source.stream(),
            time: 0.0,
            events: 0,
            since_rebuild: 0,
            integrals: None,
        })
    }

    pub fn surface(&self) -> &HeightField {
        &self.h
    }

    pub fn index(&self) -> &RateIndex {
        &self.index
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Starts integrating every site's exit rate from the current time.
    pub fn start_rate_integrals(&mut self) {
        let n = self.h.shape().sites();
        self.integrals = Some(RateIntegrals {
            start: self.time,
            value: vec![0.0; n],
            since: vec![self.time; n],
        });
    }

    /// `int_{start}^{now} rate(s, a) ds` for every site, exact for the
    /// piecewise-constant rates.
    pub fn rate_integrals(&self) -> Option<Vec<f64>> {
        let ri = self.integrals.as_ref()?;
        Some(
            ri.value
                .iter()
                .zip(&ri.since)
                .zip(self.index.rates())
                .map(|((&v, &t0), &r)| v + r * (self.time - t0))
                .collect(),
        )
    }

    pub fn rate_integral_window(&self) -> Option<f64> {
        self.integrals.as_ref().map(|ri| self.time - ri.start)
    }

    fn total_rate(&self) -> Result<f64> {
        let r = self.index.total();
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Stall {
                total_rate: r,
                time: self.time,
            });
        }
        Ok(r)
    }

    /// Draws the waiting time to the next event without applying it.
    fn draw_wait(&mut self) -> Result<f64> {
        let r = self.total_rate()?;
        Ok(-open_unit(&mut self.rng).ln() / r)
    }

    /// Selects and applies the next event at time `at`.
    fn fire(&mut self, at: f64) -> SiteMove {
        let r = self.index.total();
        let target = self.rng.random::<f64>() * r;
        let from = self.index.find(target);
        let nbs = self.model.neighbors();
        let to = nbs.of(from)[self.rng.random_range(0..nbs.degree())];
        let mv = SiteMove { from, to };
        self.time = at;
        self.h.apply_move_unchecked(mv);
        self.refresh_around(mv);
        self.events += 1;
        self.since_rebuild += 1;
        if self.since_rebuild >= REBUILD_INTERVAL {
            self.rebuild();
        }
        mv
    }

    fn refresh_around(&mut self, mv: SiteMove) {
        let nbs = self.model.neighbors();
        let mut touched = [usize::MAX; 10];
        let mut count = 0;
        for &centre in &[mv.from, mv.to] {
            for s in std::iter::once(centre).chain(nbs.of(centre).iter().copied()) {
                if !touched[..count].contains(&s) {
                    touched[count] = s;
                    count += 1;
                }
            }
        }
        for &s in &touched[..count] {
            let rate = self.model.site_rate(self.h.heights(), s);
            if let Some(ri) = self.integrals.as_mut() {
                ri.value[s] += self.index.rate(s) * (self.time - ri.since[s]);
                ri.since[s] = self.time;
            }
            self.index.set(s, rate);
        }
    }

    /// Recomputes every site rate and the whole tree from the surface.
    pub fn rebuild(&mut self) {
        self.index = RateIndex::build_with(&self.model, &self.h);
        self.since_rebuild = 0;
    }

    /// One event: returns the waiting time and the hop performed.
    pub fn step(&mut self) -> Result<(f64, SiteMove)> {
        let dt = self.draw_wait()?;
        let mv = self.fire(self.time + dt);
        Ok((dt, mv))
    }

    /// Runs until time `t_end`. The event that would cross `t_end` is
    /// discarded, which is exact for exponential waiting times.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        loop {
            let next = self.time + self.draw_wait()?;
            if next > t_end {
                self.time = t_end.max(self.time);
                return Ok(());
            }
            self.fire(next);
        }
    }

    /// Runs until `t_end`, calling `record` with the pre-event surface at each
    /// requested time (sorted, `<= t_end`).
    pub fn advance_recording<F>(&mut self, t_end: f64, times: &[f64], mut record: F) -> Result<()>
    where
        F: FnMut(f64, &HeightField),
    {
        let mut pending = times.iter().copied().peekable();
        while pending.peek().is_some_and(|&t| t < self.time) {
            pending.next();
        }
        loop {
            let next = self.time + self.draw_wait()?;
            while let Some(&t) = pending.peek() {
                if t < next && t <= t_end {
                    record(t, &self.h);
                    pending.next();
                } else {
                    break;
                }
            }
            if next > t_end {
                self.time = t_end.max(self.time);
                return Ok(());
            }
            self.fire(next);
        }
    }

    pub fn into_surface(self) -> HeightField {
        self.h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub surface: HeightField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub seed: RandomSource,
    pub snapshots: Vec<Snapshot>,
    pub event_count: u64,
}

#[derive(Serialize)]
struct TrajectoryMeta<'a> {
    params: &'a ModelParams,
    seed: u64,
    stream_path: &'a [u64],
    event_count: u64,
    snapshot_times: Vec<f64>,
}

impl Trajectory {
    /// Long-format CSV: `time, site, height`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["time", "site", "height"])?;
        for snap in &self.snapshots {
            for (s, h) in snap.surface.heights().iter().enumerate() {
                wr.write_record(&[format!("{:e}", snap.time), s.to_string(), h.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TrajectoryMeta {
            params: &self.params,
            seed: self.seed.seed(),
            stream_path: self.seed.path(),
            event_count: self.event_count,
            snapshot_times: self.snapshots.iter().map(|s| s.time).collect(),
        })?)
    }
}

/// Simulates from `h0` until microscopic time `t_end`, recording the surface
/// at each requested time. `t_end` itself is always recorded.
pub fn run(
    h0: &HeightField,
    params: &ModelParams,
    t_end: f64,
    snapshot_times: &[f64],
    source: &RandomSource,
) -> Result<Trajectory> {
    if !(t_end >= 0.0) {
        return Err(Error::usage(format!("t_end must be >= 0, got {t_end}")));
    }
    if snapshot_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::usage("snapshot times must be sorted"));
    }
    if let Some(&t) = snapshot_times.iter().find(|&&t| t > t_end || t < 0.0) {
        return Err(Error::usage(format!("snapshot time {t} outside [0, {t_end}]")));
    }
    let mut times = snapshot_times.to_vec();
    if times.last().is_none_or(|&t| t < t_end) {
        times.push(t_end);
    }
    let mut sim = Simulator::new(h0.clone(), *params, source)?;
    let mut snapshots = Vec::with_capacity(times.len());
    sim.advance_recording(t_end, &times, |t, h| {
        snapshots.push(Snapshot {
            time: t,
            surface: h.clone(),
        })
    })?;
    Ok(Trajectory {
        params: *params,
        seed: source.clone(),
        snapshots,
        event_count: sim.event_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;
    use crate::surface::LatticeShape;

    fn sos_flat(n: usize) -> (HeightField, ModelParams) {
        let shape = LatticeShape::new(1, n).unwrap();
        let h = HeightField::flat(shape, 0);
        (h, ModelParams::new(1.5, Potential::sos(), shape).unwrap())
    }

    #[test]
    fn zero_horizon_records_initial_state() {
        let (h, p) = sos_flat(6);
        let tr = run(&h, &p, 0.0, &[], &RandomSource::new(1)).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.snapshots[0].surface, h);
        assert_eq!(tr.event_count, 0);
        assert!(matches!(run(&h, &p, -1.0, &[], &RandomSource::new(1)), Err(Error::Usage(_))));
        assert!(run(&h, &p, 1.0, &[2.0], &RandomSource::new(1)).is_err());
        assert!(run(&h, &p, 1.0, &[0.5, 0.2], &RandomSource::new(1)).is_err());
    }

    #[test]
    fn first_wait_is_exponential() {
        let (h, p) = sos_flat(4);
        let root = RandomSource::new(11);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|i| Simulator::new(h.clone(), p, &root.split(i)).unwrap().step().unwrap().0)
            .sum::<f64>()
            / n as f64;
        let want = 3.0f64.exp() / 4.0;
        assert!((want - 5.0214).abs() < 1e-4);
        assert!((mean - want).abs() < 0.02 * want, "mean {mean} vs {want}");
    }

    #[test]
    fn incremental_index_matches_rebuild() {
        for (d, n, pot) in [(1, 16, Potential::sos()), (2, 6, Potential::gaussian()), (1, 9, Potential::new(1.5).unwrap())] {
            let shape = LatticeShape::new(d, n).unwrap();
            let h = HeightField::sample(shape, |x| 3.0 * (6.28 * x[0]).sin());
            let p = ModelParams::new(0.7, pot, shape).unwrap();
            let mut sim = Simulator::new(h, p, &RandomSource::new(5)).unwrap();
            for i in 0..10_000 {
                sim.step().unwrap();
                if i % 2500 == 0 || i == 9_999 {
                    let fresh = RateIndex::build(sim.surface(), &p);
                    for (a, b) in fresh.rates().iter().zip(sim.index().rates()) {
                        assert!((a - b).abs() <= 1e-9 * a.abs());
                    }
                    assert!((fresh.total() - sim.index().total()).abs() <= 1e-9 * fresh.total());
                    let sum: f64 = sim.index().rates().iter().sum();
                    assert!((sum - sim.index().total()).abs() <= 1e-9 * sum);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_mass_conserving() {
        let shape = LatticeShape::new(2, 5).unwrap();
        let h = HeightField::sample(shape, |x| 4.0 * (6.28 * x[0]).sin() * (6.28 * x[1]).cos());
        let p = ModelParams::new(1.0, Potential::gaussian(), shape).unwrap();
        let times = [0.0, 0.5, 1.0, 2.0];
        let a = run(&h, &p, 3.0, &times, &RandomSource::new(99).split(2)).unwrap();
        let b = run(&h, &p, 3.0, &times, &RandomSource::new(99).split(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.snapshots.len(), 5);
        assert!(a.event_count > 0);
        assert!(a.snapshots.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(a.snapshots.iter().all(|s| s.surface.mass() == h.mass()
            && s.surface.heights().iter().sum::<i64>() == h.mass()));
        let c = run(&h, &p, 3.0, &times, &RandomSource::new(99).split(3)).unwrap();
        assert_ne!(a.snapshots.last(), c.snapshots.last());
    }

    #[test]
    fn trajectory_outputs() {
        let (h, p) = sos_flat(3);
        let tr = run(&h, &p, 1.0, &[0.0], &RandomSource::new(3)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,site,height\n0e0,0,0\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        let meta: serde_json::Value = serde_json::from_str(&tr.metadata_json().unwrap()).unwrap();
        assert_eq!(meta["seed"], 3);
        assert_eq!(meta["params"]["K"], 1.5);
    }

    #[test]
    fn stall_is_reported() {
        let shape = LatticeShape::new(1, 3).unwrap();
        let h = HeightField::from_heights(shape, vec![1_000_000, 0, 1_000_000]).unwrap();
        let p = ModelParams::new(5.0, Potential::gaussian(), shape).unwrap();
        let mut sim = Simulator::new(h, p, &RandomSource::new(1)).unwrap();
        // The peaks' rates overflow to infinity.
        assert!(matches!(sim.step(), Err(Error::Stall { .. })));
    }
}
