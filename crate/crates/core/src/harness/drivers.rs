use rand::Rng;
use serde::Serialize;
use serde_json::json;

use super::artifact::{num, ArtifactWriter};
use super::profiles;
use super::self_similar::self_similar_iterate;
use super::spec::ExperimentSpec;
use super::wetting::wetting_report;
use crate::error::{Error, Result};
use crate::field::ContinuumField;
use crate::kmc::{self, generator_estimate, BatchSum, GeneratorConfig, GeneratorEstimate, ModelParams};
use crate::pde::{evolve, rhs_smooth, Evolution, PdeConfig, PdeKind};
use crate::rng::RandomSource;
use crate::scaling::{compare, ensemble_mean, ensemble_stderr, project, Metrics, ScalingKind};
use crate::surface::{HeightField, LatticeShape};
use crate::tension::{sigma_d, TensionKind, TensionSpec};

/// Stream index reserved for bootstrap resampling.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// `|max + min|`, zero for profiles odd under reflection.
pub fn asymmetry(f: &ContinuumField) -> f64 {
    (f.max() + f.min()).abs()
}

/// The spec's initial profile on the PDE grid.
pub fn profile_field(spec: &ExperimentSpec, m: usize) -> Result<ContinuumField> {
    let f = profiles::sample(spec.profile(), spec.d, m)?;
    f.with_values(f.values().iter().map(|v| spec.amplitude * v).collect())
}

/// The initial profile lifted to lattice heights `round(N^a f(alpha/N))`.
pub fn lattice_initial(spec: &ExperimentSpec, n: usize, kind: &ScalingKind) -> Result<HeightField> {
    let shape = LatticeShape::new(spec.d, n)?;
    let profile = spec.profile();
    Ok(HeightField::sample(shape, |x| kind.micro_height(spec.amplitude * profile.eval(x), n)))
}

/// Ensemble-averaged projections of KMC runs on one lattice.
#[derive(Clone, Debug)]
pub struct EnsembleProjection {
    pub n: usize,
    /// Macroscopic snapshot times.
    pub times: Vec<f64>,
    pub mean: Vec<ContinuumField>,
    pub stderr: Vec<ContinuumField>,
    pub events: Vec<u64>,
    pub initial_mass: i64,
    /// Largest deviation of any snapshot mass from the initial mass.
    pub mass_drift: i64,
}

impl EnsembleProjection {
    pub fn series(&self) -> Vec<(f64, ContinuumField)> {
        self.times.iter().copied().zip(self.mean.iter().cloned()).collect()
    }

    pub fn stderr_series(&self) -> Vec<(f64, ContinuumField)> {
        self.times.iter().copied().zip(self.stderr.iter().cloned()).collect()
    }
}

/// Runs `spec.ensemble` trajectories on an `n`-lattice, member `i` drawing
/// from `seed / n / i`, and averages their projections at each snapshot.
pub fn ensemble_projection(spec: &ExperimentSpec, n: usize) -> Result<EnsembleProjection> {
    let kind = spec.scaling_kind()?;
    let h0 = lattice_initial(spec, n, &kind)?;
    let params = ModelParams::new(spec.k, spec.potential()?, *h0.shape())?;
    let times = spec.snapshot_times();
    let micro: Vec<f64> = times.iter().map(|&t| kind.micro_time(t, n)).collect();
    let t_end = *micro.last().expect("t_end is always a snapshot");
    let root = RandomSource::new(spec.seed).split(n as u64);
    let members = spec.execution.try_map(spec.ensemble, |i| {
        let tr = kmc::run(&h0, &params, t_end, &micro, &root.split(i as u64))?;
        let fields: Vec<ContinuumField> = tr.snapshots.iter().map(|s| project(&s.surface, s.time, &kind).1).collect();
        let drift = tr.snapshots.iter().map(|s| (s.surface.mass() - h0.mass()).abs()).max().unwrap_or(0);
        Ok::<_, Error>((fields, tr.event_count, drift))
    })?;
    let mut mean = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let at: Vec<ContinuumField> = members.iter().map(|m| m.0[k].clone()).collect();
        mean.push(ensemble_mean(&at)?);
        stderr.push(ensemble_stderr(&at)?);
    }
    Ok(EnsembleProjection {
        n,
        times,
        mean,
        stderr,
        events: members.iter().map(|m| m.1).collect(),
        initial_mass: h0.mass(),
        mass_drift: members.iter().map(|m| m.2).max().unwrap_or(0),
    })
}

/// Evolves the spec's profile on its PDE grid.
pub fn evolve_profile(spec: &ExperimentSpec, cfg: &PdeConfig) -> Result<Evolution> {
    evolve(&profile_field(spec, spec.grid_side())?, cfg)
}

/// PDE snapshot at time `t`, if the run reached it.
fn snapshot_at(ev: &Evolution, t: f64) -> Option<&ContinuumField> {
    ev.snapshots.iter().find(|s| s.0 == t).map(|s| &s.1)
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub time: f64,
    pub reference: &'static str,
    pub metrics: Metrics,
    pub asymmetry_micro: f64,
    pub asymmetry_pde: f64,
}

pub fn compare_ensemble(ens: &EnsembleProjection, ev: &Evolution, reference: &'static str) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for (t, mean) in ens.times.iter().zip(&ens.mean) {
        if let Some(pde) = snapshot_at(ev, *t) {
            rows.push(ComparisonRow {
                n: ens.n,
                time: *t,
                reference,
                metrics: compare(mean, pde)?,
                asymmetry_micro: asymmetry(mean),
                asymmetry_pde: asymmetry(pde),
            });
        }
    }
    Ok(rows)
}

fn comparison_csv(w: &mut ArtifactWriter, rows: &[ComparisonRow], d: usize) -> Result<()> {
    let mut cols = vec!["n", "time", "reference", "linf", "l2", "argmax_x"];
    if d == 2 {
        cols.push("argmax_y");
    }
    cols.extend(["asymmetry_micro", "asymmetry_pde"]);
    let body = rows.iter().map(|r| {
        let mut row = vec![r.n.to_string(), num(r.time), r.reference.to_string(), num(r.metrics.linf), num(r.metrics.l2)];
        row.extend(r.metrics.argmax.iter().map(|&x| num(x)));
        row.extend([num(r.asymmetry_micro), num(r.asymmetry_pde)]);
        row
    });
    w.csv("metrics.csv", &cols, body.collect::<Vec<_>>())?;
    Ok(())
}

fn mass_rows(source: &str, series: &[(f64, ContinuumField)]) -> Vec<Vec<String>> {
    series.iter().map(|(t, f)| vec![source.to_string(), num(*t), num(f.mean())]).collect()
}

fn write_evolution(w: &mut ArtifactWriter, name: &str, ev: &Evolution) -> Result<()> {
    w.field_series(&format!("{name}.csv"), &ev.snapshots)?;
    w.json(&format!("{name}_steps.json"), &json!({ "stats": ev.stats, "blow_up": ev.blow_up }))?;
    Ok(())
}

fn check_blow_up(ev: &Evolution) -> Result<()> {
    match ev.blow_up {
        Some(b) => Err(Error::BlowUp { cell: b.cell, time: b.time, exponent: b.exponent }),
        None => Ok(()),
    }
}

/// Ensemble KMC against the PDE of the spec's scaling.
pub fn micro_vs_pde(spec: &ExperimentSpec, w: &mut ArtifactWriter) -> Result<serde_json::Value> {
    let mut mass = Vec::new();
    let pde = evolve_profile(spec, &spec.primary_pde()?)?;
    write_evolution(w, "pde", &pde)?;
    mass.extend(mass_rows("pde", &pde.snapshots));
    let smooth = if spec.pde.smooth_reference && spec.scaling == crate::scaling::ScalingMode::Rough {
        let ev = evolve_profile(spec, &spec.pde_config(PdeKind::Smooth, spec.pde.tension)?)?;
        write_evolution(w, "pde_smooth", &ev)?;
        mass.extend(mass_rows("pde_smooth", &ev.snapshots));
        Some(ev)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut lattices = Vec::new();
    for &n in &spec.n {
        let ens = ensemble_projection(spec, n)?;
        w.field_series(&format!("micro_n{n}_mean.csv"), &ens.series())?;
        w.field_series(&format!("micro_n{n}_stderr.csv"), &ens.stderr_series())?;
        mass.extend(mass_rows(&format!("micro_n{n}"), &ens.series()));
        rows.extend(compare_ensemble(&ens, &pde, "pde")?);
        if let Some(ev) = &smooth {
            rows.extend(compare_ensemble(&ens, ev, "pde_smooth")?);
        }
        comparison_csv(w, &rows, spec.d)?;
        lattices.push(json!({
            "n": n,
            "initial_mass": ens.initial_mass,
            "mass_drift": ens.mass_drift,
            "mean_events": ens.events.iter().sum::<u64>() as f64 / ens.events.len() as f64,
        }));
    }
    w.csv("mass.csv", &["source", "time", "mean_height"], mass)?;
    check_blow_up(&pde)?;
    Ok(json!({ "comparisons": rows, "lattices": lattices }))
}

#[derive(Clone, Debug)]
pub struct SigmaComparison {
    pub discrete: Evolution,
    pub continuous: Evolution,
    pub metrics: Vec<(f64, Metrics)>,
}

pub fn sigma_comparison(spec: &ExperimentSpec) -> Result<SigmaComparison> {
    let discrete = evolve_profile(spec, &spec.pde_config(PdeKind::Smooth, TensionKind::Discrete)?)?;
    let continuous = evolve_profile(spec, &spec.pde_config(PdeKind::Smooth, TensionKind::Continuous)?)?;
    let metrics = discrete
        .snapshots
        .iter()
        .zip(&continuous.snapshots)
        .map(|(a, b)| Ok((a.0, compare(&a.1, &b.1)?)))
        .collect::<Result<_>>()?;
    Ok(SigmaComparison { discrete, continuous, metrics })
}

/// Smooth PDE with the discrete tension against the continuous one.
pub fn sigma_compare(spec: &ExperimentSpec, w: &mut ArtifactWriter) -> Result<serde_json::Value> {
    let r = sigma_comparison(spec)?;
    write_evolution(w, "pde_discrete", &r.discrete)?;
    write_evolution(w, "pde_continuous", &r.continuous)?;
    let rows = r.metrics.iter().map(|(t, m)| vec![num(*t), num(m.linf), num(m.l2)]);
    w.csv("metrics.csv", &["time", "linf", "l2"], rows.collect::<Vec<_>>())?;
    let mut mass = mass_rows("pde_discrete", &r.discrete.snapshots);
    mass.extend(mass_rows("pde_continuous", &r.continuous.snapshots));
    w.csv("mass.csv", &["source", "time", "mean_height"], mass)?;
    let last = r.metrics.last().map(|m| m.1.clone());
    Ok(json!({ "final": last }))
}

#[derive(Clone, Debug)]
pub struct GeneratorTest {
    pub n: usize,
    pub estimate: GeneratorEstimate,
    pub rhs_discrete: ContinuumField,
    pub rhs_continuous: ContinuumField,
    pub distance_discrete: f64,
    pub distance_continuous: f64,
    /// Bootstrap standard error of `distance_continuous - distance_discrete`.
    pub bootstrap_se: f64,
}

impl GeneratorTest {
    /// Distance gap in units of its bootstrap standard error; positive when
    /// the discrete tension fits better.
    pub fn z_score(&self) -> f64 {
        (self.distance_continuous - self.distance_discrete) / self.bootstrap_se
    }
}

/// Grid `L2` distance `sqrt(sum (a-b)^2 / N^d)`.
fn l2(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

fn pooled_mean(batches: &[&BatchSum]) -> Vec<f64> {
    let mut acc = BatchSum::empty(batches[0].sum.len());
    for b in batches {
        acc.merge(b);
    }
    acc.mean()
}

/// Generator estimate on an `n`-lattice against `rhs_smooth` of the profile
/// with each tension.
pub fn generator_comparison(spec: &ExperimentSpec, n: usize) -> Result<GeneratorTest> {
    let kind = ScalingKind::smooth();
    let h0 = lattice_initial(spec, n, &kind)?;
    let params = ModelParams::new(spec.k, spec.potential()?, *h0.shape())?;
    let n4 = (n as f64).powi(4);
    let mut cfg = GeneratorConfig::new(spec.t_end, spec.generator.samples);
    cfg.burn_in = spec.generator.burn_in_micro / n4;
    cfg.batch_size = spec.generator.batch_size;
    cfg.execution = spec.execution;
    let root = RandomSource::new(spec.seed).split(n as u64);
    let estimate = generator_estimate(&h0, &params, &cfg, &root)?;
    let field = profile_field(spec, n)?;
    let rhs_discrete = rhs_smooth(&field, &spec.pde_config(PdeKind::Smooth, TensionKind::Discrete)?)?;
    let rhs_continuous = rhs_smooth(&field, &spec.pde_config(PdeKind::Smooth, TensionKind::Continuous)?)?;
    let gap = |mean: &[f64]| l2(mean, rhs_continuous.values()) - l2(mean, rhs_discrete.values());
    let mut rng = root.split(BOOTSTRAP_STREAM).stream();
    let nb = estimate.batches.len();
    let draws: Vec<f64> = (0..spec.generator.bootstrap.max(2))
        .map(|_| {
            let pick: Vec<&BatchSum> = (0..nb).map(|_| &estimate.batches[rng.random_range(0..nb)]).collect();
            gap(&pooled_mean(&pick))
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (draws.len() - 1) as f64;
    Ok(GeneratorTest {
        n,
        distance_discrete: l2(estimate.estimate.values(), rhs_discrete.values()),
        distance_continuous: l2(estimate.estimate.values(), rhs_continuous.values()),
        bootstrap_se: var.sqrt(),
        estimate,
        rhs_discrete,
        rhs_continuous,
    })
}

pub fn generator_test(spec: &ExperimentSpec, w: &mut ArtifactWriter) -> Result<serde_json::Value> {
    let mut out = Vec::new();
    let mut mass = Vec::new();
    for &n in &spec.n {
        let r = generator_comparison(spec, n)?;
        let mut buf = Vec::new();
        r.estimate.write_csv(&mut buf)?;
        w.write(&format!("estimate_n{n}.csv"), &["site", "estimate", "standard_error"], &buf)?;
        let rows = (0..r.rhs_discrete.len()).map(|k| {
            vec![k.to_string(), num(r.rhs_discrete.values()[k]), num(r.rhs_continuous.values()[k])]
        });
        w.csv(&format!("rhs_n{n}.csv"), &["site", "rhs_discrete", "rhs_continuous"], rows.collect::<Vec<_>>())?;
        mass.push(vec![format!("estimate_n{n}"), num(0.0), num(r.estimate.estimate.mean())]);
        out.push(json!({
            "n": n,
            "samples": r.estimate.samples(),
            "distance_discrete": r.distance_discrete,
            "distance_continuous": r.distance_continuous,
            "bootstrap_se": r.bootstrap_se,
            "z_score": r.z_score(),
        }));
    }
    w.csv("mass.csv", &["source", "time", "mean_drift"], mass)?;
    Ok(json!({ "lattices": out }))
}

/// `sup_{|u| <= u_max} |kappa^(1-p) sigma_D(kappa u) - V'(u)|` per `kappa`,
/// with the scaled tension on the sample grid.
#[derive(Clone, Debug)]
pub struct BarsigmaRow {
    pub kappa: f64,
    pub sup_error: f64,
    pub u: Vec<f64>,
    pub scaled: Vec<f64>,
}

pub fn barsigma_rows(spec: &ExperimentSpec) -> Result<Vec<BarsigmaRow>> {
    let v = spec.potential()?;
    let p = v.degree();
    let tension = TensionSpec::discrete(spec.k, v)?;
    let s = &spec.barsigma;
    let u: Vec<f64> = (0..s.points).map(|i| -s.u_max + 2.0 * s.u_max * i as f64 / (s.points - 1) as f64).collect();
    s.kappas
        .iter()
        .map(|&kappa| {
            let scaled: Vec<f64> = u
                .iter()
                .map(|&x| Ok(kappa.powf(1.0 - p) * sigma_d(kappa * x, &tension)?))
                .collect::<Result<_>>()?;
            let sup_error = u.iter().zip(&scaled).map(|(&x, s)| (s - v.derivative(x)).abs()).fold(0.0, f64::max);
            Ok(BarsigmaRow { kappa, sup_error, u: u.clone(), scaled })
        })
        .collect()
}

pub fn barsigma_scaling(spec: &ExperimentSpec, w: &mut ArtifactWriter) -> Result<serde_json::Value> {
    let rows = barsigma_rows(spec)?;
    let v = spec.potential()?;
    let table = rows.iter().flat_map(|r| {
        r.u.iter().zip(&r.scaled).map(move |(&x, &s)| vec![num(r.kappa), num(x), num(s), num(v.derivative(x))])
    });
    w.csv("scaled_tension.csv", &["kappa", "u", "scaled_sigma", "grad_v"], table.collect::<Vec<_>>())?;
    let sup = rows.iter().map(|r| vec![num(r.kappa), num(r.sup_error)]);
    w.csv("sup_error.csv", &["kappa", "sup_error"], sup.collect::<Vec<_>>())?;
    Ok(json!({ "sup_error": rows.iter().map(|r| (r.kappa, r.sup_error)).collect::<Vec<_>>() }))
}

pub fn self_similar(spec: &ExperimentSpec, w: &mut ArtifactWriter) -> Result<serde_json::Value> {
    let cfg = spec.primary_pde()?;
    let h0 = profile_field(spec, spec.grid_side())?;
    let r = self_similar_iterate(&h0, &cfg, spec.t_end, spec.self_similar.tol, spec.self_similar.max_iter)?;
    w.field_series("profile.csv", &[(spec.t_end, r.g.clone())])?;
    let hist = r.history.iter().enumerate().map(|(i, s)| vec![(i + 1).to_string(), num(s.change), num(s.amplitude), num(s.mass)]);
    w.csv("iterations.csv", &["iteration", "linf_change", "amplitude", "mean_before_rescale"], hist.collect::<Vec<_>>())?;
    let mass = r.history.iter().enumerate().map(|(i, s)| vec!["pde".into(), (i + 1).to_string(), num(s.mass)]);
    w.csv("mass.csv", &["source", "iteration", "mean_height"], mass.collect::<Vec<_>>())?;
    let out = json!({ "iterations": r.iterations, "converged": r.converged, "final_change": r.history.last().map(|s| s.change) });
    if !r.converged {
        return Err(Error::Convergence(format!("no fixed point within {} iterations", r.iterations)));
    }
    Ok(out)
}

pub fn wetting(spec: &ExperimentSpec, w: &mut ArtifactWriter) -> Result<serde_json::Value> {
    let cfg = spec.primary_pde()?;
    let h0 = profile_field(spec, spec.grid_side())?;
    let r = wetting_report(&h0, &cfg, spec.wetting.threshold)?;
    write_evolution(w, "pde", &r.evolution)?;
    let rows = r.rows.iter().map(|b| {
        vec![num(b.time), num(b.lower), num(b.upper), num(b.wetted_fraction), b.full.to_string()]
    });
    w.csv("support.csv", &["time", "lower", "upper", "wetted_fraction", "full"], rows.collect::<Vec<_>>())?;
    w.csv("mass.csv", &["source", "time", "mean_height"], mass_rows("pde", &r.evolution.snapshots))?;
    let out = json!({ "support": r.rows });
    check_blow_up(&r.evolution)?;
    Ok(out)
}
