use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::profiles::Profile;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pde::{CoefficientConvention, PdeConfig, PdeKind, TensionSource};
use crate::potential::Potential;
use crate::scaling::{ScalingKind, ScalingMode};
use crate::tension::{TensionKind, TensionSpec};

/// Environment variable overriding the output directory of every run.
pub const OUT_DIR_ENV: &str = "CRYSTAL_RELAX_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MicroVsPde,
    SigmaCompare,
    GeneratorTest,
    BarsigmaScaling,
    SelfSimilar,
    Wetting,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::MicroVsPde => "micro_vs_pde",
            ExperimentKind::SigmaCompare => "sigma_compare",
            ExperimentKind::GeneratorTest => "generator_test",
            ExperimentKind::BarsigmaScaling => "barsigma_scaling",
            ExperimentKind::SelfSimilar => "self_similar",
            ExperimentKind::Wetting => "wetting",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSettings {
    /// Grid side; defaults to 128 in 1-d and 64 in 2-d.
    #[serde(default)]
    pub m: Option<usize>,
    /// Tension for the smooth PDE.
    #[serde(default = "default_tension")]
    pub tension: TensionKind,
    #[serde(default)]
    pub convention: CoefficientConvention,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_safety")]
    pub dt_safety: f64,
    /// Spacing of tabulated tensions.
    #[serde(default = "default_du")]
    pub table_du: f64,
    /// Also evolve the smooth PDE and compare it against the data of a
    /// rough-scaling run.
    #[serde(default)]
    pub smooth_reference: bool,
}

fn default_tension() -> TensionKind {
    TensionKind::Discrete
}

fn default_tol() -> f64 {
    1e-8
}

fn default_safety() -> f64 {
    1.0
}

fn default_du() -> f64 {
    0.01
}

impl Default for PdeSettings {
    fn default() -> Self {
        PdeSettings {
            m: None,
            tension: default_tension(),
            convention: CoefficientConvention::default(),
            tol: default_tol(),
            dt_safety: default_safety(),
            table_du: default_du(),
            smooth_reference: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSettings {
    /// Trajectories per lattice size.
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Microscopic time simulated before the averaging window opens.
    #[serde(default)]
    pub burn_in_micro: f64,
    #[serde(default = "default_batch")]
    pub batch_size: u64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_samples() -> u64 {
    1000
}

fn default_batch() -> u64 {
    64
}

fn default_bootstrap() -> usize {
    200
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        GeneratorSettings {
            samples: default_samples(),
            burn_in_micro: 0.0,
            batch_size: default_batch(),
            bootstrap: default_bootstrap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfSimilarSettings {
    #[serde(default = "default_ss_tol")]
    pub tol: f64,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
}

fn default_ss_tol() -> f64 {
    1e-4
}

fn default_iter() -> usize {
    50
}

impl Default for SelfSimilarSettings {
    fn default() -> Self {
        SelfSimilarSettings { tol: default_ss_tol(), max_iter: default_iter() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WettingSettings {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    1e-8
}

impl Default for WettingSettings {
    fn default() -> Self {
        WettingSettings { threshold: default_threshold() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarsigmaSettings {
    #[serde(default = "default_kappas")]
    pub kappas: Vec<f64>,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_kappas() -> Vec<f64> {
    vec![1.0, 3.0, 10.0, 30.0, 100.0]
}

fn default_u_max() -> f64 {
    2.0
}

fn default_points() -> usize {
    4001
}

impl Default for BarsigmaSettings {
    fn default() -> Self {
        BarsigmaSettings { kappas: default_kappas(), u_max: default_u_max(), points: default_points() }
    }
}

/// One experiment, as read from a JSON spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Lattice sides.
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(rename = "K")]
    pub k: f64,
    pub p: f64,
    #[serde(default)]
    pub scaling: ScalingMode,
    #[serde(default)]
    pub profile: Option<Profile>,
    /// Factor applied to the initial profile.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Final macroscopic time (averaging window for `generator_test`,
    /// iteration interval for `self_similar`).
    #[serde(default)]
    pub t_end: f64,
    /// Macroscopic snapshot times; `t_end` is always included.
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub pde: PdeSettings,
    #[serde(default)]
    pub generator: GeneratorSettings,
    #[serde(default)]
    pub self_similar: SelfSimilarSettings,
    #[serde(default)]
    pub wetting: WettingSettings,
    #[serde(default)]
    pub barsigma: BarsigmaSettings,
    /// Free-form notes, e.g. the full-scale parameters a desk-scale spec
    /// stands in for. Never read by the drivers.
    #[serde(default)]
    pub notes: Option<serde_json::Value>,
}

fn default_d() -> usize {
    1
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_ensemble() -> usize {
    1
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("spec", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn potential(&self) -> Result<Potential> {
        Potential::new(self.p).map_err(|e| Error::config("p", e.to_string()))
    }

    pub fn profile(&self) -> Profile {
        self.profile.unwrap_or_else(|| Profile::default_for(self.d))
    }

    pub fn scaling_kind(&self) -> Result<ScalingKind> {
        ScalingKind::new(self.scaling, &self.potential()?).map_err(|e| Error::config("scaling", e.to_string()))
    }

    /// Snapshot times with `t_end` appended.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut t = self.times.clone();
        if t.last().is_none_or(|&last| last < self.t_end) {
            t.push(self.t_end);
        }
        t
    }

    pub fn grid_side(&self) -> usize {
        self.pde.m.unwrap_or(if self.d == 2 { 64 } else { 128 })
    }

    /// Output directory: an explicit override, then the environment
    /// variable, then the spec, then `out/<experiment>`.
    pub fn resolve_output_dir(&self, explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(self.experiment.name()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d == 1 || self.d == 2) {
            return Err(Error::config("d", "must be 1 or 2"));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::config("K", "must be > 0"));
        }
        self.potential()?;
        self.profile().check_dim(self.d)?;
        if !(self.amplitude != 0.0 && self.amplitude.is_finite()) {
            return Err(Error::config("amplitude", "must be finite and non-zero"));
        }
        if self.scaling == ScalingMode::Rough {
            self.scaling_kind()?;
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "must be finite and >= 0"));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) || self.times.iter().any(|&t| !(t >= 0.0) || t > self.t_end) {
            return Err(Error::config("times", "snapshot times must be sorted and within [0, t_end]"));
        }
        if self.ensemble == 0 {
            return Err(Error::config("ensemble", "must be >= 1"));
        }
        if self.n.iter().any(|&n| n < 3) {
            return Err(Error::config("n", "lattice sides must be >= 3"));
        }
        if self.grid_side() < 3 {
            return Err(Error::config("pde.m", "grid side must be >= 3"));
        }
        if !(self.pde.table_du > 0.0) {
            return Err(Error::config("pde.table_du", "must be > 0"));
        }
        match self.experiment {
            ExperimentKind::MicroVsPde | ExperimentKind::GeneratorTest if self.n.is_empty() => {
                return Err(Error::config("n", "needs at least one lattice side"));
            }
            ExperimentKind::GeneratorTest => {
                if !(self.t_end > 0.0) {
                    return Err(Error::config("t_end", "the averaging window must be positive"));
                }
                if self.generator.samples == 0 {
                    return Err(Error::config("generator.samples", "must be >= 1"));
                }
            }
            ExperimentKind::SelfSimilar => {
                if !(self.t_end > 0.0) {
                    return Err(Error::config("t_end", "the iteration interval must be positive"));
                }
                if self.self_similar.max_iter == 0 || !(self.self_similar.tol > 0.0) {
                    return Err(Error::config("self_similar", "need tol > 0 and max_iter >= 1"));
                }
            }
            ExperimentKind::Wetting => {
                if !(self.wetting.threshold > 0.0) {
                    return Err(Error::config("wetting.threshold", "must be > 0"));
                }
            }
            ExperimentKind::BarsigmaScaling => {
                if self.barsigma.kappas.is_empty() || self.barsigma.kappas.iter().any(|&k| !(k > 0.0)) {
                    return Err(Error::config("barsigma.kappas", "need positive scale factors"));
                }
                if !(self.barsigma.u_max > 0.0) || self.barsigma.points < 2 {
                    return Err(Error::config("barsigma", "need u_max > 0 and at least two points"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The PDE matching `kind` for this spec's model, with a tension table
    /// sized for the initial profile.
    pub fn pde_config(&self, kind: PdeKind, tension: TensionKind) -> Result<PdeConfig> {
        let v = self.potential()?;
        let spec = match kind {
            PdeKind::Rough => TensionSpec::asymptotic(self.k, v)?,
            PdeKind::Smooth => TensionSpec::new(self.k, v, tension)?,
        };
        let reach = 1.25 * self.amplitude.abs() * self.profile().max_gradient();
        let source = TensionSource::build(&spec, reach, self.pde.table_du)?;
        let mut cfg = PdeConfig::new(kind, source, self.k, self.t_end)
            .with_snapshots(self.snapshot_times())
            .with_convention(self.pde.convention);
        cfg.tol = self.pde.tol;
        cfg.dt_safety = self.pde.dt_safety;
        cfg.validate()?;
        Ok(cfg)
    }

    /// PDE matching the spec's scaling.
    pub fn primary_pde(&self) -> Result<PdeConfig> {
        match self.scaling {
            ScalingMode::Smooth => self.pde_config(PdeKind::Smooth, self.pde.tension),
            ScalingMode::Rough => self.pde_config(PdeKind::Rough, TensionKind::Asymptotic),
        }
    }
}
