//! Experiment drivers: JSON specs in, CSV fields and a checksummed manifest
//! out.

pub mod artifact;
pub mod drivers;
pub mod profiles;
pub mod self_similar;
pub mod spec;
pub mod wetting;

use std::path::{Path, PathBuf};

pub use artifact::{ArtifactWriter, FileEntry, Manifest};
pub use profiles::{initial_profile, Profile};
pub use self_similar::{self_similar_iterate, SelfSimilarResult};
pub use spec::{ExperimentKind, ExperimentSpec, OUT_DIR_ENV};
pub use wetting::{wetting_report, SupportRow, WettingReport};

use crate::error::{Error, Result};

/// Where a run went and how it ended. A driver failure leaves the files
/// written so far plus a manifest with `status = "failed"`.
#[derive(Debug)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub failure: Option<Error>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides every other output directory setting.
    pub out: Option<PathBuf>,
    /// Worker threads recorded in the manifest; zero means all cores.
    pub threads: usize,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Validates `spec`, dispatches to its driver and writes the manifest.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<RunArtifact> {
    spec.validate()?;
    let dir = spec.resolve_output_dir(opts.out.as_deref());
    let mut w = ArtifactWriter::create(&dir)?;
    let outcome = match spec.experiment {
        ExperimentKind::MicroVsPde => drivers::micro_vs_pde(spec, &mut w),
        ExperimentKind::SigmaCompare => drivers::sigma_compare(spec, &mut w),
        ExperimentKind::GeneratorTest => drivers::generator_test(spec, &mut w),
        ExperimentKind::BarsigmaScaling => drivers::barsigma_scaling(spec, &mut w),
        ExperimentKind::SelfSimilar => drivers::self_similar(spec, &mut w),
        ExperimentKind::Wetting => drivers::wetting(spec, &mut w),
    };
    let threads = if opts.threads == 0 { default_threads() } else { opts.threads };
    let (summary, failure) = match outcome {
        Ok(s) => (Ok(s), None),
        Err(e) => (Err(e.to_string()), Some(e)),
    };
    let manifest = w.finish(spec.experiment.name(), serde_json::to_value(spec)?, spec.seed, threads, summary)?;
    Ok(RunArtifact { dir, manifest, failure })
}

/// Loads a spec file, applying an optional seed override.
pub fn load_spec(path: &Path, seed: Option<u64>) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}
