//! Experiment orchestration over the transfer-operator stack: strict config
//! ingestion, named system builders, one runner per experiment kind, and
//! artifact persistence. The binary is a thin shell over [execute].

pub mod build;
pub mod config;
pub mod experiments;
pub mod observables;
pub mod record;

use config::ExperimentConfig;
use record::ResultRecord;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ErgoError {
    #[error("config error: {0}")]
    Config(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error(transparent)]
    Map(#[from] base_dynamics::MapError),
    #[error(transparent)]
    Potential(#[from] potentials::PotentialError),
    #[error(transparent)]
    Skew(#[from] skew_transfer::SkewError),
    #[error(transparent)]
    Measure(#[from] measures::MeasureError),
    #[error(transparent)]
    Ruelle(#[from] ruelle::RuelleError),
    #[error(transparent)]
    Stats(#[from] statistics::StatsError),
    #[error(transparent)]
    Stability(#[from] stability::StabilityError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub struct RunOutcome {
    pub record: ResultRecord,
    pub out_dir: PathBuf,
}

/// Full run: parse and validate the config, apply CLI/env overrides, write
/// the resolved config and all experiment artifacts under the output
/// directory, and return the filled record. Output resolution order:
/// ERGOLAB_OUT, then --out, then the config's output.directory.
pub fn execute(kind: &str, config_path: &Path, ov: &Overrides) -> Result<RunOutcome, ErgoError> {
    let mut cfg = ExperimentConfig::from_path(config_path)?;
    if cfg.experiment.kind != kind {
        return Err(ErgoError::Config(format!(
            "subcommand '{kind}' does not match experiment kind '{}' in {}",
            cfg.experiment.kind,
            config_path.display()
        )));
    }
    if let Some(seed) = ov.seed {
        cfg.output.seed = seed;
    }
    let out_dir = std::env::var_os("ERGOLAB_OUT")
        .map(PathBuf::from)
        .or_else(|| ov.out.clone())
        .unwrap_or_else(|| cfg.output.directory.clone());
    cfg.output.directory = out_dir.clone();

    let workers = match ov.workers {
        Some(k) if k > 0 => {
            // a no-op if some earlier call already built the global pool;
            // the record carries the count actually in effect
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            rayon::current_num_threads()
        }
        _ => rayon::current_num_threads(),
    };

    std::fs::create_dir_all(&out_dir)?;
    let resolved = cfg.to_toml()?;
    std::fs::write(out_dir.join("resolved_config.toml"), &resolved)?;
    let hash = record::config_hash(&resolved);
    let mut rec = ResultRecord::new(&cfg.experiment.kind, hash, workers, cfg.output.seed);
    rec.file("resolved_config.toml");

    let env = experiments::RunEnv { cfg: &cfg, out: &out_dir, seed: cfg.output.seed };
    experiments::dispatch(&env, &mut rec)?;
    rec.write_summary(&out_dir)?;
    Ok(RunOutcome { record: rec, out_dir })
}
