use std::path::{Path, PathBuf};

use sceneset_core::consolidate::Charset;
use sceneset_core::metrics::NormalizationMode;
use sceneset_core::voting::ConsensusConfig;
use serde::Deserialize;

use crate::args::GlobalArgs;
use crate::UsageError;

/// Contents of the `--config` file. Every key is optional; flags and
/// `SCENESET_*` variables take precedence over it.
///
/// ```toml
/// seed = 7
/// workers = 8
/// charset = "strict91"
/// mode = "waics"
///
/// [paths]
/// corpus = "out/instances.jsonl"
/// images = "data/images"
///
/// [consensus]
/// iou_threshold = 0.7
/// require_all_detectors = true
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub charset: Option<String>,
    pub mode: Option<NormalizationMode>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub consensus: ConsensusSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub images: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSection {
    pub iou_threshold: Option<f64>,
    pub require_all_detectors: Option<bool>,
}

impl PipelineConfig {
    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.corpus, &mut cfg.paths.images].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Settings after merging flags, environment and config file.
#[derive(Debug)]
pub struct Settings {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub dry_run: bool,
    pub file: PipelineConfig,
}

impl Settings {
    pub fn resolve(global: &GlobalArgs) -> Result<Self, UsageError> {
        let file = match &global.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let workers = global.workers.or(file.workers);
        if workers == Some(0) {
            return Err(UsageError("--workers must be at least 1".into()));
        }
        Ok(Settings { seed: global.seed.or(file.seed), workers, dry_run: global.dry_run, file })
    }

    pub fn corpus(&self, flag: &Option<PathBuf>) -> Result<PathBuf, UsageError> {
        flag.clone()
            .or_else(|| self.file.paths.corpus.clone())
            .ok_or_else(|| UsageError("no corpus given (--corpus or paths.corpus in the config)".into()))
    }

    pub fn images(&self, flag: &Option<PathBuf>) -> Option<PathBuf> {
        flag.clone().or_else(|| self.file.paths.images.clone())
    }

    pub fn mode(&self, flag: &Option<String>, fallback: NormalizationMode) -> Result<NormalizationMode, UsageError> {
        match flag {
            Some(s) => s.parse().map_err(UsageError),
            None => Ok(self.file.mode.unwrap_or(fallback)),
        }
    }

    pub fn charset(&self, flag: &Option<String>) -> Result<Charset, UsageError> {
        let name = flag.as_deref().or(self.file.charset.as_deref()).unwrap_or("ascii95");
        Charset::from_profile(name).map_err(|e| UsageError(e.to_string()))
    }

    pub fn consensus(&self, iou: Option<f64>, any_subset: bool) -> Result<ConsensusConfig, UsageError> {
        let defaults = ConsensusConfig::default();
        let threshold = iou.or(self.file.consensus.iou_threshold).unwrap_or(defaults.iou_threshold);
        let all = !any_subset && self.file.consensus.require_all_detectors.unwrap_or(defaults.require_all_detectors);
        ConsensusConfig::new(threshold, all).map_err(|e| UsageError(e.to_string()))
    }
}
