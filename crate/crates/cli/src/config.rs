//! Run configuration: defaults, then the TOML config file, then command-line
//! flags. The sidecar endpoint variable sits between the file and the flag.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use commscore::duplicate::{DuplicateConfig, DEFAULT_THRESHOLD, DEFAULT_WINDOW_S};
use commscore::parasite::{ParasiteLexicon, RefinementConfig};
use commscore::report::AnalysisConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_OUT: &str = "commscore-out";
pub const DEFAULT_CACHE_DIR: &str = ".commscore-cache";
pub const CACHE_FILE: &str = "embeddings.cache";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Mock,
    Sidecar,
    CachedSidecar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Svg,
}

/// Config file contents. Every field is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duplicate_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parasite_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<ProviderKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<OutputFormat>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<FileRefinement>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRefinement {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_target_tokens: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_window_s: Option<f64>,
}

impl FileConfig {
    pub fn parse(raw: &str) -> Result<Self, String> {
        toml::from_str(raw).map_err(|e| e.to_string())
    }

    /// Loads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&raw).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.lexicon, &mut cfg.cache_dir, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Values given on the command line; `None` means not given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub window_s: Option<f64>,
    pub duplicate_threshold: Option<f64>,
    pub parasite_threshold: Option<f64>,
    /// `--threshold`: both thresholds, below the specific flags.
    pub threshold: Option<f64>,
    pub lexicon: Option<PathBuf>,
    pub provider: Option<ProviderKind>,
    pub endpoint: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<OutputFormat>>,
    pub refinement: Option<bool>,
    pub max_target_tokens: Option<usize>,
    pub context_window_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub window_s: f64,
    pub duplicate_threshold: f64,
    pub parasite_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub provider: ProviderKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub cache_dir: PathBuf,
    pub out: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub refinement: RunRefinement,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRefinement {
    pub enabled: bool,
    pub max_target_tokens: usize,
    pub context_window_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let r = RefinementConfig::default();
        Self {
            window_s: DEFAULT_WINDOW_S,
            duplicate_threshold: DEFAULT_THRESHOLD,
            parasite_threshold: DEFAULT_THRESHOLD,
            lexicon: None,
            provider: ProviderKind::Mock,
            endpoint: None,
            cache_dir: PathBuf::from(DEFAULT_CACHE_DIR),
            out: PathBuf::from(DEFAULT_OUT),
            formats: vec![OutputFormat::Json, OutputFormat::Svg],
            refinement: RunRefinement {
                enabled: r.enabled,
                max_target_tokens: r.max_target_tokens,
                context_window_s: r.context_window_s,
            },
        }
    }
}

impl RunConfig {
    pub fn resolve(
        file: &FileConfig,
        env_endpoint: Option<String>,
        flags: &Overrides,
    ) -> Result<Self, CliError> {
        let d = Self::default();
        let fr = file.refinement.clone().unwrap_or_default();
        let mut formats = flags
            .formats
            .clone()
            .or_else(|| file.formats.clone())
            .unwrap_or(d.formats);
        formats.sort();
        formats.dedup();
        let cfg = Self {
            window_s: flags.window_s.or(file.window_s).unwrap_or(d.window_s),
            duplicate_threshold: flags
                .duplicate_threshold
                .or(flags.threshold)
                .or(file.duplicate_threshold)
                .unwrap_or(d.duplicate_threshold),
            parasite_threshold: flags
                .parasite_threshold
                .or(flags.threshold)
                .or(file.parasite_threshold)
                .unwrap_or(d.parasite_threshold),
            lexicon: flags.lexicon.clone().or_else(|| file.lexicon.clone()),
            provider: flags.provider.or(file.provider).unwrap_or(d.provider),
            endpoint: flags
                .endpoint
                .clone()
                .or(env_endpoint)
                .or_else(|| file.endpoint.clone()),
            cache_dir: flags
                .cache_dir
                .clone()
                .or_else(|| file.cache_dir.clone())
                .unwrap_or(d.cache_dir),
            out: flags.out.clone().or_else(|| file.out.clone()).unwrap_or(d.out),
            formats,
            refinement: RunRefinement {
                enabled: flags.refinement.or(fr.enabled).unwrap_or(d.refinement.enabled),
                max_target_tokens: flags
                    .max_target_tokens
                    .or(fr.max_target_tokens)
                    .unwrap_or(d.refinement.max_target_tokens),
                context_window_s: flags
                    .context_window_s
                    .or(fr.context_window_s)
                    .unwrap_or(d.refinement.context_window_s),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        DuplicateConfig::new(self.window_s, self.duplicate_threshold)?;
        DuplicateConfig::new(self.window_s, self.parasite_threshold)
            .map_err(|_| CliError::Validation(format!(
                "parasite threshold must lie in (0, 1], got {}",
                self.parasite_threshold
            )))?;
        self.refinement_config()?;
        if self.formats.is_empty() {
            return Err(CliError::Validation("at least one output format is required".into()));
        }
        if self.provider != ProviderKind::Mock && self.endpoint.is_none() {
            return Err(CliError::Validation(
                "the sidecar provider needs an endpoint (--endpoint or COMMSCORE_SIDECAR_ENDPOINT)".into(),
            ));
        }
        Ok(())
    }

    fn refinement_config(&self) -> Result<RefinementConfig, CliError> {
        let r = &self.refinement;
        Ok(RefinementConfig::new(r.enabled, r.max_target_tokens, r.context_window_s)?)
    }

    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }

    pub fn analysis_config(&self) -> Result<AnalysisConfig, CliError> {
        let lexicon = match &self.lexicon {
            None => ParasiteLexicon::default(),
            Some(path) => {
                let raw = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                ParasiteLexicon::parse(&raw)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
            }
        };
        Ok(AnalysisConfig {
            duplicates: DuplicateConfig::new(self.window_s, self.duplicate_threshold)?,
            parasite_threshold: self.parasite_threshold,
            refinement: self.refinement_config()?,
            lexicon,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
