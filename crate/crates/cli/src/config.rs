//! The study config file. Relative paths resolve against the file's
//! directory; command-line flags override file values afterwards.

use std::path::{Path, PathBuf};

use moralframe_core::aggregate::AlphaOn;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Chat-completions endpoint from the environment.
    #[default]
    Http,
    /// Recorded completions keyed by request fingerprint.
    Fixture,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(BackendKind::Http),
            "fixture" => Ok(BackendKind::Fixture),
            other => Err(format!("expected `http` or `fixture`, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Required for fixture mode; the HTTP backend falls back to the
    /// environment.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_max_resamples")]
    pub max_resamples: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    /// Persistent response cache; in-memory when unset.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    /// Zero means unlimited.
    #[serde(default)]
    pub requests_per_minute: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("every model field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub study_id: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Labeled separately into `<output_dir>/pilot/`.
    #[serde(default)]
    pub pilot_corpus: Option<PathBuf>,
    /// Template TOML; the built-in 7-shot protocol when unset.
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_redundancy_k")]
    pub redundancy_k: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub ablation: bool,
    /// Annotators registered when `serve` creates the study.
    #[serde(default)]
    pub annotators: Vec<String>,
    /// Study export with the recorded judgments.
    #[serde(default)]
    pub judgments: Option<PathBuf>,
    #[serde(default)]
    pub adjudications: Option<PathBuf>,
    #[serde(default)]
    pub reasons: Option<PathBuf>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub alpha_on: AlphaOn,
    #[serde(default)]
    pub model: ModelConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_redundancy_k() -> usize {
    3
}

fn default_batch_size() -> usize {
    50
}

fn default_top_k() -> usize {
    2
}

fn default_max_output_tokens() -> u32 {
    512
}

fn default_max_resamples() -> u32 {
    3
}

fn default_concurrency() -> usize {
    4
}

fn default_max_retries() -> u32 {
    4
}

impl Default for StudyConfig {
    fn default() -> Self {
        toml::from_str("").expect("every study field has a default")
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut() {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl StudyConfig {
    /// Parses TOML text; relative paths are taken relative to `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: StudyConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for p in [
            &mut cfg.corpus,
            &mut cfg.pilot_corpus,
            &mut cfg.template,
            &mut cfg.judgments,
            &mut cfg.adjudications,
            &mut cfg.reasons,
            &mut cfg.model.fixtures,
            &mut cfg.model.cache,
        ] {
            rebase(base, p);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Loads `path` when given, the defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(StudyConfig::default()),
        }
    }

    /// Checks numeric ranges and that every input path that is set exists.
    /// The adjudications file, cache and output directory may be absent.
    pub fn validate(&self) -> Result<(), CliError> {
        let inputs = [
            ("corpus", &self.corpus),
            ("pilot_corpus", &self.pilot_corpus),
            ("template", &self.template),
            ("judgments", &self.judgments),
            ("reasons", &self.reasons),
            ("model.fixtures", &self.model.fixtures),
        ];
        for (field, path) in inputs {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(CliError::Config(format!("{field}: {} does not exist", p.display())));
                }
            }
        }
        if self.redundancy_k == 0 || self.batch_size == 0 || self.top_k == 0 {
            return Err(CliError::Config("redundancy_k, batch_size and top_k must be positive".into()));
        }
        if !(self.model.temperature >= 0.0) {
            return Err(CliError::Config("model.temperature must be non-negative".into()));
        }
        if self.model.concurrency == 0 {
            return Err(CliError::Config("model.concurrency must be positive".into()));
        }
        if self.model.backend == BackendKind::Fixture {
            if self.model.fixtures.is_none() {
                return Err(CliError::Config("fixture backend needs model.fixtures".into()));
            }
            if self.model.name.is_none() {
                return Err(CliError::Config("fixture backend needs model.name".into()));
            }
        }
        Ok(())
    }

    pub fn require<'a>(field: &str, value: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("{field} is not set (config file or flag)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let cfg = StudyConfig::from_toml_str(
            "corpus = \"c.jsonl\"\noutput_dir = \"/abs/out\"\n[model]\nfixtures = \"f.jsonl\"\n",
            Path::new("/studies/a"),
        )
        .unwrap();
        assert_eq!(cfg.corpus.unwrap(), Path::new("/studies/a/c.jsonl"));
        assert_eq!(cfg.model.fixtures.unwrap(), Path::new("/studies/a/f.jsonl"));
        assert_eq!(cfg.output_dir, Path::new("/abs/out"));
    }

    #[test]
    fn defaults_match_the_study_protocol() {
        let cfg = StudyConfig::default();
        assert_eq!((cfg.redundancy_k, cfg.batch_size, cfg.top_k), (3, 50, 2));
        assert_eq!(cfg.model.max_resamples, 3);
        assert_eq!(cfg.model.backend, BackendKind::Http);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(
            StudyConfig::from_toml_str("corpse = 1", Path::new(".")),
            Err(CliError::Config(_))
        ));
        let mut cfg = StudyConfig::default();
        cfg.batch_size = 0;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = StudyConfig::default();
        cfg.corpus = Some(PathBuf::from("/definitely/not/here.jsonl"));
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = StudyConfig::default();
        cfg.model.backend = BackendKind::Fixture;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
