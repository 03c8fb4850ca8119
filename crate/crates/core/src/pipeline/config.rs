use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{AnnotationFormat, DEFAULT_MAX_MALFORMED_FRACTION};
use crate::ensemble::{CooperateStrategy, FilterStrategy};
use crate::metrics::DEFAULT_THRESHOLDS;
use crate::providers::ProviderConfig;
use crate::retrieval::KMode;
use crate::{Error, Result};

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}
fn default_parallelism() -> usize {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_malformed() -> f64 {
    DEFAULT_MAX_MALFORMED_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory of per-video expert summary files (`*.json`), or one such file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summaries: Option<PathBuf>,
    /// Directory holding `<video_id>.mvs` frame embedding caches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caches: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[serde(default)]
    pub annotation_format: AnnotationFormat,
    /// `{"video_id": seconds}` for annotation formats without durations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<PathBuf>,
    #[serde(default = "default_malformed")]
    pub max_malformed_fraction: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            summaries: None,
            caches: None,
            annotations: None,
            annotation_format: AnnotationFormat::default(),
            durations: None,
            max_malformed_fraction: default_malformed(),
            out_dir: default_out_dir(),
        }
    }
}

/// One cell of an ablation matrix. Unset fields inherit from the base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_strategy: Option<FilterStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cooperate_strategy: Option<CooperateStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<ProviderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub filter_strategy: FilterStrategy,
    #[serde(default)]
    pub cooperate_strategy: CooperateStrategy,
    /// Overrides the strategy's default prompt template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub k: KMode,
    #[serde(default)]
    pub gap_tolerance: usize,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Allow frame caches built with a different model than the text embedder.
    #[serde(default)]
    pub allow_model_mismatch: bool,
    /// Fail evaluation when a prediction has no annotation, instead of dropping it.
    #[serde(default)]
    pub strict_queries: bool,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter_strategy: FilterStrategy::default(),
            cooperate_strategy: CooperateStrategy::default(),
            template_id: None,
            templates_dir: None,
            k: KMode::default(),
            gap_tolerance: 0,
            thresholds: default_thresholds(),
            parallelism: default_parallelism(),
            allow_model_mismatch: false,
            strict_queries: false,
            paths: Paths::default(),
            embedder: None,
            fusion: None,
            judge: None,
            variants: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Checks values that do not depend on which stage runs.
    pub fn validate(&self) -> Result<()> {
        if self.parallelism < 1 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.k.validate()?;
        for &t in &self.thresholds {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("threshold {t} outside (0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.paths.max_malformed_fraction) {
            return Err(Error::Config("max_malformed_fraction must be in [0, 1]".into()));
        }
        for p in [&self.embedder, &self.fusion, &self.judge].into_iter().flatten() {
            p.validate()?;
        }
        let mut names = std::collections::HashSet::new();
        for v in &self.variants {
            if v.name.is_empty() || v.name.contains(['/', '\\']) || v.name.starts_with('.') {
                return Err(Error::Config(format!("invalid variant name `{}`", v.name)));
            }
            if !names.insert(&v.name) {
                return Err(Error::Config(format!("duplicate variant `{}`", v.name)));
            }
            if let Some(f) = &v.fusion {
                f.validate()?;
            }
        }
        if let Some(dir) = &self.templates_dir {
            require_exists(dir, "templates_dir")?;
        }
        Ok(())
    }

    /// One resolved config per variant, each writing under `out_dir/<name>`.
    /// Without variants, the config itself.
    pub fn expand_variants(&self) -> Vec<PipelineConfig> {
        if self.variants.is_empty() {
            return vec![self.clone()];
        }
        self.variants
            .iter()
            .map(|v| {
                let mut c = self.clone();
                c.variants.clear();
                c.paths.out_dir = self.paths.out_dir.join(&v.name);
                if let Some(f) = v.filter_strategy {
                    c.filter_strategy = f;
                }
                if let Some(s) = v.cooperate_strategy {
                    c.cooperate_strategy = s;
                }
                if v.template_id.is_some() {
                    c.template_id = v.template_id.clone();
                }
                if v.fusion.is_some() {
                    c.fusion = v.fusion.clone();
                }
                c
            })
            .collect()
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }

    pub(crate) fn required<'a>(&self, p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        let path = p
            .as_deref()
            .ok_or_else(|| Error::Config(format!("paths.{what} is not set")))?;
        require_exists(path, what)?;
        Ok(path)
    }
}

fn require_exists(p: &Path, what: &str) -> Result<()> {
    if !p.exists() {
        return Err(Error::Config(format!("{what} path {} does not exist", p.display())));
    }
    Ok(())
}
