use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::pipeline::{PipelineConfig, DEFAULT_N, DEFAULT_SAMPLE_SIZE};
use crate::Method;

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_n() -> usize {
    DEFAULT_N
}
fn default_sample_size() -> usize {
    DEFAULT_SAMPLE_SIZE
}
fn default_workers() -> usize {
    4
}
fn default_retries() -> u32 {
    1
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from(".qinduct-cache")
}

/// Everything a run needs. Loaded from TOML or JSON; CLI flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of task JSON files.
    #[serde(default)]
    pub tasks: PathBuf,
    /// Name for pooled results; defaults to the task directory name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Defaults to `inference_models` (each model induces for itself).
    #[serde(default)]
    pub inducing_models: Vec<String>,
    #[serde(default)]
    pub inference_models: Vec<String>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    /// Spend cap in dollars for one invocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_cap: Option<f64>,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub out_dir: PathBuf,
    /// Model profiles file. Optional with `mock_script`, where missing
    /// profiles become zero-priced mock profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub providers: Option<PathBuf>,
    /// Serve every request from this script instead of the network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_retries")]
    pub extraction_retries: u32,
    /// Override the built-in templates with files from this directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    /// Reads a `.toml` or `.json` file. Relative paths inside are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.tasks);
        fix(&mut self.cache_dir);
        fix(&mut self.out_dir);
        for p in [&mut self.providers, &mut self.mock_script, &mut self.templates_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn inducing(&self) -> &[String] {
        if self.inducing_models.is_empty() {
            &self.inference_models
        } else {
            &self.inducing_models
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let bad = |m: &str| Err(RuntimeError::Config(m.to_string()));
        if self.tasks.as_os_str().is_empty() {
            return bad("`tasks` directory is required");
        }
        if self.out_dir.as_os_str().is_empty() {
            return bad("`out_dir` is required");
        }
        if self.inference_models.is_empty() {
            return bad("at least one inference model is required");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.n == 0 {
            return bad("`n` must be at least 1");
        }
        if self.sample_size == 0 {
            return bad("`sample_size` must be at least 1");
        }
        if self.workers == 0 {
            return bad("`workers` must be at least 1");
        }
        if let Some(cap) = self.budget_cap {
            if !cap.is_finite() || cap < 0.0 {
                return bad("`budget_cap` must be a non-negative number");
            }
        }
        if self.providers.is_none() && self.mock_script.is_none() {
            return bad("a `providers` file is required unless `mock_script` is set");
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            n: self.n,
            seed: self.seed,
            sample_size: self.sample_size,
            workers: self.workers,
            extraction_retries: self.extraction_retries,
        }
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.tasks
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "tasks".into())
        })
    }

    /// Fields that determine the artifacts. Two configs that agree here may
    /// share a run directory.
    pub(super) fn fingerprint(&self) -> serde_json::Value {
        serde_json::json!({
            "methods": self.methods,
            "inducing_models": self.inducing(),
            "inference_models": self.inference_models,
            "n": self.n,
            "seed": self.seed,
            "sample_size": self.sample_size,
            "dataset": self.dataset_name(),
        })
    }
}
