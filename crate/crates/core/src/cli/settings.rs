//! Resolved run settings: defaults, overlaid by an optional TOML file,
//! overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backends::{
    GenerationBackend, HttpConfig, HttpGenerator, HttpReward, MockLandscape, MockLandscapeConfig,
    RetryPolicy, RewardBackend, RougeReward,
};
use crate::error::{Error, Result};
use crate::templates::TemplateSet;
use crate::types::{DecodeParams, Method, SamplingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Mock,
    Http,
    Rouge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub method: Method,
    pub n: usize,
    pub depth: usize,
    pub schedule: Option<Vec<usize>>,
    pub feedback: bool,
    pub preference: bool,
    pub reward_sees_preference: bool,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: u64,
    pub backend: BackendKind,
    pub reward: RewardKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub reward_endpoint: Option<String>,
    pub reward_model: Option<String>,
    pub timeout_ms: u64,
    pub max_concurrency: usize,
    pub max_retries: u32,
    /// Template directory, or one of the built-in sets `instruction` and
    /// `summarization`.
    pub templates: Option<String>,
    pub parallelism: Option<usize>,
    pub mock: MockLandscapeConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let http = HttpConfig::default();
        Self {
            method: Method::Prs,
            n: 16,
            depth: 2,
            schedule: None,
            feedback: true,
            preference: true,
            reward_sees_preference: false,
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 1024,
            seed: 0,
            backend: BackendKind::Mock,
            reward: RewardKind::Mock,
            endpoint: None,
            model: None,
            reward_endpoint: None,
            reward_model: None,
            timeout_ms: http.timeout_ms,
            max_concurrency: http.max_concurrency,
            max_retries: http.retry.max_retries,
            templates: None,
            parallelism: None,
            mock: MockLandscapeConfig::default(),
        }
    }
}

/// Flags shared by every command that touches a backend.
#[derive(Debug, Clone, Default, Args)]
pub struct BackendFlags {
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long, value_enum)]
    pub reward: Option<RewardKind>,
    /// Chat-completions URL for the http generation backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Scoring URL for the http reward backend.
    #[arg(long)]
    pub reward_endpoint: Option<String>,
    #[arg(long)]
    pub reward_model: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_concurrency: Option<usize>,
    /// Template directory or built-in set name (instruction, summarization).
    #[arg(long)]
    pub templates: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub mock_dim: Option<usize>,
    #[arg(long)]
    pub mock_sigma0: Option<f64>,
    #[arg(long)]
    pub mock_sigma1: Option<f64>,
    #[arg(long)]
    pub mock_feedback_gain: Option<f64>,
    /// Seed for the mock landscape target.
    #[arg(long)]
    pub mock_seed: Option<u64>,
}

/// Flags describing one sampling method and budget.
#[derive(Debug, Clone, Default, Args)]
pub struct SamplingFlags {
    #[arg(long)]
    pub method: Option<Method>,
    /// Total generation budget per prompt.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Explicit per-layer widths, e.g. "8,8".
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<usize>>,
    #[arg(long)]
    pub no_feedback: bool,
    #[arg(long)]
    pub no_preference: bool,
    #[arg(long)]
    pub reward_sees_preference: bool,
}

macro_rules! overlay {
    ($dst:expr, $src:expr; $($field:ident),*) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })*
    };
}

impl Settings {
    pub fn load(config: Option<&Path>) -> Result<Self> {
        match config {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))
            }
        }
    }

    pub fn apply_backend(&mut self, f: &BackendFlags) {
        overlay!(self, f; backend, reward, timeout_ms, max_retries, max_concurrency, seed,
            temperature, top_p, max_tokens);
        for (dst, src) in [
            (&mut self.endpoint, &f.endpoint),
            (&mut self.model, &f.model),
            (&mut self.reward_endpoint, &f.reward_endpoint),
            (&mut self.reward_model, &f.reward_model),
            (&mut self.templates, &f.templates),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        if f.parallelism.is_some() {
            self.parallelism = f.parallelism;
        }
        let m = &mut self.mock;
        if let Some(v) = f.mock_dim {
            m.dim = v;
        }
        if let Some(v) = f.mock_sigma0 {
            m.sigma0 = v;
        }
        if let Some(v) = f.mock_sigma1 {
            m.sigma1 = v;
        }
        if let Some(v) = f.mock_feedback_gain {
            m.feedback_gain = v;
        }
        if let Some(v) = f.mock_seed {
            m.seed = v;
        }
    }

    pub fn apply_sampling(&mut self, f: &SamplingFlags) {
        overlay!(self, f; method, n);
        if let Some(d) = f.depth {
            self.depth = d;
            // an explicit depth replaces a schedule inherited from the file
            self.schedule = None;
        }
        if f.schedule.is_some() {
            self.schedule.clone_from(&f.schedule);
        }
        if f.no_feedback {
            self.feedback = false;
        }
        if f.no_preference {
            self.preference = false;
        }
        if f.reward_sees_preference {
            self.reward_sees_preference = true;
        }
    }

    pub fn sampling_config(&self) -> Result<SamplingConfig> {
        let mut cfg = SamplingConfig::new(self.method, self.n, self.depth)
            .with_seed(self.seed)
            .with_feedback(self.feedback)
            .with_preference(self.preference);
        if let Some(s) = &self.schedule {
            if self.method != Method::Prs {
                return Err(Error::Config(format!(
                    "--schedule only applies to prs, not {}",
                    self.method
                )));
            }
            cfg = cfg.with_schedule(s.clone());
        }
        cfg.reward_sees_preference = self.reward_sees_preference;
        cfg.decode = DecodeParams {
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            seed: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        match self.templates.as_deref() {
            None => Ok(TemplateSet::instruction_following()),
            Some(dir) if Path::new(dir).is_dir() => TemplateSet::load_dir(Path::new(dir)),
            Some("instruction") => Ok(TemplateSet::instruction_following()),
            Some("summarization") => Ok(TemplateSet::summarization()),
            Some(other) => Err(Error::Config(format!(
                "--templates {other:?} is neither a directory nor a built-in set"
            ))),
        }
    }

    fn http(&self, endpoint: Option<&String>, model: Option<&String>, what: &str) -> Result<HttpConfig> {
        let endpoint = endpoint
            .ok_or_else(|| Error::Config(format!("http {what} backend needs an endpoint")))?;
        let mut c = HttpConfig::new(endpoint.clone(), model.cloned().unwrap_or_default());
        c.timeout_ms = self.timeout_ms;
        c.max_concurrency = self.max_concurrency;
        c.retry = RetryPolicy {
            max_retries: self.max_retries,
            ..RetryPolicy::default()
        };
        Ok(c.with_env_token())
    }

    pub fn generator(&self) -> Result<Box<dyn GenerationBackend>> {
        Ok(match self.backend {
            BackendKind::Mock => Box::new(MockLandscape::new(self.mock.clone())?),
            BackendKind::Http => Box::new(HttpGenerator::new(self.http(
                self.endpoint.as_ref(),
                self.model.as_ref(),
                "generation",
            )?)?),
        })
    }

    pub fn reward_backend(&self) -> Result<Box<dyn RewardBackend>> {
        Ok(match self.reward {
            RewardKind::Mock => Box::new(MockLandscape::new(self.mock.clone())?),
            RewardKind::Rouge => Box::new(RougeReward),
            RewardKind::Http => Box::new(HttpReward::new(self.http(
                self.reward_endpoint.as_ref().or(self.endpoint.as_ref()),
                self.reward_model.as_ref(),
                "reward",
            )?)?),
        })
    }

    /// Runs `f` inside a rayon pool sized by `parallelism` when set.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.parallelism {
            None => Ok(f()),
            Some(0) => Err(Error::Config("--parallelism must be >= 1".into())),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Resolves `path`: a directory means `dir/default_name`.
pub fn in_dir(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}
