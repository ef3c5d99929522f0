//! TOML configuration and the runtime it builds.
//!
//! Unknown keys are rejected, and every validation message starts with the
//! dotted key it is about, so a bad file points at the offending field.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use fastslow_core::simulated::ConfidenceMode;
use fastslow_core::{Aggregation, Backend, Clock, Corpus, FrozenClock, Registry, SimulatedBackend, SimulationConfig};

use crate::clock::SystemClock;
use crate::controller::{ControllerConfig, Engine, Strategy, DEFAULT_THETA};
use crate::corpus_io::{resolve, CorpusError, CorpusSource};
use crate::dataset::DatasetConfig;
use crate::guard::TimeoutBackend;
use crate::planner::{MarkerPolicy, Planner, PromptTemplates, Script, ScriptedPlanner, SupportSet, SyntheticPlanner};
use crate::remote::{HttpPlanner, HttpTransport, RemoteBackend};
use crate::search::SearchConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    Simulated,
    Remote,
}

/// `params` accepts `"none"`, `"all"`, `"num_frames+top_k"` or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSpec {
    Spec(String),
    List(Vec<String>),
}

impl Default for ParamSpec {
    fn default() -> Self {
        ParamSpec::Spec("none".into())
    }
}

impl ParamSpec {
    pub fn names(&self) -> Result<Vec<String>, String> {
        match self {
            ParamSpec::Spec(s) => SearchConfig::parse_params(s),
            ParamSpec::List(v) => SearchConfig::parse_params(&v.join(",")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub params: ParamSpec,
    pub aggregation: Aggregation,
    pub memoize_base: bool,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection { params: ParamSpec::default(), aggregation: Aggregation::Confidence, memoize_base: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub high_band: (f64, f64),
    pub low_band: (f64, f64),
    pub program_noise: f64,
    pub confidence_mode: ConfidenceMode,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimulationConfig::default();
        SimulationSection {
            high_band: d.high_band,
            low_band: d.low_band,
            program_noise: d.program_noise,
            confidence_mode: d.confidence_mode,
        }
    }
}

impl SimulationSection {
    pub fn to_config(&self) -> SimulationConfig {
        SimulationConfig {
            high_band: self.high_band,
            low_band: self.low_band,
            program_noise: self.program_noise,
            confidence_mode: self.confidence_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    #[default]
    Synthetic,
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub kind: PlannerKind,
    /// Synthetic planner only.
    pub marker_policy: MarkerPolicy,
    /// JSON object of query id to script; required for `scripted`.
    pub scripts: Option<PathBuf>,
    /// Scripted planner falls back to the synthetic one for unscripted ids.
    pub fallback_synthetic: bool,
    /// Curated support set (JSON); the built-in one otherwise.
    pub support: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSection {
    pub backend_url: Option<String>,
    pub planner_url: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteSection {
    fn default() -> Self {
        RemoteSection { backend_url: None, planner_url: None, timeout_ms: 60_000, max_in_flight: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorSection {
    /// Per-backend-call budget; 0 disables the guard.
    pub statement_timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ExecutorSection {
    fn default() -> Self {
        ExecutorSection { statement_timeout_ms: 60_000, max_in_flight: 64 }
    }
}

/// Dataset settings; `tau` lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub attempts: usize,
    pub min_count: usize,
    pub budget: usize,
    pub retain_variants: bool,
    pub diversity_cap: Option<usize>,
    pub emit_easy_slow: bool,
    pub val_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        DatasetSection {
            attempts: d.attempts,
            min_count: d.min_count,
            budget: d.budget,
            retain_variants: d.retain_variants,
            diversity_cap: d.diversity_cap,
            emit_easy_slow: d.emit_easy_slow,
            val_fraction: d.val_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub addr: String,
    /// Queries answered concurrently.
    pub workers: usize,
    /// Queries admitted (running plus waiting) before new ones get 429.
    pub queue_depth: usize,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection { addr: "127.0.0.1:8080".into(), workers: 4, queue_depth: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: BackendMode,
    pub theta: f64,
    pub tau: f64,
    pub strategy: Strategy,
    pub parallelism: usize,
    /// Overrides the corpus generation seed.
    pub seed: Option<u64>,
    pub run_log: Option<PathBuf>,
    /// Registry file (JSON or TOML); the built-in library otherwise.
    pub registry: Option<PathBuf>,
    /// Wall-clock timings in records. Off by default so logs are reproducible.
    pub record_timings: bool,
    pub search: SearchSection,
    pub corpus: Option<CorpusSource>,
    pub simulation: SimulationSection,
    pub planner: PlannerSection,
    pub remote: RemoteSection,
    pub executor: ExecutorSection,
    pub dataset: DatasetSection,
    pub service: ServiceSection,
    pub prompts: PromptTemplates,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            backend: BackendMode::Simulated,
            theta: DEFAULT_THETA,
            tau: fastslow_core::confidence::DEFAULT_TAU,
            strategy: Strategy::Adaptive,
            parallelism: 1,
            seed: None,
            run_log: None,
            registry: None,
            record_timings: false,
            search: SearchSection::default(),
            corpus: None,
            simulation: SimulationSection::default(),
            planner: PlannerSection::default(),
            remote: RemoteSection::default(),
            executor: ExecutorSection::default(),
            dataset: DatasetSection::default(),
            service: ServiceSection::default(),
            prompts: PromptTemplates::default(),
        }
    }
}

/// Command-line overrides, applied after the file is read.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub theta: Option<f64>,
    pub search: Option<String>,
    pub backend: Option<BackendMode>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
}

fn open_interval(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })
}

fn parse_by_ext<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, ConfigError> {
    let fail = |message: String| ConfigError::Parse { path: path.into(), message };
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(text).map_err(|e| fail(e.to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| fail(e.to_string()))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: PathBuf::from("<config>"), message: e.to_string() })?;
        c.validate()?;
        Ok(c)
    }

    /// Reads, resolves relative paths against the file's directory, validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let mut c: Config =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        c.resolve_paths(path.parent());
        c.validate()?;
        Ok(c)
    }

    fn resolve_paths(&mut self, base: Option<&Path>) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                *x = resolve(base, x);
            }
        };
        fix(&mut self.run_log);
        fix(&mut self.registry);
        fix(&mut self.planner.scripts);
        fix(&mut self.planner.support);
        if let Some(c) = &mut self.corpus {
            fix(&mut c.path);
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(t) = o.theta {
            self.theta = t;
        }
        if let Some(s) = &o.search {
            self.search.params = ParamSpec::Spec(s.clone());
        }
        if let Some(b) = o.backend {
            self.backend = b;
        }
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(p) = o.parallelism {
            self.parallelism = p;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !open_interval(self.theta) {
            return Err(invalid(format!("theta: must lie in (0, 1), got {}", self.theta)));
        }
        if !open_interval(self.tau) {
            return Err(invalid(format!("tau: must lie in (0, 1), got {}", self.tau)));
        }
        if self.parallelism == 0 {
            return Err(invalid("parallelism: must be >= 1"));
        }
        self.search.params.names().map_err(|e| invalid(format!("search.params: {e}")))?;
        self.simulation.to_config().validate().map_err(|e| invalid(format!("simulation.{e}")))?;
        if self.backend == BackendMode::Remote && self.remote.backend_url.is_none() {
            return Err(invalid("remote.backend_url: required when backend = \"remote\""));
        }
        if self.planner.kind == PlannerKind::Remote && self.remote.planner_url.is_none() {
            return Err(invalid("remote.planner_url: required when planner.kind = \"remote\""));
        }
        if self.planner.kind == PlannerKind::Scripted && self.planner.scripts.is_none() {
            return Err(invalid("planner.scripts: required when planner.kind = \"scripted\""));
        }
        if self.remote.timeout_ms == 0 {
            return Err(invalid("remote.timeout_ms: must be positive"));
        }
        if self.remote.max_in_flight == 0 {
            return Err(invalid("remote.max_in_flight: must be >= 1"));
        }
        if self.executor.max_in_flight == 0 {
            return Err(invalid("executor.max_in_flight: must be >= 1"));
        }
        if self.service.workers == 0 {
            return Err(invalid("service.workers: must be >= 1"));
        }
        if self.service.queue_depth < self.service.workers {
            return Err(invalid("service.queue_depth: must be >= service.workers"));
        }
        self.service.addr.parse::<SocketAddr>().map_err(|e| invalid(format!("service.addr: {e}")))?;
        self.dataset_config().validate().map_err(invalid)?;
        Ok(())
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            params: self.search.params.names().unwrap_or_default(),
            aggregation: self.search.aggregation,
            parallelism: self.parallelism,
            memoize_base: self.search.memoize_base,
        }
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig { theta: self.theta, search: self.search_config(), strategy: self.strategy }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        let d = &self.dataset;
        DatasetConfig {
            tau: self.tau,
            attempts: d.attempts,
            min_count: d.min_count,
            budget: d.budget,
            retain_variants: d.retain_variants,
            diversity_cap: d.diversity_cap,
            emit_easy_slow: d.emit_easy_slow,
            val_fraction: d.val_fraction,
        }
    }

    pub fn load_registry(&self) -> Result<Registry, ConfigError> {
        let reg = match &self.registry {
            None => Registry::builtin(),
            Some(p) => parse_by_ext(p, &read_text(p)?)?,
        };
        reg.validate().map_err(|e| invalid(format!("registry: {e}")))?;
        Ok(reg)
    }

    /// The configured corpus, with `seed` applied to generated ones.
    pub fn load_corpus(&self) -> Result<Option<Corpus>, ConfigError> {
        let Some(src) = &self.corpus else { return Ok(None) };
        let mut src = src.clone();
        if let Some(s) = self.seed {
            src.seed = s;
        }
        Ok(Some(src.load(None)?))
    }

    /// Builds an engine over `corpus` (required for simulated mode and the
    /// synthetic planner).
    pub fn build_engine(&self, corpus: Option<Arc<Corpus>>) -> Result<Engine, ConfigError> {
        let registry = Arc::new(self.load_registry()?);
        let need_corpus = || {
            corpus.clone().ok_or_else(|| invalid("corpus: required by the simulated backend and the synthetic planner"))
        };
        let timeout = Duration::from_millis(self.remote.timeout_ms);
        let mut backend: Arc<dyn Backend> = match self.backend {
            BackendMode::Simulated => Arc::new(SimulatedBackend::new(need_corpus()?, self.simulation.to_config())),
            BackendMode::Remote => {
                let url = self.remote.backend_url.clone().unwrap_or_default();
                let t = HttpTransport::new(url, timeout).map_err(|e| invalid(format!("remote.backend_url: {e}")))?;
                Arc::new(RemoteBackend::new(t, self.remote.max_in_flight, timeout))
            }
        };
        if self.executor.statement_timeout_ms > 0 {
            backend = Arc::new(TimeoutBackend::new(
                backend,
                Duration::from_millis(self.executor.statement_timeout_ms),
                self.executor.max_in_flight,
            ));
        }
        let synthetic = || -> Result<Arc<dyn Planner>, ConfigError> {
            Ok(Arc::new(SyntheticPlanner::new(need_corpus()?, self.planner.marker_policy)))
        };
        let planner: Arc<dyn Planner> = match self.planner.kind {
            PlannerKind::Synthetic => synthetic()?,
            PlannerKind::Scripted => {
                let path = self.planner.scripts.as_deref().expect("validated");
                let scripts: BTreeMap<String, Script> = parse_by_ext(path, &read_text(path)?)?;
                let mut p = ScriptedPlanner::new(scripts);
                if self.planner.fallback_synthetic {
                    p = p.with_fallback(synthetic()?);
                }
                Arc::new(p)
            }
            PlannerKind::Remote => {
                let url = self.remote.planner_url.clone().unwrap_or_default();
                Arc::new(HttpPlanner::new(url, timeout).map_err(|e| invalid(format!("remote.planner_url: {e}")))?)
            }
        };
        let clock: Arc<dyn Clock + Send + Sync> =
            if self.record_timings { Arc::new(SystemClock::new()) } else { Arc::new(FrozenClock) };
        let mut engine = Engine::new(registry, backend, planner, clock);
        engine.prompts = self.prompts.clone();
        self.search_config().validate(&engine.registry).map_err(|e| invalid(format!("search.params: {e}")))?;
        Ok(engine)
    }

    pub fn support_set(&self, registry: &Registry) -> Result<SupportSet, ConfigError> {
        let s = match &self.planner.support {
            None => SupportSet::builtin(),
            Some(p) => parse_by_ext(p, &read_text(p)?)?,
        };
        s.validate(registry).map_err(|e| invalid(format!("planner.support: {e}")))?;
        Ok(s)
    }
}
