//! Run configuration, the on-disk run directory, and the stage commands.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json        config snapshot and per-entry status
//! induced/*.json       one induced prompt per (task, method, inducing model, n, seed)
//! records/*.jsonl      inference records, written once an entry's items all succeed
//! reports/             report.json, settings.csv, delta_*.csv, cross_model.csv
//! errors.json          failures from the last invocation
//! costs.json           ledger summary for the last invocation
//! ```

mod config;
mod manifest;
mod report;

pub use config::RunConfig;
pub use manifest::{EntryKey, ManifestEntry, RunManifest, Status};
pub use report::{build_report, AblationTable, CrossRow, RenderedReport, RunReport, SettingRow, WtlRow};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::{build_cipher_tasks, load_tasks, write_task, CipherError, DatasetError, TaskSpec};
use crate::eval::{self, EvalError, ReplayLine};
use crate::fsutil::{write_atomic, write_json_atomic};
use crate::gateway::{
    Backend, Cache, Cost, CostReport, Gateway, GatewayError, HttpBackend, MockBackend, MockScript, ModelProfile,
    ProviderConfig,
};
use crate::pipeline::{InducedPrompt, InferenceRecord, Pipeline};
use crate::templates::{TemplateError, TemplateSet};
use crate::Method;

const HTTP_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run directory {0} is locked by another process (remove .lock if it is stale)")]
    Locked(PathBuf),
    #[error("nothing to evaluate: no inference records in {0}")]
    NothingToEvaluate(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl RuntimeError {
    /// 2 for configuration and usage problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RuntimeError::Config(_)
            | RuntimeError::Locked(_)
            | RuntimeError::NothingToEvaluate(_)
            | RuntimeError::Dataset(_)
            | RuntimeError::Cipher(_)
            | RuntimeError::Template(_) => 2,
            RuntimeError::Gateway(GatewayError::Config(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RuntimeError + '_ {
    move |source| RuntimeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One failed entry from a command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub entry: String,
    pub stage: String,
    pub error: String,
}

/// What a command did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandSummary {
    /// Requests that reached the backend, retries included.
    pub provider_calls: usize,
    /// Successful uncached completions per profile.
    pub completions: BTreeMap<String, usize>,
    pub failures: Vec<EntryFailure>,
}

impl CommandSummary {
    pub fn total_completions(&self) -> usize {
        self.completions.values().sum()
    }

    /// 0 when everything succeeded, 1 when some entries failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

/// Exclusive ownership of a run directory for one process.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self, RuntimeError> {
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(RuntimeError::Locked(dir.to_path_buf())),
            Err(source) => Err(RuntimeError::Io { path, source }),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// Lowercase ASCII with runs of other characters collapsed to `-`.
pub fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let trimmed = out.trim_matches('-');
    if trimmed.is_empty() {
        "x".to_string()
    } else {
        trimmed.to_string()
    }
}

fn induced_path(task: &str, method: Method, inducing: &str, n: usize, seed: u64) -> String {
    format!("induced/{}__{}__{}__n{n}__s{seed}.json", slug(task), method.id(), slug(inducing))
}

fn records_path(key: &EntryKey) -> String {
    format!(
        "records/{}__{}__{}__{}.jsonl",
        slug(&key.task),
        key.method.id(),
        key.inducing_model.as_deref().map(slug).unwrap_or_else(|| "-".into()),
        slug(&key.inference_model)
    )
}

fn read_records(path: &Path) -> Result<Vec<InferenceRecord>, RuntimeError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display()))))
        .collect()
}

fn write_records(path: &Path, records: &[InferenceRecord]) -> Result<(), RuntimeError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

/// An open run directory with everything needed to execute stages.
pub struct Runner {
    config: RunConfig,
    root: PathBuf,
    tasks: BTreeMap<String, TaskSpec>,
    profiles: BTreeMap<String, ModelProfile>,
    gateway: Gateway,
    templates: TemplateSet,
    manifest: RunManifest,
    failures: Vec<EntryFailure>,
    _lock: RunLock,
}

impl Runner {
    pub fn open(config: RunConfig) -> Result<Self, RuntimeError> {
        config.validate()?;
        let tasks: BTreeMap<String, TaskSpec> = load_tasks(&config.tasks)?
            .into_iter()
            .map(|t| (t.key().to_string(), t))
            .collect();

        let providers = match &config.providers {
            Some(p) => ProviderConfig::load(p)?,
            None => ProviderConfig::default(),
        };
        let mut profiles = BTreeMap::new();
        for name in config.inducing().iter().chain(&config.inference_models) {
            let profile = match providers.get(name) {
                Some(p) => p.clone(),
                None if config.mock_script.is_some() => ModelProfile::mock(name.clone()),
                None => return Err(RuntimeError::Config(format!("model `{name}` has no profile"))),
            };
            profiles.insert(name.clone(), profile);
        }

        let backend: Arc<dyn Backend> = match &config.mock_script {
            Some(path) => Arc::new(MockBackend::new(MockScript::load(path)?)),
            None => Arc::new(HttpBackend::new(HTTP_TIMEOUT).map_err(|e| RuntimeError::Config(e.to_string()))?),
        };
        let gateway = Gateway::new(backend, Cache::disk(&config.cache_dir)?)
            .with_budget_cap(config.budget_cap.map(Cost::from_usd_exact));
        let templates = match &config.templates_dir {
            Some(dir) => TemplateSet::load(dir)?,
            None => TemplateSet::builtin().clone(),
        };

        let root = config.out_dir.clone();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        let lock = RunLock::acquire(&root)?;

        let entries = plan_entries(&config, &tasks)?;
        let manifest_path = root.join("manifest.json");
        let previous = RunManifest::load(&manifest_path)?;
        if let Some(prev) = &previous {
            if prev.config.fingerprint() != config.fingerprint() {
                return Err(RuntimeError::Config(format!(
                    "{} was created with a different configuration (methods, models, n, seed, sample size or dataset)",
                    manifest_path.display()
                )));
            }
        }
        let mut runner = Runner {
            manifest: RunManifest {
                config: config.clone(),
                entries,
            },
            config,
            root,
            tasks,
            profiles,
            gateway,
            templates,
            failures: Vec::new(),
            _lock: lock,
        };
        runner.reconcile(previous.as_ref())?;
        runner.save_manifest()?;
        Ok(runner)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Derives each entry's status from the artifacts on disk.
    fn reconcile(&mut self, previous: Option<&RunManifest>) -> Result<(), RuntimeError> {
        for i in 0..self.manifest.entries.len() {
            let entry = &self.manifest.entries[i];
            let records = self.root.join(&entry.records);
            let status = if records.exists() {
                if read_records(&records)?.iter().all(|r| r.correct.is_some()) {
                    Status::Evaluated
                } else {
                    Status::Inferred
                }
            } else if entry.induced.as_ref().is_some_and(|p| self.root.join(p).exists()) {
                Status::Induced
            } else {
                Status::Pending
            };
            let prev = previous.and_then(|m| m.entries.iter().find(|e| e.key == entry.key));
            let entry = &mut self.manifest.entries[i];
            entry.status = status;
            if let Some(prev) = prev.filter(|p| p.status == Status::Failed && status < Status::Inferred) {
                entry.status = Status::Failed;
                entry.error = prev.error.clone();
            }
        }
        Ok(())
    }

    fn save_manifest(&self) -> Result<(), RuntimeError> {
        self.manifest.save(&self.root.join("manifest.json"))
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline::new(&self.gateway, &self.templates, self.config.pipeline())
    }

    fn fail(&mut self, key: &EntryKey, stage: &str, error: String) {
        tracing::warn!(entry = %key, stage, %error, "entry failed");
        if let Some(e) = self.manifest.entry_mut(key) {
            e.status = Status::Failed;
            e.error = Some(error.clone());
        }
        self.failures.push(EntryFailure {
            entry: key.to_string(),
            stage: stage.to_string(),
            error,
        });
    }

    fn advance(&mut self, key: &EntryKey, status: Status) {
        if let Some(e) = self.manifest.entry_mut(key) {
            if e.status == Status::Failed || e.status < status {
                e.status = status;
            }
            e.error = None;
        }
    }

    /// Runs the strategy and induct stages for every task-level entry whose
    /// induced prompt is missing.
    pub fn induce(&mut self) -> Result<(), RuntimeError> {
        let mut groups: BTreeMap<String, Vec<EntryKey>> = BTreeMap::new();
        for e in &self.manifest.entries {
            if let Some(p) = &e.induced {
                groups.entry(p.clone()).or_default().push(e.key.clone());
            }
        }
        for (rel, keys) in groups {
            let path = self.root.join(&rel);
            if path.exists() {
                for k in &keys {
                    self.advance(k, Status::Induced);
                }
                continue;
            }
            let first = &keys[0];
            let task = &self.tasks[&first.task];
            let inducing = first.inducing_model.as_deref().expect("task-level entry");
            let profile = &self.profiles[inducing];
            tracing::info!(task = %first.task, method = first.method.id(), inducing, "inducing");
            match self.pipeline().induce(task, first.method, profile) {
                Ok(induced) => {
                    write_json_atomic(&path, &induced).map_err(io_err(&path))?;
                    for k in &keys {
                        self.advance(k, Status::Induced);
                    }
                }
                Err(e) => {
                    let msg = e.to_string();
                    for k in &keys {
                        self.fail(k, "induce", msg.clone());
                    }
                }
            }
            self.save_manifest()?;
        }
        Ok(())
    }

    /// Inference for every entry without records, inducing first if needed.
    pub fn infer(&mut self) -> Result<(), RuntimeError> {
        self.induce()?;
        let entries = self.manifest.entries.clone();
        for entry in entries {
            let records = self.root.join(&entry.records);
            if records.exists() {
                continue;
            }
            let task = &self.tasks[&entry.key.task];
            let instruction = match &entry.induced {
                None => task.short_phrase.clone(),
                Some(rel) => {
                    let path = self.root.join(rel);
                    if !path.exists() {
                        continue;
                    }
                    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
                    let induced: InducedPrompt = serde_json::from_str(&text)
                        .map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display())))?;
                    induced.instruction
                }
            };
            let profile = &self.profiles[&entry.key.inference_model];
            tracing::info!(entry = %entry.key, "inferring");
            match self.pipeline().infer_items(task, entry.key.method, &instruction, profile) {
                Ok(outcome) if outcome.failures.is_empty() => {
                    write_records(&records, &outcome.records)?;
                    self.advance(&entry.key, Status::Inferred);
                }
                Ok(outcome) => {
                    let first = &outcome.failures[0];
                    let msg = format!(
                        "{} of {} items failed; first: {}: {}",
                        outcome.failures.len(),
                        outcome.failures.len() + outcome.records.len(),
                        first.item_id,
                        first.error
                    );
                    self.fail(&entry.key, "infer", msg);
                }
                Err(e) => self.fail(&entry.key, "infer", e.to_string()),
            }
            self.save_manifest()?;
        }
        Ok(())
    }

    fn entries_with_records(&self) -> Vec<ManifestEntry> {
        self.manifest
            .entries
            .iter()
            .filter(|e| self.root.join(&e.records).exists())
            .cloned()
            .collect()
    }

    /// Scores every records file against the golds.
    pub fn eval(&mut self) -> Result<(), RuntimeError> {
        let entries = self.entries_with_records();
        if entries.is_empty() {
            return Err(RuntimeError::NothingToEvaluate(self.root.clone()));
        }
        for entry in entries {
            let path = self.root.join(&entry.records);
            let mut records = read_records(&path)?;
            let before = records.clone();
            match eval::score_records(&mut records, &self.tasks[&entry.key.task]) {
                Ok(()) => {
                    if records != before {
                        write_records(&path, &records)?;
                    }
                    self.advance(&entry.key, Status::Evaluated);
                }
                Err(e) => self.fail(&entry.key, "eval", e.to_string()),
            }
        }
        self.save_manifest()
    }

    /// Writes `reports/` from every records file present.
    pub fn report(&mut self) -> Result<RunReport, RuntimeError> {
        let entries = self.entries_with_records();
        if entries.is_empty() {
            return Err(RuntimeError::NothingToEvaluate(self.root.clone()));
        }
        let mut results = Vec::new();
        for entry in entries {
            let records = read_records(&self.root.join(&entry.records))?;
            match eval::accuracy(&records, &self.tasks[&entry.key.task]) {
                Ok(r) => results.push((entry.key.clone(), r)),
                Err(e) => self.fail(&entry.key, "report", e.to_string()),
            }
        }
        let rendered = build_report(
            &self.config.dataset_name(),
            self.config.n,
            self.config.seed,
            self.config.sample_size,
            &results,
        );
        let dir = self.root.join("reports");
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        for (name, body) in &rendered.files {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes()).map_err(io_err(&path))?;
        }
        Ok(rendered.report)
    }

    /// All stages in order. Reports are written whenever any records exist.
    pub fn run(&mut self) -> Result<Option<RunReport>, RuntimeError> {
        self.infer()?;
        if self.entries_with_records().is_empty() {
            return Ok(None);
        }
        self.eval()?;
        Ok(Some(self.report()?))
    }

    /// Writes `errors.json` and `costs.json` and returns the summary.
    pub fn finish(&self) -> Result<CommandSummary, RuntimeError> {
        let summary = CommandSummary {
            provider_calls: self.gateway.provider_calls(),
            completions: self.gateway.completions_by_profile(),
            failures: self.failures.clone(),
        };
        let errors = self.root.join("errors.json");
        write_json_atomic(&errors, &summary.failures).map_err(io_err(&errors))?;
        #[derive(Serialize)]
        struct Costs<'a> {
            provider_calls: usize,
            total_usd: f64,
            ledger: &'a CostReport,
        }
        let ledger = self.gateway.ledger_report();
        let costs = self.root.join("costs.json");
        write_json_atomic(
            &costs,
            &Costs {
                provider_calls: summary.provider_calls,
                total_usd: ledger.total.usd(),
                ledger: &ledger,
            },
        )
        .map_err(io_err(&costs))?;
        Ok(summary)
    }
}

fn plan_entries(config: &RunConfig, tasks: &BTreeMap<String, TaskSpec>) -> Result<Vec<ManifestEntry>, RuntimeError> {
    let methods: BTreeSet<Method> = config.methods.iter().copied().collect();
    let mut entries = Vec::new();
    for task in tasks.keys() {
        for &method in &methods {
            let inducers: Vec<Option<&String>> = if method.is_task_level() {
                config.inducing().iter().map(Some).collect()
            } else {
                vec![None]
            };
            for inducing in inducers {
                for inference in &config.inference_models {
                    let key = EntryKey {
                        task: task.clone(),
                        method,
                        inducing_model: inducing.cloned(),
                        inference_model: inference.clone(),
                    };
                    entries.push(ManifestEntry {
                        induced: inducing.map(|m| induced_path(task, method, m, config.n, config.seed)),
                        records: records_path(&key),
                        key,
                        status: Status::Pending,
                        error: None,
                    });
                }
            }
        }
    }
    let mut seen = BTreeMap::new();
    for e in &entries {
        if let Some(other) = seen.insert(e.records.clone(), e.key.clone()) {
            if other != e.key {
                return Err(RuntimeError::Config(format!(
                    "`{other}` and `{}` map to the same file name {}",
                    e.key, e.records
                )));
            }
        }
    }
    entries.sort_by(|a, b| a.key.cmp(&b.key));
    entries.dedup_by(|a, b| a.key == b.key);
    Ok(entries)
}

/// Writes one cipher task file per shift into `out_dir`.
pub fn gen_cipher(words: &[String], ks: &[i64], out_dir: &Path) -> Result<Vec<PathBuf>, RuntimeError> {
    let tasks = build_cipher_tasks(words, ks)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut paths = Vec::new();
    for (task, k) in tasks.iter().zip(ks) {
        let path = out_dir.join(format!("shift_cipher_rot_{k:02}.json"));
        write_task(task, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Win-tie-lose replay of a published accuracy table, the bundled one when
/// `fixture` is `None`.
pub fn replay_table1(fixture: Option<&Path>) -> Result<Vec<ReplayLine>, RuntimeError> {
    let results = match fixture {
        Some(path) => eval::parse_table1(&std::fs::read_to_string(path).map_err(io_err(path))?)?,
        None => eval::builtin_table1(),
    };
    Ok(eval::replay_table1(&results)?)
}

/// Runs the strategy-induced method once per N, each in `out_dir/n<N>`
/// with a shared cache, and tabulates pooled accuracy per model.
pub fn ablation(config: &RunConfig, ns: &[usize]) -> Result<(AblationTable, CommandSummary), RuntimeError> {
    if ns.is_empty() {
        return Err(RuntimeError::Config("at least one N is required".into()));
    }
    let mut total = CommandSummary::default();
    let mut by_model: BTreeMap<String, BTreeMap<usize, String>> = BTreeMap::new();
    for &n in ns {
        let cfg = RunConfig {
            n,
            methods: vec![Method::StrategyInduct],
            out_dir: config.out_dir.join(format!("n{n}")),
            ..config.clone()
        };
        let mut runner = Runner::open(cfg)?;
        let report = runner.run()?;
        let summary = runner.finish()?;
        total.provider_calls += summary.provider_calls;
        for (k, v) in summary.completions {
            *total.completions.entry(k).or_default() += v;
        }
        total.failures.extend(summary.failures.into_iter().map(|mut f| {
            f.entry = format!("n={n}: {}", f.entry);
            f
        }));
        for row in report.iter().flat_map(|r| &r.aggregates) {
            if row.inducing_model.as_deref() == Some(row.inference_model.as_str()) {
                by_model
                    .entry(row.inference_model.clone())
                    .or_default()
                    .insert(n, row.accuracy.clone());
            }
        }
    }
    let table = AblationTable {
        ns: ns.to_vec(),
        rows: config
            .inference_models
            .iter()
            .map(|m| {
                let cells = ns.iter().map(|n| by_model.get(m).and_then(|c| c.get(n)).cloned()).collect();
                (m.clone(), cells)
            })
            .collect(),
    };
    let csv = config.out_dir.join("ablation_n.csv");
    write_atomic(&csv, table.to_csv().as_bytes()).map_err(io_err(&csv))?;
    let json = config.out_dir.join("ablation_n.json");
    write_json_atomic(&json, &table).map_err(io_err(&json))?;
    Ok((table, total))
}
