//! The end-to-end stages behind the command-line tool, with a single TOML
//! configuration.
//!
//! Every stage reads and writes below `output_dir`:
//!
//! ```text
//! records/<dataset>.jsonl            ingest
//! records/<dataset>.manifest.json
//! splits/<dataset>/{dev,test,train}.jsonl, manifest.json
//! index/triples.json                 index
//! scenarios/<dataset>/<split>/<Scenario>.jsonl, build_report.json
//! review/<dataset>-<split>-MSConf.tsv
//! augment/<dataset>.jsonl
//! eval/judged.jsonl, report.json, report.txt
//! pairs/pairs.jsonl
//! ```
//!
//! Relative paths in the configuration are resolved against the directory
//! holding the configuration file.

use crate::augment::{build_training_set, AugmentConfig};
use crate::clients::http::{EndpointConfig, HttpChatClient, SerpApiClient, DEFAULT_SEARCH_URL};
use crate::clients::mock::load_fixture_dir;
use crate::clients::{
    ClientError, CompletionClient, LlmService, RetryPolicy, SearchClient, TemplateSet, TracingClient,
};
use crate::contrastive::{
    build_pairs, contrastive_loss, finite_difference_residual, tokenize_for_training, Balance, PairOptions, Reduction,
    TokenLogProbs, WordVocab, DEFAULT_REFUSAL_PHRASES,
};
use crate::corpus::{
    ingest_squad, ingest_webqa, read_jsonl, sample_split, write_jsonl, write_jsonl_to, CorpusError, DatasetManifest,
    QARecord, Split,
};
use crate::eval::{
    aggregate, recall, render_report, rule_judge, JudgedOutput, ModelOutput, RateTable, RecallMode, ReportFormat,
    RuleJudgeConfig, ScenarioOutcomes, DEFAULT_REJECTION_PHRASES,
};
use crate::scenarios::{
    build_all, export_review, validate, write_review_tsv, BuildContext, Scenario, ScenarioConfig, ScenarioSample,
};
use crate::textops::TfIdfModel;
use crate::triplestore::{read_triples_tsv, TripleIndex};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("external client: {0}")]
    Client(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Client(_) => 4,
        }
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn data(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Squad,
    Webqa,
    /// Already-normalized record JSONL.
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    pub format: DatasetFormat,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Records drawn per dataset, split 1:1 into dev and test.
    #[serde(default = "default_split_n")]
    pub n: usize,
    pub seed: u64,
}

fn default_split_n() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewConfig {
    /// Conflict samples exported per dataset split for human review.
    #[serde(default = "default_review_n")]
    pub n: usize,
    pub seed: u64,
}

fn default_review_n() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_search_url")]
    pub url: String,
    pub api_key_env: String,
    #[serde(default = "default_search_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_search_url() -> String {
    DEFAULT_SEARCH_URL.into()
}

fn default_search_timeout() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientsConfig {
    /// Directory with `completions.jsonl` / `search.jsonl`; takes precedence
    /// over the HTTP endpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_fixtures: Option<String>,
    /// Directory of prompt templates overriding the built-in ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<EndpointConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    #[default]
    Rule,
    /// Completion-client judge, falling back to the rule judge on
    /// unparseable replies.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub model: String,
    pub judge: JudgeKind,
    pub recall_mode: RecallMode,
    pub rejection_phrases: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            model: String::new(),
            judge: JudgeKind::Rule,
            recall_mode: RecallMode::Set,
            rejection_phrases: DEFAULT_REJECTION_PHRASES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsConfig {
    #[serde(default = "default_target_n")]
    pub target_n: usize,
    #[serde(default)]
    pub balance: Balance,
    #[serde(default = "default_refusals")]
    pub refusal_phrases: Vec<String>,
    pub seed: u64,
}

fn default_target_n() -> usize {
    3500
}

fn default_refusals() -> Vec<String> {
    DEFAULT_REFUSAL_PHRASES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: String,
    /// Tab-separated `head relation tail` file for the triple index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triples: Option<String>,
    #[serde(default)]
    pub datasets: Vec<DatasetConfig>,
    pub split: SplitConfig,
    pub augment: AugmentConfig,
    #[serde(default)]
    pub scenarios: ScenarioConfig,
    #[serde(default)]
    pub clients: ClientsConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub pairs: PairsConfig,
    pub review: ReviewConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| PipelineError::Config(m);
        self.augment.validate().map_err(|e| cfg(e.to_string()))?;
        self.scenarios.validate().map_err(|e| cfg(format!("scenarios: {e}")))?;
        if !self.split.n.is_multiple_of(2) {
            return Err(cfg(format!("split.n must be even, got {}", self.split.n)));
        }
        if self.pairs.balance.split(self.pairs.target_n).is_none() {
            return Err(cfg(format!(
                "pairs.target_n {} cannot be split at the configured balance",
                self.pairs.target_n
            )));
        }
        if self.pairs.refusal_phrases.is_empty() {
            return Err(cfg("pairs.refusal_phrases is empty".into()));
        }
        let mut ids = HashSet::new();
        for d in &self.datasets {
            if d.id.is_empty() || d.id.contains(['/', '\\']) || !ids.insert(&d.id) {
                return Err(cfg(format!("dataset id {:?} is empty, contains a path separator or is repeated", d.id)));
            }
        }
        Ok(())
    }

    /// The configuration with every default filled in, as TOML. Reading it
    /// back yields an equal configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    fn records_path(&self, dataset: &str) -> PathBuf {
        self.out().join("records").join(format!("{dataset}.jsonl"))
    }

    fn split_path(&self, dataset: &str, part: &str) -> PathBuf {
        self.out().join("splits").join(dataset).join(format!("{part}.jsonl"))
    }

    fn index_path(&self) -> PathBuf {
        self.out().join("index").join("triples.json")
    }

    fn scenario_dir(&self, dataset: &str, split: Split) -> PathBuf {
        self.out().join("scenarios").join(dataset).join(split.as_str())
    }
}

/// Runtime overrides shared by several commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mock_fixtures: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

fn summary(command: &str, fields: Value) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("command".into(), json!(command));
    if let Value::Object(rest) = fields {
        obj.extend(rest);
    }
    Value::Object(obj)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl_to(&mut buf, items).expect("writing to memory");
    buf
}

pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<Value> {
    if cfg.datasets.is_empty() {
        return Err(PipelineError::Config("no [[datasets]] configured".into()));
    }
    let mut per_dataset = serde_json::Map::new();
    for d in &cfg.datasets {
        let src = cfg.resolve(&d.path);
        let (mut records, warnings) = match d.format {
            DatasetFormat::Squad => {
                let o = ingest_squad(&src)?;
                (o.records, o.warnings.len())
            }
            DatasetFormat::Webqa => {
                let o = ingest_webqa(&src)?;
                (o.records, o.warnings.len())
            }
            DatasetFormat::Jsonl => (read_jsonl::<QARecord>(&src)?, 0),
        };
        for r in &mut records {
            r.dataset_id = d.id.clone();
        }
        let path = cfg.records_path(&d.id);
        let payload = jsonl_bytes(&records);
        write_bytes(&path, &payload)?;
        DatasetManifest::new(&d.id, &records, None, &d.path, &payload).write(&path.with_extension("manifest.json"))?;
        per_dataset.insert(d.id.clone(), json!({"records": records.len(), "warnings": warnings}));
    }
    Ok(summary("ingest", json!({ "datasets": per_dataset })))
}

pub fn cmd_split(cfg: &PipelineConfig) -> Result<Value> {
    let mut per_dataset = serde_json::Map::new();
    for d in &cfg.datasets {
        let records: Vec<QARecord> = read_jsonl(&cfg.records_path(&d.id))?;
        let (dev, test) = sample_split(&records, cfg.split.n, cfg.split.seed)?;
        let drawn: HashSet<&str> = dev.iter().chain(&test).map(|r| r.id.as_str()).collect();
        let train: Vec<QARecord> = records.iter().filter(|r| !drawn.contains(r.id.as_str())).cloned().collect();
        let mut all = Vec::new();
        for (part, rows) in [("dev", &dev), ("test", &test), ("train", &train)] {
            let payload = jsonl_bytes(rows);
            write_bytes(&cfg.split_path(&d.id, part), &payload)?;
            if part != "train" {
                all.extend(rows.iter().cloned());
            }
        }
        let manifest = DatasetManifest::new(&d.id, &all, Some(cfg.split.seed), &d.path, &jsonl_bytes(&all));
        manifest.write(&cfg.out().join("splits").join(&d.id).join("manifest.json"))?;
        per_dataset.insert(d.id.clone(), json!({"dev": dev.len(), "test": test.len(), "train": train.len()}));
    }
    Ok(summary("split", json!({ "seed": cfg.split.seed, "datasets": per_dataset })))
}

pub fn cmd_index(cfg: &PipelineConfig) -> Result<Value> {
    let Some(src) = &cfg.triples else {
        return Err(PipelineError::Config("no `triples` file configured".into()));
    };
    let triples = read_triples_tsv(&cfg.resolve(src)).map_err(data)?;
    let language = cfg
        .datasets
        .first()
        .and_then(|d| read_jsonl::<QARecord>(&cfg.records_path(&d.id)).ok())
        .and_then(|r| r.first().map(|r| r.language))
        .unwrap_or(crate::textops::Language::English);
    let index = TripleIndex::build(triples, language).map_err(data)?;
    let path = cfg.index_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(data)?;
    }
    index.save(&path).map_err(data)?;
    Ok(summary("index", json!({"triples": index.len(), "language": language, "path": path})))
}

type BoxedCompletion = Box<dyn CompletionClient>;

/// Completion and search clients selected by the configuration.
pub struct Clients {
    pub completion: Option<Box<dyn CompletionClient>>,
    pub search: Option<Box<dyn SearchClient>>,
    pub templates: TemplateSet,
}

impl Clients {
    pub fn from_config(cfg: &PipelineConfig, opts: &RunOptions) -> Result<Self> {
        let client_err = |e: ClientError| match e {
            ClientError::Config(m) | ClientError::Template(m) => PipelineError::Config(m),
            other => PipelineError::Client(other.to_string()),
        };
        let templates = match &cfg.clients.templates_dir {
            Some(dir) => TemplateSet::with_overrides(&cfg.resolve(dir)).map_err(client_err)?,
            None => TemplateSet::default(),
        };
        let fixtures =
            opts.mock_fixtures.clone().or_else(|| cfg.clients.mock_fixtures.as_deref().map(|p| cfg.resolve(p)));
        let (completion, search): (Option<BoxedCompletion>, Option<Box<dyn SearchClient>>) = match fixtures {
            Some(dir) => {
                let (c, s) = load_fixture_dir(&dir).map_err(|e| PipelineError::Config(e.to_string()))?;
                (Some(Box::new(c)), Some(Box::new(s)))
            }
            None => {
                let completion = match &cfg.clients.completion {
                    Some(ep) => {
                        Some(Box::new(HttpChatClient::new(ep.clone()).map_err(client_err)?) as Box<dyn CompletionClient>)
                    }
                    None => None,
                };
                let search = match &cfg.clients.search {
                    Some(s) => Some(Box::new(
                        SerpApiClient::new(&s.url, &s.api_key_env, s.timeout_ms, s.max_in_flight)
                            .map_err(client_err)?,
                    ) as Box<dyn SearchClient>),
                    None => None,
                };
                (completion, search)
            }
        };
        let completion = match (completion, &opts.trace) {
            (Some(c), Some(path)) => Some(Box::new(
                TracingClient::new(c, path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?,
            ) as Box<dyn CompletionClient>),
            (c, _) => c,
        };
        Ok(Self { completion, search, templates })
    }

    pub fn llm(&self, retry: RetryPolicy) -> Option<LlmService<'_>> {
        self.completion.as_deref().map(|c| LlmService::new(c, retry, &self.templates))
    }
}

pub fn cmd_build(cfg: &PipelineConfig, scenarios: &[Scenario], opts: &RunOptions) -> Result<Value> {
    let mut scenario_cfg = cfg.scenarios.clone();
    if !scenarios.is_empty() {
        scenario_cfg.enabled = scenarios.to_vec();
    }
    let clients = Clients::from_config(cfg, opts)?;
    let index = if scenario_cfg.enabled.contains(&Scenario::MSIncons) {
        let path = cfg.index_path();
        if !path.exists() {
            return Err(PipelineError::Data(format!("{} not found; run `index` first", path.display())));
        }
        Some(TripleIndex::load(&path).map_err(data)?)
    } else {
        None
    };
    let mut per_dataset = serde_json::Map::new();
    let mut violations = 0;
    for d in &cfg.datasets {
        let all: Vec<QARecord> = read_jsonl(&cfg.records_path(&d.id))?;
        let contexts: Vec<&str> = all.iter().map(|r| r.context.as_str()).collect();
        let tfidf =
            TfIdfModel::fit(&contexts, all.first().map(|r| r.language).unwrap_or(crate::textops::Language::English))
                .ok();
        let ctx = BuildContext {
            config: &scenario_cfg,
            llm: clients.llm(cfg.clients.retry),
            search: clients.search.as_deref(),
            search_retry: cfg.clients.retry,
            tfidf: tfidf.as_ref(),
            index: index.as_ref(),
        };
        let mut per_split = serde_json::Map::new();
        for split in [Split::Dev, Split::Test] {
            let records: Vec<QARecord> = read_jsonl(&cfg.split_path(&d.id, split.as_str()))?;
            let build = build_all(&records, &ctx);
            let dir = cfg.scenario_dir(&d.id, split);
            let mut counts = serde_json::Map::new();
            for (scenario, samples) in &build.samples {
                let found = validate(samples);
                for v in &found {
                    log::error!("invariant violation in {}: {}", v.sample_id, v.message);
                }
                violations += found.len();
                write_bytes(&dir.join(format!("{scenario}.jsonl")), &jsonl_bytes(samples))?;
                counts.insert(scenario.to_string(), json!(samples.len()));
                if *scenario == Scenario::MSConf && !samples.is_empty() {
                    let rows =
                        export_review(samples, cfg.review.n.min(samples.len()), cfg.review.seed).map_err(data)?;
                    let path = cfg.out().join("review").join(format!("{}-{}-MSConf.tsv", d.id, split.as_str()));
                    write_review_tsv(&path, &rows).map_err(data)?;
                }
            }
            if !build.report.balanced() {
                return Err(PipelineError::Data(format!(
                    "build report for {}/{} does not balance",
                    d.id,
                    split.as_str()
                )));
            }
            write_json(&dir.join("build_report.json"), &build.report)?;
            per_split.insert(split.as_str().into(), Value::Object(counts));
        }
        per_dataset.insert(d.id.clone(), Value::Object(per_split));
    }
    if violations > 0 {
        return Err(PipelineError::Data(format!("{violations} scenario invariant violations")));
    }
    Ok(summary("build", json!({ "datasets": per_dataset, "violations": violations })))
}

pub fn cmd_augment(cfg: &PipelineConfig) -> Result<Value> {
    let mut per_dataset = serde_json::Map::new();
    for d in &cfg.datasets {
        let train_path = cfg.split_path(&d.id, "train");
        let records: Vec<QARecord> =
            if train_path.exists() { read_jsonl(&train_path)? } else { read_jsonl(&cfg.records_path(&d.id))? };
        let out = build_training_set(&records, &cfg.augment).map_err(|e| PipelineError::Config(e.to_string()))?;
        let changed = out.iter().filter(|x| !x.applied_ops.is_empty()).count();
        write_bytes(&cfg.out().join("augment").join(format!("{}.jsonl", d.id)), &jsonl_bytes(&out))?;
        per_dataset.insert(d.id.clone(), json!({"records": out.len(), "transformed": changed}));
    }
    Ok(summary("augment", json!({ "seed": cfg.augment.seed, "datasets": per_dataset })))
}

/// Every scenario sample written by `build`, keyed by sample id.
pub fn load_samples(cfg: &PipelineConfig) -> Result<HashMap<String, ScenarioSample>> {
    let mut out = HashMap::new();
    for d in &cfg.datasets {
        for split in [Split::Dev, Split::Test] {
            let dir = cfg.scenario_dir(&d.id, split);
            for scenario in Scenario::ALL {
                let path = dir.join(format!("{scenario}.jsonl"));
                if path.exists() {
                    for s in read_jsonl::<ScenarioSample>(&path)? {
                        out.insert(s.id.clone(), s);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Simulated model outputs for every built sample, for exercising `eval`
/// and `pairs` without a model.
pub fn cmd_simulate(cfg: &PipelineConfig, seed: u64, out: &Path) -> Result<Value> {
    let samples: Vec<ScenarioSample> = load_samples(cfg)?.into_values().collect();
    if samples.is_empty() {
        return Err(PipelineError::Data("no scenario samples found; run `build` first".into()));
    }
    let outputs = crate::synth::model_outputs(&samples, seed);
    write_jsonl(out, &outputs)?;
    Ok(summary("simulate", json!({ "outputs": outputs.len(), "seed": seed, "path": out })))
}

pub fn cmd_eval(cfg: &PipelineConfig, outputs: &Path, opts: &RunOptions) -> Result<Value> {
    let outputs: Vec<ModelOutput> = read_jsonl(outputs)?;
    let samples = load_samples(cfg)?;
    let clients = match cfg.eval.judge {
        JudgeKind::Llm => Some(Clients::from_config(cfg, opts)?),
        JudgeKind::Rule => None,
    };
    let llm = match &clients {
        Some(c) => Some(
            c.llm(cfg.clients.retry)
                .ok_or_else(|| PipelineError::Config("llm judge needs a completion client".into()))?,
        ),
        None => None,
    };
    let rules = RuleJudgeConfig { rejection_phrases: cfg.eval.rejection_phrases.clone() };
    let mut judged = Vec::with_capacity(outputs.len());
    for o in &outputs {
        let s = samples
            .get(&o.sample_id)
            .ok_or_else(|| PipelineError::Data(format!("unknown sample id {}", o.sample_id)))?;
        if s.scenario != o.scenario {
            return Err(PipelineError::Data(format!(
                "sample {} is {}, output says {}",
                o.sample_id, s.scenario, o.scenario
            )));
        }
        let rule = || rule_judge(&o.model_output, &s.gold_answer, s.language, &rules);
        let (verdict, fallback) = match &llm {
            None => (rule(), false),
            Some(svc) => match svc.judge(&s.question, &s.gold_answer, &o.model_output) {
                Ok(v) => (v, false),
                Err(ClientError::JudgeParse(_) | ClientError::EmptyInput(_)) => (rule(), true),
                Err(e) => return Err(PipelineError::Client(format!("{}: {e}", o.sample_id))),
            },
        };
        let r = recall::<f64>(&o.model_output, &s.gold_answer, s.language, cfg.eval.recall_mode).unwrap_or(0.0);
        judged.push(JudgedOutput {
            sample_id: o.sample_id.clone(),
            scenario: o.scenario,
            model_output: o.model_output.clone(),
            verdict,
            recall: r,
            fallback,
        });
    }
    let mut groups: BTreeMap<Scenario, ScenarioOutcomes<f64>> =
        cfg.scenarios.enabled.iter().map(|s| (*s, ScenarioOutcomes::new(*s, Vec::new()))).collect();
    for j in &judged {
        let g = groups.entry(j.scenario).or_insert_with(|| ScenarioOutcomes::new(j.scenario, Vec::new()));
        g.verdicts.push(j.verdict);
        g.recalls.push(j.recall);
    }
    let judge_name = match (&cfg.eval.judge, &clients) {
        (JudgeKind::Llm, Some(c)) => c.completion.as_ref().map(|c| c.name().to_string()).unwrap_or_default(),
        _ => "rule".to_string(),
    };
    let groups: Vec<_> = groups.into_values().collect();
    let report = aggregate(&cfg.eval.model, &judge_name, &groups).map_err(data)?;
    let dir = cfg.out().join("eval");
    write_bytes(&dir.join("judged.jsonl"), &jsonl_bytes(&judged))?;
    write_bytes(&dir.join("report.json"), render_report(&report, ReportFormat::Json).as_bytes())?;
    write_bytes(&dir.join("report.txt"), render_report(&report, ReportFormat::Text).as_bytes())?;
    Ok(summary(
        "eval",
        json!({
            "outputs": judged.len(),
            "fallbacks": judged.iter().filter(|j| j.fallback).count(),
            "overall_acc": report.overall_acc,
            "overall_wscore": report.overall_wscore,
        }),
    ))
}

pub fn cmd_pairs(cfg: &PipelineConfig, judged: Option<&Path>, tokenized: bool) -> Result<Value> {
    let default_path = cfg.out().join("eval").join("judged.jsonl");
    let judged: Vec<JudgedOutput> = read_jsonl(judged.unwrap_or(&default_path))?;
    let samples = load_samples(cfg)?;
    let mut picked = Vec::with_capacity(judged.len());
    for j in &judged {
        picked.push(
            samples
                .get(&j.sample_id)
                .cloned()
                .ok_or_else(|| PipelineError::Data(format!("unknown sample id {}", j.sample_id)))?,
        );
    }
    let verdicts: Vec<_> = judged.iter().map(|j| j.verdict).collect();
    let outputs: Vec<_> = judged.iter().map(|j| j.model_output.clone()).collect();
    let options = PairOptions {
        refusal_phrases: cfg.pairs.refusal_phrases.clone(),
        target_n: cfg.pairs.target_n,
        balance: cfg.pairs.balance,
        seed: cfg.pairs.seed,
    };
    let pairs = build_pairs(&picked, &verdicts, &outputs, &options).map_err(data)?;
    let dir = cfg.out().join("pairs");
    write_jsonl(&dir.join("pairs.jsonl"), &pairs)?;
    if tokenized {
        let language = picked.first().map(|s| s.language).unwrap_or(crate::textops::Language::English);
        let vocab = WordVocab::fit(&pairs, language);
        write_json(&dir.join("vocab.json"), &vocab)?;
        write_jsonl(&dir.join("tokenized.jsonl"), &tokenize_for_training(&pairs, &vocab))?;
    }
    let mut by_origin = BTreeMap::new();
    for p in &pairs {
        *by_origin.entry(p.origin).or_insert(0usize) += 1;
    }
    Ok(summary("pairs", json!({ "pairs": pairs.len(), "by_origin": by_origin, "seed": cfg.pairs.seed })))
}

pub const LOSS_CHECK_TOLERANCE: f64 = 1e-5;

/// Loss, gradients and finite-difference residual for a JSON array of
/// `{chosen_logps, rejected_logps}` objects.
pub fn cmd_loss_check(batch: &Path, reduction: Reduction) -> Result<Value> {
    let text = std::fs::read_to_string(batch).map_err(|e| data(format!("{}: {e}", batch.display())))?;
    let pairs: Vec<TokenLogProbs<f64>> =
        serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", batch.display())))?;
    let result = contrastive_loss(&pairs, reduction).map_err(data)?;
    let residual = finite_difference_residual(&pairs, reduction, 1e-6, 1e-8).map_err(data)?;
    let out = summary(
        "loss-check",
        json!({
            "pairs": pairs.len(),
            "loss": result.loss,
            "pair_losses": result.pair_losses,
            "margins": result.margins,
            "grad_chosen": result.grad_chosen,
            "grad_rejected": result.grad_rejected,
            "fd_residual": residual,
        }),
    );
    if residual >= LOSS_CHECK_TOLERANCE {
        return Err(PipelineError::Data(format!(
            "finite-difference residual {residual:e} exceeds {LOSS_CHECK_TOLERANCE:e}"
        )));
    }
    Ok(out)
}

/// Reads one rate table or an array of them.
pub fn load_rate_tables(path: &Path) -> Result<Vec<RateTable>> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let parsed = match value {
        Value::Array(_) => serde_json::from_value(value),
        other => serde_json::from_value(other).map(|t| vec![t]),
    };
    parsed.map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Rendered reports (concatenated) plus the summary line.
pub fn cmd_report(from: &Path, format: ReportFormat) -> Result<(String, Value)> {
    let tables = load_rate_tables(from)?;
    let mut rendered = String::new();
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for t in &tables {
        let report = t.to_report::<f64>().map_err(|e| data(format!("{}: {e}", t.model)))?;
        models.push(json!({
            "model": report.model,
            "overall_acc": (report.overall_acc * 1000.0).round() / 10.0,
            "overall_wscore": (report.overall_wscore * 1000.0).round() / 10.0,
        }));
        reports.push(report);
    }
    match format {
        ReportFormat::Text => {
            for (i, r) in reports.iter().enumerate() {
                if i > 0 {
                    rendered.push('\n');
                }
                rendered.push_str(&render_report(r, ReportFormat::Text));
            }
        }
        ReportFormat::Json => {
            rendered = serde_json::to_string_pretty(&reports).expect("reports serialize");
            rendered.push('\n');
        }
    }
    Ok((rendered, summary("report", json!({ "models": models }))))
}
