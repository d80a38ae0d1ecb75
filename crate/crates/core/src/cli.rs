//! Command-line surface: run configuration, provider wiring and the
//! `score`, `eval`, `report`, `synth-check`, `generate` and `perturb` verbs.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{build_machine_corpus, load_corpus, sample_split, write_corpus, CorpusRecord, DatasetManifest};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::providers::cache::{CacheStore, Cached};
use crate::providers::remote::{ProviderConfig, RemoteEmbedding, RemoteFiller, RemoteGenerator, RemoteLogprobs};
use crate::providers::synthetic::{
    CharNgramLm, HashedNgramEmbedder, SyntheticGenerator, SyntheticLogprobs, UnigramFiller,
};
use crate::providers::{
    EmbeddingProvider, LogprobProvider, MaskFiller, ProviderIdentity, ProviderSet, TextGenerator,
};
use crate::report::{aggregate_table, Format, TableLayout};
use crate::risk::{cross_validated_tau, tau_hat, Label, LossSpec, ScoredSample, TauReport};
use crate::seed::derive_seed;
use crate::synth::{quantize, sample_balanced, verify_information_processing, GaussianPair, OracleReport};
use crate::transforms::{check_capabilities, perturb, score_corpus, ScoringOptions, TransformSpec};

pub const CONFIG_VERSION: u32 = 1;

fn default_one() -> usize {
    1
}
fn default_half() -> f64 {
    0.5
}
fn default_unit() -> f64 {
    1.0
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextConfig {
    pub id: String,
    pub corpus: PathBuf,
    /// Sample this many records per class instead of using the whole corpus.
    #[serde(default)]
    pub per_class: Option<usize>,
    #[serde(default)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderEntry {
    Synthetic {
        #[serde(default)]
        reference_corpus: Option<PathBuf>,
    },
    Remote(ProviderConfig),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidersConfig {
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub logprobs: Option<ProviderEntry>,
    #[serde(default)]
    pub embedding: Option<ProviderEntry>,
    #[serde(default)]
    pub fill: Option<ProviderEntry>,
    #[serde(default)]
    pub generation: Option<ProviderEntry>,
}

impl ProvidersConfig {
    pub fn all_synthetic() -> Self {
        let s = || Some(ProviderEntry::Synthetic { reference_corpus: None });
        ProvidersConfig {
            cache: None,
            logprobs: s(),
            embedding: s(),
            fill: s(),
            generation: s(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub concurrency: usize,
    #[serde(default)]
    pub failure_limit: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub models: Vec<String>,
    #[serde(default)]
    pub model_pair: Option<(String, String)>,
    #[serde(default = "default_half")]
    pub pi: f64,
    #[serde(default = "default_unit")]
    pub alpha: f64,
    #[serde(default = "default_unit")]
    pub beta: f64,
    #[serde(default)]
    pub folds: Option<usize>,
    pub contexts: Vec<ContextConfig>,
    pub transforms: Vec<TransformSpec>,
    #[serde(default = "ProvidersConfig::all_synthetic")]
    pub providers: ProvidersConfig,
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parse and validate; relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| field_err(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.out = base.join(&self.out);
        for c in &mut self.contexts {
            c.corpus = base.join(&c.corpus);
        }
        let p = &mut self.providers;
        p.cache = p.cache.take().map(|c| base.join(c));
        for e in [&mut p.logprobs, &mut p.embedding, &mut p.fill, &mut p.generation]
            .into_iter()
            .flatten()
        {
            if let ProviderEntry::Synthetic {
                reference_corpus: Some(r),
            } = e
            {
                *r = base.join(&*r);
            }
        }
    }

    pub fn loss(&self) -> LossSpec {
        LossSpec {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_VERSION {
            return Err(field_err("format_version", format!("unsupported version {}", self.format_version)));
        }
        if self.concurrency == 0 {
            return Err(field_err("concurrency", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.failure_limit) {
            return Err(field_err("failure_limit", "must lie in [0, 1]"));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(field_err("pi", format!("must lie in (0, 1), got {}", self.pi)));
        }
        self.loss().validate().map_err(|e| field_err("alpha/beta", e.to_string()))?;
        if self.models.is_empty() {
            return Err(field_err("models", "at least one model id is required"));
        }
        if let Some((a, b)) = &self.model_pair {
            for m in [a, b] {
                if !self.models.contains(m) {
                    return Err(field_err("model_pair", format!("`{m}` is not listed in models")));
                }
            }
        }
        let mut ids = HashSet::new();
        for (i, c) in self.contexts.iter().enumerate() {
            if !ids.insert(&c.id) {
                return Err(field_err(format!("contexts[{i}].id"), format!("duplicate context `{}`", c.id)));
            }
            if !c.corpus.is_file() {
                return Err(field_err(
                    format!("contexts[{i}].corpus"),
                    format!("{} does not exist", c.corpus.display()),
                ));
            }
        }
        let mut names = HashSet::new();
        for (i, t) in self.transforms.iter().enumerate() {
            t.validate().map_err(|e| field_err(format!("transforms[{i}]"), e.to_string()))?;
            if !names.insert(t.name()) {
                return Err(field_err(format!("transforms[{i}].kind"), format!("duplicate transform {}", t.name())));
            }
        }
        for (name, entry) in self.provider_entries() {
            if let Some(ProviderEntry::Remote(c)) = entry {
                c.validate().map_err(|e| field_err(format!("providers.{name}"), e.to_string()))?;
            }
        }
        Ok(())
    }

    fn provider_entries(&self) -> [(&'static str, &Option<ProviderEntry>); 4] {
        let p = &self.providers;
        [
            ("logprobs", &p.logprobs),
            ("embedding", &p.embedding),
            ("fill", &p.fill),
            ("generation", &p.generation),
        ]
    }

    pub fn transform(&self, name: &str) -> Result<&TransformSpec> {
        self.transforms
            .iter()
            .find(|t| t.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| field_err("transforms", format!("no transform named `{name}`")))
    }

    pub fn context(&self, id: &str) -> Result<&ContextConfig> {
        self.contexts
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| field_err("contexts", format!("no context `{id}`")))
    }

    /// The spec actually run: its seed is derived from the run seed and the transform name.
    pub fn effective_spec(&self, spec: &TransformSpec) -> TransformSpec {
        let mut s = spec.clone();
        s.seed = derive_seed(self.seed, spec.name());
        s
    }

    pub fn layout(&self) -> TableLayout {
        TableLayout {
            contexts: self.contexts.iter().map(|c| c.id.clone()).collect(),
            models: self.models.clone(),
            transforms: self.transforms.iter().map(|t| t.name().to_string()).collect(),
            model_pair: self.model_pair.clone(),
        }
    }
}

struct Synthetic {
    lm: Option<Arc<CharNgramLm>>,
}

impl Synthetic {
    fn lm(&mut self, reference: &Option<PathBuf>) -> Result<Arc<CharNgramLm>> {
        match reference {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(Arc::new(CharNgramLm::fit(&text)))
            }
            None => Ok(self.lm.get_or_insert_with(|| Arc::new(CharNgramLm::reference())).clone()),
        }
    }
}

/// Construct the configured providers, each wrapped in the shared cache when one is set.
pub fn build_providers(cfg: &ProvidersConfig) -> Result<ProviderSet> {
    let store = match &cfg.cache {
        Some(p) => Some(Arc::new(CacheStore::open(p)?)),
        None => None,
    };
    let mut syn = Synthetic { lm: None };
    let mut set = ProviderSet {
        logprobs: None,
        embedding: None,
        filler: None,
        generator: None,
    };

    set.logprobs = match &cfg.logprobs {
        None => None,
        Some(ProviderEntry::Synthetic { reference_corpus }) => {
            Some(Arc::new(SyntheticLogprobs::new(syn.lm(reference_corpus)?)) as Arc<dyn LogprobProvider>)
        }
        Some(ProviderEntry::Remote(c)) => Some(Arc::new(RemoteLogprobs::new(c.clone())?) as Arc<dyn LogprobProvider>),
    };
    set.embedding = match &cfg.embedding {
        None => None,
        Some(ProviderEntry::Synthetic { .. }) => {
            Some(Arc::new(HashedNgramEmbedder::default()) as Arc<dyn EmbeddingProvider>)
        }
        Some(ProviderEntry::Remote(c)) => {
            Some(Arc::new(RemoteEmbedding::new(c.clone())?) as Arc<dyn EmbeddingProvider>)
        }
    };
    let unigram = |r: &Option<PathBuf>| -> Result<Arc<UnigramFiller>> {
        match r {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(Arc::new(UnigramFiller::fit(&text)?))
            }
            None => Ok(Arc::new(UnigramFiller::reference())),
        }
    };
    set.filler = match &cfg.fill {
        None => None,
        Some(ProviderEntry::Synthetic { reference_corpus }) => {
            Some(unigram(reference_corpus)? as Arc<dyn MaskFiller>)
        }
        Some(ProviderEntry::Remote(c)) => {
            Some(Arc::new(RemoteFiller::new(c.clone(), unigram(&None)?)?) as Arc<dyn MaskFiller>)
        }
    };
    set.generator = match &cfg.generation {
        None => None,
        Some(ProviderEntry::Synthetic { reference_corpus }) => {
            Some(Arc::new(SyntheticGenerator::new(syn.lm(reference_corpus)?)) as Arc<dyn TextGenerator>)
        }
        Some(ProviderEntry::Remote(c)) => {
            Some(Arc::new(RemoteGenerator::new(c.clone())?) as Arc<dyn TextGenerator>)
        }
    };

    if let Some(store) = store {
        set = ProviderSet {
            logprobs: set
                .logprobs
                .map(|p| Arc::new(Cached::new(store.clone(), p)) as Arc<dyn LogprobProvider>),
            embedding: set
                .embedding
                .map(|p| Arc::new(Cached::new(store.clone(), p)) as Arc<dyn EmbeddingProvider>),
            filler: set.filler.map(|p| Arc::new(Cached::new(store.clone(), p)) as Arc<dyn MaskFiller>),
            generator: set
                .generator
                .map(|p| Arc::new(Cached::new(store.clone(), p)) as Arc<dyn TextGenerator>),
        };
    }
    Ok(set)
}

/// First line of every score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFileHeader {
    pub format_version: u32,
    pub context_id: String,
    pub model_id: String,
    pub transform: String,
    pub spec: TransformSpec,
    pub run_seed: u64,
    pub providers: Vec<(String, ProviderIdentity)>,
    pub n_records: usize,
    pub failures: Vec<(String, String)>,
    /// How over-long texts were split for the logprob provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob_chunking: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub header: ScoreFileHeader,
    pub samples: Vec<ScoredSample>,
}

impl ScoreFile {
    pub fn render(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)?;
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "empty score file".into(),
        })?;
        let header: ScoreFileHeader = serde_json::from_str(first).map_err(|e| parse_err(1, e))?;
        let samples = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i + 1, e)))
            .collect::<Result<Vec<ScoredSample>>>()?;
        Ok(ScoreFile { header, samples })
    }
}

/// Non-deterministic run metadata, kept beside the score file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub started_at: String,
    pub finished_at: String,
    pub concurrency: usize,
    pub remote_calls: u64,
}

pub fn score_file_name(context_id: &str, model_id: &str, transform: &str) -> String {
    format!("{context_id}__{model_id}__{transform}.jsonl")
}

/// Records of one context restricted to its human side and one model's machine side.
pub fn context_records(ctx: &ContextConfig, model_id: &str) -> Result<Vec<CorpusRecord>> {
    let all = load_corpus(&ctx.corpus)?;
    let selected: Vec<CorpusRecord> = all
        .into_iter()
        .filter(|r| r.context_id == ctx.id)
        .filter(|r| r.label == Label::Human || r.model_id() == Some(model_id))
        .collect();
    match ctx.per_class {
        Some(n) => {
            let split = sample_split(&selected, n, ctx.split_seed, true)?;
            Ok(split.human.into_iter().chain(split.machine).collect())
        }
        None => Ok(selected),
    }
}

pub fn cmd_score(
    cfg: &RunConfig,
    providers: &ProviderSet,
    context_id: &str,
    model_id: &str,
    transform: &str,
) -> Result<PathBuf> {
    let ctx = cfg.context(context_id)?;
    if !cfg.models.iter().any(|m| m == model_id) {
        return Err(field_err("models", format!("no model `{model_id}`")));
    }
    let spec = cfg.effective_spec(cfg.transform(transform)?);
    check_capabilities(&spec, providers)?;
    let records = context_records(ctx, model_id)?;
    let started = chrono::Utc::now();
    let before = providers.remote_calls();
    let outcome = score_corpus(
        &records,
        &spec,
        providers,
        ScoringOptions {
            concurrency: cfg.concurrency,
            failure_limit: cfg.failure_limit,
        },
    )?;
    let file = ScoreFile {
        header: ScoreFileHeader {
            format_version: 1,
            context_id: ctx.id.clone(),
            model_id: model_id.to_string(),
            transform: spec.name().to_string(),
            spec: spec.clone(),
            run_seed: cfg.seed,
            providers: providers.identities(),
            n_records: records.len(),
            failures: outcome.failures.clone(),
            logprob_chunking: match &cfg.providers.logprobs {
                Some(ProviderEntry::Remote(c)) => c
                    .chunk_chars
                    .map(|n| format!("chunks of at most {n} chars, no overlap, summed")),
                _ => None,
            },
        },
        samples: outcome.samples,
    };
    let path = cfg
        .out
        .join("scores")
        .join(score_file_name(&ctx.id, model_id, spec.name()));
    write_atomic(&path, file.render()?.as_bytes())?;
    let meta = RunMeta {
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        concurrency: cfg.concurrency,
        remote_calls: providers.remote_calls() - before,
    };
    let meta_path = path.with_extension("run.json");
    write_atomic(&meta_path, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(path)
}

/// One τ̂ report per score file.
pub fn cmd_eval(files: &[PathBuf], pi: f64, loss: &LossSpec, folds: Option<usize>, seed: u64) -> Result<Vec<TauReport>> {
    let mut reports = Vec::new();
    for path in files {
        let f = ScoreFile::load(path)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let with_file = |e: Error| match e {
            Error::InsufficientData(m) => Error::InsufficientData(format!("{}: {m}", path.display())),
            other => other,
        };
        let h = &f.header;
        let mut r = tau_hat(&f.samples, pi, loss)
            .map_err(with_file)?
            .with_ids(&h.context_id, &h.model_id, &h.transform);
        if let Some(k) = folds {
            let cv_seed = derive_seed(seed, &name);
            r.tau_cv = Some(cross_validated_tau(&f.samples, k, cv_seed, pi, loss).map_err(with_file)?);
        }
        r.score_file = Some(name);
        r.transform_spec = Some(h.spec.clone());
        reports.push(r);
    }
    reports.sort_by(|a, b| {
        (&a.context_id, &a.model_id, &a.transform).cmp(&(&b.context_id, &b.model_id, &b.transform))
    });
    Ok(reports)
}

pub fn write_reports(path: &Path, reports: &[TauReport]) -> Result<()> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_reports(path: &Path) -> Result<Vec<TauReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Render reports; the machine-readable table (with score-file links) is returned alongside.
pub fn cmd_report(reports: &[TauReport], layout: &TableLayout, format: Format) -> Result<(String, String)> {
    let table = aggregate_table(reports, layout)?;
    Ok((table.render(format), serde_json::to_string_pretty(&table)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCheckSummary {
    pub convergence: Vec<OracleReport>,
    pub lossy: Vec<(usize, OracleReport)>,
    pub tolerance: f64,
    pub converged_seeds: usize,
    pub required_seeds: usize,
    pub passed: bool,
}

/// Convergence of τ̂ to its analytic value and quantized-score checks across seeds.
pub fn cmd_synth_check(
    pair: &GaussianPair,
    pi: f64,
    loss: &LossSpec,
    n_per_class: usize,
    seeds: &[u64],
    bins: &[usize],
    tolerance: f64,
) -> Result<SynthCheckSummary> {
    use rayon::prelude::*;
    let analytic = crate::synth::analytic_tau(pair, pi, loss)?;
    let bayes = crate::synth::bayes_risk(pair, pi, loss)?;
    let chance = crate::risk::chance_risk(pi, loss);
    let convergence = seeds
        .par_iter()
        .map(|&seed| {
            let samples = sample_balanced(pair, n_per_class, seed)?;
            let r = tau_hat(&samples, pi, loss)?;
            Ok(OracleReport {
                pair: *pair,
                pi,
                bayes_risk: bayes,
                analytic_tau: analytic,
                empirical_tau: r.tau_hat,
                chance_risk: chance,
                raw_risk: r.risk,
                mapped_risk: r.risk,
                slack: tolerance,
                passed: (r.tau_hat - analytic).abs() <= tolerance,
                n: 2 * n_per_class,
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spread = pair.sigma0.max(pair.sigma1);
    let lo = pair.mu0.min(pair.mu1) - 4.0 * spread;
    let hi = pair.mu0.max(pair.mu1) + 4.0 * spread;
    let jobs: Vec<(usize, u64)> = bins.iter().flat_map(|&b| seeds.iter().map(move |&s| (b, s))).collect();
    let lossy = jobs
        .par_iter()
        .map(|&(b, seed)| {
            let q = quantize(b, lo, hi);
            Ok((b, verify_information_processing(pair, pi, loss, 2 * n_per_class, seed, &q)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let converged_seeds = convergence.iter().filter(|r| r.passed).count();
    let required_seeds = (seeds.len() * 95).div_ceil(100);
    let passed = converged_seeds >= required_seeds && lossy.iter().all(|(_, r)| r.passed);
    Ok(SynthCheckSummary {
        convergence,
        lossy,
        tolerance,
        converged_seeds,
        required_seeds,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub record_id: String,
    pub index: usize,
    pub seed: u64,
    pub masked_positions: Vec<usize>,
    pub text: String,
    pub degraded: bool,
    pub filler: ProviderIdentity,
}

/// `spec.n_q` perturbations per record, seeded as the scorers seed them.
pub fn cmd_perturb(records: &[CorpusRecord], spec: &TransformSpec, filler: &dyn MaskFiller) -> Result<Vec<PerturbationRecord>> {
    let identity = filler.identity();
    let mut out = Vec::new();
    let mut sorted: Vec<&CorpusRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for r in sorted {
        for p in perturb(&r.text, filler, spec, derive_seed(spec.seed, &r.id))? {
            out.push(PerturbationRecord {
                record_id: r.id.clone(),
                index: p.index,
                seed: p.seed,
                masked_positions: p.masked_positions,
                text: p.text,
                degraded: p.degraded,
                filler: identity.clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "taudetect", version, about = "Empirical tau-undetectability of machine-generated text")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the worker count.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score corpora with detector transforms.
    Score {
        #[arg(long)]
        context: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        transform: Option<String>,
    },
    /// Compute τ̂ reports from score files.
    Eval {
        /// Score files; defaults to every file under <out>/scores.
        files: Vec<PathBuf>,
        #[arg(long)]
        pi: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Aggregate reports into a table.
    Report {
        /// Report file; defaults to <out>/reports.jsonl.
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long, default_value = "plain")]
        format: Format,
        /// Models whose averages are differenced, as `a,b`.
        #[arg(long, value_delimiter = ',')]
        pair: Option<Vec<String>>,
    },
    /// Check the risk engine against Gaussian ground truth.
    SynthCheck {
        #[arg(long, default_value_t = 0.0)]
        mu0: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,
        #[arg(long, default_value_t = 2.0)]
        mu1: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma1: f64,
        #[arg(long, default_value_t = 0.5)]
        pi: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Samples per class.
        #[arg(long, default_value_t = 10000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "2,4,16")]
        bins: Vec<usize>,
        #[arg(long, default_value_t = 0.03)]
        tolerance: f64,
    },
    /// Build a machine corpus from a dataset manifest.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write mask-and-fill perturbations of a corpus.
    Perturb {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 20)]
        n_q: usize,
        #[arg(long, default_value_t = 0.1)]
        mask_rate: f64,
    },
}

impl GlobalArgs {
    fn config(&self) -> Result<Option<RunConfig>> {
        let Some(path) = &self.config else { return Ok(None) };
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = self.concurrency {
            if c == 0 {
                return Err(field_err("--concurrency", "must be at least 1"));
            }
            cfg.concurrency = c;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(Some(cfg))
    }

    fn require_config(&self) -> Result<RunConfig> {
        self.config()?.ok_or_else(|| field_err("--config", "this command needs a run configuration"))
    }

    fn out_dir(&self, cfg: Option<&RunConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.map(|c| c.out.clone()))
            .unwrap_or_else(default_out)
    }
}

fn score_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Run one parsed command, writing human-readable output to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn std::io::Write) -> Result<()> {
    let g = &cli.global;
    let say = |w: &mut dyn std::io::Write, s: &str| -> Result<()> {
        w.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e))
    };
    match cli.command {
        Command::Score { context, model, transform } => {
            let cfg = g.require_config()?;
            let providers = build_providers(&cfg.providers)?;
            for t in &cfg.transforms {
                check_capabilities(&cfg.effective_spec(t), &providers)?;
            }
            for c in &cfg.contexts {
                if context.as_ref().is_some_and(|x| x != &c.id) {
                    continue;
                }
                for m in &cfg.models {
                    if model.as_ref().is_some_and(|x| x != m) {
                        continue;
                    }
                    for t in &cfg.transforms {
                        if transform.as_ref().is_some_and(|x| !t.name().eq_ignore_ascii_case(x)) {
                            continue;
                        }
                        let path = cmd_score(&cfg, &providers, &c.id, m, t.name())?;
                        say(stdout, &format!("{}\n", path.display()))?;
                    }
                }
            }
            say(stdout, &format!("remote calls: {}\n", providers.remote_calls()))
        }
        Command::Eval { files, pi, alpha, beta, folds } => {
            let cfg = g.config()?;
            let out = g.out_dir(cfg.as_ref());
            let files = if files.is_empty() { score_files(&out.join("scores"))? } else { files };
            let base = cfg.as_ref().map(|c| c.loss()).unwrap_or(LossSpec::ZERO_ONE);
            let loss = LossSpec::new(alpha.unwrap_or(base.alpha), beta.unwrap_or(base.beta))?;
            let pi = pi.or(cfg.as_ref().map(|c| c.pi)).unwrap_or(0.5);
            let folds = folds.or(cfg.as_ref().and_then(|c| c.folds));
            let seed = g.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let reports = cmd_eval(&files, pi, &loss, folds, seed)?;
            write_reports(&out.join("reports.jsonl"), &reports)?;
            for r in &reports {
                let cv = r.tau_cv.map(|v| format!(" tau_cv={v:.4}")).unwrap_or_default();
                say(
                    stdout,
                    &format!(
                        "{} {} {} tau_hat={:.4}{cv}\n",
                        r.context_id, r.model_id, r.transform, r.tau_hat
                    ),
                )?;
            }
            Ok(())
        }
        Command::Report { reports, format, pair } => {
            let cfg = g.config()?;
            let out = g.out_dir(cfg.as_ref());
            let path = reports.unwrap_or_else(|| out.join("reports.jsonl"));
            let reports = load_reports(&path)?;
            let pair = match pair.as_deref() {
                None => None,
                Some([a, b]) => Some((a.clone(), b.clone())),
                Some(_) => return Err(field_err("--pair", "expected two models as `a,b`")),
            };
            let layout = match &cfg {
                Some(c) => {
                    let mut l = c.layout();
                    if pair.is_some() {
                        l.model_pair = pair;
                    }
                    l
                }
                None => TableLayout::inferred(&reports, pair),
            };
            let (rendered, json) = cmd_report(&reports, &layout, format)?;
            let ext = match format {
                Format::Plain => "txt",
                Format::Csv => "csv",
                Format::Markdown => "md",
            };
            write_atomic(&out.join(format!("table.{ext}")), rendered.as_bytes())?;
            write_atomic(&out.join("table.json"), json.as_bytes())?;
            say(stdout, &rendered)
        }
        Command::SynthCheck { mu0, sigma0, mu1, sigma1, pi, alpha, beta, n, seeds, bins, tolerance } => {
            let pair = GaussianPair::new(mu0, sigma0, mu1, sigma1)?;
            let loss = LossSpec::new(alpha, beta)?;
            let base = g.seed.unwrap_or(0);
            let seed_list: Vec<u64> = (0..seeds).map(|i| base + i).collect();
            let summary = cmd_synth_check(&pair, pi, &loss, n, &seed_list, &bins, tolerance)?;
            let out = g.out_dir(None);
            let mut lines = String::new();
            for r in summary.convergence.iter().chain(summary.lossy.iter().map(|(_, r)| r)) {
                lines.push_str(&serde_json::to_string(r)?);
                lines.push('\n');
            }
            write_atomic(&out.join("oracle.jsonl"), lines.as_bytes())?;
            let lossy_ok = summary.lossy.iter().filter(|(_, r)| r.passed).count();
            say(
                stdout,
                &format!(
                    "analytic tau {:.4}\nconverged {}/{} seeds within {} (need {})\nlossy maps {}/{} within slack\n{}\n",
                    summary.convergence.first().map_or(f64::NAN, |r| r.analytic_tau),
                    summary.converged_seeds,
                    summary.convergence.len(),
                    tolerance,
                    summary.required_seeds,
                    lossy_ok,
                    summary.lossy.len(),
                    if summary.passed { "PASS" } else { "FAIL" }
                ),
            )?;
            if summary.passed {
                Ok(())
            } else {
                Err(Error::Verification(format!(
                    "{} of {} seeds converged, {} of {} lossy checks held",
                    summary.converged_seeds,
                    summary.convergence.len(),
                    lossy_ok,
                    summary.lossy.len()
                )))
            }
        }
        Command::Generate { manifest } => {
            let cfg = g.config()?;
            let providers = build_providers(cfg.as_ref().map_or(&ProvidersConfig::all_synthetic(), |c| &c.providers))?;
            let generator = providers
                .generator
                .clone()
                .ok_or_else(|| Error::Capability("generate needs a generation provider".into()))?;
            let m = DatasetManifest::load(&manifest)?;
            let human = load_corpus(&m.human_source)?;
            let built = build_machine_corpus(&m, &human, generator.as_ref())?;
            let out = g.out_dir(cfg.as_ref()).join(format!("{}.jsonl", m.context_id));
            write_corpus(&out, &built.records())?;
            for (id, msg) in &built.failures {
                say(stdout, &format!("failed {id}: {msg}\n"))?;
            }
            say(
                stdout,
                &format!(
                    "{} ({} human, {} machine{})\n",
                    out.display(),
                    built.human.len(),
                    built.machine.len(),
                    if built.is_partial() { ", partial" } else { "" }
                ),
            )
        }
        Command::Perturb { corpus, n_q, mask_rate } => {
            let cfg = g.config()?;
            let providers = build_providers(cfg.as_ref().map_or(&ProvidersConfig::all_synthetic(), |c| &c.providers))?;
            let filler = providers
                .filler
                .clone()
                .ok_or_else(|| Error::Capability("perturb needs a mask-fill provider".into()))?;
            let mut spec = TransformSpec::new(crate::transforms::TransformKind::DetectGpt).with_perturbations(n_q);
            spec.mask_rate = mask_rate;
            spec.validate()?;
            spec.seed = g.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let records = load_corpus(&corpus)?;
            let perturbed = cmd_perturb(&records, &spec, filler.as_ref())?;
            let mut lines = String::new();
            for p in &perturbed {
                lines.push_str(&serde_json::to_string(p)?);
                lines.push('\n');
            }
            let out = g.out_dir(cfg.as_ref()).join("perturbations.jsonl");
            write_atomic(&out, lines.as_bytes())?;
            say(stdout, &format!("{} ({} perturbations)\n", out.display(), perturbed.len()))
        }
    }
}

/// Machine-readable error summary printed to stderr on failure.
pub fn error_summary(e: &Error) -> String {
    serde_json::json!({
        "error": e.to_string(),
        "exit_code": e.exit_code(),
    })
    .to_string()
}
